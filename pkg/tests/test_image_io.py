import numpy as np
import pytest
from PIL import Image

from cse import image_io
from cse.errors import CseError


def rand_image(seed, h=64, w=64):
    return np.random.default_rng(seed).random((h, w, 3)).astype(np.float32)


def test_png_round_trip_within_quantization(tmp_path):
    img = rand_image(0)
    path = tmp_path / "x.png"
    image_io.save_image(img, path)
    back = image_io.load_image(path)
    assert back.shape == img.shape and back.dtype == np.float32
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-7


def test_quantized_values_round_trip_exactly(tmp_path):
    # values already on the 8-bit lattice survive a save/load bit-exactly
    img = (np.arange(64 * 64 * 3).reshape(64, 64, 3) % 256 / 255.0).astype(np.float32)
    for name in ("x.png", "x.ppm"):
        path = tmp_path / name
        image_io.save_image(img, path)
        back = image_io.load_image(path)
        np.testing.assert_allclose(back, img, atol=1e-7)


def test_known_quantization_value(tmp_path):
    img = np.full((8, 8, 3), 128 / 255.0, np.float32)
    path = tmp_path / "gray.png"
    image_io.save_image(img, path)
    back = image_io.load_image(path)
    np.testing.assert_allclose(back, 128 / 255.0, atol=1e-7)
    assert abs(back[0, 0, 0] - 0.50196) < 1e-4


def test_save_rejects_bad_values(tmp_path):
    with pytest.raises(CseError):
        image_io.save_image(np.full((8, 8, 3), 1.5, np.float32), tmp_path / "x.png")
    with pytest.raises(CseError):
        image_io.save_image(np.zeros((8, 8), np.float32), tmp_path / "x.png")


def test_load_rejects_unsupported_format(tmp_path):
    path = tmp_path / "x.jpg"
    Image.fromarray(np.zeros((16, 16, 3), np.uint8)).save(path, format="JPEG")
    with pytest.raises(CseError, match="unsupported format"):
        image_io.load_image(path)


def test_load_rejects_tiny_and_garbage(tmp_path):
    tiny = tmp_path / "tiny.png"
    Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tiny)
    with pytest.raises(CseError, match="smaller"):
        image_io.load_image(tiny)
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(CseError, match="cannot decode"):
        image_io.load_image(bad)


def test_resize_to_model():
    img = rand_image(1, 128, 96)
    out = image_io.resize_to_model(img)
    assert out.shape == (64, 64, 3) and out.dtype == np.float32
    assert out.min() >= 0.0 and out.max() <= 1.0
    # 64x64 input passes through untouched
    img64 = rand_image(2)
    assert np.array_equal(image_io.resize_to_model(img64), img64)


def test_mask_projection_is_superset(tmp_path):
    # every original-resolution pixel whose model-resolution cell is masked
    # must itself be masked after projection
    mask = np.zeros((64, 64), bool)
    mask[10:20, 30:40] = True
    up = image_io.project_mask_to_original(mask, (128, 128, 3))
    assert up.shape == (128, 128)
    cells = mask.repeat(2, axis=0).repeat(2, axis=1)
    assert np.all(up[cells])
    # projection stays local: nothing masked far from the source block
    assert not up[:16].any() and not up[:, :56].any()


def test_mask_projection_identity_at_model_size():
    mask = np.zeros((64, 64), bool)
    mask[5, 5] = True
    assert image_io.project_mask_to_original(mask, (64, 64, 3)) is mask


def test_labelmap_round_trip(tmp_path):
    labels = (np.arange(64 * 64).reshape(64, 64) % 300).astype(np.int32)
    path = tmp_path / "labels.png"
    meta = {"seed": 7, "method": "grid"}
    image_io.save_labelmap(labels, path, meta)
    back, meta_back = image_io.load_labelmap(path)
    assert np.array_equal(back, labels)
    assert meta_back["K"] == 300 and meta_back["seed"] == 7 and meta_back["method"] == "grid"


def test_labelmap_rejects_too_many_regions(tmp_path):
    labels = np.full((8, 8), 2**16, np.int32)
    with pytest.raises(CseError):
        image_io.save_labelmap(labels, tmp_path / "x.png", {})


def test_save_attribution(tmp_path):
    values = np.linspace(0, 1, 64 * 64, dtype=np.float32).reshape(64, 64)
    png, js = tmp_path / "a.png", tmp_path / "a.json"
    image_io.save_attribution(values, png, js)
    img = np.asarray(Image.open(png))
    assert img.shape == (64, 64) and img.max() == 255 and img.min() == 0
    import json
    raw = json.loads(js.read_text())
    assert raw["shape"] == [64, 64]
    np.testing.assert_allclose(np.array(raw["values"]).reshape(64, 64), values, atol=1e-7)
