import numpy as np

from cse import corpus, engine


def test_generate_image_deterministic():
    a, box_a = corpus.generate_image(3, 5, unsafe=True)
    b, box_b = corpus.generate_image(3, 5, unsafe=True)
    assert a.tobytes() == b.tobytes() and box_a == box_b


def test_indices_are_independent_streams():
    a, _ = corpus.generate_image(3, 5, unsafe=False)
    b, _ = corpus.generate_image(3, 6, unsafe=False)
    c, _ = corpus.generate_image(4, 5, unsafe=False)
    assert a.tobytes() != b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_safe_image_has_no_patch_and_muted_texture():
    img, box = corpus.generate_image(0, 0, unsafe=False)
    assert box is None
    assert img.shape == (64, 64, 3) and img.dtype == np.float32
    assert img.min() >= 0.0 and img.max() <= 1.0
    # texture stays away from full saturation (0.25..0.75 plus small noise)
    assert img.min() > 0.1 and img.max() < 0.9


def test_unsafe_patch_box_and_area():
    for idx in range(10):
        img, box = corpus.generate_image(0, idx, unsafe=True)
        row, col, size = box
        frac = size * size / (64 * 64)
        assert 0.08 <= frac <= 0.27  # 10-25% target, rounded to integer sizes
        assert 0 <= row <= 64 - size and 0 <= col <= 64 - size
        mask = corpus.patch_mask(box)
        assert mask.sum() == size * size
        # the patch color is saturated: its brightest channel far exceeds its dimmest
        mean_color = img[mask].mean(axis=0)
        assert mean_color.max() - mean_color.min() > 0.5


def test_unsafe_shares_background_with_safe_twin():
    safe, _ = corpus.generate_image(9, 2, unsafe=False)
    unsafe, box = corpus.generate_image(9, 2, unsafe=True)
    outside = ~corpus.patch_mask(box)
    np.testing.assert_array_equal(unsafe[outside], safe[outside])


def test_classifier_agrees_with_labels(model):
    wrong = 0
    for idx in range(10):
        for unsafe in (False, True):
            img, _ = corpus.generate_image(42, idx, unsafe)
            x = np.transpose(img, (2, 0, 1))
            pred = int(np.argmax(engine.forward(model, x).logits))
            wrong += pred != int(unsafe)
    assert wrong == 0


def test_generate_corpus_layout(tmp_path):
    manifest = corpus.generate_corpus(tmp_path / "c", count=6, seed=1, unsafe_fraction=0.5)
    files = sorted(p.name for p in (tmp_path / "c").glob("*.png"))
    assert files == ["0000_unsafe.png", "0001_unsafe.png", "0002_unsafe.png",
                     "0003_safe.png", "0004_safe.png", "0005_safe.png"]
    assert [e["label"] for e in manifest["entries"]] == [1, 1, 1, 0, 0, 0]
    assert all(e["patch"] is not None for e in manifest["entries"][:3])
    assert all(e["patch"] is None for e in manifest["entries"][3:])
    loaded = corpus.load_manifest(tmp_path / "c")
    assert loaded == manifest


def test_generate_corpus_deterministic(tmp_path):
    corpus.generate_corpus(tmp_path / "a", count=4, seed=5)
    corpus.generate_corpus(tmp_path / "b", count=4, seed=5)
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_written_png_matches_generated_array(tmp_path):
    corpus.generate_corpus(tmp_path / "c", count=2, seed=8, unsafe_fraction=1.0)
    from cse.image_io import load_image
    img, _ = corpus.generate_image(8, 0, unsafe=True)
    back = load_image(tmp_path / "c" / "0000_unsafe.png")
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-7
