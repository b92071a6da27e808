import numpy as np
import pytest

from cse import attribution as attr
from cse import corpus, engine
from cse.errors import CseError, ShapeMismatchError


def rand_image(seed):
    return np.random.default_rng(seed).random((64, 64, 3)).astype(np.float32)


def localization_ratio(values, mask):
    return values[mask].mean() / max(values[~mask].mean(), 1e-12)


# ---- psi postprocessing ----

def test_psi_abs_and_minmax():
    out = attr.psi_postprocess(np.array([[-2.0, 0.0, 2.0]]), out_shape=(1, 3))
    np.testing.assert_allclose(out, [[1.0, 0.0, 1.0]])


def test_psi_constant_map_becomes_zeros():
    out = attr.psi_postprocess(np.full((8, 8), 3.7))
    assert out.shape == (64, 64)
    assert np.all(out == 0.0)


def test_psi_sums_channel_axis():
    raw = np.zeros((2, 4, 4))
    raw[0, 1, 2] = 3.0
    raw[1, 1, 2] = -1.0  # abs first, so magnitudes add
    raw[0, 0, 0] = 2.0
    out = attr.psi_postprocess(raw, out_shape=(4, 4))
    assert out[1, 2] == 1.0
    np.testing.assert_allclose(out[0, 0], 0.5)


def test_psi_upsample_preserves_peak_location():
    raw = np.zeros((4, 4))
    raw[1, 2] = 1.0
    out = attr.psi_postprocess(raw)
    r, c = np.unravel_index(np.argmax(out), out.shape)
    # the 4x4 cell (1, 2) maps onto rows 16..31, cols 32..47
    assert 16 <= r < 32 and 32 <= c < 48
    assert out.max() == 1.0 and out.min() == 0.0


# ---- fullgrad ----

def test_fullgrad_reduces_to_input_term_without_biases():
    m = engine.random_model(2)
    for layer in m.biased_layers():
        layer.bias = np.zeros_like(layer.bias)
    img = rand_image(2)
    got = attr.fullgrad(m, img)
    x = np.transpose(img, (2, 0, 1))
    fwd = engine.forward(m, x)
    bwd = engine.backward(m, x, int(np.argmax(fwd.logits)), fwd)
    expected = attr.psi_postprocess(bwd.input_grad * x)
    np.testing.assert_allclose(got.values, expected, atol=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_fullgrad_completeness_identity(seed, model):
    x = np.random.default_rng(seed).random((3, 64, 64)).astype(np.float32)
    logit, recon = attr.completeness_gap(model, x)
    assert abs(logit - recon) <= 1e-3 * abs(logit) + 1e-5


def test_fullgrad_completeness_on_random_models():
    x = np.random.default_rng(0).random((3, 64, 64)).astype(np.float32)
    for seed in range(3):
        logit, recon = attr.completeness_gap(engine.random_model(seed), x, target=1)
        assert abs(logit - recon) <= 1e-3 * abs(logit) + 1e-5


def test_fullgrad_range_and_shape(model):
    a = attr.fullgrad(model, rand_image(5))
    assert a.values.shape == (64, 64)
    assert a.values.dtype == np.float32
    assert a.values.min() >= 0.0 and a.values.max() <= 1.0
    assert a.method == "fullgrad"


def test_fullgrad_localizes_planted_patch(model):
    ratios = []
    for idx in range(5):
        img, box = corpus.generate_image(1234, idx, unsafe=True)
        mask = corpus.patch_mask(box)
        a = attr.fullgrad(model, img)
        assert a.target_class == engine.UNSAFE_CLASS
        ratios.append(localization_ratio(a.values, mask))
    assert min(ratios) >= 2.0


def test_fullgrad_deterministic(model):
    img = rand_image(6)
    a = attr.fullgrad(model, img).values
    b = attr.fullgrad(model, img).values
    assert a.tobytes() == b.tobytes()


def test_fullgrad_rejects_chw_input(model):
    with pytest.raises(ShapeMismatchError):
        attr.fullgrad(model, np.zeros((3, 64, 64), np.float32))


# ---- gradcam ----

def test_gradcam_localizes_planted_patch(model):
    ratios = []
    for idx in range(5):
        img, box = corpus.generate_image(1234, idx, unsafe=True)
        a = attr.gradcam(model, img)
        ratios.append(localization_ratio(a.values, corpus.patch_mask(box)))
    assert min(ratios) >= 1.5


def test_gradcam_single_channel_uniform_example():
    # one channel with activation [[1,2],[3,4]] and uniform positive gradient:
    # cam equals the activation itself, min-maxed to [[0,1/3],[2/3,1]]
    acts = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    w = np.array([[[0.5, 0.5], [0.5, 0.5]]]).mean(axis=(1, 2))
    cam = np.maximum((w[:, None, None] * acts).sum(axis=0), 0.0)
    out = attr.psi_postprocess(cam, out_shape=(2, 2))
    np.testing.assert_allclose(out, [[0.0, 1 / 3], [2 / 3, 1.0]], atol=1e-6)


def test_gradcam_zero_activations_give_zero_map():
    m = engine.random_model(4)
    last_conv = m.conv_layer_indices()[-1]
    # force the last conv's output strongly negative so its ReLU output is zero
    m.layers[last_conv].bias = np.full_like(m.layers[last_conv].bias, -1e3)
    a = attr.gradcam(m, rand_image(4))
    assert np.all(a.values == 0.0)


def test_gradcam_rejects_non_conv_layer(model):
    with pytest.raises(CseError):
        attr.gradcam(model, rand_image(0), layer_index=1)


def test_gradcam_accepts_earlier_conv_layer(model):
    img = rand_image(7)
    first_conv = model.conv_layer_indices()[0]
    a = attr.gradcam(model, img, layer_index=first_conv)
    assert a.values.shape == (64, 64)
    assert 0.0 <= a.values.min() and a.values.max() <= 1.0


def test_gradcam_deterministic(model):
    img = rand_image(8)
    assert attr.gradcam(model, img).values.tobytes() == \
        attr.gradcam(model, img).values.tobytes()


# ---- diagnostics ----

def test_map_entropy_uniform_is_log_n():
    a = attr.AttributionMap(values=np.full((8, 8), 1.0, np.float32),
                            target_class=1, method="fullgrad")
    np.testing.assert_allclose(attr.map_entropy(a), np.log(64), rtol=1e-6)


def test_map_entropy_point_mass_is_zero():
    v = np.zeros((8, 8), np.float32)
    v[3, 3] = 1.0
    a = attr.AttributionMap(values=v, target_class=1, method="fullgrad")
    assert attr.map_entropy(a) == 0.0


def test_methods_registry():
    assert set(attr.METHODS) == {"fullgrad", "gradcam"}
