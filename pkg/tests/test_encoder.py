import numpy as np
import pytest

from segcast.config import ConfigError
from segcast.encoder import Encoder, gelu, layer_norm
from segcast.rng import Xorshift
from segcast.tensor import Parameters, Tensor, check_gradients


def make_encoder(dim=8, layers=1, heads=2, seed=0):
    params = Parameters()
    enc = Encoder(dim, layers, heads, params, Xorshift(seed))
    return enc, params


def test_heads_must_divide_dim():
    with pytest.raises(ConfigError):
        make_encoder(dim=8, heads=3)


def test_zero_weights_give_identity():
    enc, params = make_encoder(dim=8, layers=2, heads=4)
    for name, t in params.items():
        if ".ln" not in name:
            t.data[:] = 0.0
    x = np.random.default_rng(0).normal(size=(2, 3, 5, 8))
    out = enc.encode(Tensor(x))
    np.testing.assert_array_equal(out.data, x.transpose(0, 1, 3, 2))


def _np_ln(v, g, b):
    mu = v.mean(-1, keepdims=True)
    var = ((v - mu) ** 2).mean(-1, keepdims=True)
    return (v - mu) * (var + 1e-5) ** -0.5 * g + b


def _np_gelu(v):
    return 0.5 * v * (1 + np.tanh(0.7978845608028654 * (v + 0.044715 * v ** 3)))


def test_single_token_attention_is_value_path():
    # with one token the softmax over keys is exactly 1, so attention output
    # equals the value projection followed by the output projection
    enc, _ = make_encoder(dim=4, heads=2, seed=3)
    x = np.random.default_rng(1).normal(size=(1, 1, 1, 4))
    sink = []
    out = enc.encode(Tensor(x), attn_sink=sink)

    w = {k: v.data for k, v in enc.layers[0].items()}
    h = _np_ln(x.reshape(1, 1, 4), w["ln1_g"], w["ln1_b"])
    v = h @ w["wv"] + w["wv_b"]
    x1 = x.reshape(1, 1, 4) + (v @ w["wo"] + w["wo_b"])
    h2 = _np_ln(x1, w["ln2_g"], w["ln2_b"])
    ref = x1 + (_np_gelu(h2 @ w["w1"] + w["b1"]) @ w["w2"] + w["b2"])
    np.testing.assert_allclose(out.data.reshape(1, 1, 4), ref, atol=1e-12)
    np.testing.assert_array_equal(sink[0].data, np.ones((1, 2, 1, 1)))


def test_channel_permutation_equivariance():
    enc, _ = make_encoder(dim=8, heads=2, seed=5)
    x = np.random.default_rng(2).normal(size=(2, 4, 3, 8))
    perm = np.array([2, 0, 3, 1])
    out = enc.encode(Tensor(x)).data
    out_perm = enc.encode(Tensor(x[:, perm])).data
    np.testing.assert_array_equal(out_perm, out[:, perm])


def test_attention_rows_sum_to_one():
    enc, _ = make_encoder(dim=8, heads=4, seed=7)
    x = np.random.default_rng(3).normal(size=(2, 2, 6, 8))
    sink = []
    enc.encode(Tensor(x), attn_sink=sink)
    for attn in sink:
        np.testing.assert_allclose(attn.data.sum(axis=-1), 1.0, rtol=0, atol=1e-12)


def test_output_shape_and_finite():
    enc, _ = make_encoder(dim=16, layers=2, heads=8, seed=9)
    x = np.random.default_rng(4).normal(size=(3, 2, 4, 16))
    out = enc.encode(Tensor(x))
    assert out.shape == (3, 2, 16, 4)
    assert np.all(np.isfinite(out.data))


def test_gradient_check_two_tokens():
    enc, params = make_encoder(dim=8, heads=2, seed=11)
    x = np.random.default_rng(5).normal(size=(1, 1, 2, 8))
    target = np.random.default_rng(6).normal(size=(1, 1, 8, 2))

    def f():
        diff = enc.encode(Tensor(x)) - Tensor(target)
        return (diff * diff).mean()

    report = check_gradients(f, params, eps=1e-5)
    assert report.max_rel_err < 1e-5


def test_gelu_matches_reference():
    x = Tensor(np.linspace(-3, 3, 11))
    ref = 0.5 * x.data * (1 + np.tanh(0.7978845608028654 * (x.data + 0.044715 * x.data ** 3)))
    np.testing.assert_allclose(gelu(x).data, ref, atol=1e-15)


def test_layer_norm_zero_mean_unit_var():
    x = Tensor(np.random.default_rng(8).normal(3.0, 2.0, size=(4, 6)))
    y = layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)))
    np.testing.assert_allclose(y.data.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.data.std(axis=-1), 1.0, atol=1e-3)
