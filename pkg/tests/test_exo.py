import numpy as np
import pytest

from segcast.config import ConfigError
from segcast.exo import ExoBank
from segcast.experts import SegmentHead, segment_loss
from segcast.rng import Xorshift
from segcast.tensor import Parameters, Tensor


def test_zero_count_is_identity():
    params = Parameters()
    bank = ExoBank(segments=2, count=0, dim=4, params=params, rng=Xorshift(0))
    h = Tensor(np.random.default_rng(0).normal(size=(3, 4, 5)))
    assert bank.augment(h, 0) is h
    assert len(params) == 0


def test_token_count_and_flattened_width():
    params = Parameters()
    bank = ExoBank(segments=1, count=2, dim=8, params=params, rng=Xorshift(1))
    h = Tensor(np.random.default_rng(1).normal(size=(6, 8, 8)))
    out = bank.augment(h, 0)
    assert out.shape == (6, 8, 10)            # P=8 plus 2 appended tokens
    assert out.reshape(6, 80).shape == (6, 80)  # d = 10 * D


def test_appended_tokens_identical_across_instances():
    params = Parameters()
    bank = ExoBank(segments=1, count=3, dim=4, params=params, rng=Xorshift(2))
    h = Tensor(np.random.default_rng(2).normal(size=(5, 4, 2)))
    out = bank.augment(h, 0).data
    appended = out[:, :, 2:]
    for n in range(1, 5):
        np.testing.assert_array_equal(appended[n], appended[0])
    np.testing.assert_array_equal(appended[0], params["exo.seg0"].data.T)


def test_missing_segment_bank_rejected():
    params = Parameters()
    bank = ExoBank(segments=2, count=1, dim=4, params=params, rng=Xorshift(3))
    h = Tensor(np.zeros((1, 4, 2)))
    with pytest.raises(ConfigError):
        bank.augment(h, 2)


def test_bank_receives_gradient_end_to_end():
    params = Parameters()
    rng = Xorshift(4)
    bank = ExoBank(segments=1, count=2, dim=4, params=params, rng=rng)
    head = SegmentHead(0, in_dim=4 * (3 + 2), seg_len=6, n_experts=2, top_k=1,
                       params=params, rng=rng)
    h = Tensor(np.random.default_rng(3).normal(size=(4, 4, 3)))
    target = Tensor(np.random.default_rng(4).normal(size=(4, 6)))

    z = bank.augment(h, 0).reshape(4, 20)
    loss = segment_loss(head.predict(z, head.route(z)), target)
    loss.backward()
    g = params["exo.seg0"].grad
    assert g is not None and np.any(g != 0)


def test_zero_bank_with_zero_columns_matches_no_exo_model():
    # freezing the bank at zero and zeroing every weight column that touches
    # the appended positions reproduces the model without conditioning tokens
    n, d_hidden, p, n_exo, seg = 3, 2, 2, 2, 4
    base = Parameters()
    rng = Xorshift(5)
    head_plain = SegmentHead(0, in_dim=d_hidden * p, seg_len=seg, n_experts=2,
                             top_k=1, params=base, rng=rng, prefix="plain")

    aug = Parameters()
    bank = ExoBank(segments=1, count=n_exo, dim=d_hidden, params=aug, rng=Xorshift(6))
    head_aug = SegmentHead(0, in_dim=d_hidden * (p + n_exo), seg_len=seg,
                           n_experts=2, top_k=1, params=aug, rng=Xorshift(7), prefix="aug")

    aug["exo.seg0"].data[:] = 0.0
    # flattened (D, P + n_exo) row-major: position q of hidden row r sits at
    # r * (p + n_exo) + q; real tokens are q < p
    keep = [r * (p + n_exo) + q for r in range(d_hidden) for q in range(p)]
    for name_aug, name_plain in (("aug0.gate.w", "plain0.gate.w"),
                                 ("aug0.expert0.w", "plain0.expert0.w"),
                                 ("aug0.expert1.w", "plain0.expert1.w"),
                                 ("aug0.shared.w", "plain0.shared.w"),
                                 ("aug0.shared.g", "plain0.shared.g")):
        aug[name_aug].data[:] = 0.0
        aug[name_aug].data[keep] = base[name_plain].data
    for e in range(2):
        aug[f"aug0.expert{e}.b"].data[:] = base[f"plain0.expert{e}.b"].data

    h = Tensor(np.random.default_rng(5).normal(size=(n, d_hidden, p)))
    z_plain = h.reshape(n, d_hidden * p)
    z_aug = bank.augment(h, 0).reshape(n, d_hidden * (p + n_exo))

    pred_plain = head_plain.predict(z_plain, head_plain.route(z_plain))
    pred_aug = head_aug.predict(z_aug, head_aug.route(z_aug))
    np.testing.assert_allclose(pred_aug.data, pred_plain.data, atol=1e-14)
