import numpy as np
import pytest

from segcast.refine import ScadRefiner, ScrnRefiner
from segcast.rng import Xorshift
from segcast.tensor import Parameters, Tensor, check_gradients


def make_scrn(segments=3, seg_len=2, alpha=0.01, seed=0):
    params = Parameters()
    refiner = ScrnRefiner(segments, seg_len, alpha, params, Xorshift(seed))
    return refiner, params


def seg_tensors(values):
    return [Tensor(np.asarray(v, dtype=float)) for v in values]


# --- residual-noise refiner ---------------------------------------------------

def test_alpha_zero_is_identity():
    refiner, params = make_scrn(alpha=0.0)
    segs = [Tensor(np.random.default_rng(0).normal(size=(2, 3, 2))) for _ in range(3)]
    out = refiner.refine(segs)
    for a, b in zip(out, segs):
        np.testing.assert_array_equal(a.data, b.data)


def test_single_segment_untouched():
    refiner, _ = make_scrn(segments=1)
    seg = Tensor(np.random.default_rng(1).normal(size=(2, 1, 2)))
    out = refiner.refine([seg])
    assert out[0] is seg


def test_hand_case():
    # y1=[1,1], e2=[0.5,-0.5], alpha=0.1, y2=[2,2] -> [2.05, 1.95]
    refiner, params = make_scrn(segments=2)
    params["scrn.e2"].data[:] = [0.5, -0.5]
    params["scrn.alpha"].data[()] = 0.1
    segs = seg_tensors([[[[1.0, 1.0]]], [[[2.0, 2.0]]]])
    out = refiner.refine(segs)
    np.testing.assert_array_equal(out[0].data, [[[1.0, 1.0]]])
    np.testing.assert_allclose(out[1].data, [[[2.05, 1.95]]], rtol=0, atol=1e-15)


def test_uses_raw_predecessor_not_refined():
    # segment 3's noise comes from raw segment 2, not its refined value
    refiner, params = make_scrn(segments=3, seg_len=1)
    params["scrn.e2"].data[:] = 1.0
    params["scrn.e3"].data[:] = 1.0
    params["scrn.alpha"].data[()] = 1.0
    segs = seg_tensors([[[[1.0]]], [[[10.0]]], [[[100.0]]]])
    out = refiner.refine(segs)
    assert out[1].item() == pytest.approx(11.0)    # 10 + 1*1
    assert out[2].item() == pytest.approx(110.0)   # 100 + 10 (raw), not 100 + 11


def test_causality_perturbation_touches_s_and_s_plus_1():
    refiner, params = make_scrn(segments=4, seg_len=3, alpha=0.05, seed=2)
    rng = np.random.default_rng(2)
    base = [rng.normal(size=(2, 2, 3)) for _ in range(4)]
    out_base = [t.data.copy() for t in refiner.refine(seg_tensors(base))]

    s = 1  # perturb the second segment (index 1)
    bumped = [v.copy() for v in base]
    bumped[s][0, 0, 0] += 1.0
    out_bump = [t.data.copy() for t in refiner.refine(seg_tensors(bumped))]

    assert np.array_equal(out_bump[0], out_base[0])
    assert not np.array_equal(out_bump[1], out_base[1])
    assert not np.array_equal(out_bump[2], out_base[2])
    assert np.array_equal(out_bump[3], out_base[3])


def test_linearity_in_segments():
    refiner, _ = make_scrn(segments=3, seg_len=4, alpha=0.3, seed=3)
    rng = np.random.default_rng(3)
    base = [rng.normal(size=(1, 2, 4)) for _ in range(3)]
    out1 = refiner.refine(seg_tensors(base))
    out2 = refiner.refine(seg_tensors([2.5 * v for v in base]))
    for a, b in zip(out1, out2):
        np.testing.assert_allclose(b.data, 2.5 * a.data, rtol=1e-12)


def test_shape_mismatch_rejected():
    refiner, _ = make_scrn(segments=2)
    with pytest.raises(ValueError):
        refiner.refine(seg_tensors([[[[1.0, 2.0]]], [[[1.0]]]]))


# --- l2 penalty ------------------------------------------------------------------

def test_reg_zero_when_embeddings_zero():
    refiner, params = make_scrn(segments=3)
    for s in (2, 3):
        params[f"scrn.e{s}"].data[:] = 0.0
    assert refiner.regularizer(1e-4).item() == 0.0


def test_reg_hand_case():
    # one embedding [3,4], 2 entries total: (9+16)/2 = 12.5
    refiner, params = make_scrn(segments=2)
    params["scrn.e2"].data[:] = [3.0, 4.0]
    assert refiner.regularizer(1.0).item() == pytest.approx(12.5, abs=1e-15)
    assert refiner.regularizer(1e-4).item() == pytest.approx(12.5e-4, abs=1e-18)


def test_reg_zero_weight():
    refiner, params = make_scrn(segments=2)
    params["scrn.e2"].data[:] = [3.0, 4.0]
    assert refiner.regularizer(0.0).item() == 0.0


def test_reg_nonnegative_and_zero_iff_zero():
    refiner, params = make_scrn(segments=3, seed=4)
    assert refiner.regularizer(1.0).item() > 0.0


def test_scrn_gradients():
    refiner, params = make_scrn(segments=3, seg_len=2, alpha=0.2, seed=5)
    rng = np.random.default_rng(5)
    vals = [rng.normal(size=(1, 2, 2)) for _ in range(3)]
    target = rng.normal(size=(1, 2, 6))

    def f():
        out = refiner.refine(seg_tensors(vals))
        from segcast.tensor import concat
        pred = concat(out, axis=2)
        diff = pred - Tensor(target)
        return (diff * diff).mean() + refiner.regularizer(1e-2)

    report = check_gradients(f, params, eps=1e-6)
    assert report.max_rel_err < 1e-6


# --- cross-attention refiner ---------------------------------------------------

def make_scad(segments=3, seg_len=4, width=8, heads=2, seed=0):
    params = Parameters()
    refiner = ScadRefiner(segments, seg_len, width, heads, params, Xorshift(seed))
    return refiner, params


def test_scad_zero_output_projection_is_identity():
    refiner, params = make_scad()
    for s in (2, 3):
        params[f"scad.s{s}.wo"].data[:] = 0.0
    segs = [Tensor(np.random.default_rng(6).normal(size=(2, 1, 4))) for _ in range(3)]
    out = refiner.refine(segs)
    for a, b in zip(out, segs):
        np.testing.assert_array_equal(a.data, b.data)


def test_scad_single_segment_unchanged():
    refiner, _ = make_scad(segments=1)
    seg = Tensor(np.random.default_rng(7).normal(size=(1, 1, 4)))
    assert refiner.refine([seg])[0] is seg


def test_scad_causality():
    refiner, _ = make_scad(segments=4, seed=8)
    rng = np.random.default_rng(8)
    base = [rng.normal(size=(1, 2, 4)) for _ in range(4)]
    out_base = [t.data.copy() for t in refiner.refine(seg_tensors(base))]

    s = 2
    bumped = [v.copy() for v in base]
    bumped[s][0, 1, 3] += 0.7
    out_bump = [t.data.copy() for t in refiner.refine(seg_tensors(bumped))]

    for i in range(s):
        assert np.array_equal(out_bump[i], out_base[i])
    assert not np.array_equal(out_bump[s], out_base[s])
    assert not np.array_equal(out_bump[s + 1], out_base[s + 1])


def test_scad_width_heads_divisibility():
    with pytest.raises(ValueError):
        make_scad(width=10, heads=4)


def test_scad_gradients():
    refiner, params = make_scad(segments=2, seg_len=3, width=4, heads=2, seed=9)
    rng = np.random.default_rng(9)
    vals = [rng.normal(size=(1, 1, 3)) for _ in range(2)]

    def f():
        out = refiner.refine(seg_tensors(vals))
        from segcast.tensor import concat
        pred = concat(out, axis=2)
        return (pred * pred).mean()

    report = check_gradients(f, params, eps=1e-6)
    assert report.max_rel_err < 1e-6
