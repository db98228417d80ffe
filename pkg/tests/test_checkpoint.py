import numpy as np
import pytest

from segcast.checkpoint import load_params, save_params
from segcast.tensor import Parameters


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    params = Parameters()
    params.add("a.weight", rng.normal(size=(3, 4)) * 1e-7)
    params.add("a.bias", rng.normal(size=(4,)) * 1e3)
    params.add("scalar", np.array(0.1))
    params.add("awkward", np.array([np.pi, 1 / 3, 1e-300, -1e300]))

    path = tmp_path / "ck.txt"
    save_params(params, path)
    state = load_params(path)

    assert set(state) == set(params.names())
    for name, t in params.items():
        assert state[name].shape == t.shape
        assert np.array_equal(state[name], t.data), name  # bit-exact


def test_double_roundtrip_identical_bytes(tmp_path):
    params = Parameters()
    params.add("w", np.linspace(-1, 1, 7) / 3)
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    save_params(params, p1)
    reloaded = Parameters()
    reloaded.add("w", load_params(p1)["w"])
    save_params(reloaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_state_shape_mismatch(tmp_path):
    params = Parameters()
    params.add("w", np.zeros((2, 2)))
    path = tmp_path / "ck.txt"
    save_params(params, path)

    other = Parameters()
    other.add("w", np.zeros((4,)))
    with pytest.raises(ValueError):
        other.load_state(load_params(path))


def test_rejects_non_checkpoint(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("hello world\n")
    with pytest.raises(ValueError):
        load_params(path)
