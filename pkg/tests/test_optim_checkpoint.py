import numpy as np
import pytest

from gsl.checkpoint import load_checkpoint, save_checkpoint
from gsl.errors import CheckpointError, NonFiniteGradientError
from gsl.nets import MlpSpec, ParamVector, init_params
from gsl.optim import AdamState, adam_step


def test_adam_matches_scalar_recurrence():
    # textbook recurrence tracked by hand for a 1-element parameter
    pv = ParamVector(np.array([0.5]), [("x", 1, 1)])
    st = AdamState(1)
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    m = v = 0.0
    x = 0.5
    rng = np.random.default_rng(0)
    for t in range(1, 20):
        g = float(rng.standard_normal())
        adam_step(pv, np.array([g]), st, lr, b1, b2, eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert abs(pv.values[0] - x) < 1e-12
    assert st.step == 19


def test_adam_first_step_size_is_lr():
    # bias correction makes the very first update lr * sign(g)
    pv = ParamVector(np.array([1.0, -1.0]), [("x", 1, 2)])
    adam_step(pv, np.array([0.3, -0.2]), AdamState(2), lr=0.05)
    assert np.allclose(pv.values, [1.0 - 0.05, -1.0 + 0.05], atol=1e-8)


def test_adam_rejects_non_finite_gradient_without_mutation():
    pv = ParamVector(np.array([1.0, 2.0]), [("x", 1, 2)])
    st = AdamState(2)
    with pytest.raises(NonFiniteGradientError):
        adam_step(pv, np.array([np.nan, 0.0]), st, lr=0.1)
    assert np.array_equal(pv.values, [1.0, 2.0])
    assert st.step == 0 and np.all(st.m == 0.0)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    spec = MlpSpec(in_dim=7, out_dim=3, hidden=(32, 16), head="gaussian")
    pv = init_params(spec, np.random.default_rng(1))
    st = AdamState(pv.size)
    adam_step(pv, np.random.default_rng(2).standard_normal(pv.size), st, lr=1e-3)
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, pv, st, meta={"epoch": 12, "label": "generalist"})
    pv2, st2, meta = load_checkpoint(path)
    assert np.array_equal(pv.values, pv2.values)
    assert pv.manifest == pv2.manifest
    assert np.array_equal(st.m, st2.m) and np.array_equal(st.v, st2.v)
    assert st2.step == 1
    assert meta == {"epoch": 12, "label": "generalist"}


def test_checkpoint_without_optimizer_state(tmp_path):
    pv = ParamVector(np.arange(4, dtype=np.float64), [("x", 2, 2)])
    save_checkpoint(tmp_path / "p.ckpt", pv)
    pv2, st2, meta = load_checkpoint(tmp_path / "p.ckpt")
    assert st2 is None and meta == {}
    assert np.array_equal(pv2.values, pv.values)


def test_checkpoint_detects_corruption(tmp_path):
    pv = ParamVector(np.ones(4), [("x", 2, 2)])
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, pv)
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_wrong_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncated_file(tmp_path):
    pv = ParamVector(np.ones(9), [("x", 3, 3)])
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, pv)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
