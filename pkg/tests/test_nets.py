import numpy as np
import pytest

import gsl.autodiff as ad
from gsl.errors import ContractError
from gsl.nets import (
    HeadOut, MlpSpec, ParamVector, head_density, head_entropy, head_log_prob,
    init_params, mlp_forward, mode_actions, orthogonal, policy_head_eval,
    sample_actions,
)

from oracles import fd_grad, assert_grads_match


def test_param_vector_views_alias_storage():
    pv = ParamVector(np.zeros(6), [("a", 2, 2), ("b", 1, 2)])
    pv.block("a")[0, 1] = 5.0
    assert pv.values[1] == 5.0
    pv.values[4] = -1.0
    assert pv.block("b")[0, 0] == -1.0


def test_param_vector_rejects_bad_manifest():
    with pytest.raises(ContractError):
        ParamVector(np.zeros(5), [("a", 2, 2)])  # length mismatch
    with pytest.raises(ContractError):
        ParamVector(np.zeros(8), [("a", 2, 2), ("a", 2, 2)])  # duplicate name
    with pytest.raises(ContractError):
        ParamVector(np.array([1.0, np.nan]), [("a", 1, 2)])


def test_mlp_spec_manifest_sizes():
    spec = MlpSpec(in_dim=5, out_dim=3, hidden=(256, 256), head="categorical")
    assert spec.num_params() == 5 * 256 + 256 + 256 * 256 + 256 + 256 * 3 + 3
    gspec = MlpSpec(in_dim=5, out_dim=2, hidden=(8,), head="gaussian")
    assert ("log_std", 1, 2) in gspec.manifest()


def test_orthogonal_init_is_orthogonal():
    rng = np.random.default_rng(0)
    for rows, cols in [(8, 4), (4, 8), (6, 6)]:
        q = orthogonal(rng, rows, cols, gain=1.0)
        small = min(rows, cols)
        prod = q.T @ q if rows >= cols else q @ q.T
        assert np.allclose(prod, np.eye(small), atol=1e-12)


def test_init_params_biases_zero_and_head_scaled():
    spec = MlpSpec(in_dim=4, out_dim=2, hidden=(16,), head="gaussian")
    pv = init_params(spec, np.random.default_rng(1))
    assert np.all(pv.block("h0_b") == 0.0)
    assert np.all(pv.block("out_b") == 0.0)
    # head weights two orders of magnitude smaller than trunk weights
    assert np.abs(pv.block("out_w")).max() < 0.1 * np.abs(pv.block("h0_w")).max()
    assert np.allclose(np.exp(pv.block("log_std")), 1.0)


def test_forward_shapes_and_input_validation():
    spec = MlpSpec(in_dim=3, out_dim=4, hidden=(8, 8), head="categorical")
    pv = init_params(spec, np.random.default_rng(2))
    out = mlp_forward(spec, pv, np.zeros((7, 3)))
    assert ad.val(out.out).shape == (7, 4)
    with pytest.raises(ContractError):
        mlp_forward(spec, pv, np.zeros((7, 5)))


def test_forward_matches_hand_rolled_numpy():
    spec = MlpSpec(in_dim=3, out_dim=2, hidden=(5,), head="scalar")
    pv = init_params(spec, np.random.default_rng(3))
    x = np.random.default_rng(4).standard_normal((6, 3))
    h = np.maximum(x @ pv.block("h0_w") + pv.block("h0_b"), 0.0)
    expect = h @ pv.block("out_w") + pv.block("out_b")
    assert np.array_equal(mlp_forward(spec, pv, x).out, expect)


def test_taped_forward_value_bitwise_equals_plain():
    spec = MlpSpec(in_dim=4, out_dim=3, hidden=(16, 16), head="categorical")
    pv = init_params(spec, np.random.default_rng(5))
    x = np.random.default_rng(6).standard_normal((9, 4))
    plain = mlp_forward(spec, pv, x).out
    tape = ad.GradTape(pv)
    taped = mlp_forward(spec, pv, x, tape=tape).out
    assert np.array_equal(plain, ad.val(taped))


def test_categorical_log_prob_matches_softmax():
    spec = MlpSpec(in_dim=2, out_dim=4, hidden=(6,), head="categorical")
    pv = init_params(spec, np.random.default_rng(7))
    x = np.random.default_rng(8).standard_normal((5, 2))
    head = mlp_forward(spec, pv, x)
    acts = np.array([0, 3, 1, 2, 0])
    lp = head_log_prob(head, acts)
    logits = head.out
    ref = np.log(np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True))
    assert np.allclose(lp, ref[np.arange(5), acts], atol=1e-12)
    # entropy against direct formula
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert np.allclose(head_entropy(head), -(p * np.log(p)).sum(axis=1), atol=1e-12)


def test_categorical_rejects_out_of_range_action():
    head = HeadOut("categorical", np.zeros((2, 3)))
    with pytest.raises(ContractError):
        head_log_prob(head, np.array([0, 3]))


def test_gaussian_log_prob_matches_closed_form():
    mean = np.array([[0.5, -1.0], [0.0, 2.0]])
    std = np.array([[0.3, 1.7]])
    head = HeadOut("gaussian", mean, std)
    a = np.array([[0.4, -1.5], [0.2, 2.0]])
    lp = head_log_prob(head, a)
    ref = (-0.5 * ((a - mean) / std) ** 2 - np.log(std) - 0.5 * np.log(2 * np.pi)).sum(axis=1)
    assert np.allclose(lp, ref, atol=1e-12)
    ent_ref = (np.log(std) + 0.5 * (1 + np.log(2 * np.pi))).sum()
    assert np.allclose(head_entropy(head), ent_ref, atol=1e-12)


def test_gaussian_std_clamped_to_bounds():
    spec = MlpSpec(in_dim=2, out_dim=1, hidden=(4,), head="gaussian", min_std=0.2, max_std=0.9)
    pv = init_params(spec, np.random.default_rng(9))
    pv.block("log_std")[:] = 10.0
    head = mlp_forward(spec, pv, np.zeros((1, 2)))
    assert np.all(ad.val(head.std) == 0.9)
    pv.block("log_std")[:] = -10.0
    head = mlp_forward(spec, pv, np.zeros((1, 2)))
    assert np.all(ad.val(head.std) == 0.2)


def test_head_density_caps_tall_spikes():
    head = HeadOut("gaussian", np.zeros((1, 1)), np.array([[1e-4]]))
    dens = head_density(head, np.zeros((1, 1)), cap=1e3)
    assert dens[0] == 1e3
    wide = HeadOut("gaussian", np.zeros((1, 1)), np.array([[1.0]]))
    assert np.isclose(head_density(wide, np.zeros((1, 1)))[0], 1 / np.sqrt(2 * np.pi))


def test_policy_gradients_match_finite_differences():
    for kind in ("categorical", "gaussian"):
        spec = MlpSpec(in_dim=3, out_dim=2, hidden=(6, 4), head=kind)
        pv = init_params(spec, np.random.default_rng(10))
        x = np.random.default_rng(11).standard_normal((8, 3))
        if kind == "categorical":
            acts = np.random.default_rng(12).integers(0, 2, size=8)
        else:
            acts = np.random.default_rng(12).standard_normal((8, 2))

        def run(flat):
            p = ParamVector(flat, spec.manifest())
            tape = ad.GradTape(p)
            head = mlp_forward(spec, p, x, tape=tape)
            lp, ent = policy_head_eval(head, acts)
            loss = ad.add(ad.rmean(lp), ad.mul(ad.rmean(ent), 0.37))
            return ad.val(loss).item(), tape.gradient(loss)

        _, g = run(pv.values.copy())
        g_fd = fd_grad(lambda f: run(f)[0], pv.values.copy())
        assert_grads_match(g, g_fd)


def test_value_head_gradient_matches_finite_differences():
    spec = MlpSpec(in_dim=4, out_dim=1, hidden=(5,), head="scalar")
    pv = init_params(spec, np.random.default_rng(13))
    x = np.random.default_rng(14).standard_normal((6, 4))
    target = np.random.default_rng(15).standard_normal((6, 1))

    def run(flat):
        p = ParamVector(flat, spec.manifest())
        tape = ad.GradTape(p)
        v = mlp_forward(spec, p, x, tape=tape).out
        err = ad.sub(v, target)
        loss = ad.rmean(ad.mul(err, err))
        return ad.val(loss).item(), tape.gradient(loss)

    _, g = run(pv.values.copy())
    assert_grads_match(g, fd_grad(lambda f: run(f)[0], pv.values.copy()))


def test_sampling_respects_distributions():
    rng = np.random.default_rng(16)
    logits = np.log(np.array([[0.7, 0.2, 0.1]])).repeat(4000, axis=0)
    head = HeadOut("categorical", logits)
    draws = sample_actions(head, rng)
    freq = np.bincount(draws, minlength=3) / 4000
    assert np.abs(freq - [0.7, 0.2, 0.1]).max() < 0.03
    assert mode_actions(head)[0] == 0

    ghead = HeadOut("gaussian", np.full((4000, 1), 2.0), np.array([[0.5]]))
    draws = sample_actions(ghead, rng)
    assert abs(draws.mean() - 2.0) < 0.05
    assert abs(draws.std() - 0.5) < 0.05
    assert np.all(mode_actions(ghead) == 2.0)


def test_scalar_head_refuses_policy_ops():
    head = HeadOut("scalar", np.zeros((2, 1)))
    with pytest.raises(ContractError):
        head_log_prob(head, np.zeros(2))
    with pytest.raises(ContractError):
        sample_actions(head, np.random.default_rng(0))
