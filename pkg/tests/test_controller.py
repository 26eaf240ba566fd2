import numpy as np
import pytest

from ddstmpc import controller as ctl
from ddstmpc.harness.plant import sample_polytope
from ddstmpc.rosc import AugmentedRosc, RoscFamily
from ddstmpc.setgeom import HPolytope, Zonotope, contains_point, zonotope_contains_point, zonotope_to_hpoly

from conftest import A_TRUE, B_TRUE

X = HPolytope.box([-10.0, -10.0], [10.0, 10.0])
U = HPolytope.box([-3.0], [3.0])
W = Zonotope(np.zeros(2), 0.005 * np.eye(2))
K_REF = np.array([[0.47, 0.19]])


def toy_family(inner_center=(0.0, 2.0), projected=None):
    """One level in R^(1+1): x in [-1, 1], u in [c-1, c+1]."""
    inner = Zonotope(np.array(inner_center), np.eye(2))
    proj = projected or Zonotope(np.array(inner_center[:1]), np.eye(1))
    level = AugmentedRosc(1, zonotope_to_hpoly(inner), inner, proj)
    terminal = Zonotope(np.zeros(1), 0.1 * np.eye(1))
    return RoscFamily(terminal, (level,))


def ref_state(run, **kwargs):
    return ctl.ControllerState(family=run.family, R=np.eye(1), U=U, **kwargs)


# ---------------------------------------------------------------- QP examples

def test_qp_picks_smallest_admissible_input():
    state = ctl.ControllerState(toy_family(), R=np.eye(1))
    np.testing.assert_allclose(ctl.compute_control([0.5], 1, state), [1.0], atol=1e-7)
    state = ctl.ControllerState(toy_family((0.0, 0.0)), R=np.eye(1))
    np.testing.assert_allclose(ctl.compute_control([0.5], 1, state), [0.0], atol=1e-7)


def test_qp_scale_invariance_and_linear_term():
    fam = toy_family((0.0, 0.5))
    for x in (-0.9, 0.0, 0.7):
        u1 = ctl.compute_control([x], 1, ctl.ControllerState(fam, R=np.eye(1)))
        u2 = ctl.compute_control([x], 1, ctl.ControllerState(fam, R=2 * np.eye(1)))
        np.testing.assert_allclose(u1, u2, atol=1e-7)
    pushed = ctl.compute_control([0.0], 1, ctl.ControllerState(fam, R=np.eye(1), r=np.array([-10.0])))
    np.testing.assert_allclose(pushed, [1.5], atol=1e-7)


def test_qp_boundary_state():
    state = ctl.ControllerState(toy_family(), R=np.eye(1))
    np.testing.assert_allclose(ctl.compute_control([1.0], 1, state), [1.0], atol=1e-7)
    with pytest.raises(ctl.InfeasibleStepError):
        ctl.compute_control([1.01], 1, state)
    with pytest.raises(ValueError):
        ctl.compute_control([0.0], 2, state)


def test_step_reports_infeasible_qp():
    # projection deliberately larger than the augmented set
    fam = toy_family(projected=Zonotope(np.zeros(1), 5 * np.eye(1)))
    with pytest.raises(ctl.InfeasibleStepError):
        ctl.step([3.0], ctl.ControllerState(fam, R=np.eye(1)))


def test_state_validation():
    fam = toy_family()
    with pytest.raises(ValueError):
        ctl.ControllerState(fam, R=np.eye(2))
    with pytest.raises(ValueError):
        ctl.ControllerState(fam, R=-np.eye(1))
    with pytest.raises(ValueError):
        ctl.ControllerState(fam, R=np.eye(1), terminal_mode="lqr")
    with pytest.raises(ValueError):
        ctl.ControllerState(fam, R=np.eye(1), terminal_mode="gain")
    with pytest.raises(ValueError):
        ctl.ControllerState(fam, R=np.eye(1), terminal_mode="gain", K=np.ones((1, 2)))


# ---------------------------------------------------------------- membership

def test_membership_examples(reference_run):
    fam = reference_run.family
    assert ctl.membership_index(fam.terminal.center, fam) == 0
    with pytest.raises(ctl.OutsideFamilyError):
        ctl.membership_index([9.9, 9.9], fam)


def test_membership_is_smallest_level(reference_run, rng):
    fam = reference_run.family
    for x in fam.projected(fam.N).sample(rng, 300):
        j = ctl.membership_index(x, fam)
        assert zonotope_contains_point(fam.projected(j), x, 1e-8)
        assert not any(zonotope_contains_point(fam.projected(i), x, 1e-8) for i in range(j))


# ---------------------------------------------------------------- terminal law

def test_gain_terminal_law(reference_run):
    state = ref_state(reference_run, terminal_mode="gain", K=K_REF)
    np.testing.assert_allclose(ctl.terminal_control([-2.0, 1.1], state), [0.731], atol=1e-12)
    np.testing.assert_array_equal(ctl.terminal_control([0.0, 0.0], state), [0.0])
    with pytest.raises(ValueError):
        ctl.terminal_control([-10.0, 0.0], state)


def test_qp_terminal_law_keeps_terminal_invariant(reference_run, rng):
    fam, V = reference_run.family, reference_run.vertex_models
    state = ref_state(reference_run)
    T0 = zonotope_to_hpoly(fam.terminal)
    ws = W.sample(rng, 10)
    for x in fam.terminal.sample(rng, 100):
        u = ctl.terminal_control(x, state)
        assert contains_point(U, u, 1e-8)
        succ = np.einsum("kij,j->ki", V.matrices, np.r_[x, u])[:, None, :] + ws[None]
        assert np.all(succ.reshape(-1, 2) @ T0.C.T <= T0.d + 1e-7)


# ---------------------------------------------------------------- recursive feasibility

def test_step_branches(reference_run):
    fam = reference_run.family
    state = ref_state(reference_run)
    u, j = ctl.step(fam.terminal.center, state)
    assert j == 0 and state.last_index == 0 and contains_point(U, u, 1e-8)
    u, j = ctl.step([-2.0, 1.1], state)
    assert j >= 1 and state.last_index == j
    with pytest.raises(ctl.OutsideFamilyError):
        ctl.step([9.9, 9.9], state)


def test_recursive_feasibility(reference_run, rng):
    fam, V = reference_run.family, reference_run.vertex_models
    state = ref_state(reference_run)
    ws = W.sample(rng, 5)
    levels = rng.integers(1, fam.N + 1, size=500)
    for j_draw in levels:
        x = fam.projected(int(j_draw)).sample(rng, 1)[0]
        u, j = ctl.step(x, state)
        assert j <= j_draw and contains_point(U, u, 1e-8)
        target = zonotope_to_hpoly(fam.projected(max(j - 1, 0)))
        succ = np.einsum("kij,j->ki", V.matrices, np.r_[x, u])[:, None, :] + ws[None]
        assert np.all(succ.reshape(-1, 2) @ target.C.T <= target.d + 1e-7)


def test_index_descends_along_true_trajectory(reference_run, rng):
    fam = reference_run.family
    state = ref_state(reference_run)
    x = np.array([-2.0, 1.1])
    prev = None
    for w in W.sample(rng, 25):
        u, j = ctl.step(x, state)
        if prev is not None and prev > 0:
            assert j <= prev - 1
        if prev == 0:
            assert j == 0
        prev = j
        x = A_TRUE @ x + B_TRUE @ u + w
    assert prev == 0


# ---------------------------------------------------------------- known-model reference

def test_model_based_step(reference_run, rng):
    oracle = reference_run.oracle[:6]
    ws = W.sample(rng, 20)
    for j_target in (0, 3, 5):
        for x in sample_polytope(oracle[j_target], rng, 30):
            u, j = ctl.model_based_step(x, (A_TRUE, B_TRUE), oracle, W, U, np.eye(1))
            assert j <= j_target and contains_point(U, u, 1e-8)
            target = oracle[max(j - 1, 0)]
            succ = (A_TRUE @ x + B_TRUE @ u)[None] + ws
            assert np.all(succ @ target.C.T <= target.d + 1e-7)
    assert ctl.oracle_index(reference_run.family.terminal.center, oracle) == 0
    with pytest.raises(ctl.OutsideFamilyError):
        ctl.model_based_step([9.9, 9.9], (A_TRUE, B_TRUE), oracle, W, U, np.eye(1))
