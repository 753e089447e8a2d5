import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sqbilevel.baselines import LowerValueOracle, PenaltyConfig, PenaltyVariant, lower_value, \
    pbgd_run, penalty_gradient, penalty_objective
from sqbilevel.errors import ConfigurationError
from sqbilevel.problem import BilevelProblem, Box
from sqbilevel.problems import ToySpec, make_quadratic, make_quartic_sphere, make_toy

TOY = make_toy(ToySpec(2, 1))
TOY53 = make_toy(ToySpec(5, 3))
VARIANTS = list(PenaltyVariant)


def circle(theta, angle):
    r = np.sqrt(1 + theta ** 2)
    return r * np.array([np.cos(angle), np.sin(angle)])


@pytest.mark.parametrize("angle", [0.0, 1.0, 2.5, 4.0])
def test_value_penalty_vanishes_on_solution_set(angle):
    x = circle(0.0, angle)
    cfg = PenaltyConfig(variant=PenaltyVariant.VALUE_PENALTY)
    assert penalty_objective(TOY, [0.0], x, cfg) == pytest.approx(float(TOY.f(np.zeros(1), x)),
                                                                 abs=1e-12)


def test_grad_norm_penalty_vanishes_at_stationary_point():
    x = circle(0.7, 2.0)
    cfg = PenaltyConfig(variant=PenaltyVariant.GRAD_NORM_PENALTY)
    assert penalty_objective(TOY, [0.7], x, cfg) == pytest.approx(
        float(TOY.f(np.array([0.7]), x)), abs=1e-12)


@pytest.mark.parametrize("variant", VARIANTS)
def test_zero_gamma_is_upper_objective(variant):
    x, theta = np.array([0.3, -2.0]), np.array([0.4])
    cfg = PenaltyConfig(gamma=0.0, variant=variant)
    assert penalty_objective(TOY, theta, x, cfg) == pytest.approx(float(TOY.f(theta, x)))


@settings(max_examples=200, deadline=None)
@given(st.floats(-np.pi, np.pi), st.integers(0, 10 ** 6))
def test_value_gap_nonnegative(theta, seed):
    for p in (TOY, TOY53):
        x = np.random.default_rng(seed).normal(scale=2.0, size=p.lower_dim)
        t = np.array([theta])
        assert float(p.g(t, x)) - float(p.lower_value(t)) >= -1e-9


def _fd_joint(problem, theta, x, cfg, eps=1e-6):
    z = np.concatenate([theta, x])
    m = len(theta)
    out = np.empty_like(z)
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = eps
        out[i] = (penalty_objective(problem, (z + e)[:m], (z + e)[m:], cfg)
                  - penalty_objective(problem, (z - e)[:m], (z - e)[m:], cfg)) / (2 * eps)
    return out


@pytest.mark.parametrize("problem", [TOY, TOY53, make_quartic_sphere(), make_quadratic(3)],
                         ids=lambda p: p.name)
@pytest.mark.parametrize("variant", VARIANTS)
def test_joint_gradient_matches_finite_differences(problem, variant):
    cfg = PenaltyConfig(variant=variant, gamma=3.0)
    rng = np.random.default_rng(0)
    for _ in range(8):
        theta = rng.uniform(0.2, 1.0, problem.upper_dim)
        x = rng.normal(size=problem.lower_dim)
        gt, gx = penalty_gradient(problem, theta, x, cfg)
        analytic = np.concatenate([gt, gx])
        fd = _fd_joint(problem, theta, x, cfg)
        assert np.linalg.norm(analytic - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))


def test_quadratic_large_gamma_drives_theta_to_zero():
    p = make_quadratic(2)
    cfg = PenaltyConfig(gamma=100.0, joint_step=0.004, n_iters=3000)
    traj = pbgd_run(p, cfg, theta0=[1.5], x0=[1.5, 1.5])
    assert abs(traj.records[-1].theta[0]) < 0.05
    assert traj.best_error < 0.05


@pytest.mark.parametrize("variant", VARIANTS)
def test_zero_iterations_returns_initial_point(variant):
    traj = pbgd_run(TOY, PenaltyConfig(n_iters=0, variant=variant), theta0=[0.8])
    assert len(traj.records) == 1 and traj.best_index == 0
    np.testing.assert_array_equal(traj.best_theta, [0.8])
    assert traj.method == PenaltyConfig(variant=variant).method


def test_toy_run_is_feasible_and_deterministic():
    a = pbgd_run(TOY, PenaltyConfig(n_iters=50), theta0=[1.0], seed=4)
    b = pbgd_run(TOY, PenaltyConfig(n_iters=50), theta0=[1.0], seed=4)
    np.testing.assert_array_equal(a.thetas, b.thetas)
    assert np.all(np.abs(a.thetas) <= np.pi)
    assert a.best_index == int(np.argmin(a.selection_values))


def test_inner_descent_oracle_matches_closed_form():
    cfg = PenaltyConfig(lower_value_oracle=LowerValueOracle.INNER_DESCENT, inner_steps=2000,
                        inner_step_size=0.05)
    theta = np.array([0.6])
    value, grad = lower_value(TOY, theta, np.array([0.5, 0.5]), cfg)
    assert value == pytest.approx(float(TOY.lower_value(theta)), abs=1e-6)
    np.testing.assert_allclose(grad, TOY.grad_lower_value(theta), atol=1e-4)


def test_missing_closed_form_is_configuration_error():
    p = BilevelProblem(upper_dim=1, lower_dim=1, f=lambda t, x: x[..., 0],
                       g=lambda t, x: 0.5 * x[..., 0] ** 2, grad_x_g=lambda t, x: x,
                       domain=Box([-1.0], [1.0]), check_grads=False)
    with pytest.raises(ConfigurationError, match="inner_descent"):
        penalty_objective(p, [0.0], [1.0], PenaltyConfig())
    with pytest.raises(ConfigurationError, match="grad_theta_f"):
        penalty_gradient(p, [0.0], [1.0], PenaltyConfig())


@pytest.mark.parametrize("kw", [dict(gamma=-1.0), dict(joint_step=0.0), dict(n_iters=-1),
                                dict(variant="other")])
def test_config_validation(kw):
    with pytest.raises((ConfigurationError, ValueError)):
        PenaltyConfig(**kw)
