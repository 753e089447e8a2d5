import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from sqbilevel.errors import ConfigurationError, InvalidArgumentError
from sqbilevel.gibbs import GibbsSampleBatch, LangevinConfig
from sqbilevel.problems import ToySpec, make_toy
from sqbilevel.superquantile import SqConfig, StepRule, Tail, calibrate_beta_bound, \
    estimate_from_values, phi_subgradient, phi_value, psgd_beta, psgd_on_values, sq_estimate, \
    surrogate_many

ONE_TO_TEN = np.arange(1.0, 11.0)
TOY = make_toy(ToySpec(2, 1))


class _ConstF:
    """Stand-in problem whose upper objective is the first sample coordinate."""

    @staticmethod
    def f(theta, x):
        return x[..., 0]


def test_phi_value_examples():
    assert phi_value(9.0, ONE_TO_TEN, 0.2) == pytest.approx(9.5)
    assert phi_value(4.0, np.full(7, 4.0), 0.3) == pytest.approx(4.0)


def test_phi_value_discrete_minimum_brute_force():
    grid = np.linspace(0, 12, 12001)
    vals = phi_value(grid, np.broadcast_to(ONE_TO_TEN, (grid.size, 10)), 0.2)
    assert vals.min() == pytest.approx(9.5, abs=1e-12)
    argmins = grid[np.isclose(vals, 9.5, atol=1e-12)]
    assert argmins.min() == pytest.approx(8.0) and argmins.max() == pytest.approx(9.0)


def test_phi_value_lower_tail():
    assert phi_value(2.0, ONE_TO_TEN, 0.2, Tail.LOWER) == pytest.approx(1.5)


def test_phi_value_errors():
    with pytest.raises(InvalidArgumentError):
        phi_value(0.0, [], 0.1)
    with pytest.raises(InvalidArgumentError):
        phi_value(0.0, [1.0], 0.6)


def test_subgradient_examples():
    assert phi_subgradient(1.0, 2.0, 0.5) == -1.0
    assert phi_subgradient(1.0, 0.0, 0.5) == 1.0
    assert phi_subgradient(1.0, 1.0, 0.5) == 1.0  # tie: strict indicator
    assert phi_subgradient(1.0, 0.0, 0.5, Tail.LOWER) == 1.0
    assert phi_subgradient(1.0, 2.0, 0.5, Tail.LOWER) == -1.0


def test_subgradient_bound_random():
    rng = np.random.default_rng(0)
    f, b = rng.normal(size=10 ** 4), rng.normal(size=10 ** 4)
    delta = rng.uniform(0.01, 0.5, 10 ** 4)
    for tail in Tail:
        assert np.all(np.abs(phi_subgradient(b, f, delta, tail)) <= 1 + 1 / delta)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.floats(0.01, 0.5))
def test_phi_convex_in_beta(values, delta):
    grid = np.linspace(min(values) - 5, max(values) + 5, 101)
    phi = phi_value(grid, np.broadcast_to(values, (101, len(values))), delta)
    mid = phi_value(0.5 * (grid[:-2] + grid[2:]),
                    np.broadcast_to(values, (99, len(values))), delta)
    assert np.all(mid <= 0.5 * (phi[:-2] + phi[2:]) + 1e-9 * (1 + np.abs(phi[1:-1])))


def _exact_min(values, delta, tail=Tail.UPPER):
    z = np.asarray(values)
    return min(phi_value(b, z, delta, tail) for b in z) if tail is Tail.UPPER else \
        max(phi_value(b, z, delta, tail) for b in z)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), st.integers(1, 20))
def test_minimum_is_top_order_statistic_mean(values, top):
    M = len(values)
    top = min(top, M // 2)
    if top == 0:
        return
    delta = top / M
    expected = np.mean(np.sort(values)[-top:])
    assert _exact_min(values, delta) == pytest.approx(expected, rel=1e-12, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40))
def test_minimum_nonincreasing_in_delta(values):
    mins = [_exact_min(values, d) for d in (0.05, 0.1, 0.2, 0.35, 0.5)]
    assert all(b <= a + 1e-9 for a, b in zip(mins, mins[1:]))


def test_psgd_degenerate_sampler_stays_within_one_step():
    # Ties take the strict branch, so beta oscillates in [c - eta, c + (sigma - 1) eta].
    c = SqConfig(delta=0.1, inner_iters=50, beta_bound=5.0, beta_init=3.0)
    beta = psgd_beta([0.0], lambda th, rng: 3.0, c, seed=0)
    assert abs(beta - 3.0) <= 5.0 / np.sqrt(50)


def test_psgd_zero_iterations_rejected():
    with pytest.raises(InvalidArgumentError):
        psgd_on_values(np.zeros(0), SqConfig(beta_bound=1.0))


def test_psgd_discrete_cvar():
    c = SqConfig(delta=0.2, inner_iters=10 ** 5, beta_bound=20.0)
    beta = psgd_beta([0.0], lambda th, rng: rng.choice(ONE_TO_TEN), c, seed=1)
    assert phi_value(beta, ONE_TO_TEN, 0.2) - 9.5 <= 0.01


def test_psgd_gaussian_cvar():
    oracle = norm.pdf(norm.ppf(0.9)) / 0.1
    assert oracle == pytest.approx(1.75498, abs=1e-5)
    c = SqConfig(delta=0.1, inner_iters=10 ** 5, beta_bound=10.0)
    rng = np.random.default_rng(2)
    beta = psgd_on_values(rng.standard_normal(10 ** 5), c)
    exact_phi = beta + (norm.pdf(beta) - beta * norm.sf(beta)) / 0.1
    assert abs(exact_phi - oracle) <= 0.02


def test_psgd_lower_tail_and_inverse_sqrt():
    rng = np.random.default_rng(3)
    z = rng.standard_normal(10 ** 5)
    lower = SqConfig(delta=0.1, inner_iters=10 ** 5, beta_bound=10.0, tail=Tail.LOWER)
    beta = psgd_on_values(z, lower)
    exact = beta - (norm.pdf(beta) + beta * norm.cdf(beta)) / 0.1
    assert abs(exact + 1.75498) <= 0.02
    inv = SqConfig(delta=0.1, inner_iters=10 ** 5, beta_bound=10.0,
                   step_rule=StepRule.INVERSE_SQRT)
    assert abs(psgd_on_values(z, inv) - norm.ppf(0.9)) < 0.1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(0.1, 50),
       st.sampled_from(list(Tail)))
def test_beta_hat_stays_in_bound(values, bound, tail):
    c = SqConfig(delta=0.25, beta_bound=bound, tail=tail)
    assert abs(psgd_on_values(values, c)) <= bound


def test_calibrate_beta_bound_examples():
    angles = np.linspace(0, 2 * np.pi, 721)
    circle = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    assert calibrate_beta_bound([0.0], circle, TOY, safety=2.0) == pytest.approx(6.0)
    assert calibrate_beta_bound([0.0], np.array([[0.0, 0.0]]), _ConstF, floor=0.7) == 0.7
    pts = np.array([[5.0, 0.0], [-4.0, 1.0]])
    assert calibrate_beta_bound([0.0], pts, _ConstF, safety=1.0) <= 5.0
    batch = GibbsSampleBatch(circle, np.zeros(1), LangevinConfig(lam=0.01, smoothness=1.0))
    assert calibrate_beta_bound([0.0], batch, TOY) == pytest.approx(6.0)


def test_calibrate_beta_bound_errors():
    with pytest.raises(InvalidArgumentError):
        calibrate_beta_bound([0.0], np.zeros((0, 2)), TOY)
    with pytest.raises(InvalidArgumentError):
        calibrate_beta_bound([0.0], np.ones((1, 2)), TOY, safety=0.5)


def test_sq_estimate_examples():
    fresh = np.stack([ONE_TO_TEN, np.zeros(10)], axis=1)
    up = sq_estimate([0.0], 9.0, fresh, 0.2, Tail.UPPER, _ConstF)
    assert (up.value, up.tail_hits, up.m_used) == (pytest.approx(9.5), 1, 10)
    low = sq_estimate([0.0], 2.0, fresh, 0.2, Tail.LOWER, _ConstF)
    assert low.value == pytest.approx(1.5) and low.tail_hits == 1
    empty = sq_estimate([0.0], 11.0, fresh, 0.2, Tail.UPPER, _ConstF)
    assert empty.empty_tail and empty.value == pytest.approx(11.0)


def test_small_tail_warning():
    with pytest.warns(UserWarning, match="delta\\*M"):
        estimate_from_values(0.0, [1.0, 2.0], 0.1, Tail.UPPER)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        estimate_from_values(0.0, np.arange(10.0), 0.1, Tail.UPPER)


@pytest.mark.parametrize("kw", [dict(delta=0.0), dict(delta=0.6), dict(inner_iters=0),
                                dict(beta_bound=-1.0), dict(beta_bound=1.0, beta_init=2.0),
                                dict(bound_safety=0.5)])
def test_sq_config_validation(kw):
    with pytest.raises(ConfigurationError):
        SqConfig(**kw)


def test_surrogate_invariants_on_toy():
    lang = LangevinConfig(lam=0.01, step_size=0.02, burn_in=200, smoothness=TOY.lower_smoothness)
    thetas = np.array([[0.0], [1.0]])
    for tail in Tail:
        res = surrogate_many(TOY, thetas, SqConfig(tail=tail), lang, 64, [(0, 1), (0, 2)])
        assert res.m_used == 64
        if tail is Tail.UPPER:
            assert np.all(res.values >= res.beta_hats)
            np.testing.assert_allclose(res.values, 3 * np.sqrt(1 + thetas[:, 0] ** 2), rtol=0.1)
        else:
            assert np.all(res.values <= res.beta_hats)
            np.testing.assert_allclose(res.values, np.sqrt(1 + thetas[:, 0] ** 2), rtol=0.1)
        assert res.estimate(1).m_used == 64
