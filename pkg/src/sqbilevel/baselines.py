"""Penalty baselines: joint gradient descent on a single-level objective.

``VALUE_PENALTY``      Phi = f + gamma * (g - g*(theta))
``GRAD_NORM_PENALTY``  Phi = f + gamma / 2 * ||grad_x g||^2
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EstimatorError, InvalidArgumentError
from .gibbs import stream
from .pszo import OuterTrajectory, Record
from .problem import BilevelProblem, gradient_mapping

FD_REL_STEP = 1e-5


class PenaltyVariant(str, enum.Enum):
    VALUE_PENALTY = "value_penalty"
    GRAD_NORM_PENALTY = "grad_norm_penalty"


class LowerValueOracle(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    INNER_DESCENT = "inner_descent"


@dataclass(frozen=True)
class PenaltyConfig:
    gamma: float = 10.0
    joint_step: float = 0.01
    n_iters: int = 500
    variant: PenaltyVariant = PenaltyVariant.VALUE_PENALTY
    lower_value_oracle: LowerValueOracle = LowerValueOracle.CLOSED_FORM
    inner_steps: int = 200
    inner_step_size: float = 0.01
    alternating: bool = False

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigurationError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.joint_step > 0 or not self.inner_step_size > 0:
            raise ConfigurationError("step sizes must be positive")
        if self.n_iters < 0 or self.inner_steps < 1:
            raise ConfigurationError("n_iters >= 0 and inner_steps >= 1 required")
        object.__setattr__(self, "variant", PenaltyVariant(self.variant))
        object.__setattr__(self, "lower_value_oracle", LowerValueOracle(self.lower_value_oracle))

    @property
    def method(self) -> str:
        return "v_pbgd" if self.variant is PenaltyVariant.VALUE_PENALTY else "g_pbgd"


def _require(problem: BilevelProblem, *names: str) -> None:
    missing = [n for n in names if getattr(problem, n) is None]
    if missing:
        raise ConfigurationError(f"{problem.name} lacks {', '.join(missing)} needed by the "
                                 "penalty baseline")


def _inner_descent(problem, theta, x, config: PenaltyConfig) -> np.ndarray:
    for _ in range(config.inner_steps):
        x = x - config.inner_step_size * problem.grad_x_g(theta, x)
    return x


def lower_value(problem: BilevelProblem, theta, x, config: PenaltyConfig):
    """``(g*(theta), grad g*(theta))`` from the configured oracle.

    The inner-descent oracle starts from ``x`` and differentiates through
    Danskin's rule, i.e. ``grad_theta g`` at the approximate minimiser.
    """
    if config.lower_value_oracle is LowerValueOracle.CLOSED_FORM:
        if problem.lower_value is None or problem.grad_lower_value is None:
            raise ConfigurationError(f"{problem.name} has no closed-form lower value; "
                                     "use the inner_descent oracle")
        return float(problem.lower_value(theta)), np.asarray(problem.grad_lower_value(theta))
    xs = _inner_descent(problem, theta, np.asarray(x, dtype=float), config)
    grad = problem.grad_theta_g(theta, xs) if problem.grad_theta_g is not None else None
    return float(problem.g(theta, xs)), grad


def _hvp(problem, theta, x, v):
    if problem.hess_x_g_vec is not None:
        return problem.hess_x_g_vec(theta, x, v)
    eps = FD_REL_STEP * (1.0 + np.linalg.norm(x))
    return (problem.grad_x_g(theta, x + eps * v) - problem.grad_x_g(theta, x - eps * v)) / (2 * eps)


def _mixed(problem, theta, x, v):
    if problem.mixed_x_g_vec is not None:
        return problem.mixed_x_g_vec(theta, x, v)
    out = np.empty(problem.upper_dim)
    for i in range(problem.upper_dim):
        eps = FD_REL_STEP * (1.0 + abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = eps
        out[i] = v @ (problem.grad_x_g(theta + e, x) - problem.grad_x_g(theta - e, x)) / (2 * eps)
    return out


def penalty_objective(problem: BilevelProblem, theta, x, config: PenaltyConfig) -> float:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.asarray(x, dtype=float)
    f = float(problem.f(theta, x))
    if config.variant is PenaltyVariant.VALUE_PENALTY:
        g_star, _ = lower_value(problem, theta, x, config)
        return f + config.gamma * (float(problem.g(theta, x)) - g_star)
    gx = problem.grad_x_g(theta, x)
    return f + 0.5 * config.gamma * float(gx @ gx)


def penalty_gradient(problem: BilevelProblem, theta, x, config: PenaltyConfig):
    """Joint gradient ``(d Phi / d theta, d Phi / d x)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.asarray(x, dtype=float)
    _require(problem, "grad_theta_f", "grad_x_f")
    gt = np.asarray(problem.grad_theta_f(theta, x), dtype=float)
    gx = np.asarray(problem.grad_x_f(theta, x), dtype=float)
    if config.gamma == 0:
        return gt, gx
    if config.variant is PenaltyVariant.VALUE_PENALTY:
        _require(problem, "grad_theta_g")
        _, grad_star = lower_value(problem, theta, x, config)
        gt = gt + config.gamma * (problem.grad_theta_g(theta, x) - grad_star)
        gx = gx + config.gamma * problem.grad_x_g(theta, x)
    else:
        r = problem.grad_x_g(theta, x)
        gt = gt + config.gamma * _mixed(problem, theta, x, r)
        gx = gx + config.gamma * _hvp(problem, theta, x, r)
    return gt, gx


def pbgd_run(problem: BilevelProblem, config: PenaltyConfig, theta0=None, x0=None,
             seed: int = 0) -> OuterTrajectory:
    """Projected joint gradient descent on the penalised objective.

    ``x0=None`` draws a standard Gaussian point from ``seed`` and moves it
    onto the lower-level solution set with ``inner_steps`` gradient steps on
    ``g(theta0, .)``; the quartic gradient-norm penalty is unstable far from
    it. The best iterate is the one with the smallest penalised objective.
    """
    m, d = problem.upper_dim, problem.lower_dim
    theta = np.zeros(m) if theta0 is None else np.atleast_1d(np.asarray(theta0, dtype=float))
    if theta.shape != (m,):
        raise InvalidArgumentError(f"theta0 has shape {theta.shape}, expected ({m},)")
    theta = problem.domain.project(theta)
    if x0 is None:
        x = _inner_descent(problem, theta, stream(seed).standard_normal(d), config)
    else:
        x = np.asarray(x0, dtype=float)
    if x.shape != (d,):
        raise InvalidArgumentError(f"x0 has shape {x.shape}, expected ({d},)")
    step = config.joint_step
    traj = OuterTrajectory(records=[], method=config.method, theta_star=problem.theta_star,
                           eta=step)
    values = []
    t0 = time.perf_counter()
    for n in range(config.n_iters):
        gt, gx = penalty_gradient(problem, theta, x, config)
        if not (np.all(np.isfinite(gt)) and np.all(np.isfinite(gx))):
            raise EstimatorError(f"nonfinite penalty gradient at iteration {n}",
                                 iteration=n, partial=traj)
        val = penalty_objective(problem, theta, x, config)
        gmap = float(np.linalg.norm(gradient_mapping(problem.domain, theta, gt, step)))
        traj.records.append(Record(n, theta.copy(), gt, gmap, val,
                                   1e3 * (time.perf_counter() - t0)))
        values.append(val)
        theta_next = problem.domain.project(theta - step * gt)
        if config.alternating:
            gx = penalty_gradient(problem, theta_next, x, config)[1]
        x = x - step * gx
        theta = theta_next
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(x))):
            raise EstimatorError(f"nonfinite state at iteration {n}", iteration=n, partial=traj)
    val = penalty_objective(problem, theta, x, config)
    traj.records.append(Record(config.n_iters, theta.copy(), None, float("nan"), val,
                               1e3 * (time.perf_counter() - t0)))
    values.append(val)
    traj.select_best(values)
    return traj
