"""Projected stochastic zeroth-order outer loop with minima-selection.

Each outer step queries the superquantile surrogate at ``b_u`` symmetric
pairs ``theta_bar +/- rho u``, forms the two-point estimator and takes a
projected step. The best iterate is chosen afterwards by re-evaluating the
surrogate at every recorded point with a larger fresh batch.
"""
from __future__ import annotations

import csv
import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError, EstimatorError, InvalidArgumentError, \
    SamplerDivergenceError
from .gibbs import LangevinConfig, sample_gibbs_many, stream
from .problem import BilevelProblem, Sense, gradient_mapping, interiorize
from .superquantile import SqConfig, Tail, surrogate_many

log = logging.getLogger(__name__)

# Leading component of every RNG key path, per purpose.
_DIRECTIONS, _QUERIES, _REEVAL, _CENTER = 0, 1, 2, 3
_REEVAL_CHUNK = 32


class BoundaryMode(str, enum.Enum):
    INTERIORIZE = "interiorize"
    CLAMP_EVALUATE = "clamp_evaluate"


@dataclass(frozen=True)
class OuterConfig:
    langevin: LangevinConfig
    sq: SqConfig = field(default_factory=SqConfig)
    n_outer: int = 500
    batch_directions: int = 8
    rho: float = 0.1
    eta: float = 0.05
    n_fresh: int = 64
    theta0: Optional[tuple] = None
    boundary_mode: BoundaryMode = BoundaryMode.INTERIORIZE
    reuse_center_batch: bool = False
    warm_start: bool = True
    reeval_factor: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_outer < 0 or self.batch_directions < 1 or self.n_fresh < 1:
            raise ConfigurationError("n_outer >= 0, batch_directions >= 1, n_fresh >= 1 required")
        if not (self.rho > 0 and self.eta > 0):
            raise ConfigurationError("rho and eta must be positive")
        if self.reeval_factor < 1:
            raise ConfigurationError("reeval_factor must be >= 1")
        object.__setattr__(self, "boundary_mode", BoundaryMode(self.boundary_mode))
        if self.theta0 is not None:
            object.__setattr__(self, "theta0", tuple(float(v) for v in np.atleast_1d(self.theta0)))


@dataclass
class Record:
    n: int
    theta: np.ndarray
    grad_est: Optional[np.ndarray]
    gmap_norm: float
    psi_tilde: float
    wall_ms: float


@dataclass
class OuterTrajectory:
    records: List[Record]
    method: str = "pszo_minsel"
    best_index: int = 0
    best_theta: Optional[np.ndarray] = None
    best_value: float = float("nan")
    selection_values: Optional[np.ndarray] = None
    theta_star: Optional[np.ndarray] = None
    eta: Optional[float] = None

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    @property
    def best_error(self) -> float:
        if self.theta_star is None or self.best_theta is None:
            return float("nan")
        return float(np.linalg.norm(self.best_theta - self.theta_star))

    def select_best(self, values) -> None:
        values = np.asarray(values, dtype=float)
        self.selection_values = values
        self.best_index = int(np.nanargmin(values))
        self.best_theta = self.records[self.best_index].theta.copy()
        self.best_value = float(values[self.best_index])

    def to_csv(self, path: str, timings: bool = True, method_column: bool = False) -> None:
        """Write ``iter,theta_1..theta_m,gmap_norm,psi_tilde,wall_ms`` rows.

        ``timings=False`` leaves ``wall_ms`` empty so reruns compare byte-for-byte.
        """
        m = len(self.records[0].theta)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["iter"] + [f"theta_{i + 1}" for i in range(m)] + \
                ["gmap_norm", "psi_tilde", "wall_ms"]
            w.writerow((["method"] if method_column else []) + head)
            for r in self.records:
                row = [r.n] + [repr(float(v)) for v in r.theta] + \
                    [repr(float(r.gmap_norm)), repr(float(r.psi_tilde)),
                     f"{r.wall_ms:.3f}" if timings else ""]
                w.writerow(([self.method] if method_column else []) + row)

    def summary_csv(self, path: str) -> None:
        """Write ``best_iter,best_theta_*,best_value[,error_vs_theta_star]``."""
        m = len(self.records[0].theta)
        head = ["best_iter"] + [f"best_theta_{i + 1}" for i in range(m)] + ["best_value"]
        row = [self.best_index] + [repr(float(v)) for v in self.best_theta] + \
            [repr(float(self.best_value))]
        if self.theta_star is not None:
            head.append("error_vs_theta_star")
            row.append(repr(self.best_error))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(head)
            w.writerow(row)


def sample_unit_sphere(m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere in R^m."""
    if m < 1:
        raise InvalidArgumentError("sphere dimension must be >= 1")
    while True:
        z = rng.standard_normal(m)
        norm = np.linalg.norm(z)
        if norm > 0:
            return z / norm


def two_point_estimator(values_plus, values_minus, directions, rho: float, m: int) -> np.ndarray:
    """``m / (2 rho b_u) * sum_t (v+_t - v-_t) u_t``."""
    vp = np.asarray(values_plus, dtype=float).ravel()
    vm = np.asarray(values_minus, dtype=float).ravel()
    U = np.asarray(directions, dtype=float).reshape(len(vp), -1) if len(vp) else \
        np.zeros((0, m))
    if not (len(vp) == len(vm) == U.shape[0]) or len(vp) == 0:
        raise InvalidArgumentError("values_plus, values_minus and directions must have the "
                                   "same nonzero length")
    if U.shape[1] != m:
        raise InvalidArgumentError(f"directions have dimension {U.shape[1]}, expected {m}")
    if not rho > 0:
        raise InvalidArgumentError("rho must be positive")
    return (m / (2.0 * rho * len(vp))) * ((vp - vm) @ U)


def tail_for(problem: BilevelProblem) -> Tail:
    return Tail.UPPER if problem.sense is Sense.PESSIMISTIC else Tail.LOWER


def _surrogate(problem, thetas, config: OuterConfig, n_fresh: int, seeds, beta0, shared=None):
    sq = replace(config.sq, tail=tail_for(problem))
    return surrogate_many(problem, thetas, sq, config.langevin, n_fresh, seeds, beta0, shared)


def reevaluate(problem: BilevelProblem, thetas, config: OuterConfig) -> np.ndarray:
    """Surrogate at every row of ``thetas`` with ``reeval_factor`` x fresh samples."""
    thetas = np.atleast_2d(thetas)
    out = np.empty(len(thetas))
    for start in range(0, len(thetas), _REEVAL_CHUNK):
        idx = range(start, min(start + _REEVAL_CHUNK, len(thetas)))
        seeds = [(config.seed, _REEVAL, n) for n in idx]
        res = _surrogate(problem, thetas[list(idx)], config,
                         config.reeval_factor * config.n_fresh, seeds, None)
        out[list(idx)] = res.values
    return out


def _center_batch(problem, theta_bar, config: OuterConfig, n: int) -> np.ndarray:
    cfg = replace(config.langevin,
                  n_chains=-(-config.n_fresh // config.langevin.samples_per_chain))
    X = sample_gibbs_many(problem, theta_bar[None, :], cfg, [(config.seed, _CENTER, n)])
    return X[0, :config.n_fresh]


@dataclass
class ZoStep:
    """One two-point estimate: directions, surrogate values and fitted thresholds."""

    grad: np.ndarray
    directions: np.ndarray
    values: np.ndarray
    beta_hats: np.ndarray


def zo_gradient(problem: BilevelProblem, theta_bar, config: OuterConfig, n: int,
                beta0=None) -> ZoStep:
    """Two-point estimate at ``theta_bar`` using the RNG streams of iteration ``n``.

    Queries are ``theta_bar + rho u_t`` followed by ``theta_bar - rho u_t``;
    ``beta0`` (one entry per query) warm-starts the inner solver.
    """
    m, b_u, rho = problem.upper_dim, config.batch_directions, config.rho
    theta_bar = np.asarray(theta_bar, dtype=float)
    rng = stream((config.seed, _DIRECTIONS, n))
    U = np.array([sample_unit_sphere(m, rng) for _ in range(b_u)])
    pts = np.vstack([theta_bar + rho * U, theta_bar - rho * U])
    if config.boundary_mode is BoundaryMode.CLAMP_EVALUATE:
        pts = problem.domain.project(pts)
    seeds = [(config.seed, _QUERIES, n, t, s) for s in (0, 1) for t in range(b_u)]
    shared = _center_batch(problem, theta_bar, config, n) if config.reuse_center_batch else None
    res = _surrogate(problem, pts, config, config.n_fresh, seeds, beta0, shared)
    values = res.values
    g = two_point_estimator(values[:b_u], values[b_u:], U, rho, m)
    if not np.all(np.isfinite(g)):
        raise EstimatorError(f"nonfinite zeroth-order estimate at iteration {n}", iteration=n)
    cap = (m / rho) * np.max(np.abs(values[:b_u] - values[b_u:])) / 2.0
    assert np.linalg.norm(g) <= cap * (1 + 1e-12) + 1e-300
    return ZoStep(g, U, values, res.beta_hats)


def pszo_minsel(problem: BilevelProblem, config: OuterConfig,
                progress: Optional[callable] = None) -> OuterTrajectory:
    """Run the outer loop and return the recorded trajectory with best-so-far selection."""
    m = problem.upper_dim
    domain = problem.domain
    theta0 = np.zeros(m) if config.theta0 is None else np.asarray(config.theta0, dtype=float)
    if theta0.shape != (m,):
        raise ConfigurationError(f"theta0 has shape {theta0.shape}, expected ({m},)")
    theta = domain.project(theta0)
    inner = None
    if config.boundary_mode is BoundaryMode.INTERIORIZE:
        inner = interiorize(domain, config.rho)
    eta = config.eta
    traj = OuterTrajectory(records=[], theta_star=problem.theta_star, eta=eta)
    beta_prev = None
    t_start = time.perf_counter()

    for n in range(config.n_outer):
        theta_bar = inner.project(theta) if inner is not None else theta
        beta0 = beta_prev if config.warm_start else None
        try:
            step = zo_gradient(problem, theta_bar, config, n, beta0)
        except (SamplerDivergenceError, EstimatorError) as exc:
            exc.partial = traj
            raise
        beta_prev = step.beta_hats
        g = step.grad
        gmap = np.linalg.norm(gradient_mapping(domain, theta, g, eta))
        traj.records.append(Record(n, theta.copy(), g, float(gmap), float(np.mean(step.values)),
                                   1e3 * (time.perf_counter() - t_start)))
        theta = domain.project(theta_bar - eta * g)
        if progress is not None:
            progress(n, theta)

    traj.records.append(Record(config.n_outer, theta.copy(), None, float("nan"), float("nan"),
                               1e3 * (time.perf_counter() - t_start)))
    traj.select_best(reevaluate(problem, traj.thetas, config))
    return traj


def stationarity_report(trajectory: OuterTrajectory, problem: BilevelProblem,
                        eta: Optional[float] = None) -> np.ndarray:
    """Gradient-mapping norms of the recorded estimators (one per outer step)."""
    if not trajectory.records:
        raise InvalidArgumentError("trajectory is empty")
    eta = trajectory.eta if eta is None else eta
    out = [np.linalg.norm(gradient_mapping(problem.domain, r.theta, r.grad_est, eta))
           for r in trajectory.records if r.grad_est is not None]
    return np.asarray(out, dtype=float)
