"""Validation primitives: order-statistic quantiles, exact sample
superquantiles, 1-D Wasserstein distance and the approximation-error sweep."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .gibbs import LangevinConfig, sample_gibbs_many
from .problem import BilevelProblem, Sense
from .superquantile import Tail


def empirical_quantile(values, delta: float) -> float:
    """``inf{t : #{z > t} / M <= delta}`` over the sample, without interpolation."""
    z = np.sort(np.asarray(values, dtype=float).ravel())
    if z.size == 0:
        raise InvalidArgumentError("empirical_quantile needs at least one value")
    if not 0.0 < delta < 1.0:
        raise InvalidArgumentError(f"delta must lie in (0, 1), got {delta}")
    M = z.size
    # Number of values strictly greater than z[i] is M - (last index of z[i]) - 1.
    greater = M - np.searchsorted(z, z, side="right")
    ok = np.nonzero(greater <= delta * M * (1 + 1e-12))[0]
    return float(z[ok[0]])


def empirical_superquantile(values, delta: float, tail: Tail = Tail.UPPER) -> float:
    """Exact minimum (upper tail) or maximum (lower tail) of the sample objective."""
    z = np.asarray(values, dtype=float).ravel()
    if Tail(tail) is Tail.LOWER:
        return -empirical_superquantile(-z, delta, Tail.UPPER)
    beta = empirical_quantile(z, delta)
    return float(beta + np.mean(np.maximum(z - beta, 0.0)) / delta)


def wasserstein1_1d(a, b) -> float:
    """W1 between two equal-size empirical measures on the line."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise InvalidArgumentError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise InvalidArgumentError("wasserstein1_1d needs nonempty inputs")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def power_lambda_rule(k: int, c: float = 1.0) -> Callable[[float], float]:
    """``lambda = c * delta ** (2 (k + 1) / k)``."""
    if k < 1 or not c > 0:
        raise InvalidArgumentError("k >= 1 and c > 0 required")
    return lambda delta: c * delta ** (2.0 * (k + 1) / k)


@dataclass
class SweepRow:
    delta: float
    lam: float
    errors: np.ndarray

    @property
    def err_mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def err_std(self) -> float:
        return float(np.std(self.errors, ddof=1)) if self.errors.size > 1 else 0.0


@dataclass
class SweepTable:
    rows: List[SweepRow]

    @property
    def slope(self) -> float:
        """Least-squares slope of log(mean error) against log(delta)."""
        d = np.log([r.delta for r in self.rows])
        e = np.log([r.err_mean for r in self.rows])
        return float(np.polyfit(d, e, 1)[0])

    @property
    def strictly_decreasing(self) -> bool:
        rows = sorted(self.rows, key=lambda r: -r.delta)
        means = [r.err_mean for r in rows]
        return all(b < a for a, b in zip(means, means[1:]))

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "lambda", "err_mean", "err_std", "n_seeds"])
            for r in self.rows:
                w.writerow([repr(r.delta), repr(r.lam), repr(r.err_mean), repr(r.err_std),
                            r.errors.size])


def surrogate_reference(problem: BilevelProblem, theta, delta: float, langevin: LangevinConfig,
                        n_samples: int, seed) -> float:
    """Superquantile of ``f(theta, X)`` over ``n_samples`` Langevin draws, solved exactly."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cfg = replace(langevin, n_chains=-(-n_samples // langevin.samples_per_chain))
    X = sample_gibbs_many(problem, theta[None, :], cfg, [seed])[0, :n_samples]
    tail = Tail.UPPER if problem.sense is Sense.PESSIMISTIC else Tail.LOWER
    return empirical_superquantile(problem.f(theta, X), delta, tail)


def approximation_sweep(problem: BilevelProblem, theta, deltas: Sequence[float],
                        lambda_rule: Callable[[float], float], seeds: Sequence[int] = range(5),
                        n_samples: int = 20000, step_size: float = 0.02, burn_in: int = 1000,
                        smoothness: Optional[float] = None) -> SweepTable:
    """Tabulate ``|F_sqg(theta) - F_closed(theta)|`` across ``deltas``."""
    if problem.closed_form_hyper is None:
        raise ConfigurationError(f"{problem.name} has no closed-form hyper-objective")
    if not len(deltas) or not len(seeds):
        raise InvalidArgumentError("deltas and seeds must be nonempty")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    exact = float(problem.closed_form_hyper(theta))
    rows = []
    for i, delta in enumerate(deltas):
        lam = float(lambda_rule(delta))
        cfg = LangevinConfig(lam=lam, step_size=step_size, burn_in=burn_in,
                             smoothness=smoothness)
        errs = [abs(surrogate_reference(problem, theta, delta, cfg, n_samples, (s, 4, i)) - exact)
                for s in seeds]
        rows.append(SweepRow(float(delta), lam, np.asarray(errs)))
    return SweepTable(rows)


def gibbs_expectation_2d(problem: BilevelProblem, theta, lam: float, fn: Callable,
                         half_width: float = 3.0, n_grid: int = 2001) -> float:
    """``E[fn(X)]`` under ``exp(-g/lam)`` by uniform-grid quadrature on a square.

    Only for ``lower_dim == 2``; the density is shifted by its grid minimum
    before exponentiating.
    """
    if problem.lower_dim != 2:
        raise InvalidArgumentError("grid quadrature is implemented for lower_dim == 2 only")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    axis = np.linspace(-half_width, half_width, n_grid)
    X = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
    gv = problem.g(theta, X)
    w = np.exp(-(gv - gv.min()) / lam)
    return float(np.sum(w * fn(X)) / np.sum(w))
