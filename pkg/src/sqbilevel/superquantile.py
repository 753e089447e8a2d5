"""Variational superquantile of f(theta, X) under Gibbs samples.

The upper tail minimises ``beta + E[(f - beta)_+] / delta`` (pessimistic
selection); the lower tail maximises ``beta - E[(beta - f)_+] / delta``
(optimistic selection). Both are solved by averaged projected stochastic
subgradient steps on ``[-B, B]``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .gibbs import GibbsSampleBatch, LangevinConfig, SeedKey, sample_gibbs_many, stream


class Tail(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


class StepRule(str, enum.Enum):
    CONSTANT_AVERAGED = "constant_averaged"
    INVERSE_SQRT = "inverse_sqrt"


@dataclass(frozen=True)
class SqConfig:
    """Inner superquantile solver settings.

    ``beta_bound=None`` means B is calibrated from the PSGD batch itself
    (``bound_safety * max |f|``, floored at ``bound_floor``).
    """

    delta: float = 0.1
    inner_iters: int = 64
    beta_bound: Optional[float] = None
    beta_init: float = 0.0
    step_rule: StepRule = StepRule.CONSTANT_AVERAGED
    tail: Tail = Tail.UPPER
    bound_safety: float = 2.0
    bound_floor: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.5:
            raise ConfigurationError(f"delta must lie in (0, 1/2], got {self.delta}")
        if self.inner_iters < 1:
            raise ConfigurationError("inner_iters must be positive")
        if self.beta_bound is not None:
            if not self.beta_bound > 0:
                raise ConfigurationError("beta_bound must be positive")
            if abs(self.beta_init) > self.beta_bound:
                raise ConfigurationError(
                    f"|beta_init|={abs(self.beta_init)} exceeds beta_bound={self.beta_bound}")
        if self.bound_safety < 1.0 or not self.bound_floor > 0:
            raise ConfigurationError("bound_safety must be >= 1 and bound_floor > 0")
        object.__setattr__(self, "tail", Tail(self.tail))
        object.__setattr__(self, "step_rule", StepRule(self.step_rule))

    @property
    def sigma(self) -> float:
        return 1.0 + 1.0 / self.delta


@dataclass(frozen=True)
class SqEstimate:
    value: float
    beta_hat: float
    tail_hits: int
    m_used: int

    @property
    def empty_tail(self) -> bool:
        return self.tail_hits == 0


def phi_value(beta, fvals, delta: float, tail: Tail = Tail.UPPER):
    """Sample objective of the variational superquantile at ``beta``.

    ``beta`` may be an array; it is broadcast against the leading axes of
    ``fvals`` (samples run along the last axis).
    """
    fvals = np.asarray(fvals, dtype=float)
    if fvals.size == 0 or fvals.shape[-1] == 0:
        raise InvalidArgumentError("phi_value needs at least one sample")
    if not 0.0 < delta <= 0.5:
        raise InvalidArgumentError(f"delta must lie in (0, 1/2], got {delta}")
    beta = np.asarray(beta, dtype=float)
    b = beta[..., None]
    if Tail(tail) is Tail.UPPER:
        out = beta + np.mean(np.maximum(fvals - b, 0.0), axis=-1) / delta
    else:
        out = beta - np.mean(np.maximum(b - fvals, 0.0), axis=-1) / delta
    return float(out) if np.ndim(out) == 0 else out


def phi_subgradient(beta, f_sample, delta: float, tail: Tail = Tail.UPPER):
    """Stochastic subgradient in beta for one sample, in descent convention.

    Ties ``f == beta`` take the zero-indicator branch. The lower tail returns
    the negated ascent direction so both tails use ``beta - step * output``.
    """
    beta = np.asarray(beta, dtype=float)
    f_sample = np.asarray(f_sample, dtype=float)
    if Tail(tail) is Tail.UPPER:
        out = 1.0 - (f_sample > beta) / delta
    else:
        out = (f_sample < beta) / delta - 1.0
    return float(out) if np.ndim(out) == 0 else out


def _step_sizes(config: SqConfig, bound, L: int):
    bound = np.asarray(bound, dtype=float)
    if config.step_rule is StepRule.CONSTANT_AVERAGED:
        return [bound / (config.sigma * math.sqrt(L))] * L
    return [bound / (config.sigma * math.sqrt(l + 1)) for l in range(L)]


def psgd_on_values(fvals, config: SqConfig, beta0=None, bound=None):
    """Averaged projected subgradient recursion over a pre-drawn sample stream.

    ``fvals`` has shape ``(..., L)``; ``beta0`` and ``bound`` broadcast against
    the leading axes. Returns the average of the iterates beta^1..beta^L.
    """
    fvals = np.asarray(fvals, dtype=float)
    L = fvals.shape[-1]
    if L == 0:
        raise InvalidArgumentError("PSGD needs at least one iteration")
    bound = config.beta_bound if bound is None else bound
    if bound is None:
        raise ConfigurationError("no beta bound given and none configured")
    bound = np.broadcast_to(np.asarray(bound, dtype=float), fvals.shape[:-1])
    beta0 = config.beta_init if beta0 is None else beta0
    beta = np.clip(np.broadcast_to(np.asarray(beta0, dtype=float), fvals.shape[:-1]),
                   -bound, bound)
    acc = np.zeros_like(beta)
    for l, eta in enumerate(_step_sizes(config, bound, L)):
        beta = np.clip(beta - eta * phi_subgradient(beta, fvals[..., l], config.delta,
                                                    config.tail), -bound, bound)
        acc = acc + beta
    out = acc / L
    return float(out) if out.ndim == 0 else out


def psgd_beta(theta, sampler: Callable, config: SqConfig, seed: SeedKey,
              beta0: Optional[float] = None, bound: Optional[float] = None) -> float:
    """Run PSGD for ``config.inner_iters`` steps.

    ``sampler(theta, rng)`` returns the upper objective at one fresh lower-level
    sample, i.e. a draw of ``f(theta, X)`` with ``X`` from the Gibbs measure.
    """
    rng = stream(seed)
    fvals = np.array([float(sampler(theta, rng)) for _ in range(config.inner_iters)])
    return psgd_on_values(fvals, config, beta0, bound)


def calibrate_beta_bound(theta, calib_samples, problem, safety: float = 2.0,
                         floor: float = 1.0) -> float:
    """Empirical stand-in for the a-priori bound on the superquantile minimiser."""
    samples = calib_samples.samples if isinstance(calib_samples, GibbsSampleBatch) \
        else np.asarray(calib_samples, dtype=float)
    if samples.size == 0:
        raise InvalidArgumentError("calibration batch is empty")
    if safety < 1.0:
        raise InvalidArgumentError("safety factor must be >= 1")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    fmax = float(np.max(np.abs(problem.f(theta, samples))))
    return max(floor, safety * fmax)


def _tail_hits(beta_hat, fvals, tail: Tail):
    b = np.asarray(beta_hat)[..., None]
    hits = fvals > b if tail is Tail.UPPER else fvals < b
    return hits.sum(axis=-1)


def sq_estimate(theta, beta_hat: float, fresh, delta: float, tail: Tail,
                problem) -> SqEstimate:
    """Surrogate value ``phi(beta_hat)`` on an independent fresh batch."""
    samples = fresh.samples if isinstance(fresh, GibbsSampleBatch) else np.asarray(fresh)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    fvals = np.asarray(problem.f(theta, samples), dtype=float)
    return estimate_from_values(beta_hat, fvals, delta, tail)


def estimate_from_values(beta_hat: float, fvals, delta: float, tail: Tail) -> SqEstimate:
    fvals = np.asarray(fvals, dtype=float)
    tail = Tail(tail)
    if delta * fvals.size < 1:
        warnings.warn(f"delta*M = {delta * fvals.size:.3g} < 1: the tail is a single order "
                      "statistic and the estimate is high-variance", stacklevel=2)
    value = phi_value(beta_hat, fvals, delta, tail)
    return SqEstimate(value=value, beta_hat=float(beta_hat),
                      tail_hits=int(_tail_hits(beta_hat, fvals, tail)), m_used=int(fvals.size))


@dataclass
class SurrogateBatch:
    """Result of evaluating the surrogate at ``Q`` points at once."""

    values: np.ndarray
    beta_hats: np.ndarray
    tail_hits: np.ndarray
    m_used: int

    def estimate(self, q: int) -> SqEstimate:
        return SqEstimate(float(self.values[q]), float(self.beta_hats[q]),
                          int(self.tail_hits[q]), self.m_used)


def surrogate_many(problem, thetas, sq: SqConfig, langevin: LangevinConfig, n_fresh: int,
                   seeds: Sequence[SeedKey], beta0=None, shared_fresh=None) -> SurrogateBatch:
    """Evaluate the superquantile surrogate at each row of ``thetas``.

    Each query draws ``inner_iters + n_fresh`` strict Langevin samples: the
    first ``inner_iters`` feed PSGD (and the bound calibration), the rest form
    the independent fresh batch. With ``shared_fresh`` (an ``(M, d)`` array)
    only the PSGD samples are drawn and every query is scored on that batch.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    L = sq.inner_iters
    if shared_fresh is not None:
        n_fresh = 0
    need = L + n_fresh
    cfg = replace(langevin, n_chains=-(-need // langevin.samples_per_chain))
    X = sample_gibbs_many(problem, thetas, cfg, seeds)[:, :need]
    fvals = np.asarray(problem.f(thetas[:, None, :], X), dtype=float)
    f_psgd = fvals[:, :L]
    if shared_fresh is None:
        f_fresh = fvals[:, L:]
    else:
        f_fresh = np.asarray(problem.f(thetas[:, None, :], np.asarray(shared_fresh)[None]),
                             dtype=float)
    if sq.beta_bound is None:
        bound = np.maximum(sq.bound_floor, sq.bound_safety * np.max(np.abs(f_psgd), axis=1))
    else:
        bound = np.full(len(thetas), sq.beta_bound)
    beta0 = sq.beta_init if beta0 is None else beta0
    beta_hat = np.atleast_1d(psgd_on_values(f_psgd, sq, beta0, bound))
    if sq.delta * f_fresh.shape[1] < 1:
        warnings.warn(f"delta*M = {sq.delta * f_fresh.shape[1]:.3g} < 1: the tail is a single "
                      "order statistic and the estimate is high-variance", stacklevel=2)
    values = np.atleast_1d(phi_value(beta_hat, f_fresh, sq.delta, sq.tail))
    return SurrogateBatch(values, beta_hat, _tail_hits(beta_hat, f_fresh, sq.tail),
                          f_fresh.shape[1])
