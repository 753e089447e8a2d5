"""Unadjusted Langevin sampling of the lower-level Gibbs measure exp(-g/lambda).

Chains are grouped into fixed blocks of ``CHAIN_BLOCK`` chains. Each block owns
a NumPy generator keyed by ``(seed, *key, block)``; the block draws its initial
states and then its Gaussian increments step by step. A chain's trajectory is
therefore a function of the seed, its index and the step count only, no matter
how many queries are advanced together in one vectorised sweep.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, SamplerDivergenceError

log = logging.getLogger(__name__)

CHAIN_BLOCK = 32
DIVERGENCE_NORM = 1e6
_NOISE_CHUNK = 64

SeedKey = Union[int, Sequence[int]]


@dataclass(frozen=True)
class LangevinConfig:
    """Langevin chain settings.

    ``init`` is ``"zero"``, ``"gaussian"`` (scale ``init_scale``) or
    ``"explicit"`` (rows of ``init_points`` are cycled over the chains).
    ``samples_per_chain == 1`` is the strict i.i.d. mode.
    """

    lam: float
    step_size: float = 0.01
    burn_in: int = 1000
    steps_per_sample: int = 10
    n_chains: int = 64
    samples_per_chain: int = 1
    init: str = "gaussian"
    init_scale: float = 1.0
    init_points: Optional[Tuple[Tuple[float, ...], ...]] = None
    smoothness: Optional[float] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        if not self.step_size > 0:
            raise ConfigurationError(f"step_size must be positive, got {self.step_size}")
        if self.burn_in < 0 or self.steps_per_sample < 1:
            raise ConfigurationError("burn_in must be >= 0 and steps_per_sample >= 1")
        if self.n_chains < 1 or self.samples_per_chain < 1:
            raise ConfigurationError("n_chains and samples_per_chain must be positive")
        if self.init not in ("zero", "gaussian", "explicit"):
            raise ConfigurationError(f"unknown init {self.init!r}")
        if self.init == "explicit" and not self.init_points:
            raise ConfigurationError("explicit init requires init_points")
        if self.init_points is not None:
            pts = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.init_points)
            object.__setattr__(self, "init_points", pts)
        if self.smoothness is not None:
            if self.step_size * self.smoothness >= 2.0:
                raise ConfigurationError(
                    f"step_size {self.step_size} is unstable for smoothness "
                    f"{self.smoothness}: need step_size < 2 / smoothness = "
                    f"{2.0 / self.smoothness:.4g}")
        else:
            warnings.warn("LangevinConfig without a smoothness estimate; the step-size "
                          "stability check is skipped", stacklevel=2)

    @property
    def n_samples(self) -> int:
        return self.n_chains * self.samples_per_chain

    @property
    def total_steps(self) -> int:
        return self.burn_in + self.steps_per_sample * self.samples_per_chain

    @property
    def strict(self) -> bool:
        return self.samples_per_chain == 1


@dataclass(frozen=True)
class GibbsSampleBatch:
    samples: np.ndarray
    theta: np.ndarray
    config: LangevinConfig
    seed_lineage: Tuple[tuple, Tuple[int, int]] = field(default=((), (0, 0)))

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise InvalidArgumentError("samples must be a 2-D array")
        if not np.all(np.isfinite(self.samples)):
            raise SamplerDivergenceError("batch contains nonfinite samples")

    @property
    def size(self) -> int:
        return self.samples.shape[0]


def lmc_step(x, grad, h: float, lam: float, noise, step: Optional[int] = None):
    """One Euler-Maruyama step ``x - h*grad + sqrt(2*lam*h)*noise``."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise SamplerDivergenceError(
            f"nonfinite lower-level gradient at step {step}; reduce the step size",
            step=step)
    return np.asarray(x, dtype=float) - h * grad + math.sqrt(2.0 * lam * h) * np.asarray(noise)


def seed_sequence(seed: SeedKey, *extra: int) -> np.random.SeedSequence:
    """SeedSequence for ``seed`` (an int or an int path) extended by ``extra``."""
    if isinstance(seed, (int, np.integer)):
        root, key = int(seed), ()
    else:
        seed = tuple(int(s) for s in seed)
        root, key = seed[0], seed[1:]
    return np.random.SeedSequence(root, spawn_key=tuple(key) + tuple(int(e) for e in extra))


def stream(seed: SeedKey, *extra: int) -> np.random.Generator:
    return np.random.Generator(np.random.SFC64(seed_sequence(seed, *extra)))


def _as_key(seed: SeedKey) -> tuple:
    return (int(seed),) if isinstance(seed, (int, np.integer)) else tuple(int(s) for s in seed)


def _initial_states(config: LangevinConfig, rng: np.random.Generator, first_chain: int,
                    d: int) -> np.ndarray:
    if config.init == "zero":
        return np.zeros((CHAIN_BLOCK, d))
    if config.init == "gaussian":
        return config.init_scale * rng.standard_normal((CHAIN_BLOCK, d))
    pts = np.asarray(config.init_points, dtype=float)
    if pts.shape[1] != d:
        raise ConfigurationError(f"init_points have dimension {pts.shape[1]}, expected {d}")
    idx = (first_chain + np.arange(CHAIN_BLOCK)) % pts.shape[0]
    return pts[idx].copy()


def _locate_divergence(X, step, theta_index=None):
    norms = np.linalg.norm(X, axis=-1)
    bad = ~np.isfinite(norms) | (norms > DIVERGENCE_NORM)
    if not bad.any():
        return
    where = np.argwhere(bad)[0]
    chain = int(where[-1])
    query = int(where[0]) if X.ndim == 3 else None
    prefix = "" if query is None else f"query {query}, "
    raise SamplerDivergenceError(
        f"Langevin chain diverged ({prefix}chain {chain}, step {step}); "
        "reduce step_size or check grad_x_g", chain=chain, step=step)


def sample_gibbs_many(problem, thetas, config: LangevinConfig,
                      seeds: Sequence[SeedKey]) -> np.ndarray:
    """Advance one set of chains per row of ``thetas`` together.

    Returns an array of shape ``(Q, n_samples, d)``; row ``q`` equals what
    :func:`sample_gibbs` returns for ``(thetas[q], seeds[q])``.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    Q, m = thetas.shape
    if m != problem.upper_dim:
        raise InvalidArgumentError(f"theta dimension {m} != problem upper_dim {problem.upper_dim}")
    if len(seeds) != Q:
        raise InvalidArgumentError("one seed per theta is required")
    d = problem.lower_dim
    C = config.n_chains
    n_blocks = -(-C // CHAIN_BLOCK)
    width = n_blocks * CHAIN_BLOCK
    rngs = [[stream(s, b) for b in range(n_blocks)] for s in seeds]

    X = np.empty((Q, width, d))
    for q in range(Q):
        for b in range(n_blocks):
            X[q, b * CHAIN_BLOCK:(b + 1) * CHAIN_BLOCK] = _initial_states(
                config, rngs[q][b], b * CHAIN_BLOCK, d)

    h, scale = config.step_size, math.sqrt(2.0 * config.lam * config.step_size)
    theta_b = thetas[:, None, :]
    S, spc = config.samples_per_chain, config.steps_per_sample
    out = np.empty((Q, width, S, d))
    total = config.total_steps
    guard = DIVERGENCE_NORM / math.sqrt(d)
    noise = np.empty((min(_NOISE_CHUNK, max(total, 1)), Q, width, d))
    drift = np.empty_like(X)
    step = 0
    while step < total:
        chunk = min(_NOISE_CHUNK, total - step)
        for q in range(Q):
            for b in range(n_blocks):
                noise[:chunk, q, b * CHAIN_BLOCK:(b + 1) * CHAIN_BLOCK] = \
                    rngs[q][b].standard_normal((chunk, CHAIN_BLOCK, d))
        noise[:chunk] *= scale
        for j in range(chunk):
            # In place: large temporaries dominate the cost otherwise.
            np.multiply(problem.grad_x_g(theta_b, X), h, out=drift)
            X -= drift
            X += noise[j]
            step += 1
            if not np.abs(X).max() < guard:
                _locate_divergence(X, step)
            after = step - config.burn_in
            if after > 0 and after % spc == 0:
                out[:, :, after // spc - 1] = X
    return out[:, :C].reshape(Q, C * S, d)


def sample_gibbs(problem, theta, config: LangevinConfig, seed: SeedKey,
                 dump_path: Optional[str] = None) -> GibbsSampleBatch:
    """Draw ``n_chains * samples_per_chain`` approximate Gibbs samples at ``theta``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    samples = sample_gibbs_many(problem, theta[None, :], config, [seed])[0]
    batch = GibbsSampleBatch(samples, theta, config, (_as_key(seed), (0, config.n_chains)))
    if dump_path is not None:
        dump_csv(batch, dump_path)
    return batch


def dump_csv(batch: GibbsSampleBatch, path: str) -> None:
    """Write ``chain,step,x_1..x_d`` rows for a sample batch."""
    cfg = batch.config
    d = batch.samples.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "step"] + [f"x_{i + 1}" for i in range(d)])
        for row, x in enumerate(batch.samples):
            chain, j = divmod(row, cfg.samples_per_chain)
            step = cfg.burn_in + (j + 1) * cfg.steps_per_sample
            w.writerow([chain, step] + [repr(float(v)) for v in x])
