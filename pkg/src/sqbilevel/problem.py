"""Bilevel problem container, upper-level domains and the gradient mapping.

Every evaluation callable on :class:`BilevelProblem` is vectorised: ``theta``
has shape ``(..., m)``, ``x`` has shape ``(..., d)`` and the leading axes
broadcast against each other. Scalars come back with the broadcast leading
shape, gradients with an extra trailing axis.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError

Array = np.ndarray


class Sense(str, enum.Enum):
    PESSIMISTIC = "pessimistic"
    OPTIMISTIC = "optimistic"


def _as_vector(point, dim: int, what: str = "point") -> Array:
    arr = np.asarray(point, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise InvalidArgumentError(
            f"{what} has trailing dimension {arr.shape[-1]}, domain expects {dim}")
    return arr


@dataclass(frozen=True)
class Box:
    lo: Array
    hi: Array

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("Box bounds must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise InvalidArgumentError(f"Box requires lo < hi componentwise, got {lo} / {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def project(self, point) -> Array:
        return np.clip(_as_vector(point, self.dim), self.lo, self.hi)

    def contains(self, point, tol: float = 0.0) -> bool:
        p = _as_vector(point, self.dim)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def shrink(self, rho: float) -> "Box":
        width = self.hi - self.lo
        if not np.all(width > 2 * rho):
            raise ConfigurationError(
                f"interiorizing Box(lo={self.lo.tolist()}, hi={self.hi.tolist()}) by "
                f"rho={rho} is empty: every side needs width > 2*rho, smallest width is "
                f"{width.min()}")
        return Box(self.lo + rho, self.hi - rho)

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> Array:
        shape = (self.dim,) if n is None else (n, self.dim)
        return rng.uniform(self.lo, self.hi, size=shape)


@dataclass(frozen=True)
class Ball:
    center: Array
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if c.ndim != 1:
            raise InvalidArgumentError("Ball center must be a 1-D array")
        if not self.radius > 0:
            raise InvalidArgumentError(f"Ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def project(self, point) -> Array:
        p = _as_vector(point, self.dim)
        diff = p - self.center
        norm = np.linalg.norm(diff, axis=-1, keepdims=True)
        scale = np.where(norm > self.radius, self.radius / np.maximum(norm, 1e-300), 1.0)
        return self.center + diff * scale

    def contains(self, point, tol: float = 0.0) -> bool:
        p = _as_vector(point, self.dim)
        return bool(np.all(np.linalg.norm(p - self.center, axis=-1) <= self.radius + tol))

    def shrink(self, rho: float) -> "Ball":
        if not self.radius > rho:
            raise ConfigurationError(
                f"interiorizing Ball(radius={self.radius}) by rho={rho} is empty: "
                "radius must exceed rho")
        return Ball(self.center, self.radius - rho)

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> Array:
        k = 1 if n is None else n
        direction = rng.standard_normal((k, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(size=(k, 1)) ** (1.0 / self.dim)
        out = self.center + radii * direction
        return out[0] if n is None else out


UpperDomain = Union[Box, Ball]


@dataclass(frozen=True)
class InteriorizedDomain:
    """The set of points whose closed rho-ball stays inside ``base``."""

    base: UpperDomain
    margin: float
    domain: UpperDomain = field(init=False)

    def __post_init__(self):
        if self.margin < 0:
            raise InvalidArgumentError(f"margin must be nonnegative, got {self.margin}")
        object.__setattr__(self, "domain", self.base.shrink(self.margin))

    @property
    def dim(self) -> int:
        return self.base.dim

    def project(self, point) -> Array:
        return self.domain.project(point)

    def contains(self, point, tol: float = 0.0) -> bool:
        return self.domain.contains(point, tol)

    def sample(self, rng, n=None):
        return self.domain.sample(rng, n)


def project(domain, point) -> Array:
    """Euclidean projection of ``point`` onto ``domain``."""
    return domain.project(point)


def interiorize(domain: UpperDomain, rho: float) -> InteriorizedDomain:
    return InteriorizedDomain(domain, float(rho))


def gradient_mapping(domain, theta, g_vec, eta: float) -> Array:
    """Projected-step residual ``(theta - Proj(theta - eta * g)) / eta``."""
    if not eta > 0:
        raise InvalidArgumentError(f"eta must be positive, got {eta}")
    theta = _as_vector(theta, domain.dim, "theta")
    g_vec = _as_vector(g_vec, domain.dim, "g_vec")
    return (theta - domain.project(theta - eta * g_vec)) / eta


ScalarFn = Callable[[Array, Array], Array]
VectorFn = Callable[[Array, Array], Array]


@dataclass(frozen=True)
class BilevelProblem:
    """Upper objective ``f``, lower objective ``g`` and the data the solvers need.

    ``lower_value``/``grad_lower_value`` give ``min_x g(theta, x)`` and its
    theta-gradient when known in closed form (used by the value-penalty
    baseline). ``hess_x_g_vec(theta, x, v)`` and ``mixed_x_g_vec(theta, x, v)``
    return ``(d^2_xx g) v`` and ``(d_theta grad_x g)^T v``; finite differences
    of ``grad_x_g`` are used when they are missing. ``lower_smoothness``
    bounds the x-curvature of ``g`` near the solution set over the domain and
    feeds the Langevin step-size check.
    """

    upper_dim: int
    lower_dim: int
    f: ScalarFn
    g: ScalarFn
    grad_x_g: VectorFn
    domain: UpperDomain
    sense: Sense = Sense.PESSIMISTIC
    grad_theta_f: Optional[VectorFn] = None
    grad_x_f: Optional[VectorFn] = None
    grad_theta_g: Optional[VectorFn] = None
    hess_x_g_vec: Optional[Callable] = None
    mixed_x_g_vec: Optional[Callable] = None
    lower_value: Optional[Callable[[Array], Array]] = None
    grad_lower_value: Optional[Callable[[Array], Array]] = None
    closed_form_hyper: Optional[Callable[[Array], float]] = None
    theta_star: Optional[Array] = None
    name: str = "problem"
    check_grads: bool = True
    grad_check_points: int = 8
    x_scale: float = 1.0
    lower_smoothness: Optional[float] = None

    def __post_init__(self):
        if self.upper_dim < 1 or self.lower_dim < 1:
            raise InvalidArgumentError("upper_dim and lower_dim must be positive")
        if self.domain.dim != self.upper_dim:
            raise InvalidArgumentError(
                f"domain dimension {self.domain.dim} != upper_dim {self.upper_dim}")
        object.__setattr__(self, "sense", Sense(self.sense))
        if self.theta_star is not None:
            object.__setattr__(self, "theta_star",
                               _as_vector(self.theta_star, self.upper_dim, "theta_star"))
        if self.check_grads:
            check_gradients(self, n_points=self.grad_check_points)


def _fd_grad(fun, theta, x, wrt: str, h: float = 1e-6) -> Array:
    base = theta if wrt == "theta" else x
    out = np.empty(base.shape[-1])
    for i in range(base.shape[-1]):
        e = np.zeros_like(base)
        e[i] = h * (1.0 + abs(base[i]))
        step = e[i]
        if wrt == "theta":
            out[i] = (fun(theta + e, x) - fun(theta - e, x)) / (2 * step)
        else:
            out[i] = (fun(theta, x + e) - fun(theta, x - e)) / (2 * step)
    return out


def check_gradients(problem: BilevelProblem, n_points: int = 8, rtol: float = 1e-5,
                    seed: int = 20240601) -> None:
    """Compare every supplied gradient against central differences.

    Raises :class:`ConfigurationError` naming the first mismatching gradient.
    """
    rng = np.random.default_rng(seed)
    pairs = [("grad_x_g", problem.g, "x"), ("grad_x_f", problem.f, "x"),
             ("grad_theta_f", problem.f, "theta"), ("grad_theta_g", problem.g, "theta")]
    for _ in range(n_points):
        theta = np.atleast_1d(problem.domain.sample(rng))
        x = problem.x_scale * (1.0 + 0.5 * rng.standard_normal(problem.lower_dim))
        for name, fun, wrt in pairs:
            grad_fn = getattr(problem, name)
            if grad_fn is None:
                continue
            exact = np.asarray(grad_fn(theta, x), dtype=float)
            approx = _fd_grad(fun, theta, x, wrt)
            err = np.linalg.norm(exact - approx)
            if err > rtol * max(1.0, np.linalg.norm(approx)) + 1e-7:
                raise ConfigurationError(
                    f"{problem.name}: {name} disagrees with finite differences "
                    f"(abs err {err:.3e}) at theta={theta}, x={x}")
