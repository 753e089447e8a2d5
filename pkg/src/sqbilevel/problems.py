"""Concrete bilevel instances: sphere toys, the quartic example, a strongly
convex sanity check and synthetic data hyper-cleaning."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .problem import Ball, BilevelProblem, Box, Sense


@dataclass(frozen=True)
class ToySpec:
    d: int
    k: int
    sense: Sense = Sense.OPTIMISTIC

    def __post_init__(self):
        if self.k < 1 or self.k + 1 > self.d:
            raise InvalidArgumentError(
                f"toy instance needs 1 <= k <= d-1, got d={self.d}, k={self.k}")
        object.__setattr__(self, "sense", Sense(self.sense))


def _toy_f(theta, x):
    t = theta[..., 0]
    return 2.0 * np.linalg.norm(x, axis=-1) + x[..., 0] * np.cos(t) + x[..., 1] * np.sin(t)


def _toy_grad_x_f(theta, x):
    t = theta[..., 0]
    out = 2.0 * x / np.linalg.norm(x, axis=-1, keepdims=True)
    out[..., 0] += np.cos(t)
    out[..., 1] += np.sin(t)
    return out


def _toy_grad_theta_f(theta, x):
    t = theta[..., 0]
    return (-x[..., 0] * np.sin(t) + x[..., 1] * np.cos(t))[..., None]


def make_toy(spec: ToySpec, check_grads: bool = True) -> BilevelProblem:
    """Sphere toy on Theta = [-pi, pi].

    The lower level is ``1/4 (s - theta^2)^2 - s/2 + |x_tail|^2 / 2`` with
    ``s`` the squared norm of the first ``k+1`` coordinates. Its minimisers are
    the k-sphere of radius ``sqrt(1 + theta^2)`` with a zero tail; the
    quadratic tail term keeps the Gibbs density normalisable when ``k+1 < d``.
    """
    d, k = spec.d, spec.k
    head = k + 1

    def g(theta, x):
        t2 = theta[..., 0] ** 2
        s = np.sum(x[..., :head] ** 2, axis=-1)
        val = 0.25 * (s - t2) ** 2 - 0.5 * s
        if head < d:
            val = val + 0.5 * np.sum(x[..., head:] ** 2, axis=-1)
        return val

    def grad_x_g(theta, x):
        t2 = theta[..., 0] ** 2
        if head == d:
            s = np.einsum("...i,...i->...", x, x)
            return (s - t2 - 1.0)[..., None] * x
        xh = x[..., :head]
        s = np.einsum("...i,...i->...", xh, xh)
        out = np.array(np.broadcast_to(x, np.broadcast_shapes(x.shape, theta.shape[:-1] + (d,))))
        out[..., :head] *= (s - t2 - 1.0)[..., None]
        return out

    def grad_theta_g(theta, x):
        t = theta[..., 0]
        s = np.sum(x[..., :head] ** 2, axis=-1)
        return (-t * (s - t ** 2))[..., None]

    def hess_x_g_vec(theta, x, v):
        t2 = theta[..., 0] ** 2
        xh, vh = x[..., :head], v[..., :head]
        s = np.sum(xh ** 2, axis=-1)
        out = np.array(v, dtype=float, copy=True)
        out[..., :head] = (s - t2 - 1.0)[..., None] * vh + \
            2.0 * xh * np.sum(xh * vh, axis=-1, keepdims=True)
        return out

    def mixed_x_g_vec(theta, x, v):
        t = theta[..., 0]
        return (-2.0 * t * np.sum(x[..., :head] * v[..., :head], axis=-1))[..., None]

    if spec.sense is Sense.OPTIMISTIC:
        def hyper(theta):
            return float(np.sqrt(1.0 + np.asarray(theta, dtype=float).ravel()[0] ** 2))
    else:
        def hyper(theta):
            return float(3.0 * np.sqrt(1.0 + np.asarray(theta, dtype=float).ravel()[0] ** 2))

    return BilevelProblem(
        upper_dim=1, lower_dim=d, f=_toy_f, g=g, grad_x_g=grad_x_g,
        domain=Box([-np.pi], [np.pi]), sense=spec.sense,
        grad_theta_f=_toy_grad_theta_f, grad_x_f=_toy_grad_x_f, grad_theta_g=grad_theta_g,
        hess_x_g_vec=hess_x_g_vec, mixed_x_g_vec=mixed_x_g_vec,
        lower_value=lambda theta: -0.25 - 0.5 * np.asarray(theta)[..., 0] ** 2,
        grad_lower_value=lambda theta: -np.asarray(theta, dtype=float),
        closed_form_hyper=hyper, theta_star=np.zeros(1),
        name=f"toy_d{d}_k{k}_{spec.sense.value}", check_grads=check_grads,
        lower_smoothness=2.0 * (1.0 + np.pi ** 2))


def toy_manifold_points(spec: ToySpec, theta: float, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Quasi-uniform points on the lower-level solution sphere at ``theta``."""
    z = rng.standard_normal((n, spec.k + 1))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    out = np.zeros((n, spec.d))
    out[:, :spec.k + 1] = np.sqrt(1.0 + theta ** 2) * z
    return out


def make_quartic_sphere(d: int = 2, check_grads: bool = True) -> BilevelProblem:
    """Quartic lower level ``1/4 (|x|^2 - theta)^2 - |x|^2 / 2`` on Theta = [0, 1].

    Minimisers lie on ``|x|^2 = theta + 1``; the upper level reuses the toy
    objective ``2|x| + <x, (cos theta, sin theta, 0, ...)>``.
    """
    if d < 2:
        raise InvalidArgumentError("example needs d >= 2")

    def g(theta, x):
        s = np.sum(x ** 2, axis=-1)
        return 0.25 * (s - theta[..., 0]) ** 2 - 0.5 * s

    def grad_x_g(theta, x):
        s = np.einsum("...i,...i->...", x, x)
        return (s - theta[..., 0] - 1.0)[..., None] * x

    def grad_theta_g(theta, x):
        s = np.sum(x ** 2, axis=-1)
        return (-0.5 * (s - theta[..., 0]))[..., None]

    return BilevelProblem(
        upper_dim=1, lower_dim=d, f=_toy_f, g=g, grad_x_g=grad_x_g,
        domain=Box([0.0], [1.0]), sense=Sense.PESSIMISTIC,
        grad_theta_f=_toy_grad_theta_f, grad_x_f=_toy_grad_x_f, grad_theta_g=grad_theta_g,
        lower_value=lambda theta: -0.25 - 0.5 * np.asarray(theta)[..., 0],
        grad_lower_value=lambda theta: -0.5 * np.ones_like(np.asarray(theta, dtype=float)),
        closed_form_hyper=lambda th: float(3.0 * np.sqrt(1.0 + np.ravel(th)[0])),
        name="quartic_sphere", check_grads=check_grads, lower_smoothness=4.0)


def make_quadratic(d: int = 2, bound: float = 2.0, sense: Sense = Sense.OPTIMISTIC,
                   check_grads: bool = True) -> BilevelProblem:
    """``g = |x - theta 1|^2 / 2`` and ``f = |x|^2``: singleton lower level, theta* = 0."""
    def f(theta, x):
        return np.sum(x ** 2, axis=-1) + 0.0 * theta[..., 0]

    def g(theta, x):
        return 0.5 * np.sum((x - theta) ** 2, axis=-1)

    def grad_x_g(theta, x):
        return x - theta

    return BilevelProblem(
        upper_dim=1, lower_dim=d, f=f, g=g, grad_x_g=grad_x_g,
        domain=Box([-bound], [bound]), sense=sense,
        grad_theta_f=lambda theta, x: np.zeros(np.broadcast_shapes(
            theta.shape[:-1], x.shape[:-1]) + (1,)),
        grad_x_f=lambda theta, x: 2.0 * x + 0.0 * theta,
        grad_theta_g=lambda theta, x: -np.sum(x - theta, axis=-1, keepdims=True),
        hess_x_g_vec=lambda theta, x, v: np.array(v, dtype=float, copy=True),
        mixed_x_g_vec=lambda theta, x, v: -np.sum(v, axis=-1, keepdims=True) + 0.0 * theta,
        lower_value=lambda theta: np.zeros(np.asarray(theta).shape[:-1]),
        grad_lower_value=lambda theta: np.zeros_like(np.asarray(theta, dtype=float)),
        closed_form_hyper=lambda th: float(d * np.ravel(th)[0] ** 2),
        theta_star=np.zeros(1), name=f"quadratic_d{d}", check_grads=check_grads,
        lower_smoothness=1.0)


def make_gaussian(d: int = 3, check_grads: bool = True) -> BilevelProblem:
    """``g = |x|^2 / 2`` (Gibbs measure N(0, lambda I)) with ``f = <x, 1> + theta^2``."""
    def f(theta, x):
        return np.sum(x, axis=-1) + theta[..., 0] ** 2

    return BilevelProblem(
        upper_dim=1, lower_dim=d, f=f, g=lambda theta, x: 0.5 * np.sum(x ** 2, axis=-1) +
        0.0 * theta[..., 0], grad_x_g=lambda theta, x: x + 0.0 * theta[..., :1],
        domain=Box([-1.0], [1.0]), sense=Sense.PESSIMISTIC,
        lower_value=lambda theta: np.zeros(np.asarray(theta).shape[:-1]),
        name=f"gaussian_d{d}", check_grads=check_grads, lower_smoothness=1.0)


# ---------------------------------------------------------------- hyper-cleaning


@dataclass(frozen=True)
class HypercleanSpec:
    n_train: int = 500
    n_val: int = 50
    n_test: int = 1000
    pollute_rate: float = 0.4
    feature_dim: int = 10
    ridge: float = 0.01
    weight_bound: float = 10.0
    data_seed: int = 0
    separation: float = 1.5

    def __post_init__(self):
        if self.n_train < 1 or self.n_val < 10 or self.n_test < 1 or self.feature_dim < 1:
            raise ConfigurationError(
                "hyper-cleaning needs n_train >= 1, n_val >= 10, n_test >= 1, feature_dim >= 1")
        if not 0.0 <= self.pollute_rate < 1.0:
            raise ConfigurationError(f"pollute_rate must lie in [0, 1), got {self.pollute_rate}")
        if not (self.ridge > 0 and self.weight_bound > 0):
            raise ConfigurationError("ridge and weight_bound must be positive")


@dataclass
class HypercleanData:
    spec: HypercleanSpec
    X_train: np.ndarray
    y_train: np.ndarray
    y_train_clean: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray

    @property
    def corrupted(self) -> np.ndarray:
        return self.y_train != self.y_train_clean


def _with_bias(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def generate_hyperclean_data(spec: HypercleanSpec) -> HypercleanData:
    """Two-class Gaussian mixture with a flipped fraction of training labels."""
    rng = np.random.default_rng(spec.data_seed)
    mean = np.zeros(spec.feature_dim)
    mean[0] = spec.separation / 2.0

    def draw(n):
        y = rng.integers(0, 2, size=n)
        X = rng.standard_normal((n, spec.feature_dim)) + np.where(y[:, None] == 1, mean, -mean)
        return X, y

    X_tr, y_clean = draw(spec.n_train)
    X_val, y_val = draw(spec.n_val)
    X_te, y_te = draw(spec.n_test)
    n_flip = int(round(spec.pollute_rate * spec.n_train))
    flip = rng.choice(spec.n_train, size=n_flip, replace=False)
    y_tr = y_clean.copy()
    y_tr[flip] = 1 - y_tr[flip]
    return HypercleanData(spec, X_tr, y_tr, y_clean, X_val, y_val, X_te, y_te)


def write_hyperclean_files(data: HypercleanData, out_dir: str) -> dict:
    """Persist splits as ``split,label,feat_1..feat_q`` CSV plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    q = data.spec.feature_dim
    paths = {}
    header = "split,label," + ",".join(f"feat_{i + 1}" for i in range(q)) + "\n"
    for split, X, y in (("train", data.X_train, data.y_train), ("val", data.X_val, data.y_val),
                        ("test", data.X_test, data.y_test)):
        path = os.path.join(out_dir, f"{split}.csv")
        with open(path, "w") as fh:
            fh.write(header)
            for label, row in zip(y, X):
                fh.write(f"{split},{int(label)}," + ",".join(repr(float(v)) for v in row) + "\n")
        paths[split] = path
    manifest = dict(asdict(data.spec), n_corrupted=int(data.corrupted.sum()),
                    files={k: os.path.basename(v) for k, v in paths.items()})
    mpath = os.path.join(out_dir, "manifest.json")
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    paths["manifest"] = mpath
    return paths


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def nll(x, X, y):
    """Mean logistic negative log-likelihood; ``x`` may carry leading batch axes."""
    z = x[..., :-1] @ X.T + x[..., -1:]
    sign = 2.0 * y - 1.0
    return -np.mean(_log_sigmoid(sign * z), axis=-1)


def make_hyperclean(spec: HypercleanSpec, out_dir: Optional[str] = None,
                    check_grads: bool = True):
    """Hyper-cleaning instance with per-example weights ``sigmoid(theta_i)``.

    Returns ``(problem, data, paths)``; ``paths`` is empty unless ``out_dir`` is
    given. The lower variable is the logistic model ``[w, b]``.
    """
    data = generate_hyperclean_data(spec)
    paths = write_hyperclean_files(data, out_dir) if out_dir is not None else {}
    Xtr, ytr = data.X_train, data.y_train
    Xb = _with_bias(Xtr)
    sign_tr = 2.0 * ytr - 1.0
    n, eta = spec.n_train, spec.ridge

    def f(theta, x):
        out = nll(x, data.X_val, data.y_val)
        return out + 0.0 * theta[..., 0]

    def _margins(x):
        return sign_tr * (x[..., :-1] @ Xtr.T + x[..., -1:])

    def g(theta, x):
        w = _sigmoid(theta)
        return -np.sum(w * _log_sigmoid(_margins(x)), axis=-1) / n + \
            0.5 * eta * np.sum(x ** 2, axis=-1)

    def grad_x_g(theta, x):
        w = _sigmoid(theta)
        coeff = -w * _sigmoid(-_margins(x)) * sign_tr / n
        return coeff @ Xb + eta * x

    def grad_theta_g(theta, x):
        s = _sigmoid(theta)
        return -s * (1.0 - s) * _log_sigmoid(_margins(x)) / n

    def grad_x_f(theta, x):
        Xv = data.X_val
        sv = 2.0 * data.y_val - 1.0
        m = sv * (x[..., :-1] @ Xv.T + x[..., -1:])
        coeff = -_sigmoid(-m) * sv / len(sv)
        return coeff @ _with_bias(Xv) + 0.0 * theta[..., :1]

    problem = BilevelProblem(
        upper_dim=n, lower_dim=spec.feature_dim + 1, f=f, g=g, grad_x_g=grad_x_g,
        domain=Ball(np.zeros(n), spec.weight_bound), sense=Sense.OPTIMISTIC,
        grad_x_f=grad_x_f, grad_theta_g=grad_theta_g,
        grad_theta_f=lambda theta, x: np.zeros(np.broadcast_shapes(
            theta.shape[:-1], x.shape[:-1]) + (n,)),
        name="hyperclean", check_grads=check_grads, grad_check_points=2, x_scale=0.3,
        lower_smoothness=0.25 * np.linalg.norm(Xb, 2) ** 2 / n + eta)
    return problem, data, paths


def fit_lower(problem: BilevelProblem, theta, x0=None, iters: int = 500) -> np.ndarray:
    """Minimise ``g(theta, .)`` with L-BFGS (smooth strongly convex lower levels)."""
    from scipy.optimize import minimize

    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x0 = np.zeros(problem.lower_dim) if x0 is None else np.asarray(x0, dtype=float)
    res = minimize(lambda x: float(problem.g(theta, x)), x0,
                   jac=lambda x: problem.grad_x_g(theta, x), method="L-BFGS-B",
                   options={"maxiter": iters, "gtol": 1e-10})
    return res.x


def accuracy(x, X, y) -> float:
    z = X @ x[:-1] + x[-1]
    return float(np.mean((z > 0).astype(int) == y))


def cleaner_f1(theta, data: HypercleanData) -> float:
    """F1 of flagging the top (1-p) fraction by weight as clean."""
    p = data.spec.pollute_rate
    n = len(theta)
    n_clean = int(round((1.0 - p) * n))
    order = np.argsort(-np.asarray(theta), kind="stable")
    pred_clean = np.zeros(n, dtype=bool)
    pred_clean[order[:n_clean]] = True
    truth = ~data.corrupted
    tp = np.sum(pred_clean & truth)
    fp = np.sum(pred_clean & ~truth)
    fn = np.sum(~pred_clean & truth)
    if tp == 0:
        return 0.0
    prec, rec = tp / (tp + fp), tp / (tp + fn)
    return float(2 * prec * rec / (prec + rec))
