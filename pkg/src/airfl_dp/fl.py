"""Federated learning core: desk-scale tasks, local SGD, clipping, noiseless FedAvg."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConfigError, ParameterError

TASK_KINDS = ("quadratic", "logistic", "small-mlp")


class Task:
    """Per-sample loss ``l(theta; xi)`` with an analytic gradient.

    Losses and gradients are averaged over the rows of ``X``.
    """

    kind = None

    def __init__(self, d):
        self.d = int(d)
        self.test = None

    def loss(self, theta, X, y):
        raise NotImplementedError

    def grad(self, theta, X, y):
        raise NotImplementedError

    def smoothness(self, X, y):
        raise NotImplementedError

    def accuracy(self, theta, X, y):
        return float("nan")


class QuadraticTask(Task):
    """``l(theta; xi) = 0.5 * ||theta - xi||^2``; smooth with L = 1."""

    kind = "quadratic"

    def loss(self, theta, X, y=None):
        diff = theta[None, :] - X
        return 0.5 * float(np.mean(np.einsum("ij,ij->i", diff, diff)))

    def grad(self, theta, X, y=None):
        return theta - X.mean(axis=0)

    def smoothness(self, X, y=None):
        return 1.0


class LogisticTask(Task):
    """Binary logistic loss ``log(1 + exp(-y x.theta))`` with labels in {-1, +1}."""

    kind = "logistic"

    def loss(self, theta, X, y):
        return float(np.mean(np.logaddexp(0.0, -y * (X @ theta))))

    def grad(self, theta, X, y):
        margin = y * (X @ theta)
        weight = -y * _sigmoid(-margin)
        return X.T @ weight / len(y)

    def smoothness(self, X, y):
        return float(np.max(np.einsum("ij,ij->i", X, X))) / 4.0

    def accuracy(self, theta, X, y):
        return float(np.mean(np.sign(X @ theta) == y))


class MLPTask(Task):
    """One hidden tanh layer, scalar logit, logistic loss.

    Parameter layout: ``W1 (h x p) | b1 (h) | w2 (h) | b2``, so
    ``d = h * (p + 2) + 1``.
    """

    kind = "small-mlp"

    def __init__(self, d, hidden=None):
        super().__init__(d)
        if d < 4:
            raise ParameterError("small-mlp needs d >= 4")
        if hidden is None:
            hidden = next(h for h in range(8, 0, -1) if (d - 1) % h == 0 and (d - 1) // h - 2 >= 1)
        elif (d - 1) % hidden or (d - 1) // hidden - 2 < 1:
            raise ParameterError(f"d={d} is not h*(p+2)+1 for hidden={hidden}")
        self.hidden = hidden
        self.inputs = (d - 1) // hidden - 2

    def _unpack(self, theta):
        h, p = self.hidden, self.inputs
        W1 = theta[: h * p].reshape(h, p)
        b1 = theta[h * p : h * p + h]
        w2 = theta[h * p + h : h * p + 2 * h]
        return W1, b1, w2, theta[-1]

    def _forward(self, theta, X):
        W1, b1, w2, b2 = self._unpack(theta)
        a = np.tanh(X @ W1.T + b1)
        return a, a @ w2 + b2

    def loss(self, theta, X, y):
        _, z = self._forward(theta, X)
        return float(np.mean(np.logaddexp(0.0, -y * z)))

    def grad(self, theta, X, y):
        W1, b1, w2, b2 = self._unpack(theta)
        a, z = self._forward(theta, X)
        gz = -y * _sigmoid(-y * z) / len(y)
        ga = np.outer(gz, w2) * (1.0 - a**2)
        return np.concatenate([(ga.T @ X).ravel(), ga.sum(axis=0), a.T @ gz, [gz.sum()]])

    def smoothness(self, X, y, samples=64, seed=0):
        # empirical lower estimate: no closed form for the network
        rng = np.random.default_rng(seed)
        best = 0.0
        for _ in range(samples):
            a = rng.normal(scale=0.5, size=self.d)
            b = a + rng.normal(scale=1e-3, size=self.d)
            ratio = np.linalg.norm(self.grad(a, X, y) - self.grad(b, X, y)) / np.linalg.norm(a - b)
            best = max(best, ratio)
        return float(best)

    def accuracy(self, theta, X, y):
        _, z = self._forward(theta, X)
        return float(np.mean(np.sign(z) == y))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LocalDataset:
    device: int
    X: np.ndarray
    y: np.ndarray
    task: Task

    def __post_init__(self):
        if len(self.X) == 0:
            raise ParameterError(f"device {self.device} has an empty dataset")

    def __len__(self):
        return len(self.X)

    def loss(self, theta):
        return self.task.loss(theta, self.X, self.y)

    def grad(self, theta):
        return self.task.grad(theta, self.X, self.y)


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the convergence/privacy analysis; ``D`` may be ``inf``."""

    L: float
    G: float
    sigma_l: float
    sigma_g: float
    D: float = math.inf
    f_star: float = 0.0

    def __post_init__(self):
        for name in ("L", "G", "sigma_l", "sigma_g", "D"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be nonnegative")


def make_synthetic_task(kind, d, n, rng, samples_per_device=50, test_samples=1000):
    """Build an i.i.d. partition of a synthetic task over ``n`` devices.

    quadratic: samples ``xi ~ N(v, 0.1^2 I)`` around a random unit-norm ``v``.
    logistic / small-mlp: two-component Gaussian mixture with labels in
    {-1, +1}; a held-out set is attached as ``task.test``.
    """
    if d < 1 or n < 1:
        raise ParameterError("need d >= 1 and n >= 1")
    total = samples_per_device * n
    if kind == "quadratic":
        task = QuadraticTask(d)
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        X = v[None, :] + 0.1 * rng.standard_normal((total, d))
        y = np.zeros(total)
    elif kind in ("logistic", "small-mlp"):
        task = LogisticTask(d) if kind == "logistic" else MLPTask(d)
        p = d if kind == "logistic" else task.inputs
        mu = rng.standard_normal(p)
        mu *= 1.5 / np.linalg.norm(mu)

        def draw(count):
            labels = np.where(rng.random(count) < 0.5, -1.0, 1.0)
            return labels[:, None] * mu[None, :] + rng.standard_normal((count, p)), labels

        X, y = draw(total)
        task.test = draw(test_samples)
    else:
        raise ParameterError(f"unknown task kind {kind!r}; expected one of {TASK_KINDS}")
    perm = rng.permutation(total)
    parts = np.array_split(perm, n)
    return [LocalDataset(i, X[idx], y[idx], task) for i, idx in enumerate(parts)]


def global_loss(datasets, theta):
    return float(np.mean([ds.loss(theta) for ds in datasets]))


def global_grad(datasets, theta):
    return np.mean([ds.grad(theta) for ds in datasets], axis=0)


def optimal_loss(datasets):
    """``f*`` exactly for the quadratic task, numerically otherwise."""
    task = datasets[0].task
    if task.kind == "quadratic":
        theta = np.mean([ds.X.mean(axis=0) for ds in datasets], axis=0)
        return global_loss(datasets, theta), theta
    res = optimize.minimize(
        lambda th: global_loss(datasets, th),
        np.zeros(task.d),
        jac=lambda th: global_grad(datasets, th),
        method="L-BFGS-B",
        options={"maxiter": 1000, "gtol": 1e-10, "ftol": 1e-15},
    )
    return float(res.fun), res.x


def bound_constants(datasets, batch, D=math.inf, theta=None):
    """Evaluate analysis constants for a partitioned task.

    ``L`` and ``G`` are per-sample bounds (exact for quadratic and logistic,
    sampled for small-mlp). ``sigma_l`` and ``sigma_g`` are evaluated at
    ``theta`` (default: the origin), not as suprema. ``G`` is infinite for
    the quadratic loss on an unbounded domain.
    """
    task = datasets[0].task
    theta = np.zeros(task.d) if theta is None else theta
    X = np.concatenate([ds.X for ds in datasets])
    y = np.concatenate([ds.y for ds in datasets])
    L = task.smoothness(X, y)
    if task.kind == "quadratic":
        spread = np.max(np.linalg.norm(X - X.mean(axis=0), axis=1))
        G = spread + D if math.isfinite(D) else math.inf
    elif task.kind == "logistic":
        G = float(np.max(np.linalg.norm(X, axis=1)))
    else:
        G = float(max(np.linalg.norm(task.grad(theta, X[i : i + 1], y[i : i + 1])) for i in range(len(X))))
    full = global_grad(datasets, theta)
    var_l, var_g = 0.0, 0.0
    for ds in datasets:
        N = len(ds)
        per = np.stack([task.grad(theta, ds.X[k : k + 1], ds.y[k : k + 1]) for k in range(N)])
        g_i = per.mean(axis=0)
        spread = np.mean(np.sum((per - g_i) ** 2, axis=1))
        fpc = (N - batch) / (N - 1) if N > 1 else 0.0
        var_l = max(var_l, spread / batch * fpc)
        var_g = max(var_g, float(np.sum((g_i - full) ** 2)))
    f_star, _ = optimal_loss(datasets)
    return BoundConstants(L=L, G=G, sigma_l=math.sqrt(var_l), sigma_g=math.sqrt(var_g), D=D, f_star=f_star)


def local_sgd(theta0, data, Q, eta, batch, rng):
    """Run ``Q`` mini-batch SGD steps from ``theta0`` on one device.

    Each step draws a fresh batch uniformly without replacement.
    """
    if Q < 1:
        raise ParameterError("Q must be >= 1")
    if not eta > 0:
        raise ParameterError("eta must be positive")
    if len(data) == 0:
        raise ParameterError("empty dataset")
    if not 1 <= batch <= len(data):
        raise ParameterError(f"batch {batch} not in [1, {len(data)}]")
    theta = np.array(theta0, dtype=float, copy=True)
    for _ in range(Q):
        idx = rng.choice(len(data), size=batch, replace=False)
        theta = theta - eta * data.task.grad(theta, data.X[idx], data.y[idx])
    return theta


def model_diff(theta0, thetaQ, eta):
    theta0 = np.asarray(theta0, dtype=float)
    thetaQ = np.asarray(thetaQ, dtype=float)
    if theta0.shape != thetaQ.shape:
        raise ParameterError(f"shape mismatch {theta0.shape} vs {thetaQ.shape}")
    if not eta > 0:
        raise ParameterError("eta must be positive")
    return (theta0 - thetaQ) / eta


def clip_factor(x, c):
    """``min(1, c/||x||)``, with 1 for the zero vector."""
    norm = float(np.linalg.norm(x))
    return 1.0 if norm <= c else c / norm


def clip(x, c):
    """Scale ``x`` onto the ball of radius ``c`` if it lies outside.

    The returned norm is guaranteed ``<= c`` in floating point.
    """
    if not c > 0:
        raise ParameterError("clipping threshold must be positive")
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm <= c:
        return x.copy()
    out = x * (c / norm)
    while np.linalg.norm(out) > c:
        out = out * (1.0 - 2.0**-52)
    return out


def project_ball(theta, D, center=None):
    """Euclidean projection onto the ball of diameter ``D``; no-op for infinite D."""
    if not math.isfinite(D):
        return theta
    center = np.zeros_like(theta) if center is None else center
    offset = theta - center
    radius = D / 2.0
    norm = float(np.linalg.norm(offset))
    if norm <= radius:
        return theta
    out = offset * (radius / norm)
    while np.linalg.norm(out) > radius:
        out = out * (1.0 - 2.0**-52)
    return center + out


def aggregate_noiseless(updates, theta, eta, rn, D=math.inf):
    """Ideal-channel FedAvg step ``theta - eta/rn * sum(updates)``."""
    if len(updates) == 0:
        raise ParameterError("no updates to aggregate")
    if len(updates) != rn:
        raise ParameterError(f"expected {rn} updates, got {len(updates)}")
    total = np.sum(np.asarray(updates, dtype=float), axis=0)
    return project_ball(np.asarray(theta, dtype=float) - (eta / rn) * total, D)


def active_count(n, r):
    k = round(r * n)
    if not 0 < r <= 1 or abs(k - r * n) > 1e-9 or k < 1:
        raise ConfigError(f"r*n = {r * n} must be a positive integer with r in (0, 1]")
    return k


def sample_active_devices(n, r, rng):
    """Uniform random subset of size ``r*n`` (sorted), without replacement."""
    k = active_count(n, r)
    return np.sort(rng.choice(n, size=k, replace=False))

