"""DP-constrained receive beamforming.

Pipeline per horizon: a zero-forcing combiner per round gives the smallest
feasible norm ``pi_t``; the privacy target fixes a budget ``A`` on
``sum_t 1/||w_t||^2``; the norm allocation ``q_t = max(pi_t, mu^(1/4))``
(with ``mu`` found by bisection) is then applied by rescaling each ZF
combiner.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .aircomp import effective_sigma2
from .channel import gram_solve
from .errors import ConfigError, NumericalError, ParameterError

BISECTION_RTOL = 1e-10
BISECTION_MAX_ITER = 200


@dataclass(frozen=True)
class ZfSolution:
    round: int
    w_zf: np.ndarray
    pi: float
    gain_norm: float  # ||H (H^H H)^{-1} u||, so pi = c/sqrt(dP) * gain_norm
    target: float  # common alignment magnitude c/sqrt(dP)
    d: int
    P: float


@dataclass(frozen=True)
class PrivacyBudget:
    A: float
    eps: float
    delta: float
    c_delta: float
    r: float
    c: float
    sigma2: float
    convention: str = "half"

    def __post_init__(self):
        if not self.A > 0:
            raise ParameterError("privacy budget must be positive")


@dataclass(frozen=True)
class AllocationSolution:
    q: np.ndarray
    mu_star: float
    scaled: bool
    iterations: int = 0

    @property
    def sum_inv_q2(self):
        return float(np.sum(1.0 / self.q**2))

    @property
    def objective(self):
        return float(np.sum(self.q**2))


@dataclass(frozen=True)
class PerkResult:
    perk: bool
    margin: float  # (A - sum 1/pi^2) / A; >= 0 in the perk regime
    snr: float
    snr_threshold: float

    def __bool__(self):
        return self.perk


def zf_combiner(H, c, d, P, u=None, round=0):
    """Minimum-norm combiner with ``|w^H h_i| = c / sqrt(dP)`` for every column.

    ``w = c/sqrt(dP) * H (H^H H)^{-1} u``, ``u`` defaults to all ones.
    """
    H = np.asarray(H)
    m, k = H.shape
    if m < k:
        raise ConfigError(f"zero forcing needs m >= rn, got m={m}, rn={k}")
    if min(c, d, P) <= 0:
        raise ParameterError("c, d and P must be positive")
    if u is None:
        u = np.ones(k, dtype=complex)
    else:
        u = np.asarray(u, dtype=complex)
        if not np.allclose(np.abs(u), 1.0, rtol=0, atol=1e-12):
            raise ParameterError("u must have unit-modulus entries")
    g = H @ gram_solve(H, u)
    target = c / math.sqrt(d * P)
    gain_norm = float(np.linalg.norm(g))
    return ZfSolution(int(round), target * g, target * gain_norm, gain_norm, target, int(d), float(P))


def privacy_budget_A(eps, delta, c_delta, r, c, sigma2, convention="half"):
    """``A = eps^2 sigma2 / ((2 c_delta + 8) log(1/delta) r c^2)``."""
    if min(eps, c_delta, r, c, sigma2) <= 0:
        raise ParameterError("privacy budget inputs must be positive")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    s2 = effective_sigma2(sigma2, convention)
    A = eps**2 * s2 / ((2.0 * c_delta + 8.0) * math.log(1.0 / delta) * r * c**2)
    return PrivacyBudget(A, eps, delta, c_delta, r, c, sigma2, convention)


def sum_inv_sq(pi):
    return float(np.sum(1.0 / np.asarray(pi, dtype=float) ** 2))


def perk_condition(zf, budget):
    """Whether the plain ZF design already meets the privacy budget.

    Evaluates ``sum_t 1/pi_t^2 <= A`` and the equivalent SNR form
    ``P/sigma2 <= eps^2 / ((2 c_delta + 8) log(1/delta) r d h_eff)``; raises
    :class:`NumericalError` if they disagree away from the boundary.
    """
    if len(zf) == 0:
        raise ParameterError("need at least one round")
    P, d = zf[0].P, zf[0].d
    if any(z.P != P or z.d != d for z in zf):
        raise ParameterError("all rounds must share P and d")
    load = sum_inv_sq([z.pi for z in zf])
    perk = load <= budget.A
    h_eff = float(sum(1.0 / z.gain_norm**2 for z in zf))
    s2 = effective_sigma2(budget.sigma2, budget.convention)
    snr = P / s2
    threshold = budget.eps**2 / ((2.0 * budget.c_delta + 8.0) * math.log(1.0 / budget.delta) * budget.r * d * h_eff)
    snr_perk = snr <= threshold
    if snr_perk != perk and abs(snr - threshold) > 1e-9 * threshold:
        raise NumericalError(f"perk forms disagree: load={load:.6e}, A={budget.A:.6e}, snr={snr:.6e}, thr={threshold:.6e}")
    return PerkResult(perk, (budget.A - load) / budget.A, snr, threshold)


def _h(mu, pi):
    return float(np.sum(1.0 / np.maximum(pi, mu**0.25) ** 2))


def solve_allocation(pi, A):
    """Optimal norms for ``min sum q_t^2`` s.t. ``q_t >= pi_t``, ``sum 1/q_t^2 <= A``.

    Bisection on ``h(mu) = sum 1/max(pi_t, mu^(1/4))^2`` over
    ``[0, 1.1 max(max pi^4, (T/A)^2)]``.  The returned ``mu`` is the upper end
    of the final bracket, so the budget is never exceeded.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size == 0 or np.any(pi <= 0) or not A > 0:
        raise ParameterError("need positive norms and a positive budget")
    if sum_inv_sq(pi) <= A:
        return AllocationSolution(pi.copy(), 0.0, False, 0)
    T = pi.size
    lo, hi = 0.0, 1.1 * max(float(np.max(pi)) ** 4, (T / A) ** 2)
    if not _h(hi, pi) < A:
        raise NumericalError("bisection bracket does not enclose the root")
    it = 0
    while A - _h(hi, pi) > BISECTION_RTOL * A and it < BISECTION_MAX_ITER:
        mid = 0.5 * (lo + hi)
        if _h(mid, pi) > A:
            lo = mid
        else:
            hi = mid
        it += 1
    q = np.maximum(pi, hi**0.25)
    return AllocationSolution(q, hi, True, it)


def online_allocation(pi, A):
    """Causal fallback: each of the ``T`` rounds gets budget ``A/T`` (not optimal)."""
    pi = np.asarray(pi, dtype=float)
    floor = math.sqrt(pi.size / A)
    q = np.maximum(pi, floor)
    return AllocationSolution(q, 0.0, bool(np.any(q > pi)), 0)


def optimal_combiners(zf, alloc):
    """Rescale each ZF combiner to its allocated norm ``q_t``."""
    if len(zf) != len(alloc.q):
        raise ParameterError("allocation and ZF lists differ in length")
    if not alloc.scaled:
        return [z.w_zf for z in zf]
    return [(q / z.pi) * z.w_zf for z, q in zip(zf, alloc.q)]


def _project_capped(y, lo, hi, total):
    """Euclidean projection onto ``{x : lo <= x <= hi, sum x <= total}``.

    Exact: the shift ``tau`` in ``clip(y - tau, lo, hi)`` is located between
    sorted breakpoints of the piecewise-linear sum.
    """
    x = np.clip(y, lo, hi)
    if x.sum() <= total:
        return x
    points = np.unique(np.concatenate([y - lo, y - hi]))

    def mass(tau):
        return np.clip(y - tau, lo, hi).sum()

    k = np.searchsorted(-np.array([mass(p) for p in points]), -total)
    # mass is nonincreasing in tau; find the segment [points[k-1], points[k]]
    k = min(max(k, 1), len(points) - 1)
    a, b = points[k - 1], points[k]
    ma, mb = mass(a), mass(b)
    tau = a if ma == mb else a + (ma - total) * (b - a) / (ma - mb)
    return np.clip(y - tau, lo, hi)


def _duality_gap(x, g, lo, hi, total):
    """Frank-Wolfe gap ``max_z g.(x - z)`` over the capped simplex; bounds ``f(x) - f*``."""
    z = np.full_like(x, lo)
    room = total - z.sum()
    for i in np.argsort(g):
        if g[i] >= 0 or room <= 0:
            break
        z[i] += min(hi[i] - lo, room)
        room -= z[i] - lo
    return float(g @ (x - z))


def oracle_allocation(pi, A, tol=1e-6, max_iter=50000):
    """Projected-gradient reference solver for the norm allocation.

    Works on ``x_t = 1/q_t^2`` where the problem is ``min sum 1/x_t`` over
    ``{x_t <= 1/pi_t^2, sum x_t <= A}`` (convex, polyhedral feasible set).
    Stops once the Frank-Wolfe duality gap certifies a relative objective
    error below ``tol``.  Shares no code path with :func:`solve_allocation`.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.size > 8:
        raise ParameterError("oracle is for desk-scale horizons (T <= 8)")
    hi = 1.0 / pi**2
    if hi.sum() <= A:
        return AllocationSolution(pi.copy(), 0.0, False, 0)
    lo = 1e-9 * A / pi.size
    x = _project_capped(np.full(pi.size, A / pi.size), lo, hi, A)
    obj = np.sum(1.0 / x)
    step = 1.0 / np.max(2.0 / x**3)
    for it in range(1, max_iter + 1):
        g = -1.0 / x**2
        if _duality_gap(x, g, lo, hi, A) <= tol * obj:
            break
        while True:
            x_new = _project_capped(x - step * g, lo, hi, A)
            obj_new = np.sum(1.0 / x_new)
            # Armijo on the projection arc
            if obj_new <= obj + g @ (x_new - x) + np.sum((x_new - x) ** 2) / (2 * step) or step < 1e-300:
                break
            step *= 0.5
        x, obj = x_new, obj_new
        step *= 2.0
    else:
        raise NumericalError("oracle allocation did not converge")
    q = 1.0 / np.sqrt(x)
    return AllocationSolution(q, float("nan"), True, it)


ALLOCATION_COLUMNS = ("t", "pi_t", "q_t", "scaled", "mu_star", "A", "sum_inv_q2")


def write_allocation(zf, alloc, budget, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ALLOCATION_COLUMNS)
        total = alloc.sum_inv_q2
        for z, q in zip(zf, alloc.q):
            writer.writerow([z.round, repr(z.pi), repr(float(q)), int(alloc.scaled), repr(alloc.mu_star), repr(budget.A), repr(total)])
