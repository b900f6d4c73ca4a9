"""User-level RDP/DP accounting paid by channel noise alone.

Per round the accountant needs three numbers: the privacy cost ``phi_t``,
the contraction factor ``kappa_t`` and the combiner norm ``||w_t||``.  The
cumulative RDP after ``T`` rounds is

    eps'(T) = 2 alpha r c^2 / sigma2 * min(sum_{t<T} phi_t, Phi_T)

where ``Phi_T`` is the bounded-domain saturation term.  ``sigma2`` is always
passed raw together with the noise ``convention``; see :mod:`.aircomp`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .aircomp import alignment, effective_sigma2
from .errors import CDeltaError, ParameterError

DEFAULT_C_DELTA = 8.0


@dataclass(frozen=True)
class PrivacyParams:
    epsilon_target: float
    delta: float
    c_delta: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        if self.alpha is not None and not self.alpha > 1:
            raise ParameterError("Renyi order must exceed 1")

    @property
    def order(self):
        """Renyi order; defaults to ``1 + 2 log(1/delta) / eps``."""
        if self.alpha is not None:
            return self.alpha
        return conversion_order(self.epsilon_target, self.delta)


@dataclass(frozen=True)
class RoundPrivacy:
    phi: float
    kappa: float
    w_norm: float


@dataclass
class PrivacyLedger:
    phi: list
    kappa_max: float
    Phi: float
    rdp_eps: float
    dp_eps: float
    burn_in_round: int | None
    curve: list = field(default_factory=list)


def phi_t(w, H, s):
    """Worst device's squared effective gain over the combiner energy."""
    w = np.asarray(w)
    energy = float(np.vdot(w, w).real)
    if not energy > 0:
        raise ParameterError("combiner must be nonzero")
    gains = np.abs(alignment(w, H) * np.asarray(s)) ** 2
    return float(np.max(gains)) / energy


def kappa_t(w, H, s, eta, L, r, n):
    """``eta L / (rn) * sum_i |w^H h_i s_i|``.

    The moduli are summed: the quantity enters only as a Lipschitz factor of
    the update map, and the triangle inequality that produces it bounds each
    term by its modulus.
    """
    gains = np.abs(alignment(np.asarray(w), np.asarray(H)) * np.asarray(s))
    return float(eta * L / (r * n) * np.sum(gains))


def round_privacy(w, H, s, eta, L, r, n):
    return RoundPrivacy(phi_t(w, H, s), kappa_t(w, H, s, eta, L, r, n), float(np.linalg.norm(w)))


def kappa_max(history, eta, L, r, n):
    """Max over rounds of :func:`kappa_t`; ``history`` holds ``(w, H, s)`` triples."""
    if len(history) == 0:
        raise ParameterError("empty history")
    return max(kappa_t(w, H, s, eta, L, r, n) for w, H, s in history)


def saturation_Phi(phi_last, kappa_max, Q, r, D, n, eta, c, w_last_norm):
    """Bounded-domain cap ``(sqrt(phi) + (1+kappa)^Q sqrt(r) D n / (2 eta c ||w||))^2``.

    Infinite ``D`` returns ``inf``, which turns the bound into the plain sum.
    """
    if math.isinf(D):
        return math.inf
    if min(phi_last, kappa_max, Q, r, D, n, eta, c, w_last_norm) < 0:
        raise ParameterError("saturation inputs must be nonnegative")
    if D == 0:
        return float(phi_last)
    shift = (1.0 + kappa_max) ** Q * math.sqrt(r) * D * n / (2.0 * eta * c * w_last_norm)
    return (math.sqrt(phi_last) + shift) ** 2


def _rdp_coefficient(r, c, sigma2, convention):
    return 2.0 * r * c**2 / effective_sigma2(sigma2, convention)


def rdp_epsilon(sum_phi, Phi, alpha, r, c, sigma2, convention="half"):
    """RDP of order ``alpha`` after the rounds summarized by ``sum_phi``/``Phi``."""
    if not alpha > 1:
        raise ParameterError("Renyi order must exceed 1")
    return alpha * _rdp_coefficient(r, c, sigma2, convention) * min(sum_phi, Phi)


def rdp_to_dp(alpha, rdp_eps, delta):
    """Standard conversion: (alpha, eps')-RDP implies (eps' + log(1/delta)/(alpha-1), delta)-DP."""
    if not alpha > 1:
        raise ParameterError("Renyi order must exceed 1")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    return rdp_eps + math.log(1.0 / delta) / (alpha - 1.0)


def conversion_order(eps, delta):
    """Order ``1 + 2 log(1/delta) / eps`` at which half the DP budget goes to RDP."""
    return 1.0 + 2.0 * math.log(1.0 / delta) / eps


def _dp_closed_form(load, delta, c_delta, r, c, sigma2, convention):
    log_term = math.log(1.0 / delta)
    return math.sqrt((2.0 * c_delta + 8.0) * log_term * r * c**2 / effective_sigma2(sigma2, convention) * load)


def min_admissible_c_delta(load, delta, r, c, sigma2, convention="half"):
    """Smallest ``c_delta`` with ``c_delta >= 4 eps'/log(1/delta)``, ``eps' = eps/2``.

    With ``K = r c^2 load / sigma2_eff`` and ``l = log(1/delta)`` the closed
    form gives ``eps^2 = (2 c_delta + 8) l K``; the consistency condition
    ``c_delta >= 2 eps / l`` is tight at ``eps = 2K + sqrt(4K^2 + 8 l K)``.
    """
    log_term = math.log(1.0 / delta)
    K = r * c**2 / effective_sigma2(sigma2, convention) * load
    eps = 2.0 * K + math.sqrt(4.0 * K**2 + 8.0 * log_term * K)
    return 2.0 * eps / log_term


def resolve_c_delta(load, delta, r, c, sigma2, convention="half", tol=1e-9, max_iter=500):
    """Fixed point ``c_delta = max(8, 4 eps'/log(1/delta))`` starting from 8.

    The map is increasing and concave in ``c_delta`` so the iteration climbs
    monotonically to the smallest admissible value (or stays at 8).
    """
    log_term = math.log(1.0 / delta)
    c_delta = DEFAULT_C_DELTA
    for _ in range(max_iter):
        eps = _dp_closed_form(load, delta, c_delta, r, c, sigma2, convention)
        nxt = max(DEFAULT_C_DELTA, 4.0 * (eps / 2.0) / log_term)
        if abs(nxt - c_delta) <= tol * max(1.0, c_delta):
            return nxt
        c_delta = nxt
    return c_delta


def dp_epsilon(sum_phi, Phi, delta, c_delta, r, c, sigma2, convention="half"):
    """Closed-form user-level (eps, delta)-DP of the run.

    ``c_delta=None`` resolves the slack constant by :func:`resolve_c_delta`.
    An explicit ``c_delta`` below the admissible minimum raises
    :class:`CDeltaError` carrying that minimum.
    """
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    load = min(sum_phi, Phi)
    if c_delta is None:
        c_delta = resolve_c_delta(load, delta, r, c, sigma2, convention)
    eps = _dp_closed_form(load, delta, c_delta, r, c, sigma2, convention)
    log_term = math.log(1.0 / delta)
    if c_delta < 2.0 * eps / log_term * (1.0 - 1e-8):
        need = min_admissible_c_delta(load, delta, r, c, sigma2, convention)
        raise CDeltaError(f"c_delta={c_delta:g} is below the admissible minimum {need:.6g}", need)
    return eps


def privacy_curve(rounds, *, alpha, delta, r, c, sigma2, Q, D, n, eta, c_delta=None, convention="half", T_max=None):
    """Cumulative privacy after each prefix ``T = 1..T_max`` of ``rounds``.

    Returns dicts with ``T, sum_phi, Phi, rdp_eps, dp_eps``.  ``Phi`` is the
    saturation term of the horizon-``T`` run.  The reported losses use the
    running maximum of ``min(sum_phi, Phi)``: when combiner norms vary
    across rounds the per-horizon cap can dip, and the envelope is the
    tightest nondecreasing bound that is still valid at every horizon.
    """
    rounds = list(rounds)
    T_max = len(rounds) if T_max is None else T_max
    if T_max < 1 or T_max > len(rounds):
        raise ParameterError(f"T_max must be in [1, {len(rounds)}]")
    curve = []
    sum_phi, kmax, envelope = 0.0, 0.0, 0.0
    for T in range(1, T_max + 1):
        rp = rounds[T - 1]
        sum_phi += rp.phi
        kmax = max(kmax, rp.kappa)
        Phi = saturation_Phi(rp.phi, kmax, Q, r, D, n, eta, c, rp.w_norm)
        envelope = max(envelope, min(sum_phi, Phi))
        curve.append(
            {
                "T": T,
                "sum_phi": sum_phi,
                "Phi": Phi,
                "rdp_eps": rdp_epsilon(envelope, math.inf, alpha, r, c, sigma2, convention),
                "dp_eps": dp_epsilon(envelope, math.inf, delta, c_delta, r, c, sigma2, convention),
            }
        )
    return curve


def build_ledger(rounds, **kwargs):
    """Run :func:`privacy_curve` and summarize the final horizon."""
    curve = privacy_curve(rounds, **kwargs)
    last = curve[-1]
    burn_in = next((row["T"] for row in curve if row["sum_phi"] >= row["Phi"]), None)
    return PrivacyLedger(
        phi=[rp.phi for rp in rounds[: last["T"]]],
        kappa_max=max(rp.kappa for rp in rounds[: last["T"]]),
        Phi=last["Phi"],
        rdp_eps=last["rdp_eps"],
        dp_eps=last["dp_eps"],
        burn_in_round=burn_in,
        curve=curve,
    )


def knee(phi, Phi):
    """First horizon at which a constant per-round cost reaches the cap."""
    if math.isinf(Phi) or phi <= 0:
        return None
    return max(1, math.ceil(Phi / phi))


CURVE_COLUMNS = ("T", "sum_phi", "Phi", "rdp_eps", "dp_eps")


def write_privacy_curve(curve, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for row in curve:
            writer.writerow([_fmt(row[k]) for k in CURVE_COLUMNS])


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))
