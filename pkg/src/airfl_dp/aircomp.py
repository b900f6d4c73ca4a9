"""Analog uplink: power scaling, over-the-air superposition, combining, noisy update.

Model differences are real, so the receiver keeps ``Re(w^H y_j)``.  Under the
``half`` convention the receiver noise is CN(0, sigma2 I) and the effective
real noise per coordinate has variance ``||w||^2 sigma2 / 2``.  Under
``full`` the receiver noise is drawn as CN(0, 2 sigma2 I) so the effective
variance is ``||w||^2 sigma2``, which is the bookkeeping the analytic bounds
are written in.  Privacy and MSE formulas use :func:`effective_sigma2`, so
one switch keeps simulation and accounting consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import sample_cscg
from .errors import DegenerateChannelError, InfeasibleError, ParameterError
from .fl import project_ball

CONVENTIONS = ("half", "full")


def noise_factor(convention):
    if convention == "half":
        return 0.5
    if convention == "full":
        return 1.0
    raise ParameterError(f"unknown noise convention {convention!r}; expected one of {CONVENTIONS}")


def effective_sigma2(sigma2, convention="half"):
    """Real-noise variance per unit combiner energy seen by the model update."""
    return noise_factor(convention) * sigma2


def alignment(w, H):
    """Effective gains ``w^H h_i`` for every column of ``H``."""
    return np.conj(w) @ H


@dataclass(frozen=True)
class AggregateEstimate:
    delta_hat: np.ndarray
    misalignment: float
    noise_power: float
    convention: str = "half"

    @property
    def expected_mse(self):
        """``Lambda + d ||w||^2 sigma2 * factor``: the exact MSE given the updates."""
        return self.misalignment + noise_factor(self.convention) * self.noise_power


def channel_inversion_scaling(w, H, c=None, d=None, P=None, rtol=1e-12):
    """Power scaling ``s_i = 1 / (w^H h_i)`` aligning every device to unit gain.

    When ``c``, ``d`` and ``P`` are given the power constraint
    ``c^2 |s_i|^2 <= d P`` is audited and the first violating device raises
    :class:`InfeasibleError`.
    """
    a = alignment(np.asarray(w), np.asarray(H))
    scale = np.linalg.norm(w) * np.linalg.norm(H, axis=0)
    dead = np.abs(a) <= 1e-14 * np.where(scale > 0, scale, 1.0)
    if np.any(dead):
        i = int(np.flatnonzero(dead)[0])
        raise DegenerateChannelError(f"combiner is orthogonal to the channel of device {i}", device=i)
    s = 1.0 / a
    if c is not None:
        power_audit(s, c, d, P, rtol=rtol)
    return s


def power_audit(s, c, d, P, rtol=1e-12):
    """Raise :class:`InfeasibleError` if any ``c^2 |s_i|^2`` exceeds ``d P``."""
    budget = d * P
    used = c**2 * np.abs(s) ** 2
    bad = np.flatnonzero(used > budget + rtol * max(1.0, budget))
    if bad.size:
        i = int(bad[0])
        raise InfeasibleError(
            f"device {i} needs c^2|s|^2 = {used[i]:.6g} > dP = {budget:.6g}", device=i
        )
    return used


def estimation_error_stats(updates, s, H, w, sigma2):
    """Return ``(Lambda_t, noise_power)`` for the configured link.

    ``Lambda_t`` is the misalignment energy of the real-part estimator,
    ``sum_j (sum_i Re(1 - w^H h_i s_i) dbar_ij)^2``, which is the exact
    conditional MSE contribution of the signal part.  ``noise_power`` is
    ``d ||w||^2 sigma2``.
    """
    U = np.atleast_2d(np.asarray(updates, dtype=float))
    gain = alignment(w, H) * np.asarray(s)
    err = np.real(1.0 - gain) @ U
    lam = float(err @ err)
    noise_power = U.shape[1] * float(np.vdot(w, w).real) * sigma2
    return lam, noise_power


def misalignment_bound(updates, s, H, w):
    """Per-device form ``sum_j sum_i |(1 - w^H h_i s_i) dbar_ij|^2``.

    This is the quantity the convergence bound carries (multiplied by ``rn``);
    it upper-bounds :func:`estimation_error_stats`'s ``Lambda_t / rn``.
    """
    U = np.atleast_2d(np.asarray(updates, dtype=float))
    gain = alignment(w, H) * np.asarray(s)
    return float(np.sum(np.abs(1.0 - gain) ** 2 * np.sum(U**2, axis=1)))


def air_aggregate(updates, s, H, w, sigma2, rng, convention="half"):
    """Superpose ``h_i s_i dbar_i`` over the MAC and combine with ``w``.

    ``updates`` is ``rn x d`` (rows are clipped differences), ``H`` is
    ``m x rn``.  Returns the real-part estimate of ``sum_i dbar_i`` plus the
    analytic MSE decomposition.  ``sigma2 = 0`` gives the noiseless link.
    """
    U = np.atleast_2d(np.asarray(updates, dtype=float))
    w = np.asarray(w)
    H = np.asarray(H)
    if H.shape[1] != U.shape[0] or len(s) != U.shape[0] or H.shape[0] != w.shape[0]:
        raise ParameterError("updates, scalings, channel and combiner disagree in shape")
    if sigma2 < 0:
        raise ParameterError("sigma2 must be nonnegative")
    d = U.shape[1]
    gain = alignment(w, H) * np.asarray(s)
    signal = np.real(gain) @ U
    if sigma2 > 0:
        noise = sample_cscg((H.shape[0], d), 2.0 * noise_factor(convention) * sigma2, rng)
        signal = signal + np.real(np.conj(w) @ noise)
    lam, noise_power = estimation_error_stats(U, s, H, w, sigma2)
    return AggregateEstimate(signal, lam, noise_power, convention)


def global_update_air(theta, est, eta, rn, D=math.inf):
    """``theta - eta/rn * delta_hat``, then projection when ``D`` is finite."""
    delta_hat = est.delta_hat if isinstance(est, AggregateEstimate) else np.asarray(est)
    theta = np.asarray(theta, dtype=float)
    if delta_hat.shape != theta.shape:
        raise ParameterError("estimate and model dimensions differ")
    return project_ball(theta - (eta / rn) * delta_hat, D)


def convergence_bound_terms(consts, f0, eta, Q, T, c, r, n, d, sigma2, w_norms, lambdas, convention="half"):
    """Evaluate each term of the non-convex convergence bound.

    Constants follow the explicit (non-asymptotic) form of the bound; the
    sum of the returned terms upper-bounds
    ``1/T sum_t E[alpha_bar_t ||grad f(theta_t)||^2]`` for ``eta`` small
    enough.
    """
    rn = r * n
    w_norms = np.asarray(w_norms, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    s2 = effective_sigma2(sigma2, convention)
    terms = {
        "optimality_gap": 4.0 / (eta * Q * T) * (f0 - consts.f_star),
        "clipping": 2.0 * eta * consts.L * c**2 / Q,
        "client_drift": 20.0 * consts.L**2 * eta**2 * Q * (consts.sigma_l**2 + 6 * Q * consts.sigma_g**2),
        "misalignment": 4.0 * consts.L * eta / (rn**2 * Q) * float(np.mean(lambdas)),
        "channel_noise": 4.0 * d * consts.L * eta * s2 / (rn**2 * Q) * float(np.mean(w_norms**2)),
        "clip_bias": 4.0 * consts.G**2,
    }
    terms["total"] = sum(terms.values())
    return terms
