"""Complex channel primitives: CSCG sampling, path loss, Rayleigh draws, Gram solves.

Complex data is plain ``numpy`` ``complex128`` (two doubles per entry).  All
sampling takes an explicit :class:`numpy.random.Generator`; use
:func:`stream` to derive generators addressed by ``(seed, trial, purpose,
round, device)`` so that adding trials or purposes never shifts an existing
stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ParameterError, SingularMatrixError

SPEED_OF_LIGHT = 2.99792458e8
GRAM_COND_LIMIT = 1e12

_PURPOSES = {
    "data": 1,
    "geometry": 2,
    "select": 3,
    "channel": 4,
    "sgd": 5,
    "noise": 6,
    "init": 7,
    "test": 8,
}


def stream(seed, *keys):
    """Return an independent generator for ``seed`` and a key path.

    Keys may be non-negative ints or one of the registered purpose names.
    The mapping is a pure function of its arguments.
    """
    spawn_key = []
    for k in keys:
        if isinstance(k, str):
            try:
                k = _PURPOSES[k]
            except KeyError:
                raise ParameterError(f"unknown stream purpose {k!r}") from None
        if k < 0:
            raise ParameterError("stream keys must be non-negative")
        spawn_key.append(int(k))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(spawn_key))
    return np.random.Generator(np.random.PCG64(ss))


def sample_cscg(shape, variance, rng):
    """Draw circularly-symmetric complex Gaussian entries CN(0, variance).

    Real and imaginary parts are independent N(0, variance/2).  The draw is
    a fixed standard-normal block scaled by ``sqrt(variance/2)``, so two
    calls with the same generator state and different variances return
    proportional samples.
    """
    if not variance > 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    if np.isscalar(shape):
        shape = (int(shape),)
    z = rng.standard_normal((2, *shape))
    return np.sqrt(variance / 2.0) * (z[0] + 1j * z[1])


def path_loss(distance, carrier_freq):
    """Free-space power gain ``(c_l / (4 pi f_c r))**2``."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0) or not carrier_freq > 0:
        raise ParameterError("distance and carrier frequency must be positive")
    gain = (SPEED_OF_LIGHT / (4.0 * np.pi * carrier_freq * distance)) ** 2
    return gain if gain.ndim else float(gain)


def sample_distances(n, r_max, rng):
    """Device-to-BS distances ``r_max * sqrt(U(0,1))`` (uniform over a disc).

    ``U`` is drawn on the half-open interval ``(0, 1]`` so no distance is zero.
    """
    u = 1.0 - rng.random(n)
    return r_max * np.sqrt(u)


@dataclass(frozen=True)
class ChannelRealization:
    """One round of block-flat Rayleigh fading, ``H`` is ``m x n_devices``."""

    round: int
    H: np.ndarray
    path_loss: np.ndarray
    distances: np.ndarray
    devices: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.devices is None:
            object.__setattr__(self, "devices", np.arange(self.H.shape[1]))

    @property
    def m(self):
        return self.H.shape[0]

    def subset(self, devices):
        """Restrict to the columns of ``devices`` (global indices)."""
        devices = np.asarray(devices)
        pos = np.searchsorted(self.devices, devices)
        if np.any(pos >= len(self.devices)) or np.any(self.devices[pos] != devices):
            raise ParameterError("requested devices are not in this realization")
        return ChannelRealization(
            self.round, self.H[:, pos], self.path_loss[pos], self.distances[pos], devices
        )


def sample_channel(t, cfg, rng, distances):
    """Draw ``H^(t)`` with column i distributed as CN(0, Lambda_i I_m).

    ``distances`` is the static per-device geometry of the experiment.
    ``cfg`` needs ``m`` and ``carrier_freq``.
    """
    distances = np.asarray(distances, dtype=float)
    gains = path_loss(distances, cfg.carrier_freq)
    gains = np.atleast_1d(gains)
    z = sample_cscg((cfg.m, len(distances)), 1.0, rng)
    H = z * np.sqrt(gains)[None, :]
    return ChannelRealization(int(t), H, gains, distances)


def hermitian(A):
    return np.conj(np.swapaxes(A, -1, -2))


def gram_solve(H, b, cond_limit=GRAM_COND_LIMIT):
    """Solve ``(H^H H) x = b`` with a Cholesky factorization.

    Raises :class:`SingularMatrixError` (carrying the 2-norm condition
    estimate) when the Gram matrix is rank deficient or its condition number
    exceeds ``cond_limit``.
    """
    H = np.asarray(H)
    if H.ndim != 2:
        raise ParameterError("H must be a matrix")
    if H.shape[0] < H.shape[1]:
        raise SingularMatrixError(
            f"Gram matrix of a {H.shape[0]}x{H.shape[1]} matrix is singular"
        )
    G = hermitian(H) @ H
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularMatrixError(f"Gram matrix condition {cond:.3e} exceeds {cond_limit:.0e}", cond)
    try:
        factor = linalg.cho_factor(G, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularMatrixError(f"Cholesky failed: {exc}", cond) from exc
    return linalg.cho_solve(factor, np.asarray(b, dtype=complex), check_finite=False)
