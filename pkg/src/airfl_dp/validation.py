"""Quick self-checks against independent reference computations.

Each check returns ``(name, passed, detail)``.  These are smaller versions of
the test-suite oracles, sized to finish in a few seconds from the CLI.
"""

from __future__ import annotations

import math

import numpy as np

from . import aircomp, beamforming, channel, fl, privacy


def _rand_channel(rng, m, k):
    return channel.sample_cscg((m, k), 1.0, rng)


def check_zf_exactness(rng, instances=50):
    worst = 0.0
    for _ in range(instances):
        m = int(rng.integers(4, 65))
        k = int(rng.integers(1, m + 1))
        H = _rand_channel(rng, m, k)
        c, d, P = rng.uniform(0.1, 2.0), int(rng.integers(1, 100)), rng.uniform(1e-3, 1.0)
        zf = beamforming.zf_combiner(H, c, d, P)
        target = c / math.sqrt(d * P)
        worst = max(worst, float(np.max(np.abs(np.abs(aircomp.alignment(zf.w_zf, H)) / target - 1.0))))
    return "zf-exactness", worst <= 1e-9, f"max relative deviation {worst:.3e}"


def check_misalignment(rng, instances=50):
    worst = 0.0
    for _ in range(instances):
        m = int(rng.integers(2, 20))
        k = int(rng.integers(1, m + 1))
        H = _rand_channel(rng, m, k)
        w = channel.sample_cscg(m, 1.0, rng)
        U = rng.normal(size=(k, int(rng.integers(1, 30))))
        s = aircomp.channel_inversion_scaling(w, H)
        lam, _ = aircomp.estimation_error_stats(U, s, H, w, 1.0)
        worst = max(worst, lam / float(np.sum(U.sum(axis=0) ** 2)))
    return "misalignment-vanishes", worst <= 1e-15, f"max Lambda/signal {worst:.3e}"


def check_allocation(rng, instances=20):
    worst = 0.0
    for _ in range(instances):
        T = int(rng.integers(1, 9))
        pi = rng.uniform(0.5, 3.0, size=T)
        A = rng.uniform(0.05, 1.0) * beamforming.sum_inv_sq(pi)
        fast = beamforming.solve_allocation(pi, A)
        ref = beamforming.oracle_allocation(pi, A)
        worst = max(worst, abs(fast.objective - ref.objective) / ref.objective)
    return "allocation-vs-oracle", worst <= 1e-4, f"max relative objective gap {worst:.3e}"


def check_two_path_dp(rng, draws=50):
    worst = 0.0
    for _ in range(draws):
        delta = 10 ** rng.uniform(-8, -2)
        r, c, sigma2 = 1.0, rng.uniform(0.1, 2.0), rng.uniform(0.5, 5.0)
        load = rng.uniform(1e-3, 1.0)
        eps = privacy.dp_epsilon(load, math.inf, delta, None, r, c, sigma2)
        alpha = privacy.conversion_order(eps, delta)
        via_rdp = privacy.rdp_to_dp(alpha, eps / 2.0, delta)
        worst = max(worst, abs(via_rdp - eps) / eps)
    return "two-path-dp", worst <= 1e-9, f"max relative gap {worst:.3e}"


def check_noiseless_equivalence(rng, instances=20):
    worst = 0.0
    for _ in range(instances):
        m, k, d = int(rng.integers(2, 16)), 0, int(rng.integers(1, 40))
        k = int(rng.integers(1, m + 1))
        H = _rand_channel(rng, m, k)
        w = beamforming.zf_combiner(H, 1.0, d, 1.0).w_zf
        U = np.array([fl.clip(u, 1.0) for u in rng.normal(size=(k, d))])
        theta = rng.normal(size=d)
        s = aircomp.channel_inversion_scaling(w, H)
        air = aircomp.global_update_air(theta, aircomp.air_aggregate(U, s, H, w, 0.0, rng), 0.01, k)
        ref = fl.aggregate_noiseless(U, theta, 0.01, k)
        worst = max(worst, float(np.linalg.norm(air - ref) / np.linalg.norm(ref)))
    return "noiseless-equivalence", worst <= 1e-10, f"max relative deviation {worst:.3e}"


CHECKS = (check_zf_exactness, check_misalignment, check_allocation, check_two_path_dp, check_noiseless_equivalence)


def run_all(seed=0):
    rng = np.random.default_rng(seed)
    return [check(rng) for check in CHECKS]
