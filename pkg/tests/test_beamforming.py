import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airfl_dp import beamforming
from airfl_dp.errors import ConfigError, ParameterError
from conftest import complex_normal


def test_zf_equalizes_all_devices(rng):
    H = complex_normal(rng, (8, 5))
    zf = beamforming.zf_combiner(H, c=0.7, d=50, P=2e-3)
    target = 0.7 / math.sqrt(50 * 2e-3)
    np.testing.assert_allclose(np.abs(zf.w_zf.conj() @ H), target, rtol=1e-12)
    assert zf.pi == pytest.approx(np.linalg.norm(zf.w_zf), rel=1e-14)
    assert zf.pi == pytest.approx(target * zf.gain_norm, rel=1e-14)


def test_zf_is_minimum_norm_feasible_point(rng):
    # any other w with w^H H = target * u^T differs by a null-space component of H^H
    H = complex_normal(rng, (6, 3))
    zf = beamforming.zf_combiner(H, 1.0, 4, 1.0)
    null = np.linalg.svd(H.conj().T)[2][3:].conj().T
    for _ in range(20):
        other = zf.w_zf + null @ complex_normal(rng, 3)
        np.testing.assert_allclose(other.conj() @ H, zf.w_zf.conj() @ H, atol=1e-12)
        assert np.linalg.norm(other) >= zf.pi


def test_zf_custom_phases(rng):
    H = complex_normal(rng, (5, 2))
    u = np.exp(1j * np.array([0.3, -1.2]))
    zf = beamforming.zf_combiner(H, 1.0, 1, 1.0, u=u)
    np.testing.assert_allclose(H.conj().T @ zf.w_zf, u, rtol=1e-12)
    with pytest.raises(ParameterError):
        beamforming.zf_combiner(H, 1.0, 1, 1.0, u=np.array([1.0, 2.0]))


def test_zf_needs_enough_antennas(rng):
    with pytest.raises(ConfigError):
        beamforming.zf_combiner(complex_normal(rng, (2, 3)), 1.0, 1, 1.0)


def test_budget_formula():
    b = beamforming.privacy_budget_A(eps=2.0, delta=math.exp(-3), c_delta=8.0, r=0.5, c=2.0, sigma2=6.0, convention="full")
    assert b.A == pytest.approx(4.0 * 6.0 / (24.0 * 3.0 * 0.5 * 4.0))
    half = beamforming.privacy_budget_A(2.0, math.exp(-3), 8.0, 0.5, 2.0, 6.0)
    assert half.A == pytest.approx(b.A / 2)


@pytest.mark.parametrize(
    "pi,A,expected",
    [([1.0, 1.0], 1.0, [math.sqrt(2), math.sqrt(2)]), ([1.0, 3.0], 0.5, [1.0 / math.sqrt(0.5 - 1 / 9), 3.0])],
)
def test_analytic_allocations(pi, A, expected):
    sol = beamforming.solve_allocation(pi, A)
    np.testing.assert_allclose(sol.q, expected, rtol=1e-6)
    assert sol.scaled


def test_analytic_value_matches_stated_decimal():
    sol = beamforming.solve_allocation([1.0, 3.0], 0.5)
    assert sol.q[0] == pytest.approx(1.6036, abs=5e-5)


def test_unscaled_when_budget_met():
    sol = beamforming.solve_allocation([1.0, 2.0], 2.0)
    assert not sol.scaled and sol.mu_star == 0.0
    np.testing.assert_array_equal(sol.q, [1.0, 2.0])


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=60), st.floats(1e-3, 1.0))
def test_allocation_feasible_and_kkt(pi, frac):
    pi = np.array(pi)
    A = frac * beamforming.sum_inv_sq(pi)
    sol = beamforming.solve_allocation(pi, A)
    assert np.all(sol.q >= pi)
    assert sol.sum_inv_q2 <= A * (1 + 1e-12)
    if sol.scaled:
        # budget tight and every raised norm sits at the common water level
        assert sol.sum_inv_q2 == pytest.approx(A, rel=1e-8)
        level = sol.mu_star**0.25
        raised = sol.q > pi
        np.testing.assert_allclose(sol.q[raised], level, rtol=1e-12)
        assert np.all(pi[~raised] >= level * (1 - 1e-12))


def test_oracle_agrees_with_bisection(rng):
    for _ in range(20):
        T = int(rng.integers(1, 9))
        pi = rng.uniform(0.2, 5.0, size=T)
        A = rng.uniform(0.02, 0.99) * beamforming.sum_inv_sq(pi)
        fast = beamforming.solve_allocation(pi, A)
        ref = beamforming.oracle_allocation(pi, A)
        assert fast.objective == pytest.approx(ref.objective, rel=1e-4)


def test_oracle_size_limit():
    with pytest.raises(ParameterError):
        beamforming.oracle_allocation(np.ones(9), 0.1)


def test_project_capped_exact():
    y = np.array([3.0, 0.5, -1.0])
    x = beamforming._project_capped(y, 0.0, np.array([1.0, 1.0, 1.0]), 1.2)
    assert x.sum() == pytest.approx(1.2)
    assert np.all((x >= 0) & (x <= 1))
    # first-order condition: x = clip(y - tau) for a single tau
    free = (x > 0) & (x < 1)
    np.testing.assert_allclose(y[free] - x[free], (y[free] - x[free])[0])


def test_online_allocation_is_feasible_not_better():
    pi = np.array([0.5, 1.0, 4.0])
    A = 0.5
    online = beamforming.online_allocation(pi, A)
    offline = beamforming.solve_allocation(pi, A)
    assert online.sum_inv_q2 <= A * (1 + 1e-12)
    assert online.objective >= offline.objective


def zf_set(rng, T, P, m=6, k=3):
    return [beamforming.zf_combiner(complex_normal(rng, (m, k)), 1.0, 10, P, round=t) for t in range(T)]


def test_perk_forms_agree_and_combiners_follow(rng):
    seen = set()
    for P in (1e-6, 1e-3, 1.0, 1e3):
        zf = zf_set(rng, 5, P)
        budget = beamforming.privacy_budget_A(1.0, 1e-5, 8.0, 1.0, 1.0, 1.0)
        perk = beamforming.perk_condition(zf, budget)
        alloc = beamforming.solve_allocation([z.pi for z in zf], budget.A)
        assert bool(perk) == (not alloc.scaled)
        ws = beamforming.optimal_combiners(zf, alloc)
        np.testing.assert_allclose([np.linalg.norm(w) for w in ws], alloc.q, rtol=1e-12)
        if perk:
            assert all(w is z.w_zf for w, z in zip(ws, zf))
        seen.add(bool(perk))
    assert seen == {True, False}


def test_perk_requires_shared_power(rng):
    zf = zf_set(rng, 1, 1.0) + zf_set(rng, 1, 2.0)
    budget = beamforming.privacy_budget_A(1.0, 1e-5, 8.0, 1.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        beamforming.perk_condition(zf, budget)


def test_allocation_csv(tmp_path, rng):
    zf = zf_set(rng, 3, 1.0)
    budget = beamforming.privacy_budget_A(1.0, 1e-5, 8.0, 1.0, 1.0, 1e-3)
    alloc = beamforming.solve_allocation([z.pi for z in zf], budget.A)
    path = tmp_path / "alloc.csv"
    beamforming.write_allocation(zf, alloc, budget, path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == list(beamforming.ALLOCATION_COLUMNS)
    assert [float(r["q_t"]) for r in rows] == list(alloc.q)
