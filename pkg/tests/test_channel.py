import math

import numpy as np
import pytest

from airfl_dp import channel
from airfl_dp.config import SystemConfig
from airfl_dp.errors import ParameterError, SingularMatrixError
from conftest import complex_normal


def test_stream_is_pure_function_of_keys():
    a = channel.stream(3, 1, "noise", 7).standard_normal(5)
    b = channel.stream(3, 1, "noise", 7).standard_normal(5)
    c = channel.stream(3, 1, "noise", 8).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_stream_rejects_unknown_purpose_and_negative_keys():
    with pytest.raises(ParameterError):
        channel.stream(0, "bogus")
    with pytest.raises(ParameterError):
        channel.stream(0, -1)


def test_cscg_moments():
    rng = np.random.default_rng(1)
    z = channel.sample_cscg(200_000, 3.0, rng)
    # E|z|^2 = variance, E z^2 = 0 (circular symmetry)
    assert abs(np.mean(np.abs(z) ** 2) - 3.0) < 5 * 3.0 / math.sqrt(200_000)
    assert abs(np.mean(z**2)) < 5 * 3.0 / math.sqrt(200_000)
    assert abs(np.var(z.real) - 1.5) < 0.05


def test_cscg_draws_scale_proportionally_with_variance():
    a = channel.sample_cscg((3, 4), 1.0, np.random.default_rng(5))
    b = channel.sample_cscg((3, 4), 9.0, np.random.default_rng(5))
    np.testing.assert_allclose(b, 3.0 * a, rtol=1e-15)


@pytest.mark.parametrize("variance", [0.0, -1.0])
def test_cscg_rejects_nonpositive_variance(variance):
    with pytest.raises(ParameterError):
        channel.sample_cscg(3, variance, np.random.default_rng(0))


def test_path_loss_free_space_value():
    # wavelength 0.125 m at 2.398 GHz; gain (lambda / (4 pi r))^2
    f = channel.SPEED_OF_LIGHT / 0.125
    assert channel.path_loss(1000.0, f) == pytest.approx((0.125 / (4 * math.pi * 1000.0)) ** 2, rel=1e-14)
    assert channel.path_loss(500.0, f) == pytest.approx(4 * channel.path_loss(1000.0, f), rel=1e-14)
    with pytest.raises(ParameterError):
        channel.path_loss(0.0, f)


def test_distances_uniform_over_disc():
    d = channel.sample_distances(100_000, 1000.0, np.random.default_rng(2))
    assert np.all((d > 0) & (d <= 1000.0))
    # P(r <= x) = (x / r_max)^2 for a uniform disc
    for x in (250.0, 500.0, 900.0):
        assert abs(np.mean(d <= x) - (x / 1000.0) ** 2) < 0.01


def test_sample_channel_column_variances_follow_path_loss():
    cfg = SystemConfig(m=4000)
    distances = np.array([100.0, 800.0])
    ch = channel.sample_channel(0, cfg, np.random.default_rng(3), distances)
    assert ch.H.shape == (4000, 2)
    emp = np.mean(np.abs(ch.H) ** 2, axis=0)
    np.testing.assert_allclose(emp / ch.path_loss, 1.0, atol=0.1)


def test_subset_keeps_columns():
    cfg = SystemConfig()
    ch = channel.sample_channel(0, cfg, np.random.default_rng(0), np.linspace(100, 900, 5))
    sub = ch.subset([1, 3])
    np.testing.assert_array_equal(sub.H, ch.H[:, [1, 3]])
    np.testing.assert_array_equal(sub.devices, [1, 3])
    with pytest.raises(ParameterError):
        sub.subset([2])


def test_gram_solve_matches_dense_solve(rng):
    H = complex_normal(rng, (12, 5))
    b = complex_normal(rng, 5)
    x = channel.gram_solve(H, b)
    np.testing.assert_allclose(x, np.linalg.solve(H.conj().T @ H, b), rtol=1e-10)


def test_gram_solve_rejects_rank_deficient(rng):
    H = complex_normal(rng, (6, 3))
    H[:, 2] = H[:, 0]
    with pytest.raises(SingularMatrixError) as info:
        channel.gram_solve(H, np.ones(3))
    assert info.value.condition > channel.GRAM_COND_LIMIT
