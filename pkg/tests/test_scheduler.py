"""Fairness scheduling: closed forms, the numeric alpha-fair path, scaling."""

import numpy as np
import pytest

from netmimo import ConfigurationError, per_user_rates, schedule, system_throughput


def test_pf_closed_form():
    plan = schedule(np.array([4.0, 2.0, 1.0]), "pf")
    assert np.array_equal(plan.rho, np.full(3, 1.0 / 3.0))
    assert np.allclose(plan.bin_rates, [4 / 3, 2 / 3, 1 / 3])


def test_maxmin_closed_form():
    # rho_k = (1/R_k) / sum(1/R_j): (1/4, 1/2, 1)/1.75 = (1/7, 2/7, 4/7)
    plan = schedule(np.array([4.0, 2.0, 1.0]), "maxmin")
    assert np.allclose(plan.rho, [1 / 7, 2 / 7, 4 / 7], rtol=1e-14)
    assert np.allclose(plan.bin_rates, 4.0 / 7.0, rtol=1e-14)
    assert plan.bin_rates.max() - plan.bin_rates.min() < 1e-12
    assert plan.rho.sum() == pytest.approx(1.0, abs=1e-12)


def test_single_bin():
    for kind in ("pf", "maxmin"):
        plan = schedule(np.array([3.0]), kind)
        assert plan.rho[0] == pytest.approx(1.0)


def test_maxmin_equalizes_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r = rng.uniform(0.1, 50.0, size=rng.integers(2, 12))
        plan = schedule(r, "maxmin")
        assert plan.bin_rates.max() - plan.bin_rates.min() < 1e-12
        expected = (1.0 / r) / (1.0 / r).sum()
        assert np.allclose(plan.rho, expected, rtol=1e-12)


def test_alpha_one_matches_pf():
    rng = np.random.default_rng(1)
    for _ in range(5):
        r = rng.uniform(0.5, 20.0, size=6)
        plan = schedule(r, "alpha", alpha=1.0)
        assert np.abs(plan.rho - 1.0 / 6.0).max() < 1e-6


def test_alpha_matches_closed_form():
    # stationarity on the simplex gives rho_k proportional to r_k^((1-a)/a)
    r = np.array([4.0, 2.0, 1.0, 0.5])
    for alpha in (0.5, 2.0, 5.0):
        plan = schedule(r, "alpha", alpha=alpha)
        expected = r ** ((1.0 - alpha) / alpha)
        expected /= expected.sum()
        assert np.allclose(plan.rho, expected, atol=1e-4)


def test_alpha_large_approaches_maxmin():
    r = np.array([4.0, 2.0, 1.0])
    plan = schedule(r, "alpha", alpha=50.0)
    maxmin = schedule(r, "maxmin")
    assert np.abs(plan.rho - maxmin.rho).max() < 0.02


def test_scale_equivariance():
    r = np.array([3.0, 1.5, 0.75])
    for kind in ("pf", "maxmin"):
        a = schedule(r, kind)
        b = schedule(10.0 * r, kind)
        assert np.allclose(a.rho, b.rho, rtol=1e-12)
        assert np.allclose(10.0 * a.bin_rates, b.bin_rates, rtol=1e-12)


def test_throughput():
    plan = schedule(np.array([4.0, 2.0, 1.0]), "pf")
    # rates sum to 7/3 bit/s/Hz, at 20 MHz
    assert system_throughput(plan, 20e6) == pytest.approx(7.0 / 3.0 * 20e6)
    uniform = schedule(np.full(5, 2.0), "pf")
    assert system_throughput(uniform, 1.0) == pytest.approx(2.0)


def test_per_user_rates():
    plan = schedule(np.array([4.0, 2.0]), "pf")
    users = per_user_rates(plan, [8.0, 4.0])
    assert np.allclose(users, [0.25, 0.25])


def test_rejects_bad_inputs():
    with pytest.raises(ConfigurationError):
        schedule(np.array([1.0, 0.0]), "pf")
    with pytest.raises(ConfigurationError):
        schedule(np.array([]), "pf")
    with pytest.raises(ConfigurationError):
        schedule(np.array([1.0]), "alpha")  # missing alpha
    with pytest.raises(ConfigurationError):
        schedule(np.array([1.0]), "waterfilling")
