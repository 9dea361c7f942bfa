"""Finite-size simulation: training statistics, precoders, rate estimates."""

import numpy as np
import pytest

from netmimo import (ConfigurationError, SchemeConfig, build_precoder,
                     estimate_rates, group_rate, make_scenario,
                     partial_trace_profile, simulate_training, zf_residuals)
from netmimo.channel import stats_for
from netmimo.montecarlo import SimulationPlan


@pytest.fixture(scope="module")
def toy(ring8, pathloss_1d):
    return make_scenario(ring8, pathloss_1d, [0.1875], F=1, C=1, Q=2,
                         S=4, M=8, L=40)


def test_estimate_variance_matches_xi(toy):
    st = stats_for(toy)
    _, _, xi = st.coefficients(toy.alpha_ul * toy.Q * toy.S)
    target = xi[0, 0, 0, 0]
    samples = []
    for s in range(60):
        real = simulate_training(toy, N=1, seed=1000 + s)
        samples.append(np.abs(real.estimates[(0, 0)][:, :2]) ** 2)
    values = np.concatenate([s.ravel() for s in samples])
    emp = values.mean()
    se = values.std() / np.sqrt(len(values))  # |hhat|^2 is exponential
    assert abs(emp - target) < 3 * se + 1e-12
    assert len(values) >= 900


def test_mmse_orthogonality(toy):
    num = 0.0
    p_est = 0.0
    p_err = 0.0
    n = 0
    for s in range(100):
        real = simulate_training(toy, N=1, seed=2000 + s)
        hh = real.estimates[(0, 0)].ravel()
        e = real.error(0, 0).ravel()
        num += np.vdot(hh, e)
        p_est += np.vdot(hh, hh).real
        p_err += np.vdot(e, e).real
        n += hh.size
    corr = abs(num) / np.sqrt(p_est * p_err)
    assert corr < 4.0 / np.sqrt(n)


def test_cross_cluster_estimates_proportional(toy):
    # same-pilot estimates are deterministic rescalings of a shared
    # observation: per column the entry-wise ratio is an exact constant
    real = simulate_training(toy, N=1, seed=3)
    own = real.estimates[(0, 0)]
    far = real.estimates[(2, 0)]  # cluster 2 reuses codebook 0
    for col in range(own.shape[1]):
        ratio = far[:, col] / own[:, col]
        assert np.allclose(ratio, ratio[0], rtol=1e-9)


def test_perfect_training_estimate(ring8, pathloss_1d):
    # single pilot user per codebook (Q = B) and huge uplink power: hhat -> h
    scn = make_scenario(ring8, pathloss_1d, [0.1875], F=1, C=1, Q=8,
                        S=4, M=8, L=40, alpha_ul=1e12)
    real = simulate_training(scn, N=1, seed=1)
    h = real.true_channels[(0, 0)]
    hh = real.estimates[(0, 0)]
    assert np.abs(h - hh).max() / np.abs(h).max() < 1e-4


def test_single_user_lsubf_precoder(ring8, pathloss_1d):
    scn = make_scenario(ring8, pathloss_1d, [0.1875], F=1, C=1, Q=1,
                        S=1, M=8, L=40, locations=[[0.1875]])
    real = simulate_training(scn, N=1, seed=5)
    prec = build_precoder(real, scn, SchemeConfig(1, 1, 0, 1, 1, 8))
    hh = real.estimates[(0, 0)]
    assert prec.V.shape == (8, 1)
    assert np.allclose(prec.V, hh / np.linalg.norm(hh), rtol=1e-12)


@pytest.mark.parametrize("C,F,Q,J,S", [
    (1, 1, 2, 1, 4), (1, 1, 2, 2, 2),          # single cell, cases J=1 and J=Q
    (2, 2, 2, 1, 4), (2, 2, 2, 2, 4),          # disjoint clusters
    (2, 1, 2, 1, 4), (2, 1, 2, 2, 4), (2, 1, 2, 3, 4),  # overlapping, incl. masked
])
def test_zf_residuals(ring8, pathloss_1d, C, F, Q, J, S):
    scn = make_scenario(ring8, pathloss_1d, [0.1875], F=F, C=C, Q=Q,
                        S=S, M=8, L=40)
    cfg = SchemeConfig(F, C, J, Q, S, 8)
    for s in range(5):
        real = simulate_training(scn, N=1, seed=100 + s)
        prec = build_precoder(real, scn, cfg)
        assert zf_residuals(prec) <= 1e-9
        norms = np.linalg.norm(prec.V, axis=0)
        assert np.allclose(norms, 1.0, rtol=1e-12)


def test_case_c_masks(ring8, pathloss_1d):
    # C=2, Q=2, F=1: all users of both neighbor clusters, masked to the BS
    # closest to them (left neighbors -> BS offset 0, right -> offset 1)
    scn = make_scenario(ring8, pathloss_1d, [0.1875], F=1, C=2, Q=2,
                        S=4, M=8, L=40)
    cfg = SchemeConfig(1, 2, 3, 2, 4, 8)
    real = simulate_training(scn, N=1, seed=9)
    prec = build_precoder(real, scn, cfg)
    assert sorted(prec.masks) == [(1, 0, 1), (1, 1, 1), (7, 0, 0), (7, 1, 0)]
    # masked estimate columns are zero outside the kept BS block
    mn = 8
    cons = prec.constraint_matrix[:, scn.m * 2:]  # beyond own users
    for k, (_, _, b) in enumerate(prec.masks):
        col = cons[:, k * 2:(k + 1) * 2]
        other = 1 - b
        assert np.abs(col[other * mn:(other + 1) * mn]).max() == 0.0
        assert np.abs(col[b * mn:(b + 1) * mn]).max() > 0.0


def test_total_power_and_partial_trace(ring8, pathloss_1d):
    scn = make_scenario(ring8, pathloss_1d, [0.1875], F=2, C=2, Q=2,
                        S=4, M=8, L=40)
    cfg = SchemeConfig(2, 2, 2, 2, 4, 8)
    real = simulate_training(scn, N=2, seed=11)
    prec = build_precoder(real, scn, cfg)
    # unit-norm columns: tr(V V^H) = number of beams = S*N
    assert np.trace(prec.V @ prec.V.conj().T).real == pytest.approx(8.0, rel=1e-12)
    traces = partial_trace_profile(prec, scn)
    assert traces.sum() == pytest.approx(1.0, abs=1e-12)
    # C = 1 degenerate case: the single block carries everything
    scn1 = make_scenario(ring8, pathloss_1d, [0.1875], F=1, C=1, Q=1,
                         S=4, M=8, L=40)
    real1 = simulate_training(scn1, N=1, seed=12)
    prec1 = build_precoder(real1, scn1, SchemeConfig(1, 1, 1, 1, 4, 8))
    assert partial_trace_profile(prec1, scn1)[0] == pytest.approx(1.0, abs=1e-12)


def test_partial_trace_converges(ring8, pathloss_1d):
    scn = make_scenario(ring8, pathloss_1d, [0.1875], F=2, C=2, Q=2,
                        S=2, M=8, L=40)
    cfg = SchemeConfig(2, 2, 1, 2, 2, 8)
    means = []
    for n in (1, 4):
        devs = []
        for s in range(40):
            real = simulate_training(scn, N=n, seed=40 + s)
            prec = build_precoder(real, scn, cfg)
            devs.append(np.abs(partial_trace_profile(prec, scn) - 0.5).max())
        means.append(np.mean(devs))
    assert means[1] < means[0]


def test_estimate_rates_toy_vs_closed_form(step_gain):
    # Smallest toy (one beam per cluster): the finite-size gap to the
    # asymptotic formula is dominated by the +-1-beam accounting and scales
    # like 1/(S*N). Recorded empirically: +14% here, 3% at S*N = 16 (see
    # the acceptance suite for the tight comparison at practical sizes).
    import netmimo
    lay = netmimo.build_layout(1, 4, user_grid_density=4)
    scn = make_scenario(lay, step_gain, None, F=1, C=1, Q=1, S=1, M=2, L=40,
                        alpha_ul=1.0, locations=[[0.0]])
    cfg = SchemeConfig(1, 1, 0, 1, 1, 2)
    r = netmimo.rate_lsubf(scn, cfg)
    est = estimate_rates(scn, cfg, N=1, trials=4000, seed=21)
    assert abs(est.group_rate / r.group_rate - 1) < 0.16
    # the gap closes as N grows at fixed S
    est4 = estimate_rates(scn, cfg, N=4, trials=2000, seed=21)
    assert abs(est4.group_rate / r.group_rate - 1) < 0.06


def test_estimate_rates_reproducible(toy):
    cfg = SchemeConfig(1, 1, 1, 2, 4, 8)
    a = estimate_rates(toy, cfg, N=1, trials=300, seed=33)
    b = estimate_rates(toy, cfg, N=1, trials=300, seed=33)
    c = estimate_rates(toy, cfg, N=1, trials=300, seed=33, threads=3)
    assert a.group_rate == b.group_rate == c.group_rate
    assert np.array_equal(a.per_location_rate, c.per_location_rate)
    d = estimate_rates(toy, cfg, N=1, trials=300, seed=34)
    assert d.group_rate != a.group_rate


def test_standard_error_scales_with_trials(toy):
    cfg = SchemeConfig(1, 1, 1, 2, 4, 8)
    e1 = estimate_rates(toy, cfg, N=1, trials=400, seed=8)
    e2 = estimate_rates(toy, cfg, N=1, trials=1600, seed=8)
    ratio = e1.group_se / e2.group_se
    assert 1.5 < ratio < 2.7  # expect about 2


def test_rounding_warns(ring8, pathloss_1d):
    scn = make_scenario(ring8, pathloss_1d, [0.1875], F=1, C=1, Q=1,
                        S=3, M=8, L=40)
    with pytest.warns(UserWarning, match="rounded"):
        SimulationPlan(scn, SchemeConfig(1, 1, 0, 1, 3, 8), N=1)


def test_diagnostics_stream(toy):
    import io

    from netmimo import csv_diagnostics
    rows = []
    cfg = SchemeConfig(1, 1, 1, 2, 4, 8)
    estimate_rates(toy, cfg, N=1, trials=10, seed=1,
                   diagnostics=lambda *r: rows.append(r))
    assert len(rows) == 10 * toy.m
    assert rows[0][0] == 0 and rows[-1][0] == 9
    buf = io.StringIO()
    estimate_rates(toy, cfg, N=1, trials=4, seed=1,
                   diagnostics=csv_diagnostics(buf))
    lines = buf.getvalue().splitlines()
    assert lines[0] == "trial,location,sinr,rate"
    assert len(lines) == 1 + 4 * toy.m


def test_estimate_rates_needs_trials(toy):
    with pytest.raises(ConfigurationError):
        estimate_rates(toy, SchemeConfig(1, 1, 0, 2, 4, 8), N=1, trials=0, seed=1)
