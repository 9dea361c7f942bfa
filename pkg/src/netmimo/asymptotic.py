"""Closed-form large-system group spectral efficiencies.

The three precoding regimes are evaluated in the limit where antennas,
users and coherence block grow proportionally: single-user beamforming
(J = 0), single-cell zero forcing (C = 1, J >= 1), and cluster zero
forcing with an inter-cluster-interference upper bound (C > 1). The
massive-antenna limit and the training-overhead penalty are provided as
separate operations. All spectral efficiencies are in bit/s/Hz (log2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import stats_for
from .errors import ConfigurationError, FeasibilityError
from .geometry import closest_bs_in_cluster, nearest_zf_clusters


@dataclass(frozen=True)
class SchemeConfig:
    """One (F, C, J, Q) scheme at loading S with antenna factor M."""

    F: int
    C: int
    J: int
    Q: int
    S: float
    M: float

    def __post_init__(self):
        if self.J not in allowed_zf_orders(self.C, self.Q):
            raise ConfigurationError(
                f"J={self.J} is not supported for C={self.C}, Q={self.Q} "
                f"(allowed: {sorted(allowed_zf_orders(self.C, self.Q))})")
        if self.J >= 1 and self.J * self.S >= self.C * self.M:
            raise FeasibilityError(
                f"J*S={self.J * self.S} >= C*M={self.C * self.M}: "
                "the zero-forcing signal coefficient would be non-positive")

    @property
    def label(self):
        return f"({self.F},{self.C},{self.J})Q{self.Q}"


def allowed_zf_orders(C, Q):
    """ZF orders with a closed form: 0, 1, Q and C*(Q-1)+1 (the latter two
    only when pilot reuse Q > 1 makes out-of-cluster estimation possible)."""
    orders = {0, 1}
    if Q > 1:
        orders.add(Q)
        orders.add(C * (Q - 1) + 1)
    return orders


@dataclass(frozen=True)
class SchemeRate:
    """Group spectral efficiency of one bin under one scheme.

    `coefficients` holds the per-location interference coefficients of the
    underlying closed form (eta/zeta, alpha/beta or their cluster-averaged
    variants) for inspection and testing. `capped` flags locations whose
    SINR hit the configured guard cap (empty interference corner cases).
    """

    group_rate: float
    net_rate: float
    per_location_sinr: np.ndarray
    coefficients: dict
    capped: bool
    config: SchemeConfig


def _check_config(scn, cfg):
    if cfg.C != scn.C or cfg.F != scn.F or cfg.Q != scn.Q:
        raise ConfigurationError(
            f"scheme {cfg} does not match the scenario geometry "
            f"(C={scn.C}, F={scn.F}, Q={scn.Q})")
    if abs(cfg.S - scn.S) > 1e-12 or abs(cfg.M - scn.M) > 1e-12:
        raise ConfigurationError("scheme S/M must equal the scenario's S/M")


def reference_sets(scn):
    """(f0, q0, D(f0), P(q0, f0)) for the reference cluster 0."""
    f0 = scn.ref_subband()
    q0 = scn.ref_codebook()
    return f0, q0, scn.reuse.active_set(f0), scn.reuse.pilot_set(q0, f0)


def _guarded_log_terms(scn, numerators, denominators):
    sinrs = []
    capped = False
    for num, den in zip(numerators, denominators):
        sinr = num / den if den > 0 else math.inf
        if sinr > scn.sinr_cap:
            sinr = scn.sinr_cap
            capped = True
        sinrs.append(sinr)
    rate = scn.S / (scn.m * scn.F) * math.fsum(math.log2(1.0 + s) for s in sinrs)
    return rate, np.array(sinrs), capped


def _finish(scn, cfg, numerators, denominators, coeffs):
    group, sinrs, capped = _guarded_log_terms(scn, numerators, denominators)
    net = overhead_factor(scn.Q, scn.S, scn.L) * group
    return SchemeRate(group, net, sinrs, coeffs, capped, cfg)


def overhead_factor(Q, S, L):
    """Pilot dimensionality overhead max{1 - Q*S/L, 0}."""
    if Q <= 0 or S <= 0 or L <= 0:
        raise ConfigurationError("Q, S, L must all be positive")
    return max(1.0 - Q * S / L, 0.0)


def net_rate(rate, Q, S, L):
    """Apply the training-overhead penalty to a group rate."""
    return replace(rate, net_rate=overhead_factor(Q, S, L) * rate.group_rate)


def _own_link_stats(st, alpha_qs):
    """Diagonal (source = serving) slices: xi[i, c, c, b] and its BS average."""
    _, sigma, xi = st.coefficients(alpha_qs)
    idx = np.arange(xi.shape[1])
    xi_own = xi[:, idx, idx, :]          # (m, B, C)
    return sigma, xi, xi_own, xi_own.mean(axis=2)


def rate_lsubf(scn, cfg, stats=None):
    """Group spectral efficiency with single-user beamforming (J = 0)."""
    _check_config(scn, cfg)
    if cfg.J != 0:
        raise ConfigurationError("rate_lsubf requires J = 0")
    st = stats or stats_for(scn)
    gains = st.gains
    _, _, xi_own, xi_bar = _own_link_stats(st, scn.alpha_ul * scn.Q * scn.S)
    C, m = scn.C, scn.m
    _, _, D, P = reference_sets(scn)
    P1 = [c for c in P if c != 0]
    cm_s = C * scn.M / scn.S

    etas, zetas, nums, dens = [], [], [], []
    for i in range(m):
        # all (other location, active cluster, BS) leakage terms
        terms = xi_own[:, D, :] * gains[i, 0, D, :][None] / xi_bar[:, D, None]
        eta = math.fsum(terms.ravel().tolist()) / (m * C)
        if P1:
            inner = (gains[i, 0, P1, :] / gains[i, 0, 0, :][None]
                     * xi_own[i, P1, :]).sum(axis=1) / C
            zeta = math.fsum((inner ** 2 / xi_bar[i, P1]).tolist())
        else:
            zeta = 0.0
        etas.append(eta)
        zetas.append(zeta)
        nums.append(cm_s * xi_bar[i, 0])
        dens.append(1.0 / scn.F + eta + cm_s * zeta)
    coeffs = {"eta": np.array(etas), "zeta": np.array(zetas),
              "xi_bar": xi_bar[:, 0].copy()}
    return _finish(scn, cfg, nums, dens, coeffs)


def rate_lzfbf_single(scn, cfg, stats=None):
    """Single-cell zero forcing (C = 1, J >= 1)."""
    _check_config(scn, cfg)
    if scn.C != 1 or cfg.J < 1:
        raise ConfigurationError("rate_lzfbf_single requires C = 1 and J >= 1")
    if cfg.J * cfg.S >= cfg.M:
        raise FeasibilityError("J*S >= M leaves no useful signal dimensions")
    st = stats or stats_for(scn)
    gains = st.gains
    sigma, _, xi_own, _ = _own_link_stats(st, scn.alpha_ul * scn.Q * scn.S)
    _, _, D, P = reference_sets(scn)
    P1 = [c for c in P if c != 0]
    mjs_s = (scn.M - cfg.J * scn.S) / scn.S

    alphas, betas, e_sets, nums, dens = [], [], [], [], []
    for i, x in enumerate(scn.bin.root_locations):
        E = nearest_zf_clusters(scn.layout, scn.clusters, x, cfg.J,
                                within=[c for c in D if c != 0])
        zf_set = sorted(set(P) | set(E))
        plain = [c for c in D if c not in set(P) and c not in set(E)]
        alpha = math.fsum(sigma[i, 0, zf_set, 0].tolist()) \
            + math.fsum(gains[i, 0, plain, 0].tolist())
        beta = math.fsum(((gains[i, 0, P1, 0] / gains[i, 0, 0, 0]) ** 2
                          * xi_own[i, P1, 0]).tolist()) if P1 else 0.0
        alphas.append(alpha)
        betas.append(beta)
        e_sets.append(E)
        nums.append(mjs_s * xi_own[i, 0, 0])
        dens.append(1.0 / scn.F + alpha + mjs_s * beta)
    coeffs = {"alpha": np.array(alphas), "beta": np.array(betas),
              "zf_neighbors": e_sets,
              "xi_000": xi_own[:, 0, 0].copy()}
    return _finish(scn, cfg, nums, dens, coeffs)


def rate_lzfbf_cluster(scn, cfg, stats=None):
    """Cluster zero forcing (C > 1, J >= 1) with the bounded-ICI closed form.

    The signal coefficient uses (C*M - J*S)/S while the pilot-contamination
    term keeps C*M/S, exactly as in the achievability bound; no tightening
    is attempted. The J = C*(Q-1)+1 case masks, per neighboring cluster,
    all BSs except the one closest to the reference user.
    """
    _check_config(scn, cfg)
    if scn.C <= 1 or cfg.J < 1:
        raise ConfigurationError("rate_lzfbf_cluster requires C > 1 and J >= 1")
    st = stats or stats_for(scn)
    gains = st.gains
    sigma, _, xi_own, xi_bar = _own_link_stats(st, scn.alpha_ul * scn.Q * scn.S)
    C = scn.C
    _, _, D, P = reference_sets(scn)
    P1 = [c for c in P if c != 0]
    masked_case = cfg.Q > 1 and cfg.J == C * (cfg.Q - 1) + 1
    sig_coeff = (C * scn.M - cfg.J * scn.S) / scn.S
    cont_coeff = C * scn.M / scn.S

    alphas, betas, e_sets, nums, dens = [], [], [], [], []
    for i, x in enumerate(scn.bin.root_locations):
        E = nearest_zf_clusters(scn.layout, scn.clusters, x, cfg.J,
                                within=[c for c in D if c != 0])
        plain = [c for c in D if c != 0 and c not in set(E)]
        g_plain = math.fsum((gains[i, 0, plain, :].mean(axis=1)).tolist())
        if not masked_case:
            alpha = math.fsum(sigma[i, 0, [0] + E, :].mean(axis=1).tolist()) + g_plain
        else:
            masked_terms = []
            for c in E:
                b_near = closest_bs_in_cluster(scn.layout, scn.clusters, x, c)
                far = [b for b in range(C) if b != b_near]
                masked_terms.append(sigma[i, 0, c, b_near]
                                    + math.fsum(gains[i, 0, c, far].tolist()))
            alpha = sigma[i, 0, 0, :].mean() + g_plain \
                + math.fsum(masked_terms) / C
        beta = math.fsum(
            (((gains[i, 0, P1, :] / gains[i, 0, 0, :][None]) ** 2
              * xi_own[i, P1, :]).sum(axis=1) / C).tolist()) if P1 else 0.0
        alphas.append(alpha)
        betas.append(beta)
        e_sets.append(E)
        nums.append(sig_coeff * xi_bar[i, 0])
        dens.append(1.0 / scn.F + alpha + cont_coeff * beta)
    coeffs = {"alpha_bar": np.array(alphas), "beta_bar": np.array(betas),
              "zf_neighbors": e_sets,
              "xi_bar": xi_bar[:, 0].copy()}
    return _finish(scn, cfg, nums, dens, coeffs)


def rate_massive_limit(scn, cfg=None, stats=None):
    """M -> infinity limit for C = 1, Q = 1: pilot contamination only.

    Independent of M, S and the uplink training power; isolated cells
    (empty contaminator set) are reported at the SINR guard cap with the
    `capped` flag set.
    """
    if scn.C != 1 or scn.Q != 1:
        raise ConfigurationError("the massive-antenna limit requires C = 1, Q = 1")
    st = stats or stats_for(scn)
    gains = st.gains
    _, _, _, P = reference_sets(scn)
    nums, dens = [], []
    for i in range(scn.m):
        nums.append(gains[i, 0, 0, 0] ** 2)
        dens.append(math.fsum(gains[i, 0, c, 0] ** 2 for c in P if c != 0))
    if cfg is None:
        cfg = SchemeConfig(scn.F, 1, 0, 1, scn.S, scn.M)
    return _finish(scn, cfg, nums, dens, {"massive_limit": True})


def group_rate(scn, cfg, stats=None):
    """Dispatch to the closed form matching (C, J)."""
    if cfg.J == 0:
        return rate_lsubf(scn, cfg, stats)
    if cfg.C == 1:
        return rate_lzfbf_single(scn, cfg, stats)
    return rate_lzfbf_cluster(scn, cfg, stats)
