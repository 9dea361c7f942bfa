"""Pathloss and uplink-training statistics (MMSE estimation, contamination).

Every user at location x + c' sends one pilot column; clusters sharing the
same training codebook observe the superposition of all same-pilot channels
plus noise. The per-link training statistics are

    gamma = g / ( 1/(a_ul*Q*S) + sum of contaminating gains )
    sigma = g / (1 + gamma)          (estimation-error variance)
    xi    = g - sigma                (estimate variance)

where g is the link gain toward the serving cluster's BS and the
contaminating gains come from the other groups that reuse the source
group's codebook. xi + sigma = g holds exactly by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DomainError
from .geometry import (BinPattern, ClusterPattern, Layout, ReuseAssignment,
                       assign_reuse, build_bin, build_cluster_pattern,
                       default_cluster_root)


@dataclass(frozen=True)
class PathlossModel:
    """Distance-based gain g(x, b) = G0 / (1 + (d(x, b)/delta)^alpha)."""

    reference_gain: float
    exponent: float
    breakpoint: float

    def __post_init__(self):
        if self.reference_gain <= 0 or self.exponent <= 0 or self.breakpoint <= 0:
            raise ConfigurationError("pathloss parameters must be positive")

    def gain(self, layout, x, b):
        d = layout.mod_distance(x, b)
        return self.reference_gain / (1.0 + (d / self.breakpoint) ** self.exponent)

    def gain_from_distance(self, d):
        d = np.asarray(d, dtype=float)
        return self.reference_gain / (1.0 + (d / self.breakpoint) ** self.exponent)


def pathloss(model, layout, x, b):
    """Average received power for a user at x from a BS antenna at b."""
    return model.gain(layout, x, b)


@dataclass(frozen=True)
class Scenario:
    """One fully specified operating point: geometry, pathloss and scale factors.

    M, L, U scale the antennas per BS, the coherence block and the users per
    location with the system size N; S is the loading factor (active users
    per N). U may be None when the user population is not modelled
    explicitly (e.g. for large-M limit evaluations).
    """

    layout: Layout
    clusters: ClusterPattern
    bin: BinPattern
    reuse: ReuseAssignment
    pathloss: PathlossModel
    M: float
    L: float
    S: float
    alpha_ul: float = 10.0
    U: float | None = None
    sinr_cap: float = 1e6

    def __post_init__(self):
        if self.S <= 0:
            raise ConfigurationError("loading factor S must be positive")
        if self.S > self.C * self.M + 1e-12:
            raise ConfigurationError(
                f"loading factor S={self.S} exceeds C*M={self.C * self.M}")
        if self.reuse.Q * self.S > self.L + 1e-12:
            raise ConfigurationError(
                f"training length Q*S={self.reuse.Q * self.S} exceeds the "
                f"coherence block L={self.L}")
        if self.alpha_ul <= 0:
            raise ConfigurationError("uplink training power must be positive")
        if self.U is not None and self.m * self.U < self.C * self.M - 1e-12:
            raise ConfigurationError(
                f"m*U={self.m * self.U} < C*M={self.C * self.M}: the system "
                "would not be fully loaded")

    @property
    def C(self):
        return self.clusters.size

    @property
    def m(self):
        return self.bin.multiplicity

    @property
    def F(self):
        return self.reuse.F

    @property
    def Q(self):
        return self.reuse.Q

    @property
    def training_len(self):
        """L_P = Q*S pilot dimensions per coherence block (times N)."""
        return self.reuse.Q * self.S

    def with_loading(self, S):
        return replace(self, S=S)

    def ref_subband(self):
        return int(self.reuse.subband[0])

    def ref_codebook(self):
        return int(self.reuse.codebook[0])


@dataclass(frozen=True)
class TrainingCoefficients:
    """Per-link training statistics (see module docstring)."""

    gamma: float
    sigma: float
    xi: float

    @property
    def gain(self):
        return self.xi + self.sigma


def training_coefficients(scn, x, c_src, c_serve, b):
    """Statistics of the estimate of the (x + c_src) user's channel at cluster
    c_serve, BS offset b.

    The contaminating set is P(q(c_src), f) minus the source itself: the
    groups whose users share the source group's training codebook. Source
    and serving cluster must operate on the same subband.
    """
    lay = scn.layout
    if scn.reuse.subband[c_src] != scn.reuse.subband[c_serve]:
        raise DomainError(
            f"clusters {c_src} and {c_serve} are not on the same subband")
    f = int(scn.reuse.subband[c_src])
    q = int(scn.reuse.codebook[c_src])
    x = np.asarray(x, dtype=float)
    bs = lay.bs_positions[c_serve] + scn.clusters.root_offsets[b]
    g = scn.pathloss.gain(lay, x + lay.bs_positions[c_src], bs)
    contamination = 0.0
    for c2 in scn.reuse.pilot_set(q, f):
        if c2 == c_src:
            continue
        contamination += scn.pathloss.gain(lay, x + lay.bs_positions[c2], bs)
    gamma = g / (1.0 / (scn.alpha_ul * scn.Q * scn.S) + contamination)
    sigma = g / (1.0 + gamma)
    return TrainingCoefficients(gamma=gamma, sigma=sigma, xi=g - sigma)


def aggregate_coefficients(scn, x, c):
    """Cluster-averaged coefficients (xi_bar_{c,c}, g_bar_{0,c}, sigma_bar_{0,c}).

    xi_bar averages the own-channel estimate variance of the (x + c) user
    over the BSs of its serving cluster c; g_bar and sigma_bar average the
    reference user's gain and estimation-error variance toward cluster c.
    """
    C = scn.C
    xi_bar = sum(training_coefficients(scn, x, c, c, b).xi for b in range(C)) / C
    lay = scn.layout
    g_bar = sum(scn.pathloss.gain(lay, x, lay.bs_positions[c] + off)
                for off in scn.clusters.root_offsets) / C
    sigma_bar = sum(training_coefficients(scn, x, 0, c, b).sigma
                    for b in range(C)) / C
    return xi_bar, g_bar, sigma_bar


class TrainingStats:
    """Precomputed link gains and training statistics for one geometry.

    Gains depend only on (layout, clusters, bin, pathloss); the training
    statistics additionally depend on the product alpha_ul * Q * S through
    the pilot-noise floor, so they are cached per value of that product.

    Tensor layout: [location i, source cluster c', serving cluster c, BS
    offset b]. Entries are only meaningful for (c', c) pairs on a common
    subband; others are never read.
    """

    def __init__(self, layout, clusters, bin_pattern, reuse, pathloss_model):
        self.layout = layout
        self.clusters = clusters
        self.bin = bin_pattern
        self.reuse = reuse
        self.pathloss = pathloss_model
        B, C, m = layout.num_bs, clusters.size, bin_pattern.multiplicity
        locs = bin_pattern.root_locations          # (m, d)
        reps = layout.bs_positions.astype(float)   # (B, d)
        offs = clusters.root_offsets.astype(float)  # (C, d)
        diffs = (locs[:, None, None, None, :] + reps[None, :, None, None, :]
                 - reps[None, None, :, None, :] - offs[None, None, None, :, :])
        dist = layout.mod_distance_many(diffs.reshape(-1, layout.dimension))
        gains = pathloss_model.gain_from_distance(dist).reshape(m, B, B, C)
        self.gains = gains
        # pilot-group bookkeeping: group id per cluster and summed gains per group
        group_of = np.full(B, -1, dtype=int)
        groups = []
        for f in range(reuse.F):
            for q in range(reuse.Q):
                members = reuse.pilot_set(q, f)
                if members:
                    for c in members:
                        group_of[c] = len(groups)
                    groups.append(members)
        self.group_of = group_of
        self.groups = groups
        sums = np.zeros((m, len(groups), B, C))
        for gid, members in enumerate(groups):
            sums[:, gid] = gains[:, members].sum(axis=1)
        self.group_sums = sums
        self._cache = {}

    def coefficients(self, alpha_qs):
        """(gamma, sigma, xi) tensors for a given alpha_ul * Q * S product."""
        key = float(alpha_qs)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        noise = 1.0 / key
        # contamination sum first: subtracting the own gain from the group
        # total is exact for singleton groups and must never go negative
        cont = np.maximum(self.group_sums[:, self.group_of] - self.gains, 0.0)
        gamma = self.gains / (cont + noise)
        sigma = self.gains / (1.0 + gamma)
        xi = self.gains - sigma
        out = (gamma, sigma, xi)
        self._cache[key] = out
        return out

    def mmse_scale(self, alpha_qs):
        """Diagonal MMSE filter coefficients g / (noise + total same-pilot gain)."""
        noise = 1.0 / float(alpha_qs)
        total = noise + self.group_sums[:, self.group_of]
        return self.gains / total

    def identity_residual(self, alpha_qs):
        """max |xi + sigma - g| over all links (should be exactly 0)."""
        _, sigma, xi = self.coefficients(alpha_qs)
        return float(np.abs(xi + sigma - self.gains).max())


def stats_for(scn):
    """TrainingStats for a scenario (geometry-level cache key is the caller's job)."""
    return TrainingStats(scn.layout, scn.clusters, scn.bin, scn.reuse, scn.pathloss)


def make_scenario(layout, pathloss_model, bin_rep, F, C, Q, S, M, L,
                  alpha_ul=10.0, U=None, sinr_cap=1e6, cluster_mode="fixed",
                  locations=None):
    """Assemble a Scenario for one scheme shape anchored at one bin.

    `cluster_mode="switched"` re-roots a C > 1 cluster so that its symmetry
    center is the one closest to the bin representative among the C clusters
    containing BS 0. With bin representatives kept in the canonical sector
    (1-D x in [0, 1/2], 2-D one 120-degree wedge) this coincides with the
    fixed root pattern.
    """
    root = default_cluster_root(layout, C)
    if cluster_mode == "switched" and C > 1 and bin_rep is not None:
        root = _closest_root(layout, root, bin_rep)
    elif cluster_mode not in ("fixed", "switched"):
        raise ConfigurationError(f"unknown cluster_mode {cluster_mode!r}")
    clusters = build_cluster_pattern(layout, root)
    bin_pattern = build_bin(layout, clusters, representative=bin_rep,
                            locations=locations)
    reuse = assign_reuse(layout, clusters, F, Q)
    return Scenario(layout, clusters, bin_pattern, reuse, pathloss_model,
                    M=M, L=L, S=S, alpha_ul=alpha_ul, U=U, sinr_cap=sinr_cap)


def _closest_root(layout, root, bin_rep):
    """Among the C clusters containing BS 0, the root whose center is nearest."""
    x = np.asarray(bin_rep, dtype=float)
    candidates = []
    for anchor in root:
        shifted = np.vstack([np.zeros_like(anchor),
                             *(r - anchor for r in root
                               if not np.array_equal(r, anchor))])
        d = layout.mod_distance(x, shifted.mean(axis=0).astype(float))
        candidates.append((round(d, 9), tuple(shifted.ravel().tolist()), shifted))
    return min(candidates, key=lambda t: t[:2])[2]
