"""Per-bin search for the best scheme (F, C, J, Q) and loading factor S.

The discrete scheme family is enumerated exhaustively; for each member the
overhead-penalized net rate max{1 - Q*S/L, 0} * R(S) is maximized over the
continuous loading interval with a coarse grid followed by bounded scalar
refinement. Feasibility (J*S < C*M, Q*S <= L) bounds the interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .asymptotic import (SchemeConfig, allowed_zf_orders, group_rate,
                         rate_massive_limit)
from .channel import make_scenario, stats_for
from .errors import ConfigurationError, FeasibilityError
from .geometry import assign_reuse, build_cluster_pattern, default_cluster_root

_S_MARGIN = 1e-9  # keep the grid strictly inside the feasible interval


@dataclass(frozen=True)
class SystemParams:
    """Scale factors shared by every scheme in a sweep."""

    M: float
    L: float
    alpha_ul: float = 10.0
    U: float | None = None
    bandwidth_hz: float = 20e6
    sinr_cap: float = 1e6


@dataclass(frozen=True)
class SchemeFamily:
    """The discrete scheme space plus loading-search settings."""

    frequencies: tuple = (1,)
    cluster_sizes: tuple = (1,)
    pilot_factors: tuple = (1,)
    zf_orders: tuple | None = None  # None: every order supported by (C, Q)
    cluster_mode: str = "switched"
    s_grid: int = 64
    s_tol: float = 1e-4

    def combos(self, layout):
        """All feasible (F, C, J, Q) tuples for this layout, in scan order."""
        out = []
        for F in self.frequencies:
            for C in self.cluster_sizes:
                for Q in self.pilot_factors:
                    try:
                        clusters = build_cluster_pattern(
                            layout, default_cluster_root(layout, C))
                        assign_reuse(layout, clusters, F, Q)
                    except ConfigurationError:
                        continue
                    for J in sorted(allowed_zf_orders(C, Q)):
                        if self.zf_orders is not None and J not in self.zf_orders:
                            continue
                        out.append((F, C, J, Q))
        if not out:
            raise ConfigurationError("the scheme family is empty for this layout")
        return out


@dataclass
class BinOptimum:
    """Best scheme for one bin plus the runner-up table."""

    bin_id: int
    representative: np.ndarray
    config: SchemeConfig
    net_rate: float
    group_rate: float
    ranking: list = field(default_factory=list)  # [(SchemeConfig, net), ...] desc
    baseline_net: float | None = None

    @property
    def gain_over_baseline(self):
        if not self.baseline_net:
            return None
        return self.net_rate / self.baseline_net


def loading_interval(F, C, J, Q, system):
    """Feasible loading range (0, s_max] for one scheme shape."""
    s_max = system.L / Q
    s_max = min(s_max, C * system.M / J) if J >= 1 else min(s_max, C * system.M)
    if s_max <= 0:
        raise FeasibilityError(f"no feasible loading for (F,C,J,Q)=({F},{C},{J},{Q})")
    return s_max


def best_loading(layout, pathloss, system, bin_rep, family, F, C, J, Q):
    """Maximize net(S) over the feasible interval; returns (S*, net*, rate*)."""
    scn0 = make_scenario(layout, pathloss, bin_rep, F=F, C=C, Q=Q, S=1e-6,
                         M=system.M, L=system.L, alpha_ul=system.alpha_ul,
                         U=system.U, sinr_cap=system.sinr_cap,
                         cluster_mode=family.cluster_mode)
    stats = stats_for(scn0)
    s_max = loading_interval(F, C, J, Q, system) * (1.0 - _S_MARGIN)

    def net(s):
        scn = scn0.with_loading(s)
        cfg = SchemeConfig(F, C, J, Q, s, system.M)
        rate = group_rate(scn, cfg, stats)
        return rate.net_rate

    n = family.s_grid
    grid = s_max * (np.arange(n) + 0.5) / n
    values = [net(s) for s in grid]
    k = int(np.argmax(values))
    lo = grid[k - 1] if k > 0 else grid[0] / 2
    hi = grid[k + 1] if k < n - 1 else s_max
    res = minimize_scalar(lambda s: -net(s), bounds=(lo, hi), method="bounded",
                          options={"xatol": family.s_tol})
    s_star, best = float(res.x), -float(res.fun)
    if values[k] > best:  # keep the grid point if refinement stalled
        s_star, best = float(grid[k]), values[k]
    cfg = SchemeConfig(F, C, J, Q, s_star, system.M)
    rate = group_rate(scn0.with_loading(s_star), cfg, stats)
    return s_star, rate.net_rate, rate


def optimize_bin(layout, pathloss, system, bin_rep, family, bin_id=0):
    """Exhaustive scheme search for one bin."""
    entries = []
    for F, C, J, Q in family.combos(layout):
        s_star, net, _ = best_loading(layout, pathloss, system, bin_rep,
                                      family, F, C, J, Q)
        entries.append((SchemeConfig(F, C, J, Q, s_star, system.M), net))
    entries.sort(key=lambda e: (-e[1], e[0].F, e[0].C, e[0].J, e[0].Q))
    best_cfg, best_net = entries[0]
    scn = make_scenario(layout, pathloss, bin_rep, F=best_cfg.F, C=best_cfg.C,
                        Q=best_cfg.Q, S=best_cfg.S, M=system.M, L=system.L,
                        alpha_ul=system.alpha_ul, U=system.U,
                        sinr_cap=system.sinr_cap,
                        cluster_mode=family.cluster_mode)
    rate = group_rate(scn, best_cfg)
    return BinOptimum(bin_id=bin_id, representative=np.asarray(bin_rep, dtype=float),
                      config=best_cfg, net_rate=best_net,
                      group_rate=rate.group_rate, ranking=entries[:5])


BASELINE = (1, 1, 0, 1)  # single-cell beamforming without pilot or frequency reuse


def baseline_net(layout, pathloss, system, bin_rep, family=None):
    """Net rate of the (1,1,0), Q=1 reference scheme with optimized loading."""
    fam = family or SchemeFamily()
    _, net, _ = best_loading(layout, pathloss, system, bin_rep, fam, *BASELINE)
    return net


def sweep_bins(layout, pathloss, system, bin_reps, family):
    """Per-bin optima over the family, annotated with the baseline ratio."""
    out = []
    for k, rep in enumerate(bin_reps):
        opt = optimize_bin(layout, pathloss, system, rep, family, bin_id=k)
        opt.baseline_net = baseline_net(layout, pathloss, system, rep, family)
        out.append(opt)
    return out


def baseline_massive_net(layout, pathloss, system, bin_rep):
    """Infinite-antenna net-rate asymptote of the baseline scheme.

    The limiting group rate is linear in S with a loading-independent SINR,
    so max_S (1 - S/L) * S * r1 is attained at S = L/2 with value L/4 * r1.
    """
    scn = make_scenario(layout, pathloss, bin_rep, F=1, C=1, Q=1, S=1.0,
                        M=max(system.M, 1.0), L=system.L,
                        alpha_ul=system.alpha_ul, sinr_cap=system.sinr_cap)
    r1 = rate_massive_limit(scn).group_rate  # rate at S = 1
    return system.L / 4.0 * r1
