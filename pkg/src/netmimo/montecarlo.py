"""Finite-size Monte Carlo oracle: training, precoding and rate estimation.

Channels are drawn per antenna block, the contaminated training observation
is formed explicitly, estimates come from the diagonal MMSE filter and the
precoders from the column-normalized pseudo-inverse of the (possibly
masked) estimate matrix. Rates use the worst-case-uncorrelated-noise bound,
whose SINR conditions on the user's own beam and channel estimate and
averages everything else: per trial the useful power |v_k^H hhat_k|^2 / S
is kept, the estimation-error leakage enters through its exact conditional
second moment given v_k, and the remaining beam powers |v_j^H h_k|^2 / S
(exact codebook expectation) are averaged across trials and users of the
same location before entering the SINR. log2(1 + SINR) is then averaged
over trials. Evaluating the denominator per realization instead would bias
the estimate upward by roughly Var(I)/E[I]^2 (about +11% for the J = 0
scheme at N = 1), which the large-system formulas do not contain.

Only the reference cluster's group is rate-measured; every cluster active
on the reference subband is fully simulated as an interferer. When the
active clusters share no BS (C = 1, or frequency reuse separating the
translates) the non-reference interfering channels are drawn directly as
their Gaussian aggregate, which is statistically exact and much cheaper;
overlapping clusters fall back to explicit per-(group, BS) blocks shared
between observations.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asymptotic import reference_sets
from .channel import stats_for
from .errors import ConfigurationError, SingularRealizationError
from .geometry import closest_bs_in_cluster, nearest_zf_clusters

_RANK_RTOL = 1e-12
_MAX_RESAMPLES = 5
DEFAULT_BATCH = 128


# -- simulation plan ----------------------------------------------------------

@dataclass(frozen=True)
class ZFColumn:
    """One block of pseudo-inverse columns: the users at one location of one
    group, as estimated by the cluster under construction. mask_bs selects
    the single BS block kept in the estimate (None = full vector)."""

    src: int
    loc: int
    mask_bs: int | None = None


@dataclass
class ClusterPlan:
    cluster: int
    codebooks: list
    constraints: list = field(default_factory=list)


class SimulationPlan:
    """Static structure of one finite-N simulation (no randomness)."""

    def __init__(self, scn, cfg, N):
        if cfg is not None and cfg.J not in (0, 1, cfg.Q, scn.C * (cfg.Q - 1) + 1):
            raise ConfigurationError(f"unsupported ZF order J={cfg.J}")
        self.scn = scn
        self.cfg = cfg
        self.N = int(N)
        m = scn.m
        upl = max(1, round(scn.S * N / m))
        s_eff = upl * m / N
        if abs(s_eff - scn.S) > 0.01 * scn.S:
            warnings.warn(
                f"S*N/m={scn.S * N / m:.3f} rounded to {upl} users per location "
                f"(effective S={s_eff:g})", stacklevel=2)
        self.users_per_loc = upl
        self.s_eff = s_eff
        self.sn = upl * m
        self.mn = int(scn.M * N)
        self.cmn = scn.C * self.mn
        self.f0, self.q0, self.active, self.pilots = reference_sets(scn)
        self.stats = stats_for(scn)
        self.mmse = self.stats.mmse_scale(scn.alpha_ul * scn.Q * scn.S)
        self.noise_var = 1.0 / (scn.alpha_ul * scn.Q * scn.S * N)
        # estimation-error variances of the reference users at their own cluster
        self.sigma00 = self.stats.coefficients(scn.alpha_ul * scn.Q * scn.S)[1][:, 0, 0, :]
        self.err_var = _expand(np.repeat(self.sigma00, self.users_per_loc, axis=0).T,
                               self.mn) / N
        self._build_cluster_plans()
        self._check_disjoint()
        if self.disjoint:
            self._precompute_cluster_data()

    def _build_cluster_plans(self):
        scn, cfg = self.scn, self.cfg
        J = cfg.J if cfg is not None else 0
        reuse = scn.reuse
        e_sets = []
        for x in scn.bin.root_locations:
            if J >= 2:
                e_sets.append(set(nearest_zf_clusters(
                    scn.layout, scn.clusters, x, J,
                    within=[c for c in self.active if c != 0])))
            else:
                e_sets.append(set())
        self.e_sets = e_sets
        masked = J == scn.C * (scn.Q - 1) + 1 and scn.C > 1 and scn.Q > 1
        self.masked = masked
        plans = {}
        for c in self.active:
            plan = ClusterPlan(cluster=c, codebooks=[int(reuse.codebook[c])])
            if J >= 2:
                found = {}
                for c2 in self.active:
                    if c2 == c or reuse.codebook[c2] == reuse.codebook[c]:
                        continue
                    rel = scn.layout.bs_sub(c, c2)
                    for i, x in enumerate(scn.bin.root_locations):
                        if rel not in e_sets[i]:
                            continue
                        mask = None
                        if masked:
                            y = x + scn.layout.bs_positions[c2] - scn.layout.bs_positions[c]
                            mask = closest_bs_in_cluster(scn.layout, scn.clusters, y, 0)
                        key = (int(reuse.codebook[c2]), i, mask)
                        prev = found.get(key)
                        if prev is None or self._gain_to(c2, i, c) > self._gain_to(prev, i, c):
                            found[key] = c2
                order = sorted(found.items(),
                               key=lambda kv: (kv[1], kv[0][1],
                                               -1 if kv[0][2] is None else kv[0][2]))
                for (q, i, mask), c2 in order:
                    plan.constraints.append(ZFColumn(src=c2, loc=i, mask_bs=mask))
                    if q not in plan.codebooks:
                        plan.codebooks.append(q)
            plans[c] = plan
        self.cluster_plans = plans
        for c, plan in plans.items():
            ncols = self.sn + len(plan.constraints) * self.users_per_loc
            if ncols > self.cmn and (cfg is None or cfg.J > 0):
                raise ConfigurationError(
                    f"cluster {c} collects {ncols} ZF columns but has only "
                    f"{self.cmn} antennas")

    def _gain_to(self, c2, loc, c):
        """Average gain from the (loc, c2) users to cluster c (dedupe metric)."""
        return float(self.stats.gains[loc, c2, c].mean())

    def _precompute_cluster_data(self):
        """Per-cluster draw scales for the disjoint fast path.

        For codebooks other than the cluster's own, only the pilot columns
        actually referenced by ZF constraints are drawn.
        """
        upl, mn = self.users_per_loc, self.mn
        self.cluster_data = {}
        for c in self.active:
            cplan = self.cluster_plans[c]
            q_own = int(self.scn.reuse.codebook[c])
            extra_cols = {}
            for col in cplan.constraints:
                q = int(self.scn.reuse.codebook[col.src])
                if q == q_own:
                    continue
                cols = extra_cols.setdefault(q, set())
                cols.update(range(col.loc * upl, (col.loc + 1) * upl))
            extra = {}
            for q, cols in sorted(extra_cols.items()):
                idx = np.array(sorted(cols))
                scale = _expand(self.aggregate_std(c, q)[:, idx], mn)
                extra[q] = (idx, scale)
            cons = []
            for col in cplan.constraints:
                q = int(self.scn.reuse.codebook[col.src])
                idx = extra[q][0]
                sel = np.searchsorted(idx, np.arange(col.loc * upl, (col.loc + 1) * upl))
                coeff = _expand(self.mmse_cols(col.src, c)[:, col.loc * upl:(col.loc + 1) * upl], mn)
                if col.mask_bs is not None:
                    coeff = coeff.copy()
                    keep = np.zeros_like(coeff)
                    keep[col.mask_bs * mn:(col.mask_bs + 1) * mn] = 1.0
                    coeff *= keep
                cons.append((q, sel, coeff))
            self.cluster_data[c] = {
                "q_own": q_own,
                "scale_ref": _expand(self.ref_std(c), mn),
                "scale_own": _expand(self.aggregate_std(c, q_own), mn),
                "mmse_own": _expand(self.mmse_cols(c, c), mn),
                "extra": extra,
                "cons": cons,
            }

    def _check_disjoint(self):
        seen = set()
        self.disjoint = True
        for c in self.active:
            for b in self.scn.clusters.cluster_bss(c):
                if b in seen:
                    self.disjoint = False
                seen.add(b)

    # -- per-column standard deviations --------------------------------------

    def ref_std(self, c):
        """Column stds of the reference group's channels toward cluster c."""
        g = self.stats.gains[:, 0, c, :]  # (m, C)
        per_loc = np.sqrt(g / self.N)     # (m, C)
        return np.repeat(per_loc, self.users_per_loc, axis=0).T  # (C, SN)

    def aggregate_std(self, c, q):
        """Column stds of noise plus all non-reference same-pilot channels."""
        members = [c2 for c2 in self.scn.reuse.pilot_set(q, self.f0) if c2 != 0]
        var = np.full((self.scn.m, self.scn.C), self.noise_var)
        for c2 in members:
            var += self.stats.gains[:, c2, c, :] / self.N
        return np.sqrt(np.repeat(var, self.users_per_loc, axis=0).T)

    def mmse_cols(self, src, c):
        """Per-(BS block, column) MMSE filter coefficients for group src at c."""
        mu = self.mmse[:, src, c, :]  # (m, C)
        return np.repeat(mu, self.users_per_loc, axis=0).T  # (C, SN)


def _complex_normal(gen, shape):
    re = gen.standard_normal(shape)
    im = gen.standard_normal(shape)
    return (re + 1j * im) / math.sqrt(2.0)


def _expand(col_std, mn):
    """(C, SN) per-block column scales -> (CMN, SN) row scales."""
    return np.repeat(col_std, mn, axis=0)


def _unit_columns(v):
    return v / np.linalg.norm(v, axis=-2, keepdims=True)


def _pinv_columns(mat, keep):
    """First `keep` columns of M (M^H M)^{-1}, via a rank-revealing SVD.

    Returns (columns, ok_mask): ok_mask flags trials whose matrix was
    numerically full column rank.
    """
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    ok = s[..., -1] > _RANK_RTOL * s[..., 0]
    inv = np.divide(1.0, s, out=np.zeros_like(s), where=s > _RANK_RTOL * s[..., :1])
    pinv_h = u @ (inv[..., None] * vh)
    return pinv_h[..., :keep], ok


_ZF_RESIDUAL_GUARD = 1e-6


def _zf_columns(mat, keep):
    """First `keep` columns of M (M^H M)^{-1} via the normal equations.

    Verifies the zero-forcing property directly: M^H V must equal the
    leading identity block to within _ZF_RESIDUAL_GUARD (dimensionless),
    which catches numerically rank-deficient draws; those trials are
    resampled by the caller.
    """
    mh = np.swapaxes(mat, -1, -2).conj()
    gram = mh @ mat
    k = gram.shape[-1]
    rhs = np.eye(k, keep, dtype=complex)
    try:
        x = np.linalg.solve(gram, np.broadcast_to(rhs, gram.shape[:-2] + rhs.shape).copy())
    except np.linalg.LinAlgError:
        return None, False
    v = mat @ x
    resid = np.abs(mh @ v - rhs)
    ok = bool(resid.reshape(resid.shape[0], -1).max(axis=1).max() < _ZF_RESIDUAL_GUARD)
    return v, ok


# -- batched engine -----------------------------------------------------------

def _batch_generator(seed, batch_idx, retry):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(batch_idx), int(retry)))
    return np.random.Generator(np.random.Philox(ss))


def _simulate_batch(plan, size, gen):
    """Simulate `size` trials.

    Returns (signal, self_err, interference) per (trial, reference user):
    signal is |v_k^H hhat_k|^2, self_err the exact conditional second moment
    of the estimation-error leakage given v_k, and interference the summed
    cross-beam powers |v_j^H h_k|^2. Returns None on a rank failure so the
    caller can resample.
    """
    scn = plan.scn
    upl, sn = plan.users_per_loc, plan.sn
    mn, cmn = plan.mn, plan.cmn
    J = plan.cfg.J if plan.cfg is not None else 0

    blocks = _SharedBlocks(plan, size, gen) if not plan.disjoint else None
    signal = np.zeros((size, sn))
    self_err = np.zeros((size, sn))
    interference = np.zeros((size, sn))
    err_var = plan.err_var

    for c in plan.active:
        cplan = plan.cluster_plans[c]
        if blocks is None:
            data = plan.cluster_data[c]
            href = _complex_normal(gen, (size, cmn, sn)) * data["scale_ref"]
            obs_own = _complex_normal(gen, (size, cmn, sn)) * data["scale_own"]
            if data["q_own"] == plan.q0:
                obs_own += href
            own = obs_own * data["mmse_own"]
            cols = [own]
            extra_obs = {}
            for q, (idx, scale) in data["extra"].items():
                o = _complex_normal(gen, (size, cmn, len(idx))) * scale
                if q == plan.q0:
                    o = o + href[:, :, idx]
                extra_obs[q] = o
            for q, sel, coeff in data["cons"]:
                cols.append(extra_obs[q][:, :, sel] * coeff)
        else:
            href, obs = blocks.observe(c, cplan.codebooks)
            own = obs[int(scn.reuse.codebook[c])] * _expand(plan.mmse_cols(c, c), mn)
            cols = [own]
            for col in cplan.constraints:
                src_obs = obs[int(scn.reuse.codebook[col.src])]
                sl = slice(col.loc * upl, (col.loc + 1) * upl)
                est = src_obs[:, :, sl] * _expand(plan.mmse_cols(col.src, c)[:, sl], mn)
                if col.mask_bs is not None:
                    keep = np.zeros((cmn, 1))
                    keep[col.mask_bs * mn:(col.mask_bs + 1) * mn] = 1.0
                    est = est * keep
                cols.append(est)

        if J == 0:
            v = _unit_columns(own)
        else:
            mat = np.concatenate(cols, axis=2) if len(cols) > 1 else cols[0]
            v, ok = _zf_columns(mat, sn)
            if not ok:
                return None
            v = _unit_columns(v)

        w_true = np.swapaxes(v, 1, 2).conj() @ href  # (size, beams, ref users)
        p_true = np.abs(w_true) ** 2
        if c == 0:
            w_est = np.swapaxes(v, 1, 2).conj() @ own
            diag = np.arange(sn)
            signal += np.abs(w_est[:, diag, diag]) ** 2
            # E[|v_k^H e_k|^2 | v_k] = sum over rows of |v_k|^2 sigma_row / N
            self_err += np.einsum("tik,ik->tk", np.abs(v) ** 2, err_var)
            interference += p_true.sum(axis=1) - np.abs(w_true[:, diag, diag]) ** 2
        else:
            interference += p_true.sum(axis=1)

        if blocks is not None:
            blocks.release(c)

    return signal, self_err, interference


class _BlockSource:
    """Lazily drawn per-(group, BS) channel blocks and per-(codebook, BS)
    training noise blocks. With a fixed draw order (the cluster loop) the
    stream is deterministic for a given generator."""

    def __init__(self, plan, size, gen):
        self.plan = plan
        self.size = size
        self.gen = gen
        self._chan = {}
        self._noise = {}
        scn = plan.scn
        lay = scn.layout
        self.bs_of = {c: [lay.bs_id(lay.bs_positions[c] + off)
                          for off in scn.clusters.root_offsets]
                      for c in plan.active}

    def _col_std_chan(self, c2, b):
        scn = self.plan.scn
        lay = scn.layout
        g = np.array([scn.pathloss.gain(lay, x + lay.bs_positions[c2],
                                        lay.bs_positions[b])
                      for x in scn.bin.root_locations])
        std = np.sqrt(g / self.plan.N)
        return np.repeat(std, self.plan.users_per_loc)

    def chan_block(self, c2, b):
        key = (c2, b)
        blk = self._chan.get(key)
        if blk is None:
            std = self._col_std_chan(c2, b)[None, None, :]
            blk = _complex_normal(self.gen, (self.size, self.plan.mn, self.plan.sn)) * std
            self._chan[key] = blk
        return blk

    def noise_block(self, q, b):
        key = (q, b)
        blk = self._noise.get(key)
        if blk is None:
            blk = _complex_normal(self.gen, (self.size, self.plan.mn, self.plan.sn)) \
                * math.sqrt(self.plan.noise_var)
            self._noise[key] = blk
        return blk


class _SharedBlocks(_BlockSource):
    """Block source with reference counting so overlapping clusters share
    channels and noise while memory stays bounded to the working set."""

    def __init__(self, plan, size, gen):
        super().__init__(plan, size, gen)
        need = {}
        for c in plan.active:
            for q in plan.cluster_plans[c].codebooks:
                for c2 in plan.scn.reuse.pilot_set(q, plan.f0):
                    for b in self.bs_of[c]:
                        need[(c2, b)] = need.get((c2, b), 0) + 1
                for b in self.bs_of[c]:
                    need[("noise", q, b)] = need.get(("noise", q, b), 0) + 1
            if plan.q0 not in plan.cluster_plans[c].codebooks:
                for b in self.bs_of[c]:  # reference channels for the rate side
                    need[(0, b)] = need.get((0, b), 0) + 1
        self._need = need

    def observe(self, c, codebooks):
        plan = self.plan
        scn = plan.scn
        bss = self.bs_of[c]
        href = np.concatenate([self.chan_block(0, b) for b in bss], axis=1)
        obs = {}
        for q in codebooks:
            members = scn.reuse.pilot_set(q, plan.f0)
            parts = []
            for b in bss:
                acc = self.noise_block(q, b).copy()
                for c2 in members:
                    acc += self.chan_block(c2, b)
                parts.append(acc)
            obs[q] = np.concatenate(parts, axis=1)
        return href, obs

    def release(self, c):
        plan = self.plan
        for q in plan.cluster_plans[c].codebooks:
            for c2 in plan.scn.reuse.pilot_set(q, plan.f0):
                for b in self.bs_of[c]:
                    self._drop((c2, b))
            for b in self.bs_of[c]:
                self._drop(("noise", q, b))
        if plan.q0 not in plan.cluster_plans[c].codebooks:
            for b in self.bs_of[c]:
                self._drop((0, b))

    def _drop(self, key):
        self._need[key] -= 1
        if self._need[key] == 0:
            if key[0] == "noise":
                self._noise.pop((key[1], key[2]), None)
            else:
                self._chan.pop(key, None)


# -- public API ---------------------------------------------------------------

def csv_diagnostics(stream):
    """Adapter turning a text stream into a per-trial diagnostics callback.

    Writes one `trial,location,sinr,rate` row per (trial, location); pass the
    result as `estimate_rates(..., diagnostics=...)`.
    """
    stream.write("trial,location,sinr,rate\n")

    def write(trial, location, sinr, rate):
        stream.write(f"{trial},{location},{sinr:.12g},{rate:.12g}\n")

    return write


@dataclass
class RateEstimate:
    """Per-location and group-rate Monte Carlo estimates with standard errors."""

    locations: np.ndarray
    per_location_rate: np.ndarray
    per_location_se: np.ndarray
    per_location_sinr: np.ndarray
    group_rate: float
    group_se: float
    trials: int
    resamples: int
    effective_s: float


def estimate_rates(scn, cfg, N, trials, seed, threads=1, batch=DEFAULT_BATCH,
                   diagnostics=None):
    """Monte Carlo per-location and group spectral efficiencies.

    Deterministic for a fixed (config, seed): trials are split into fixed
    batches with counter-based substreams, so results do not depend on the
    thread count. The cross-beam interference is pooled across all trials
    and users of a location before entering the SINR (see the module
    docstring); the reported standard errors treat that pooled mean as
    fixed, which is accurate once trials >> 1. `diagnostics`, if given, is
    called with (trial, location, sinr, rate) rows.
    """
    if trials < 1:
        raise ConfigurationError("need at least one trial")
    if cfg is None:
        raise ConfigurationError("estimate_rates needs a scheme configuration")
    plan = SimulationPlan(scn, cfg, N)
    m, upl = scn.m, plan.users_per_loc
    sizes = [min(batch, trials - i) for i in range(0, trials, batch)]

    def run(idx_size):
        idx, size = idx_size
        for retry in range(_MAX_RESAMPLES):
            gen = _batch_generator(seed, idx, retry)
            out = _simulate_batch(plan, size, gen)
            if out is not None:
                return idx, size, retry, out
        raise SingularRealizationError(
            "rank-deficient channel realizations persisted across resampling",
            seed_info={"seed": seed, "batch": idx})

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, enumerate(sizes)))
    else:
        results = [run(t) for t in enumerate(sizes)]
    results.sort(key=lambda r: r[0])

    resamples = sum(r[2] for r in results)
    signal = np.concatenate([r[3][0] for r in results])        # (trials, SN)
    self_err = np.concatenate([r[3][1] for r in results])
    interference = np.concatenate([r[3][2] for r in results])

    # pooled conditional-mean interference per location
    pooled = interference.reshape(trials, m, upl).mean(axis=(0, 2))  # (m,)
    denom = 1.0 / scn.F + (self_err + np.repeat(pooled, upl)[None, :]) / plan.s_eff
    sinr = (signal / plan.s_eff) / denom
    rates = np.log2(1.0 + sinr)
    loc_rates = rates.reshape(trials, m, upl).mean(axis=2)
    loc_sinrs = sinr.reshape(trials, m, upl).mean(axis=2)

    if diagnostics is not None:
        for t in range(trials):
            for i in range(m):
                diagnostics(t, i, loc_sinrs[t, i], loc_rates[t, i])

    factor = plan.s_eff / (scn.m * scn.F)
    group = factor * loc_rates.sum(axis=1)
    loc_mean = loc_rates.mean(axis=0)
    loc_se = loc_rates.std(axis=0, ddof=0) / math.sqrt(trials)
    return RateEstimate(
        locations=scn.bin.root_locations.copy(),
        per_location_rate=loc_mean,
        per_location_se=loc_se,
        per_location_sinr=loc_sinrs.mean(axis=0),
        group_rate=float(group.mean()),
        group_se=float(group.std(ddof=0) / math.sqrt(trials)),
        trials=trials,
        resamples=resamples,
        effective_s=plan.s_eff,
    )


@dataclass
class ChannelRealization:
    """One finite-N draw of all channels and estimates on the reference subband.

    true_channels[(src, serve)] holds the channels of group src's users to
    cluster serve's antennas (CMN x SN, columns ordered by location then
    user); estimates are the corresponding MMSE estimates from the
    contaminated observations and errors their difference. Intended for
    inspection and validation at small system sizes.
    """

    plan: SimulationPlan
    seed: int
    true_channels: dict
    estimates: dict

    @property
    def users_per_location(self):
        return self.plan.users_per_loc

    def error(self, src, serve):
        return self.true_channels[(src, serve)] - self.estimates[(src, serve)]


def simulate_training(scn, N, seed):
    """Draw one complete training realization (all groups on the subband).

    Uses the explicit shared-block path so that overlapping clusters see
    consistent channels and noise.
    """
    plan = SimulationPlan(scn, None, N)
    gen = _batch_generator(seed, 0, 0)
    blocks = _SharedBlocksFull(plan, gen)
    true = {}
    est = {}
    for serve in plan.active:
        for src in plan.active:
            true[(src, serve)] = blocks.channel(src, serve)
    for serve in plan.active:
        obs = {}
        for src in plan.active:
            q = int(scn.reuse.codebook[src])
            if q not in obs:
                obs[q] = blocks.observation(serve, q)
            mu = _expand(plan.mmse_cols(src, serve), plan.mn)
            est[(src, serve)] = obs[q] * mu
    return ChannelRealization(plan=plan, seed=seed, true_channels=true, estimates=est)


class _SharedBlocksFull(_BlockSource):
    """Eager single-trial variant keeping every (group, BS) block."""

    def __init__(self, plan, gen):
        super().__init__(plan, 1, gen)
        bs_ids = sorted({b for bs in self.bs_of.values() for b in bs})
        for c2 in plan.active:
            for b in bs_ids:
                self.chan_block(c2, b)
        for q in sorted({int(plan.scn.reuse.codebook[c]) for c in plan.active}):
            for b in bs_ids:
                self.noise_block(q, b)

    def channel(self, src, serve):
        return np.concatenate([self.chan_block(src, b)[0]
                               for b in self.bs_of[serve]], axis=0)

    def observation(self, serve, q):
        members = self.plan.scn.reuse.pilot_set(q, self.plan.f0)
        parts = []
        for b in self.bs_of[serve]:
            acc = self.noise_block(q, b)[0].copy()
            for c2 in members:
                acc += self.chan_block(c2, b)[0]
            parts.append(acc)
        return np.concatenate(parts, axis=0)


@dataclass
class Precoder:
    """Beamforming matrix of one cluster plus the structure that built it."""

    V: np.ndarray
    scheme: int  # J
    cluster: int
    masks: list
    constraint_matrix: np.ndarray
    own_estimates: np.ndarray


def _assemble_precoder(plan, cluster, estimate_of, J, seed):
    """Stack the (masked) estimate columns and column-normalize the
    pseudo-inverse; `estimate_of(src)` returns the full estimate matrix of
    group src at `cluster`."""
    cplan = plan.cluster_plans[cluster]
    own = estimate_of(cluster)
    cols = [own]
    masks = []
    for col in cplan.constraints:
        sl = slice(col.loc * plan.users_per_loc, (col.loc + 1) * plan.users_per_loc)
        est = estimate_of(col.src)[:, sl].copy()
        if col.mask_bs is not None:
            keep = np.zeros((plan.cmn, 1))
            keep[col.mask_bs * plan.mn:(col.mask_bs + 1) * plan.mn] = 1.0
            est = est * keep
        cols.append(est)
        masks.append((col.src, col.loc, col.mask_bs))
    mat = np.concatenate(cols, axis=1)
    if J == 0:
        v = _unit_columns(own)
    else:
        v, ok = _pinv_columns(mat[None], plan.sn)
        if not ok.all():
            raise SingularRealizationError(
                "rank-deficient estimate matrix", seed_info={"seed": seed})
        v = _unit_columns(v[0])
    return Precoder(V=v, scheme=J, cluster=cluster, masks=masks,
                    constraint_matrix=mat, own_estimates=own)


def build_precoder(real, scn, cfg, cluster=0):
    """Build the cluster's precoder from a training realization."""
    plan = SimulationPlan(scn, cfg, real.plan.N)
    return _assemble_precoder(
        plan, cluster, lambda src: real.estimates[(src, cluster)], cfg.J,
        real.seed)


def sample_precoder(scn, cfg, N, seed, cluster=0):
    """Draw one cluster's training observation and build its precoder.

    Much cheaper than `simulate_training` + `build_precoder` because only
    the blocks reaching this cluster's antennas are drawn; intended for
    precoder-statistics studies such as the partial-trace table.
    """
    plan = SimulationPlan(scn, cfg, N)
    gen = _batch_generator(seed, 0, 0)
    blocks = _BlockSource(plan, 1, gen)
    bss = blocks.bs_of[cluster]
    obs = {}
    for q in sorted(plan.cluster_plans[cluster].codebooks):
        members = scn.reuse.pilot_set(q, plan.f0)
        parts = []
        for b in bss:
            acc = blocks.noise_block(q, b)[0].copy()
            for c2 in members:
                acc += blocks.chan_block(c2, b)[0]
            parts.append(acc)
        obs[q] = np.concatenate(parts, axis=0)

    def estimate_of(src):
        q = int(scn.reuse.codebook[src])
        return obs[q] * _expand(plan.mmse_cols(src, cluster), plan.mn)

    return _assemble_precoder(plan, cluster, estimate_of, cfg.J, seed)


def partial_trace_profile(precoder, scn):
    """Per-BS normalized diagonal block traces of V V^H.

    Each entry is sum of |V|^2 over one BS's antenna rows divided by the
    number of beams; entries sum to 1 exactly (unit-norm columns) and each
    tends to 1/C as the system grows.
    """
    v = precoder.V
    rows, n_beams = v.shape
    mn = rows // scn.C
    power = np.abs(v) ** 2
    return np.array([power[b * mn:(b + 1) * mn].sum() / n_beams
                     for b in range(scn.C)])


def zf_residuals(precoder):
    """max_j |v_j^H h_col| / ||h_col|| over all imposed constraint columns."""
    v = precoder.V
    mat = precoder.constraint_matrix
    w = np.abs(v.conj().T @ mat)  # (beams, columns)
    sn = v.shape[1]
    norms = np.linalg.norm(mat, axis=0)
    worst = 0.0
    for k in range(mat.shape[1]):
        r = w[:, k].copy()
        if k < sn:
            r[k] = 0.0  # beam k is not constrained against its own user
        worst = max(worst, float(r.max() / norms[k]))
    return worst
