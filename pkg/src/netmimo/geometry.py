"""Lattice-based cellular geometry: layouts, clusters, user bins, reuse sets.

The coverage region is the Voronoi cell of a coarse lattice around the
origin; base stations sit on a finer lattice inside it and the whole
geometry wraps around that cell (torus), so there are no border effects.
Points are stored in BS-lattice coordinates (integers for BSs, fractions
for user locations), which makes modular reduction exact; distances are
evaluated in physical units after applying the lattice generator matrix.

Supported layouts:
  * 1-D ring of B cells (BS lattice Z, coverage lattice B*Z).
  * 2-D hexagonal 19-cell wrap-around layout (triangular BS lattice with
    generator A, coverage sublattice of index 19).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SymmetryViolationError

# 60-degree rotation of the triangular lattice, in lattice coordinates.
HEX_ROT60 = np.array([[0, -1], [1, 1]])
HEX_ROT120 = HEX_ROT60 @ HEX_ROT60

# Index-19 coverage sublattice of the triangular BS lattice (det = 19);
# this is the classical 19-cell hexagonal wrap-around layout.
_COARSE_19 = np.array([[5, 2], [-2, 3]])

_TIE_EPS = 1e-9


def hex_sublattice_generator(n):
    """Integer generator of the index-n triangular sublattice, n = i^2+i*j+j^2.

    Columns are (i, j) and (-j, i+j) in BS-lattice coordinates; these span
    the standard reuse-n sublattice of a hexagonal layout.
    """
    for i in range(int(math.isqrt(n)) + 1, -1, -1):
        for j in range(i + 1):
            if i * i + i * j + j * j == n:
                return np.array([[i, -j], [j, i + j]])
    raise ConfigurationError(
        f"{n} is not of the form i^2+i*j+j^2 (valid: 1, 3, 4, 7, 9, 12, ...)")


@dataclass(frozen=True)
class Layout:
    """Cell layout on a torus defined by nested lattices.

    Attributes
    ----------
    dimension : 1 or 2.
    num_bs : number of base stations B inside the coverage cell.
    bs_basis : (d, d) physical generator of the BS lattice.
    coarse_int : (d, d) integer generator of the coverage lattice, in
        BS-lattice coordinates.
    bs_positions : (B, d) integer canonical representatives of the BSs;
        index 0 is always the origin.
    hex_radius : hexagon center-to-vertex distance r (2-D only, km).
    user_grid_density : points of the user grid per BS spacing (1-D).
    user_grid_offset : (d,) fractional translate u0 of the user grid.
    """

    dimension: int
    num_bs: int
    bs_basis: np.ndarray
    coarse_int: np.ndarray
    bs_positions: np.ndarray
    hex_radius: float | None = None
    user_grid_density: int | None = None
    user_grid_offset: np.ndarray | None = None
    _bs_index: dict = field(default_factory=dict, repr=False, compare=False)
    _reduce_offsets: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        offs = np.array(list(itertools.product(range(-2, 3), repeat=self.dimension)))
        object.__setattr__(self, "_reduce_offsets", offs)
        index = {tuple(int(v) for v in p): i for i, p in enumerate(self.bs_positions)}
        object.__setattr__(self, "_bs_index", index)

    # -- coordinate helpers -------------------------------------------------

    def to_physical(self, p):
        """Map BS-lattice coordinates to physical coordinates."""
        return self.bs_basis @ np.asarray(p, dtype=float)

    def mod_reduce(self, p):
        """Reduce a point modulo the coverage lattice (minimum physical norm).

        Ties on the cell boundary are broken toward the lexicographically
        smaller reduced coordinate vector, which reproduces the half-open
        interval [-B/2, B/2) in the 1-D case.
        """
        p = np.asarray(p, dtype=float)
        t0 = np.rint(np.linalg.solve(self.coarse_int, p)).astype(int)
        cands = p - (self._reduce_offsets + t0) @ self.coarse_int.T
        norms = np.linalg.norm(cands @ self.bs_basis.T, axis=1)
        best = np.min(norms)
        mask = norms <= best + _TIE_EPS * (1.0 + best)
        tied = cands[mask]
        order = np.lexsort(tied.T[::-1])
        return tied[order[0]]

    def mod_distance(self, u, v):
        """Modulo-Lambda distance between two points, in physical units."""
        r = self.mod_reduce(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))
        return float(np.linalg.norm(self.bs_basis @ r))

    def mod_distance_many(self, diffs):
        """Modulo-Lambda norms of an (n, d) array of coordinate differences."""
        diffs = np.asarray(diffs, dtype=float)
        t0 = np.rint(np.linalg.solve(self.coarse_int, diffs.T).T)
        cands = diffs[:, None, :] - (t0[:, None, :] + self._reduce_offsets[None]) \
            @ self.coarse_int.T
        norms = np.linalg.norm(cands @ self.bs_basis.T, axis=2)
        return norms.min(axis=1)

    def canonical_bs(self, u):
        """Canonical integer representative of a BS-lattice point."""
        u = np.rint(np.asarray(u, dtype=float)).astype(int)
        r = self.mod_reduce(u)
        r = np.rint(r).astype(int)
        return r

    def bs_id(self, u):
        """Index (0..B-1) of a BS-lattice point, modulo the coverage lattice."""
        key = tuple(int(v) for v in self.canonical_bs(u))
        try:
            return self._bs_index[key]
        except KeyError:
            raise ConfigurationError(f"point {u} is not on the BS lattice") from None

    def bs_add(self, i, j):
        return self.bs_id(self.bs_positions[i] + self.bs_positions[j])

    def bs_sub(self, i, j):
        return self.bs_id(self.bs_positions[i] - self.bs_positions[j])

    def user_grid_points(self):
        """All user-grid locations inside the reference cell (1-D only)."""
        if self.dimension != 1:
            raise ConfigurationError("explicit user grids are only defined for 1-D layouts")
        k = self.user_grid_density
        pts = (np.arange(k) + 0.5) / k - 0.5
        return pts.reshape(-1, 1)


def build_layout(dimension, num_bs, hex_radius=None, user_grid_density=None,
                 user_grid_offset=None):
    """Construct a 1-D ring or the 19-cell hexagonal wrap-around layout."""
    if dimension == 1:
        if num_bs < 2:
            raise ConfigurationError("1-D layouts need at least 2 BSs")
        if user_grid_density is not None and user_grid_density % 2:
            raise ConfigurationError(
                "1-D user grid density must be even so that u0 = 1/(2*density) "
                "symmetrizes the grid")
        basis = np.array([[1.0]])
        coarse = np.array([[num_bs]])
        half = num_bs // 2
        reps = np.array([[((c + half) % num_bs) - half] for c in range(num_bs)])
        u0 = None
        if user_grid_density is not None:
            u0 = np.array([1.0 / (2 * user_grid_density)])
        return Layout(1, num_bs, basis, coarse, reps, None, user_grid_density, u0)

    if dimension == 2:
        if num_bs != 19:
            raise ConfigurationError("the 2-D hexagonal template has exactly 19 cells")
        if hex_radius is None or hex_radius <= 0:
            raise ConfigurationError("2-D layouts require a positive hex_radius")
        s = math.sqrt(3.0) * hex_radius / 2.0
        basis = s * np.array([[math.sqrt(3.0), 0.0], [1.0, 2.0]])
        coarse = _COARSE_19.copy()
        reps = _enumerate_residues(basis, coarse, num_bs)
        if user_grid_offset is None:
            d = user_grid_density or 2
            user_grid_offset = np.array([0.5 / d, 0.5 / d])
        return Layout(2, num_bs, basis, coarse, reps, hex_radius,
                      user_grid_density, np.asarray(user_grid_offset, dtype=float))

    raise ConfigurationError(f"unsupported dimension {dimension}")


def _enumerate_residues(basis, coarse, expected):
    probe = Layout(2, expected, basis, coarse, np.zeros((1, 2), dtype=int))
    seen = {}
    for u in itertools.product(range(-10, 11), repeat=2):
        r = np.rint(probe.mod_reduce(np.array(u, dtype=float))).astype(int)
        seen[tuple(r)] = r
    if len(seen) != expected:
        raise ConfigurationError(
            f"coverage sublattice index {len(seen)} != expected {expected}")
    reps = sorted(seen.values(),
                  key=lambda r: (np.linalg.norm(basis @ r), tuple(r)))
    return np.array(reps)


def mod_distance(layout, u, v):
    """Module-level alias of Layout.mod_distance."""
    return layout.mod_distance(u, v)


# -- clustering patterns ----------------------------------------------------

@dataclass(frozen=True)
class ClusterPattern:
    """A clustering pattern: the root cluster and all of its translates.

    Cluster c (a BS index) is the BS set {root + c}; every BS belongs to
    exactly C clusters.
    """

    layout: Layout
    root_offsets: np.ndarray  # (C, d) integer offsets, first row zero

    @property
    def size(self):
        return len(self.root_offsets)

    def cluster_bss(self, c):
        """BS ids of cluster c."""
        rep = self.layout.bs_positions[c]
        return [self.layout.bs_id(rep + off) for off in self.root_offsets]

    def root_center(self):
        """Symmetry center of the root cluster, in lattice coordinates."""
        return self.root_offsets.mean(axis=0)

    def center_of(self, c):
        return self.layout.bs_positions[c] + self.root_center()

    def center_distance(self, x, c):
        return self.layout.mod_distance(np.asarray(x, dtype=float), self.center_of(c))


def build_cluster_pattern(layout, root):
    """Build the clustering pattern for the given root BS offsets."""
    root = np.atleast_2d(np.asarray(root, dtype=float))
    if root.shape[1] != layout.dimension:
        raise ConfigurationError("root offsets have wrong dimension")
    if not np.allclose(root, np.rint(root)):
        raise ConfigurationError("root offsets must be BS-lattice points")
    root = np.rint(root).astype(int)
    if np.any(root[0] != 0):
        raise ConfigurationError("the first root offset must be the origin")
    keys = {tuple(r) for r in root}
    if len(keys) != len(root):
        raise ConfigurationError("root offsets must be distinct")
    if layout.dimension == 1 and len(root) not in (1, 2):
        raise ConfigurationError("1-D layouts support cluster sizes 1 and 2")
    if layout.dimension == 2 and len(root) not in (1, 3):
        raise ConfigurationError("2-D layouts support cluster sizes 1 and 3")
    return ClusterPattern(layout, root)


def default_cluster_root(layout, size):
    """Canonical root cluster: adjacent BS pair (1-D) or BS triangle (2-D)."""
    if layout.dimension == 1:
        if size not in (1, 2):
            raise ConfigurationError("1-D layouts support cluster sizes 1 and 2")
        return np.array([[0], [1]][:size])
    if size == 1:
        return np.array([[0, 0]])
    if size == 3:
        return np.array([[0, 0], [1, 0], [0, 1]])
    raise ConfigurationError("2-D layouts support cluster sizes 1 and 3")


# -- user bins ---------------------------------------------------------------

@dataclass(frozen=True)
class BinPattern:
    """A user bin: a symmetric set of root locations and its translates."""

    layout: Layout
    root_locations: np.ndarray  # (m, d) fractional lattice coordinates

    @property
    def multiplicity(self):
        return len(self.root_locations)

    def distance_multiset(self, x, cluster):
        return sorted(self.layout.mod_distance(x, off) for off in cluster.root_offsets)


def build_bin(layout, cluster, representative=None, locations=None):
    """Build the symmetric bin for `cluster` anchored at `representative`.

    1-D: representative x in [0, 1/2] yields {-x, x} for C=1 and {x, 1-x}
    for C=2. 2-D: the orbit of the representative under the 120-degree
    rotation about the cluster's symmetry center (the BS itself for C=1,
    the triangle centroid for C=3). Alternatively pass `locations`
    explicitly; the symmetry invariant is validated either way.
    """
    if locations is None:
        if representative is None:
            raise ConfigurationError("need a representative location or explicit locations")
        x = np.atleast_1d(np.asarray(representative, dtype=float))
        if layout.dimension == 1:
            v = float(x[0])
            if not 0.0 <= v <= 0.5:
                raise ConfigurationError("1-D bin representative must lie in [0, 1/2]")
            if cluster.size == 1:
                locations = np.array([[-v], [v]])
            else:
                locations = np.array([[v], [1.0 - v]])
        else:
            center = cluster.root_center() if cluster.size > 1 else np.zeros(2)
            orbit = [x]
            for _ in range(2):
                orbit.append(HEX_ROT120 @ (orbit[-1] - center) + center)
            locations = np.array(orbit)
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    pattern = BinPattern(layout, locations)
    _check_bin_symmetry(pattern, cluster)
    _check_off_boundaries(layout, locations)
    return pattern


def _check_bin_symmetry(pattern, cluster, tol=1e-9):
    sets = [pattern.distance_multiset(x, cluster) for x in pattern.root_locations]
    ref = np.asarray(sets[0])
    for s in sets[1:]:
        if not np.allclose(ref, np.asarray(s), rtol=0, atol=tol * (1 + ref.max())):
            raise SymmetryViolationError(
                "bin locations do not share the same multiset of distances to the "
                f"root cluster: {sets}")


def _check_off_boundaries(layout, locations, rel_tol=1e-9):
    """No bin location may sit on a cell boundary (nearest BS must be unique)."""
    for x in locations:
        d = sorted(layout.mod_distance(x, b) for b in layout.bs_positions)
        if d[1] - d[0] <= rel_tol * (1.0 + d[1]):
            raise ConfigurationError(
                f"bin location {x} lies on a cell boundary (equidistant BSs)")


def bin_representatives_1d(layout, count):
    """The `count` innermost user-grid points of [0, 1/2] (bin anchors)."""
    if layout.user_grid_density is None:
        raise ConfigurationError("layout has no user grid")
    pts = [p for p in (layout.user_grid_points()[:, 0]) if 0.0 < p < 0.5]
    pts = sorted(pts)
    if count > len(pts):
        raise ConfigurationError(
            f"user grid supports only {len(pts)} bins, requested {count}")
    return [np.array([p]) for p in pts[:count]]


def bin_representatives_2d(layout, radial=4, angular=4, radius_span=(0.12, 0.88)):
    """Radial-by-angular grid of bin anchors inside the reference cell.

    Representatives are placed at `radial` evenly spaced fractions of the
    cell inradius between radius_span, and `angular` angles spanning one
    120-degree sector (the orbit generator fills the rest of the cell).
    """
    inradius = math.sqrt(3.0) / 2.0 * layout.hex_radius
    lo, hi = radius_span
    radii = np.linspace(lo, hi, radial) * inradius
    angles = (np.arange(angular) + 0.5) / angular * (2.0 * math.pi / 3.0)
    inv = np.linalg.inv(layout.bs_basis)
    reps = []
    for r in radii:
        for a in angles:
            phys = np.array([r * math.cos(a), r * math.sin(a)])
            reps.append(inv @ phys)
    return reps


# -- frequency and pilot reuse -----------------------------------------------

@dataclass(frozen=True)
class ReuseAssignment:
    """Per-cluster subband f(c) and training codebook q(c).

    active_sets[f] lists the clusters D(f) on subband f; pilot_sets[(q, f)]
    lists P(q, f), the clusters of D(f) that reuse training codebook q.
    """

    F: int
    Q: int
    subband: np.ndarray   # (B,) int
    codebook: np.ndarray  # (B,) int

    def active_set(self, f):
        return [c for c in range(len(self.subband)) if self.subband[c] == f]

    def pilot_set(self, q, f):
        return [c for c in self.active_set(f) if self.codebook[c] == q]


def assign_reuse(layout, clusters, F, Q, anchor=0):
    """Assign subbands and training codebooks periodically across clusters.

    The cluster `anchor` receives subband 0 and codebook 0 (the reference
    normalization). 1-D layouts require F | B and Q | (B/F); 2-D layouts
    require hexagonal reuse numbers (1, 3, 4, 7, ...) for both factors.
    """
    B = layout.num_bs
    if F < 1 or Q < 1:
        raise ConfigurationError("reuse factors must be positive integers")
    if layout.dimension == 1:
        if B % F:
            raise ConfigurationError(f"1-D frequency reuse must divide B ({F} | {B} fails)")
        if (B // F) % Q:
            raise ConfigurationError(
                f"1-D pilot reuse must divide B/F ({Q} | {B // F} fails)")
        base = layout.bs_positions[anchor][0]
        sub = np.array([(layout.bs_positions[c][0] - base) % F for c in range(B)])
        cb = _codebooks_1d(layout, F, Q, base)
        return ReuseAssignment(F, Q, sub, cb)
    sub = _hex_coloring(layout, F, layout.bs_positions[anchor])
    cb = np.zeros(B, dtype=int)
    if Q > 1:
        gen_f = hex_sublattice_generator(F)
        for f in range(F):
            members = [c for c in range(B) if sub[c] == f]
            ref = layout.bs_positions[members[0] if anchor not in members else anchor]
            cb_members = _hex_coloring_subset(layout, Q, gen_f, members, ref)
            for c, q in zip(members, cb_members):
                cb[c] = q
    return ReuseAssignment(F, Q, sub, cb)


def _codebooks_1d(layout, F, Q, base):
    B = layout.num_bs
    cb = np.zeros(B, dtype=int)
    for c in range(B):
        k = (layout.bs_positions[c][0] - base) % B
        cb[c] = (k // F) % Q
    return cb


def _hex_coloring(layout, F, anchor_rep):
    """Coset index of each cluster under the index-F reuse sublattice."""
    B = layout.num_bs
    if F == 1:
        return np.zeros(B, dtype=int)
    gen = hex_sublattice_generator(F)
    labels = {_coset_key(layout, gen, np.zeros(2, dtype=int)): 0}
    colors = np.empty(B, dtype=int)
    for c in range(B):
        key = _coset_key(layout, gen, layout.bs_positions[c] - anchor_rep)
        if key not in labels:
            labels[key] = len(labels)
        colors[c] = labels[key]
    return colors


def _hex_coloring_subset(layout, Q, gen_f, members, ref_rep):
    """Sub-color the clusters of one subband by an index-Q sublattice."""
    gen_q = gen_f @ hex_sublattice_generator(Q)
    labels = {_coset_key(layout, gen_q, np.zeros(2, dtype=int)): 0}
    out = []
    for c in members:
        key = _coset_key(layout, gen_q, layout.bs_positions[c] - ref_rep)
        if key not in labels:
            labels[key] = len(labels)
        out.append(labels[key])
    return out


def _coset_key(layout, gen, u):
    """Canonical (minimum-norm) representative of u modulo the sublattice gen."""
    t0 = np.rint(np.linalg.solve(gen, u)).astype(int)
    best = None
    for off in itertools.product(range(-2, 3), repeat=2):
        r = u - gen @ (t0 + np.array(off))
        n = np.linalg.norm(layout.bs_basis @ r)
        cand = (round(n, 9), tuple(int(v) for v in r))
        if best is None or cand < best:
            best = cand
    return best[1]


# -- zero-forcing neighbor sets ----------------------------------------------

def nearest_zf_clusters(layout, clusters, x, J, within=None):
    """E(x): the J-1 clusters (other than 0) whose centers are closest to x.

    `within` restricts the candidates (pass the active set D(f) when the
    scheme uses frequency reuse). Ties are broken by cluster index.
    """
    if J < 1:
        raise ConfigurationError("J must be at least 1 for a ZF neighbor set")
    if J == 1:
        return []
    cands = within if within is not None else range(layout.num_bs)
    cands = [c for c in cands if c != 0]
    if J - 1 > len(cands):
        raise ConfigurationError(f"J={J} needs {J - 1} neighbor clusters, "
                                 f"only {len(cands)} available")
    ranked = sorted(cands, key=lambda c: (round(clusters.center_distance(x, c), 9), c))
    return ranked[:J - 1]


def closest_bs_in_cluster(layout, clusters, x, c):
    """b(x, c): index (into the root offsets) of the closest BS of cluster c."""
    rep = layout.bs_positions[c]
    dists = [(round(layout.mod_distance(x, rep + off), 9), b)
             for b, off in enumerate(clusters.root_offsets)]
    return min(dists)[1]
