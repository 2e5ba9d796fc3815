"""Site-bond percolation on finite rectangles.

A :class:`SiteBondGrid` holds ``site_open[x, y]`` for ``0 <= x < W``,
``0 <= y < H``, ``bond_h[x, y]`` for the bond ``(x, y)-(x+1, y)`` and
``bond_v[x, y]`` for ``(x, y)-(x, y+1)``.

Cluster work happens on the *expanded image*: a ``(2W-1) x (2H-1)`` pixel
array with sites at even/even pixels and bonds between them.  Open clusters
are then 4-connected pixel components, and a cluster surrounds a point iff
that point's pixel is cut off from the outside in the 8-connected complement.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow
from scipy.stats import binomtest

from .env import ParameterError, WindowError, bond_uniforms
from .rng import Stream, Tag

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = np.ones((3, 3), dtype=bool)


class InputError(ValueError):
    """Argument outside a function's domain (e.g. a non-monotone event)."""


@dataclass(frozen=True, eq=False)
class SiteBondGrid:
    site_open: np.ndarray
    bond_h: np.ndarray
    bond_v: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.site_open, dtype=bool)
        h = np.asarray(self.bond_h, dtype=bool)
        v = np.asarray(self.bond_v, dtype=bool)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise ParameterError("grid needs at least 1x1 sites")
        W, H = s.shape
        if h.shape != (W - 1, H) or v.shape != (W, H - 1):
            raise ParameterError(f"bond fields {h.shape}, {v.shape} do not match {W}x{H} sites")
        for name, a in (("site_open", s), ("bond_h", h), ("bond_v", v)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.site_open.shape

    def __eq__(self, other):
        if not isinstance(other, SiteBondGrid):
            return NotImplemented
        return (np.array_equal(self.site_open, other.site_open)
                and np.array_equal(self.bond_h, other.bond_h)
                and np.array_equal(self.bond_v, other.bond_v))

    def crop(self, x0: int, y0: int, x1: int, y1: int) -> "SiteBondGrid":
        """Sub-grid of sites ``[x0, x1] x [y0, y1]`` (inclusive) and the bonds inside."""
        W, H = self.shape
        if not (0 <= x0 <= x1 < W and 0 <= y0 <= y1 < H):
            raise WindowError(f"rectangle [{x0},{x1}]x[{y0},{y1}] outside {W}x{H} grid")
        return SiteBondGrid(self.site_open[x0:x1 + 1, y0:y1 + 1],
                            self.bond_h[x0:x1, y0:y1 + 1],
                            self.bond_v[x0:x1 + 1, y0:y1])

    def with_site(self, site: tuple[int, int], state: bool) -> "SiteBondGrid":
        s = self.site_open.copy()
        s[site] = state
        return SiteBondGrid(s, self.bond_h, self.bond_v)

    def expanded(self) -> np.ndarray:
        """Pixel image of open sites and of open bonds between open sites."""
        s = self.site_open
        W, H = s.shape
        img = np.zeros((2 * W - 1, 2 * H - 1), dtype=bool)
        img[0::2, 0::2] = s
        img[1::2, 0::2] = self.bond_h & s[:-1, :] & s[1:, :]
        img[0::2, 1::2] = self.bond_v & s[:, :-1] & s[:, 1:]
        return img

    # -- text dump ---------------------------------------------------------
    def to_text(self) -> str:
        parts = []
        for name, a in (("sites", self.site_open), ("hbonds", self.bond_h), ("vbonds", self.bond_v)):
            W, H = a.shape
            parts.append(f"P1 {name} {W} {H}")
            # rows printed top (largest y) first, like an image
            for y in range(H - 1, -1, -1):
                parts.append(" ".join("1" if a[x, y] else "0" for x in range(W)))
        return "\n".join(parts) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SiteBondGrid":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        fields, i = {}, 0
        while i < len(lines):
            magic, name, W, H = lines[i].split()
            if magic != "P1":
                raise ValueError(f"bad section header {lines[i]!r}")
            W, H = int(W), int(H)
            a = np.zeros((W, H), dtype=bool)
            for r in range(H):
                row = lines[i + 1 + r].split()
                a[:, H - 1 - r] = [c == "1" for c in row]
            fields[name] = a
            i += 1 + H
        return cls(fields["sites"], fields["hbonds"], fields["vbonds"])


def all_open(W: int, H: int) -> SiteBondGrid:
    return SiteBondGrid(np.ones((W, H), bool), np.ones((W - 1, H), bool), np.ones((W, H - 1), bool))


def bernoulli_grid(stream: Stream, W: int, H: int, s: float, p: float) -> SiteBondGrid:
    """Independent site-bond configuration with one uniform per element."""
    u_h, u_v = bond_uniforms(stream, (W - 1, H - 1))
    u_s = stream.uniform(Tag.SITE, W, H)
    return SiteBondGrid(u_s < s, u_h < p, u_v < p)


def bernoulli_grids(stream: Stream, W: int, H: int, s: float, p: float,
                    replicates) -> list[SiteBondGrid]:
    """``bernoulli_grid(stream.for_replicate(r), ...)`` for each ``r``, sampled in one pass."""
    u_h = stream.uniform_replicates(Tag.BOND_H, W - 1, H, replicates)
    u_v = stream.uniform_replicates(Tag.BOND_V, H - 1, W, replicates).transpose(0, 2, 1)
    u_s = stream.uniform_replicates(Tag.SITE, W, H, replicates)
    return [SiteBondGrid(a < s, b < p, c < p) for a, b, c in zip(u_s, u_h, u_v)]


def label_clusters(grid: SiteBondGrid) -> tuple[np.ndarray, int]:
    """Open-cluster labels per site (``-1`` for closed sites) and the count."""
    lab, n = ndimage.label(grid.expanded(), structure=_FOUR)
    sites = lab[0::2, 0::2].astype(np.int64) - 1
    return sites, n


def _check_site(grid: SiteBondGrid, u) -> tuple[int, int]:
    W, H = grid.shape
    x, y = int(u[0]), int(u[1])
    if not (0 <= x < W and 0 <= y < H):
        raise WindowError(f"site {u} outside {W}x{H} grid")
    return x, y


def connected(grid: SiteBondGrid, u, v) -> bool:
    """Open site-bond path from ``u`` to ``v``; the state of ``u`` is ignored."""
    u, v = _check_site(grid, u), _check_site(grid, v)
    if u == v:
        return True
    if not grid.site_open[v]:
        return False
    labels, _ = label_clusters(grid.with_site(u, True))
    return labels[u] == labels[v]


def connected_to_set(grid: SiteBondGrid, u, targets: np.ndarray) -> bool:
    """``u`` (state ignored) joined to any site where ``targets`` is true."""
    u = _check_site(grid, u)
    if targets[u]:
        return True
    labels, _ = label_clusters(grid.with_site(u, True))
    return bool(np.any(targets & (labels == labels[u]) & grid.site_open))


# ---------------------------------------------------------------------------
# disjoint crossings


class Sides(str, enum.Enum):
    LR = "LR"
    TB = "TB"


def count_disjoint_crossings(grid: SiteBondGrid, side_pair: Sides | str = Sides.LR) -> int:
    """Maximum number of vertex-disjoint open paths between opposite sides."""
    side_pair = Sides(side_pair)
    if side_pair is Sides.TB:
        grid = SiteBondGrid(grid.site_open.T, grid.bond_v.T, grid.bond_h.T)
    s = grid.site_open
    W, H = s.shape
    idx = np.arange(W * H).reshape(W, H)
    n_nodes = 2 * W * H + 2
    src, snk = n_nodes - 2, n_nodes - 1
    rows, cols = [], []

    def add(a, b):
        rows.append(a)
        cols.append(b)

    open_ids = idx[s]
    add(2 * open_ids, 2 * open_ids + 1)
    hb = grid.bond_h & s[:-1, :] & s[1:, :]
    a, b = idx[:-1, :][hb], idx[1:, :][hb]
    add(2 * a + 1, 2 * b)
    add(2 * b + 1, 2 * a)
    vb = grid.bond_v & s[:, :-1] & s[:, 1:]
    a, b = idx[:, :-1][vb], idx[:, 1:][vb]
    add(2 * a + 1, 2 * b)
    add(2 * b + 1, 2 * a)
    left = idx[0, :][s[0, :]]
    right = idx[-1, :][s[-1, :]]
    add(np.full(left.size, src), 2 * left)
    add(2 * right + 1, np.full(right.size, snk))
    r = np.concatenate([np.atleast_1d(np.asarray(x, dtype=np.int32)) for x in rows])
    c = np.concatenate([np.atleast_1d(np.asarray(x, dtype=np.int32)) for x in cols])
    if left.size == 0 or right.size == 0:
        return 0
    cap = csr_matrix((np.ones(r.size, dtype=np.int32), (r, c)), shape=(n_nodes, n_nodes))
    cap.sum_duplicates()
    cap.data[:] = np.minimum(cap.data, 1)
    return int(maximum_flow(cap, src, snk).flow_value)


def crosses(grid: SiteBondGrid, side_pair: Sides | str = Sides.LR) -> bool:
    """Some open path joins the two sides (one labeling, no flow)."""
    lab, _ = label_clusters(grid)
    a, b = (lab[0, :], lab[-1, :]) if Sides(side_pair) is Sides.LR else (lab[:, 0], lab[:, -1])
    common = np.intersect1d(a[a >= 0], b[b >= 0])
    return common.size > 0


# ---------------------------------------------------------------------------
# D_R and C_R


def contact_threshold(rho: float, length: int) -> int:
    """Smallest integer count that is at least ``rho * length``."""
    return math.ceil(rho * length - 1e-9)


def center_site(W: int, H: int) -> tuple[int, int]:
    """Center of a ``W x H`` rectangle; even sides take the lower-left middle."""
    return (W - 1) // 2, (H - 1) // 2


def surrounds(cluster_img: np.ndarray, site: tuple[int, int]) -> bool:
    """Whether a circuit of the pixel set passes through or around ``site``.

    Equivalent to one of the (up to four) lattice faces incident to ``site``
    being enclosed by a cycle of the cluster.
    """
    comp = np.pad(~cluster_img, 1, constant_values=True)
    lab, _ = ndimage.label(comp, structure=_EIGHT)
    outside = lab[0, 0]
    px, py = 2 * site[0] + 1, 2 * site[1] + 1
    for dx, dy in ((-1, -1), (-1, 1), (1, -1), (1, 1)):
        fx, fy = px + dx, py + dy
        # faces must lie inside the rectangle (not on the padding frame)
        if 1 <= fx < comp.shape[0] - 1 and 1 <= fy < comp.shape[1] - 1:
            if lab[fx, fy] != outside:
                return True
    return False


@dataclass
class MainCluster:
    """The cluster realizing the crossing event: site mask and pixel image."""

    sites: np.ndarray
    image: np.ndarray

    def bonds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.image[1::2, 0::2].copy(), self.image[0::2, 1::2].copy()


def check_admissible(W: int, H: int, N: int) -> None:
    for side in (W, H):
        if not (N <= side <= 6 * N - 1):
            raise ParameterError(f"rectangle {W}x{H} is not admissible for N={N}")


def main_cluster(grid: SiteBondGrid, rho: float, N: int | None = None) -> MainCluster | None:
    """The cluster witnessing the crossing event on ``grid``, or ``None``."""
    if not (0.75 < rho < 1.0):
        raise ParameterError(f"rho={rho} outside (3/4, 1)")
    W, H = grid.shape
    if N is not None:
        check_admissible(W, H, N)
    img = grid.expanded()
    lab, n = ndimage.label(img, structure=_FOUR)
    if n == 0:
        return None
    sl = lab[0::2, 0::2]
    need_v = contact_threshold(rho, H)
    need_h = contact_threshold(rho, W)
    counts = []
    for side, need in ((sl[0, :], need_v), (sl[-1, :], need_v), (sl[:, 0], need_h), (sl[:, -1], need_h)):
        counts.append((np.bincount(side, minlength=n + 1) >= need))
    ok = np.logical_and.reduce(counts)
    ok[0] = False
    cands = np.flatnonzero(ok)
    center = center_site(W, H)
    for c in cands:
        cimg = lab == c
        if surrounds(cimg, center):
            return MainCluster(sl == c, cimg)
    return None


def event_DR(grid: SiteBondGrid, rho: float, N: int) -> bool:
    return main_cluster(grid, rho, N) is not None


@dataclass(frozen=True)
class Rect:
    """Inclusive site rectangle ``[x0, x1] x [y0, y1]``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1


def event_CR(grid: SiteBondGrid, R: Rect | None = None) -> bool:
    """Midpoints of the short sides of ``R`` joined inside ``R`` avoiding boundary bonds."""
    W, H = grid.shape
    R = R or Rect(0, 0, W - 1, H - 1)
    if not (0 <= R.x0 <= R.x1 < W and 0 <= R.y0 <= R.y1 < H):
        raise WindowError(f"{R} exceeds the {W}x{H} grid")
    sub = grid.crop(R.x0, R.y0, R.x1, R.y1)
    transpose = sub.shape[0] < sub.shape[1]
    if transpose:
        sub = SiteBondGrid(sub.site_open.T, sub.bond_v.T, sub.bond_h.T)
    w, h = sub.shape
    bh = sub.bond_h.copy()
    bv = sub.bond_v.copy()
    bh[:, 0] = bh[:, -1] = False
    bv[0, :] = bv[-1, :] = False
    inner = SiteBondGrid(sub.site_open, bh, bv)
    mid = (h - 1) // 2
    return connected(inner, (0, mid), (w - 1, mid))


def far_boundary_mask(W: int, H: int, origin: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Sites at sup-distance ``n`` from ``origin``, ``n`` the largest box that fits.

    Directions with no room (a corner origin in the quarter plane) are
    ignored, so for ``origin = (0, 0)`` this is ``{max(x, y) = n}``.
    """
    ox, oy = origin
    rooms = [r for r in (ox, W - 1 - ox, oy, H - 1 - oy) if r > 0]
    if not rooms:
        return np.zeros((W, H), dtype=bool)
    n = min(rooms)
    xs, ys = np.meshgrid(np.arange(W) - ox, np.arange(H) - oy, indexing="ij")
    return np.maximum(np.abs(xs), np.abs(ys)) == n


def origin_to_boundary(grid: SiteBondGrid, origin: tuple[int, int] = (0, 0)) -> bool:
    W, H = grid.shape
    return connected_to_set(grid, origin, far_boundary_mask(W, H, origin))


# ---------------------------------------------------------------------------
# Monte Carlo estimation


class Kind(str, enum.Enum):
    LR_DISJOINT = "LR_DISJOINT"
    TB_DISJOINT = "TB_DISJOINT"
    D_R = "D_R"
    C_R = "C_R"
    ORIGIN_TO_BOUNDARY = "ORIGIN_TO_BOUNDARY"


@dataclass(frozen=True)
class CrossingSpec:
    kind: Kind
    rho: float = 0.8
    path_count_threshold: int = 1
    N: int | None = None
    rect: Rect | None = None
    origin: tuple[int, int] = (0, 0)
    shapes: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.D_R and not (0.75 < self.rho < 1.0):
            raise ParameterError(f"rho={self.rho} outside (3/4, 1)")

    def indicator(self, grid: SiteBondGrid) -> bool:
        k = self.kind
        if k in (Kind.LR_DISJOINT, Kind.TB_DISJOINT):
            side = Sides.LR if k is Kind.LR_DISJOINT else Sides.TB
            if self.path_count_threshold <= 1:
                return self.path_count_threshold <= 0 or crosses(grid, side)
            return count_disjoint_crossings(grid, side) >= self.path_count_threshold
        if k is Kind.D_R:
            N = self.N if self.N is not None else min(grid.shape)
            return event_DR(grid, self.rho, N)
        if k is Kind.C_R:
            return event_CR(grid, self.rect)
        return origin_to_boundary(grid, self.origin)


def default_shapes(N: int) -> tuple[tuple[int, int], ...]:
    """``N x N, N x 2N, ..., N x 5N, N x (6N-1)`` and their transposes."""
    longs = [k * N for k in range(1, 6)] + [6 * N - 1]
    shapes = [(N, b) for b in longs] + [(b, N) for b in longs if b != N]
    return tuple(shapes)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(successes, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class EstimateResult:
    point: float
    replicates: int
    ci_low: float
    ci_high: float
    seed: int
    successes: int = 0
    per_shape: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, successes: int, replicates: int, seed: int) -> "EstimateResult":
        lo, hi = wilson_interval(successes, replicates)
        point = successes / replicates
        return cls(point, replicates, min(lo, point), max(hi, point), seed, successes)

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def estimate_event(spec: CrossingSpec, sampler: Callable, replicates: int,
                   seed: int = 0) -> EstimateResult:
    """Monte Carlo frequency of ``spec`` over ``replicates`` sampled grids.

    ``sampler(stream)`` returns a :class:`SiteBondGrid`; replicate ``r`` uses
    ``Stream(seed).for_replicate(r)``.  When ``spec.shapes`` is set (the
    infimum over rectangle shapes), ``sampler(stream, shape)`` is called per
    shape and the smallest estimate is returned with all shapes attached.
    """
    if replicates < 1:
        raise ParameterError("replicates must be >= 1")
    base = Stream(seed)
    if spec.shapes:
        per = {}
        for shape in spec.shapes:
            hits = sum(spec.indicator(sampler(base.for_replicate(r), shape))
                       for r in range(replicates))
            per[shape] = EstimateResult.from_counts(int(hits), replicates, seed)
        worst = min(per.values(), key=lambda e: e.point)
        out = EstimateResult.from_counts(worst.successes, replicates, seed)
        out.per_shape = per
        return out
    batch = getattr(sampler, "batch", None)
    if batch is not None:
        hits = 0
        for r0 in range(0, replicates, _BATCH):
            reps = range(r0, min(replicates, r0 + _BATCH))
            hits += sum(bool(spec.indicator(g)) for g in batch(base, reps))
    else:
        hits = sum(bool(spec.indicator(sampler(base.for_replicate(r)))) for r in range(replicates))
    return EstimateResult.from_counts(int(hits), replicates, seed)


_BATCH = 512


def grid_sampler(W: int, H: int, s: float, p: float) -> Callable[[Stream], SiteBondGrid]:
    """Sampler of ``W x H`` Bernoulli grids; ``.batch`` samples many replicates at once."""
    def sample(stream: Stream) -> SiteBondGrid:
        return bernoulli_grid(stream, W, H, s, p)

    def batch(base: Stream, replicates) -> list[SiteBondGrid]:
        return bernoulli_grids(base, W, H, s, p, list(replicates))

    sample.batch = batch
    return sample


def shape_sampler(s: float, p: float) -> Callable:
    def sample(stream: Stream, shape) -> SiteBondGrid:
        return bernoulli_grid(stream, shape[0], shape[1], s, p)
    return sample


# ---------------------------------------------------------------------------
# exact small-graph checks


def is_monotone(n: int, indicator: Callable[[tuple[bool, ...]], bool]) -> bool:
    table = {st: bool(indicator(st)) for st in product((False, True), repeat=n)}
    for st, val in table.items():
        if not val:
            continue
        for i in range(n):
            if not st[i]:
                up = st[:i] + (True,) + st[i + 1:]
                if not table[up]:
                    return False
    return True


def exact_probability(n: int, indicator: Callable[[tuple[bool, ...]], bool], p):
    """``P_p(E)`` by enumerating all ``2**n`` states, each element open w.p. ``p``."""
    q = 1 - p
    total = 0 * p
    for st in product((False, True), repeat=n):
        if indicator(st):
            k = sum(st)
            total += p ** k * q ** (n - k)
    return total


@dataclass
class SandwichReport:
    p_tilde: object
    bound: object
    margins: dict
    holds: bool


def verify_sanduiche_exact(n_elements: int, indicator: Callable[[tuple[bool, ...]], bool],
                           p0, p0p, p_list: Iterable) -> SandwichReport:
    """Exact check of ``P_p(E) >= 1 - (1 - P_p0(E)) (1 - P_p0'(E))`` for ``p >= p~``.

    Pass :class:`fractions.Fraction` probabilities for exact arithmetic.
    Elements are numbered ``0..n_elements-1``; ``indicator`` receives the
    tuple of their open states.
    """
    if n_elements > 20:
        raise ParameterError("graph too large for exhaustive enumeration")
    if not is_monotone(n_elements, indicator):
        raise InputError("event is not increasing")
    p_tilde = 1 - (1 - p0) * (1 - p0p)
    bound = 1 - (1 - exact_probability(n_elements, indicator, p0)) * (
        1 - exact_probability(n_elements, indicator, p0p))
    margins = {}
    for p in p_list:
        if p >= p_tilde:
            margins[p] = exact_probability(n_elements, indicator, p) - bound
    return SandwichReport(p_tilde, bound, margins, all(m >= 0 for m in margins.values()))


def enumerate_upsets(n: int) -> list[frozenset]:
    """All up-sets of ``{0,1}^n`` (increasing events), as sets of open-state tuples."""
    states = list(product((False, True), repeat=n))
    out = []
    for mask in range(1 << len(states)):
        up = frozenset(st for i, st in enumerate(states) if mask >> i & 1)
        if all(st[:j] + (True,) + st[j + 1:] in up for st in up for j in range(n) if not st[j]):
            out.append(up)
    return out


def grid_elements(W: int, H: int) -> list[tuple]:
    """Canonical element order: sites, then H bonds, then V bonds."""
    els = [("s", x, y) for x in range(W) for y in range(H)]
    els += [("h", x, y) for x in range(W - 1) for y in range(H)]
    els += [("v", x, y) for x in range(W) for y in range(H - 1)]
    return els


def grid_from_states(W: int, H: int, states: Sequence[bool]) -> SiteBondGrid:
    s = np.zeros((W, H), bool)
    h = np.zeros((W - 1, H), bool)
    v = np.zeros((W, H - 1), bool)
    arrs = {"s": s, "h": h, "v": v}
    for (kind, x, y), st in zip(grid_elements(W, H), states):
        arrs[kind][x, y] = st
    return SiteBondGrid(s, h, v)


def exact_fraction_to_float(x) -> float:
    return float(x) if isinstance(x, Fraction) else x
