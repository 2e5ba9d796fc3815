"""Renormalized lattices built from a grouped ladder environment.

A step-``k`` lattice is a product of two one-dimensional layouts: a list of
column intervals (step-0 ``x`` ranges) and a list of row intervals.  Site
``(i, j)`` has span ``cols[i] x rows[j]``.  Between consecutive columns lies
either a grouped block of bad ladders or a single good ladder; the bond of
the lattice crossing it is good iff the block's mass is at most ``k``.

Openness is evaluated bottom-up against a :class:`~ladderperc.env.BondConfiguration`:
a step-1 site is open iff the crossing event holds on its step-0 subgraph, a
step-``k`` site iff it holds on the grid of its step-``(k-1)`` children, and a
good bond iff a step-0 open path inside the bond's rectangle joins the two
skeletons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .env import BondConfiguration, LadderEnvironment, Orientation, ParameterError, WindowError
from .grouping import Block, GroupingResult, InputError, chi_and_spaced, run_grouping
from .perc_core import SiteBondGrid, main_cluster

_FOUR = ndimage.generate_binary_structure(2, 1)


class PreconditionError(ValueError):
    """The environment does not meet the construction's spacing requirement."""


class StateError(RuntimeError):
    """Openness has not been evaluated for the requested step."""


# ---------------------------------------------------------------------------
# one-dimensional layouts


@dataclass
class AxisLayout:
    """Column (or row) structure of one axis at one step.

    ``gaps[i]`` is the block crossed between interval ``i`` and ``i + 1``
    (``None`` for a single good ladder).  ``children[i]`` is the half-open
    range of step-``(k-1)`` intervals inside interval ``i`` (``None`` at step 1).
    """

    step: int
    intervals: list[tuple[int, int]]
    gaps: list[Block | None]
    children: list[tuple[int, int]] | None
    short_regions: list[tuple[int, int, int]] = field(default_factory=list)
    truncated: bool = False

    def __len__(self):
        return len(self.intervals)

    def gap_good(self, i: int) -> bool:
        b = self.gaps[i]
        return b is None or b.mass <= self.step

    def gap_mass(self, i: int) -> int:
        b = self.gaps[i]
        return 0 if b is None else b.mass


def _slabs(count: int, N: int) -> list[tuple[int, int]] | None:
    """Split ``count`` consecutive items into runs of ``N``; the last absorbs the rest."""
    n_slabs = count // N
    if n_slabs == 0:
        return None
    out = [(r * N, (r + 1) * N) for r in range(n_slabs - 1)]
    out.append(((n_slabs - 1) * N, count))
    return out


def _delimiters(result: GroupingResult, k: int) -> list[Block]:
    return [b for b in result.partition(k).blocks if b.mass >= k]


def axis_step1(result: GroupingResult, n_sites: int, N: int) -> AxisLayout:
    """Step-1 layout on sites ``0..n_sites-1`` from the blocks of ``C_1``.

    Regions run from ``omega`` of one block to ``alpha`` of the next
    (inclusive); a virtual block with ``omega = 0`` precedes the first and the
    window edge closes the last.  ``truncated`` is set when sites at the edge
    could not be grouped or a block runs past the window.
    """
    intervals: list[tuple[int, int]] = []
    gaps: list[Block | None] = []
    short: list[tuple[int, int, int]] = []
    truncated = False
    lo = 0
    pending_gap: Block | None = None
    for blk in list(result.partition(1).blocks) + [None]:
        alpha = n_sites - 1 if blk is None else blk.start
        count = alpha - lo + 1
        if blk is not None and count < 3 * N:
            short.append((1, lo, alpha))
        slabs = _slabs(count, N)
        if slabs is None:
            truncated = True
            break
        for r, (a, b) in enumerate(slabs):
            if intervals:
                gaps.append(pending_gap if r == 0 else None)
            intervals.append((lo + a, lo + b - 1))
        if blk is None:
            break
        if blk.omega > n_sites - 1:
            truncated = True
            break
        pending_gap, lo = blk, blk.omega
    return AxisLayout(1, intervals, gaps, None, short, truncated)


def axis_step_k(parent: AxisLayout, result: GroupingResult, k: int, N: int) -> AxisLayout:
    """Step-``k`` layout grouping the step-``(k-1)`` intervals between heavy blocks."""
    pint = parent.intervals
    intervals, gaps, children, short = [], [], [], []
    truncated = parent.truncated
    delims = _delimiters(result, k)
    idx = 0
    lo_coord = 0
    pending_gap: Block | None = None
    bounds = [(d.start, d) for d in delims] + [(None, None)]
    for alpha, blk in bounds:
        first = idx
        while idx < len(pint) and pint[idx][0] >= lo_coord and (alpha is None or pint[idx][1] <= alpha):
            idx += 1
        count = idx - first
        if blk is not None and count < 3 * N:
            short.append((k, first, idx))
        slabs = _slabs(count, N)
        if slabs is None:
            truncated = True
            break
        for r, (a, b) in enumerate(slabs):
            if intervals:
                if r == 0:
                    gaps.append(pending_gap)
                else:
                    gaps.append(parent.gaps[first + a - 1])
            c0, c1 = first + a, first + b
            intervals.append((pint[c0][0], pint[c1 - 1][1]))
            children.append((c0, c1))
        if blk is None:
            truncated = truncated or idx < len(pint)
            break
        pending_gap = blk
        lo_coord = blk.omega
        # skip parent intervals swallowed by the heavy block
        while idx < len(pint) and pint[idx][0] < lo_coord:
            idx += 1
        if idx >= len(pint):
            truncated = True
            break
    return AxisLayout(k, intervals, gaps, children, short, truncated)


# ---------------------------------------------------------------------------
# lattice


@dataclass(frozen=True)
class RenormSite:
    step: int
    grid_coords: tuple[int, int]
    span: tuple[int, int, int, int]
    open: bool | None = None
    skeleton_size: int = 0

    @property
    def alpha_h(self) -> int:
        return self.span[0]

    @property
    def omega_h(self) -> int:
        return self.span[1]

    @property
    def alpha_v(self) -> int:
        return self.span[2]

    @property
    def omega_v(self) -> int:
        return self.span[3]


@dataclass(frozen=True)
class RenormBond:
    step: int
    orientation: Orientation
    endpoints: tuple[tuple[int, int], tuple[int, int]]
    block_ref: Block | None
    good: bool
    rect: tuple[int, int, int, int]
    open: bool | None = None


@dataclass
class RenormLattice:
    step: int
    N: int
    cols: AxisLayout
    rows: AxisLayout
    groupings: tuple[GroupingResult, GroupingResult]
    window: tuple[int, int]
    parent: "RenormLattice | None" = None

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.cols), len(self.rows)

    @property
    def truncated(self) -> bool:
        return self.cols.truncated or self.rows.truncated

    def chain(self) -> list["RenormLattice"]:
        out, cur = [], self
        while cur is not None:
            out.append(cur)
            cur = cur.parent
        return out[::-1]

    def at_step(self, k: int) -> "RenormLattice":
        for lat in self.chain():
            if lat.step == k:
                return lat
        raise ValueError(f"step {k} not built")

    def span(self, i: int, j: int) -> tuple[int, int, int, int]:
        (x0, x1), (y0, y1) = self.cols.intervals[i], self.rows.intervals[j]
        return x0, x1, y0, y1

    def site(self, i: int, j: int) -> RenormSite:
        return RenormSite(self.step, (i, j), self.span(i, j))

    def bond_rect(self, orientation: Orientation | str, i: int, j: int) -> tuple[int, int, int, int]:
        """Step-0 rectangle of the bond from site ``(i, j)`` to its right/upper neighbour."""
        if Orientation(orientation) is Orientation.H:
            return self.cols.intervals[i][1], self.cols.intervals[i + 1][0], *self.rows.intervals[j]
        return (*self.cols.intervals[i], self.rows.intervals[j][1], self.rows.intervals[j + 1][0])

    def bond(self, orientation: Orientation | str, i: int, j: int) -> RenormBond:
        o = Orientation(orientation)
        if o is Orientation.H:
            blk, good, other = self.cols.gaps[i], self.cols.gap_good(i), (i + 1, j)
        else:
            blk, good, other = self.rows.gaps[j], self.rows.gap_good(j), (i, j + 1)
        return RenormBond(self.step, o, ((i, j), other), blk, good, self.bond_rect(o, i, j))

    def good_h(self) -> np.ndarray:
        g = np.array([self.cols.gap_good(i) for i in range(len(self.cols) - 1)], dtype=bool)
        return np.repeat(g[:, None], len(self.rows), axis=1)

    def good_v(self) -> np.ndarray:
        g = np.array([self.rows.gap_good(j) for j in range(len(self.rows) - 1)], dtype=bool)
        return np.repeat(g[None, :], len(self.cols), axis=0)

    def short_regions(self) -> list[tuple[int, int, int]]:
        return self.cols.short_regions + self.rows.short_regions

    def to_csv_rows(self, state: "StepState | None" = None) -> list[tuple]:
        """Rows ``(step, kind, i, j, x0, x1, y0, y1, open, good)`` for a dump."""
        out = []
        nc, nr = self.shape
        for i in range(nc):
            for j in range(nr):
                op = "" if state is None else int(state.site_open[i, j])
                out.append((self.step, "site", i, j, *self.span(i, j), op, ""))
        for o, rng_i, rng_j in ((Orientation.H, range(nc - 1), range(nr)),
                                (Orientation.V, range(nc), range(nr - 1))):
            for i in rng_i:
                for j in rng_j:
                    b = self.bond(o, i, j)
                    op = ""
                    if state is not None and b.good:
                        arr = state.bond_h_open if o is Orientation.H else state.bond_v_open
                        op = int(arr[i, j])
                    out.append((self.step, f"bond_{o.value}", i, j, *b.rect, op, int(b.good)))
        return out


def group_axes(env: LadderEnvironment, N: int) -> tuple[GroupingResult, GroupingResult]:
    M = 3 * N
    return (run_grouping(env.bad_positions("H"), M=M, L=M, window=env.width_h),
            run_grouping(env.bad_positions("V"), M=M, L=M, window=env.width_v))


def is_spaced(env: LadderEnvironment, N: int) -> bool:
    gh, gv = group_axes(env, N)
    return chi_and_spaced(gh)[1] and chi_and_spaced(gv)[1]


def build_lattice(env: LadderEnvironment, N: int, k: int = 1, *,
                  require_spaced: bool = True) -> RenormLattice:
    """Build the renormalized lattices of steps ``1..k`` (returns step ``k``).

    The environment's grouping uses ``M = L = 3N``.  The window covers sites
    ``0..W_H-1`` by ``0..W_V-1``.
    """
    if N < 1:
        raise ParameterError("N must be positive")
    if k < 1:
        raise ParameterError("k must be >= 1")
    gh, gv = group_axes(env, N)
    if require_spaced and not (chi_and_spaced(gh)[1] and chi_and_spaced(gv)[1]):
        raise PreconditionError(f"environment is not {3 * N}-spaced")
    window = (env.width_h, env.width_v)
    cols = axis_step1(gh, window[0], N)
    rows = axis_step1(gv, window[1], N)
    if not cols.intervals or not rows.intervals:
        raise WindowError("window too small for a single step-1 site")
    lat = RenormLattice(1, N, cols, rows, (gh, gv), window)
    for step in range(2, k + 1):
        cols = axis_step_k(lat.cols, gh, step, N)
        rows = axis_step_k(lat.rows, gv, step, N)
        if not cols.intervals or not rows.intervals:
            raise WindowError(f"window too small for a step-{step} site")
        lat = RenormLattice(step, N, cols, rows, (gh, gv), window, parent=lat)
    return lat


# ---------------------------------------------------------------------------
# skeletons and openness


@dataclass
class Skeleton:
    """Step-0 sites and bonds inside the rectangle starting at ``(x0, y0)``."""

    x0: int
    y0: int
    sites: np.ndarray
    h: np.ndarray
    v: np.ndarray

    @classmethod
    def empty(cls, x0, x1, y0, y1) -> "Skeleton":
        w, hgt = x1 - x0 + 1, y1 - y0 + 1
        return cls(x0, y0, np.zeros((w, hgt), bool), np.zeros((w - 1, hgt), bool),
                   np.zeros((w, hgt - 1), bool))

    @property
    def x1(self) -> int:
        return self.x0 + self.sites.shape[0] - 1

    @property
    def y1(self) -> int:
        return self.y0 + self.sites.shape[1] - 1

    def size(self) -> int:
        return int(self.sites.sum() + self.h.sum() + self.v.sum())

    def __bool__(self):
        return bool(self.sites.any())

    def absorb(self, other: "Skeleton") -> None:
        dx, dy = other.x0 - self.x0, other.y0 - self.y0
        w, hg = other.sites.shape
        self.sites[dx:dx + w, dy:dy + hg] |= other.sites
        self.h[dx:dx + w - 1, dy:dy + hg] |= other.h
        self.v[dx:dx + w, dy:dy + hg - 1] |= other.v

    def paint(self, sites: np.ndarray, h: np.ndarray, v: np.ndarray) -> None:
        """OR this skeleton into window-sized global masks."""
        w, hg = self.sites.shape
        sites[self.x0:self.x0 + w, self.y0:self.y0 + hg] |= self.sites
        h[self.x0:self.x0 + w - 1, self.y0:self.y0 + hg] |= self.h
        v[self.x0:self.x0 + w, self.y0:self.y0 + hg - 1] |= self.v


@dataclass
class StepState:
    site_open: np.ndarray
    bond_h_open: np.ndarray
    bond_v_open: np.ndarray
    site_skel: dict
    bond_h_skel: dict
    bond_v_skel: dict


@dataclass
class EvaluatedChain:
    lattice: RenormLattice
    config: BondConfiguration
    rho: float
    restricted: bool
    states: dict[int, StepState]

    def state(self, k: int | None = None) -> StepState:
        k = self.lattice.step if k is None else k
        if k not in self.states:
            raise StateError(f"step {k} not evaluated")
        return self.states[k]

    def site(self, k: int, i: int, j: int) -> RenormSite:
        lat, st = self.lattice.at_step(k), self.state(k)
        sk = st.site_skel.get((i, j))
        return RenormSite(k, (i, j), lat.span(i, j), bool(st.site_open[i, j]),
                          0 if sk is None else sk.size())

    def bond(self, k: int, orientation, i: int, j: int) -> RenormBond:
        lat, st = self.lattice.at_step(k), self.state(k)
        b = lat.bond(orientation, i, j)
        arr = st.bond_h_open if b.orientation is Orientation.H else st.bond_v_open
        return RenormBond(b.step, b.orientation, b.endpoints, b.block_ref, b.good, b.rect,
                          bool(arr[i, j]) if b.good else None)


def _config_grid(config: BondConfiguration, x0, x1, y0, y1) -> SiteBondGrid:
    return config.to_grid().crop(x0, y0, x1, y1)


def _check_cover(lattice: RenormLattice, config: BondConfiguration) -> None:
    n1, n2 = config.box
    x_hi = lattice.cols.intervals[-1][1]
    y_hi = lattice.rows.intervals[-1][1]
    first = lattice.chain()[0]
    x_hi = max(x_hi, first.cols.intervals[-1][1])
    y_hi = max(y_hi, first.rows.intervals[-1][1])
    if x_hi > n1 or y_hi > n2:
        raise WindowError(f"configuration box {config.box} does not cover the lattice")


def _connect(config: BondConfiguration, rect, orientation: Orientation,
             skel1: Skeleton, skel2: Skeleton) -> Skeleton | None:
    """Open step-0 components in ``rect`` joining the two skeletons.

    Bonds along the two end lines of the rectangle that run parallel to them
    are removed; end-line sites are usable only if they lie in the adjacent
    skeleton.
    """
    x0, x1, y0, y1 = rect
    grid = _config_grid(config, x0, x1, y0, y1)
    s = np.ones(grid.shape, bool)
    bh = grid.bond_h.copy()
    bv = grid.bond_v.copy()
    end1 = _skel_mask(skel1, x0, x1, y0, y1)
    end2 = _skel_mask(skel2, x0, x1, y0, y1)
    if orientation is Orientation.H:
        bv[0, :] = False
        bv[-1, :] = False
        s[0, :] = end1[0, :]
        s[-1, :] = end2[-1, :]
        touch1, touch2 = np.zeros_like(s), np.zeros_like(s)
        touch1[0, :], touch2[-1, :] = s[0, :], s[-1, :]
    else:
        bh[:, 0] = False
        bh[:, -1] = False
        s[:, 0] = end1[:, 0]
        s[:, -1] = end2[:, -1]
        touch1, touch2 = np.zeros_like(s), np.zeros_like(s)
        touch1[:, 0], touch2[:, -1] = s[:, 0], s[:, -1]
    g = SiteBondGrid(s, bh, bv)
    img = g.expanded()
    lab, n = ndimage.label(img, structure=_FOUR)
    sl = lab[0::2, 0::2]
    good = np.intersect1d(np.unique(sl[touch1]), np.unique(sl[touch2]))
    good = good[good > 0]
    if good.size == 0:
        return None
    keep = np.isin(lab, good)
    return Skeleton(x0, y0, keep[0::2, 0::2].copy(), keep[1::2, 0::2].copy(), keep[0::2, 1::2].copy())


def _skel_mask(skel: Skeleton, x0, x1, y0, y1) -> np.ndarray:
    out = np.zeros((x1 - x0 + 1, y1 - y0 + 1), bool)
    ax0, ax1 = max(x0, skel.x0), min(x1, skel.x1)
    ay0, ay1 = max(y0, skel.y0), min(y1, skel.y1)
    if ax0 <= ax1 and ay0 <= ay1:
        out[ax0 - x0:ax1 - x0 + 1, ay0 - y0:ay1 - y0 + 1] = \
            skel.sites[ax0 - skel.x0:ax1 - skel.x0 + 1, ay0 - skel.y0:ay1 - skel.y0 + 1]
    return out


def _connect_unrestricted(config: BondConfiguration, skel1: Skeleton, skel2: Skeleton,
                          labels: np.ndarray, img_lab: np.ndarray) -> Skeleton | None:
    m1 = np.zeros(labels.shape, bool)
    m2 = np.zeros(labels.shape, bool)
    skel1.paint(m1, np.zeros((m1.shape[0] - 1, m1.shape[1]), bool), np.zeros((m1.shape[0], m1.shape[1] - 1), bool))
    skel2.paint(m2, np.zeros((m2.shape[0] - 1, m2.shape[1]), bool), np.zeros((m2.shape[0], m2.shape[1] - 1), bool))
    common = np.intersect1d(np.unique(labels[m1]), np.unique(labels[m2]))
    if common.size == 0:
        return None
    keep = np.isin(img_lab, common + 1)
    return Skeleton(0, 0, keep[0::2, 0::2].copy(), keep[1::2, 0::2].copy(), keep[0::2, 1::2].copy())


def _core_rect(span, frac=0.9):
    x0, x1, y0, y1 = span
    out = []
    for a, b in ((x0, x1), (y0, y1)):
        w = b - a + 1
        c = max(1, math.ceil(frac * w - 1e-9))
        off = (w - c) // 2
        out += [a + off, a + off + c - 1]
    return tuple(out)


def _core_cluster(grid: SiteBondGrid, need: int):
    img = grid.expanded()
    lab, n = ndimage.label(img, structure=_FOUR)
    if n == 0:
        return None
    sl = lab[0::2, 0::2]
    counts = [np.bincount(side, minlength=n + 1) for side in (sl[0, :], sl[-1, :], sl[:, 0], sl[:, -1])]
    mins = np.minimum.reduce(counts)
    mins[0] = -1
    best = int(np.argmax(mins))
    if mins[best] < need:
        return None
    return lab == best


def evaluate_openness(lattice: RenormLattice, config: BondConfiguration, rho: float, *,
                      restricted: bool = True, geometry: str = "standard",
                      rho_hat: float | None = None) -> EvaluatedChain:
    """Open flags and skeletons for every step of ``lattice``'s chain.

    ``geometry="core"`` uses the alternative step-1 construction: sites are
    the centred sub-squares of relative side 0.9, open iff one cluster has at
    least ``0.9 * rho_hat * N`` sites on every side of the core, and step-1
    bonds span the collar between cores.
    """
    if not (0.75 < rho < 1.0):
        raise ParameterError(f"rho={rho} outside (3/4, 1)")
    if geometry not in ("standard", "core"):
        raise ParameterError(f"unknown geometry {geometry!r}")
    if geometry == "core" and not (rho_hat is not None and 0 < rho_hat < 1):
        raise ParameterError("core geometry needs rho_hat in (0, 1)")
    _check_cover(lattice, config)
    N = lattice.N
    states: dict[int, StepState] = {}
    full_lab = full_img_lab = None
    if not restricted:
        g = config.to_grid()
        full_img_lab, _ = ndimage.label(g.expanded(), structure=_FOUR)
        full_lab = full_img_lab[0::2, 0::2] - 1
    for lat in lattice.chain():
        nc, nr = lat.shape
        site_open = np.zeros((nc, nr), bool)
        site_skel = {}
        if lat.step == 1:
            need = None if geometry == "standard" else math.ceil(0.9 * rho_hat * N - 1e-9)
            for i in range(nc):
                for j in range(nr):
                    span = lat.span(i, j)
                    if geometry == "core":
                        span = _core_rect(span)
                    x0, x1, y0, y1 = span
                    grid = _config_grid(config, x0, x1, y0, y1)
                    if geometry == "core":
                        img = _core_cluster(grid, need)
                    else:
                        mc = main_cluster(grid, rho, N)
                        img = None if mc is None else mc.image
                    if img is not None:
                        site_open[i, j] = True
                        site_skel[(i, j)] = Skeleton(x0, y0, img[0::2, 0::2].copy(),
                                                     img[1::2, 0::2].copy(), img[0::2, 1::2].copy())
        else:
            prev = states[lat.step - 1]
            for i in range(nc):
                c0, c1 = lat.cols.children[i]
                for j in range(nr):
                    r0, r1 = lat.rows.children[j]
                    grid = SiteBondGrid(prev.site_open[c0:c1, r0:r1],
                                        prev.bond_h_open[c0:c1 - 1, r0:r1],
                                        prev.bond_v_open[c0:c1, r0:r1 - 1])
                    mc = main_cluster(grid, rho, N)
                    if mc is None:
                        continue
                    site_open[i, j] = True
                    sk = Skeleton.empty(*lat.span(i, j))
                    for a, b in zip(*np.nonzero(mc.sites)):
                        sk.absorb(prev.site_skel[(c0 + a, r0 + b)])
                    bh, bv = mc.bonds()
                    for a, b in zip(*np.nonzero(bh)):
                        sk.absorb(prev.bond_h_skel[(c0 + a, r0 + b)])
                    for a, b in zip(*np.nonzero(bv)):
                        sk.absorb(prev.bond_v_skel[(c0 + a, r0 + b)])
                    site_skel[(i, j)] = sk
        bond_h_open = np.zeros((max(nc - 1, 0), nr), bool)
        bond_v_open = np.zeros((nc, max(nr - 1, 0)), bool)
        bond_h_skel, bond_v_skel = {}, {}
        for o, arr, store in ((Orientation.H, bond_h_open, bond_h_skel),
                              (Orientation.V, bond_v_open, bond_v_skel)):
            ni, nj = arr.shape
            for i in range(ni):
                for j in range(nj):
                    other = (i + 1, j) if o is Orientation.H else (i, j + 1)
                    if not (site_open[i, j] and site_open[other]):
                        continue
                    good = lat.cols.gap_good(i) if o is Orientation.H else lat.rows.gap_good(j)
                    if not good:
                        continue
                    s1, s2 = site_skel[(i, j)], site_skel[other]
                    if restricted or lat.step == 1:
                        rect = lat.bond_rect(o, i, j)
                        if geometry == "core" and lat.step == 1:
                            rect = _collar_rect(o, s1, s2)
                        sk = _connect(config, rect, o, s1, s2)
                    else:
                        sk = _connect_unrestricted(config, s1, s2, full_lab, full_img_lab)
                    if sk is not None:
                        arr[i, j] = True
                        store[(i, j)] = sk
        states[lat.step] = StepState(site_open, bond_h_open, bond_v_open,
                                     site_skel, bond_h_skel, bond_v_skel)
    return EvaluatedChain(lattice, config, rho, restricted, states)


def _collar_rect(o: Orientation, s1: Skeleton, s2: Skeleton):
    if o is Orientation.H:
        return s1.x1, s2.x0, min(s1.y0, s2.y0), max(s1.y1, s2.y1)
    return min(s1.x0, s2.x0), max(s1.x1, s2.x1), s1.y1, s2.y0


# ---------------------------------------------------------------------------
# renormalized percolation surrogate


@dataclass
class PercolationOutcome:
    percolates: bool
    cluster_sites: np.ndarray | None = None
    replay_ok: bool | None = None


def _step_grid(st: StepState, lat: RenormLattice) -> SiteBondGrid:
    return SiteBondGrid(st.site_open, st.bond_h_open & lat.good_h(), st.bond_v_open & lat.good_v())


def origin_percolates_renormalized(ev: EvaluatedChain, K: int | None = None) -> bool:
    """Origin's step-``K`` site open and joined to the far edge of the step-``K`` lattice."""
    return renormalized_cluster(ev, K).percolates


def renormalized_cluster(ev: EvaluatedChain, K: int | None = None) -> PercolationOutcome:
    K = ev.lattice.step if K is None else K
    st = ev.state(K)
    lat = ev.lattice.at_step(K)
    if not st.site_open[0, 0]:
        return PercolationOutcome(False)
    grid = _step_grid(st, lat)
    img = grid.expanded()
    lab, _ = ndimage.label(img, structure=_FOUR)
    sl = lab[0::2, 0::2]
    members = sl == sl[0, 0]
    far = np.zeros_like(members)
    far[-1, :] = True
    far[:, -1] = True
    ok = bool(np.any(members & far))
    return PercolationOutcome(ok, members if ok else None)


def replay_skeleton_path(ev: EvaluatedChain, K: int | None = None) -> bool:
    """Step-0 path inside the cluster's skeletons from the origin site to a far site.

    Only meaningful when :func:`origin_percolates_renormalized` holds;
    returns ``False`` otherwise.
    """
    K = ev.lattice.step if K is None else K
    out = renormalized_cluster(ev, K)
    if not out.percolates:
        return False
    st = ev.state(K)
    lat = ev.lattice.at_step(K)
    W, H = ev.config.box[0] + 1, ev.config.box[1] + 1
    sites = np.zeros((W, H), bool)
    h = np.zeros((W - 1, H), bool)
    v = np.zeros((W, H - 1), bool)
    members = out.cluster_sites
    for i, j in zip(*np.nonzero(members)):
        st.site_skel[(i, j)].paint(sites, h, v)
    bh = st.bond_h_open & lat.good_h() & members[:-1, :] & members[1:, :]
    for i, j in zip(*np.nonzero(bh)):
        st.bond_h_skel[(i, j)].paint(sites, h, v)
    bv = st.bond_v_open & lat.good_v() & members[:, :-1] & members[:, 1:]
    for i, j in zip(*np.nonzero(bv)):
        st.bond_v_skel[(i, j)].paint(sites, h, v)
    # only bonds that are actually open in the configuration may be used
    h &= ev.config.open_h[: W - 1, :H]
    v &= ev.config.open_v[:W, : H - 1]
    grid = SiteBondGrid(sites, h, v)
    img = grid.expanded()
    lab, _ = ndimage.label(img, structure=_FOUR)
    sl = lab[0::2, 0::2]
    start = np.zeros((W, H), bool)
    st.site_skel[(0, 0)].paint(start, np.zeros((W - 1, H), bool), np.zeros((W, H - 1), bool))
    nc, nr = lat.shape
    target = np.zeros((W, H), bool)
    for i, j in zip(*np.nonzero(members)):
        if i == nc - 1 or j == nr - 1:
            st.site_skel[(i, j)].paint(target, np.zeros((W - 1, H), bool), np.zeros((W, H - 1), bool))
    a = set(np.unique(sl[start & sites]).tolist()) - {0}
    b = set(np.unique(sl[target & sites]).tolist()) - {0}
    return bool(a & b)


def skeleton_uses_end_bonds(ev: EvaluatedChain) -> list[tuple]:
    """Bond skeletons containing a step-0 bond parallel to one of the bond's end lines."""
    bad = []
    for k, st in ev.states.items():
        lat = ev.lattice.at_step(k)
        for (i, j), sk in st.bond_h_skel.items():
            x0, x1, y0, y1 = lat.bond_rect(Orientation.H, i, j)
            if sk.v[0, :].any() or sk.v[-1, :].any():
                bad.append((k, "H", i, j))
        for (i, j), sk in st.bond_v_skel.items():
            if sk.h[:, 0].any() or sk.h[:, -1].any():
                bad.append((k, "V", i, j))
    return bad


# ---------------------------------------------------------------------------
# chained predicates


def _frame(config: BondConfiguration, orientation: Orientation) -> tuple[np.ndarray, np.ndarray]:
    """Bond fields with the crossing direction along the first axis."""
    if orientation is Orientation.H:
        return config.open_h, config.open_v
    return config.open_v.T, config.open_h.T


def _runs(positions: Sequence[int]) -> list[tuple[int, int]]:
    runs = []
    for p in positions:
        if runs and p == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], p)
        else:
            runs.append((p, p))
    return runs


def _reach(along: np.ndarray, across: np.ndarray, x0: int, x1: int, start: set[int],
           lo: int, hi: int) -> set[int]:
    """Rows reached at column ``x1`` from ``(x0, y)``, ``y in start``, inside rows ``[lo, hi]``."""
    if not start:
        return set()
    g = SiteBondGrid(np.ones((x1 - x0 + 1, hi - lo + 1), bool),
                     along[x0:x1, lo:hi + 1], across[x0:x1 + 1, lo:hi])
    lab, _ = ndimage.label(g.expanded(), structure=_FOUR)
    sl = lab[0::2, 0::2]
    src = {int(sl[0, y - lo]) for y in start if lo <= y <= hi}
    return {lo + int(r) for r in np.flatnonzero(np.isin(sl[-1, :], list(src)))}


def strip_rows(center: int, N: int, n_rows: int) -> tuple[int, int]:
    """Rows of the height-``isqrt(N)`` strip centred on ``center``, clipped to the box."""
    h = max(1, math.isqrt(N))
    lo = center - (h - 1) // 2
    return max(0, lo), min(n_rows - 1, lo + h - 1)


def _orientation_of(psi0, upsilon0) -> Orientation:
    if psi0[1] == upsilon0[1] and psi0[0] < upsilon0[0]:
        return Orientation.H
    if psi0[0] == upsilon0[0] and psi0[1] < upsilon0[1]:
        return Orientation.V
    raise InputError(f"{psi0} and {upsilon0} are not collinear in increasing order")


def chained_level0(config: BondConfiguration, block: Block, psi0, upsilon0, N: int) -> bool:
    """Level-0 chaining of ``psi0`` and ``upsilon0`` across ``block``.

    ``psi0`` sits on the line ``alpha(block)`` and ``upsilon0`` on
    ``omega(block)``, on a common row (or column for vertical crossing).
    Runs of consecutive bad ladders are crossed by straight open segments;
    the good gaps between runs by open paths in the height-``isqrt(N)``
    strip centred on the common row.
    """
    o = _orientation_of(tuple(psi0), tuple(upsilon0))
    if block.level > 1:
        raise InputError("level-0 chaining needs a block of level at most 1")
    ax = 0 if o is Orientation.H else 1
    if psi0[ax] != block.start or upsilon0[ax] != block.omega:
        raise InputError("endpoints must lie on the block's start and end lines")
    row = psi0[1 - ax]
    along, across = _frame(config, o)
    if along.shape[0] < block.omega or row >= along.shape[1]:
        raise WindowError("block crossing exceeds the configuration box")
    lo, hi = strip_rows(row, N, along.shape[1])
    return row in _level0_reach(along, across, block.positions, {row}, lo, hi)


def _level0_reach(along, across, positions, start: set[int], lo: int, hi: int) -> set[int]:
    runs = _runs(positions)
    cur = set(start)
    for r, (a, b) in enumerate(runs):
        cur = {y for y in cur if along[a:b + 1, y].all()}
        if r + 1 < len(runs):
            cur = _reach(along, across, b + 1, runs[r + 1][0], cur, lo, hi)
        if not cur:
            break
    return cur


def separated_bands(rows: Iterable[int], J: int, sep: int, half: int) -> list[set[int]]:
    """Up to ``J`` bands of ``rows`` around centres at least ``sep`` apart."""
    rows = sorted(set(rows))
    centres: list[int] = []
    for y in rows:
        if not centres or y - centres[-1] >= sep:
            centres.append(y)
        if len(centres) == J:
            break
    rs = set(rows)
    return [{y for y in range(c - half, c + half + 1) if y in rs} for c in centres]


def chained(config: BondConfiguration, block: Block, psi: Iterable[int], upsilon: Iterable[int],
            k: int, N: int, J: int, orientation: Orientation | str = Orientation.H) -> bool:
    """Structural chaining of two row sets across ``block`` at scale ``k``.

    ``psi`` are transverse coordinates on the line ``alpha(block)`` and
    ``upsilon`` on ``omega(block)``.  Scale 0 applies :func:`chained_level0`
    to collinear pairs.  For ``k >= level`` the common rows are thinned to
    ``J`` bands whose centres are ``isqrt(N) * N**(k-1)`` apart and one band
    must chain at scale ``k - 1``.  For ``k = level - 1`` each constituent is
    crossed at scale ``k`` with aligned rows and the porous gaps between
    constituents by open paths in a strip of height ``isqrt(N) * N**k``.
    """
    o = Orientation(orientation)
    along, across = _frame(config, o)
    n_rows = along.shape[1]
    psi, upsilon = set(psi), set(upsilon)
    return bool(_chain_reach(along, across, block, psi, k, N, J, n_rows, psi | upsilon) & upsilon)


def _chain_reach(along, across, block: Block, start: set[int], k: int, N: int, J: int,
                 n_rows: int, band: set[int]) -> set[int]:
    """Rows on ``omega(block)`` chained to ``start`` rows on ``alpha(block)``."""
    if not start:
        return set()
    if k < block.level - 1:
        raise InputError(f"scale {k} below level-1 of the block ({block.level})")
    if k == 0:
        if block.level > 1:
            raise InputError("scale 0 needs a block of level at most 1")
        out = set()
        for y in start:
            lo, hi = strip_rows(y, N, n_rows)
            if y in _level0_reach(along, across, block.positions, {y}, lo, hi):
                out.add(y)
        return out
    if k >= block.level:
        sep = max(1, math.isqrt(N)) * N ** (k - 1)
        half = max(0, N ** (k - 1) // 2)
        out = set()
        for b in separated_bands(start, J, sep, half):
            out |= _chain_reach(along, across, block, b, k - 1, N, J, n_rows, b)
            if out:
                break
        return out
    # k == level - 1: walk the constituents
    cons = sorted(block.constituents, key=lambda c: c.start)
    if not cons:
        return _chain_reach(along, across, block, start, k + 1, N, J, n_rows, band)
    h = max(1, math.isqrt(N)) * N ** k
    centre = (min(band) + max(band)) // 2
    lo = max(0, centre - h // 2)
    hi = min(n_rows - 1, lo + h - 1)
    cur = {y for y in start if lo <= y <= hi}
    for v, c in enumerate(cons):
        cur = _chain_reach(along, across, c, cur, k, N, J, n_rows, cur or band)
        if v + 1 < len(cons) and cur:
            cur = _reach(along, across, c.omega, cons[v + 1].start, cur, lo, hi)
        if not cur:
            return set()
    return cur
