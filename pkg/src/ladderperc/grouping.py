"""Multi-scale grouping of bad ladders into blocks.

Given the sorted set ``gamma`` of bad positions, step 0 makes singletons,
step 1 merges maximal runs with gaps ``< M`` and step ``k+1`` merges runs of
blocks of mass ``>= k+1`` lying at distance ``< L**(k+1)``; the new block is
the span closure of the run, and its mass is the sum of the run's masses
minus ``k * (len(run) - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .env import ParameterError


class InputError(ValueError):
    """Malformed positions or arguments outside a function's domain."""


@dataclass(eq=False)
class Block:
    positions: tuple[int, ...]
    mass: int
    level: int
    constituents: tuple["Block", ...] = ()
    uid: int = -1
    span: tuple[int, int] | None = None

    def __post_init__(self):
        if self.span is None:
            self.span = (self.positions[0], self.positions[-1])

    @property
    def start(self) -> int:
        return self.positions[0]

    @property
    def end(self) -> int:
        return self.positions[-1]

    @property
    def alpha(self) -> int:
        """First bad ladder index (left end of the layer)."""
        return self.positions[0]

    @property
    def omega(self) -> int:
        """First site beyond the layer: ``max(C) + 1``."""
        return self.positions[-1] + 1

    def __len__(self) -> int:
        return len(self.positions)

    def key(self) -> tuple:
        return (self.positions, self.mass, self.level)

    def __repr__(self) -> str:
        return f"Block(span={self.span}, n={len(self)}, mass={self.mass}, level={self.level})"


def distance(a: Block, b: Block) -> int:
    if a.end < b.start:
        return b.start - a.end
    if b.end < a.start:
        return a.start - b.end
    return 0


@dataclass(frozen=True)
class Partition:
    step: int
    blocks: tuple[Block, ...]


@dataclass
class GroupingResult:
    gamma: tuple[int, ...]
    M: int
    L: int
    partitions: list[Partition]
    blocks: list[Block]
    window: int | None = None
    truncated: bool = False

    @property
    def K(self) -> int:
        return len(self.partitions) - 1

    def partition(self, k: int) -> Partition:
        """``C_k``; partitions are constant beyond the stabilization step."""
        return self.partitions[min(k, self.K)]

    @cached_property
    def kappa(self) -> dict[int, int]:
        out = {x: 0 for x in self.gamma}
        for b in self.blocks:
            for x in b.positions:
                if b.level > out[x]:
                    out[x] = b.level
        return out

    @cached_property
    def chi(self) -> int:
        return chi_and_spaced(self)[0]

    @property
    def m_spaced(self) -> bool:
        return self.chi == 0

    def delimiters(self, k: int) -> list[Block]:
        """Blocks of ``C_k`` with mass at least ``k`` (the bad layers of step k)."""
        return [b for b in self.partition(k).blocks if b.mass >= k]


def _check_gamma(gamma: Iterable[int]) -> tuple[int, ...]:
    g = tuple(int(x) for x in gamma)
    if any(x < 0 for x in g):
        raise InputError("positions must be non-negative")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise InputError("positions must be strictly increasing")
    return g


def run_grouping(gamma: Sequence[int], M: int = 3, L: int | None = None,
                 window: int | None = None) -> GroupingResult:
    """Run the grouping procedure to stabilization.

    ``window`` is the number of observed positions (``gamma`` lies in
    ``[0, window)``); when given, the result is flagged ``truncated`` if the
    guard band ``L**(K+2)`` past the last bad position does not fit.
    """
    if M < 3:
        raise ParameterError(f"M={M} < 3")
    L = M if L is None else L
    if L < 2:
        raise ParameterError(f"L={L} < 2")
    g = _check_gamma(gamma)
    if isinstance(gamma, np.ndarray) and gamma.dtype.kind == "b":
        raise InputError("pass positions, not a boolean mask")

    uid = 0
    blocks: list[Block] = []

    def new(positions, mass, level, constituents=()):
        nonlocal uid
        b = Block(tuple(positions), mass, level, tuple(constituents), uid)
        uid += 1
        blocks.append(b)
        return b

    current = [new((x,), 1, 0) for x in g]
    partitions = [Partition(0, tuple(current))]

    # step 1: runs with consecutive gaps < M
    if current:
        nxt, run = [], [current[0]]
        for b in current[1:]:
            if b.start - run[-1].end < M:
                run.append(b)
            else:
                nxt.append(_close_step1(run, new))
                run = [b]
        nxt.append(_close_step1(run, new))
        current = nxt
    partitions.append(Partition(1, tuple(current)))

    k = 1
    while sum(1 for b in current if b.mass >= k + 1) >= 2:
        scale = L ** (k + 1)
        heavy = [i for i, b in enumerate(current) if b.mass >= k + 1]
        runs, run = [], [heavy[0]]
        for i in heavy[1:]:
            if current[i].start - current[run[-1]].end < scale:
                run.append(i)
            else:
                runs.append(run)
                run = [i]
        runs.append(run)
        nxt, pos = [], 0
        for r in runs:
            if len(r) < 2:
                continue
            lo, hi = r[0], r[-1]
            nxt.extend(current[pos:lo])
            members = [current[i] for i in r]
            positions = [x for b in current[lo:hi + 1] for x in b.positions]
            mass = sum(b.mass for b in members) - k * (len(members) - 1)
            nxt.append(new(positions, mass, k + 1, members))
            pos = hi + 1
        nxt.extend(current[pos:])
        current = nxt
        k += 1
        partitions.append(Partition(k, tuple(current)))

    # drop trailing steps that repeat the previous partition
    while len(partitions) > 1 and partitions[-1].blocks == partitions[-2].blocks:
        partitions.pop()

    result = GroupingResult(g, M, L, partitions, blocks, window)
    if window is not None and g:
        result.truncated = (window - 1 - g[-1]) < L ** (result.K + 2)
    return result


def _close_step1(run, new):
    if len(run) == 1:
        return run[0]
    return new([b.start for b in run], len(run), 1, run)


def chi_and_spaced(result: GroupingResult, L: int | None = None) -> tuple[int, bool]:
    """Spacing statistic over every block of ``C_l``, ``l >= 1``.

    The smallest ``k`` such that every such block of mass ``> k`` starts at
    or beyond ``L**mass``; equivalently the largest violating mass, or 0.
    """
    L = result.L if L is None else L
    seen: dict[int, Block] = {}
    for k in range(1, max(result.K, 1) + 1):
        for b in result.partition(k).blocks:
            seen[b.uid] = b
    chi = 0
    for b in seen.values():
        if b.start < L ** b.mass and b.mass > chi:
            chi = b.mass
    return chi, chi == 0


def kappa_of(result: GroupingResult, x: int) -> int:
    if x not in result.kappa:
        raise InputError(f"{x} is not a bad position")
    return result.kappa[x]


# ---------------------------------------------------------------------------
# descending decompositions


@dataclass
class DescendingDecomposition:
    f: list[int]
    g: list[int]
    masses: list[int]
    blocks: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def v(self) -> int:
        return len(self.f)


@dataclass
class DecompositionFailure:
    """No cut sequence satisfied every clause; kept as data, not raised."""

    block: Block
    M: int
    reason: str


def _single_block_mass(positions: Sequence[int], M: int, L: int) -> int | None:
    res = run_grouping(positions, M, L)
    final = res.partitions[-1].blocks
    return final[0].mass if len(final) == 1 else None


def descending_decomposition(block: Block, gamma: Sequence[int], M: int,
                             L: int | None = None):
    """Search for a descending decomposition of ``block``.

    Returns a :class:`DescendingDecomposition` or a
    :class:`DecompositionFailure`.  Cut points ``f_s`` are bad positions;
    each ``g_s`` ranges over the integers between the last bad position of the
    sub-block and the next bad position.
    """
    if block.mass < 2:
        raise InputError("descending decomposition needs mass >= 2")
    L = M if L is None else L
    pos = list(block.positions)
    top = pos[-1]
    n = len(pos)
    gset = set(int(x) for x in gamma)
    mass_cache: dict[tuple[int, int], int | None] = {}

    def sub_mass(i, j):
        if (i, j) not in mass_cache:
            mass_cache[(i, j)] = _single_block_mass(pos[i:j + 1], M, L)
        return mass_cache[(i, j)]

    def g_range(j):
        # g with gamma ∩ [f, g] ending exactly at pos[j]
        hi = (pos[j + 1] - 1) if j + 1 < n else top - 1
        return pos[j], hi

    failed: set[tuple[int, int, int]] = set()

    def search(i, j, mt):
        """Sub-block pos[i..j] has mass mt; extend to the end of the block."""
        if (i, j, mt) in failed:
            return None
        lo, hi = g_range(j)
        # termination: nothing bad strictly between g and max(C)
        if j == n - 2 and hi >= lo:
            g = max(lo, top - M + 1)
            if g <= hi and not any(x in gset for x in range(g + 1, top)):
                return [(pos[i], g, mt, tuple(pos[i:j + 1]))]
        for i2 in range(j + 1, n - 1):
            f2 = pos[i2]
            for j2 in range(i2, n - 1):
                m2 = sub_mass(i2, j2)
                if m2 is None or m2 >= mt:
                    continue
                glo = max(lo, f2 - M ** (m2 + 1))
                ghi = min(hi, f2 - M ** m2)
                if glo > ghi:
                    continue
                rest = search(i2, j2, m2)
                if rest is not None:
                    return [(pos[i], glo, mt, tuple(pos[i:j + 1]))] + rest
        failed.add((i, j, mt))
        return None

    for j in range(0, n - 1):
        if sub_mass(0, j) == block.mass - 1:
            found = search(0, j, block.mass - 1)
            if found is not None:
                return DescendingDecomposition(
                    f=[t[0] for t in found], g=[t[1] for t in found],
                    masses=[t[2] for t in found], blocks=[t[3] for t in found])
    return DecompositionFailure(block, M, "no cut sequence satisfies every clause")


def verify_decomposition(dec: DescendingDecomposition, block: Block, gamma: Sequence[int],
                         M: int, L: int | None = None) -> list[str]:
    """Re-check every clause; returns the list of violated clauses."""
    L = M if L is None else L
    bad = []
    gset = sorted(set(int(x) for x in gamma))
    top, m = block.end, block.mass
    if not dec.f:
        return ["empty decomposition"]
    if dec.f[0] != block.start:
        bad.append("f_1 != min(C)")
    if any(b <= a for a, b in zip(dec.f, dec.f[1:])) or any(b <= a for a, b in zip(dec.g, dec.g[1:])):
        bad.append("cut points not increasing")
    if any(g < f for f, g in zip(dec.f, dec.g)) or any(f <= g for g, f in zip(dec.g, dec.f[1:])):
        bad.append("cut points not interleaved")
    if dec.g[-1] > top - 1:
        bad.append("g_v > max(C) - 1")
    if dec.masses[0] != m - 1:
        bad.append("first mass != m - 1")
    if any(b >= a for a, b in zip(dec.masses, dec.masses[1:])):
        bad.append("masses not strictly decreasing")
    for s, (f, g, mt) in enumerate(zip(dec.f, dec.g, dec.masses)):
        sub = [x for x in gset if f <= x <= g]
        if not sub or _single_block_mass(sub, M, L) != mt:
            bad.append(f"[f_{s + 1}, g_{s + 1}] is not a single block of mass {mt}")
        if s >= 1:
            gap = f - dec.g[s - 1]
            if not (M ** mt <= gap <= M ** (mt + 1)):
                bad.append(f"gap before f_{s + 1} outside [M^{mt}, M^{mt + 1}]")
    if not (top - M < dec.g[-1]):
        bad.append("max(C) - M >= g_v")
    if any(dec.g[-1] + 1 <= x <= top - 1 for x in gset):
        bad.append("bad position in [g_v + 1, max(C) - 1]")
    return bad


# ---------------------------------------------------------------------------
# partition properties


@dataclass
class Violation:
    step: int
    clause: str
    blocks: tuple


def verify_partition_properties(result: GroupingResult, L: int | None = None) -> list[Violation]:
    """Check span closure, spacing and level < mass at every step."""
    L = result.L if L is None else L
    gamma = np.asarray(result.gamma, dtype=np.int64)
    out: list[Violation] = []
    for part in result.partitions:
        k = part.step
        blocks = sorted(part.blocks, key=lambda b: b.start)
        covered = sorted(x for b in blocks for x in b.positions)
        if covered != list(result.gamma):
            out.append(Violation(k, "cover", ()))
        for b in blocks:
            lo, hi = b.span
            if (lo, hi) != (b.positions[0], b.positions[-1]):
                out.append(Violation(k, "2.z", (b,)))
                continue
            inside = gamma[(gamma >= lo) & (gamma <= hi)]
            if tuple(inside.tolist()) != b.positions:
                out.append(Violation(k, "2.z", (b,)))
            if not b.level < b.mass:
                out.append(Violation(k, "2.a", (b,)))
        if k >= 1:
            for i, a in enumerate(blocks):
                reach = L ** min(a.mass, k)
                for b in blocks[i + 1:]:
                    d = distance(a, b)
                    if d < L ** min(a.mass, b.mass, k):
                        out.append(Violation(k, "2.two", (a, b)))
                    # sorted disjoint spans: later blocks are farther still
                    if d >= reach:
                        break
    return out


# ---------------------------------------------------------------------------
# naive reference


def naive_grouping(gamma: Sequence[int], M: int = 3, L: int | None = None) -> list[list[tuple]]:
    """Quadratic reference: partitions as lists of ``(positions, mass, level)``.

    Written directly from the block definitions with set operations and a
    fixed step budget of ``len(gamma) + 1``; shares no code with
    :func:`run_grouping`.
    """
    L = M if L is None else L
    gam = sorted(set(gamma))
    parts = [[(frozenset([x]), 1, 0) for x in gam]]
    # step 1 via pairwise links
    link = {x: {x} for x in gam}
    for a in gam:
        for b in gam:
            if a < b and b - a < M and not any(a < c < b for c in gam):
                merged = link[a] | link[b]
                for c in merged:
                    link[c] = merged
    groups = {frozenset(s) for s in link.values()}
    parts.append([(s, len(s), 1 if len(s) > 1 else 0) for s in groups])
    for k in range(1, len(gam) + 1):
        prev = parts[-1]
        heavy = sorted([b for b in prev if b[1] >= k + 1], key=lambda b: min(b[0]))
        dist = lambda a, b: min(abs(x - y) for x in a[0] for y in b[0])  # noqa: E731
        runs, cur = [], []
        for b in heavy:
            if cur and dist(cur[-1], b) < L ** (k + 1):
                cur.append(b)
            else:
                if cur:
                    runs.append(cur)
                cur = [b]
        if cur:
            runs.append(cur)
        nxt = list(prev)
        for r in runs:
            if len(r) < 2:
                continue
            lo = min(min(b[0]) for b in r)
            hi = max(max(b[0]) for b in r)
            cset = frozenset(x for x in gam if lo <= x <= hi)
            mass = sum(b[1] for b in r) - k * (len(r) - 1)
            nxt = [b for b in nxt if not b[0] <= cset]
            nxt.append((cset, mass, k + 1))
        parts.append(nxt)
    out = []
    for p in parts:
        out.append(sorted((tuple(sorted(b[0])), b[1], b[2]) for b in p))
    while len(out) > 1 and out[-1] == out[-2]:
        out.pop()
    return out


def partitions_as_tuples(result: GroupingResult) -> list[list[tuple]]:
    return [sorted(b.key() for b in p.blocks) for p in result.partitions]


def blocks_csv_rows(result: GroupingResult) -> list[tuple]:
    """``(step, min, max, mass, level, parent_id)`` per block per step.

    ``parent_id`` is the uid of the block of the next step that contains it,
    or -1 once the block survives to the final partition.
    """
    rows = []
    parts = result.partitions
    for idx, part in enumerate(parts):
        nxt = parts[idx + 1].blocks if idx + 1 < len(parts) else ()
        for b in part.blocks:
            parent = -1
            for c in nxt:
                if c.start <= b.start and b.end <= c.end:
                    parent = c.uid
                    break
            rows.append((part.step, b.start, b.end, b.mass, b.level, parent))
    return rows


def sample_gamma(delta: float, width: int, rng: np.random.Generator) -> np.ndarray:
    return np.flatnonzero(rng.random(width) < delta)
