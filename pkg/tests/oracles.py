"""Brute-force reference implementations used only by the tests.

Nothing here imports the package's algorithms: graphs are explicit
adjacency dictionaries, connectivity is breadth-first search, disjoint
crossings are a maximum packing over enumerated paths, and exact
probabilities come from enumerating every state.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from fractions import Fraction

import numpy as np


def neighbours(W, H, sites, h, v):
    """Adjacency over open bonds (site states are checked by the callers)."""
    adj = {(x, y): [] for x in range(W) for y in range(H)}
    for x in range(W - 1):
        for y in range(H):
            if h[x][y]:
                adj[(x, y)].append((x + 1, y))
                adj[(x + 1, y)].append((x, y))
    for x in range(W):
        for y in range(H - 1):
            if v[x][y]:
                adj[(x, y)].append((x, y + 1))
                adj[(x, y + 1)].append((x, y))
    return adj


def reachable(W, H, sites, h, v, u):
    """Sites reachable from ``u`` (whose own state is ignored) through open sites and bonds."""
    adj = neighbours(W, H, sites, h, v)
    seen = {u}
    todo = deque([u])
    while todo:
        a = todo.popleft()
        for b in adj[a]:
            if b not in seen and sites[b[0]][b[1]]:
                seen.add(b)
                todo.append(b)
    return seen


def bfs_connected(W, H, sites, h, v, u, t):
    return u == t or t in reachable(W, H, sites, h, v, u)


def crossing_paths(W, H, sites, h, v, side="LR"):
    """Simple open paths from the first side to the opposite one.

    Each path touches the source side only at its start and the target side
    only at its end; every maximum disjoint family can be shortened to one
    made of such paths.
    """
    adj = neighbours(W, H, sites, h, v)
    if side == "LR":
        src = [(0, y) for y in range(H)]
        is_src = lambda a: a[0] == 0
        is_dst = lambda a: a[0] == W - 1
    else:
        src = [(x, 0) for x in range(W)]
        is_src = lambda a: a[1] == 0
        is_dst = lambda a: a[1] == H - 1
    out = []

    def walk(path, used):
        a = path[-1]
        if is_dst(a):
            out.append(frozenset(path))
            return
        for b in adj[a]:
            if b in used or not sites[b[0]][b[1]] or is_src(b):
                continue
            used.add(b)
            path.append(b)
            walk(path, used)
            path.pop()
            used.discard(b)

    for s in src:
        if sites[s[0]][s[1]]:
            walk([s], {s})
    return out


def max_disjoint(paths):
    """Largest number of pairwise vertex-disjoint sets in ``paths``."""
    paths = sorted(set(paths), key=len)
    best = 0

    def go(i, used, count):
        nonlocal best
        best = max(best, count)
        if count + (len(paths) - i) <= best:
            return
        for j in range(i, len(paths)):
            if not (paths[j] & used):
                go(j + 1, used | paths[j], count + 1)

    go(0, frozenset(), 0)
    return best


def brute_disjoint(W, H, sites, h, v, side="LR"):
    return max_disjoint(crossing_paths(W, H, sites, h, v, side))


def simple_cycles(adj, nodes):
    """Every simple cycle (as a vertex list) of the graph induced on ``nodes``."""
    nodes = sorted(nodes)
    order = {a: i for i, a in enumerate(nodes)}
    found = set()
    out = []
    for start in nodes:
        stack = [(start, [start])]
        while stack:
            a, path = stack.pop()
            for b in adj[a]:
                if b not in order or order[b] < order[start]:
                    continue
                if b == start and len(path) >= 4:
                    key = frozenset(zip(path, path[1:] + [start]))
                    key = frozenset(frozenset(e) for e in key)
                    if key not in found:
                        found.add(key)
                        out.append(list(path))
                elif b not in path:
                    stack.append((b, path + [b]))
    return out


def point_in_polygon(pt, poly):
    x, y = pt
    inside = False
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def brute_DR(W, H, sites, h, v, rho):
    """Some open cluster has ``>= rho * l`` sites on every side and a circuit
    enclosing a lattice face next to the center site."""
    adj = neighbours(W, H, sites, h, v)
    cx, cy = (W - 1) // 2, (H - 1) // 2
    faces = [(cx + dx, cy + dy) for dx in (-0.5, 0.5) for dy in (-0.5, 0.5)
             if 0 <= cx + dx <= W - 1 and 0 <= cy + dy <= H - 1]
    done = set()
    for x in range(W):
        for y in range(H):
            if not sites[x][y] or (x, y) in done:
                continue
            cl = reachable(W, H, sites, h, v, (x, y))
            done |= cl
            need_v = math.ceil(Fraction(rho).limit_denominator(1000) * H)
            need_h = math.ceil(Fraction(rho).limit_denominator(1000) * W)
            if sum((0, j) in cl for j in range(H)) < need_v:
                continue
            if sum((W - 1, j) in cl for j in range(H)) < need_v:
                continue
            if sum((i, 0) in cl for i in range(W)) < need_h:
                continue
            if sum((i, H - 1) in cl for i in range(W)) < need_h:
                continue
            sub = {a: [b for b in adj[a] if b in cl] for a in cl}
            for cyc in simple_cycles(sub, cl):
                if any(point_in_polygon(f, cyc) for f in faces):
                    return True
    return False


def brute_CR(W, H, sites, h, v):
    """Short-side midpoints of the whole grid joined without boundary bonds."""
    if W < H:
        sites = [list(r) for r in zip(*sites)]
        h, v = [list(r) for r in zip(*v)], [list(r) for r in zip(*h)]
        W, H = H, W
    h = [[h[x][y] and 0 < y < H - 1 for y in range(H)] for x in range(W - 1)]
    v = [[v[x][y] and 0 < x < W - 1 for y in range(H - 1)] for x in range(W)]
    mid = (H - 1) // 2
    return bfs_connected(W, H, sites, h, v, (0, mid), (W - 1, mid))


def brute_origin_to_boundary(W, H, sites, h, v):
    """Origin ``(0, 0)`` joined to a site with ``max(x, y) = n``, ``n = min(W, H) - 1``."""
    n = min(W, H) - 1
    return any(max(a) == n for a in reachable(W, H, sites, h, v, (0, 0)))


def unpack(W, H, states):
    """Sites, H bonds and V bonds (nested lists) from a flat state tuple.

    Order: sites (x-major), then H bonds, then V bonds.
    """
    it = iter(states)
    sites = [[next(it) for y in range(H)] for x in range(W)]
    h = [[next(it) for y in range(H)] for x in range(W - 1)]
    v = [[next(it) for y in range(H - 1)] for x in range(W)]
    return sites, h, v


def n_elements(W, H):
    return W * H + (W - 1) * H + W * (H - 1)


def to_arrays(sites, h, v):
    return (np.array(sites, dtype=bool).reshape(len(sites), -1),
            np.array(h, dtype=bool).reshape(len(h), -1),
            np.array(v, dtype=bool).reshape(len(v), -1))


# ---------------------------------------------------------------------------
# vectorized exhaustive enumeration: every state at once


def all_states(n):
    """Boolean array ``(2**n, n)`` of every state, element 0 the slowest bit."""
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(bool)


def state_weights(states, probs):
    w = np.ones(states.shape[0])
    for i, p in enumerate(probs):
        w *= np.where(states[:, i], p, 1.0 - p)
    return w


def relax_reach(W, H, site_cols, h_cols, v_cols, source):
    """Reachability from ``source`` for many states by repeated relaxation.

    ``site_cols[(x, y)]`` etc. are boolean arrays over states.
    """
    n = next(iter(site_cols.values())).shape[0]
    reach = {(x, y): np.zeros(n, bool) for x in range(W) for y in range(H)}
    reach[source][:] = True
    edges = [((x, y), (x + 1, y), h_cols[(x, y)]) for x in range(W - 1) for y in range(H)]
    edges += [((x, y), (x, y + 1), v_cols[(x, y)]) for x in range(W) for y in range(H - 1)]
    for _ in range(W * H):
        changed = False
        for a, b, open_ in edges:
            nb = reach[b] | (reach[a] & open_ & site_cols[b])
            na = reach[a] | (reach[b] & open_ & site_cols[a])
            if (nb != reach[b]).any() or (na != reach[a]).any():
                changed = True
            reach[a], reach[b] = na, nb
        if not changed:
            break
    return reach


def columns(W, H, states):
    it = iter(range(states.shape[1]))
    s = {(x, y): states[:, next(it)] for x in range(W) for y in range(H)}
    h = {(x, y): states[:, next(it)] for x in range(W - 1) for y in range(H)}
    v = {(x, y): states[:, next(it)] for x in range(W) for y in range(H - 1)}
    return s, h, v


def exact_origin_to_boundary(W, H, s, p):
    n = n_elements(W, H)
    st = all_states(n)
    sc, hc, vc = columns(W, H, st)
    reach = relax_reach(W, H, sc, hc, vc, (0, 0))
    m = min(W, H) - 1
    hit = np.zeros(st.shape[0], bool)
    for (x, y), r in reach.items():
        if max(x, y) == m:
            hit |= r
    probs = [s] * (W * H) + [p] * (n - W * H)
    w = state_weights(st, probs)
    # the origin's own state is irrelevant; summing over it is harmless
    return float(w[hit].sum())


def exact_lr_crossing(W, H, s, p):
    """P(some open left-right path), all sites on the path open."""
    n = n_elements(W, H)
    st = all_states(n)
    sc, hc, vc = columns(W, H, st)
    hit = np.zeros(st.shape[0], bool)
    for y0 in range(H):
        reach = relax_reach(W, H, sc, hc, vc, (0, y0))
        start = sc[(0, y0)]
        for y in range(H):
            hit |= start & reach[(W - 1, y)] & sc[(W - 1, y)]
    probs = [s] * (W * H) + [p] * (n - W * H)
    return float(state_weights(st, probs)[hit].sum())


def exact_lr_bond_fraction(W, H):
    """Exact LR crossing probability at p = 1/2 on the bond-only grid, as a Fraction."""
    nb = (W - 1) * H + W * (H - 1)
    st = all_states(nb)
    sc = {(x, y): np.ones(st.shape[0], bool) for x in range(W) for y in range(H)}
    it = iter(range(nb))
    hc = {(x, y): st[:, next(it)] for x in range(W - 1) for y in range(H)}
    vc = {(x, y): st[:, next(it)] for x in range(W) for y in range(H - 1)}
    hit = np.zeros(st.shape[0], bool)
    for y0 in range(H):
        reach = relax_reach(W, H, sc, hc, vc, (0, y0))
        for y in range(H):
            hit |= reach[(W - 1, y)]
    return Fraction(int(hit.sum()), 1 << nb)


def dedekind(n):
    """Number of up-sets of ``{0,1}^n`` by direct enumeration (1, 2, 3, 6, 20, 168, ...)."""
    states = list(itertools.product((0, 1), repeat=n))
    count = 0
    for mask in range(1 << len(states)):
        chosen = {st for i, st in enumerate(states) if mask >> i & 1}
        ok = True
        for st in chosen:
            for a in states:
                if all(x >= y for x, y in zip(a, st)) and a not in chosen:
                    ok = False
                    break
            if not ok:
                break
        count += ok
    return count


# ---------------------------------------------------------------------------
# words on the oriented lattice


def brute_z(omega, phi, v0=None):
    """``Z[t]`` by walking every oriented path spelling ``phi`` and collecting endpoints."""
    omega = np.asarray(omega)
    d = omega.ndim
    v0 = tuple(v0) if v0 is not None else (0,) * d
    ends = [set() for _ in range(len(phi) + 1)]

    def walk(v, t):
        ends[t].add(v)
        if t == len(phi):
            return
        for ax in range(d):
            w = v[:ax] + (v[ax] + 1,) + v[ax + 1:]
            if w[ax] < omega.shape[ax] and omega[w] == phi[t]:
                walk(w, t + 1)

    walk(v0, 0)
    return [len(e) for e in ends]
