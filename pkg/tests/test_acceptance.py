"""Acceptance criteria, each run at its stated scale and tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE
from geometry import lattice_violations, spaced_environment
from ladderperc.analytics import (RecursionParams, delta_condition, estim_sum, f, f_closed_form,
                                  induction_check, p_k, peierls_tail, potts_map)
from ladderperc.grouping import (Block, naive_grouping, partitions_as_tuples, run_grouping,
                                 sample_gamma, verify_partition_properties)
from ladderperc.harness import ExperimentSpec, records_to_csv, run_experiment
from ladderperc.perc_core import (CrossingSpec, Kind, connected, count_disjoint_crossings,
                                  enumerate_upsets, estimate_event, event_CR, event_DR,
                                  grid_from_states, grid_sampler, origin_to_boundary,
                                  verify_sanduiche_exact)
from ladderperc.renorm import build_lattice
from ladderperc.rng import Stream
from ladderperc.words import WordParams, estimate_h_proxy, first_moment_bound, sample_fields, z_counts


def record(n, ok, detail, elapsed, budget):
    in_time = elapsed < budget
    ACCEPTANCE.append((n, bool(ok and in_time), f"{detail}; {elapsed:.1f}s of {budget}s"))
    assert ok, detail
    assert in_time, f"took {elapsed:.1f}s, budget {budget}s"


# --- 1 ---------------------------------------------------------------------


def test_criterion_1_grouping_matches_reference():
    t0 = time.perf_counter()
    mism = 0
    for r in range(16):
        for gamma in itertools.combinations(range(15), r):
            mism += partitions_as_tuples(run_grouping(gamma, M=3, L=3)) != naive_grouping(gamma, 3, 3)
    rng = np.random.default_rng(20240601)
    for _ in range(100_000):
        gamma = np.flatnonzero(rng.random(25) < rng.random())
        mism += partitions_as_tuples(run_grouping(gamma, M=3, L=3)) != naive_grouping(gamma, 3, 3)
    record(1, mism == 0, f"{mism} mismatches over 2^15 + 10^5 sets", time.perf_counter() - t0, 120)


# --- 2 ---------------------------------------------------------------------


def plant(res, kind, rng):
    """Corrupt one partition of ``res`` in place; returns False if nothing to corrupt."""
    steps = [p for p in res.partitions[1:] if p.blocks]
    if not steps:
        return False
    part = steps[int(rng.integers(len(steps)))]
    blocks = list(part.blocks)
    i = int(rng.integers(len(blocks)))
    b = blocks[i]
    if kind == "drop":
        del blocks[i]
    elif kind == "level":
        blocks[i] = Block(b.positions, b.mass, b.mass, b.constituents, b.uid)
    elif kind == "span":
        blocks[i] = Block(b.positions, b.mass, b.level, b.constituents, b.uid, (b.start, b.end + 1))
    elif kind == "crowd":
        # a heavy block squeezed next to an existing one
        x = b.end + 1
        if x in res.gamma:
            return False
        res.gamma = tuple(sorted(res.gamma + (x,)))
        blocks[i] = Block(b.positions, max(b.mass, 2), b.level, b.constituents, b.uid)
        blocks.append(Block((x,), 2, 1, (), -5))
    idx = res.partitions.index(part)
    res.partitions[idx] = type(part)(part.step, tuple(blocks))
    return True


def test_criterion_2_partition_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    clean = 0
    for delta in (0.001, 0.01, 0.1):
        for _ in range(10_000):
            clean += verify_partition_properties(run_grouping(sample_gamma(delta, 1000, rng), 3, 3)) == []
    planted = detected = 0
    for kind in ("drop", "level", "span", "crowd"):
        n = 0
        while n < 250:
            res = run_grouping(sample_gamma(0.05, 400, rng), 3, 3)
            if not plant(res, kind, rng):
                continue
            n += 1
            detected += bool(verify_partition_properties(res))
        planted += n
    ok = clean == 30_000 and detected == planted
    record(2, ok, f"{clean}/30000 clean, {detected}/{planted} planted faults caught",
           time.perf_counter() - t0, 60)


# --- 3 ---------------------------------------------------------------------


def test_criterion_3_spaced_positivity():
    t0 = time.perf_counter()
    spec = ExperimentSpec("grouping", {"delta": 0.001, "width": 10_000}, replicates=10_000, seed=3)
    rec = run_experiment(spec)[0]
    record(3, rec.estimate >= 0.5, f"P(chi=0) = {rec.estimate:.4f}", time.perf_counter() - t0, 120)


# --- 4 ---------------------------------------------------------------------


def weights(states, probs):
    return oracles.state_weights(states, probs)


def library_on_states(W, H, states, fn):
    return np.array([fn(grid_from_states(W, H, st)) for st in states], dtype=bool)


def mc_ok(kind, W, H, s, p, exact, reps=100_000, **kw):
    r = estimate_event(CrossingSpec(kind, **kw), grid_sampler(W, H, s, p), reps, seed=44)
    return r.contains(exact), r


def test_criterion_4_exact_oracles():
    t0 = time.perf_counter()
    notes = []
    ok = True
    W = H = 3
    n = oracles.n_elements(W, H)

    # connected((0,0), (2,2)) on every state of the 3x3 graph (origin state ignored)
    st = oracles.all_states(n - 1)
    full = np.concatenate([np.ones((st.shape[0], 1), bool), st], axis=1)
    sc, hc, vc = oracles.columns(W, H, full)
    reach = oracles.relax_reach(W, H, sc, hc, vc, (0, 0))[(2, 2)] & sc[(2, 2)]
    lib = library_on_states(W, H, full, lambda g: connected(g, (0, 0), (2, 2)))
    w = weights(full, [1.0] + [0.7] * (n - 1))
    ok &= np.array_equal(lib, reach)
    notes.append(f"connected {int((lib != reach).sum())} diffs/{len(lib)}")
    exact_conn = float(w[reach].sum())
    good, r = mc_ok(Kind.ORIGIN_TO_BOUNDARY, W, H, 0.7, 0.7, oracles.exact_origin_to_boundary(W, H, 0.7, 0.7))
    ok &= good
    notes.append(f"origin MC {r.point:.4f}")
    ok &= abs(float(w[lib].sum()) - exact_conn) <= 1e-15

    # disjoint left-right crossings: every bond state with open sites
    nb = 12
    st = oracles.all_states(nb)
    states = np.concatenate([np.ones((st.shape[0], 9), bool), st], axis=1)
    diffs = 0
    for row in states:
        sites, h, v = oracles.unpack(W, H, row)
        brute = oracles.brute_disjoint(W, H, sites, h, v, "LR")
        diffs += count_disjoint_crossings(grid_from_states(W, H, row), "LR") != brute
    ok &= diffs == 0
    notes.append(f"disjoint {diffs} diffs/{len(states)}")
    exact_lr = oracles.exact_lr_crossing(W, H, 0.7, 0.7)
    good, r = mc_ok(Kind.LR_DISJOINT, W, H, 0.7, 0.7, exact_lr)
    ok &= good
    notes.append(f"LR exact {exact_lr:.6f} MC {r.point:.4f}")

    # D_R with rho=0.8, N=3: every boundary site must be in the cluster, so only the
    # centre site and the 12 bonds vary
    st = oracles.all_states(13)
    states = np.ones((st.shape[0], n), bool)
    states[:, 4] = st[:, 0]
    states[:, 9:] = st[:, 1:]
    lib = library_on_states(W, H, states, lambda g: event_DR(g, 0.8, 3))
    brute = np.array([oracles.brute_DR(W, H, *oracles.unpack(W, H, row), 0.8) for row in states])
    ok &= np.array_equal(lib, brute)
    notes.append(f"D_R {int((lib != brute).sum())} diffs/{len(lib)}")
    s = p = 0.9
    exact_dr = s ** 8 * float(weights(st, [s] + [p] * 12)[brute].sum())
    lib_dr = s ** 8 * float(weights(st, [s] + [p] * 12)[lib].sum())
    ok &= abs(exact_dr - lib_dr) <= 1e-15
    good, r = mc_ok(Kind.D_R, W, H, s, p, exact_dr, rho=0.8, N=3)
    ok &= good
    notes.append(f"D_R exact {exact_dr:.6f} MC {r.point:.4f}")

    # C_R on 5x3 with open sites: only the 4 middle-row H bonds and 6 inner V bonds matter
    W5, H3 = 5, 3
    n5 = oracles.n_elements(W5, H3)
    els = [("h", x, 1) for x in range(4)] + [("v", x, y) for x in (1, 2, 3) for y in (0, 1)]
    from ladderperc.perc_core import grid_elements
    index = {e: i for i, e in enumerate(grid_elements(W5, H3))}
    st = oracles.all_states(len(els))
    states = np.ones((st.shape[0], n5), bool)
    for j, e in enumerate(els):
        states[:, index[e]] = st[:, j]
    lib = library_on_states(W5, H3, states, event_CR)
    brute = np.array([oracles.brute_CR(W5, H3, *oracles.unpack(W5, H3, row)) for row in states])
    ok &= np.array_equal(lib, brute)
    wc = weights(st, [0.8] * len(els))
    exact_cr = float(wc[brute].sum())
    ok &= abs(exact_cr - float(wc[lib].sum())) <= 1e-15
    good, r = mc_ok(Kind.C_R, W5, H3, 1.0, 0.8, exact_cr)
    ok &= good
    notes.append(f"C_R exact {exact_cr:.6f} MC {r.point:.4f}")
    record(4, ok, "; ".join(notes), time.perf_counter() - t0, 300)


# --- 5 ---------------------------------------------------------------------


def test_criterion_5_sandwich():
    t0 = time.perf_counter()
    half = Fraction(1, 2)
    ps = [Fraction(75 + i, 100) for i in range(25)]
    worst = None
    ok = True
    ups = enumerate_upsets(3)
    for up in ups:
        rep = verify_sanduiche_exact(3, lambda s, up=up: s in up, half, half, ps)
        ok &= rep.holds and rep.p_tilde == Fraction(3, 4) and len(rep.margins) == 25
        m = min(rep.margins.values())
        worst = m if worst is None else min(worst, m)
    record(5, ok, f"{len(ups)} up-sets, smallest margin {float(worst):.3g}",
           time.perf_counter() - t0, 60)


# --- 6 and 11 ----------------------------------------------------------------

CRIT6 = ExperimentSpec("crossing", {"event": "ORIGIN_TO_BOUNDARY", "p": [0.4, 0.6], "s": 1.0,
                                    "width": 129}, replicates=10_000, seed=606)
_crit6 = {}


def crit6_records():
    if "records" not in _crit6:
        _crit6["records"] = run_experiment(CRIT6, workers=1)
    return _crit6["records"]


def test_criterion_6_phase_transition_surrogate():
    t0 = time.perf_counter()
    lo, hi = crit6_records()
    se = lambda r: math.sqrt(r.estimate * (1 - r.estimate) / r.replicates)  # noqa: E731
    ok_lo = lo.estimate + 3 * se(lo) <= 0.01
    ok_hi = hi.estimate - 3 * se(hi) >= 0.25
    dep = run_experiment(ExperimentSpec("renorm", {"delta": 0.01, "p_g": 0.9, "p_b": 0.5, "N": 8,
                                                   "width": 150}, replicates=300, seed=61))[0]
    ok_dep = dep.successes > 0 and dep.extra["replay_failures"] == 0
    detail = (f"p=0.4: {lo.estimate:.4f}, p=0.6: {hi.estimate:.4f}; renormalized "
              f"{dep.successes}/{dep.replicates} spaced samples, "
              f"{dep.extra['replay_failures']} replay failures")
    record(6, ok_lo and ok_hi and ok_dep, detail, time.perf_counter() - t0, 600)


# --- 7 ---------------------------------------------------------------------


def test_criterion_7_renormalized_geometry():
    t0 = time.perf_counter()
    cases = [(5, 2e-3, 1200, 334), (8, 2e-3, 1200, 333), (16, 5e-4, 2000, 333)]
    bad = total = 0
    for N, delta, width, count in cases:
        for seed in range(count):
            lat = build_lattice(spaced_environment(delta, width, N, 7000 + seed), N, 2)
            bad += bool(lattice_violations(lat))
            total += 1
    record(7, bad == 0, f"{bad} of {total} environments with violations", time.perf_counter() - t0, 120)


# --- 8 ---------------------------------------------------------------------


def test_criterion_8_recursion():
    t0 = time.perf_counter()
    par = RecursionParams(0.999, 0.999, 0.8, 5, 10**4)
    assert par.J == 20
    rep = induction_check(par, 30, C=8)
    sums = [estim_sum(par, 0.999, m) for m in range(4, 31)]
    ok = all(r.site_ok and r.bond_ok for r in rep.rows) and all(s.passed for s in sums)
    detail = (f"min site margin {min(r.site_margin for r in rep.rows):.3g}, "
              f"min bond margin {min(r.bond_margin for r in rep.rows):.3g}, "
              f"sum bound holds at {sum(s.passed for s in sums)}/27 m")
    record(8, ok, detail, time.perf_counter() - t0, 1)


# --- 9 ---------------------------------------------------------------------


def test_criterion_9_identities():
    t0 = time.perf_counter()
    df = max(abs(f(p) - f_closed_form(p)) for p in (0.5, 0.9, 0.99))
    ok = df < 1e-12
    ok &= delta_condition(3) == Fraction(1, 576)
    dp = abs(potts_map(1.0, 2) - math.tanh(1.0))
    dt = abs(peierls_tail(8, 1 - 1 / 16, 2) - 0.125)
    ok &= dp < 1e-12 and dt < 1e-12
    record(9, ok, f"|f diff| {df:.1e}, |tanh diff| {dp:.1e}, |tail diff| {dt:.1e}",
           time.perf_counter() - t0, 1)


# --- 10 --------------------------------------------------------------------


def test_criterion_10_words():
    t0 = time.perf_counter()
    ok = True
    worst = -math.inf
    for a in (0.2, 0.5, 0.8):
        for b in (0.2, 0.5, 0.8):
            p = WordParams(a, b, 2)
            r = estimate_h_proxy(p, 30, 10_000, seed=1000)
            bound = np.array([first_moment_bound(p, n) for n in range(31)])
            gap = r.mean_z - bound - 3 * r.se_z
            worst = max(worst, float(gap.max()))
            ok &= bool(np.all(gap <= 1e-12))
    s = Stream(77)
    w1, f1 = sample_fields(WordParams(0.3, 0.6), 30, s, 0, 10_000)
    w2, f2 = sample_fields(WordParams(0.7, 0.4), 30, s, 0, 10_000, antithetic=True)
    inv = (np.array_equal(w1, ~w2) and np.array_equal(f1, ~f2)
           and np.array_equal(z_counts(w1, f1), z_counts(w2, f2)))
    ok &= inv
    proxy = estimate_h_proxy(WordParams(0.5, 0.5), 30, 10_000, seed=1001).estimate.point
    ok &= proxy <= 0.2
    record(10, ok, f"max(mean Z - bound - 3SE) {worst:.3g}, involution {inv}, proxy {proxy:.4f}",
           time.perf_counter() - t0, 180)


# --- 11 --------------------------------------------------------------------


def test_criterion_11_determinism():
    one = records_to_csv(crit6_records())
    t0 = time.perf_counter()
    eight = records_to_csv(run_experiment(CRIT6, workers=8))
    record(11, one.encode() == eight.encode(), f"{len(one)} CSV bytes compared",
           time.perf_counter() - t0, 600)
