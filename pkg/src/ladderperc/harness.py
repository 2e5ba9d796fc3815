"""Experiment orchestration and the ``ladderperc`` command line.

An experiment is a kind plus a flat parameter table.  At most one parameter
may be a list; each of its values yields one :class:`OutputRecord`.
Replicates are split into contiguous ranges and farmed out to worker
processes.  Every replicate draws from ``Stream(seed).for_replicate(r)`` and
workers return integer counts only, so the merged result is identical for
any number of workers.

Precedence for CLI parameters: built-in defaults, then the ``--config`` JSON
file, then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .analytics import RecursionParams, induction_check, recursion_pjm
from .env import ModelParams, ParameterError, sample_configuration, sample_environment
from .grouping import blocks_csv_rows, chi_and_spaced, run_grouping
from .perc_core import CrossingSpec, Kind, bernoulli_grid, wilson_interval
from .renorm import (build_lattice, evaluate_openness, is_spaced,
                     origin_percolates_renormalized, replay_skeleton_path)
from .rng import Stream
from .words import WordParams, summarize_counts, word_counts


class SpecError(ValueError):
    """An experiment description that cannot be run."""


# ---------------------------------------------------------------------------
# per-kind replicate functions; each returns integer counts for r0..r1-1


def _env_counts(p: dict, seed: int, r0: int, r1: int) -> dict:
    base = Stream(seed)
    hits = bad = 0
    for r in range(r0, r1):
        env = sample_environment(p["delta"], p["width"], p["width"], base.for_replicate(r))
        res = [run_grouping(env.bad_positions(o), M=p["M"], L=p["L"], window=p["width"])
               for o in ("H", "V")]
        hits += all(chi_and_spaced(g)[1] for g in res)
        bad += int(env.xi_h.sum() + env.xi_v.sum())
    return {"successes": hits, "bad": bad}


def _env_extra(p: dict, c: dict, n: int) -> dict:
    return {"bad_fraction": c["bad"] / (2 * n * p["width"])}


def _grouping_counts(p: dict, seed: int, r0: int, r1: int) -> dict:
    base = Stream(seed)
    hits = blocks = kmax = 0
    for r in range(r0, r1):
        env = sample_environment(p["delta"], p["width"], 2, base.for_replicate(r))
        res = run_grouping(env.bad_positions("H"), M=p["M"], L=p["L"], window=p["width"])
        hits += res.chi == 0
        blocks += len(res.partitions[-1].blocks) if res.partitions else 0
        kmax = max(kmax, res.K)
    return {"successes": hits, "blocks": blocks, "max_K": kmax}


def _grouping_extra(p: dict, c: dict, n: int) -> dict:
    return {"mean_blocks": c["blocks"] / n, "max_K": c["max_K"]}


def _crossing_spec(p: dict) -> CrossingSpec:
    return CrossingSpec(Kind(p["event"]), rho=p["rho"], N=p.get("N"),
                        path_count_threshold=p["threshold"])


def _crossing_counts(p: dict, seed: int, r0: int, r1: int) -> dict:
    spec = _crossing_spec(p)
    base = Stream(seed)
    W, H = p["width"], p.get("height") or p["width"]
    hits = 0
    for r in range(r0, r1):
        hits += bool(spec.indicator(bernoulli_grid(base.for_replicate(r), W, H, p["s"], p["p"])))
    return {"successes": hits}


def _renorm_sample(p: dict, stream: Stream):
    """Environment, lattice and evaluated chain of one replicate, or ``None`` if not spaced."""
    env = sample_environment(p["delta"], p["width"], p["width"], stream)
    if not is_spaced(env, p["N"]):
        return None
    lat = build_lattice(env, p["N"], p["K"])
    params = ModelParams(p["p_g"], p["p_b"], p["delta"], strict=False)
    config = sample_configuration(env, params, (p["width"] - 1, p["width"] - 1), stream)
    return env, lat, evaluate_openness(lat, config, p["rho"])


def _renorm_counts(p: dict, seed: int, r0: int, r1: int) -> dict:
    base = Stream(seed)
    hits = accepted = replay_fail = 0
    for r in range(r0, r1):
        out = _renorm_sample(p, base.for_replicate(r))
        if out is None:
            continue
        accepted += 1
        ev = out[2]
        if origin_percolates_renormalized(ev):
            hits += 1
            replay_fail += not replay_skeleton_path(ev)
    return {"successes": hits, "accepted": accepted, "replay_failures": replay_fail}


def _renorm_extra(p: dict, c: dict, n: int) -> dict:
    return {"accepted": c["accepted"], "rejected": n - c["accepted"],
            "replay_failures": c["replay_failures"]}


def _words_counts(p: dict, seed: int, r0: int, r1: int) -> dict:
    wp = WordParams(p["alpha"], p["beta"], p["d"])
    z_sum, z_sq, alive = word_counts(wp, p["depth"], seed, r0, r1)
    return {"successes": int(alive[-1]), "z_sum": z_sum.tolist(), "z_sq": z_sq.tolist(),
            "alive": alive.tolist()}


def _words_extra(p: dict, c: dict, n: int) -> dict:
    h = summarize_counts(p["depth"], n, 0, np.array(c["z_sum"]), np.array(c["z_sq"]),
                         np.array(c["alive"]))
    return {"mean_z": float(h.mean_z[-1]), "se_z": float(h.se_z[-1])}


@dataclass(frozen=True)
class KindInfo:
    required: tuple[str, ...]
    defaults: dict
    counts: Callable | None
    extra: Callable | None
    # which counts determine the denominator of the estimate
    denominator: str | None = None


KINDS: dict[str, KindInfo] = {
    "env-sweep": KindInfo(("delta", "width"), {"M": 3, "L": 3}, _env_counts, _env_extra),
    "grouping": KindInfo(("delta", "width"), {"M": 3, "L": 3}, _grouping_counts, _grouping_extra),
    "crossing": KindInfo(("event", "p", "width"),
                         {"s": 1.0, "rho": 0.8, "N": None, "height": None, "threshold": 1},
                         _crossing_counts, None),
    "renorm": KindInfo(("delta", "p_g", "p_b", "N", "width"), {"K": 1, "rho": 0.8},
                       _renorm_counts, _renorm_extra, denominator="accepted"),
    "recursion": KindInfo(("p_g", "p_b", "rho", "kappa", "N", "m"), {"C": 8.0}, None, None),
    "words": KindInfo(("alpha", "beta", "depth"), {"d": 2}, _words_counts, _words_extra),
}


# ---------------------------------------------------------------------------
# specs and records


@dataclass
class ExperimentSpec:
    kind: str
    parameters: dict
    replicates: int = 1
    seed: int = 0
    output: str | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise SpecError(f"unknown kind {self.kind!r}; expected one of {sorted(KINDS)}")
        missing = [k for k in KINDS[self.kind].required if k not in self.parameters]
        if missing:
            raise SpecError(f"missing keys for {self.kind}: {', '.join(missing)}")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise SpecError(f"replicates must be a positive integer, got {self.replicates!r}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise SpecError("seed must fit in 64 bits")
        swept = [k for k, v in self.parameters.items() if isinstance(v, list)]
        if len(swept) > 1:
            raise SpecError(f"at most one swept parameter, got {swept}")
        if swept and not self.parameters[swept[0]]:
            raise SpecError(f"swept parameter {swept[0]!r} is empty")

    @property
    def swept(self) -> str | None:
        for k, v in self.parameters.items():
            if isinstance(v, list):
                return k
        return None

    def points(self) -> list[dict]:
        """Full parameter tables, one per sweep value, with defaults filled in."""
        base = dict(KINDS[self.kind].defaults)
        base.update(self.parameters)
        key = self.swept
        if key is None:
            return [base]
        return [{**base, key: v} for v in self.parameters[key]]

    def spec_hash(self) -> str:
        """Hash of every field that affects results (not the output path)."""
        blob = json.dumps({"kind": self.kind, "parameters": self.parameters,
                           "replicates": self.replicates, "seed": int(self.seed)},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if "kind" not in d:
            raise SpecError("missing keys: kind")
        return cls(d["kind"], dict(d.get("parameters", {})), d.get("replicates", 1),
                   d.get("seed", 0), d.get("output"))


@dataclass
class OutputRecord:
    spec_hash: str
    kind: str
    parameters: dict
    estimate: float
    successes: int
    replicates: int
    ci_low: float
    ci_high: float
    extra: dict
    seed: int
    code_version: str
    wall_time: float = field(default=0.0, compare=False)


CSV_COLUMNS = ("spec_hash", "kind", "parameters", "estimate", "successes", "replicates",
               "ci_low", "ci_high", "extra", "seed", "code_version")


def _merge(a: dict, b: dict) -> dict:
    out = {}
    for k in a:
        x, y = a[k], b[k]
        if isinstance(x, list):
            out[k] = [int(i) + int(j) for i, j in zip(x, y)]
        elif k.startswith("max_"):
            out[k] = max(int(x), int(y))
        else:
            out[k] = int(x) + int(y)
    return out


def _chunks(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(n, parts))
    edges = [n * i // parts for i in range(parts + 1)]
    return [(edges[i], edges[i + 1]) for i in range(parts)]


def _run_chunk(args):
    kind, point, seed, r0, r1 = args
    return KINDS[kind].counts(point, seed, r0, r1)


def _recursion_records(spec: ExperimentSpec, point: dict, h: str) -> list[OutputRecord]:
    rp = RecursionParams(point["p_g"], point["p_b"], point["rho"], point["kappa"], point["N"],
                         strict=False)
    m = int(point["m"])
    rec = recursion_pjm(rp, m)
    rows = {r.m: r for r in induction_check(rp, m, C=point["C"]).rows} if m >= 2 else {}
    out = []
    for j, v in enumerate(rec.values):
        extra = {"m": m, "j": j, "J": rp.J}
        if j == m and m in rows:
            row = rows[m]
            extra.update({"site_ok": row.site_ok, "bond_ok": row.bond_ok})
        out.append(OutputRecord(h, spec.kind, {**point, "j": j}, float(v), 0, 1, float(v),
                                float(v), extra, int(spec.seed), __version__))
    return out


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[OutputRecord]:
    """Run ``spec`` and write its CSV when ``spec.output`` is set."""
    spec.validate()
    info = KINDS[spec.kind]
    h = spec.spec_hash()
    records = []
    pool = ProcessPoolExecutor(workers) if workers > 1 and info.counts is not None else None
    try:
        for point in spec.points():
            t0 = time.perf_counter()
            if info.counts is None:
                recs = _recursion_records(spec, point, h)
            else:
                jobs = [(spec.kind, point, int(spec.seed), a, b)
                        for a, b in _chunks(spec.replicates, 4 * workers)]
                parts = list(pool.map(_run_chunk, jobs)) if pool else [_run_chunk(j) for j in jobs]
                counts = parts[0]
                for c in parts[1:]:
                    counts = _merge(counts, c)
                n = counts[info.denominator] if info.denominator else spec.replicates
                k = counts["successes"]
                lo, hi = wilson_interval(k, n)
                est = k / n if n else float("nan")
                extra = info.extra(point, counts, spec.replicates) if info.extra else {}
                recs = [OutputRecord(h, spec.kind, point, est, k, n, lo, hi, extra,
                                     int(spec.seed), __version__)]
            dt = time.perf_counter() - t0
            for r in recs:
                r.wall_time = dt
            records.extend(recs)
    finally:
        if pool:
            pool.shutdown()
    if spec.output:
        emit_summary(records, "csv", spec.output)
    return records


# ---------------------------------------------------------------------------
# emitters


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def records_to_csv(records: list[OutputRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        row = []
        for c in CSV_COLUMNS:
            v = getattr(r, c)
            row.append(json.dumps(v, sort_keys=True) if isinstance(v, dict) else _fmt(v))
        w.writerow(row)
    return buf.getvalue()


def parse_csv(text: str) -> list[OutputRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [OutputRecord(r["spec_hash"], r["kind"], json.loads(r["parameters"]),
                         float(r["estimate"]), int(r["successes"]), int(r["replicates"]),
                         float(r["ci_low"]), float(r["ci_high"]), json.loads(r["extra"]),
                         int(r["seed"]), r["code_version"]) for r in rows]


def _x_values(records: list[OutputRecord]) -> tuple[str, list[float]]:
    keys = [k for k in records[0].parameters
            if len({json.dumps(r.parameters.get(k)) for r in records}) > 1]
    if not keys:
        return "index", [float(i) for i in range(len(records))]
    k = keys[0]
    return k, [float(r.parameters[k]) for r in records]


def records_to_svg(records: list[OutputRecord], width: int = 480, height: int = 320) -> str:
    """Static line plot of the estimate against the swept parameter, with a CI band."""
    xname, xs = _x_values(records)
    order = sorted(range(len(records)), key=lambda i: xs[i])
    xs = [xs[i] for i in order]
    ys = [records[i].estimate for i in order]
    lo = [records[i].ci_low for i in order]
    hi = [records[i].ci_high for i in order]
    m = 40
    x0, x1 = min(xs), max(xs)
    span = (x1 - x0) or 1.0
    finite = [v for v in lo + hi + ys if math.isfinite(v)] or [0.0, 1.0]
    y0, y1 = min(0.0, min(finite)), max(1.0, max(finite))

    def px(x):
        return m + (x - x0) / span * (width - 2 * m)

    def py(y):
        return height - m - (y - y0) / ((y1 - y0) or 1.0) * (height - 2 * m)

    band = [f"{px(x):.2f},{py(v):.2f}" for x, v in zip(xs, hi)]
    band += [f"{px(x):.2f},{py(v):.2f}" for x, v in reversed(list(zip(xs, lo)))]
    line = " ".join(f"{px(x):.2f},{py(v):.2f}" for x, v in zip(xs, ys))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
           f'<polygon class="ci" points="{" ".join(band)}" fill="#9ecae1" opacity="0.5"/>',
           f'<polyline class="estimate" points="{line}" fill="none" stroke="#08519c"/>']
    for x, v in zip(xs, ys):
        out.append(f'<circle class="point" cx="{px(x):.2f}" cy="{py(v):.2f}" r="3" '
                   f'fill="#08519c"><title>{xname}={x!r} estimate={v!r}</title></circle>')
    out.append(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" '
               f'font-size="12">{xname}</text>')
    out.append(f'<text x="12" y="{height / 2:.0f}" font-size="12" '
               f'transform="rotate(-90 12 {height / 2:.0f})">estimate</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_summary(records: list[OutputRecord], fmt: str, path: str | Path) -> Path:
    if not records:
        raise SpecError("no records to emit")
    if fmt == "csv":
        text = records_to_csv(records)
    elif fmt == "svg":
        text = records_to_svg(records)
    else:
        raise SpecError(f"unknown format {fmt!r}")
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# command line


def _value(text: str):
    """Parse a flag value; a comma-separated value becomes a sweep list."""
    if "," in text:
        return [_value(t) for t in text.split(",") if t]
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


# (flag, parameter key) pairs per subcommand
_FLAGS = {
    "env": [("delta", "delta"), ("width", "width"), ("M", "M"), ("L", "L")],
    "group": [("delta", "delta"), ("width", "width"), ("M", "M"), ("L", "L")],
    "perc": [("event", "event"), ("p", "p"), ("s", "s"), ("width", "width"),
             ("height", "height"), ("rho", "rho"), ("N", "N"), ("threshold", "threshold")],
    "renorm": [("delta", "delta"), ("pg", "p_g"), ("pb", "p_b"), ("N", "N"),
               ("width", "width"), ("K", "K"), ("rho", "rho")],
    "recursion": [("pg", "p_g"), ("pb", "p_b"), ("rho", "rho"), ("kappa", "kappa"),
                  ("N", "N"), ("m", "m"), ("C", "C")],
    "sweep": [("alpha", "alpha"), ("beta-grid", "beta"), ("d", "d"), ("depth", "depth")],
}
_KIND_OF = {"env": "env-sweep", "group": "grouping", "perc": "crossing", "renorm": "renorm",
            "recursion": "recursion", "sweep": "words"}


def _common(p: argparse.ArgumentParser, name: str) -> None:
    p.add_argument("--config", help="JSON file with parameters (and optionally seed, replicates)")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--svg", help="also write an SVG plot here")
    p.add_argument("--workers", type=int, default=1)
    for flag, key in _FLAGS[name]:
        p.add_argument(f"--{flag}", dest=f"param_{key}", type=_value, default=None)
    p.set_defaults(command=name)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ladderperc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    _common(sub.add_parser("env", help="frequency of spaced environments"), "env")
    g = sub.add_parser("group", help="grouping statistics or a block dump")
    _common(g, "group")
    g.add_argument("--positions", help="bad positions file (one integer per line); dumps blocks")
    p = sub.add_parser("perc", help="crossing-event estimates on Bernoulli grids")
    _common(p, "perc")
    p.add_argument("--dump-grid", help="write replicate 0's grid in text form here")
    r = sub.add_parser("renorm", help="renormalized percolation surrogate")
    _common(r, "renorm")
    r.add_argument("--dump-lattice", help="write replicate 0's lattice CSV here")
    r.add_argument("--dump-skeleton", help="write replicate 0's skeleton elements here")
    _common(sub.add_parser("recursion", help="p_{j,m} recursion table"), "recursion")
    w = sub.add_parser("words", help="percolation of words")
    wsub = w.add_subparsers(dest="words_cmd", required=True)
    _common(wsub.add_parser("sweep", help="proxy and mean Z along a beta grid"), "sweep")
    return ap


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    """Defaults, then the config file, then flags."""
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    params = dict(cfg.get("parameters", {}))
    for k, v in vars(args).items():
        if k.startswith("param_") and v is not None:
            params[k[len("param_"):]] = v
    reps = args.reps if args.reps is not None else cfg.get("replicates", 1)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    return ExperimentSpec(_KIND_OF[args.command], params, reps, seed, args.out)


def _write_rows(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _dump_blocks(args) -> int:
    text = Path(args.positions).read_text().split()
    gamma = sorted({int(t) for t in text})
    M = args.param_M if args.param_M is not None else 3
    L = args.param_L if args.param_L is not None else M
    res = run_grouping(gamma, M=M, L=L)
    header = ("step", "min", "max", "mass", "level", "parent_id")
    if args.out:
        _write_rows(args.out, header, blocks_csv_rows(res))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(blocks_csv_rows(res))
    return 0


def _dumps(args, spec: ExperimentSpec) -> None:
    point = spec.points()[0]
    stream = Stream(int(spec.seed)).for_replicate(0)
    if getattr(args, "dump_grid", None):
        W, H = point["width"], point.get("height") or point["width"]
        Path(args.dump_grid).write_text(bernoulli_grid(stream, W, H, point["s"], point["p"]).to_text())
    if getattr(args, "dump_lattice", None) or getattr(args, "dump_skeleton", None):
        out = _renorm_sample(point, stream)
        if out is None:
            raise ParameterError("replicate 0's environment is not spaced; nothing to dump")
        _, lat, ev = out
        if args.dump_lattice:
            rows = []
            for L in lat.chain():
                rows.extend(L.to_csv_rows(ev.state(L.step)))
            _write_rows(args.dump_lattice, ("step", "kind", "i", "j", "x0", "x1", "y0", "y1",
                                            "open", "good"), rows)
        if args.dump_skeleton:
            rows = []
            for k, st in sorted(ev.states.items()):
                for name, skels in (("site", st.site_skel), ("bond_H", st.bond_h_skel),
                                    ("bond_V", st.bond_v_skel)):
                    for (i, j), sk in sorted(skels.items()):
                        for x, y in zip(*np.nonzero(sk.sites)):
                            rows.append((k, name, i, j, "site", sk.x0 + x, sk.y0 + y))
                        for x, y in zip(*np.nonzero(sk.h)):
                            rows.append((k, name, i, j, "bond_H", sk.x0 + x, sk.y0 + y))
                        for x, y in zip(*np.nonzero(sk.v)):
                            rows.append((k, name, i, j, "bond_V", sk.x0 + x, sk.y0 + y))
            _write_rows(args.dump_skeleton, ("step", "owner", "i", "j", "element", "x", "y"), rows)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        if args.command == "group" and args.positions:
            return _dump_blocks(args)
        spec = spec_from_args(args)
        spec.validate()
        points = spec.points()
        for pt in points:
            if spec.kind in ("crossing", "renorm", "recursion", "words"):
                _probe(spec.kind, pt)
    except (SpecError, ParameterError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        records = run_experiment(spec, args.workers)
        if not args.out:
            sys.stdout.write(records_to_csv(records))
        if args.svg:
            emit_summary(records, "svg", args.svg)
        _dumps(args, spec)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


def _probe(kind: str, point: dict) -> None:
    """Construct the parameter objects up front so bad values exit with code 2."""
    if kind == "crossing":
        _crossing_spec(point)
        for k in ("p", "s"):
            if not (0.0 <= float(point[k]) <= 1.0):
                raise ParameterError(f"{k}={point[k]} is not a probability")
    elif kind == "renorm":
        ModelParams(point["p_g"], point["p_b"], point["delta"], strict=False)
        if not (0.75 < point["rho"] < 1.0):
            raise ParameterError(f"rho={point['rho']} outside (3/4, 1)")
    elif kind == "recursion":
        RecursionParams(point["p_g"], point["p_b"], point["rho"], point["kappa"], point["N"],
                        strict=False)
    elif kind == "words":
        WordParams(point["alpha"], point["beta"], point["d"])


if __name__ == "__main__":
    sys.exit(main())
