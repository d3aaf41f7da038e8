"""Command-line front end: ``banopt <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .heuristic import HeuristicConfig, Trace, ogap, run
from .instance import (GeneratorProfile, InstanceError, generate_instance, instance_to_dict,
                       load_instance, save_instance)
from .mip import SizeGuardError, enumerate_exact, root_relaxation, solve_mip
from .model import Solution, build_rob_band_ilp

CSV_HEADER = ["id", "gap_mip_pct", "gap_heu_pct", "delta_gap_pct", "time_mip_s", "time_heu_s", "status"]
DEFAULT_BENCH_LIMIT = 300.0
DEFAULT_BENCH_NODES = 500


class UsageError(Exception):
    pass


def load_profile(spec: str | None) -> GeneratorProfile:
    if spec is None:
        return GeneratorProfile.preset("mid")
    if Path(spec).is_file():
        return GeneratorProfile.from_file(spec)
    try:
        return GeneratorProfile.preset(spec)
    except ValueError:
        raise UsageError(f"--profile {spec!r} is neither a file nor a preset (default, mid, small)")


def worker_count() -> int:
    raw = os.environ.get("BANOPT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"BANOPT_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def heuristic_config(args, time_limit: float | None = None) -> HeuristicConfig:
    kw = {}
    for name, attr in [("epsilon", "epsilon"), ("rho", "rho"), ("alpha", "alpha"), ("window", "window"),
                       ("candidates", "candidates"), ("ants", "ants"), ("cycles", "cycles"),
                       ("rins_improve_limit", "rins_improve_limit"),
                       ("rins_repair_limit", "rins_repair_limit")]:
        v = getattr(args, attr, None)
        if v is not None:
            kw[name] = v
    if time_limit is not None:
        kw["global_time_limit"] = time_limit
    kw["seed"] = args.seed if args.seed is not None else 0
    kw["literal_shortest_path"] = bool(getattr(args, "literal_shortest_path", False))
    try:
        return HeuristicConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc))


def solution_record(sol: Solution | None, **extra) -> dict:
    rec = dict(extra)
    if sol is None:
        rec.update(feasible=False, energy=None)
        return rec
    rec.update(feasible=bool(sol.feasible), energy=float(sol.energy_value),
               relays=[int(r) for r in np.flatnonzero(sol.y > 0.5)],
               flows=[[int(a) for a in np.flatnonzero(row > 0.5)] for row in sol.x],
               violations=list(sol.violations))
    return rec


def write_json(path: str | None, data: dict) -> None:
    text = json.dumps(data, indent=1, sort_keys=True)
    if path is None:
        print(text)
        return
    try:
        Path(path).write_text(text + "\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc


class TraceFile:
    def __init__(self, path: str | None):
        self.path = path
        self.fh = None
        if path is not None:
            try:
                self.fh = open(path, "w")
            except OSError as exc:
                raise OSError(f"{path}: {exc.strerror}") from exc

    def write(self, rec: dict) -> None:
        if self.fh is not None:
            self.fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def close(self) -> None:
        if self.fh is not None:
            self.fh.close()


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    prof = load_profile(args.profile)
    seed = args.seed if args.seed is not None else 0
    inst = generate_instance(seed, prof)
    if args.out:
        save_instance(inst, args.out)
    else:
        print(json.dumps(instance_to_dict(inst), indent=1, sort_keys=True))
    return 0


def cmd_solve_heur(args) -> int:
    inst = load_instance(args.instance)
    cfg = heuristic_config(args, args.time_limit)
    tf = TraceFile(args.trace)
    try:
        trace = Trace(logical=cfg.deterministic, sink=tf.write)
        best, report = run(inst, cfg, trace=trace)
    finally:
        tf.close()
    write_json(args.out, solution_record(best, status=report.status, lower_bound=report.lower_bound,
                                         gap=report.gap, cycles=report.cycles))
    return 0


def cmd_solve_mip(args) -> int:
    inst = load_instance(args.instance)
    model = build_rob_band_ilp(inst)
    limit = args.time_limit if args.time_limit is not None else math.inf
    res = solve_mip(model, time_limit=limit, node_limit=args.node_limit)
    write_json(args.out, solution_record(res.incumbent, status=res.status.value, bound=res.bound,
                                         nodes=res.nodes))
    return 0


def cmd_solve_oracle(args) -> int:
    inst = load_instance(args.instance)
    sol = enumerate_exact(inst)
    write_json(args.out, solution_record(sol, status="optimal" if sol else "infeasible"))
    return 0


@dataclass
class BenchJob:
    ident: str
    source: str            # instance path, or "seed:<n>"
    profile: GeneratorProfile | None
    time_limit: float
    config: HeuristicConfig
    mip_nodes: int | None


def _fmt(v: float | None) -> str:
    return "" if v is None else format(v, ".10g")


def bench_one(job: BenchJob) -> tuple[list[str], list[dict]]:
    """One CSV row plus the instance's trace records."""
    events: list[dict] = []
    det = job.config.deterministic
    try:
        if job.source.startswith("seed:"):
            inst = generate_instance(int(job.source[5:]), job.profile)
        else:
            inst = load_instance(job.source)
        model = build_rob_band_ilp(inst)
        root = root_relaxation(model, None, job.config.cut_rounds)
        L = root.bound
        T = job.time_limit

        t0 = time.monotonic()
        mip = solve_mip(model, time_limit=math.inf if det else T, root=root,
                        node_limit=job.mip_nodes if det else None)
        t_mip = time.monotonic() - t0

        trace = Trace(logical=det, sink=lambda r: events.append(dict(r, id=job.ident)))
        t0 = time.monotonic()
        best, report = run(inst, job.config, model=model, root=root, trace=trace)
        t_heu = time.monotonic() - t0

        g_mip = max(ogap(mip.objective, L), 0.0) * 100
        g_heu = max(ogap(report.best_value, L), 0.0) * 100
        if g_mip > 0:
            delta = (g_mip - g_heu) / g_mip * 100
        elif g_heu == 0:
            delta = 0.0
        else:
            delta = None
        status = f"mip={mip.status.value};heu={report.status}"
        row = [job.ident, _fmt(g_mip), _fmt(g_heu), _fmt(delta),
               "" if det else f"{t_mip:.3f}", "" if det else f"{t_heu:.3f}", status]
    except (InstanceError, OSError, ValueError, RuntimeError) as exc:
        row = [job.ident, "", "", "", "", "", f"error: {exc}".replace("\n", " ")]
    return row, events


def cmd_bench(args) -> int:
    sources: list[tuple[str, str]] = []
    for path in args.instances:
        sources.append((Path(path).stem, path))
    if args.seeds is not None:
        for s in parse_seeds(args.seeds):
            sources.append((f"seed{s}", f"seed:{s}"))
    if not sources:
        raise UsageError("bench needs at least one instance (paths or --seeds)")
    profile = load_profile(args.profile)
    T = args.time_limit if args.time_limit is not None else DEFAULT_BENCH_LIMIT
    jobs = []
    for ident, src in sources:
        cfg = heuristic_config(args, 0.75 * T)
        if args.rins_improve_limit is None:
            cfg.rins_improve_limit = 0.25 * T
        if args.rins_repair_limit is None:
            cfg.rins_repair_limit = T / 40
        jobs.append(BenchJob(ident, src, profile, T, cfg, args.mip_nodes))

    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(bench_one, jobs))
    else:
        results = [bench_one(j) for j in jobs]
    order = sorted(range(len(jobs)), key=lambda i: jobs[i].ident)

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in order:
            w.writerow(results[i][0])
    finally:
        if args.out:
            out.close()
    if args.trace:
        tf = TraceFile(args.trace)
        try:
            for i in order:
                for rec in results[i][1]:
                    tf.write(rec)
        finally:
            tf.close()
    return 0


def parse_seeds(text: str) -> list[int]:
    """``"0-9"`` or ``"1,4,7"`` or a mix."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


# ---------------------------------------------------------------------------
# argument parsing


def _heuristic_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--window", type=int, help="moving-average window F")
    p.add_argument("--candidates", type=int, help="candidate paths per commodity L")
    p.add_argument("--ants", type=int, help="ants per cycle m")
    p.add_argument("--cycles", type=int, help="run exactly N cycles, ignoring wall clocks")
    p.add_argument("--rins-improve-limit", type=float, dest="rins_improve_limit")
    p.add_argument("--rins-repair-limit", type=float, dest="rins_repair_limit")
    p.add_argument("--literal-shortest-path", action="store_true", dest="literal_shortest_path",
                   help="rank candidate paths by plain sum of LP flow")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banopt", description="Robust body area network design.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw an instance from a generator profile")
    g.add_argument("--seed", type=int)
    g.add_argument("--profile", help="profile JSON file or preset name (default: mid)")
    g.add_argument("--out", help="instance JSON path (stdout if omitted)")
    g.set_defaults(func=cmd_generate)

    h = sub.add_parser("solve-heur", help="run the ant-colony heuristic")
    h.add_argument("instance")
    h.add_argument("--seed", type=int)
    h.add_argument("--time-limit", type=float, dest="time_limit", help="global time limit in seconds")
    _heuristic_flags(h)
    h.add_argument("--out")
    h.add_argument("--trace")
    h.set_defaults(func=cmd_solve_heur)

    m = sub.add_parser("solve-mip", help="pure branch and bound")
    m.add_argument("instance")
    m.add_argument("--time-limit", type=float, dest="time_limit")
    m.add_argument("--node-limit", type=int, dest="node_limit")
    m.add_argument("--out")
    m.set_defaults(func=cmd_solve_mip)

    o = sub.add_parser("solve-oracle", help="exhaustive search (tiny instances only)")
    o.add_argument("instance")
    o.add_argument("--out")
    o.set_defaults(func=cmd_solve_oracle)

    b = sub.add_parser("bench", help="branch and bound versus heuristic gap table")
    b.add_argument("instances", nargs="*", help="instance JSON files")
    b.add_argument("--seeds", help="generate instances for these seeds, e.g. 0-9")
    b.add_argument("--profile", help="profile JSON file or preset name for --seeds (default: mid)")
    b.add_argument("--seed", type=int, help="heuristic RNG seed")
    b.add_argument("--time-limit", type=float, dest="time_limit",
                   help=f"per-method budget T in seconds (default {DEFAULT_BENCH_LIMIT:g})")
    b.add_argument("--mip-nodes", type=int, default=DEFAULT_BENCH_NODES, dest="mip_nodes",
                   help="node limit for branch and bound in --cycles mode")
    _heuristic_flags(b)
    b.add_argument("--out", help="CSV path (stdout if omitted)")
    b.add_argument("--trace", help="NDJSON event log")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (InstanceError, SizeGuardError, OSError) as exc:
        print(f"banopt: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
