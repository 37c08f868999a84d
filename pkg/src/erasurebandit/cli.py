"""Command line entry point: ``erasurebandit {run,schedule,bounds,verify}``."""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as B
from .harness import (default_threads, load_config, run_experiment, write_csv,
                      write_diagnostics)
from .scheduler import (check_schedule, ilp_optimum, lemma1_bound, lp_end_time, schedule,
                        schedule_horizontal, schedule_round_robin, schedule_vertical)

LAYOUTS = ("batchsp2", "vertical", "horizontal", "round-robin")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output or "results")
    res = run_experiment(cfg, args.threads)
    raw, agg = write_csv(res, out / "regret.csv")
    diag = write_diagnostics(res, out / "diagnostics.json")
    print(f"{'policy':<10} {'final mean regret':>18} {'stderr':>10}")
    for p in res.policies:
        print(f"{p:<10} {res.mean[p][-1]:>18.1f} {res.stderr[p][-1]:>10.1f}")
    print(f"wrote {raw}, {agg}, {diag}")
    return 0


def _build_layout(kind, arms, alphas, batch, seed):
    active = list(range(arms))
    if kind == "batchsp2":
        return schedule(active, alphas, batch, np.random.default_rng(seed))
    if kind == "vertical":
        return schedule_vertical(active, alphas, batch)
    if kind == "horizontal":
        return schedule_horizontal(active, alphas, batch)
    return schedule_round_robin(active, len(alphas), batch)


def cmd_schedule(args) -> int:
    alphas = sorted(args.alphas)
    sched = _build_layout(args.kind, args.arms, alphas, args.batch, args.seed)
    grid, side = io.StringIO(), io.StringIO()
    w = csv.writer(grid, lineterminator="\n")
    w.writerow(["agent", "alpha"] + [f"t{t}" for t in range(sched.end_time)])
    for m in range(sched.num_agents):
        w.writerow([m, alphas[m]] + sched.matrix[m].tolist())
    w = csv.writer(side, lineterminator="\n")
    w.writerow(["arm", "agent", "start", "stop"])
    for (arm, m), wins in sorted(sched.effective_windows.items()):
        for b, e in wins:
            w.writerow([arm, m, b, e])
    if args.out:
        out = Path(args.out)
        out.write_text(grid.getvalue(), encoding="utf-8")
        sidecar = out.with_name(out.stem + ".windows.csv")
        sidecar.write_text(side.getvalue(), encoding="utf-8")
        print(f"end time {sched.end_time}; wrote {out} and {sidecar}")
    else:
        sys.stdout.write(grid.getvalue() + "\n" + side.getvalue())
    return 0


def cmd_bounds(args) -> int:
    cfg = load_config(args.config)
    K, M, T, a = cfg.instance.num_arms, cfg.num_agents, cfg.horizon, cfg.alphas
    print(f"K={K} M={M} T={T} alphas={a}")
    print(f"{'batch':>5} {'4^i':>8} {'LP end':>12} {'Lemma-1 bound':>14}")
    i = 1
    while 4 ** i <= M * T:
        print(f"{i:>5} {4 ** i:>8} {lp_end_time(a, K, i):>12.1f} {lemma1_bound(a, K, i):>14.1f}")
        i += 1
    gaps = cfg.instance.gaps
    print(f"Theorem-1 bound (c={cfg.c}): {B.theorem1_bound(gaps, a, K, M, T, cfg.c):.6g}")
    d = B.delta_star(a, K, M, T, cfg.c_prime)
    print(f"Delta* (c'={cfg.c_prime}): {d:.6g}")
    print(f"Theorem-2 bound: {B.theorem2_bound(a, K, M, T, cfg.c, cfg.c_prime):.6g}")
    print("(all bounds up to unspecified constants)")
    return 0


def verify(instances: int = 10_000, seed: int = 0, strict_lp_equality: bool = False) -> list[str]:
    """Oracle sandwich on the small exhaustive grid plus random structural checks."""
    problems: list[str] = []
    eq_misses = 0
    for M in (1, 2, 3):
        for K in (1, 2, 3, 4):
            for alphas in itertools.combinations_with_replacement((0, 1, 2, 4), M):
                alphas = list(alphas)
                lp, ilp = lp_end_time(alphas, K, 1), ilp_optimum(alphas, K, 1)
                end = schedule(list(range(K)), alphas, 1, np.random.default_rng(seed)).end_time
                tag = f"M={M} K={K} alphas={alphas}"
                if not lp <= ilp + 1e-12:
                    problems.append(f"{tag}: LP {lp} > ILP {ilp}")
                if not ilp <= end:
                    problems.append(f"{tag}: ILP {ilp} > schedule end {end}")
                if not end <= lemma1_bound(alphas, K, 1):
                    problems.append(f"{tag}: schedule end {end} above the Lemma-1 bound")
                if not any(alphas) and not math.isclose(lp, ilp):
                    eq_misses += 1
                    if strict_lp_equality:
                        problems.append(f"{tag}: LP {lp} != ILP {ilp} with zero repetitions")
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        M, K, i = int(rng.integers(1, 17)), int(rng.integers(1, 33)), int(rng.integers(1, 4))
        alphas = sorted(rng.integers(0, int(rng.choice([3, 30, 300])), M).tolist())
        active = sorted(rng.choice(64, K, replace=False).tolist())
        sched = schedule(active, alphas, i, rng)
        for v in check_schedule(sched, active, alphas, i):
            problems.append(f"M={M} K={K} i={i} alphas={alphas}: {v}")
    if eq_misses and not strict_lp_equality:
        print(f"note: LP optimum differs from the ILP optimum on {eq_misses} zero-repetition "
              f"instances (integrality gap when M does not divide 4K)")
    return problems


def cmd_verify(args) -> int:
    problems = verify(args.instances, args.seed, args.strict_lp_equality)
    for p in problems[:50]:
        print("VIOLATION", p)
    print(f"{len(problems)} violation(s)")
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="erasurebandit",
                                 description="Multi-agent bandits over action-erasure channels.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run an experiment config and write CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: config 'output' or ./results)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $ERASUREBANDIT_THREADS or 1)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("schedule", help="dump one batch schedule as CSV")
    p.add_argument("--alphas", type=int, nargs="+", required=True)
    p.add_argument("--arms", type=int, required=True)
    p.add_argument("--batch", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=LAYOUTS, default="batchsp2")
    p.add_argument("--out", help="CSV path; effective windows go to <stem>.windows.csv")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("bounds", help="print LP / Lemma-1 / Theorem-1 / Theorem-2 values")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="scheduler oracle sandwich and invariant sweep")
    p.add_argument("--instances", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict-lp-equality", action="store_true",
                   help="also fail when LP != ILP on zero-repetition instances")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is None and args.cmd == "run":
        args.threads = default_threads()
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
