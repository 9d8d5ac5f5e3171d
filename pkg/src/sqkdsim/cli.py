"""Command-line entry point: scenario runs, attack registry, verification.

Exit status: 0 when everything passed, 1 when an expectation or check
failed, 2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

from . import __version__, verify
from .attacks import AttackDomainError, IsometryError
from .protocol import ConfigError, run as run_any
from .report import (
    evaluate_expectations,
    render_csv,
    render_machine_report,
    render_summary,
)
from .scenario import ScenarioError, describe_attack, list_attacks, load_scenario

OUT_DIR_ENV = "SQKDSIM_OUT"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqkdsim",
        description="Fock-space simulator and adversary framework for "
                    "key distribution with a classical Alice")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario file")
    run_p.add_argument("scenario", help="path to a scenario (.scn) file")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    run_p.add_argument("--rounds", type=int, default=None,
                       help="override the round count")
    run_p.add_argument("--out-dir", default=None,
                       help=f"report directory (default ${OUT_DIR_ENV} or cwd)")
    run_p.add_argument("--format", choices=("text", "csv"), default="text",
                       help="machine report format")
    run_p.add_argument("--jobs", type=int, default=1,
                       help="worker threads for round evaluation")
    run_p.add_argument("--backend", choices=("numba", "numpy"), default=None,
                       help="force a simulation backend")
    run_p.add_argument("--round-log", choices=("auto", "always", "never"),
                       default="auto", help="per-round records in the report")

    atk_p = sub.add_parser("attacks", help="list or describe registered attacks")
    atk_sub = atk_p.add_subparsers(dest="attacks_command", required=True)
    atk_sub.add_parser("list", help="list attack identifiers")
    desc_p = atk_sub.add_parser("describe", help="describe one attack")
    desc_p.add_argument("name")

    ver_p = sub.add_parser("verify", help="run built-in verification suites")
    ver_p.add_argument("suite", choices=verify.SUITES)
    ver_p.add_argument("--seed", type=int, default=0)
    ver_p.add_argument("--trials", type=int, default=200,
                       help="random attacks per direction in the lemma suite")

    bench_p = sub.add_parser("bench", help="time the numba and numpy backends")
    bench_p.add_argument("--rounds", type=int, default=200_000)
    bench_p.add_argument("--repeat", type=int, default=3)
    return parser


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        scenario.config.rng_seed = args.seed
    if args.rounds is not None:
        scenario.config.rounds = args.rounds
    try:
        scenario.config.validate()
        attack = scenario.build_attack()
        report = run_any(scenario.config, attack, jobs=args.jobs,
                         backend=args.backend)
    except (ScenarioError, ConfigError, IsometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AttackDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        comparison = evaluate_expectations(report, scenario.expectations)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        for suffix, text in render_csv(report, scenario.name, comparison,
                                       round_log=args.round_log).items():
            (out_dir / f"{scenario.name}.{suffix}").write_text(
                text, encoding="utf-8")
    else:
        machine = render_machine_report(report, scenario.name, comparison,
                                        round_log=args.round_log)
        (out_dir / f"{scenario.name}.report.txt").write_text(
            machine, encoding="utf-8")
    summary = render_summary(report, scenario.name, comparison)
    (out_dir / f"{scenario.name}.summary.txt").write_text(
        summary, encoding="utf-8")
    print(summary, end="")

    if comparison and not all(row.passed for row in comparison):
        return EXIT_FAILED
    return EXIT_OK


def _cmd_attacks(args) -> int:
    if args.attacks_command == "list":
        for name in list_attacks():
            print(name)
        return EXIT_OK
    try:
        print(describe_attack(args.name))
        return EXIT_OK
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _cmd_verify(args) -> int:
    results = verify.run_suite(args.suite, seed=args.seed, trials=args.trials)
    width = max(len(f"{r.suite}:{r.name}") for r in results)
    failed = 0
    for r in results:
        mark = "pass" if r.passed else "FAIL"
        failed += 0 if r.passed else 1
        print(f"[{mark}] {r.suite + ':' + r.name:<{width}}  {r.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def _cmd_bench(args) -> int:
    # local import: keeps CLI startup light for the other commands
    import numpy as np
    from .attacks import tagging_attack
    from .kernels import NUMBA_AVAILABLE, round_uniforms, simulate_ca
    from .protocol import ProtocolConfig, build_ca_tables

    config = ProtocolConfig(rounds=args.rounds, rng_seed=1, n_max=2,
                            residual_policy="measure-resend")
    tables, _meta = build_ca_tables(config, tagging_attack())
    u = round_uniforms(config.rng_seed, config.rounds)
    backends = ["numpy"] + (["numba"] if NUMBA_AVAILABLE else [])
    print(f"two-way protocol round walk, {args.rounds} rounds, "
          f"best of {args.repeat}:")
    reference = None
    for backend in backends:
        simulate_ca(tables, u, backend=backend)  # warm up / jit compile
        best = min(_timed(lambda: simulate_ca(tables, u, backend=backend))
                   for _ in range(args.repeat))
        rec = simulate_ca(tables, u, backend=backend)
        if reference is None:
            reference = rec
        agree = all(np.array_equal(reference[k], rec[k]) for k in reference)
        rate = args.rounds / best / 1e6
        print(f"  {backend:<6} {best * 1e3:8.1f} ms  "
              f"({rate:6.1f} M rounds/s)  identical={agree}")
    return EXIT_OK


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "attacks":
        return _cmd_attacks(args)
    if args.command == "verify":
        return _cmd_verify(args)
    return _cmd_bench(args)


if __name__ == "__main__":
    sys.exit(main())
