"""Deterministic serialization of runs: machine reports, summaries, comparisons.

Machine reports are plain structured text with a fixed float format and no
timestamps, hostnames or worker counts, so identical (scenario, seed) runs
produce byte-identical files regardless of backend or parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

from .protocol import RunReport

#: per-round records are embedded up to this many rounds unless forced
ROUND_LOG_LIMIT = 20_000


def fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int,)):
        return str(value)
    return format(float(value), ".17g")


@dataclass
class Expectation:
    """One scenario assertion: metric vs analytic value within a band.

    ``mode`` is ``abs`` (pass iff |emp - analytic| <= value) or ``sigma``
    (pass iff within three sigmas of size ``value``).
    """
    metric: str
    analytic: float
    mode: str
    value: float


@dataclass
class ComparisonRow:
    metric: str
    analytic: float
    empirical: float
    deviation_sigmas: float
    passed: bool


def evaluate_expectations(report: RunReport,
                          expectations: Sequence[Expectation]
                          ) -> List[ComparisonRow]:
    rows = []
    for exp in expectations:
        if exp.metric not in report.metrics:
            raise KeyError(f"expectation references unknown metric "
                           f"{exp.metric!r}; emitted metrics: "
                           f"{', '.join(sorted(report.metrics))}")
        emp = float(report.metrics[exp.metric])
        diff = abs(emp - exp.analytic)
        if exp.mode == "sigma":
            dev = diff / exp.value if exp.value > 0 else (0.0 if diff == 0 else math.inf)
            passed = dev <= 3.0
        else:
            dev = diff / exp.value if exp.value > 0 else (0.0 if diff == 0 else math.inf)
            passed = diff <= exp.value
        rows.append(ComparisonRow(metric=exp.metric, analytic=exp.analytic,
                                  empirical=emp, deviation_sigmas=dev,
                                  passed=passed))
    return rows


def render_machine_report(report: RunReport, scenario_name: str,
                          comparison: Sequence[ComparisonRow] = (),
                          round_log: str = "auto") -> str:
    lines = ["# sqkdsim run report", "[run]",
             f"scenario = {scenario_name}",
             f"variant = {report.variant}",
             f"rounds = {report.rounds}",
             f"seed = {report.seed}",
             "", "[metrics]"]
    for key, value in report.metrics.items():
        lines.append(f"{key} = {fmt(value)}")
    lines.append("")
    lines.append("[categories]")
    for key, value in report.categories.items():
        lines.append(f"{key} = {value}")
    if comparison:
        lines.append("")
        lines.append("[comparison]")
        lines.append("# metric analytic empirical deviation_sigmas pass")
        for row in comparison:
            lines.append(" ".join([row.metric, fmt(row.analytic),
                                   fmt(row.empirical),
                                   fmt(row.deviation_sigmas),
                                   "1" if row.passed else "0"]))
    include_rounds = (round_log == "always"
                      or (round_log == "auto" and report.rounds <= ROUND_LOG_LIMIT))
    if include_rounds:
        lines.append("")
        lines.append("[rounds]")
        lines.append("# index " + " ".join(report.record_fields))
        cols = [report.records[f] for f in report.record_fields]
        for i in range(report.rounds):
            lines.append(str(i) + " " + " ".join(str(int(c[i])) for c in cols))
    lines.append("")
    return "\n".join(lines)


def render_csv(report: RunReport, scenario_name: str,
               comparison: Sequence[ComparisonRow] = (),
               round_log: str = "auto") -> Dict[str, str]:
    """CSV-like row files keyed by suffix."""
    metrics = ["metric,value"]
    metrics.append(f"scenario,{scenario_name}")
    metrics.append(f"variant,{report.variant}")
    metrics.append(f"rounds,{report.rounds}")
    metrics.append(f"seed,{report.seed}")
    for key, value in report.metrics.items():
        metrics.append(f"{key},{fmt(value)}")
    for key, value in report.categories.items():
        metrics.append(f"category.{key},{value}")
    files = {"metrics.csv": "\n".join(metrics) + "\n"}
    if comparison:
        rows = ["metric,analytic,empirical,deviation_sigmas,pass"]
        for row in comparison:
            rows.append(",".join([row.metric, fmt(row.analytic),
                                  fmt(row.empirical), fmt(row.deviation_sigmas),
                                  "1" if row.passed else "0"]))
        files["comparison.csv"] = "\n".join(rows) + "\n"
    include_rounds = (round_log == "always"
                      or (round_log == "auto" and report.rounds <= ROUND_LOG_LIMIT))
    if include_rounds:
        rows = ["index," + ",".join(report.record_fields)]
        cols = [report.records[f] for f in report.record_fields]
        for i in range(report.rounds):
            rows.append(str(i) + "," + ",".join(str(int(c[i])) for c in cols))
        files["rounds.csv"] = "\n".join(rows) + "\n"
    return files


def render_summary(report: RunReport, scenario_name: str,
                   comparison: Sequence[ComparisonRow] = ()) -> str:
    lines = [f"scenario {scenario_name}: {report.variant}, "
             f"{report.rounds} rounds, seed {report.seed}", ""]
    width = max((len(k) for k in report.metrics), default=10)
    for key, value in report.metrics.items():
        lines.append(f"  {key:<{width}}  {fmt(value)}")
    lines.append("")
    lines.append("  outcome partition:")
    for key, value in report.categories.items():
        if value:
            lines.append(f"    {key:<18} {value}")
    if comparison:
        lines.append("")
        lines.append("  expectations:")
        for row in comparison:
            status = "pass" if row.passed else "FAIL"
            lines.append(f"    [{status}] {row.metric}: empirical {fmt(row.empirical)}"
                         f" vs analytic {fmt(row.analytic)}"
                         f" (deviation {fmt(row.deviation_sigmas)})")
    lines.append("")
    return "\n".join(lines)
