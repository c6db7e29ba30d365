"""Command-line runner: configs in, CSV/JSON reports out.

Exit status: 0 when every row is consistent, 2 when any row is flagged
MISMATCH, 1 when the config cannot be used (diagnostic on stderr).

A row is flagged when its Monte Carlo interval contradicts a decisive
verdict, when the verdict differs from the row's `expected` outcome, or (for
the `oracle` command) when the exact value falls outside the interval.

Report columns are frozen in REPORT_COLUMNS; new columns are only ever
appended.  Wall-clock time is kept out of the CSV so that a rerun with the
same seeds reproduces it byte for byte; it is recorded in the JSON mirror.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from .config import ConfigError, ExperimentConfig, ScenarioEntry, parse_config, with_override
from .criteria_tree import critical_values
from .estimator import (
    Estimate,
    MismatchRule,
    OracleSpec,
    analytic_verdict,
    estimate_annealed,
    estimate_quenched,
    exact_line_oracle,
)
from .laws import DomainError, UnsupportedError

REPORT_COLUMNS = (
    "scenarioId",
    "graph",
    "process",
    "cell",
    "expected",
    "outcome",
    "criterionValue",
    "theoremTag",
    "horizonUsed",
    "marginNote",
    "protocol",
    "masterSeed",
    "envSeed",
    "horizon",
    "successes",
    "trials",
    "excluded",
    "pointEstimate",
    "wilsonLo",
    "wilsonHi",
    "confidence",
    "Mc",
    "mc",
    "oracle",
    "sweepAxis",
    "sweepValue",
    "mismatch",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return _fmt(v)
    return v


def _estimate(entry: ScenarioEntry, cfg: ExperimentConfig, protocol: str) -> Optional[Estimate]:
    if protocol == "none":
        return None
    sc = entry.scenario
    if protocol == "quenched":
        return estimate_quenched(sc, entry.env_seed, entry.replicates, entry.horizon, cfg.master_seed,
                                 cfg.confidence)
    return estimate_annealed(sc, entry.replicates, entry.horizon, cfg.master_seed, cfg.confidence)


def _critical(entry: ScenarioEntry):
    sc = entry.scenario
    if sc.graph != "gw-tree":
        return None, None
    cv = critical_values(sc.nlaw, sc.rlaw, offspring=sc.offspring)
    return cv.Mc, cv.mc


def _oracle(entry: ScenarioEntry) -> Optional[float]:
    sc = entry.scenario
    if sc.graph != "line" or not sc.homogeneous:
        raise UnsupportedError(f"{entry.id}: the exact oracle covers homogeneous line scenarios only")
    return exact_line_oracle(OracleSpec.from_laws(sc.process, sc.nlaw, sc.rlaw, entry.horizon))


def _row(entry: ScenarioEntry, cfg: ExperimentConfig, mode: str, sweep=None) -> dict:
    t0 = time.perf_counter()
    sc = entry.scenario
    verdict = analytic_verdict(sc)
    protocol = "none" if mode == "criteria" else entry.protocol
    est = _estimate(entry, cfg, protocol)
    mc_big, mc_small = _critical(entry) if mode in ("criteria", "sweep") else (None, None)
    oracle = _oracle(entry) if mode == "oracle" else None

    if oracle is not None:
        # the exact finite-horizon value supersedes the asymptotic verdict here
        mismatch = est is not None and not est.wilson_lo <= oracle <= est.wilson_hi
    else:
        rule = MismatchRule(extinction_ceiling=cfg.extinction_ceiling)
        mismatch = est is not None and rule.contradicts(verdict, est, sc)
    if entry.expected is not None and verdict.outcome.value != entry.expected:
        mismatch = True

    row = {
        "scenarioId": entry.id,
        "graph": sc.graph,
        "process": sc.process,
        "cell": entry.cell,
        "expected": entry.expected,
        **verdict.as_row(),
        "protocol": protocol if est is None else est.protocol,
        "masterSeed": cfg.master_seed,
        "envSeed": entry.env_seed if protocol == "quenched" else None,
        "horizon": entry.horizon,
        "confidence": cfg.confidence,
        "Mc": mc_big,
        "mc": mc_small,
        "oracle": oracle,
        "sweepAxis": None if sweep is None else sweep[0],
        "sweepValue": None if sweep is None else sweep[1],
        "mismatch": mismatch,
    }
    if est is not None:
        row.update(successes=est.successes, trials=est.trials, excluded=est.excluded,
                   pointEstimate=est.point_estimate, wilsonLo=est.wilson_lo, wilsonHi=est.wilson_hi)
        if est.warnings:
            row["_warnings"] = list(est.warnings)
    row["_wallClock"] = time.perf_counter() - t0
    return row


def render_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in REPORT_COLUMNS])
    return buf.getvalue()


def _json_rows(rows: Sequence[dict]) -> list:
    out = []
    for r in rows:
        d = {c: _json_safe(r.get(c)) for c in REPORT_COLUMNS}
        d["wallClock"] = r.get("_wallClock", 0.0)
        if "_warnings" in r:
            d["warnings"] = r["_warnings"]
        out.append(d)
    return out


def _write_reports(rows: List[dict], cfg: ExperimentConfig, out_dir: Path, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / cfg.outputs.get("csv", "report.csv")
    json_path = out_dir / cfg.outputs.get("json", "report.json")
    csv_path.write_bytes(render_csv(rows).encode("utf-8"))
    mirror = {"command": command, "schemaVersion": cfg.raw["schema_version"], "config": cfg.raw,
              "columns": list(REPORT_COLUMNS), "rows": _json_rows(rows)}
    json_path.write_text(json.dumps(mirror, indent=2, sort_keys=False) + "\n")


def _plot_column(rows: List[dict], column: Optional[str]) -> str:
    if column:
        return column
    return "mc" if all(r["graph"] == "gw-tree" for r in rows) else "criterionValue"


def _write_plot(rows: List[dict], column: str, path: Path) -> None:
    lines = [f"{rows[0]['sweepAxis']}\t{column}"] if rows else []
    lines += [f"{_fmt(r['sweepValue'])}\t{_fmt(r.get(column))}" for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _apply_overrides(raw: dict, args) -> dict:
    raw = dict(raw)
    if args.seed_override is not None:
        raw["master_seed"] = args.seed_override
    if args.replicates_override is not None:
        raw["replicates"] = args.replicates_override
        raw["scenarios"] = [{**s, "replicates": args.replicates_override} for s in raw.get("scenarios", [])]
    return raw


def _read_raw(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None


def _parse_values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {text!r}") from None


def run(args) -> int:
    raw = _apply_overrides(_read_raw(args.config), args)
    out_dir = Path(args.out_dir)
    if args.command == "sweep":
        sweep = raw.get("sweep", {}) if isinstance(raw.get("sweep"), dict) else {}
        axis = args.axis or sweep.get("axis")
        values = _parse_values(args.values) if args.values else sweep.get("values")
        if not axis or not values:
            raise ConfigError("sweep needs an axis and values (flags or the config's sweep section)")
        cfg0 = parse_config(raw)
        rows = []
        for v in values:
            cfg = parse_config(with_override(raw, axis, v))
            rows += [_row(e, cfg, "sweep", (axis, v)) for e in cfg.entries]
        _write_reports(rows, cfg0, out_dir, "sweep")
        column = _plot_column(rows, args.column or sweep.get("column"))
        _write_plot(rows, column, out_dir / cfg0.outputs.get("plot", "sweep.tsv"))
    else:
        cfg = parse_config(raw)
        rows = [_row(e, cfg, args.command) for e in cfg.entries]
        _write_reports(rows, cfg, out_dir, args.command)
    flagged = [r["scenarioId"] for r in rows if r["mismatch"]]
    for sid in flagged:
        print(f"MISMATCH {sid}", file=sys.stderr)
    return 2 if flagged else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rumorlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "criteria": "analytic verdicts (and tree critical values) only",
        "simulate": "verdicts plus Monte Carlo estimates under each scenario's protocol",
        "sweep": "repeat the criteria evaluation across values of one numeric parameter",
        "oracle": "exact bounded-radius line oracle, checked against Monte Carlo when a protocol is set",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out-dir", default=".", help="directory for the reports (default: current)")
        p.add_argument("--seed-override", type=int, default=None, help="replace master_seed")
        p.add_argument("--replicates-override", type=int, default=None, help="replace every replicate count")
        if name == "sweep":
            p.add_argument("--axis", help="dotted scenario path, e.g. n_law.p or offspring.m")
            p.add_argument("--values", help="comma-separated values")
            p.add_argument("--column", help="report column for the plot-data file")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed_override is not None and args.seed_override < 0:
        print("error: --seed-override must be nonnegative", file=sys.stderr)
        return 1
    if args.replicates_override is not None and args.replicates_override < 1:
        print("error: --replicates-override must be positive", file=sys.stderr)
        return 1
    try:
        return run(args)
    except (ConfigError, DomainError, UnsupportedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
