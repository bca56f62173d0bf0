"""Writing a RunReport to disk.

Per run directory:

- ``trace.csv``: the experiment's per-step / per-row table
- ``trials.csv``: one row of scalar metrics per trial
- ``aggregate.json``: means and MC standard errors, targets, provenance
- ``report.txt``: human-readable summary

Both CSVs start with a ``# schema: ...`` comment line. Floats are written
with ``repr`` so values round-trip exactly and aggregates can be recomputed
from ``trials.csv``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .experiments import RunReport

SCHEMA_VERSION = "v1"


def schema_id(experiment: str, table: str) -> str:
    return f"conformal-cal/{experiment}/{table}/{SCHEMA_VERSION}"


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def write_csv(path, schema: str, header, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# schema: {schema}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def read_csv(path) -> tuple[str, list[dict]]:
    """Return ``(schema id, rows as dicts of strings)``."""
    with open(path, newline="") as f:
        first = f.readline()
        if not first.startswith("# schema:"):
            raise ValueError(f"{path}: missing schema line")
        rows = list(csv.DictReader(f))
    return first.split(":", 1)[1].strip(), rows


def trial_columns(report: RunReport) -> list[str]:
    return sorted({k for t in report.trials for k in t})


def write_report(report: RunReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trace.csv", schema_id(report.experiment, "trace"), report.trace_header, report.trace_rows)
    cols = trial_columns(report)
    write_csv(out / "trials.csv", schema_id(report.experiment, "trials"), ["trial"] + cols,
              [[i] + [t.get(c, math.nan) for c in cols] for i, t in enumerate(report.trials)])
    agg = {
        "experiment": report.experiment,
        "aggregates": report.aggregates,
        "targets": [
            {"name": t.name, "value": t.value, "op": t.op, "bound": t.bound, "passed": t.passed}
            for t in report.targets
        ],
        "passed": report.passed,
        "provenance": report.provenance,
    }
    (out / "aggregate.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    (out / "report.txt").write_text(render_text(report))
    return out


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    return f"{v:.6g}"


def render_text(report: RunReport) -> str:
    p = report.provenance
    lines = [
        f"experiment: {report.experiment}",
        f"seed: {p.get('seed')}  trials: {p.get('trials')}  config: {p.get('config_hash')}  version: {p.get('version')}",
        "",
        "aggregates (mean +- MC standard error, n):",
    ]
    width = max((len(k) for k in report.aggregates), default=0)
    for k, a in report.aggregates.items():
        lines.append(f"  {k:<{width}}  {_fmt(a['mean'])} +- {_fmt(a['se'])}  (n={a['n']})")
    lines += ["", "targets:"]
    for t in report.targets:
        status = {True: "PASS", False: "FAIL", None: "N/A"}[t.passed]
        lines.append(f"  [{status}] {t.name}: {_fmt(t.value)} {t.op} {_fmt(t.bound)}")
    lines += ["", f"overall: {'PASS' if report.passed else 'FAIL'}", ""]
    return "\n".join(lines)
