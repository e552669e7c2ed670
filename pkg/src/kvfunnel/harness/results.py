"""CSV/JSON emission with a stable column order and 6-significant-digit floats."""

import csv
import io
import json
import math
from dataclasses import asdict

RUN_COLUMNS = (
    "policy", "budget", "seed", "alpha", "beta", "seq_len", "decode_steps",
    "max_abs_diff_max", "max_abs_diff_mean", "agreement_rate", "retained_mass_mean",
    "retained_bytes", "full_bytes", "ratio",
)
STEP_COLUMNS = ("step", "max_abs_diff", "argmax_agree")
LAYER_COLUMNS = ("layer", "budget", "retained_mass")
STATS_COLUMNS = ("layer", "entropy", "locality_mass", "top1_mass", "sink_mass")
FAILURE_COLUMNS = ("policy", "budget", "seed", "alpha", "beta", "error")


def fmt_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.6g}"
    return str(value)


def json_value(value):
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            return None
        return float(f"{value:.6g}")
    if isinstance(value, dict):
        return {k: json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_value(v) for v in value]
    return value


def csv_text(rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt_value(row.get(c)) for c in columns])
    return buf.getvalue()


def json_text(payload):
    return json.dumps(json_value(payload), indent=2, sort_keys=False) + "\n"


def write_table(path, rows, columns, fmt="csv"):
    """Write ``rows`` (list of dicts) as CSV or as a JSON list restricted to ``columns``."""
    if fmt == "csv":
        text = csv_text(rows, columns)
    else:
        text = json_text([{c: row.get(c) for c in columns} for row in rows])
    with open(path, "w", newline="") as fh:
        fh.write(text)


def stats_rows(stats):
    return [asdict(s) for s in stats]


def run_row(report, budget, seed, alpha, beta):
    row = report.summary()
    row.update(budget=budget, seed=seed, alpha=alpha, beta=beta)
    return row


def step_rows(report):
    return [
        {"step": i, "max_abs_diff": d, "argmax_agree": a}
        for i, (d, a) in enumerate(zip(report.max_abs_diff, report.argmax_agree))
    ]


def layer_rows(report):
    return [
        {"layer": i, "budget": b, "retained_mass": r}
        for i, (b, r) in enumerate(zip(report.layer_budgets, report.retained_mass))
    ]
