"""
CSV output for every experiment and the markdown evaluation summary.
"""

import csv
import logging
from typing import Iterable, Sequence

from jinja2 import Environment, PackageLoader

jinja = Environment(
    loader=PackageLoader("rispls", package_path="resources"),
    keep_trailing_newline=True,
)

# Column orders, fixed so downstream scripts can rely on them.
EVAL_COLUMNS = ("sample_id", "see", "oracle_see", "ratio", "feasible")
HISTORY_COLUMNS = ("epoch", "mean_loss", "val_see", "wall_time")
POWER_COLUMNS = ("p_max_dbm", "mean_see", "mean_ratio")
SCALE_COLUMNS = ("l", "k", "m", "mean_see", "mean_ratio", "violations")
ABLATION_COLUMNS = (
    "head",
    "residual_on",
    "two_stage_on",
    "mean_see",
    "mean_ratio",
    "violations",
)


def format_value(value) -> str:
    """Floats keep 17 significant digits so they parse back exactly."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".17g")
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


def export_csv(
    path, rows: Iterable[dict], columns: Sequence[str]
) -> None:
    """Write rows (dicts keyed by column) with a header row."""
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
            count += 1
    logging.info(f"Wrote {count} rows to {path}")


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_report(context: dict) -> str:
    return jinja.get_template("report_template.md").render(**context)


def write_report(path, context: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_report(context))
    logging.info(f"Wrote evaluation report to {path}")
