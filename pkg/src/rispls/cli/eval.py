"""
Evaluate a checkpoint on a labelled dataset.
"""

import logging

from rispls.checkpoint import load_checkpoint
from rispls.cli._options import columns_epilog
from rispls.dataset import read_dataset
from rispls.report import EVAL_COLUMNS, export_csv, write_report
from rispls.training import evaluate

logging.basicConfig(level=logging.INFO)


def add_args(parser):
    parser.epilog = columns_epilog("eval")
    parser.add_argument("checkpoint", help="Checkpoint file.")
    parser.add_argument("dataset", help="Labelled dataset file.")
    parser.add_argument("-o", "--output", help="Per-sample CSV to write.")
    parser.add_argument("--report", help="Markdown summary to write.")
    parser.add_argument("--batch-size", type=int, default=64)


def main(args):
    model, dims = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.dataset)
    report = evaluate(model, dataset.channels, dataset.labels, args.batch_size)
    logging.info(
        f"Mean ratio {report.mean_ratio:.4f}, median "
        f"{report.median_ratio:.4f}, {report.violations} violations, "
        f"{report.mean_time * 1000:.3f} ms per sample"
    )
    if args.output:
        export_csv(args.output, report.rows(), EVAL_COLUMNS)
    if args.report:
        write_report(
            args.report,
            {
                "title": args.dataset,
                "samples": len(report),
                "dims": dataset.dims,
                "head": model.head,
                "mean_see": report.mean_see,
                "mean_oracle_see": report.mean_oracle_see,
                "mean_ratio": report.mean_ratio,
                "median_ratio": report.median_ratio,
                "violations": report.violations,
                "mean_time": report.mean_time,
                "quantiles": report.quantiles(),
            },
        )
    return 1 if report.violations else 0
