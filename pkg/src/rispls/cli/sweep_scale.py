"""
Evaluate a checkpoint at other RIS, user and eavesdropper counts.
"""

import logging

from rispls.checkpoint import load_checkpoint
from rispls.cli._options import add_oracle_args, columns_epilog, oracle_config
from rispls.experiments import scale_grid, sweep_scale
from rispls.report import SCALE_COLUMNS, export_csv

logging.basicConfig(level=logging.INFO)


def add_args(parser):
    parser.epilog = columns_epilog("scale")
    parser.add_argument("checkpoint", help="Checkpoint file.")
    parser.add_argument("-o", "--output", required=True, help="CSV file.")
    parser.add_argument(
        "--grid",
        choices=("table", "k", "m"),
        default="table",
        help="The seven-point (L, K, M) table, or K or M alone.",
    )
    parser.add_argument(
        "--n", type=int, default=200, help="Test samples per grid point."
    )
    parser.add_argument("--seed", type=int, default=1, help="Test seed.")
    parser.add_argument("--batch-size", type=int, default=64)
    add_oracle_args(parser)


def main(args):
    model, dims = load_checkpoint(args.checkpoint)
    n_t, n_l, k, m = dims
    args.settings.override("scenario", n_t=n_t, l=n_l, k=k, m=m)
    scenario = args.settings.scenario
    rows = sweep_scale(
        model,
        scenario,
        scale_grid(args.grid, scenario),
        args.n,
        args.seed,
        oracle_config(args),
        args.workers,
        args.batch_size,
    )
    export_csv(args.output, rows, SCALE_COLUMNS)
