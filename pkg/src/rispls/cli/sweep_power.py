"""
Evaluate a checkpoint over a grid of power budgets.
"""

import logging

import numpy as np

from rispls.checkpoint import load_checkpoint
from rispls.cli._options import add_oracle_args, columns_epilog, oracle_config
from rispls.dataset import read_dataset
from rispls.experiments import sweep_power
from rispls.report import POWER_COLUMNS, export_csv

logging.basicConfig(level=logging.INFO)


def add_args(parser):
    parser.epilog = columns_epilog("power")
    parser.add_argument("checkpoint", help="Checkpoint file.")
    parser.add_argument("dataset", help="Test dataset file.")
    parser.add_argument("-o", "--output", required=True, help="CSV file.")
    parser.add_argument("--start", type=float, default=0.0, help="dBm.")
    parser.add_argument("--stop", type=float, default=33.0, help="dBm.")
    parser.add_argument("--step", type=float, default=3.0, help="dB.")
    parser.add_argument("--batch-size", type=int, default=64)
    add_oracle_args(parser)


def main(args):
    if not args.step > 0:
        raise ValueError("--step must be positive")
    model, _ = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.dataset)
    count = int(np.floor((args.stop - args.start) / args.step + 1e-9)) + 1
    grid = [args.start + i * args.step for i in range(max(count, 0))]
    rows = sweep_power(
        model,
        dataset,
        grid,
        oracle_config(args),
        args.workers,
        args.batch_size,
    )
    export_csv(args.output, rows, POWER_COLUMNS)
