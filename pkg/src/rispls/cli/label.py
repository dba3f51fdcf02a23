"""
Label a dataset with oracle SEE values.
"""

import logging

from rispls.cli._options import add_oracle_args, oracle_config
from rispls.dataset import read_dataset, write_dataset
from rispls.experiments import label_dataset

logging.basicConfig(level=logging.INFO)


def add_args(parser):
    parser.add_argument("dataset", help="Dataset file to label.")
    parser.add_argument(
        "-o",
        "--output",
        help="Where to write the labelled dataset (default: in place).",
    )
    add_oracle_args(parser)


def main(args):
    dataset = read_dataset(args.dataset)
    labelled = label_dataset(dataset, oracle_config(args), args.workers)
    logging.info(
        f"Mean oracle SEE {labelled.labels.mean():.6g} over "
        f"{len(labelled)} samples"
    )
    write_dataset(args.output or args.dataset, labelled)
