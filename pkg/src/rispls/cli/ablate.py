"""
Train and compare the residual and two-stage ablations.
"""

import logging

from rispls.cli._options import add_train_args, columns_epilog, train_config
from rispls.dataset import read_dataset
from rispls.experiments import ablate
from rispls.report import ABLATION_COLUMNS, export_csv

logging.basicConfig(level=logging.INFO)


def add_args(parser):
    parser.epilog = columns_epilog("ablation")
    parser.add_argument("dataset", help="Training dataset file.")
    parser.add_argument("test", help="Labelled test dataset file.")
    parser.add_argument("-o", "--output", required=True, help="CSV file.")
    parser.add_argument("--validation", help="Validation dataset file.")
    parser.add_argument(
        "--with-model-based",
        action="store_true",
        help="Add the full configuration with the model-based head.",
    )
    add_train_args(parser)


def main(args):
    cfg = train_config(args)
    dataset = read_dataset(args.dataset)
    test = read_dataset(args.test)
    validation = read_dataset(args.validation) if args.validation else None
    rows = ablate(
        cfg,
        args.settings.model,
        dataset,
        test,
        validation,
        args.with_model_based,
    )
    export_csv(args.output, rows, ABLATION_COLUMNS)
