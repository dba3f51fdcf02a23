"""
Train a model on a dataset and save the best checkpoint.
"""

import logging

from rispls.cli._options import add_train_args, columns_epilog, train_config
from rispls.training import train

logging.basicConfig(level=logging.INFO)


def add_args(parser):
    parser.epilog = "History " + columns_epilog("history")
    parser.add_argument("dataset", help="Training dataset file.")
    parser.add_argument(
        "-o", "--checkpoint", required=True, help="Checkpoint to write."
    )
    parser.add_argument(
        "--validation",
        help="Validation dataset (default: hold out the tail of the "
        "training set).",
    )
    parser.add_argument("--history", help="Per-epoch CSV to write.")
    parser.add_argument(
        "--head", choices=("beam_direct", "model_based"), default=None
    )
    parser.add_argument(
        "--no-residual",
        dest="residual_on",
        action="store_false",
        default=None,
        help="Drop the residual connections.",
    )
    parser.add_argument(
        "--no-two-stage",
        dest="two_stage_on",
        action="store_false",
        default=None,
        help="Fix the RIS phases at zero and skip Stage 1.",
    )
    add_train_args(parser)


def main(args):
    cfg = train_config(
        args,
        head=args.head,
        residual_on=args.residual_on,
        two_stage_on=args.two_stage_on,
        dataset=args.dataset,
        validation=args.validation,
        checkpoint=args.checkpoint,
        history=args.history,
    )
    train(cfg, args.settings.model)
