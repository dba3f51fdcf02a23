"""
Flags shared by several subcommands.
"""

from rispls.report import (
    ABLATION_COLUMNS,
    EVAL_COLUMNS,
    HISTORY_COLUMNS,
    POWER_COLUMNS,
    SCALE_COLUMNS,
)

COLUMNS = {
    "eval": EVAL_COLUMNS,
    "history": HISTORY_COLUMNS,
    "power": POWER_COLUMNS,
    "scale": SCALE_COLUMNS,
    "ablation": ABLATION_COLUMNS,
}


def columns_epilog(kind: str) -> str:
    return f"CSV columns, in order: {', '.join(COLUMNS[kind])}."


def add_oracle_args(parser):
    group = parser.add_argument_group("oracle")
    group.add_argument("--restarts", type=int, help="Oracle restarts.")
    group.add_argument("--steps", type=int, help="Oracle ascent steps.")
    group.add_argument(
        "--oracle-seed", type=int, help="Seed for oracle starting points."
    )
    group.add_argument(
        "--workers",
        type=int,
        help="Worker processes (default: RISPLS_THREADS or all CPUs).",
    )


def oracle_config(args):
    args.settings.override(
        "oracle",
        restarts=args.restarts,
        steps=args.steps,
        seed=args.oracle_seed,
    )
    return args.settings.oracle


def add_train_args(parser):
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch-size", type=int)
    group.add_argument("--lr", type=float, help="Adam learning rate.")
    group.add_argument("--gamma", type=float, help="Leakage weight.")
    group.add_argument("--val-samples", type=int)
    group.add_argument("--seed", type=int, help="Initialization seed.")


def train_config(args, **extra):
    args.settings.override(
        "train",
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        gamma=args.gamma,
        val_samples=args.val_samples,
        seed=args.seed,
        **extra,
    )
    return args.settings.train
