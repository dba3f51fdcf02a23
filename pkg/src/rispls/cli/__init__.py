"""
Command line tools for rispls.
"""

import argparse
import importlib
import logging
import pathlib

from rispls.config import load_config

subcommands = {
    file.stem.replace("_", "-"): importlib.import_module(
        f".{file.stem}", package=__package__
    )
    for file in sorted(pathlib.Path(__file__).parent.glob("*.py"))
    if not file.stem.startswith("_")
}

parser = argparse.ArgumentParser(
    prog="rispls",
    description="Train and evaluate the two-stage RIS secrecy HGNN.",
    epilog="See help on subcommands.",
)

parser.add_argument(
    "-c",
    "--config",
    required=False,
    help="A YAML configuration file with scenario, model, oracle and "
    "train sections. Command line flags override it.",
)

subparsers = parser.add_subparsers(help="subcommand help", required=True)
for command in subcommands:
    subparser = subparsers.add_parser(
        command, help=subcommands[command].__doc__
    )
    subcommands[command].add_args(subparser)
    subparser.set_defaults(func=subcommands[command].main)


def main(argv=None):
    global parser, args
    args = parser.parse_args(argv)

    try:
        args.settings = load_config(args.config)
        # Call the subcommand.
        return args.func(args) or 0
    except (ValueError, RuntimeError, OSError) as e:
        logging.error(f"{args.func.__module__.split('.')[-1]}: {e}")
        return 1


if __name__ == "__main__":
    exit(main())
