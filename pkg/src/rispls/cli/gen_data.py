"""
Generate a dataset of channel realizations.
"""

import logging

from rispls.dataset import make_dataset, write_dataset

logging.basicConfig(level=logging.INFO)


def add_args(parser):
    parser.add_argument("output", help="Dataset file to write.")
    parser.add_argument("--nt", type=int, help="BS antennas N_T.")
    parser.add_argument("--l", type=int, help="RIS elements L.")
    parser.add_argument("--k", type=int, help="Legitimate users K.")
    parser.add_argument("--m", type=int, help="Eavesdroppers M.")
    parser.add_argument("--n", type=int, default=1000, help="Sample count.")
    parser.add_argument("--p-max-dbm", type=float, help="Power budget.")
    parser.add_argument("--seed", type=int, help="Sampling seed.")


def main(args):
    args.settings.override(
        "scenario",
        n_t=args.nt,
        l=args.l,
        k=args.k,
        m=args.m,
        p_max_dbm=args.p_max_dbm,
        seed=args.seed,
    )
    scenario = args.settings.scenario
    logging.info(
        f"Sampling {args.n} realizations at (N_T, L, K, M) = "
        f"{scenario.dims} with seed {scenario.seed}"
    )
    write_dataset(args.output, make_dataset(scenario, args.n, scenario.seed))
