"""
Experiment drivers behind the label, sweep-power, sweep-scale and ablate
commands. Each returns plain row dicts ready for report.export_csv.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from rispls.baselines import OracleConfig, gradient_oracle
from rispls.channel import ChannelBatch, ScenarioConfig, dbm_to_watt
from rispls.dataset import Dataset, make_dataset
from rispls.errors import ConfigurationError, UsageError
from rispls.model import ModelConfig, TwoStageHGNN
from rispls.training import TrainConfig, evaluate, train

POWER_GRID_DBM = tuple(float(p) for p in range(0, 34, 3))

# (L, K, M) test settings around the (4, 2, 2) training point.
SCALE_GRID = (
    (4, 2, 2),
    (4, 1, 2),
    (4, 3, 2),
    (3, 2, 2),
    (5, 2, 2),
    (4, 2, 1),
    (4, 2, 3),
)

LABEL_CHUNK = 16


def worker_count() -> int:
    env = os.environ.get("RISPLS_THREADS")
    if env is None:
        return os.cpu_count() or 1
    try:
        count = int(env)
    except ValueError:
        raise ConfigurationError(f"RISPLS_THREADS is not a number: {env}")
    if count < 1:
        raise ConfigurationError("RISPLS_THREADS must be at least 1")
    return count


def _label_chunk(job) -> np.ndarray:
    channels, cfg, ids = job
    _, values = gradient_oracle(channels, cfg, sample_ids=ids)
    return values


def label_channels(
    channels: ChannelBatch,
    cfg: OracleConfig | None = None,
    workers: int | None = None,
    chunk: int = LABEL_CHUNK,
) -> np.ndarray:
    """
    Oracle SEE for every sample. Samples are seeded by their index, so the
    result does not depend on workers or chunk.
    """
    cfg = cfg if cfg is not None else OracleConfig()
    workers = workers if workers is not None else worker_count()
    count = len(channels)
    jobs = [
        (channels.select(ids), cfg, ids)
        for ids in (
            np.arange(start, min(start + chunk, count))
            for start in range(0, count, chunk)
        )
    ]
    labels = []
    if workers == 1 or len(jobs) <= 1:
        results = map(_label_chunk, jobs)
        for values in results:
            labels.append(values)
            logging.info(f"Labelled {sum(map(len, labels))}/{count} samples")
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            for values in executor.map(_label_chunk, jobs):
                labels.append(values)
                logging.info(
                    f"Labelled {sum(map(len, labels))}/{count} samples"
                )
    return np.concatenate(labels) if labels else np.zeros(0)


def label_dataset(
    dataset: Dataset,
    cfg: OracleConfig | None = None,
    workers: int | None = None,
) -> Dataset:
    labels = label_channels(dataset.channels, cfg, workers)
    return Dataset(dataset.scenario, dataset.channels, labels)


def _summary(report) -> dict:
    return {
        "mean_see": report.mean_see,
        "mean_ratio": report.mean_ratio,
        "violations": report.violations,
    }


def sweep_power(
    model: TwoStageHGNN,
    dataset: Dataset,
    grid_dbm=POWER_GRID_DBM,
    oracle: OracleConfig | None = None,
    workers: int | None = None,
    batch_size: int = 64,
) -> list[dict]:
    """
    Evaluate a fixed model over a grid of power budgets. The oracle is
    rerun at every budget except the one the dataset labels were made at.
    """
    rows = []
    for p_dbm in grid_dbm:
        channels = dataset.channels.with_power(dbm_to_watt(p_dbm))
        if (
            dataset.labels is not None
            and p_dbm == dataset.scenario.p_max_dbm
        ):
            labels = dataset.labels
        else:
            labels = label_channels(channels, oracle, workers)
        report = evaluate(model, channels, labels, batch_size)
        logging.info(
            f"P_max {p_dbm:g} dBm: mean SEE {report.mean_see:.6g}, "
            f"mean ratio {report.mean_ratio:.4f}"
        )
        rows.append({"p_max_dbm": float(p_dbm), **_summary(report)})
    return rows


def scale_grid(kind: str, scenario: ScenarioConfig) -> list[tuple]:
    """The (L, K, M) points for sweep-scale."""
    match kind:
        case "table":
            return list(SCALE_GRID)
        case "k":
            # K + 1 must fit in N_T for the nulling directions.
            return [
                (scenario.l, k, scenario.m) for k in range(1, scenario.n_t)
            ]
        case "m":
            return [
                (scenario.l, scenario.k, m)
                for m in range(1, scenario.n_t + 2)
            ]
    raise UsageError(f"Unknown scale grid {kind}, expected table, k or m")


def sweep_scale(
    model: TwoStageHGNN,
    scenario: ScenarioConfig,
    grid,
    count: int,
    seed: int,
    oracle: OracleConfig | None = None,
    workers: int | None = None,
    batch_size: int = 64,
) -> list[dict]:
    """
    Evaluate one model at other (L, K, M) sizes without retraining. Each
    grid point draws a fresh test set from scenario with the given seed.
    """
    if scenario.n_t != model.n_t:
        raise ConfigurationError(
            f"Model was trained at N_T={model.n_t}, scenario has "
            f"{scenario.n_t}"
        )
    params = model.parameter_count()
    rows = []
    for n_l, k, m in grid:
        point = scenario.replace(l=n_l, k=k, m=m)
        test = make_dataset(point, count, seed)
        labels = label_channels(test.channels, oracle, workers)
        report = evaluate(model, test.channels, labels, batch_size)
        if model.parameter_count() != params:
            raise RuntimeError("Parameter count changed during the sweep")
        logging.info(
            f"(L, K, M) = ({n_l}, {k}, {m}): mean SEE "
            f"{report.mean_see:.6g}, mean ratio {report.mean_ratio:.4f}"
        )
        rows.append({"l": n_l, "k": k, "m": m, **_summary(report)})
    return rows


def ablation_grid(with_model_based: bool = False) -> list[tuple]:
    """(head, residual_on, two_stage_on), the full configuration first."""
    grid = [
        ("beam_direct", True, True),
        ("beam_direct", False, True),
        ("beam_direct", True, False),
        ("beam_direct", False, False),
    ]
    if with_model_based:
        grid.append(("model_based", True, True))
    return grid


def ablate(
    cfg: TrainConfig,
    model_cfg: ModelConfig | None,
    dataset: Dataset,
    test: Dataset,
    validation: Dataset | None = None,
    with_model_based: bool = False,
) -> list[dict]:
    """Train and evaluate every configuration of the ablation grid."""
    if test.labels is None:
        raise UsageError("The ablation test set needs oracle labels")
    rows = []
    for head, residual_on, two_stage_on in ablation_grid(with_model_based):
        run = replace(
            cfg,
            head=head,
            residual_on=residual_on,
            two_stage_on=two_stage_on,
            checkpoint=None,
            history=None,
        )
        logging.info(
            f"Ablation: {head}, residual {residual_on}, "
            f"two-stage {two_stage_on}"
        )
        trained = train(run, model_cfg, dataset, validation)
        report = evaluate(
            trained.model, test.channels, test.labels, cfg.batch_size
        )
        rows.append(
            {
                "head": head,
                "residual_on": residual_on,
                "two_stage_on": two_stage_on,
                **_summary(report),
            }
        )
    return rows
