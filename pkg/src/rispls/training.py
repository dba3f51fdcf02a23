"""
Unsupervised training of the two-stage model and evaluation against oracle
denominators.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from rispls.channel import ChannelBatch
from rispls.checkpoint import save_checkpoint
from rispls.dataset import Dataset, read_dataset
from rispls.errors import ConfigurationError, TrainingError, UsageError
from rispls.metrics import TransmitDesign, see
from rispls.model import ModelConfig, TwoStageHGNN
from rispls.numerics import AdamState, adam_step
from rispls.report import HISTORY_COLUMNS, export_csv
from rispls.stage2 import HEADS

CDF_QUANTILES = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95)


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    lr: float = 1e-4
    gamma: float = 0.1
    head: str = "model_based"
    residual_on: bool = True
    two_stage_on: bool = True
    dataset: str | None = None
    validation: str | None = None
    val_samples: int = 512
    checkpoint: str | None = None
    history: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must not be negative")
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")
        if self.gamma < 0:
            raise ConfigurationError("gamma must not be negative")
        if self.val_samples < 0:
            raise ConfigurationError("val_samples must not be negative")
        if self.head not in HEADS:
            raise ConfigurationError(
                f"Unknown head {self.head}, expected one of "
                f"{', '.join(HEADS)}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_see: float
    wall_time: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingReport:
    model: TwoStageHGNN
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_see: float = -math.inf
    steps: int = 0


def _resolve_data(
    cfg: TrainConfig, dataset: Dataset | None, validation: Dataset | None
) -> tuple[Dataset, Dataset]:
    if dataset is None:
        if cfg.dataset is None:
            raise ConfigurationError("No training dataset given")
        dataset = read_dataset(cfg.dataset)
    if validation is None and cfg.validation is not None:
        validation = read_dataset(cfg.validation)
    if validation is None:
        # Hold out the tail of the training file.
        held = min(cfg.val_samples, len(dataset) // 5)
        dataset, validation = dataset.split(len(dataset) - held)
    if len(dataset) == 0:
        raise ConfigurationError("The training set is empty")
    if len(validation) and validation.dims != dataset.dims:
        raise ConfigurationError(
            f"Validation dimensions {validation.dims} differ from the "
            f"training dimensions {dataset.dims}"
        )
    return dataset, validation


def batches(count: int, size: int, rng: np.random.Generator | None = None):
    """Index arrays covering range(count), shuffled when rng is given."""
    order = np.arange(count) if rng is None else rng.permutation(count)
    for start in range(0, count, size):
        yield order[start : start + size]


def validation_see(
    model: TwoStageHGNN, channels: ChannelBatch, batch_size: int
) -> float:
    if len(channels) == 0:
        return math.nan
    values = [
        see(part, model(part)).see
        for part in (
            channels.select(idx)
            for idx in batches(len(channels), batch_size)
        )
    ]
    return float(np.mean(np.concatenate(values)))


def train(
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    dataset: Dataset | None = None,
    validation: Dataset | None = None,
) -> TrainingReport:
    """
    Minimize the negative soft SEE with Adam. The weights with the best
    validation SEE (hard clamp) are kept; without a validation split the
    last epoch wins.
    """
    dataset, validation = _resolve_data(cfg, dataset, validation)
    n_t = dataset.dims[0]
    model = TwoStageHGNN(
        n_t,
        model_cfg,
        head=cfg.head,
        seed=cfg.seed,
        residual_on=cfg.residual_on,
        two_stage_on=cfg.two_stage_on,
    )
    logging.info(
        f"Training {cfg.head} model ({model.parameter_count()} parameters) "
        f"on {len(dataset)} samples, validating on {len(validation)}"
    )

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    state = AdamState(lr=cfg.lr)
    report = TrainingReport(model)
    best_state = model.params.state_dict()

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        losses = []
        for idx in batches(len(dataset), cfg.batch_size, rng):
            try:
                loss = model.loss(dataset.channels.select(idx), cfg.gamma)
                loss.backward()
                adam_step(model.params, state)
            except TrainingError as e:
                if e.sample is None:
                    raise
                raise TrainingError(
                    f"Epoch {epoch}: non-finite loss at dataset sample "
                    f"{int(idx[e.sample])}",
                    sample=int(idx[e.sample]),
                ) from e
            losses.append(loss.item())
            report.steps += 1

        val = validation_see(model, validation.channels, cfg.batch_size)
        record = EpochRecord(
            epoch,
            float(np.mean(losses)),
            val,
            time.perf_counter() - started,
        )
        report.history.append(record)
        logging.info(
            f"Epoch {epoch}/{cfg.epochs}: loss {record.mean_loss:.6g}, "
            f"validation SEE {record.val_see:.6g}, "
            f"{record.wall_time:.1f}s"
        )
        # Non-finite validation values never win; without validation
        # data the last epoch does.
        if not len(validation) or (
            math.isfinite(val) and val > report.best_val_see
        ):
            report.best_epoch = epoch
            report.best_val_see = val
            best_state = model.params.state_dict()

    model.params.load_state_dict(best_state)
    if cfg.epochs and not report.best_epoch:
        logging.warning(
            "No epoch reached a finite validation SEE, keeping the "
            "initial weights"
        )
    elif cfg.epochs:
        logging.info(
            f"Keeping weights from epoch {report.best_epoch} "
            f"(validation SEE {report.best_val_see:.6g})"
        )
    if cfg.checkpoint is not None:
        save_checkpoint(cfg.checkpoint, model, dataset.dims)
    if cfg.history is not None:
        export_csv(
            cfg.history,
            (r.to_dict() for r in report.history),
            HISTORY_COLUMNS,
        )
    return report


@dataclass
class EvaluationReport:
    see: np.ndarray
    oracle_see: np.ndarray
    ratio: np.ndarray
    feasible: np.ndarray
    mean_time: float
    sample_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.see)

    @property
    def mean_see(self) -> float:
        return float(np.mean(self.see)) if len(self) else math.nan

    @property
    def mean_oracle_see(self) -> float:
        return float(np.mean(self.oracle_see)) if len(self) else math.nan

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratio)) if len(self) else math.nan

    @property
    def median_ratio(self) -> float:
        return float(np.median(self.ratio)) if len(self) else math.nan

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(~self.feasible))

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted SEE values and their empirical probabilities."""
        values = np.sort(self.see)
        return values, np.arange(1, len(values) + 1) / max(len(values), 1)

    def quantiles(self, qs=CDF_QUANTILES) -> list[tuple[float, float]]:
        if not len(self):
            return []
        return [(q, float(np.quantile(self.see, q))) for q in qs]

    def rows(self):
        for i in range(len(self)):
            yield {
                "sample_id": int(self.sample_ids[i]),
                "see": float(self.see[i]),
                "oracle_see": float(self.oracle_see[i]),
                "ratio": float(self.ratio[i]),
                "feasible": bool(self.feasible[i]),
            }


def ratios(achieved: np.ndarray, oracle: np.ndarray) -> np.ndarray:
    """Achieved over oracle SEE; a non-positive oracle value counts as 1."""
    positive = oracle > 0
    safe = np.where(positive, oracle, 1.0)
    return np.where(positive, achieved / safe, 1.0)


def evaluate(
    designer: Callable[[ChannelBatch], TransmitDesign],
    channels: ChannelBatch,
    denominators,
    batch_size: int = 64,
) -> EvaluationReport:
    """
    Run designer over channels in batches and compare the hard SEE of its
    designs with the per-sample oracle SEE in denominators.
    """
    if denominators is None:
        raise UsageError(
            "Evaluation needs oracle SEE denominators; run label first"
        )
    denominators = np.asarray(denominators, dtype=np.float64)
    if denominators.shape != (len(channels),):
        raise UsageError(
            f"{denominators.size} denominators for {len(channels)} samples"
        )

    achieved, feasible = [], []
    elapsed = 0.0
    for idx in batches(len(channels), batch_size):
        part = channels.select(idx)
        started = time.perf_counter()
        design = designer(part)
        elapsed += time.perf_counter() - started
        achieved.append(see(part, design).see)
        feasible.append(design.feasible(part.p_max))

    count = len(channels)
    achieved = np.concatenate(achieved) if achieved else np.zeros(0)
    feasible = (
        np.concatenate(feasible) if feasible else np.zeros(0, dtype=bool)
    )
    report = EvaluationReport(
        achieved,
        denominators,
        ratios(achieved, denominators),
        feasible,
        elapsed / count if count else 0.0,
        np.arange(count),
    )
    if report.violations:
        logging.warning(
            f"{report.violations} of {count} designs violate the power "
            f"budget or the phase range"
        )
    return report
