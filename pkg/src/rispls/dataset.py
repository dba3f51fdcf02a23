"""
Dataset files.

Layout, all little-endian:

    magic        7 bytes  b"RISPLS1"
    version      u32
    n_t, l, k, m u32 x 4
    count        u64
    echo length  u32, then the scenario as UTF-8 YAML
    records      count x (H, h_b, h_r, f_b, f_r) as complex128, row-major
    [labels]     b"ORCL", u64 count, then count float64 oracle SEE values

Noise powers and budgets are not stored per record; they come from the
scenario echo.
"""

import logging
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from rispls.channel import ChannelBatch, ScenarioConfig, generate
from rispls.errors import DatasetFormatError

MAGIC = b"RISPLS1"
VERSION = 1
LABEL_MAGIC = b"ORCL"

_HEADER = struct.Struct("<I4IQI")
_LABELS = struct.Struct("<Q")
_BLOCKS = ("H", "h_b", "h_r", "f_b", "f_r")


@dataclass
class Dataset:
    scenario: ScenarioConfig
    channels: ChannelBatch
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.channels)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.channels.dims

    def split(self, count: int) -> tuple["Dataset", "Dataset"]:
        """The first count samples and the rest."""
        head = np.arange(min(count, len(self)))
        tail = np.arange(len(head), len(self))
        return self.subset(head), self.subset(tail)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.scenario,
            self.channels.select(idx),
            None if self.labels is None else self.labels[idx],
        )


def block_shapes(dims) -> list[tuple[int, ...]]:
    n_t, n_l, k, m = dims
    return [(n_l, n_t), (k, n_t), (k, n_l), (m, n_t), (m, n_l)]


def record_size(dims) -> int:
    """Complex entries per record."""
    return int(np.sum([np.prod(s) for s in block_shapes(dims)]))


def make_dataset(
    scenario: ScenarioConfig, count: int, seed: int | None = None
) -> Dataset:
    return Dataset(scenario, generate(scenario, count, seed))


def atomic_write(path: Path, payload: bytes) -> None:
    """Write next to the destination, then rename over it."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode(dataset: Dataset) -> bytes:
    ch = dataset.channels
    echo = yaml.safe_dump(
        dataset.scenario.to_dict(), sort_keys=True
    ).encode("utf-8")
    count = len(ch)
    records = np.concatenate(
        [getattr(ch, name).reshape(count, -1) for name in _BLOCKS], axis=1
    ).astype("<c16")
    parts = [
        MAGIC,
        _HEADER.pack(VERSION, *ch.dims, count, len(echo)),
        echo,
        records.tobytes(),
    ]
    if dataset.labels is not None:
        labels = np.asarray(dataset.labels, dtype="<f8")
        if labels.shape != (count,):
            raise DatasetFormatError(
                f"{labels.shape[0]} labels for {count} samples"
            )
        parts += [LABEL_MAGIC, _LABELS.pack(count), labels.tobytes()]
    return b"".join(parts)


def decode(payload: bytes) -> Dataset:
    if payload[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError("Not a dataset file (bad magic)")
    offset = len(MAGIC)
    if len(payload) < offset + _HEADER.size:
        raise DatasetFormatError("Truncated dataset header")
    version, n_t, n_l, k, m, count, echo_len = _HEADER.unpack_from(
        payload, offset
    )
    if version != VERSION:
        raise DatasetFormatError(f"Unsupported dataset version {version}")
    offset += _HEADER.size
    try:
        echo = yaml.safe_load(payload[offset : offset + echo_len])
        scenario = ScenarioConfig(**echo)
    except (yaml.YAMLError, TypeError) as e:
        raise DatasetFormatError(f"Unreadable scenario echo: {e}")
    offset += echo_len
    dims = (n_t, n_l, k, m)
    if scenario.dims != dims:
        raise DatasetFormatError(
            f"Header dimensions {dims} disagree with the scenario echo "
            f"{scenario.dims}"
        )

    width = record_size(dims)
    nbytes = count * width * 16
    if len(payload) < offset + nbytes:
        raise DatasetFormatError(
            f"Expected {count} records ({nbytes} bytes), file is truncated"
        )
    records = np.frombuffer(
        payload, dtype="<c16", count=count * width, offset=offset
    ).reshape(count, width)
    offset += nbytes

    blocks = {}
    start = 0
    for name, shape in zip(_BLOCKS, block_shapes(dims)):
        size = int(np.prod(shape))
        blocks[name] = (
            records[:, start : start + size]
            .reshape((count,) + shape)
            .astype(np.complex128)
        )
        start += size
    channels = ChannelBatch(
        **blocks,
        sigma2=np.full((count, k), scenario.sigma2_w),
        sigma2_e=np.full((count, m), scenario.sigma2_e_w),
        p_max=np.full(count, scenario.p_max_w),
        p_c=np.full(count, scenario.p_c_watt),
    )

    labels = None
    if offset < len(payload):
        if payload[offset : offset + len(LABEL_MAGIC)] != LABEL_MAGIC:
            raise DatasetFormatError("Unknown section after the records")
        offset += len(LABEL_MAGIC)
        (stored,) = _LABELS.unpack_from(payload, offset)
        offset += _LABELS.size
        if stored != count or len(payload) != offset + 8 * count:
            raise DatasetFormatError("Label section does not match records")
        labels = np.frombuffer(
            payload, dtype="<f8", count=count, offset=offset
        ).astype(np.float64)
    return Dataset(scenario, channels, labels)


def write_dataset(path, dataset: Dataset) -> None:
    atomic_write(Path(path), encode(dataset))
    logging.info(
        f"Wrote {len(dataset)} samples with dimensions {dataset.dims} "
        f"to {path}"
    )


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        dataset = decode(fh.read())
    labelled = "" if dataset.labels is None else " (labelled)"
    logging.info(
        f"Loaded {len(dataset)} samples with dimensions {dataset.dims} "
        f"from {path}{labelled}"
    )
    return dataset
