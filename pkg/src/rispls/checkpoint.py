"""
Model checkpoints.

    magic     4 bytes b"RPHG"
    version   u32
    dims      u32 x 4, the (N_T, L, K, M) the model was trained at
    head      u8 (0 beam_direct, 1 model_based)
    flags     u8 (bit 0 residual_on, bit 1 two_stage_on)
    seed      u64
    config    u32 length, then the ModelConfig as UTF-8 YAML
    params    u32 count, then per parameter:
              u16 name length, name, u8 ndim, u32 x ndim shape, float64 data

Everything is little-endian.
"""

import logging
import struct
from pathlib import Path

import numpy as np
import yaml

from rispls.dataset import atomic_write
from rispls.errors import DatasetFormatError
from rispls.model import ModelConfig, TwoStageHGNN
from rispls.stage2 import HEADS

MAGIC = b"RPHG"
VERSION = 1

_HEADER = struct.Struct("<I4IBBQI")
_COUNT = struct.Struct("<I")
_NAME = struct.Struct("<H")
_NDIM = struct.Struct("<B")


def encode(model: TwoStageHGNN, dims) -> bytes:
    config = yaml.safe_dump(model.cfg.to_dict(), sort_keys=True).encode(
        "utf-8"
    )
    flags = int(model.residual_on) | (int(model.two_stage_on) << 1)
    parts = [
        MAGIC,
        _HEADER.pack(
            VERSION,
            *dims,
            HEADS.index(model.head),
            flags,
            model.seed,
            len(config),
        ),
        config,
        _COUNT.pack(len(model.params)),
    ]
    for name, values in model.params.state_dict().items():
        encoded = name.encode("utf-8")
        parts += [
            _NAME.pack(len(encoded)),
            encoded,
            _NDIM.pack(values.ndim),
            struct.pack(f"<{values.ndim}I", *values.shape),
            values.astype("<f8").tobytes(),
        ]
    return b"".join(parts)


def decode(payload: bytes) -> tuple[TwoStageHGNN, tuple[int, ...]]:
    if payload[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError("Not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    try:
        version, n_t, n_l, k, m, head, flags, seed, cfg_len = (
            _HEADER.unpack_from(payload, offset)
        )
        if version != VERSION:
            raise DatasetFormatError(
                f"Unsupported checkpoint version {version}"
            )
        offset += _HEADER.size
        cfg = ModelConfig(
            **yaml.safe_load(payload[offset : offset + cfg_len])
        )
        offset += cfg_len

        (count,) = _COUNT.unpack_from(payload, offset)
        offset += _COUNT.size
        state = {}
        for _ in range(count):
            (name_len,) = _NAME.unpack_from(payload, offset)
            offset += _NAME.size
            name = payload[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = _NDIM.unpack_from(payload, offset)
            offset += _NDIM.size
            shape = struct.unpack_from(f"<{ndim}I", payload, offset)
            offset += 4 * ndim
            size = int(np.prod(shape))
            state[name] = (
                np.frombuffer(payload, dtype="<f8", count=size, offset=offset)
                .reshape(shape)
                .astype(np.float64)
            )
            offset += 8 * size
    except (struct.error, ValueError, TypeError, yaml.YAMLError) as e:
        if isinstance(e, DatasetFormatError):
            raise
        raise DatasetFormatError(f"Corrupt checkpoint: {e}")
    if head >= len(HEADS):
        raise DatasetFormatError(f"Unknown head kind {head}")

    model = TwoStageHGNN(
        n_t,
        cfg,
        head=HEADS[head],
        seed=seed,
        residual_on=bool(flags & 1),
        two_stage_on=bool(flags & 2),
    )
    model.params.load_state_dict(state)
    return model, (n_t, n_l, k, m)


def save_checkpoint(path, model: TwoStageHGNN, dims) -> None:
    atomic_write(Path(path), encode(model, dims))
    logging.info(
        f"Saved {model.head} checkpoint ({model.parameter_count()} "
        f"parameters) to {path}"
    )


def load_checkpoint(path) -> tuple[TwoStageHGNN, tuple[int, ...]]:
    with open(path, "rb") as fh:
        return decode(fh.read())
