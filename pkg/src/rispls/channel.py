"""
Scenario geometry, channel synthesis and effective CSI.

Positions live in a plane. The BS carries an N_T element half-wavelength
ULA, the RIS has L reflecting elements and every receiver has a single
antenna. Direct links are Rayleigh faded and everything that touches the
RIS is Rician faded with a line-of-sight part built from array responses.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from rispls.errors import ConfigurationError, DimensionError
from rispls.numerics import (
    ComplexPair,
    DiffTensor,
    broadcast_to,
    cos,
    reshape,
    sin,
)

# Streams drawn by sample_scenario(), one per random quantity. Keeping them
# apart means that changing K leaves every Eve draw alone and vice versa.
STREAM_LU_POSITIONS = 0
STREAM_EVE_POSITIONS = 1
STREAM_H = 2
STREAM_H_B = 3
STREAM_H_R = 4
STREAM_F_B = 5
STREAM_F_R = 6

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class ScenarioConfig:
    n_t: int = 4
    l: int = 4  # noqa: E741
    k: int = 2
    m: int = 2
    bs_pos: tuple[float, float] = (0.0, 0.0)
    ris_pos: tuple[float, float] = (10.0, 0.0)
    lu_center: tuple[float, float] = (50.0, 50.0)
    lu_radius: float = 10.0
    eve_center: tuple[float, float] = (25.0, 25.0)
    eve_radius: float = 10.0
    rho_db: float = -20.0
    alpha: float = 2.8
    rician_beta_db: float = 3.0
    carrier_hz: float = 1.8e9
    noise_dbm: float = -80.0
    eve_noise_dbm: float = -80.0
    p_max_dbm: float = 30.0
    p_c_watt: float = 0.5
    seed: int = 0

    # Linear-scale values, derived once.
    rho: float = field(init=False, repr=False)
    rician_beta: float = field(init=False, repr=False)
    sigma2_w: float = field(init=False, repr=False)
    sigma2_e_w: float = field(init=False, repr=False)
    p_max_w: float = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("n_t", "l", "k", "m"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(
                    f"Scenario count {name} must be at least 1, "
                    f"not {getattr(self, name)}"
                )
            setattr(self, name, int(getattr(self, name)))
        for name in ("lu_radius", "eve_radius"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"Scenario {name} must be positive")
        if not math.isfinite(self.p_max_dbm):
            raise ConfigurationError("p_max_dbm must be finite")
        if self.p_c_watt < 0:
            raise ConfigurationError("p_c_watt must not be negative")
        self.bs_pos = tuple(float(v) for v in self.bs_pos)
        self.ris_pos = tuple(float(v) for v in self.ris_pos)
        self.lu_center = tuple(float(v) for v in self.lu_center)
        self.eve_center = tuple(float(v) for v in self.eve_center)

        self.rho = db_to_linear(self.rho_db)
        self.rician_beta = (
            math.inf
            if math.isinf(self.rician_beta_db)
            else db_to_linear(self.rician_beta_db)
        )
        self.sigma2_w = dbm_to_watt(self.noise_dbm)
        self.sigma2_e_w = dbm_to_watt(self.eve_noise_dbm)
        self.p_max_w = dbm_to_watt(self.p_max_dbm)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.n_t, self.l, self.k, self.m

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def to_dict(self) -> dict:
        """The user-facing fields, suitable for a YAML echo."""
        d = asdict(self)
        for name in ("rho", "rician_beta", "sigma2_w", "sigma2_e_w"):
            d.pop(name)
        d.pop("p_max_w")
        for name in ("bs_pos", "ris_pos", "lu_center", "eve_center"):
            d[name] = list(d[name])
        return d

    def replace(self, **changes) -> "ScenarioConfig":
        d = self.to_dict()
        d.update(changes)
        return ScenarioConfig(**d)


@dataclass
class ChannelRealization:
    """
    One sample of CSI. Rows index receivers: h_b[k] is the BS to LU k
    vector and h_r[k] the RIS to LU k vector; H is RIS by BS antennas.
    """

    H: np.ndarray
    h_b: np.ndarray
    h_r: np.ndarray
    f_b: np.ndarray
    f_r: np.ndarray
    sigma2: np.ndarray
    sigma2_e: np.ndarray
    p_max: float
    p_c: float

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=np.complex128)
        l, n_t = self.H.shape
        self.h_b = np.asarray(self.h_b, dtype=np.complex128).reshape(-1, n_t)
        k = self.h_b.shape[0]
        self.h_r = np.asarray(self.h_r, dtype=np.complex128).reshape(k, l)
        self.f_b = np.asarray(self.f_b, dtype=np.complex128).reshape(-1, n_t)
        m = self.f_b.shape[0]
        self.f_r = np.asarray(self.f_r, dtype=np.complex128).reshape(m, l)
        self.sigma2 = np.broadcast_to(
            np.asarray(self.sigma2, dtype=np.float64), (k,)
        ).copy()
        self.sigma2_e = np.broadcast_to(
            np.asarray(self.sigma2_e, dtype=np.float64), (m,)
        ).copy()
        self.p_max = float(self.p_max)
        self.p_c = float(self.p_c)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        l, n_t = self.H.shape
        return n_t, l, self.h_b.shape[0], self.f_b.shape[0]


@dataclass
class ChannelBatch:
    """Realizations of one shape stacked along a leading sample axis."""

    H: np.ndarray
    h_b: np.ndarray
    h_r: np.ndarray
    f_b: np.ndarray
    f_r: np.ndarray
    sigma2: np.ndarray
    sigma2_e: np.ndarray
    p_max: np.ndarray
    p_c: np.ndarray

    @classmethod
    def from_realizations(
        cls, realizations: Sequence[ChannelRealization]
    ) -> "ChannelBatch":
        if not realizations:
            raise DimensionError("A channel batch needs at least one sample")
        dims = realizations[0].dims
        for i, ch in enumerate(realizations):
            if ch.dims != dims:
                raise DimensionError(
                    f"Sample {i} has dimensions {ch.dims}, expected {dims}"
                )
        return cls(
            **{
                name: np.stack([getattr(ch, name) for ch in realizations])
                for name in (
                    "H",
                    "h_b",
                    "h_r",
                    "f_b",
                    "f_r",
                    "sigma2",
                    "sigma2_e",
                )
            },
            p_max=np.array([ch.p_max for ch in realizations]),
            p_c=np.array([ch.p_c for ch in realizations]),
        )

    @property
    def dims(self) -> tuple[int, int, int, int]:
        _, l, n_t = self.H.shape
        return n_t, l, self.h_b.shape[1], self.f_b.shape[1]

    def __len__(self) -> int:
        return self.H.shape[0]

    def realization(self, i: int) -> ChannelRealization:
        return ChannelRealization(
            H=self.H[i],
            h_b=self.h_b[i],
            h_r=self.h_r[i],
            f_b=self.f_b[i],
            f_r=self.f_r[i],
            sigma2=self.sigma2[i],
            sigma2_e=self.sigma2_e[i],
            p_max=self.p_max[i],
            p_c=self.p_c[i],
        )

    def realizations(self) -> list[ChannelRealization]:
        return [self.realization(i) for i in range(len(self))]

    def select(self, idx) -> "ChannelBatch":
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        return ChannelBatch(
            **{
                name: getattr(self, name)[idx]
                for name in self.__dataclass_fields__
            }
        )

    def repeat(self, times: int) -> "ChannelBatch":
        """Each sample repeated times in a row (sample-major)."""
        return ChannelBatch(
            **{
                name: np.repeat(getattr(self, name), times, axis=0)
                for name in self.__dataclass_fields__
            }
        )

    def with_power(self, p_max_w: float) -> "ChannelBatch":
        fields = {
            name: getattr(self, name) for name in self.__dataclass_fields__
        }
        fields["p_max"] = np.full(len(self), float(p_max_w))
        return ChannelBatch(**fields)


def as_batch(ch) -> ChannelBatch:
    if isinstance(ch, ChannelBatch):
        return ch
    if isinstance(ch, ChannelRealization):
        return ChannelBatch.from_realizations([ch])
    return ChannelBatch.from_realizations(list(ch))


def steering_vector(n: int, phi: float, spacing: float = 0.5) -> np.ndarray:
    """
    ULA response. Entry i is exp(-j 2 pi spacing i sin(phi)) where spacing
    is the element separation in wavelengths.
    """
    if n < 0:
        raise DimensionError(f"Array size must not be negative: {n}")
    i = np.arange(n)
    return np.exp(-2j * np.pi * spacing * i * np.sin(phi))


def path_gain(rho: float, distance, alpha: float):
    """Amplitude gain sqrt(rho d^-alpha)."""
    return np.sqrt(rho * np.asarray(distance, dtype=np.float64) ** -alpha)


def bearing(src: Sequence[float], dst: Sequence[float]) -> float:
    return math.atan2(dst[1] - src[1], dst[0] - src[0])


def distance(src: Sequence[float], dst: Sequence[float]) -> float:
    return math.hypot(dst[0] - src[0], dst[1] - src[1])


def sample_disk(
    rng: np.random.Generator,
    center: Sequence[float],
    radius: float,
    count: int,
) -> np.ndarray:
    """count points uniform over a disk, as a (count, 2) array."""
    r = radius * np.sqrt(rng.uniform(size=count))
    theta = rng.uniform(0.0, 2 * np.pi, size=count)
    return np.stack(
        [center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)],
        axis=-1,
    )


def rayleigh(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) entries."""
    return (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ) / np.sqrt(2.0)


def rician(
    rng: np.random.Generator, los: np.ndarray, beta: float
) -> np.ndarray:
    """Unit-gain Rician fading around a line-of-sight component."""
    if math.isinf(beta):
        return los.astype(np.complex128)
    return np.sqrt(beta / (beta + 1)) * los + np.sqrt(
        1 / (beta + 1)
    ) * rayleigh(rng, los.shape)


def _stream(seed: np.random.SeedSequence, index: int) -> np.random.Generator:
    child = np.random.SeedSequence(
        seed.entropy, spawn_key=tuple(seed.spawn_key) + (index,)
    )
    return np.random.Generator(np.random.Philox(child))


def _as_seed_sequence(rng) -> np.random.SeedSequence:
    if isinstance(rng, np.random.SeedSequence):
        return rng
    return np.random.SeedSequence(int(rng))


def sample_scenario(cfg: ScenarioConfig, rng) -> ChannelRealization:
    """
    Draw one realization. rng is a SeedSequence (or an integer seed); each
    random quantity reads its own child stream.
    """
    seed = _as_seed_sequence(rng)
    n_t, n_l, k, m = cfg.dims

    lu_pos = sample_disk(
        _stream(seed, STREAM_LU_POSITIONS), cfg.lu_center, cfg.lu_radius, k
    )
    eve_pos = sample_disk(
        _stream(seed, STREAM_EVE_POSITIONS),
        cfg.eve_center,
        cfg.eve_radius,
        m,
    )

    # The RIS sees the BS at the same planar bearing the BS sees the RIS.
    angle = bearing(cfg.bs_pos, cfg.ris_pos)
    los_h = np.outer(
        steering_vector(n_l, angle), np.conj(steering_vector(n_t, angle))
    )
    H = path_gain(
        cfg.rho, distance(cfg.bs_pos, cfg.ris_pos), cfg.alpha
    ) * rician(_stream(seed, STREAM_H), los_h, cfg.rician_beta)

    def direct(positions, stream):
        gains = path_gain(
            cfg.rho,
            [distance(cfg.bs_pos, p) for p in positions],
            cfg.alpha,
        )
        draws = rayleigh(_stream(seed, stream), (len(positions), n_t))
        return gains[:, None] * draws

    def reflected(positions, stream):
        gen = _stream(seed, stream)
        rows = []
        for p in positions:
            los = steering_vector(n_l, bearing(cfg.ris_pos, p))
            gain = path_gain(cfg.rho, distance(cfg.ris_pos, p), cfg.alpha)
            rows.append(gain * rician(gen, los, cfg.rician_beta))
        return np.array(rows, dtype=np.complex128).reshape(-1, n_l)

    return ChannelRealization(
        H=H,
        h_b=direct(lu_pos, STREAM_H_B),
        h_r=reflected(lu_pos, STREAM_H_R),
        f_b=direct(eve_pos, STREAM_F_B),
        f_r=reflected(eve_pos, STREAM_F_R),
        sigma2=np.full(k, cfg.sigma2_w),
        sigma2_e=np.full(m, cfg.sigma2_e_w),
        p_max=cfg.p_max_w,
        p_c=cfg.p_c_watt,
    )


def sample_seed(seed: int, index: int) -> np.random.SeedSequence:
    """The seed of sample index in a dataset generated from seed."""
    return np.random.SeedSequence(int(seed), spawn_key=(int(index),))


def generate(
    cfg: ScenarioConfig, count: int, seed: int | None = None
) -> ChannelBatch:
    seed = cfg.seed if seed is None else seed
    return ChannelBatch.from_realizations(
        [sample_scenario(cfg, sample_seed(seed, i)) for i in range(count)]
    )


def _complex(a: np.ndarray) -> ComplexPair:
    return ComplexPair(DiffTensor(a.real.copy()), DiffTensor(a.imag.copy()))


def effective_csi(ch, phi) -> tuple[ComplexPair, ComplexPair]:
    """
    Effective CSI rows h_b + H^H diag(e^{-j phi}) h_r for every LU and the
    analogous rows for every Eve, each (B, count, N_T). phi is (B, L) and
    may require gradients.
    """
    ch = as_batch(ch)
    n_t, n_l, k, m = ch.dims
    b = len(ch)
    phi = phi if isinstance(phi, DiffTensor) else DiffTensor(phi)
    if phi.shape != (b, n_l):
        raise DimensionError(
            f"Phase shifts have shape {phi.shape}, expected {(b, n_l)}"
        )
    c = reshape(cos(phi), (b, 1, n_l))
    s = reshape(sin(phi), (b, 1, n_l))
    h_re = DiffTensor(ch.H.real)
    h_im = DiffTensor(ch.H.imag)

    def compose(direct: np.ndarray, refl: np.ndarray) -> ComplexPair:
        rows = direct.shape[1]
        cr = broadcast_to(c, (b, rows, n_l))
        sr = broadcast_to(s, (b, rows, n_l))
        rr = DiffTensor(refl.real)
        ri = DiffTensor(refl.imag)
        u_re = cr * rr + sr * ri
        u_im = cr * ri - sr * rr
        base = _complex(direct)
        return ComplexPair(
            base.re + u_re @ h_re + u_im @ h_im,
            base.im + u_im @ h_re - u_re @ h_im,
        )

    return compose(ch.h_b, ch.h_r), compose(ch.f_b, ch.f_r)
