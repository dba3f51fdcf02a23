"""
Rates, secrecy rates, SEE and the unsupervised training loss.

Everything here works on a ChannelBatch and a TransmitDesign with a
leading sample axis. rate and leakage tensors are differentiable; see()
is evaluation only and returns plain arrays.
"""

from dataclasses import dataclass

import numpy as np

from rispls.channel import as_batch, effective_csi
from rispls.errors import DimensionError, TrainingError
from rispls.numerics import (
    ComplexPair,
    DiffTensor,
    abs2,
    as_tensor,
    cgram,
    expand_last,
    log2,
    max_with_argmax,
    mean,
    no_grad,
    reciprocal,
    sum,
)

TWO_PI = 2 * np.pi

# Relative slack allowed on the total power budget.
POWER_TOLERANCE = 1e-9


@dataclass
class TransmitDesign:
    """
    phi (B, L) phase shifts, w (B, K, N_T) beamformers and z (B, M, N_T)
    artificial noise vectors.
    """

    phi: DiffTensor
    w: ComplexPair
    z: ComplexPair

    def __post_init__(self):
        self.phi = as_tensor(self.phi)
        b = self.phi.shape[0]
        if self.w.shape[0] != b or self.z.shape[0] != b:
            raise DimensionError(
                f"Design sample counts differ: phi {self.phi.shape}, "
                f"w {self.w.shape}, z {self.z.shape}"
            )
        if self.w.shape[-1] != self.z.shape[-1]:
            raise DimensionError(
                f"Beamformer width {self.w.shape} differs from AN width "
                f"{self.z.shape}"
            )

    @classmethod
    def from_arrays(cls, phi, w, z) -> "TransmitDesign":
        return cls(
            DiffTensor(np.asarray(phi, dtype=np.float64)),
            ComplexPair.from_numpy(w),
            ComplexPair.from_numpy(z),
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.phi.values.copy(), self.w.numpy(), self.z.numpy()

    def detach(self) -> "TransmitDesign":
        return TransmitDesign.from_arrays(*self.arrays())

    def __len__(self) -> int:
        return self.phi.shape[0]

    def power(self) -> np.ndarray:
        """Total transmit power per sample."""
        _, w, z = self.arrays()
        return np.sum(np.abs(w) ** 2, axis=(1, 2)) + np.sum(
            np.abs(z) ** 2, axis=(1, 2)
        )

    def feasible(self, p_max) -> np.ndarray:
        """Per-sample check of the power budget and the phase range."""
        phi = self.phi.values
        in_range = np.all((phi >= 0) & (phi < TWO_PI), axis=1)
        budget = np.asarray(p_max, dtype=np.float64) * (1 + POWER_TOLERANCE)
        return (self.power() <= budget) & in_range


@dataclass
class LinkRates:
    rate: DiffTensor  # (B, K)
    leakage: DiffTensor  # (B, M, K)
    power: DiffTensor  # (B,)


@dataclass
class SeeBreakdown:
    rate: np.ndarray
    leakage: np.ndarray
    secrecy: np.ndarray
    total_power: np.ndarray
    see: np.ndarray


def _last_sum(x: DiffTensor) -> DiffTensor:
    """Sum over the last axis; an empty axis sums to zero."""
    if x.shape[-1] == 0:
        return DiffTensor(np.zeros(x.shape[:-1]))
    return sum(x, axis=-1)


def _check_design(ch, design: TransmitDesign) -> None:
    n_t, n_l, k, m = ch.dims
    b = len(ch)
    expected = {
        "phi": (b, n_l),
        "w": (b, k, n_t),
        "z": (b, m, n_t),
    }
    actual = {
        "phi": design.phi.shape,
        "w": design.w.shape,
        "z": design.z.shape,
    }
    for name in expected:
        if tuple(actual[name]) != expected[name]:
            raise DimensionError(
                f"Design {name} has shape {actual[name]}, "
                f"channel needs {expected[name]}"
            )


def link_rates(ch, design: TransmitDesign) -> LinkRates:
    """LU rates, Eve leakage rates and transmit power, all differentiable."""
    ch = as_batch(ch)
    _check_design(ch, design)
    _, _, k, m = ch.dims
    b = len(ch)
    h_eff, f_eff = effective_csi(ch, design.phi)

    # gain[b, i, j] = |h_i^H w_j|^2
    gain = abs2(cgram(h_eff, design.w))
    eye = np.broadcast_to(np.eye(k), (b, k, k))
    signal = _last_sum(gain * DiffTensor(eye.copy()))
    interference = _last_sum(gain * DiffTensor((1.0 - eye).copy()))
    jamming = _last_sum(abs2(cgram(h_eff, design.z)))
    noise = DiffTensor(ch.sigma2)
    rate = log2(
        1.0 + signal * reciprocal(interference + jamming + noise)
    )

    # eve_gain[b, m, k] = |f_m^H w_k|^2
    eve_gain = abs2(cgram(f_eff, design.w))
    eve_interference = eve_gain @ DiffTensor(np.ones((k, k)) - np.eye(k))
    eve_jamming = expand_last(_last_sum(abs2(cgram(f_eff, design.z))), k)
    eve_noise = DiffTensor(
        np.broadcast_to(ch.sigma2_e[..., None], (b, m, k)).copy()
    )
    leakage = log2(
        1.0
        + eve_gain * reciprocal(eve_interference + eve_jamming + eve_noise)
    )

    power = _last_sum(_last_sum(abs2(design.w))) + _last_sum(
        _last_sum(abs2(design.z))
    )
    return LinkRates(rate, leakage, power)


def rate_lu(ch, design: TransmitDesign, k: int) -> DiffTensor:
    """Rate of LU k for every sample."""
    return link_rates(ch, design).rate[:, k]


def rate_eve(ch, design: TransmitDesign, m: int, k: int) -> DiffTensor:
    """Rate Eve m intercepts from the stream meant for LU k."""
    return link_rates(ch, design).leakage[:, m, k]


def see(ch, design: TransmitDesign) -> SeeBreakdown:
    """Clamped secrecy rates and SEE per sample."""
    ch = as_batch(ch)
    with no_grad():
        links = link_rates(ch, design)
    rate = links.rate.values
    leakage = links.leakage.values
    worst = (
        leakage.max(axis=1) if leakage.shape[1] else np.zeros_like(rate)
    )
    secrecy = np.maximum(0.0, rate - worst)
    total = links.power.values
    consumed = total + ch.p_c
    numerator = secrecy.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(consumed > 0, numerator / consumed, 0.0)
    return SeeBreakdown(rate, leakage, secrecy, total, value)


def soft_see(ch, design: TransmitDesign, gamma: float) -> DiffTensor:
    """
    Per-sample unclamped SEE: sum over LUs of R_k - gamma max_m R_E,m,k,
    divided by the consumed power.
    """
    ch = as_batch(ch)
    links = link_rates(ch, design)
    _, _, k, m = ch.dims
    secrecy = links.rate
    if m and gamma:
        worst, _ = max_with_argmax(links.leakage, axis=1)
        secrecy = secrecy - gamma * worst
    consumed = links.power + DiffTensor(ch.p_c)
    return _last_sum(secrecy) * reciprocal(consumed)


def training_loss(ch, design: TransmitDesign, gamma: float = 0.1):
    """Negative mean soft SEE over the batch."""
    per_sample = soft_see(ch, design, gamma)
    bad = np.flatnonzero(~np.isfinite(per_sample.values))
    if bad.size:
        raise TrainingError(
            f"Non-finite loss for sample {int(bad[0])} of the batch",
            sample=int(bad[0]),
        )
    return -mean(per_sample)
