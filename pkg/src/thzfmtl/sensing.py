"""Beamspace dictionary, analog precoder and pilot observations."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, steering_vector
from .system import SystemConfig


class Regime(enum.Enum):
    OVERDETERMINED = "overdetermined"
    COMPRESSED = "compressed"


@dataclass(frozen=True)
class SensingEnsemble:
    """Dictionary ``F`` (N_T x N), precoder ``B`` (N_RF x N_T) and ``A = B F``."""

    dictionary: np.ndarray
    grid_angles: np.ndarray
    precoder: np.ndarray
    measurement: np.ndarray
    grid_step: float

    @property
    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.measurement, axis=0)


@dataclass
class PilotObservation:
    """Received pilots, shape ``(K, M, J)``; ``J = N_T`` or ``N_RF`` by regime."""

    signals: np.ndarray
    noise_variance: float
    regime: Regime


def build_dictionary(n_antennas: int, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Overcomplete DFT dictionary on the grid ``(2n - N - 1) / N``, n = 1..N."""
    if grid_size < n_antennas:
        raise ValueError("grid_size must be at least n_antennas")
    n = np.arange(1, grid_size + 1)
    angles = (2 * n - grid_size - 1) / grid_size
    return steering_vector(angles, n_antennas).T, angles


def build_precoder(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    phases = rng.uniform(-np.pi / 2, np.pi / 2, size=(cfg.num_rf_chains, cfg.num_tx_antennas))
    return np.exp(1j * phases) / np.sqrt(cfg.num_tx_antennas)


def build_ensemble(cfg: SystemConfig, rng: np.random.Generator) -> SensingEnsemble:
    F, angles = build_dictionary(cfg.num_tx_antennas, cfg.grid_size)
    B = build_precoder(cfg, rng)
    return SensingEnsemble(F, angles, B, B @ F, 2.0 / cfg.grid_size)


def dirichlet_sinc(a, n: int):
    """``sin(n*pi*a/2) / sin(pi*a/2)``, continuous at the zeros of the denominator."""
    a = np.asarray(a, dtype=float)
    half = np.pi * a / 2
    den = np.sin(half)
    singular = np.abs(den) < 1e-12
    safe = np.where(singular, 1.0, den)
    value = np.sin(n * half) / safe
    limit = n * np.cos(n * half) / np.cos(half)
    out = np.where(singular, limit, value)
    return out[()] if out.ndim == 0 else out


def angle_domain_transform(h: np.ndarray, dictionary: np.ndarray) -> np.ndarray:
    h = np.asarray(h)
    if h.shape[-1] != dictionary.shape[0]:
        raise ValueError(f"channel length {h.shape[-1]} does not match dictionary "
                         f"rows {dictionary.shape[0]}")
    return h @ dictionary.conj()


def orthogonal_pilots(n_antennas: int) -> np.ndarray:
    """Unitary DFT pilot beamformer with ``J = N_T`` orthogonal beams."""
    idx = np.arange(n_antennas)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n_antennas) / np.sqrt(n_antennas)


def snr_noise_variance(clean: np.ndarray, snr_db: float) -> float:
    """Noise variance for ``snr_db`` relative to the mean power of ``clean``."""
    if np.isposinf(snr_db):
        return 0.0
    power = float(np.mean(np.abs(clean) ** 2))
    return power / 10 ** (snr_db / 10)


def complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    if variance == 0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _as_channels(channel) -> np.ndarray:
    if isinstance(channel, ChannelRealization):
        return channel.channels
    return np.asarray(channel)


def observe_full_pilots(channel, pilot_beamformer: np.ndarray, rng: np.random.Generator,
                        noise_variance: float) -> PilotObservation:
    H = _as_channels(channel)
    clean = H @ pilot_beamformer.T
    y = clean + complex_noise(rng, clean.shape, noise_variance)
    return PilotObservation(y, float(noise_variance), Regime.OVERDETERMINED)


def observe_compressed(channel, ensemble: SensingEnsemble, rng: np.random.Generator,
                       noise_variance: float) -> PilotObservation:
    """``y = B h + n`` with ``J = N_RF`` pilots per subcarrier."""
    H = _as_channels(channel)
    clean = H @ ensemble.precoder.T
    y = clean + complex_noise(rng, clean.shape, noise_variance)
    return PilotObservation(y, float(noise_variance), Regime.COMPRESSED)
