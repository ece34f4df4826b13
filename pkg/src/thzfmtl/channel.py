"""Wideband THz channel with beam-split.

Each path has a frequency-independent physical direction (sine-space), but
the array sees it at a subcarrier-dependent spatial direction
``(f_m / f_c) * physical``. Channels are stored as ``(K, M, N_T)`` arrays.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .system import SystemConfig, subcarrier_frequencies

NLOS_GAIN_RANGE = (0.1, 0.4)
MAX_DELAY_S = 20e-9

_MAGIC = b"THZCHAN\x00"
_VERSION = 1


@dataclass(frozen=True)
class PhysicalPath:
    physical_doa: float
    gain: complex
    delay_s: float

    def __post_init__(self):
        if not -1.0 <= self.physical_doa < 1.0:
            raise ValueError("physical_doa must lie in [-1, 1)")
        if self.delay_s < 0:
            raise ValueError("delay_s must be non-negative")


@dataclass
class ChannelRealization:
    """Ground truth for one drop of ``K`` users.

    Attributes
    ----------
    channels : ndarray, complex, shape (K, M, N_T)
    physical_doas, gains, delays : ndarray, shape (K, L)
    spatial_doas : ndarray, shape (K, M, L)
    frequencies : ndarray, shape (M,)
    carrier_freq_hz : float
    """

    channels: np.ndarray
    physical_doas: np.ndarray
    gains: np.ndarray
    delays: np.ndarray
    spatial_doas: np.ndarray
    frequencies: np.ndarray
    carrier_freq_hz: float

    @property
    def shape(self):
        return self.channels.shape

    def path(self, k: int, l: int) -> PhysicalPath:
        return PhysicalPath(float(self.physical_doas[k, l]), complex(self.gains[k, l]),
                            float(self.delays[k, l]))

    @property
    def paths(self) -> list[list[PhysicalPath]]:
        K, L = self.physical_doas.shape
        return [[self.path(k, l) for l in range(L)] for k in range(K)]


def steering_vector(doa, n_antennas: int) -> np.ndarray:
    """ULA response ``(1/sqrt(n)) exp(-j*pi*i*doa)`` for half-wavelength spacing.

    ``doa`` may be an array; the antenna axis is then appended last.
    """
    if n_antennas < 1:
        raise ValueError("n_antennas must be positive")
    doa = np.asarray(doa, dtype=float)
    idx = np.arange(n_antennas)
    return np.exp(-1j * np.pi * doa[..., None] * idx) / np.sqrt(n_antennas)


def spatial_doa(physical_doa, f_m, f_c):
    if np.any(np.asarray(f_m) <= 0) or f_c <= 0:
        raise ValueError("frequencies must be positive")
    return np.asarray(f_m) / f_c * physical_doa


def channel_from_paths(physical_doas, gains, delays, frequencies, carrier_freq_hz,
                       n_antennas) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the multipath sum for arrays of shape ``(K, L)``.

    Returns ``(channels, spatial_doas)`` with shapes ``(K, M, N_T)`` and
    ``(K, M, L)``.
    """
    physical_doas = np.atleast_2d(physical_doas)
    gains = np.atleast_2d(gains)
    delays = np.atleast_2d(delays)
    L = physical_doas.shape[1]
    freqs = np.asarray(frequencies, dtype=float)
    theta = freqs[None, :, None] / carrier_freq_hz * physical_doas[:, None, :]
    phase = np.exp(-2j * np.pi * delays[:, None, :] * freqs[None, :, None])
    weights = np.sqrt(n_antennas / L) * gains[:, None, :] * phase  # (K, M, L)
    arr = steering_vector(theta, n_antennas)  # (K, M, L, N_T)
    return np.einsum("kml,kmln->kmn", weights, arr), theta


def user_sector(k: int, num_users: int) -> tuple[float, float]:
    """Sine-space sector of user ``k`` (0-based) for non-i.i.d. partitions."""
    width = 2.0 / num_users
    return (-1.0 + width * k, -1.0 + width * (k + 1))


def _check_sector(sector):
    lo, hi = map(float, sector)
    if not (-1.0 <= lo < hi <= 1.0):
        raise ValueError(f"invalid DoA sector {sector!r}; need -1 <= lo < hi <= 1")
    return lo, hi


def generate_channel(cfg: SystemConfig, rng: np.random.Generator,
                     doa_sector=None) -> ChannelRealization:
    """Draw one channel realization for all users.

    ``doa_sector`` is either one ``(lo, hi)`` interval shared by every user,
    a sequence of ``K`` intervals (one per user), or ``None`` for ``[-1, 1)``.
    Path 1 is the LoS path with unit gain magnitude; the others have
    magnitudes uniform in ``NLOS_GAIN_RANGE``. Phases are uniform, delays
    uniform in ``[0, MAX_DELAY_S]``.
    """
    K, L = cfg.num_users, cfg.num_paths
    if doa_sector is None:
        sectors = [(-1.0, 1.0)] * K
    elif np.ndim(doa_sector) == 1:
        sectors = [_check_sector(doa_sector)] * K
    else:
        sectors = [_check_sector(s) for s in doa_sector]
        if len(sectors) != K:
            raise ValueError("need one DoA sector per user")
    lo = np.array([s[0] for s in sectors])[:, None]
    hi = np.array([s[1] for s in sectors])[:, None]
    doas = lo + (hi - lo) * rng.random((K, L))
    mags = np.empty((K, L))
    mags[:, 0] = 1.0
    mags[:, 1:] = rng.uniform(*NLOS_GAIN_RANGE, size=(K, L - 1))
    gains = mags * np.exp(1j * rng.uniform(-np.pi, np.pi, size=(K, L)))
    delays = rng.uniform(0.0, MAX_DELAY_S, size=(K, L))
    freqs = subcarrier_frequencies(cfg)
    channels, theta = channel_from_paths(doas, gains, delays, freqs,
                                         cfg.carrier_freq_hz, cfg.num_tx_antennas)
    return ChannelRealization(channels, doas, gains, delays, theta, freqs,
                              cfg.carrier_freq_hz)


def save_realization(real: ChannelRealization, path) -> None:
    """Binary cache: magic, version, JSON header, then row-major (re, im) float64 pairs."""
    header = {
        "dims": list(real.channels.shape),
        "num_paths": int(real.physical_doas.shape[1]),
        "carrier_freq_hz": real.carrier_freq_hz,
        "frequencies": real.frequencies.tolist(),
        "physical_doas": real.physical_doas.tolist(),
        "gains_re": real.gains.real.tolist(),
        "gains_im": real.gains.imag.tolist(),
        "delays": real.delays.tolist(),
        "dtype": "<f8",
        "order": "C",
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(real.channels, dtype="<c16").view("<f8")
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", _VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload.tobytes())


def load_realization(path) -> ChannelRealization:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a channel realization file")
    version, hlen = struct.unpack_from("<HI", data, 8)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    start = 8 + struct.calcsize("<HI")
    header = json.loads(data[start:start + hlen])
    dims = tuple(header["dims"])
    flat = np.frombuffer(data[start + hlen:], dtype="<f8")
    if flat.size != 2 * int(np.prod(dims)):
        raise ValueError(f"{path}: payload size does not match header dims")
    channels = flat.view("<c16").reshape(dims).copy()
    doas = np.array(header["physical_doas"], dtype=float)
    freqs = np.array(header["frequencies"], dtype=float)
    fc = float(header["carrier_freq_hz"])
    return ChannelRealization(
        channels=channels,
        physical_doas=doas,
        gains=np.array(header["gains_re"]) + 1j * np.array(header["gains_im"]),
        delays=np.array(header["delays"], dtype=float),
        spatial_doas=freqs[None, :, None] / fc * doas[:, None, :],
        frequencies=freqs,
        carrier_freq_hz=fc,
    )
