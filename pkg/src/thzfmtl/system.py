"""Scenario configuration, subcarrier grid and seeded random streams."""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml


@dataclass(frozen=True)
class SystemConfig:
    """Scenario constants of a wideband THz massive-MIMO downlink.

    Defaults reproduce the full-scale simulation table (300 GHz carrier,
    15 GHz bandwidth, 128 subcarriers, 1024 antennas, 32 RF chains,
    5 paths, 8 users, 5x overcomplete grid).
    """

    carrier_freq_hz: float = 300e9
    bandwidth_hz: float = 15e9
    num_subcarriers: int = 128
    num_tx_antennas: int = 1024
    num_rf_chains: int = 32
    num_paths: int = 5
    num_users: int = 8
    grid_size: int = 5120
    snr_db: float = 20.0
    seed: int = 0

    def __post_init__(self):
        for name in ("carrier_freq_hz", "bandwidth_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("num_subcarriers", "num_tx_antennas", "num_rf_chains",
                     "num_paths", "num_users", "grid_size"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")
        if self.num_rf_chains >= self.num_tx_antennas:
            raise ValueError("num_rf_chains must be smaller than num_tx_antennas")
        if self.grid_size < self.num_tx_antennas:
            raise ValueError("grid_size must be at least num_tx_antennas")
        if self.bandwidth_hz >= self.carrier_freq_hz:
            raise ValueError("bandwidth_hz must be below carrier_freq_hz")

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def grid_step(self) -> float:
        return 2.0 / self.grid_size


PAPER_PROFILE = SystemConfig()

DESK_PROFILE = SystemConfig(
    num_subcarriers=16,
    num_tx_antennas=64,
    num_rf_chains=8,
    num_paths=3,
    num_users=4,
    grid_size=320,
)

PROFILES = {"paper": PAPER_PROFILE, "desk": DESK_PROFILE}


def subcarrier_frequency(cfg: SystemConfig, m: int) -> float:
    """Frequency of subcarrier ``m`` (1-based), centred on the carrier."""
    M = cfg.num_subcarriers
    if int(m) != m or not 1 <= m <= M:
        raise ValueError(f"subcarrier index must lie in [1, {M}], got {m!r}")
    return cfg.carrier_freq_hz + cfg.bandwidth_hz / M * (m - 1 - (M - 1) / 2)


def subcarrier_frequencies(cfg: SystemConfig) -> np.ndarray:
    M = cfg.num_subcarriers
    m = np.arange(1, M + 1)
    return cfg.carrier_freq_hz + cfg.bandwidth_hz / M * (m - 1 - (M - 1) / 2)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def child_rng(seed: int, name: str, *index: int) -> np.random.Generator:
    """Independent stream identified by ``(seed, name, *index)``.

    Names used across the package: ``"channel"``, ``"noise"``, ``"sensing"``,
    ``"model-init"``, ``"transmission-noise"``, ``"dataset"``, ``"training"``.
    """
    key = (zlib.crc32(name.encode()),) + tuple(int(i) for i in index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def load_config(path, base: SystemConfig = PAPER_PROFILE) -> tuple[SystemConfig, dict]:
    """Read a YAML (or JSON) config file.

    Top-level keys map onto :class:`SystemConfig` fields; anything missing
    keeps the value of ``base``. Nested mappings (``experiment``,
    ``training``) are returned untouched as the second element.
    """
    with open(Path(path)) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    fields = {f.name for f in dataclasses.fields(SystemConfig)}
    scalars = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    sections = {k: v for k, v in raw.items() if isinstance(v, dict)}
    unknown = set(scalars) - fields
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return base.replace(**{k: _coerce(base, k, v) for k, v in scalars.items()}), sections


def _coerce(base, key, value):
    kind = type(getattr(base, key))
    if kind is int and isinstance(value, float) and value.is_integer():
        return int(value)
    return kind(value)
