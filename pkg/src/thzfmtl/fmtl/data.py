"""Per-user datasets labelled by beamspace support alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import generate_channel, user_sector
from ..estimators import bsa_user
from ..sensing import SensingEnsemble, complex_noise, snr_noise_variance
from ..system import SystemConfig, subcarrier_frequencies


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label_channel: np.ndarray
    label_support: np.ndarray


def observation_features(y: np.ndarray) -> np.ndarray:
    """Stack ``Re``, ``Im`` and phase of ``y`` into a trailing axis of size 3."""
    y = np.asarray(y)
    return np.stack([y.real, y.imag, np.angle(y)], axis=-1)


def channel_label(h: np.ndarray) -> np.ndarray:
    return np.concatenate([h.real, h.imag], axis=-1)


def channel_from_label(label: np.ndarray) -> np.ndarray:
    half = label.shape[-1] // 2
    return label[..., :half] + 1j * label[..., half:]


@dataclass
class LocalDataset:
    """Samples held by one user, as parallel arrays over the sample axis.

    ``true_channel`` and ``true_doas`` keep the ground truth behind each
    sample for evaluation; ``subcarrier`` is the 0-based subcarrier index.
    """

    user_id: int
    features: np.ndarray
    label_channel: np.ndarray
    label_support: np.ndarray
    true_channel: np.ndarray
    true_doas: np.ndarray
    subcarrier: np.ndarray
    is_train: np.ndarray
    doa_sector: tuple
    train_fraction: float = 0.8

    def __len__(self):
        return self.features.shape[0]

    def __getitem__(self, i) -> Sample:
        return Sample(self.features[i], self.label_channel[i], self.label_support[i])

    @property
    def samples(self) -> list[Sample]:
        return [self[i] for i in range(len(self))]

    def subset(self, index) -> "LocalDataset":
        return LocalDataset(
            self.user_id, self.features[index], self.label_channel[index],
            self.label_support[index], self.true_channel[index], self.true_doas[index],
            self.subcarrier[index], self.is_train[index], self.doa_sector, self.train_fraction)

    def train(self) -> "LocalDataset":
        return self.subset(self.is_train)

    def validation(self) -> "LocalDataset":
        return self.subset(~self.is_train)


def pool(datasets, user_id: int = 0) -> LocalDataset:
    """Concatenate datasets, e.g. for centralised training."""
    datasets = list(datasets)
    cat = lambda name: np.concatenate([getattr(d, name) for d in datasets])
    lo = min(d.doa_sector[0] for d in datasets)
    hi = max(d.doa_sector[1] for d in datasets)
    return LocalDataset(user_id, cat("features"), cat("label_channel"), cat("label_support"),
                        cat("true_channel"), cat("true_doas"), cat("subcarrier"),
                        cat("is_train"), (lo, hi), datasets[0].train_fraction)


def build_dataset(cfg: SystemConfig, ensemble: SensingEnsemble, user_id: int, V: int, G: int,
                  snr_levels, rng: np.random.Generator, doa_sector=None,
                  train_fraction: float = 0.8) -> LocalDataset:
    """Generate ``3 M V G``-style samples for user ``user_id`` (1-based).

    For each of ``V`` channel draws (DoAs inside the user's sector) the
    labels come from BSA on the noiseless compressed observation; the
    features are ``G`` noisy copies of that observation at every SNR level,
    one sample per subcarrier. The train/validation split assigns whole
    channel realizations, a fraction ``train_fraction`` of them to training.
    """
    snr_levels = list(snr_levels)
    if not snr_levels:
        raise ValueError("snr_levels must not be empty")
    if V < 1 or G < 1:
        raise ValueError("V and G must be at least 1")
    if doa_sector is None:
        doa_sector = user_sector(user_id - 1, cfg.num_users)
    one = cfg.replace(num_users=1)
    freqs = subcarrier_frequencies(cfg)
    M, L = cfg.num_subcarriers, cfg.num_paths
    per_channel = len(snr_levels) * G * M
    D = V * per_channel
    feats = np.empty((D, cfg.num_rf_chains, 3))
    lab_h = np.empty((D, 2 * cfg.num_tx_antennas))
    lab_x = np.empty((D, cfg.grid_size))
    true_h = np.empty((D, cfg.num_tx_antennas), dtype=complex)
    true_doas = np.empty((D, L))
    sub = np.tile(np.arange(M), V * len(snr_levels) * G)

    for v in range(V):
        real = generate_channel(one, rng, doa_sector)
        h = real.channels[0]
        clean = h @ ensemble.precoder.T
        est = bsa_user(clean, ensemble, freqs, cfg.carrier_freq_hz, L)
        rows = slice(v * per_channel, (v + 1) * per_channel)
        reps = len(snr_levels) * G
        lab_h[rows] = np.tile(channel_label(est.channels), (reps, 1))
        lab_x[rows] = np.tile(np.abs(est.coefficients), (reps, 1))
        true_h[rows] = np.tile(h, (reps, 1))
        true_doas[rows] = real.physical_doas[0]
        noisy = []
        for snr in snr_levels:
            var = snr_noise_variance(clean, snr)
            for _ in range(G):
                noisy.append(clean + complex_noise(rng, clean.shape, var))
        feats[rows] = observation_features(np.concatenate(noisy))

    # split by channel realization so validation channels are never seen in training
    n_train = min(max(int(round(train_fraction * V)), 1), V - 1) if V > 1 else V
    train_v = np.zeros(V, dtype=bool)
    train_v[rng.permutation(V)[:n_train]] = True
    is_train = np.repeat(train_v, per_channel)
    return LocalDataset(user_id, feats, lab_h, lab_x, true_h, true_doas, sub, is_train,
                        tuple(doa_sector), train_fraction)


def imbalanced_counts(total: int, num_users: int, rng: np.random.Generator,
                      low: float = 0.7, high: float = 1.3, max_tries: int = 1000) -> list[int]:
    """Split ``total`` into ``num_users`` integer shares ``zeta_k * total / K``.

    The ``zeta_k`` are uniform in ``[low, high]`` and rescaled to sum to
    ``K``; draws that leave the range after rescaling are rejected.
    """
    for _ in range(max_tries):
        zeta = rng.uniform(low, high, size=num_users)
        zeta *= num_users / zeta.sum()
        if zeta.min() >= low and zeta.max() <= high:
            break
    shares = zeta * total / num_users
    counts = np.floor(shares).astype(int)
    order = np.argsort(-(shares - counts), kind="stable")
    counts[order[:total - counts.sum()]] += 1
    counts = np.maximum(counts, 1)
    return counts.tolist()
