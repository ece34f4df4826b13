"""Federated (gradient averaging) and centralised training of the two-head model."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import LocalDataset, channel_from_label, pool
from .network import ModelParameters, flatten_features, forward, loss_and_grad, task_losses

log = logging.getLogger(__name__)


class Mode(enum.Enum):
    FMTL = "FMTL"
    CL = "CL"


@dataclass(frozen=True)
class TrainingConfig:
    V: int = 1000
    G: int = 500
    snr_levels: tuple = (15.0, 20.0, 25.0)
    T: int = 100
    learning_rate: float = 0.001
    omega: tuple = (0.8, 0.2)
    hidden: tuple = (256, 256)
    dropout_prob: float = 0.5
    activation: str = "relu"
    batch_size: int | None = None
    snr_delta_db: float = 20.0
    train_fraction: float = 0.8


PAPER_TRAINING = TrainingConfig()
DESK_TRAINING = TrainingConfig(V=50, G=4, T=200, learning_rate=0.03, activation="tanh",
                               batch_size=256)
TRAINING_PROFILES = {"paper": PAPER_TRAINING, "desk": DESK_TRAINING}


@dataclass
class TrainingReport:
    mode: Mode
    iterations: int
    learning_rate: float
    omega: tuple
    train_total: np.ndarray
    train_task1: np.ndarray
    train_task2: np.ndarray
    val_total: np.ndarray
    val_task1: np.ndarray
    val_task2: np.ndarray
    params: ModelParameters | None = None
    trajectory: list = field(default_factory=list)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def noisy_transmit(vector: np.ndarray, snr_delta_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add Gaussian noise with per-element variance ``||v||^2 / (Q 10^(snr/10))``."""
    v = np.asarray(vector, dtype=float)
    if snr_delta_db is None or np.isposinf(snr_delta_db):
        return v.copy()
    power = float(np.dot(v, v)) / v.size
    if power == 0.0:
        return v.copy()
    return v + rng.normal(0.0, np.sqrt(power / 10 ** (snr_delta_db / 10)), size=v.shape)


def _batch(dataset: LocalDataset, batch_size, rng):
    D = len(dataset)
    if D == 0:
        raise ValueError("dataset is empty")
    if batch_size is None or batch_size >= D:
        idx = slice(None)
    else:
        idx = np.sort(rng.choice(D, size=batch_size, replace=False))
    X = flatten_features(dataset.features[idx], dataset.features.shape[1] * 3)
    return X, dataset.label_channel[idx], dataset.label_support[idx]


def local_gradient(params: ModelParameters, dataset: LocalDataset, omega, batch_size=None,
                   rng: np.random.Generator | None = None, with_losses: bool = False):
    """Gradient of ``omega1 L1 + omega2 L2`` on one (mini-)batch of ``dataset``.

    Dropout is active whenever ``rng`` is given and the architecture has a
    non-zero dropout probability.
    """
    X, Y1, Y2 = _batch(dataset, batch_size, rng)
    total, l1, l2, grad = loss_and_grad(params, X, Y1, Y2, omega[0], omega[1], rng)
    if with_losses:
        return grad, (total, l1, l2)
    return grad


def _round(params: ModelParameters, datasets, lr, omega, snr_delta_db, rng,
           batch_size=None, uplink_snr_db=np.inf):
    seed = int(rng.integers(2 ** 63))
    user_rngs = [np.random.Generator(np.random.PCG64(s))
                 for s in np.random.SeedSequence(seed).spawn(len(datasets))]
    theta = params.flat_params
    grads = []
    losses = []
    for ds, urng in zip(datasets, user_rngs):
        local = params.with_params(noisy_transmit(theta, snr_delta_db, urng))
        g, ls = local_gradient(local, ds, omega, batch_size, urng, with_losses=True)
        grads.append(noisy_transmit(g, uplink_snr_db, urng))
        losses.append(ls)
    step = np.mean(grads, axis=0)
    return params.with_params(theta - lr * step), np.mean(losses, axis=0)


def federated_round(params: ModelParameters, datasets, lr: float, omega, snr_delta_db: float,
                    rng: np.random.Generator, batch_size=None,
                    uplink_snr_db: float = np.inf) -> ModelParameters:
    """One synchronous gradient-averaging step.

    Every user receives a noisy copy of the parameters, computes its local
    gradient there, and the server descends along the mean gradient.
    """
    if not datasets:
        raise ValueError("need at least one user")
    return _round(params, datasets, lr, omega, snr_delta_db, rng, batch_size, uplink_snr_db)[0]


def _val_losses(params, validation, omega):
    if validation is None or len(validation) == 0:
        return (np.nan, np.nan, np.nan)
    out1, out2 = forward(params, validation.features)
    l1, l2 = task_losses(out1, out2, validation.label_channel, validation.label_support)
    return (omega[0] * l1 + omega[1] * l2, l1, l2)


def train(mode, datasets, params: ModelParameters, T: int, lr: float, omega,
          snr_delta_db: float, rng: np.random.Generator, validation: LocalDataset | None = None,
          batch_size: int | None = None, keep_trajectory: bool = False) -> TrainingReport:
    """Run ``T`` iterations of federated or centralised gradient descent.

    ``CL`` pools every user's samples and runs the same update rule with a
    single participant, no transmission noise and a batch ``K`` times larger.
    """
    mode = Mode(mode)
    if T < 1:
        raise ValueError("T must be at least 1")
    omega = tuple(float(w) for w in omega)
    if min(omega) < 0 or not np.isclose(sum(omega), 1.0):
        raise ValueError("task weights must be non-negative and sum to one")
    datasets = list(datasets)
    if mode is Mode.CL:
        participants = [pool(datasets)]
        noise = np.inf
        bs = None if batch_size is None else batch_size * len(datasets)
    else:
        participants = datasets
        noise = snr_delta_db
        bs = batch_size

    logs = np.full((T, 6), np.nan)
    report = TrainingReport(mode, 0, lr, omega, *([np.empty(0)] * 6), params=params)
    trajectory = [params.flat_params.copy()] if keep_trajectory else []
    for t in range(T):
        params, train_losses = _round(params, participants, lr, omega, noise, rng, bs)
        logs[t, :3] = train_losses
        logs[t, 3:] = _val_losses(params, validation, omega)
        if keep_trajectory:
            trajectory.append(params.flat_params.copy())
        if not np.all(np.isfinite(logs[t, :3])) or not np.all(np.isfinite(params.flat_params)):
            _fill(report, logs[:t + 1], params, trajectory)
            raise TrainingDiverged(f"{mode.value} training diverged at iteration {t + 1}", report)
        if (t + 1) % max(1, T // 10) == 0:
            log.info("%s iter %d/%d train %.4g val %.4g", mode.value, t + 1, T,
                     logs[t, 0], logs[t, 3])
    _fill(report, logs, params, trajectory)
    return report


def _fill(report, logs, params, trajectory):
    report.iterations = logs.shape[0]
    (report.train_total, report.train_task1, report.train_task2,
     report.val_total, report.val_task1, report.val_task2) = logs.T.copy()
    report.params = params
    report.trajectory = trajectory


def predict_channel_and_doa(params: ModelParameters, features, L: int, grid_angles: np.ndarray):
    """Channel estimate from the channel head and DoAs at the ``L`` largest support outputs.

    Returns ``(h_hat, doas)`` with shapes ``(B, N_T)`` and ``(B, L)``; DoAs
    are sorted ascending.
    """
    out1, out2 = forward(params, features)
    return _decode(out1, out2, L, grid_angles)


def _decode(out1, out2, L, grid_angles):
    h = channel_from_label(out1)
    top = np.argsort(-out2, axis=-1, kind="stable")[..., :L]
    return h, np.sort(np.asarray(grid_angles)[top], axis=-1)
