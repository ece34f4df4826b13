"""Estimation error metrics and training-overhead accounting."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

PAPER_PARAMETER_COUNT = 1_196_928

DB_FLOOR = -300.0


def nmse(true_channels, est_channels) -> float:
    """Mean of ``||h - h_hat||^2 / ||h||^2`` over all leading axes.

    The last axis is the antenna axis. Entries with a zero true channel are
    skipped with a warning.
    """
    h = np.asarray(true_channels)
    e = np.asarray(est_channels)
    if h.shape != e.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {e.shape}")
    power = np.sum(np.abs(h) ** 2, axis=-1)
    err = np.sum(np.abs(h - e) ** 2, axis=-1)
    ok = power > 0
    if not ok.all():
        warnings.warn(f"nmse: excluded {int((~ok).sum())} zero-norm channels", RuntimeWarning)
    if not ok.any():
        return float("nan")
    return float(np.mean(err[ok] / power[ok]))


def to_db(value, floor: float = DB_FLOOR):
    with np.errstate(divide="ignore"):
        out = 10 * np.log10(value)
    return np.maximum(out, floor)


def doa_rmse(true_doas, est_doas) -> float:
    """RMSE in sine-space after pairing sorted true and estimated DoAs per trial."""
    t = np.atleast_2d(np.asarray(true_doas, dtype=float))
    e = np.atleast_2d(np.asarray(est_doas, dtype=float))
    if t.shape != e.shape:
        raise ValueError(f"DoA count mismatch {t.shape} vs {e.shape}")
    diff = np.sort(t, axis=-1) - np.sort(e, axis=-1)
    return float(np.sqrt(np.mean(diff ** 2)))


@dataclass(frozen=True)
class OverheadReport:
    t_fl: int
    t_cl: int
    eta: float


def overhead(num_params: int, iterations: int, num_users: int, per_user_sample_counts,
             num_rf_chains: int) -> OverheadReport:
    """Symbols exchanged by federated (``2 Q T K``) and centralised (``sum D_k N_RF``) training."""
    counts = [int(c) for c in per_user_sample_counts]
    args = [num_params, iterations, num_users, num_rf_chains, *counts]
    if any(int(a) != a or a <= 0 for a in args):
        raise ValueError("overhead arguments must be positive integers")
    t_fl = 2 * int(num_params) * int(iterations) * int(num_users)
    t_cl = sum(counts) * int(num_rf_chains)
    return OverheadReport(t_fl, t_cl, t_cl / t_fl)
