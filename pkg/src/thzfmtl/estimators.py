"""Channel estimators: LS, LMMSE, per-subcarrier OMP and beamspace support alignment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import generate_channel
from .sensing import PilotObservation, Regime, SensingEnsemble
from .system import SystemConfig, subcarrier_frequencies

log = logging.getLogger(__name__)

RCOND = 1e-10


class SingularSystemError(np.linalg.LinAlgError):
    """Pilot matrix lacks full column rank."""


@dataclass
class BeamspaceSpectrum:
    """Per-subcarrier spectra of one BSA iteration, shape ``(M, N)``."""

    values: np.ndarray
    shifted: np.ndarray
    fused: np.ndarray
    shifts: np.ndarray


@dataclass
class SparseChannelEstimate:
    support_sets: list
    coefficients: np.ndarray
    channels: np.ndarray
    physical_doas: np.ndarray
    spatial_doas: np.ndarray
    spectra: list = field(default_factory=list)
    residual_norms: np.ndarray | None = None
    wrapped: int = 0


def _lstsq(A, y):
    return np.linalg.lstsq(A, y, rcond=RCOND)[0]


def _check_rank(pilots):
    J, n = pilots.shape
    s = np.linalg.svd(pilots, compute_uv=False)
    if J < n or s[-1] <= RCOND * s[0]:
        raise SingularSystemError(f"pilot matrix {J}x{n} is rank deficient")


def ls_estimate(obs: PilotObservation, pilot_beamformer: np.ndarray) -> np.ndarray:
    """``(F^H F)^{-1} F^H y`` for every user and subcarrier; returns ``(K, M, N_T)``."""
    _check_rank(pilot_beamformer)
    K, M, J = obs.signals.shape
    sol = _lstsq(pilot_beamformer, obs.signals.reshape(-1, J).T)
    return sol.T.reshape(K, M, -1)


def mmse_estimate(obs: PilotObservation, pilot_beamformer: np.ndarray,
                  channel_covariance: np.ndarray, noise_variance: float) -> np.ndarray:
    """Linear MMSE estimate ``R F^H (F R F^H + s I)^{-1} y``.

    ``channel_covariance`` is either one ``(N_T, N_T)`` matrix or a stack of
    shape ``(K, M, N_T, N_T)``.
    """
    R = np.asarray(channel_covariance)
    if not np.allclose(R, np.conj(np.swapaxes(R, -1, -2)), atol=1e-10 * max(np.abs(R).max(), 1)):
        raise ValueError("channel covariance must be Hermitian")
    eig = np.linalg.eigvalsh(R)
    if np.any(eig.min(axis=-1) < -1e-9 * np.maximum(eig.max(axis=-1), 1e-300)):
        raise ValueError("channel covariance must be positive semidefinite")
    Fb = pilot_beamformer
    y = obs.signals
    J = Fb.shape[0]
    RFh = R @ Fb.conj().T
    Z = Fb @ RFh + noise_variance * np.eye(J)
    try:
        w = np.linalg.solve(Z, y[..., None])[..., 0]
    except np.linalg.LinAlgError:
        w = (np.linalg.pinv(Z, rcond=RCOND, hermitian=True) @ y[..., None])[..., 0]
    return (RFh @ w[..., None])[..., 0]


def estimate_covariance(cfg: SystemConfig, rng: np.random.Generator, draws: int = 1000,
                        doa_sector=None) -> np.ndarray:
    """Sample channel covariance per user and subcarrier, ``(K, M, N_T, N_T)``."""
    K, M, N_T = cfg.num_users, cfg.num_subcarriers, cfg.num_tx_antennas
    R = np.zeros((K, M, N_T, N_T), dtype=complex)
    for _ in range(draws):
        h = generate_channel(cfg, rng, doa_sector).channels
        R += h[..., :, None] * h[..., None, :].conj()
    return R / draws


def _correlate(A, norms, r):
    return np.abs(r @ A.conj()) / norms


def omp_estimate(y: np.ndarray, A: np.ndarray, L: int, dictionary: np.ndarray,
                 grid_angles: np.ndarray | None = None) -> SparseChannelEstimate:
    """Greedy ``L``-step matching pursuit for one user and one subcarrier.

    Correlations are normalised by the column norms of ``A``; ties go to the
    lowest index.
    """
    if L > A.shape[0]:
        raise ValueError("sparsity L cannot exceed the number of measurements")
    norms = np.linalg.norm(A, axis=0)
    support: list[int] = []
    r = np.array(y, dtype=complex)
    x_s = np.zeros(0, dtype=complex)
    res_norms = [np.linalg.norm(r)]
    for _ in range(L):
        n = int(np.argmax(_correlate(A, norms, r)))
        if n not in support:
            support.append(n)
        x_s = _lstsq(A[:, support], y)
        r = y - A[:, support] @ x_s
        res_norms.append(np.linalg.norm(r))
    x = np.zeros(A.shape[1], dtype=complex)
    x[support] = x_s
    angles = grid_angles[support] if grid_angles is not None else np.array([])
    doas = np.sort(angles)
    return SparseChannelEstimate(
        support_sets=[tuple(sorted(support))],
        coefficients=x[None, :],
        channels=(dictionary @ x)[None, :],
        physical_doas=doas,
        spatial_doas=doas[None, :],
        residual_norms=np.array(res_norms)[None, :],
    )


def omp_channels(obs: PilotObservation, ensemble: SensingEnsemble, L: int) -> np.ndarray:
    """Independent OMP on every ``(k, m)``; returns channels ``(K, M, N_T)``."""
    K, M, _ = obs.signals.shape
    out = np.empty((K, M, ensemble.dictionary.shape[0]), dtype=complex)
    for k in range(K):
        for m in range(M):
            est = omp_estimate(obs.signals[k, m], ensemble.measurement, L, ensemble.dictionary)
            out[k, m] = est.channels[0]
    return out


def _reference_subcarrier(freqs, fc):
    below = np.flatnonzero(freqs <= fc)
    return int(below[-1]) if below.size else int(np.argmin(freqs))


def _index_shift(freqs, fc, angles, grid_step, ref):
    # unwrap each peak angle to within one period of the least-split subcarrier
    # so that peaks aliased across endfire keep the sign of their shift
    theta = angles - 2.0 * np.round((angles - angles[ref]) / 2.0)
    return np.round((1.0 - freqs / fc) * theta / grid_step).astype(int)


def bsa_user(Y: np.ndarray, ensemble: SensingEnsemble, frequencies: np.ndarray,
             carrier_freq_hz: float, L: int, support_from: str = "peak") -> SparseChannelEstimate:
    """Beamspace support alignment for one user.

    Parameters
    ----------
    Y : ndarray, shape (M, N_RF)
        Compressed observations of every subcarrier.
    support_from : {"peak", "fused"}
        Where the per-subcarrier index shift used for the support comes
        from: the subcarrier's own spectrum peak, or the fused physical
        direction mapped back to that subcarrier.
    """
    if support_from not in ("peak", "fused"):
        raise ValueError(f"unknown support_from {support_from!r}")
    A = ensemble.measurement
    F = ensemble.dictionary
    phi = ensemble.grid_angles
    rho = ensemble.grid_step
    M, J = Y.shape
    N = A.shape[1]
    if L > J:
        raise ValueError("sparsity L cannot exceed the number of measurements")
    freqs = np.asarray(frequencies, dtype=float)
    ref = _reference_subcarrier(freqs, carrier_freq_hz)
    norms = np.linalg.norm(A, axis=0)
    grid = np.arange(N)

    supports: list[list[int]] = [[] for _ in range(M)]
    R = np.array(Y, dtype=complex)
    physical = np.empty(L)
    spatial = np.empty((M, L))
    spectra = []
    res_norms = [np.linalg.norm(R, axis=1)]
    wrapped = 0
    for l in range(L):
        P = _correlate(A, norms, R)
        peaks = np.argmax(P, axis=1)
        spatial[:, l] = phi[peaks]
        shifts = _index_shift(freqs, carrier_freq_hz, phi[peaks], rho, ref)
        P_shift = np.take_along_axis(P, (grid[None, :] - shifts[:, None]) % N, axis=1)
        fused = P_shift.sum(axis=0)
        n_bar = int(np.argmax(fused))
        physical[l] = phi[n_bar]
        spectra.append(BeamspaceSpectrum(P, P_shift, fused, shifts))

        if support_from == "fused":
            shifts = np.round((1.0 - freqs / carrier_freq_hz) * phi[n_bar] / rho).astype(int)
        for m in range(M):
            idx = n_bar - int(shifts[m])
            if not 0 <= idx < N:
                wrapped += 1
                idx %= N
            if idx not in supports[m]:
                supports[m].append(idx)
            A_I = A[:, supports[m]]
            R[m] = Y[m] - A_I @ _lstsq(A_I, Y[m])
        res_norms.append(np.linalg.norm(R, axis=1))

    if wrapped:
        log.debug("BSA: %d support indices wrapped around the angular grid", wrapped)
    X = np.zeros((M, N), dtype=complex)
    for m in range(M):
        X[m, supports[m]] = _lstsq(A[:, supports[m]], Y[m])
    return SparseChannelEstimate(
        support_sets=[tuple(sorted(s)) for s in supports],
        coefficients=X,
        channels=X @ F.T,
        physical_doas=physical,
        spatial_doas=spatial,
        spectra=spectra,
        residual_norms=np.array(res_norms).T,
        wrapped=wrapped,
    )


def bsa_estimate(obs: PilotObservation, ensemble: SensingEnsemble, cfg: SystemConfig,
                 support_from: str = "peak") -> list[SparseChannelEstimate]:
    if obs.regime is not Regime.COMPRESSED:
        raise ValueError("BSA needs compressed observations")
    freqs = subcarrier_frequencies(cfg)
    return [bsa_user(obs.signals[k], ensemble, freqs, cfg.carrier_freq_hz, cfg.num_paths,
                     support_from)
            for k in range(obs.signals.shape[0])]


def extract_doas(estimate: SparseChannelEstimate, ensemble: SensingEnsemble | None = None
                 ) -> tuple[np.ndarray, bool]:
    """Sorted physical DoAs of the fused-spectrum peaks.

    Returns ``(doas, complete)``. If the same grid cell was picked more than
    once, the distinct peaks are padded with the strongest (first) one and
    ``complete`` is False.
    """
    doas = np.asarray(estimate.physical_doas, dtype=float)
    L = doas.size
    distinct = list(dict.fromkeys(doas.tolist()))
    complete = len(distinct) == L
    if not complete:
        distinct += [doas[0]] * (L - len(distinct))
    return np.sort(np.array(distinct)), complete
