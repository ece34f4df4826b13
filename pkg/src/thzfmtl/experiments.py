"""Monte-Carlo sweeps behind the NMSE, DoA and overhead studies.

Every experiment is a pure function of an :class:`ExperimentSpec`; all
randomness derives from ``spec.scenario.seed`` through named child streams,
so the emitted tables are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .channel import generate_channel, user_sector
from .estimators import bsa_estimate, estimate_covariance, extract_doas, ls_estimate, \
    mmse_estimate, omp_estimate
from .fmtl.data import build_dataset, imbalanced_counts, observation_features, pool
from .fmtl.network import Architecture, init_params
from .fmtl.training import TRAINING_PROFILES, TrainingConfig, _decode, forward, train
from .metrics import PAPER_PARAMETER_COUNT, doa_rmse, nmse, overhead, to_db
from .sensing import build_ensemble, observe_compressed, observe_full_pilots, \
    orthogonal_pilots, snr_noise_variance
from .system import PROFILES, SystemConfig, child_rng, subcarrier_frequencies

log = logging.getLogger(__name__)

COLUMNS = ("experiment", "method", "axis_name", "axis_value", "metric", "value", "std",
           "trials", "seed")
METHODS = ("LS", "MMSE", "OMP", "BSA", "FMTL", "CL")
DOA_METHODS = ("OMP", "BSA", "FMTL", "CL")
EXPERIMENTS = ("nmse", "doa", "overhead")
PARTITIONS = ("iid", "sector", "imbalanced")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    experiment: str
    scenario: SystemConfig
    training: TrainingConfig
    sweep: list
    methods: tuple
    trials: int
    partition: str = "sector"
    omega2_values: tuple = (0.2,)
    mmse_draws: int = 1000
    workers: int = 1
    profile: str = "desk"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.methods:
            raise ConfigError("methods must not be empty")
        allowed = DOA_METHODS if self.experiment == "doa" else METHODS
        if self.experiment == "overhead":
            allowed = ("CL", "FMTL")
        bad = [m for m in self.methods if m not in allowed]
        if bad:
            raise ConfigError(f"unknown method(s) {bad} for {self.experiment}; allowed {allowed}")
        if self.partition not in PARTITIONS:
            raise ConfigError(f"unknown partition {self.partition!r}")
        if not self.sweep:
            raise ConfigError("sweep must contain at least one value")

    @property
    def axis_name(self) -> str:
        return "dataset_size" if self.experiment == "overhead" else "snr_db"

    def manifest(self) -> dict:
        d = {
            "experiment": self.experiment,
            "profile": self.profile,
            "scenario": self.scenario.to_dict(),
            "training": dataclasses.asdict(self.training),
            "sweep": list(self.sweep),
            "methods": list(self.methods),
            "trials": self.trials,
            "partition": self.partition,
            "omega2_values": list(self.omega2_values),
            "mmse_draws": self.mmse_draws,
        }
        return json.loads(json.dumps(d, default=_json_default))


def _json_default(x):
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    raise TypeError(type(x))


DEFAULT_SWEEPS = {
    "nmse": [0.0, 10.0, 20.0, 30.0],
    "doa": [0.0, 10.0, 20.0, 30.0],
    "overhead": {"desk": [5, 15, 50], "paper": [100, 500, 1000]},
}
DEFAULT_METHODS = {
    "nmse": ("LS", "MMSE", "OMP", "BSA", "FMTL", "CL"),
    "doa": ("OMP", "BSA", "FMTL"),
    "overhead": ("CL", "FMTL"),
}


def default_spec(experiment: str, profile: str = "desk", **overrides) -> ExperimentSpec:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    sweep = DEFAULT_SWEEPS[experiment]
    if isinstance(sweep, dict):
        sweep = sweep[profile]
    kw = dict(
        experiment=experiment,
        scenario=PROFILES[profile],
        training=TRAINING_PROFILES[profile],
        sweep=list(sweep),
        methods=DEFAULT_METHODS[experiment],
        trials=20 if profile == "desk" else 500,
        omega2_values=(0.2, 0.3, 0.4) if experiment == "doa" else (0.2,),
        profile=profile,
    )
    kw.update(overrides)
    return ExperimentSpec(**kw)


def spec_from_sections(experiment, profile, scenario, sections, **cli) -> ExperimentSpec:
    """Assemble a spec from a profile, config-file sections and CLI overrides."""
    spec = default_spec(experiment, profile)
    training = dict(sections.get("training", {}))
    for key in ("snr_levels", "omega", "hidden"):
        if key in training:
            training[key] = tuple(training[key])
    fields = {f.name for f in dataclasses.fields(TrainingConfig)}
    unknown = set(training) - fields
    if unknown:
        raise ConfigError(f"unknown training keys {sorted(unknown)}")
    exp = dict(sections.get("experiment", {}))
    allowed = {"sweep", "methods", "trials", "partition", "omega2_values", "mmse_draws",
               "workers"}
    unknown = set(exp) - allowed
    if unknown:
        raise ConfigError(f"unknown experiment keys {sorted(unknown)}")
    for key in ("methods", "omega2_values"):
        if key in exp:
            exp[key] = tuple(exp[key])
    exp.update({k: v for k, v in cli.items() if v is not None})
    return dataclasses.replace(spec, scenario=scenario,
                               training=dataclasses.replace(spec.training, **training), **exp)


def spec_from_manifest(manifest: dict) -> ExperimentSpec:
    """Rebuild the :class:`ExperimentSpec` embedded in JSON output, without the config file."""
    m = dict(manifest)
    training = dict(m["training"])
    for key in ("snr_levels", "omega", "hidden"):
        training[key] = tuple(training[key])
    return ExperimentSpec(
        experiment=m["experiment"], scenario=SystemConfig(**m["scenario"]),
        training=TrainingConfig(**training), sweep=[_number(v) for v in m["sweep"]],
        methods=tuple(m["methods"]), trials=m["trials"], partition=m["partition"],
        omega2_values=tuple(m["omega2_values"]), mmse_draws=m["mmse_draws"],
        profile=m["profile"])


def _number(v):
    return float(v) if isinstance(v, str) else v


def _sectors(cfg: SystemConfig, partition: str):
    if partition == "iid":
        return None
    return [user_sector(k, cfg.num_users) for k in range(cfg.num_users)]


def _map(fn, items, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool_:
            return list(pool_.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------------------
# learned estimators


def build_user_datasets(cfg: SystemConfig, training: TrainingConfig, ensemble, seed: int,
                        partition: str, V_counts=None, tag: str = "dataset"):
    K = cfg.num_users
    if V_counts is None:
        V_counts = [training.V] * K
    datasets = []
    for k in range(K):
        sector = (-1.0, 1.0) if partition == "iid" else user_sector(k, K)
        datasets.append(build_dataset(cfg, ensemble, k + 1, int(V_counts[k]), training.G,
                                      training.snr_levels, child_rng(seed, tag, k),
                                      doa_sector=sector,
                                      train_fraction=training.train_fraction))
    return datasets


def _architecture(cfg, training):
    return Architecture.for_scenario(cfg.num_rf_chains, cfg.num_tx_antennas, cfg.grid_size,
                                     hidden=tuple(training.hidden),
                                     dropout_prob=training.dropout_prob,
                                     activation=training.activation)


def train_model(mode: str, datasets, cfg: SystemConfig, training: TrainingConfig, seed: int,
                omega=None, validation=None):
    params = init_params(_architecture(cfg, training), child_rng(seed, "model-init"))
    return train(mode, [d.train() for d in datasets], params, training.T,
                 training.learning_rate, omega or training.omega, training.snr_delta_db,
                 child_rng(seed, "training", 0 if mode == "CL" else 1),
                 validation=validation, batch_size=training.batch_size)


def _learned_models(spec: ExperimentSpec, ensemble):
    cfg, tr, seed = spec.scenario, spec.training, spec.scenario.seed
    learned = [m for m in spec.methods if m in ("FMTL", "CL")]
    if not learned:
        return {}
    V_counts = None
    if spec.partition == "imbalanced":
        V_counts = imbalanced_counts(tr.V * cfg.num_users, cfg.num_users,
                                     child_rng(seed, "imbalance"))
    datasets = build_user_datasets(cfg, tr, ensemble, seed, spec.partition, V_counts)
    models = {}
    for method in learned:
        if method == "FMTL" and spec.experiment == "doa":
            for w2 in spec.omega2_values:
                rep = train_model("FMTL", datasets, cfg, tr, seed, omega=(1 - w2, w2))
                models[f"FMTL(w2={w2:g})"] = rep.params
        else:
            models[method] = train_model(method, datasets, cfg, tr, seed).params
    return models


# ---------------------------------------------------------------------------
# per-trial evaluation


@dataclass
class _Context:
    spec: ExperimentSpec
    ensemble: object
    pilots: np.ndarray | None = None
    covariance: np.ndarray | None = None
    models: dict = field(default_factory=dict)


def _nmse_trial(ctx: _Context, trial: int):
    spec, cfg, seed = ctx.spec, ctx.spec.scenario, ctx.spec.scenario.seed
    real = generate_channel(cfg, child_rng(seed, "channel", trial), _sectors(cfg, spec.partition))
    H = real.channels
    out = {}
    for i, snr in enumerate(spec.sweep):
        rng = child_rng(seed, "noise", trial, i)
        full_clean = H @ ctx.pilots.T if ctx.pilots is not None else None
        comp_clean = H @ ctx.ensemble.precoder.T
        comp = observe_compressed(H, ctx.ensemble, rng, snr_noise_variance(comp_clean, snr))
        for method in spec.methods:
            if method in ("LS", "MMSE"):
                var = snr_noise_variance(full_clean, snr)
                obs = observe_full_pilots(H, ctx.pilots, rng, var)
                if method == "LS":
                    est = ls_estimate(obs, ctx.pilots)
                else:
                    est = mmse_estimate(obs, ctx.pilots, ctx.covariance, var)
                out[(method, i)] = nmse(H, est)
            elif method == "OMP":
                est = np.empty_like(H)
                for k in range(H.shape[0]):
                    for m in range(H.shape[1]):
                        est[k, m] = omp_estimate(comp.signals[k, m], ctx.ensemble.measurement,
                                                 cfg.num_paths, ctx.ensemble.dictionary).channels[0]
                out[(method, i)] = nmse(H, est)
            elif method == "BSA":
                est = np.stack([e.channels for e in bsa_estimate(comp, ctx.ensemble, cfg)])
                out[(method, i)] = nmse(H, est)
            else:
                out1, out2 = forward(ctx.models[method], observation_features(comp.signals))
                h, _ = _decode(out1, out2, cfg.num_paths, ctx.ensemble.grid_angles)
                out[(method, i)] = nmse(H, h.reshape(H.shape))
    return out


def _doa_trial(ctx: _Context, trial: int):
    spec, cfg, seed = ctx.spec, ctx.spec.scenario, ctx.spec.scenario.seed
    real = generate_channel(cfg, child_rng(seed, "channel", trial), _sectors(cfg, spec.partition))
    H = real.channels
    truth = real.physical_doas
    K, M, _ = H.shape
    out = {}
    for i, snr in enumerate(spec.sweep):
        rng = child_rng(seed, "noise", trial, i)
        clean = H @ ctx.ensemble.precoder.T
        comp = observe_compressed(H, ctx.ensemble, rng, snr_noise_variance(clean, snr))
        for method in spec.methods:
            if method == "BSA":
                est = np.stack([extract_doas(e)[0] for e in bsa_estimate(comp, ctx.ensemble, cfg)])
                out[("BSA", i)] = doa_rmse(truth, est) ** 2
            elif method == "OMP":
                scale = cfg.carrier_freq_hz / subcarrier_frequencies(cfg)
                est = np.empty((K, M, cfg.num_paths))
                for k in range(K):
                    for m in range(M):
                        e = omp_estimate(comp.signals[k, m], ctx.ensemble.measurement,
                                         cfg.num_paths, ctx.ensemble.dictionary,
                                         ctx.ensemble.grid_angles)
                        # grid angles are spatial at subcarrier m; map back to physical
                        est[k, m] = _pad(e.physical_doas * scale[m], cfg.num_paths)
                rep = np.repeat(truth[:, None, :], M, axis=1)
                out[("OMP", i)] = doa_rmse(rep.reshape(-1, cfg.num_paths),
                                           est.reshape(-1, cfg.num_paths)) ** 2
        for name, params in ctx.models.items():
            out1, out2 = forward(params, observation_features(comp.signals))
            _, doas = _decode(out1, out2, cfg.num_paths, ctx.ensemble.grid_angles)
            rep = np.repeat(truth[:, None, :], M, axis=1).reshape(-1, cfg.num_paths)
            out[(name, i)] = doa_rmse(rep, doas) ** 2
    return out


def _pad(doas, L):
    doas = np.asarray(doas)
    if doas.size < L:
        doas = np.concatenate([doas, np.repeat(doas[:1], L - doas.size)])
    return np.sort(doas)


def _row(spec, method, axis_value, metric, value, std, trials):
    return {"experiment": spec.experiment, "method": method, "axis_name": spec.axis_name,
            "axis_value": float(axis_value), "metric": metric, "value": float(value),
            "std": float(std), "trials": int(trials), "seed": int(spec.scenario.seed)}


def run_nmse_sweep(spec: ExperimentSpec) -> list[dict]:
    """Mean channel NMSE (dB) per SNR and method."""
    cfg, seed = spec.scenario, spec.scenario.seed
    ensemble = build_ensemble(cfg, child_rng(seed, "sensing"))
    ctx = _Context(spec, ensemble)
    if {"LS", "MMSE"} & set(spec.methods):
        ctx.pilots = orthogonal_pilots(cfg.num_tx_antennas)
    if "MMSE" in spec.methods:
        log.info("estimating channel covariance from %d draws", spec.mmse_draws)
        ctx.covariance = estimate_covariance(cfg, child_rng(seed, "covariance"),
                                             spec.mmse_draws, _sectors(cfg, spec.partition))
    ctx.models = _learned_models(spec, ensemble)
    results = _map(partial(_nmse_trial, ctx), range(spec.trials), spec.workers)
    rows = []
    for method in spec.methods:
        for i, snr in enumerate(spec.sweep):
            vals = np.array([r[(method, i)] for r in results])
            rows.append(_row(spec, method, snr, "nmse_db", to_db(vals.mean()),
                             np.std(to_db(vals)), spec.trials))
    return rows


def run_doa_sweep(spec: ExperimentSpec) -> list[dict]:
    """DoA RMSE (sine-space) per SNR and method; FMTL yields one series per omega2."""
    cfg, seed = spec.scenario, spec.scenario.seed
    ensemble = build_ensemble(cfg, child_rng(seed, "sensing"))
    ctx = _Context(spec, ensemble, models=_learned_models(spec, ensemble))
    results = _map(partial(_doa_trial, ctx), range(spec.trials), spec.workers)
    names = [m for m in spec.methods if m in ("OMP", "BSA")] + list(ctx.models)
    rows = []
    for name in names:
        for i, snr in enumerate(spec.sweep):
            mse = np.array([r[(name, i)] for r in results])
            rows.append(_row(spec, name, snr, "doa_rmse", np.sqrt(mse.mean()),
                             np.std(np.sqrt(mse)), spec.trials))
    return rows


def paper_scale_overhead():
    """Overhead of the full-scale scenario (no training involved)."""
    D_k = 3 * 128 * 1000 * 500
    return overhead(PAPER_PARAMETER_COUNT, 100, 8, [D_k] * 8, 32)


def run_overhead_study(spec: ExperimentSpec):
    """Validation NMSE of CL, balanced FMTL and imbalanced FMTL versus dataset size.

    The sweep values are channel realizations per user ``V``; the axis value
    reported is the total sample count. Returns ``(rows, reports)`` where
    ``reports`` maps each total size to its :class:`OverheadReport`.
    """
    cfg, tr, seed = spec.scenario, spec.training, spec.scenario.seed
    K = cfg.num_users
    ensemble = build_ensemble(cfg, child_rng(seed, "sensing"))
    rows, reports = [], {}
    for j, V in enumerate(spec.sweep):
        V = int(V)
        balanced = build_user_datasets(cfg, tr, ensemble, seed, "sector", [V] * K,
                                       tag=f"dataset-{V}")
        counts = imbalanced_counts(V * K, K, child_rng(seed, "imbalance", j))
        imbalanced = build_user_datasets(cfg, tr, ensemble, seed, "sector", counts,
                                         tag=f"dataset-{V}")
        # independent stream: no model has trained on these realizations
        V_val = max(1, round((1 - tr.train_fraction) * V))
        val = pool(build_user_datasets(cfg, tr, ensemble, seed, "sector", [V_val] * K,
                                       tag=f"validation-{V}"))
        total = sum(len(d) for d in balanced)
        runs = []
        if "CL" in spec.methods:
            runs.append(("CL", "CL", balanced))
        if "FMTL" in spec.methods:
            runs += [("FMTL", "FMTL", balanced), ("FMTL-imbalanced", "FMTL", imbalanced)]
        for label, mode, datasets in runs:
            rep = train_model(mode, datasets, cfg, tr, seed)
            out1, out2 = forward(rep.params, val.features)
            h, _ = _decode(out1, out2, cfg.num_paths, ensemble.grid_angles)
            rows.append(_row(spec, label, total, "nmse_db", to_db(nmse(val.true_channel, h)),
                             0.0, 1))
        q = _architecture(cfg, tr).num_params
        report = overhead(q, tr.T, K, [len(d) for d in balanced], cfg.num_rf_chains)
        reports[total] = report
        rows.append(_row(spec, "FMTL", total, "eta", report.eta, 0.0, 1))
    ref = paper_scale_overhead()
    rows.append({**_row(spec, "reference", 3 * 128 * 1000 * 500 * 8, "eta", ref.eta, 0.0, 1)})
    return rows, reports


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    if spec.experiment == "nmse":
        return run_nmse_sweep(spec)
    if spec.experiment == "doa":
        return run_doa_sweep(spec)
    return run_overhead_study(spec)[0]


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in table:
        writer.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def render_json(table, manifest=None) -> str:
    rows = [{c: row[c] for c in COLUMNS} for row in table]
    return json.dumps({"manifest": manifest or {}, "rows": rows}, indent=2,
                      default=_json_default) + "\n"


def emit_results(table, path, fmt: str = "csv", manifest=None) -> None:
    """Write ``table`` atomically; on failure no partial file is left behind."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown format {fmt!r}")
    text = render_csv(table) if fmt == "csv" else render_json(table, manifest)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_TYPES = {"axis_value": float, "value": float, "std": float, "trials": int, "seed": int}


def parse_results(path) -> list[dict]:
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        return json.loads(text)["rows"]
    reader = csv.DictReader(io.StringIO(text))
    return [{k: _TYPES.get(k, str)(v) for k, v in row.items()} for row in reader]
