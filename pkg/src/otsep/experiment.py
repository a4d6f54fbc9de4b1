"""Monte Carlo experiment runner: configuration, single trials and SNR
sweeps with CSV output.

Configuration files are INI-style. Every key is optional except
``[scenario] sources``; unknown sections or keys are rejected. Units are
part of the key names::

    [scenario]
    # WAV paths (relative to this file) or "synthetic"
    sources = synthetic
    synthetic_f0_hz = 210, 110
    duration_s = 2.0
    sample_rate_hz = 8000
    receivers = 2
    window_length = 256
    hop = 200
    fft_size = 256
    # delays are drawn from hop multiples within this fraction of the duration
    delay_max_fraction = 0.1

    [experiment]
    # "none" means no sensor noise
    snr_db = -10, 0, 10, 20
    trials = 20
    methods = ot, gcc_phat, delay_and_sum, oracle_mask
    seed = 0
    output_dir = results
    record_runtime = false
    workers = 1
    noise_floor = 0
    gcc_interp_factor = 4

    [solver]
    # entropic weights in units of the squared frame spacing
    epsilon_anneal = 10, 3, 1
    inner_max_iters = 5000
    marginal_tol = 0.01
    bcd_max_iters = 30
    bcd_obj_tol = 1e-6
    mass_floor = 1e-10
    backend = sinkhorn
    # finish with one exact linear-programming stage (slow)
    lp_polish = false
"""

from __future__ import annotations

import configparser
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import GccConfig, delay_and_sum, gcc_phat_peaks
from .bcd import SolverConfig, bcd_separate
from .dsp import StftConfig, load_wav, power_spectrogram, stft
from .metrics import (
    align_by_delays,
    align_permutation,
    delta_sdr,
    mean_delta_sdr,
    spectrogram_error,
    tdoa_rmse,
)
from .reconstruct import build_masks, reconstruct_sources
from .simulate import Scenario, delay_grid, sample_delays, simulate, synthetic_source

__all__ = [
    "METHODS",
    "CSV_COLUMNS",
    "SUMMARY_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "trial_seed",
    "make_scenario",
    "run_trial",
    "run_sweep",
    "write_rows",
    "write_summary",
]

METHODS = ("ot", "gcc_phat", "delay_and_sum", "oracle_mask")
CSV_COLUMNS = ("method", "snr_db", "trial", "seed", "tdoa_rmse_s", "spec_err", "delta_sdr_db", "runtime_s", "status")
SUMMARY_COLUMNS = (
    "method",
    "snr_db",
    "n_trials",
    "n_ok",
    "n_failed",
    "tdoa_rmse_s_mean",
    "tdoa_rmse_s_std",
    "spec_err_mean",
    "spec_err_std",
    "delta_sdr_db_mean",
    "delta_sdr_db_std",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    sources: tuple = ("synthetic",)
    synthetic_f0_hz: tuple = (210.0, 110.0)
    duration_s: float = 2.0
    sample_rate_hz: float = 8000.0
    receivers: int = 2
    stft: StftConfig = StftConfig()
    delay_max_fraction: float = 0.1
    snr_sweep: tuple = (-10.0, 0.0, 10.0, 20.0)
    trials: int = 20
    methods: tuple = METHODS
    seed: int = 0
    output_dir: Path = Path("results")
    record_runtime: bool = False
    workers: int = 1
    noise_floor: float = 0.0
    gcc_interp_factor: int = 4
    solver: SolverConfig = field(default_factory=SolverConfig)
    base_dir: Path = Path(".")

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.snr_sweep:
            raise ConfigError("snr_db sweep must not be empty")
        if not self.methods:
            raise ConfigError("no methods selected")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if self.receivers < 2:
            raise ConfigError("need at least two receivers")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.sources != ("synthetic",):
            for p in self.sources:
                if not (self.base_dir / p).is_file():
                    raise ConfigError(f"source file not found: {self.base_dir / p}")

    @property
    def n_sources(self) -> int:
        return len(self.synthetic_f0_hz) if self.sources == ("synthetic",) else len(self.sources)


def _floats(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _words(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _snrs(text):
    out = []
    for v in _words(text):
        out.append(None if v.lower() in ("none", "inf", "clean") else float(v))
    return tuple(out)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_SCENARIO_KEYS = {
    "sources": _words,
    "synthetic_f0_hz": _floats,
    "duration_s": float,
    "sample_rate_hz": float,
    "receivers": int,
    "window_length": int,
    "hop": int,
    "fft_size": int,
    "delay_max_fraction": float,
}
_EXPERIMENT_KEYS = {
    "snr_db": _snrs,
    "trials": int,
    "methods": _words,
    "seed": int,
    "output_dir": str,
    "record_runtime": _bool,
    "workers": int,
    "noise_floor": float,
    "gcc_interp_factor": int,
}
_SOLVER_KEYS = {
    "epsilon_anneal": _floats,
    "inner_max_iters": int,
    "marginal_tol": float,
    "bcd_max_iters": int,
    "bcd_obj_tol": float,
    "mass_floor": float,
    "backend": str,
    "lp_polish": _bool,
}
_SECTIONS = {"scenario": _SCENARIO_KEYS, "experiment": _EXPERIMENT_KEYS, "solver": _SOLVER_KEYS}


def load_config(path, **overrides) -> ExperimentConfig:
    """Parse an INI experiment file; ``overrides`` replace parsed fields."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        keys = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                values[(section, key)] = keys[key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key} in [{section}]: {exc}") from exc

    def take(section, prefix=""):
        return {prefix + k: v for (s, k), v in values.items() if s == section}

    sc = take("scenario")
    stft_kw = {k: sc.pop(k) for k in ("window_length", "hop", "fft_size") if k in sc}
    ex = take("experiment")
    kw = dict(sc)
    if "snr_db" in ex:
        kw["snr_sweep"] = ex.pop("snr_db")
    if "output_dir" in ex:
        kw["output_dir"] = Path(ex.pop("output_dir"))
    kw.update(ex)
    try:
        kw["stft"] = StftConfig(**stft_kw)
        kw["solver"] = SolverConfig(**take("solver"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    kw["base_dir"] = path.parent
    kw.update({k: v for k, v in overrides.items() if v is not None})
    kw.setdefault("output_dir", ExperimentConfig.output_dir)
    if not kw["output_dir"].is_absolute() and "output_dir" not in overrides:
        kw["output_dir"] = path.parent / kw["output_dir"]
    if "sources" not in kw:
        raise ConfigError("[scenario] sources is required")
    return ExperimentConfig(**kw)


def _snr_code(snr):
    # fixed-point so -10 and -10.0 map to the same stream
    return 0 if snr is None else 1 + int(round((snr + 1000.0) * 1000.0))


def trial_seed(seed: int, snr, trial: int) -> int:
    """Per-trial seed derived from the experiment seed, SNR and trial index."""
    ss = np.random.SeedSequence([int(seed), _snr_code(snr), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _sources(cfg: ExperimentConfig):
    if cfg.sources == ("synthetic",):
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x5EED]))
        return tuple(
            synthetic_source(rng, cfg.duration_s, cfg.sample_rate_hz, f0=f0) for f0 in cfg.synthetic_f0_hz
        )
    sigs = tuple(load_wav(cfg.base_dir / p) for p in cfg.sources)
    for p, s in zip(cfg.sources, sigs):
        if s.sample_rate != cfg.sample_rate_hz:
            raise ConfigError(f"{p}: sample rate {s.sample_rate:g} Hz, expected {cfg.sample_rate_hz:g} Hz")
    return sigs


def make_scenario(cfg: ExperimentConfig, snr, trial: int, sources=None) -> Scenario:
    seed = trial_seed(cfg.seed, snr, trial)
    rng = np.random.default_rng(seed)
    grid = delay_grid(cfg.duration_s, cfg.stft.hop, cfg.sample_rate_hz, cfg.delay_max_fraction)
    srcs = _sources(cfg) if sources is None else sources
    delays = sample_delays(rng, len(srcs), cfg.receivers, grid)
    return Scenario(srcs, delays, snr, cfg.stft, cfg.duration_s, seed)


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def _method_ot(cfg, mix):
    sc = mix.scenario
    solver = replace(cfg.solver, seed=sc.seed, keep_plans=False)
    est = bcd_separate(mix.receiver_specs, sc.n_sources, solver)
    perm = align_permutation(mix.source_specs_ref, est.source_specs)
    masks = build_masks(est.source_specs, est.est_delays, cfg.noise_floor)
    recon = reconstruct_sources(mix.receiver_cplx, masks, est.est_delays)
    return (
        tdoa_rmse(sc.true_delays, est.est_delays, perm),
        spectrogram_error(mix.source_specs_ref, est.source_specs, perm),
        mean_delta_sdr(delta_sdr(mix.padded_sources, recon, mix.receiver_signals[0], perm)),
        "ok" if est.converged else "ok:bcd_max_iters",
    )


def _method_gcc(cfg, mix):
    sc = mix.scenario
    gcfg = GccConfig(cfg.delay_max_fraction * cfg.duration_s * 1.5, cfg.gcc_interp_factor)
    sep = cfg.stft.hop / cfg.sample_rate_hz
    est = np.zeros_like(sc.true_delays)
    ref = mix.receiver_signals[0]
    for ell in range(1, sc.n_receivers):
        est[:, ell] = gcc_phat_peaks(ref, mix.receiver_signals[ell], gcfg, sc.n_sources, sep)
    perm = align_by_delays(sc.true_delays, est)
    return tdoa_rmse(sc.true_delays, est, perm), None, None, "ok"


def _method_das(cfg, mix):
    sc = mix.scenario
    outs = [delay_and_sum(mix.receiver_signals, sc.true_delays[k]) for k in range(sc.n_sources)]
    specs = [power_spectrogram(stft(o, sc.stft)) for o in outs]
    ident = tuple(range(sc.n_sources))
    return (
        None,
        spectrogram_error(mix.source_specs_ref, specs, ident),
        mean_delta_sdr(delta_sdr(mix.padded_sources, outs, mix.receiver_signals[0], ident)),
        "ok",
    )


def _method_oracle(cfg, mix):
    sc = mix.scenario
    masks = build_masks(mix.source_specs_ref, sc.true_delays, cfg.noise_floor)
    recon = reconstruct_sources(mix.receiver_cplx, masks, sc.true_delays)
    specs = [power_spectrogram(stft(o, sc.stft)) for o in recon]
    ident = tuple(range(sc.n_sources))
    return (
        None,
        spectrogram_error(mix.source_specs_ref, specs, ident),
        mean_delta_sdr(delta_sdr(mix.padded_sources, recon, mix.receiver_signals[0], ident)),
        "ok",
    )


_RUNNERS = {"ot": _method_ot, "gcc_phat": _method_gcc, "delay_and_sum": _method_das, "oracle_mask": _method_oracle}


def run_trial(cfg: ExperimentConfig, snr, trial: int, sources=None) -> list:
    """Simulate one scenario and evaluate every selected method.

    Returns one dict per method keyed by :data:`CSV_COLUMNS`. A method that
    raises is recorded with ``status = "error:<ExceptionName>"`` and blank
    metrics instead of aborting the sweep.
    """
    sc = make_scenario(cfg, snr, trial, sources)
    mix = simulate(sc)
    rows = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            rmse, serr, dsdr, status = _RUNNERS[method](cfg, mix)
        except Exception as exc:  # recorded, the sweep goes on
            rmse = serr = dsdr = None
            status = f"error:{type(exc).__name__}"
        elapsed = time.perf_counter() - t0
        rows.append(
            {
                "method": method,
                "snr_db": "none" if snr is None else float(snr),
                "trial": trial,
                "seed": sc.seed,
                "tdoa_rmse_s": rmse,
                "spec_err": serr,
                "delta_sdr_db": dsdr,
                "runtime_s": elapsed if cfg.record_runtime else None,
                "status": status,
            }
        )
    return rows


def _trial_job(args):
    cfg, snr, trial, sources = args
    return run_trial(cfg, snr, trial, sources)


def _stats(vals):
    v = np.array([x for x in vals if x is not None], dtype=float)
    if v.size == 0:
        return None, None
    with np.errstate(invalid="ignore"):
        return float(np.mean(v)), float(np.std(v))


def _aggregate(rows, cfg):
    out = []
    for snr in cfg.snr_sweep:
        key = "none" if snr is None else float(snr)
        for method in cfg.methods:
            sel = [r for r in rows if r["method"] == method and r["snr_db"] == key]
            ok = [r for r in sel if r["status"].startswith("ok")]
            agg = {"method": method, "snr_db": key, "n_trials": len(sel), "n_ok": len(ok), "n_failed": len(sel) - len(ok)}
            for col in ("tdoa_rmse_s", "spec_err", "delta_sdr_db"):
                agg[col + "_mean"], agg[col + "_std"] = _stats(r[col] for r in ok)
            out.append(agg)
    return out


def run_sweep(cfg: ExperimentConfig, progress=None):
    """Run every (SNR, trial) pair and aggregate per (method, SNR).

    Rows come back in (SNR, trial, method) order whatever the number of
    workers. Statistics use the successful trials only, with population
    standard deviations.

    Returns
    -------
    rows : list of dict
    summary : list of dict
    """
    sources = _sources(cfg)
    jobs = [(cfg, snr, t, sources) for snr in cfg.snr_sweep for t in range(cfg.trials)]
    rows = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = pool.map(_trial_job, jobs)
            for job, res in zip(jobs, results):
                rows.extend(res)
                if progress:
                    progress(job[1], job[2], res)
    else:
        for job in jobs:
            res = _trial_job(job)
            rows.extend(res)
            if progress:
                progress(job[1], job[2], res)
    return rows, _aggregate(rows, cfg)


def write_rows(path, rows, columns=CSV_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_summary(path, summary) -> None:
    write_rows(path, summary, SUMMARY_COLUMNS)
