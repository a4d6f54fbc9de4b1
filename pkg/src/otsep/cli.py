"""Command-line entry point: ``python -m otsep <command>``.

Commands
--------
simulate  render one scenario to WAV files plus ground truth
separate  run the transport separator on a directory of receiver WAVs
evaluate  score a ``separate`` output against a ``simulate`` output
sweep     Monte Carlo SNR sweep written to ``results.csv`` and ``summary.csv``
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bcd import bcd_separate, write_trace
from .dsp import PowerSpectrogram, TimeSignal, load_wav, power_spectrogram, save_wav, stft
from .experiment import (
    ConfigError,
    ExperimentConfig,
    load_config,
    make_scenario,
    run_sweep,
    write_rows,
    write_summary,
)
from .metrics import align_permutation, delta_sdr, mean_delta_sdr, spectrogram_error, tdoa_rmse
from .reconstruct import build_masks, reconstruct_sources
from .simulate import simulate

log = logging.getLogger("otsep")

_HEADROOM = 0.9


def _config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "trials": getattr(args, "trials", None)}
    methods = getattr(args, "methods", None)
    if methods is not None:
        overrides["methods"] = tuple(m.strip() for m in methods.split(",") if m.strip())
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["output_dir"] = Path(args.out)
    if args.config is None:
        cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
        return cfg
    return load_config(args.config, **overrides)


def _gain(signals) -> float:
    """Common gain that keeps every signal below the clipping headroom."""
    peak = max(float(np.max(np.abs(s.samples))) for s in signals)
    return 1.0 if peak <= _HEADROOM else _HEADROOM / peak


def _save_group(out: Path, stem: str, signals, gain: float) -> None:
    for i, s in enumerate(signals, start=1):
        save_wav(out / f"{stem}_{i}.wav", TimeSignal(s.samples * gain, s.sample_rate))


def _read_group(folder: Path, stem: str):
    files = sorted(folder.glob(f"{stem}_*.wav"), key=lambda p: int(p.stem.rsplit("_", 1)[1]))
    if not files:
        raise ConfigError(f"no {stem}_<n>.wav files in {folder}")
    return [load_wav(p) for p in files]


def cmd_simulate(args) -> int:
    cfg = _config(args)
    snr = cfg.snr_sweep[0] if args.snr is None else (None if args.snr.lower() == "none" else float(args.snr))
    sc = make_scenario(cfg, snr, args.trial)
    mix = simulate(sc)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    # one gain for everything keeps the metrics scale-consistent
    gain = _gain(mix.receiver_signals + mix.padded_sources)
    _save_group(out, "receiver", mix.receiver_signals, gain)
    _save_group(out, "source", mix.padded_sources, gain)
    np.savetxt(out / "delays.txt", sc.true_delays, fmt="%.9g", header="true delays in seconds, rows = sources, columns = receivers")
    with open(out / "scenario.txt", "w") as fh:
        fh.write(f"snr_db = {'none' if snr is None else snr}\nseed = {sc.seed}\ngain = {gain:.9g}\n")
    print(f"wrote {sc.n_receivers} receivers and {sc.n_sources} sources to {out}")
    return 0


def cmd_separate(args) -> int:
    cfg = _config(args)
    receivers = _read_group(Path(args.mixtures), "receiver")
    k = args.sources or cfg.n_sources
    cplx = [stft(r, cfg.stft) for r in receivers]
    specs = [power_spectrogram(c) for c in cplx]
    est = bcd_separate(specs, k, replace(cfg.solver, seed=cfg.seed))
    masks = build_masks(est.source_specs, est.est_delays, cfg.noise_floor)
    recon = reconstruct_sources(cplx, masks, est.est_delays)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "delays.txt", est.est_delays, fmt="%.9g", header="estimated delays in seconds, rows = sources, columns = receivers")
    for i, s in enumerate(est.source_specs, start=1):
        np.savetxt(out / f"source_{i}_spec.txt", s.mass, fmt="%.9g", header="power spectrogram, rows = frames, columns = frequency bins")
    if _gain(recon) < 1.0:
        log.warning("reconstructed sources exceed the WAV headroom and will clip")
    # same scale as the input receivers, so evaluate can compare directly
    _save_group(out, "source", recon, 1.0)
    write_trace(out / "trace.txt", est)
    with open(out / "objective.txt", "w") as fh:
        fh.write("# stage epsilon iteration step transport regularized max_marginal_violation stage_start\n")
        for r in est.trace:
            fh.write(
                f"{r.stage} {r.epsilon:.9g} {r.iteration} {r.step} {r.transport:.9g} "
                f"{r.regularized:.9g} {r.max_violation:.9g} {int(r.stage_start)}\n"
            )
    print("estimated delays (s):")
    print(np.array2string(est.est_delays, precision=6))
    print(f"{est.iterations} inner solves, converged = {est.converged}; results in {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    truth, estimate = Path(args.truth), Path(args.estimate)
    true_delays = np.atleast_2d(np.loadtxt(truth / "delays.txt"))
    est_delays = np.atleast_2d(np.loadtxt(estimate / "delays.txt"))
    sources = _read_group(truth, "source")
    mixture = load_wav(truth / "receiver_1.wav")
    true_specs = [power_spectrogram(stft(s, cfg.stft)) for s in sources]
    ref = true_specs[0]
    est_specs = [
        PowerSpectrogram(np.loadtxt(estimate / f"source_{i}_spec.txt", ndmin=2), ref.frame_times, ref.bin_freqs)
        for i in range(1, len(sources) + 1)
    ]
    recon = _read_group(estimate, "source")
    perm = align_permutation(true_specs, est_specs)
    row = {
        "tdoa_rmse_s": tdoa_rmse(true_delays, est_delays, perm),
        "spec_err": spectrogram_error(true_specs, est_specs, perm),
        "delta_sdr_db": mean_delta_sdr(delta_sdr(sources, recon, mixture, perm)),
        "permutation": " ".join(str(p) for p in perm),
    }
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "metrics.csv", [row], tuple(row))
    for key, val in row.items():
        print(f"{key} = {val}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    def progress(snr, trial, rows):
        bad = [r["method"] for r in rows if not r["status"].startswith("ok")]
        log.info("snr %s trial %d done%s", snr, trial, f" (failed: {', '.join(bad)})" if bad else "")

    rows, summary = run_sweep(cfg, progress)
    write_rows(out / "results.csv", rows)
    write_summary(out / "summary.csv", summary)
    failed = sum(s["n_failed"] for s in summary)
    for s in summary:
        print(
            f"{s['method']:>14} snr={s['snr_db']!s:>6} ok={s['n_ok']}/{s['n_trials']} "
            f"rmse={s['tdoa_rmse_s_mean']} spec_err={s['spec_err_mean']} dsdr={s['delta_sdr_db_mean']}"
        )
    if failed:
        print(f"{failed} method runs failed; see the status column of {out / 'results.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otsep", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI experiment file")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="experiment seed (overrides the config)")

    sp = sub.add_parser("simulate", help="render one scenario to WAV files")
    common(sp)
    sp.add_argument("--snr", help="SNR in dB or 'none' (default: first sweep value)")
    sp.add_argument("--trial", type=int, default=0, help="trial index used to derive the seed")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("separate", help="separate receiver WAVs")
    common(sp)
    sp.add_argument("--mixtures", required=True, help="directory holding receiver_<n>.wav")
    sp.add_argument("--sources", type=int, help="number of sources (default: from the config)")
    sp.set_defaults(func=cmd_separate)

    sp = sub.add_parser("evaluate", help="score a separation against ground truth")
    common(sp)
    sp.add_argument("--truth", required=True, help="directory written by 'simulate'")
    sp.add_argument("--estimate", required=True, help="directory written by 'separate'")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="Monte Carlo SNR sweep")
    common(sp)
    sp.add_argument("--trials", type=int, help="trials per SNR (overrides the config)")
    sp.add_argument("--methods", help="comma-separated subset of ot,gcc_phat,delay_and_sum,oracle_mask")
    sp.add_argument("--workers", type=int, help="parallel worker processes")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
