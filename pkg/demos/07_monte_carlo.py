"""
A small Monte Carlo sweep
=========================

The experiment runner draws fresh delays and noise per (SNR, trial), runs
every method and aggregates means and standard deviations. The same runs
are available from the command line as ``python -m otsep sweep``.
"""

from otsep.experiment import ExperimentConfig, run_sweep

cfg = ExperimentConfig(
    methods=("ot", "gcc_phat", "delay_and_sum", "oracle_mask"),
    snr_sweep=(0.0, 20.0),
    trials=3,
    seed=0,
)
rows, summary = run_sweep(cfg, progress=lambda snr, trial, _: print(f"  snr {snr:+.0f} dB trial {trial} done"))

print(f"\n{'method':>14} {'SNR':>5} {'RMSE ms':>8} {'S_err':>6} {'dSDR dB':>8}")
for s in summary:
    rmse = "" if s["tdoa_rmse_s_mean"] is None else f"{s['tdoa_rmse_s_mean'] * 1e3:.2f}"
    serr = "" if s["spec_err_mean"] is None else f"{s['spec_err_mean']:.3f}"
    dsdr = "" if s["delta_sdr_db_mean"] is None else f"{s['delta_sdr_db_mean']:.2f}"
    print(f"{s['method']:>14} {s['snr_db']:>5} {rmse:>8} {serr:>6} {dsdr:>8}")
