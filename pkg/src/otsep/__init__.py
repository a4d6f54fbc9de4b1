"""Joint blind source separation and TDOA estimation of delayed mixtures
by coupled optimal transport between receiver spectrograms."""

from .baselines import GccConfig, delay_and_sum, gcc_phat, gcc_phat_peaks
from .bcd import SeparationEstimate, SolverConfig, bcd_separate
from .dsp import (
    ComplexSpectrogram,
    PowerSpectrogram,
    StftConfig,
    TimeSignal,
    fractional_delay,
    istft,
    load_wav,
    power_spectrogram,
    save_wav,
    stft,
)
from .metrics import align_permutation, delta_sdr, spectrogram_error, tdoa_rmse
from .reconstruct import WienerMaskSet, build_masks, reconstruct_sources
from .simulate import MixtureData, Scenario, simulate, synthetic_source
from .transport import (
    ConvergenceError,
    DegenerateSourceError,
    InfeasibleMarginalsError,
    TransportPlanSet,
    cost_matrix,
    normalize_masses,
    objective,
    solve_inner,
    solve_inner_lp,
    update_delays,
)

__version__ = "0.1.0"
