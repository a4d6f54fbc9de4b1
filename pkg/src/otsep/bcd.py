"""Block-coordinate descent over transport plans and delays."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dsp import PowerSpectrogram
from .transport import (
    ConvergenceError,
    TransportPlanSet,
    frame_spacing,
    normalize_masses,
    objective,
    solve_inner,
    solve_inner_lp,
    stack_masses,
    update_delays,
)

__all__ = ["SolverConfig", "TraceRow", "SeparationEstimate", "bcd_separate", "initial_delays", "write_trace"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of :func:`bcd_separate`.

    Entropic weights in ``epsilon_anneal`` are in units of the squared frame
    spacing, so the same schedule works for any hop and sample rate. One
    descent stage runs per entry, each warm-started from the previous one.
    ``bcd_obj_tol`` is measured in units of total mass times squared frame
    spacing. ``init_delays=None`` draws the starting delays from the frame
    grid within ``+-max_delay`` seconds (default: 10% of the spectrogram
    span) using ``seed``.
    """

    epsilon_anneal: tuple = (10.0, 3.0, 1.0)
    inner_max_iters: int = 5000
    marginal_tol: float = 1e-3
    bcd_max_iters: int = 30
    bcd_obj_tol: float = 1e-6
    mass_floor: float = 1e-10
    init_delays: np.ndarray | None = None
    seed: int = 0
    max_delay: float | None = None
    backend: str = "sinkhorn"
    overrelax: float = 1.9
    lp_polish: bool = False
    keep_plans: bool = True

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilon_anneal)
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon_anneal must be a nonempty, strictly decreasing list of positive values")
        object.__setattr__(self, "epsilon_anneal", eps)
        for name in ("marginal_tol", "bcd_obj_tol", "mass_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.inner_max_iters < 1 or self.bcd_max_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.backend not in ("sinkhorn", "lp"):
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def epsilon(self) -> float:
        return self.epsilon_anneal[-1]


@dataclass(frozen=True)
class TraceRow:
    """One objective evaluation inside the descent.

    ``step`` is ``"plans"`` after an inner solve and ``"delays"`` after the
    delay update; ``stage_start`` flags the first row of an epsilon stage,
    where the regularized objective restarts at a new weight.
    """

    stage: int
    epsilon: float
    iteration: int
    step: str
    transport: float
    regularized: float
    max_violation: float
    stage_start: bool


@dataclass
class SeparationEstimate:
    source_specs: list
    est_delays: np.ndarray
    trace: list
    iterations: int
    converged: bool
    objective: float
    plans: TransportPlanSet | None = None
    scale: float = 1.0
    frequency_trace: list = field(default_factory=list, repr=False)

    @property
    def objective_trace(self) -> np.ndarray:
        """Regularized objective after every half-step (see ``trace``)."""
        return np.array([row.regularized for row in self.trace])

    @property
    def transport_trace(self) -> np.ndarray:
        return np.array([row.transport for row in self.trace])

    @property
    def stage_starts(self) -> np.ndarray:
        return np.array([row.stage_start for row in self.trace])


def initial_delays(n_sources, n_receivers, frame_times, max_delay=None, seed=0) -> np.ndarray:
    """Random starting delays on the frame grid, distinct across sources."""
    h = frame_spacing(frame_times)
    if max_delay is None:
        max_delay = 0.1 * len(frame_times) * h
    m = int(np.floor(max_delay / h + 1e-9))
    grid = h * np.arange(-m, m + 1)
    if grid.size < n_sources:
        raise ValueError("delay grid too small to give every source its own start")
    rng = np.random.default_rng(seed)
    d = np.zeros((n_sources, n_receivers))
    for ell in range(1, n_receivers):
        d[:, ell] = rng.choice(grid, size=n_sources, replace=False)
    return d


def bcd_separate(receiver_specs, n_sources, cfg: SolverConfig | None = None) -> SeparationEstimate:
    """Separate receiver spectrograms into ``n_sources`` reference-microphone
    source spectrograms and estimate every source's delays.

    Alternates an inner transport solve at fixed delays with the closed-form
    delay update until the objective stops decreasing, once per entropic
    weight in ``cfg.epsilon_anneal`` (a single stage for the LP backend),
    plus an exact stage when ``cfg.lp_polish`` is set.

    Parameters
    ----------
    receiver_specs : list of PowerSpectrogram
        One spectrogram per microphone; the first is the reference.
    n_sources : int
    cfg : SolverConfig, optional

    Returns
    -------
    SeparationEstimate
        Source spectrograms are in the units of the reference receiver.
    """
    cfg = cfg or SolverConfig()
    specs = list(receiver_specs)
    if len(specs) < 2:
        raise ValueError("need at least two receivers")
    if n_sources < 1:
        raise ValueError("need at least one source")
    frame_times = np.asarray(specs[0].frame_times, dtype=float)
    h = frame_spacing(frame_times)
    balanced = normalize_masses(specs, cfg.mass_floor)
    r = stack_masses(balanced)
    scale = float(r[0].sum())
    if scale <= 0:
        raise ValueError("reference receiver carries no mass")
    r = r / scale
    n_rx = r.shape[0]

    if cfg.init_delays is not None:
        delays = np.array(cfg.init_delays, dtype=float)
        if delays.shape != (n_sources, n_rx):
            raise ValueError(f"init_delays must have shape {(n_sources, n_rx)}")
        delays[:, 0] = 0.0
    else:
        delays = initial_delays(n_sources, n_rx, frame_times, cfg.max_delay, cfg.seed)

    if cfg.backend == "lp":
        stages = [None]
    else:
        stages = [e * h * h for e in cfg.epsilon_anneal] + ([None] if cfg.lp_polish else [])
    tol = cfg.bcd_obj_tol * h * h
    trace, freq_trace = [], []
    warm = None
    plans = None
    total_iters = 0
    converged = False
    for s, eps in enumerate(stages):
        prev = np.inf
        converged = False
        for it in range(cfg.bcd_max_iters):
            try:
                if eps is None:
                    plans, cost = solve_inner_lp(r, delays, frame_times, cfg.marginal_tol)
                else:
                    plans, cost = solve_inner(
                        r,
                        delays,
                        frame_times,
                        eps,
                        marginal_tol=cfg.marginal_tol,
                        max_iters=cfg.inner_max_iters,
                        warm=warm,
                        overrelax=cfg.overrelax,
                    )
            except ConvergenceError as exc:
                raise ConvergenceError(
                    f"stage {s} (epsilon={'lp' if eps is None else cfg.epsilon_anneal[s]}), outer iteration {it}: {exc}",
                    plans=exc.plans,
                    violation=exc.violation,
                ) from exc
            total_iters += 1
            warm = plans.state
            ent = 0.0 if eps is None else plans.regularized - cost
            viol = float(plans.violation.max(initial=0.0))
            trace.append(TraceRow(s, eps or 0.0, it, "plans", cost * scale, (cost + ent) * scale, viol, it == 0))
            freq_trace.append((s, it, plans.violation.copy(), _per_frequency_cost(plans, delays, frame_times) * scale))

            new = update_delays(plans, frame_times, mass_floor=cfg.mass_floor * 1e-3, previous=delays)
            cost_new = objective(plans, new, frame_times)
            trace.append(TraceRow(s, eps or 0.0, it, "delays", cost_new * scale, (cost_new + ent) * scale, viol, False))
            moved = float(np.max(np.abs(new - delays)))
            delays = new
            cur = cost_new + ent
            log.debug("stage %d iter %d objective %.6g delays %s", s, it, cur * scale, delays[:, 1:].ravel())
            if prev - cur <= tol or moved <= 1e-12:
                converged = True
                break
            prev = cur

    src = plans.source_marginals() * scale  # (K, F, T)
    meta = dict(balanced[0].meta)
    source_specs = [PowerSpectrogram(m.T, frame_times, specs[0].bin_freqs, meta) for m in src]
    return SeparationEstimate(
        source_specs=source_specs,
        est_delays=delays,
        trace=trace,
        iterations=total_iters,
        converged=converged,
        objective=objective(plans, delays, frame_times) * scale,
        plans=plans if cfg.keep_plans else None,
        scale=scale,
        frequency_trace=freq_trace,
    )


def _per_frequency_cost(plans, delays, frame_times):
    from .transport import delay_costs

    return np.einsum("klfij,klij->f", plans.plans, delay_costs(delays, frame_times))


def write_trace(path, estimate: SeparationEstimate) -> None:
    """Dump the per-frequency solver trace as whitespace-separated columns.

    Columns: ``stage iteration frequency objective max_marginal_violation``,
    one row per (inner solve, frequency bin), with a ``#`` header line.
    Objectives are in the units of the input spectrograms times seconds
    squared.
    """
    with open(path, "w") as fh:
        fh.write("# stage iteration frequency objective max_marginal_violation\n")
        for stage, it, viol, cost in estimate.frequency_trace:
            for f in range(viol.size):
                fh.write(f"{stage} {it} {f} {cost[f]:.9g} {viol[f]:.9g}\n")
