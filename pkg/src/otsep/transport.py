"""Coupled transport program for fixed delays.

For every frequency bin ``f`` the program moves the reference-receiver
column ``r_f^(1)`` onto every other receiver column ``r_f^(l)`` with one
plan per source. Plans of the same source share their row marginal (the
source spectrum at the reference microphone) and, summed over sources,
reproduce each receiver column. Frequencies never interact, so they are
solved as a batch.

Arrays follow one layout throughout:

* receiver masses ``(L, F, T)``
* delays ``(K, L)`` in seconds, column 0 identically zero
* plans ``(K, L-1, F, T, T)``, entry ``[k, l-1, f, i, j]`` is the mass of
  source ``k`` moved from reference frame ``i`` to receiver-``l`` frame ``j``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import logsumexp, xlogy

__all__ = [
    "InfeasibleMarginalsError",
    "ConvergenceError",
    "DegenerateSourceError",
    "TransportPlanSet",
    "cost_matrix",
    "delay_costs",
    "normalize_masses",
    "stack_masses",
    "solve_inner",
    "solve_inner_lp",
    "update_delays",
    "objective",
    "frame_spacing",
]


class InfeasibleMarginalsError(ValueError):
    pass


class DegenerateSourceError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Raised when the scaling iterations exhaust their budget.

    ``plans`` holds the last iterate and ``violation`` the per-frequency
    marginal violation at that point.
    """

    def __init__(self, msg, plans=None, violation=None):
        super().__init__(msg)
        self.plans = plans
        self.violation = violation


@dataclass
class TransportPlanSet:
    """Transport plans for all (source, receiver, frequency) triples.

    ``violation[f]`` is the worst relative total-variation mismatch of the
    marginal constraints at frequency ``f``. ``regularized`` is the entropic
    objective the plans minimize (``None`` for exact LP solutions).
    """

    plans: np.ndarray
    violation: np.ndarray
    regularized: float | None = None
    epsilon: float | None = None
    iterations: int = 0
    state: dict = field(default=None, repr=False)

    @property
    def n_sources(self):
        return self.plans.shape[0]

    def source_marginals(self) -> np.ndarray:
        """Row marginals averaged over receivers, shape ``(K, F, T)``."""
        return self.plans.sum(axis=4).mean(axis=1)

    def receiver_marginals(self) -> np.ndarray:
        """Column marginals, shape ``(K, L-1, F, T)``."""
        return self.plans.sum(axis=3)

    def slice_mass(self) -> np.ndarray:
        """Total mass per (source, receiver) slice, shape ``(K, L-1)``."""
        return self.plans.sum(axis=(2, 3, 4))


def frame_spacing(frame_times) -> float:
    t = np.asarray(frame_times, dtype=float)
    if t.size < 2:
        return 1.0
    step = np.diff(t)
    if not np.allclose(step, step[0], rtol=1e-9, atol=0):
        raise ValueError("frame_times must be uniformly spaced")
    return float(step[0])


def cost_matrix(tau, frame_times) -> np.ndarray:
    """Squared mismatch between a frame displacement and the delay ``tau``.

    ``C[i, j] = ((t_j - t_i) - tau)**2``, which vanishes when mass leaves
    reference frame ``t_i`` and arrives at ``t_j = t_i + tau``; a positive
    ``tau`` means the receiver hears the source later.
    """
    t = np.asarray(frame_times, dtype=float)
    disp = t[None, :] - t[:, None]
    return (disp - tau) ** 2


def delay_costs(delays, frame_times) -> np.ndarray:
    """Cost matrices for every (source, non-reference receiver), ``(K, L-1, T, T)``."""
    d = np.asarray(delays, dtype=float)
    t = np.asarray(frame_times, dtype=float)
    disp = t[None, :] - t[:, None]
    return (disp[None, None] - d[:, 1:, None, None]) ** 2


def normalize_masses(receiver_specs, mass_floor=1e-10):
    """Make every receiver carry the reference receiver's mass per frequency.

    Column ``f`` of each receiver ``l >= 2`` is rescaled to the total mass of
    column ``f`` at receiver 1. A column whose mass falls below
    ``mass_floor`` times the receiver's largest column mass, in any
    receiver, is zeroed everywhere and drops out of the transport solve.
    """
    specs = list(receiver_specs)
    if len(specs) < 2:
        raise ValueError("need at least two receivers")
    shape = specs[0].shape
    if any(s.shape != shape for s in specs):
        raise ValueError("receiver spectrograms must share one shape")
    masses = [s.mass for s in specs]
    col = np.array([m.sum(axis=0) for m in masses])  # (L, F)
    peak = col.max(axis=1, keepdims=True)
    silent = np.any(col <= mass_floor * np.where(peak > 0, peak, 1.0), axis=0)
    ref_col = col[0]
    out = [specs[0].with_mass(np.where(silent[None, :], 0.0, masses[0]))]
    for spec, m, c in zip(specs[1:], masses[1:], col[1:]):
        scale = np.divide(ref_col, c, out=np.zeros_like(c), where=~silent & (c > 0))
        out.append(spec.with_mass(m * scale[None, :]))
    return out


def stack_masses(receiver_specs) -> np.ndarray:
    """Receiver power spectrograms as one ``(L, F, T)`` array."""
    return np.stack([np.asarray(s.mass, dtype=float).T for s in receiver_specs])


def _check_balanced(r, tol):
    col = r.sum(axis=2)  # (L, F)
    ref = col[0]
    scale = np.maximum(ref, np.finfo(float).tiny)
    mismatch = np.abs(col[1:] - ref[None, :]) / scale[None, :]
    mismatch[:, ref == 0] = np.where(col[1:, ref == 0] > 0, np.inf, 0.0)
    if np.any(mismatch > tol):
        raise InfeasibleMarginalsError(
            f"infeasible marginals: receiver column masses differ by up to {mismatch.max():.3g} (relative)"
        )


def _violation(plans, r):
    """Relative TV mismatch of every marginal constraint, per frequency."""
    rows = plans.sum(axis=4)  # (K, L-1, F, T)
    cols = plans.sum(axis=3)
    src = rows.mean(axis=1)  # (K, F, T)
    mass = np.maximum(r[0].sum(axis=1), np.finfo(float).tiny)  # (F,)
    shared = np.abs(rows - src[:, None]).sum(axis=(0, 3)).max(axis=0)
    ref = np.abs(src.sum(axis=0) - r[0]).sum(axis=1)
    recv = np.abs(cols.sum(axis=0) - r[1:]).sum(axis=2).max(axis=0)
    return np.maximum(np.maximum(shared, ref), recv) / mass


def objective(plans, delays, frame_times) -> float:
    """Total transport cost ``sum_{l,k,f} <C(tau_k^(l)), M_k^{f,l}>``.

    ``plans`` may be a :class:`TransportPlanSet` or a raw plan array.
    """
    p = plans.plans if isinstance(plans, TransportPlanSet) else np.asarray(plans)
    costs = delay_costs(delays, frame_times)
    per = np.einsum("klfij,klij->f", p, costs)
    return float(np.sum(per))


def update_delays(plans, frame_times, mass_floor=0.0, previous=None) -> np.ndarray:
    """Closed-form delay step: each delay becomes the mass-weighted mean
    displacement of its plans, the exact minimizer of the (quadratic)
    transport cost in that delay.

    Slices with total mass ``<= mass_floor`` raise
    :class:`DegenerateSourceError`, unless ``previous`` delays are given,
    in which case those slices keep their previous value.
    """
    p = plans.plans if isinstance(plans, TransportPlanSet) else np.asarray(plans)
    t = np.asarray(frame_times, dtype=float)
    disp = t[None, :] - t[:, None]
    mass = p.sum(axis=(2, 3, 4))  # (K, L-1)
    moment = np.einsum("klfij,ij->kl", p, disp)
    k_n, l_n = mass.shape
    out = np.zeros((k_n, l_n + 1))
    dead = mass <= mass_floor
    if np.any(dead):
        if previous is None:
            k, ell = np.argwhere(dead)[0]
            raise DegenerateSourceError(f"degenerate source {k} at receiver {ell + 1}: no transported mass")
    out[:, 1:] = np.divide(moment, mass, out=np.zeros_like(moment), where=~dead)
    if previous is not None:
        out[:, 1:] = np.where(dead, np.asarray(previous, dtype=float)[:, 1:], out[:, 1:])
    return out


# --------------------------------------------------------------------------
# entropic solver
# --------------------------------------------------------------------------

_ABSORB = 1e30  # fold scalings into the potentials beyond this size
_STARVED = 1e250


def _consensus(rho, r_ref):
    """Source spectra closest (in KL) to every receiver's row sums.

    Geometric mean of the per-receiver row sums, renormalized across
    sources so they add up to the reference column.
    """
    if rho.shape[1] == 1:
        g = rho[:, 0]
    else:
        with np.errstate(divide="ignore"):
            g = np.exp(np.log(rho).mean(axis=1))
    total = g.sum(axis=0)
    out = np.divide(g * r_ref[None], total[None], out=np.zeros_like(g), where=total[None] > 0)
    starved = (total <= 0) & (r_ref > 0)
    out[:, starved] = r_ref[starved] / g.shape[0]
    return out


def _kernel(phi, psi, costs, eps):
    # phi (K, L-1, F, T), psi (L-1, F, T), costs (K, L-1, T, T)
    with np.errstate(invalid="ignore"):
        z = phi[..., :, None] + psi[None, :, :, None, :] - costs[:, :, None]
    z[np.isnan(z)] = -np.inf
    return np.exp(z / eps)


def _scale(target, current):
    """``target / current``; a positive target on an underflowed kernel row
    gets a huge scaling so the next absorption re-centres that row."""
    out = np.divide(target, current, out=np.zeros_like(current), where=current > 0)
    out[(current <= 0) & (target > 0)] = _STARVED
    return out


def _relax(old, proj, omega):
    """Over-relaxed scaling update ``old**(1-omega) * proj**omega``."""
    if np.all(omega == 1.0):
        return proj
    w = omega.reshape((1,) * (proj.ndim - 2) + (-1, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp((1.0 - w) * np.log(old) + w * np.log(proj))
    fresh = (old == 0) | ~np.isfinite(out)
    out[fresh] = proj[fresh]
    out[proj == 0] = 0.0
    return out


def _initial_potentials(r_ref, psi, costs, eps):
    """Row potentials of the first row projection, computed in the log domain.

    Per source, the row potentials summed over receivers must not depend on
    the source; otherwise the scaling iterations converge to the projection
    of a different reference measure.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (psi[None, :, :, None, :] - costs[:, :, None]) / eps
        lse = logsumexp(z, axis=-1)  # (K, L-1, F, T)
        g = lse.mean(axis=1, keepdims=True)
        phi = eps * (np.log(r_ref)[None, None] - lse + g - logsumexp(g, axis=0, keepdims=True))
    phi[~np.isfinite(phi)] = -np.inf
    return phi


def solve_inner(
    r,
    delays,
    frame_times,
    epsilon,
    marginal_tol=1e-9,
    max_iters=20000,
    warm=None,
    overrelax=1.9,
):
    """Entropic solve of the coupled transport program for fixed delays.

    Minimizes ``<C, M> + epsilon * sum M (log M - 1)`` over plans meeting
    the marginal constraints, by alternating KL projections: the columns of
    receiver ``l`` are scaled jointly over sources, then the rows of each
    source are scaled toward the consensus spectrum of :func:`_consensus`.
    Scalings are folded into log-domain potentials whenever they grow
    large, and the updates are over-relaxed once the first iterations have
    settled. Every frequency runs its own iteration, absorption and
    stopping decisions, so the result for one frequency does not depend on
    which other frequencies are solved alongside it.

    Parameters
    ----------
    r : ndarray, shape (L, F, T)
        Receiver masses, balanced per frequency (see :func:`normalize_masses`).
    delays : ndarray, shape (K, L)
    frame_times : ndarray, shape (T,)
    epsilon : float
        Entropic weight, in the units of the cost (seconds squared).
    marginal_tol : float
        Per-frequency stopping threshold on the relative marginal violation.
    warm : dict, optional
        ``state`` of a previous :class:`TransportPlanSet` on the same masses;
        its column potentials seed this solve.
    overrelax : float
        Relaxation weight in ``[1, 2)``; 1 gives plain alternating scaling.

    Returns
    -------
    plans : TransportPlanSet
    cost : float
        Unregularized transport cost of ``plans``.
    """
    r = np.asarray(r, dtype=float)
    delays = np.asarray(delays, dtype=float)
    if r.ndim != 3 or r.shape[0] < 2:
        raise ValueError("r must have shape (L, F, T) with L >= 2")
    if delays.shape[1] != r.shape[0]:
        raise ValueError("delays and masses disagree on the number of receivers")
    if not 1.0 <= overrelax < 2.0:
        raise ValueError("overrelax must lie in [1, 2)")
    _check_balanced(r, marginal_tol)
    n_src = delays.shape[0]
    n_rx, n_freq, n_t = r.shape
    eps = float(epsilon)
    costs = delay_costs(delays, frame_times)  # (K, L-1, T, T)

    psi_all = np.zeros((n_rx - 1, n_freq, n_t))
    if warm is not None and warm.get("psi") is not None and warm["psi"].shape == psi_all.shape:
        psi_all = np.where(np.isfinite(warm["psi"]), warm["psi"], 0.0)
    psi_all[r[1:] <= 0] = -np.inf

    plans = np.zeros((n_src, n_rx - 1, n_freq, n_t, n_t))
    viol_out = np.zeros(n_freq)
    iters = np.zeros(n_freq, dtype=int)
    act = np.flatnonzero(r[0].sum(axis=1) > 0)

    ra = r[:, act]
    psi = psi_all[:, act]
    phi = _initial_potentials(ra[0], psi, costs, eps)
    kern = _kernel(phi, psi, costs, eps)
    u = np.ones((n_src, n_rx - 1, act.size, n_t))
    v = np.ones((n_rx - 1, act.size, n_t))
    omega = np.ones(act.size)
    best = np.full(act.size, np.inf)
    col = None
    it = 0
    while act.size:
        it += 1
        kv = (kern @ v[None, ..., None])[..., 0]
        rho = u * kv
        if col is not None:
            # rows of the current iterate vs. their consensus, columns of the last column step
            viol = _loop_violation(rho, col, ra)
            done = viol <= marginal_tol
            if it > 20:
                worse = viol > 1e3 * best
                omega[worse] = 1.0
                omega[(it == 21) | (omega > 1.0)] = overrelax
                omega[worse] = 1.0
            best = np.minimum(best, viol)
            if np.any(done) or it > max_iters:
                keep = ~done if it <= max_iters else np.zeros(act.size, bool)
                fin = ~keep
                pl = u[:, :, fin, :, None] * kern[:, :, fin] * v[None, :, fin, None, :]
                plans[:, :, act[fin]] = pl
                viol_out[act[fin]] = viol[fin]
                iters[act[fin]] = it
                with np.errstate(divide="ignore"):
                    psi_all[:, act[fin]] = psi[:, fin] + eps * np.log(v[:, fin])
                act, ra, psi, phi, kern = act[keep], ra[:, keep], psi[:, keep], phi[:, :, keep], kern[:, :, keep]
                u, v, kv, rho = u[:, :, keep], v[:, keep], kv[:, :, keep], rho[:, :, keep]
                omega, best = omega[keep], best[keep]
                if not act.size:
                    break
        a = _consensus(rho, ra[0])
        u_proj = _scale(a[:, None], kv)
        u = _relax(u, u_proj, omega)
        ktu = (u[..., None, :] @ kern)[..., 0, :].sum(axis=0)
        v_proj = _scale(ra[1:], ktu)
        v = _relax(v, v_proj, omega)
        col = v * ktu

        big = (u.max(axis=(0, 1, 3)) > _ABSORB) | (v.max(axis=(0, 2)) > _ABSORB)
        if np.any(big):
            with np.errstate(divide="ignore"):
                phi[:, :, big] += eps * np.log(u[:, :, big])
                psi[:, big] += eps * np.log(v[:, big])
            kern[:, :, big] = _kernel(phi[:, :, big], psi[:, big], costs, eps)
            u[:, :, big] = 1.0
            v[:, big] = 1.0
            col[:, big] = (u[:, :, big][..., None, :] @ kern[:, :, big])[..., 0, :].sum(axis=0)

    viol_exact = _violation(plans, r)
    cost = objective(plans, delays, frame_times)
    reg = cost + eps * float(np.sum(xlogy(plans, plans) - plans))
    result = TransportPlanSet(
        plans=plans,
        violation=viol_exact,
        regularized=reg,
        epsilon=eps,
        iterations=int(iters.max(initial=0)),
        state={"psi": psi_all, "iterations": iters},
    )
    if np.any(iters > max_iters):
        bad = int(np.argmax(viol_out))
        raise ConvergenceError(
            f"scaling iterations did not reach marginal_tol={marginal_tol:g} in {max_iters} "
            f"iterations (worst violation {viol_out.max():.3g} at frequency {bad})",
            plans=result,
            violation=viol_exact,
        )
    return result, cost


def _loop_violation(rho, col, r):
    """Cheap per-frequency version of :func:`_violation` from loop byproducts."""
    src = rho.mean(axis=1)
    mass = np.maximum(r[0].sum(axis=1), np.finfo(float).tiny)
    shared = np.abs(rho - src[:, None]).sum(axis=(0, 3)).max(axis=0)
    ref = np.abs(src.sum(axis=0) - r[0]).sum(axis=1)
    recv = np.abs(col - r[1:]).sum(axis=2).max(axis=0)
    return np.maximum(np.maximum(shared, ref), recv) / mass


# --------------------------------------------------------------------------
# exact LP backend
# --------------------------------------------------------------------------


def _lp_matrices(n_src, n_rx, n_t):
    """Equality constraints of one frequency's LP.

    Variable order: plans ``M[k, l, i, j]`` (row-major), then source
    spectra ``a[k, i]``.
    """
    n_plan = n_src * (n_rx - 1) * n_t * n_t
    idx = np.arange(n_plan).reshape(n_src, n_rx - 1, n_t, n_t)
    a_idx = n_plan + np.arange(n_src * n_t).reshape(n_src, n_t)
    rows, cols, vals = [], [], []
    row = 0
    # row sums of every plan equal the source spectrum
    for k in range(n_src):
        for ell in range(n_rx - 1):
            for i in range(n_t):
                rows += [row] * (n_t + 1)
                cols += list(idx[k, ell, i]) + [a_idx[k, i]]
                vals += [1.0] * n_t + [-1.0]
                row += 1
    n_zero = row
    # source spectra add up to the reference column
    for i in range(n_t):
        rows += [row] * n_src
        cols += list(a_idx[:, i])
        vals += [1.0] * n_src
        row += 1
    # column sums over sources reproduce each receiver column
    for ell in range(n_rx - 1):
        for j in range(n_t):
            c = idx[:, ell, :, j].ravel()
            rows += [row] * c.size
            cols += list(c)
            vals += [1.0] * c.size
            row += 1
    a_eq = sp.csr_matrix((vals, (rows, cols)), shape=(row, n_plan + n_src * n_t))
    return a_eq, n_zero, n_plan


def solve_inner_lp(r, delays, frame_times, marginal_tol=1e-9):
    """Exact solve of the coupled program, one HiGHS dual-simplex LP per frequency.

    Same contract as :func:`solve_inner`; intended for cross-checking at
    small sizes.
    """
    r = np.asarray(r, dtype=float)
    delays = np.asarray(delays, dtype=float)
    _check_balanced(r, marginal_tol)
    n_src = delays.shape[0]
    n_rx, n_freq, n_t = r.shape
    costs = delay_costs(delays, frame_times)
    a_eq, n_zero, n_plan = _lp_matrices(n_src, n_rx, n_t)
    unit = frame_spacing(frame_times) ** 2
    c = np.concatenate([costs.ravel() / unit, np.zeros(n_src * n_t)])
    plans = np.zeros((n_src, n_rx - 1, n_freq, n_t, n_t))
    for f in range(n_freq):
        mass = r[0, f].sum()
        if mass == 0:
            continue
        # unit mass keeps HiGHS' absolute feasibility tolerances meaningful
        b_eq = np.concatenate([np.zeros(n_zero), r[0, f], r[1:, f].ravel()]) / mass
        # HiGHS presolve misreports small balanced instances as infeasible
        res = linprog(
            c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds", options={"presolve": False}
        )
        if res.status != 0:
            raise ConvergenceError(f"LP at frequency {f} failed: {res.message}")
        x = np.maximum(res.x[:n_plan], 0.0) * mass
        plans[:, :, f] = x.reshape(n_src, n_rx - 1, n_t, n_t)
    viol = _violation(plans, r)
    result = TransportPlanSet(plans=plans, violation=viol)
    return result, objective(plans, delays, frame_times)
