"""
Evolution operator, propagation and derived observables.

``U_mixed(t) = sum_i X_i exp(lambda_i t)`` is evaluated in closed form at
each requested time; there is no time stepping.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import MixedLiouvillianError, NotPositiveError, PropagationError, VanishedTraceError
from .liouville import TOL_PSD, build_generators, devectorize, hermiticity_deviation, vectorize
from .spectral import STEADY_REL_TOL, decompose

log = logging.getLogger(__name__)

TOL_NORM = 1e-12
TOL_STATE = 1e-9


def evolution_operator(dec, t):
    """``U_mixed(t)`` as an ``N^2 x N^2`` matrix. Removed poles contribute nothing."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return evolution_operators(dec, [t])[0]


def evolution_operators(dec, times):
    """Stack of ``U_mixed(t)`` for every ``t`` in ``times``.

    ``U(0)`` is returned as the exact identity; the spectral sum reproduces it
    only to rounding.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    lam = dec.eigenvalues[dec.active]
    us = np.einsum("ti,ijk->tjk", np.exp(np.outer(times, lam)), dec.projectors[dec.active])
    us[times == 0] = np.eye(dec.n_liouville)
    return us


def doubled_space_propagator(ext, t):
    """Oracle: ``S_o^T (M + gamma_c) expm(M t) S_e`` from a dense matrix exponential."""
    n2 = ext.n_liouville
    shifted_top = ext.m[:n2] + ext.gamma_c * np.eye(2 * n2)[:n2]
    return shifted_top @ scipy.linalg.expm(ext.m * t)[:, n2:]


@dataclass
class Trajectory:
    """Reduced states on a time grid plus named observable series."""

    times: np.ndarray
    states: np.ndarray
    observables: dict = field(default_factory=dict)

    @property
    def trace(self):
        return np.real(np.einsum("tii->t", self.states))

    def populations(self):
        return np.real(np.einsum("tii->ti", self.states))

    def element(self, row, col):
        return self.states[:, row, col]

    def to_dict(self):
        obs = {}
        for k, v in self.observables.items():
            v = np.asarray(v)
            if np.iscomplexobj(v):
                obs[k] = {"re": v.real.tolist(), "im": v.imag.tolist()}
            else:
                obs[k] = v.tolist()
        return {
            "times": self.times.tolist(),
            "states": {"re": self.states.real.tolist(), "im": self.states.imag.tolist()},
            "observables": obs,
        }


def check_state(rho, tol=TOL_STATE):
    """Name of the first violated invariant (absolute tolerances), or None."""
    if not np.all(np.isfinite(rho)):
        return "finite entries", ""
    dev = hermiticity_deviation(rho)
    if dev > tol:
        return "hermiticity", f"max |rho - rho^dag| = {dev:.3e}"
    tr = float(np.real(np.trace(rho)))
    if tr < -tol or tr > 1 + tol:
        return "trace bounds", f"Tr rho = {tr!r}"
    lo = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if lo < -tol:
        return "positivity", f"min eigenvalue {lo:.3e}"
    return None


def propagate(dec, rho0, times, generators=None, check=True, tol=TOL_STATE):
    """Evolve ``rho0`` with the spectral propagator.

    Parameters
    ----------
    dec : SpectralDecomposition
    rho0 : (N, N) array
        Initial density matrix, supported entirely on the system.
    times : 1-d array
        Nonnegative, strictly ascending; need not be uniform.
    generators : Generators, optional
        When given, ``fidelity_nh`` and ``fidelity_lindblad`` are computed
        against ``exp(L_NH t) rho0`` and ``exp(L_Lindblad t) rho0``.
        Points where either trace has vanished are stored as NaN.
    check : bool
        Enforce Hermiticity, trace bounds and positivity at every step.

    Raises
    ------
    PropagationError
        First step at which a state invariant is violated.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1-d grid")
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be nonnegative and strictly ascending")
    rho0 = np.asarray(rho0, dtype=complex)
    bad = check_state(rho0, tol)
    if bad is not None:
        raise PropagationError(0, 0.0, f"initial state {bad[0]}", bad[1])
    vec0 = vectorize(rho0)
    us = evolution_operators(dec, times)
    states = devectorize(us @ vec0, rho0.shape[0])
    if check:
        for k, rho in enumerate(states):
            bad = check_state(rho, tol)
            if bad is not None:
                raise PropagationError(k, float(times[k]), bad[0], bad[1])
    traj = Trajectory(times, states)
    traj.observables["trace"] = traj.trace
    pops = traj.populations()
    for i in range(pops.shape[1]):
        traj.observables[f"population_{i}"] = pops[:, i]
    if generators is not None:
        traj.observables["fidelity_nh"] = _fidelity_series(states, generators.l_nh, vec0, times)
        traj.observables["fidelity_lindblad"] = _fidelity_series(
            states, generators.l_lindblad, vec0, times)
    return traj


def reference_states(generator, rho0, times):
    """``exp(L t) rho0`` on a time grid by dense matrix exponentials."""
    vec0 = vectorize(rho0)
    n = np.asarray(rho0).shape[0]
    return np.array([devectorize(scipy.linalg.expm(generator * t) @ vec0, n) for t in times])


def _fidelity_series(states, generator, vec0, times):
    n = states.shape[1]
    out = np.full(len(times), np.nan)
    for k, t in enumerate(times):
        ref = devectorize(scipy.linalg.expm(generator * t) @ vec0, n)
        try:
            out[k] = fidelity(states[k], ref)
        except VanishedTraceError:
            pass
    return out


def normalized_state(rho, tol=TOL_NORM):
    """``rho / Tr rho``."""
    rho = np.asarray(rho)
    tr = float(np.real(np.trace(rho)))
    if tr <= tol:
        raise VanishedTraceError(f"trace {tr:.3e} is below {tol:g}; cannot normalize")
    return rho / tr


def _psd_sqrt(rho, tol_psd):
    herm = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(herm)
    if w.min() < -tol_psd:
        raise NotPositiveError(f"eigenvalue {w.min():.3e} below -{tol_psd:g}")
    w = np.clip(w, 0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho, rho_ref, tol_norm=TOL_NORM, tol_psd=TOL_PSD):
    """Normalized fidelity ``Tr sqrt(sqrt(r) rho sqrt(r)) / sqrt(Tr r Tr rho)``.

    ``r`` is ``rho_ref``.  Square roots go through Hermitian
    eigendecompositions; eigenvalues in ``[-tol_psd, 0)`` are clamped to 0.
    """
    rho = np.asarray(rho, dtype=complex)
    rho_ref = np.asarray(rho_ref, dtype=complex)
    tr = float(np.real(np.trace(rho)))
    tr_ref = float(np.real(np.trace(rho_ref)))
    if tr <= tol_norm or tr_ref <= tol_norm:
        raise VanishedTraceError(f"traces {tr:.3e}, {tr_ref:.3e}; need > {tol_norm:g}")
    _psd_sqrt(rho, tol_psd)
    s = _psd_sqrt(rho_ref, tol_psd)
    inner = s @ rho @ s
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0, None)
    f = float(np.sum(np.sqrt(w)) / np.sqrt(tr * tr_ref))
    return min(max(f, 0.0), 1.0)


@dataclass(frozen=True)
class ProjectorTraceReport:
    t0: float
    t_rest: float
    per_pole: np.ndarray
    eigenvalues: np.ndarray
    steady: np.ndarray

    @property
    def total(self):
        return complex(np.sum(self.per_pole))

    def to_dict(self):
        return {
            "t0": self.t0,
            "t_rest": self.t_rest,
            "total": {"re": self.total.real, "im": self.total.imag},
            "per_pole": [
                {"re_lambda": float(l.real), "im_lambda": float(l.imag),
                 "re": float(t.real), "im": float(t.imag), "steady": bool(s)}
                for l, t, s in zip(self.eigenvalues, self.per_pole, self.steady)
            ],
        }


def steady_mask(dec, rel_tol=STEADY_REL_TOL):
    """Active poles with ``|lambda| < rel_tol * max(1, ||L_Lindblad||)``."""
    tol = rel_tol * max(1.0, dec.lindblad_norm)
    return dec.active & (np.abs(dec.eigenvalues) < tol)


def projector_traces(dec, rho0):
    """``t_i = Tr X_i rho0``, split into the steady pole (``t0``) and the rest.

    ``t0`` is 0 when no active pole sits at ``lambda = 0``.
    """
    n = dec.dim
    tr_row = vectorize(np.eye(n))
    vec0 = vectorize(rho0)
    per_pole = np.einsum("j,ijk,k->i", tr_row, dec.projectors, vec0)
    steady = steady_mask(dec)
    t0 = float(np.real(per_pole[steady].sum()))
    t_rest = float(np.real(per_pole[dec.active & ~steady].sum()))
    return ProjectorTraceReport(t0, t_rest, per_pole, dec.eigenvalues.copy(), steady)


def semigroup_defect(dec, t, tau):
    """``||U(t + tau) - U(t) U(tau)||_F``."""
    if t < 0 or tau < 0:
        raise ValueError("t and tau must be nonnegative")
    u = evolution_operators(dec, [t + tau, t, tau])
    return float(np.linalg.norm(u[0] - u[1] @ u[2]))


# -- Γc sweeps ---------------------------------------------------------------

@dataclass
class SweepPoint:
    gamma_c: float
    eigenvalues: np.ndarray | None = None
    n_active: int | None = None
    trajectory: Trajectory | None = None
    t0: float | None = None
    t_rest: float | None = None
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def sort_eigenvalues(lam):
    """Sort by real part, then imaginary part."""
    lam = np.asarray(lam)
    return lam[np.lexsort((lam.imag, lam.real))]


def _sweep_point(model, gamma_c, rho0, times, check):
    try:
        m = model.with_gamma_c(gamma_c)
        gens = build_generators(m)
        dec = decompose(m, gens)
        traj = propagate(dec, rho0, times, check=check)
        rep = projector_traces(dec, rho0)
        return SweepPoint(gamma_c, sort_eigenvalues(dec.eigenvalues), int(dec.active.sum()),
                          traj, rep.t0, rep.t_rest)
    except (MixedLiouvillianError, np.linalg.LinAlgError, ValueError) as exc:
        log.warning("sweep point gamma_c=%g failed: %s", gamma_c, exc)
        return SweepPoint(gamma_c, error=f"{type(exc).__name__}: {exc}")


def gamma_c_sweep(model, gamma_c_values, rho0, times, jobs=1, check=True):
    """Decompose and propagate ``model`` at every ``gamma_c`` value.

    Rows come back sorted by ``gamma_c``.  A failing point is recorded with
    its error message and the sweep continues.
    """
    values = sorted(float(g) for g in gamma_c_values)
    if len(values) < 1:
        raise ValueError("need at least one gamma_c value")
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda g: _sweep_point(model, g, rho0, times, check), values))
    else:
        rows = [_sweep_point(model, g, rho0, times, check) for g in values]
    return rows


def sweep_to_json(rows):
    return json.dumps([
        {
            "gamma_c": r.gamma_c,
            "eigenvalues": None if r.eigenvalues is None else
            [{"re": float(l.real), "im": float(l.imag)} for l in r.eigenvalues],
            "n_active": r.n_active,
            "t0": r.t0,
            "t_rest": r.t_rest,
            "error": r.error,
        }
        for r in rows
    ])
