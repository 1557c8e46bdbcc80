"""
Discretized-continuum model of the mixed dynamics.

Every elementary channel ``sqrt(gamma) |b><a|`` is replaced by

* a band of ``K`` continuum states with energies inside ``[-W, W]``,
* a Hamiltonian coupling ``sqrt(gamma * w_k / 2pi)`` between ``|a>`` and
  band state ``k``, where ``w_k`` is the energy interval the state stands
  for; a flat density of states then reproduces the golden-rule rate
  ``gamma``,
* Lindblad jumps ``sqrt(gamma_c) |b><k|`` returning population from each
  band state to ``|b>``.

The enlarged model is an ordinary Lindblad problem.  Its state projected
onto the discrete block must follow the mixed propagator once the band is
wide and dense enough.

Two grids are available.  ``"uniform"`` spaces the energies evenly, which
makes the band rephase exactly at ``2 pi / dw``.  ``"tangent"`` (default)
places ``w = a tan(theta)`` on a uniform midpoint grid in ``theta``: dense
within ``~a`` of zero, sparse in the tails, and free of a single global
recurrence time.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import TooLargeError, UnsupportedChannelError
from .liouville import SystemModel, vectorize
from .propagator import Trajectory, propagate

log = logging.getLogger(__name__)

DEFAULT_MAX_LIOUVILLE_DIM = 10_000


GRIDS = ("tangent", "uniform")


@dataclass(frozen=True)
class ContinuumSpec:
    """Discretization of one continuum.

    ``center_width`` is the tangent-grid scale ``a``; ``None`` means 1 and is
    normally replaced by :func:`default_continuum`.
    """

    k_count: int = 64
    half_bandwidth: float = 40.0
    grid: str = "tangent"
    center_width: float | None = None

    def __post_init__(self):
        if self.k_count < 8:
            raise ValueError(f"k_count must be >= 8, got {self.k_count}")
        if not self.half_bandwidth > 0:
            raise ValueError(f"half_bandwidth must be positive, got {self.half_bandwidth}")
        if self.grid not in GRIDS:
            raise ValueError(f"grid must be one of {GRIDS}, got {self.grid!r}")
        if self.center_width is not None and not self.center_width > 0:
            raise ValueError("center_width must be positive")

    @property
    def spacing(self):
        """Uniform-grid spacing ``2W / (K - 1)``; for the tangent grid, the finest spacing."""
        if self.grid == "uniform":
            return 2 * self.half_bandwidth / (self.k_count - 1)
        return float(np.min(self.weights))

    def _theta(self):
        a = self.center_width or 1.0
        top = math.atan(self.half_bandwidth / a)
        step = 2 * top / self.k_count
        return -top + (np.arange(self.k_count) + 0.5) * step, step, a

    @property
    def energies(self):
        if self.grid == "uniform":
            return np.linspace(-self.half_bandwidth, self.half_bandwidth, self.k_count)
        theta, _, a = self._theta()
        return a * np.tan(theta)

    @property
    def weights(self):
        """Energy interval represented by each state."""
        if self.grid == "uniform":
            return np.full(self.k_count, 2 * self.half_bandwidth / (self.k_count - 1))
        theta, step, a = self._theta()
        return a * step / np.cos(theta) ** 2

    @property
    def recurrence_time(self):
        """``2 pi`` over the level spacing near zero energy."""
        return 2 * math.pi / self.spacing

    def couplings(self, rate):
        return np.sqrt(rate * self.weights / (2 * math.pi))


def system_scale(model, include_gamma_c=True):
    """Largest of the detunings, couplings, channel rates and (optionally) gamma_c."""
    h = model.hamiltonian
    scales = [np.max(np.abs(h))]
    scales += [float(np.max(np.abs(ch.operator))) ** 2 for ch in model.channels]
    if include_gamma_c:
        scales.append(model.gamma_c)
    return max(max(scales), 1e-3)


MIN_HALF_BANDWIDTH = 40.0


def default_continuum(model, k_count=64, half_bandwidth=None, grid="tangent"):
    """``K = 64`` states over ``W = max(40, 20 * max(|delta|, gamma, gamma_c, |V|))``.

    The tangent-grid scale is twice the system energy scale without gamma_c.
    """
    if half_bandwidth is None:
        w = max(MIN_HALF_BANDWIDTH, 20 * system_scale(model))
    else:
        w = half_bandwidth
    return ContinuumSpec(k_count, w, grid, 2 * system_scale(model, include_gamma_c=False))


@dataclass(frozen=True)
class MicroscopicModel:
    base: SystemModel
    continua: tuple
    hamiltonian: np.ndarray
    jumps: tuple

    @property
    def dim(self):
        return self.base.dim

    @property
    def full_dim(self):
        return self.hamiltonian.shape[0]


def build_microscopic(base, spec):
    """Embed ``base`` in a Hilbert space enlarged by one band per channel.

    ``spec`` is a single :class:`ContinuumSpec` used for every channel or a
    sequence with one entry per channel.
    """
    specs = tuple(spec) if isinstance(spec, (list, tuple)) else (spec,) * len(base.channels)
    if len(specs) != len(base.channels):
        raise ValueError(f"need {len(base.channels)} continuum specs, got {len(specs)}")
    transitions = []
    for ch in base.channels:
        t = ch.elementary_transition()
        if t is None:
            raise UnsupportedChannelError(
                f"channel {ch.label!r} is not an elementary jump |b><a|; "
                "it has no continuum realization"
            )
        a, b = t
        rate = abs(ch.operator[b, a]) ** 2
        transitions.append((a, b, rate))

    n = base.dim
    full = n + sum(s.k_count for s in specs)
    h = np.zeros((full, full), dtype=complex)
    h[:n, :n] = base.hamiltonian
    jumps = []
    offset = n
    sqrt_gc = math.sqrt(base.gamma_c)
    for (a, b, rate), s in zip(transitions, specs):
        ks = np.arange(offset, offset + s.k_count)
        h[ks, ks] = s.energies
        v = s.couplings(rate)
        h[a, ks] = v
        h[ks, a] = v
        if sqrt_gc > 0:
            for k in ks:
                jumps.append((b, int(k), sqrt_gc))
        offset += s.k_count
    h.setflags(write=False)
    return MicroscopicModel(base, specs, h, tuple(jumps))


def full_liouvillian(micro):
    """Sparse Lindblad generator of the enlarged model (column stacking)."""
    d = micro.full_dim
    h = sp.csr_matrix(micro.hamiltonian)
    eye = sp.identity(d, dtype=complex, format="csr")
    gen = -1j * (sp.kron(eye, h) - sp.kron(h.conj(), eye))
    if micro.jumps:
        # every jump is c |b><k| with F^dag F = c^2 |k><k|
        rows, cols, vals = [], [], []
        decay = np.zeros(d)
        for b, k, c in micro.jumps:
            # F^* kron F maps vec index (k, k) to (b, b)
            rows.append(b * d + b)
            cols.append(k * d + k)
            vals.append(c * c)
            decay[k] += c * c
        gen = gen + sp.csr_matrix((vals, (rows, cols)), shape=(d * d, d * d))
        ff = sp.diags(decay)
        gen = gen - 0.5 * (sp.kron(eye, ff) + sp.kron(ff.T, eye))
    return gen.tocsc()


def run_microscopic(micro, rho0, times, max_liouville_dim=DEFAULT_MAX_LIOUVILLE_DIM):
    """Propagate the enlarged Lindblad model and project onto the discrete block.

    The exponential action is evaluated with ``scipy.sparse.linalg.expm_multiply``
    interval by interval, so non-uniform grids are fine.  The returned
    trajectory carries ``trace`` (reduced), ``full_trace`` and
    ``continuum_population`` series.
    """
    d = micro.full_dim
    if d * d > max_liouville_dim:
        raise TooLargeError(
            f"Liouville dimension {d * d} exceeds cap {max_liouville_dim}"
        )
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be a strictly ascending grid starting at t >= 0")
    for s in micro.continua:
        if s.recurrence_time < times[-1]:
            log.warning(
                "band recurrence time %.3g is shorter than the final time %.3g",
                s.recurrence_time, times[-1],
            )
    n = micro.dim
    big = np.zeros((d, d), dtype=complex)
    big[:n, :n] = rho0
    vec = vectorize(big)
    gen = full_liouvillian(micro)
    states = np.empty((len(times), n, n), dtype=complex)
    full_trace = np.empty(len(times))
    t_prev = 0.0
    for i, t in enumerate(times):
        if t > t_prev:
            vec = spla.expm_multiply(gen * (t - t_prev), vec)
        t_prev = t
        rho = vec.reshape(d, d, order="F")
        states[i] = rho[:n, :n]
        full_trace[i] = np.real(np.trace(rho))
    traj = Trajectory(times, states)
    traj.observables["trace"] = traj.trace
    traj.observables["full_trace"] = full_trace
    traj.observables["continuum_population"] = full_trace - traj.trace
    return traj


def trajectory_deviation(a, b):
    """``(sup_t max_ij |a_ij - b_ij|, sup_t |Tr a - Tr b|)``."""
    sup = float(np.max(np.abs(a.states - b.states)))
    tr = float(np.max(np.abs(a.trace - b.trace)))
    return sup, tr


@dataclass(frozen=True)
class ConvergenceRow:
    k: int
    w: float
    sup_error: float
    trace_error: float


def convergence_study(base, rho0, times, k_values, w_values, grid="tangent", jobs=1,
                      max_liouville_dim=DEFAULT_MAX_LIOUVILLE_DIM):
    """Deviation of the microscopic model from the spectral propagator on a (K, W) grid.

    Rows are ordered by K, then W.
    """
    from .spectral import decompose

    k_values, w_values = list(k_values), list(w_values)
    if len(k_values) < 1 or len(w_values) < 1:
        raise ValueError("need at least one K and one W value")
    reference = propagate(decompose(base), rho0, times)
    cells = [(k, w) for k in k_values for w in w_values]

    def cell(kw):
        k, w = kw
        spec = default_continuum(base, k_count=k, half_bandwidth=w, grid=grid)
        traj = run_microscopic(build_microscopic(base, spec), rho0, times, max_liouville_dim)
        return ConvergenceRow(k, float(w), *trajectory_deviation(traj, reference))

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(cell, cells))
    return [cell(c) for c in cells]


def convergence_csv(rows):
    lines = ["K,W,sup_error,trace_error"]
    lines += [f"{r.k},{r.w:.17g},{r.sup_error:.17g},{r.trace_error:.17g}" for r in rows]
    return "\n".join(lines) + "\n"
