"""
Superoperators in Liouville space.

Density matrices are vectorized by column stacking: entry ``(r, c)`` of an
``N x N`` matrix lands at index ``c*N + r``.  With this layout

    vec(A rho B) = (B^T kron A) vec(rho)

so every superoperator below is a plain ``N^2 x N^2`` numpy array.

The generator family is

    L_NH       = -i(1 kron H - H^* kron 1) - sum_i 1/2 (1 kron F_i^dag F_i + (F_i^dag F_i)^T kron 1)
    J          = sum_i F_i^* kron F_i
    L_Lindblad = L_NH + J
    L_mixed(z) = L_NH + gamma_c/(z + gamma_c) J
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import NonHermitianError, PoleError

TOL_HERM = 1e-12
TOL_TRACE = 1e-9
TOL_PSD = 1e-9

CHANNEL_KINDS = ("decay", "pump", "dephasing")


def hermiticity_deviation(a):
    """Max entrywise |A - A^dag|."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - a.conj().T)))


def check_hermitian(a, what="operator", rel_tol=TOL_HERM):
    """Raise NonHermitianError unless ``a`` is Hermitian to ``rel_tol * max|a_ij|``."""
    a = np.asarray(a)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    dev = hermiticity_deviation(a)
    if dev > rel_tol * max(scale, np.finfo(float).tiny):
        raise NonHermitianError(what, dev)


def _as_square(a, what):
    a = np.array(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class JumpChannel:
    """One dissipative channel. The rate is folded into ``operator``."""

    operator: np.ndarray
    label: str = ""
    kind: str = "decay"

    def __post_init__(self):
        object.__setattr__(self, "operator", _as_square(self.operator, f"channel {self.label!r}"))
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")

    @property
    def dim(self):
        return self.operator.shape[0]

    def elementary_transition(self):
        """Return ``(a, b)`` if the operator is ``c |b><a|``, else None."""
        nz = np.argwhere(np.abs(self.operator) > 0)
        if len(nz) != 1:
            return None
        b, a = nz[0]
        return int(a), int(b)


@dataclass(frozen=True)
class SystemModel:
    """Hermitian Hamiltonian, ordered jump channels and the continuum return rate."""

    hamiltonian: np.ndarray
    channels: tuple = field(default_factory=tuple)
    gamma_c: float = 0.0

    def __post_init__(self):
        h = _as_square(self.hamiltonian, "hamiltonian")
        check_hermitian(h, "hamiltonian")
        object.__setattr__(self, "hamiltonian", h)
        channels = tuple(self.channels)
        for ch in channels:
            if ch.dim != h.shape[0]:
                raise ValueError(
                    f"channel {ch.label!r} has dimension {ch.dim}, system has {h.shape[0]}"
                )
        object.__setattr__(self, "channels", channels)
        gamma_c = float(self.gamma_c)
        if not np.isfinite(gamma_c) or gamma_c < 0:
            raise ValueError(f"gamma_c must be a finite nonnegative number, got {self.gamma_c}")
        object.__setattr__(self, "gamma_c", gamma_c)

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    def with_gamma_c(self, gamma_c):
        return replace(self, gamma_c=gamma_c)


def vectorize(rho):
    """Column-stack an ``N x N`` matrix into a length ``N^2`` vector."""
    rho = np.asarray(rho)
    return rho.reshape(-1, order="F").astype(complex, copy=True)


def devectorize(vec, dim=None):
    """Inverse of :func:`vectorize`. Also accepts a stack of vectors (last axis)."""
    vec = np.asarray(vec)
    if dim is None:
        dim = int(round(np.sqrt(vec.shape[-1])))
    if dim * dim != vec.shape[-1]:
        raise ValueError(f"length {vec.shape[-1]} is not a perfect square")
    if vec.ndim == 1:
        return vec.reshape(dim, dim, order="F")
    # batched: (..., N^2) -> (..., N, N) with column stacking
    return np.swapaxes(vec.reshape(*vec.shape[:-1], dim, dim), -1, -2)


def trace_row(dim):
    """Row vector whose product with vec(rho) is Tr(rho)."""
    return vectorize(np.eye(dim))


def spre(a):
    """Superoperator of rho -> A rho."""
    a = np.asarray(a)
    return np.kron(np.eye(a.shape[0]), a)


def spost(b):
    """Superoperator of rho -> rho B."""
    b = np.asarray(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def sprepost(a, b):
    """Superoperator of rho -> A rho B."""
    return np.kron(np.asarray(b).T, np.asarray(a))


def build_hamiltonian_superop(h):
    """Return ``L_H = -i(1 kron H - H^* kron 1)``, i.e. rho -> -i[H, rho]."""
    h = np.asarray(h, dtype=complex)
    check_hermitian(h, "hamiltonian")
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(eye, h) - np.kron(h.conj(), eye))


def _anticommutator_part(f):
    ff = f.conj().T @ f
    eye = np.eye(f.shape[0])
    return 0.5 * (np.kron(eye, ff) + np.kron(ff.T, eye))


def build_dissipator(channel):
    """Lindblad dissipator ``F^* kron F - 1/2 [(F^dag F)^T kron 1 + 1 kron F^dag F]``."""
    f = channel.operator if isinstance(channel, JumpChannel) else np.asarray(channel, dtype=complex)
    return np.kron(f.conj(), f) - _anticommutator_part(f)


class Generators(NamedTuple):
    l_nh: np.ndarray
    l_lindblad: np.ndarray
    j: np.ndarray


def build_generators(model):
    """Build ``(L_NH, L_Lindblad, J)`` for ``model``.

    ``L_Lindblad`` is assembled as ``L_NH + J`` so that ``L_Lindblad - L_NH == J``
    holds bit-for-bit.
    """
    n = model.dim
    l_nh = build_hamiltonian_superop(model.hamiltonian)
    j = np.zeros((n * n, n * n), dtype=complex)
    for ch in model.channels:
        f = ch.operator
        l_nh = l_nh - _anticommutator_part(f)
        j = j + np.kron(f.conj(), f)
    return Generators(l_nh, l_nh + j, j)


def restoring_weight(z, gamma_c):
    """``gamma_c / (z + gamma_c)``, the weight multiplying J in L_mixed(z)."""
    z = complex(z)
    if z + gamma_c == 0:
        raise PoleError(f"L_mixed(z) has a pole at z = -gamma_c = {-gamma_c}")
    return gamma_c / (z + gamma_c)


def eval_l_mixed(model, z, generators=None):
    """Evaluate ``L_mixed(z) = L_NH + gamma_c/(z + gamma_c) J``."""
    gens = generators if generators is not None else build_generators(model)
    if model.gamma_c == 0:
        # weight is identically 0; at z = 0 this picks the NH convention over 0/0
        return gens.l_nh.copy()
    return gens.l_nh + restoring_weight(z, model.gamma_c) * gens.j


def eval_l_mixed_lindblad_form(model, z, generators=None):
    """Same operator written as ``L_Lindblad - z/(z + gamma_c) J``."""
    gens = generators if generators is not None else build_generators(model)
    z = complex(z)
    if z + model.gamma_c == 0:
        raise PoleError(f"L_mixed(z) has a pole at z = -gamma_c = {-model.gamma_c}")
    return gens.l_lindblad - z / (z + model.gamma_c) * gens.j


def nh_hamiltonian(model):
    """``H_NH = H - i/2 sum_i F_i^dag F_i``."""
    h = model.hamiltonian.astype(complex)
    for ch in model.channels:
        h = h - 0.5j * ch.operator.conj().T @ ch.operator
    return h


def check_density_matrix(rho, tol_herm=TOL_HERM, tol_trace=TOL_TRACE, tol_psd=TOL_PSD,
                         require_unit_trace=False):
    """Return the name of the first violated density-matrix invariant, or None.

    ``tol_herm`` is relative to the largest entry; trace and eigenvalue
    tolerances are absolute.
    """
    rho = np.asarray(rho)
    if not np.all(np.isfinite(rho)):
        return "finite"
    scale = max(float(np.max(np.abs(rho))), 1.0) if rho.size else 1.0
    if hermiticity_deviation(rho) > tol_herm * scale:
        return "hermiticity"
    tr = float(np.real(np.trace(rho)))
    if require_unit_trace and abs(tr - 1) > tol_trace:
        return "unit trace"
    if tr < -tol_trace or tr > 1 + tol_trace:
        return "trace bounds"
    herm = 0.5 * (rho + rho.conj().T)
    if np.linalg.eigvalsh(herm).min() < -tol_psd:
        return "positivity"
    return None


def basis_projector(dim, index):
    """``|index><index|`` in dimension ``dim``."""
    p = np.zeros((dim, dim), dtype=complex)
    p[index, index] = 1
    return p


def ketbra(dim, row, col):
    """``|row><col|``."""
    p = np.zeros((dim, dim), dtype=complex)
    p[row, col] = 1
    return p
