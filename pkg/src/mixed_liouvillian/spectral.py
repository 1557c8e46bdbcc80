"""
Quadratic pencil, companion linearization and generalized projectors.

The resolvent of the mixed generator is ``(z + gamma_c) D(z)^{-1}`` with

    D(z) = z^2 + A1 z + A0,   A1 = gamma_c - L_Lindblad + J,   A0 = -gamma_c L_Lindblad

and ``D(z)^{-1}`` is the top-right block of ``(z - M)^{-1}`` for the
companion matrix ``M = [[0, 1], [-A0, -A1]]``.  Diagonalizing ``M`` gives

    U_mixed(t) = sum_i X_i exp(lambda_i t),
    X_i = (lambda_i + gamma_c) S_o^T |v_i><w_i| S_e.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import DefectiveSpectrumError, DegeneratePencilError
from .liouville import build_generators

COND_LIMIT = 1e10
REMOVED_REL_TOL = 1e-9
STEADY_REL_TOL = 1e-9


def pole_tolerance(gamma_c):
    """Distance from -gamma_c below which an eigenvalue counts as removed."""
    return 1e-7 * max(1.0, gamma_c)


@dataclass(frozen=True)
class QuadraticPencil:
    """Coefficients of ``D(z)``.

    ``l_nh`` and ``j`` are the generator pieces the coefficients were built
    from; when absent they are recovered from ``a0`` and ``a1`` (at the cost
    of an O(eps * gamma_c) cancellation in ``l_nh``).
    """

    a0: np.ndarray
    a1: np.ndarray
    gamma_c: float
    l_nh: np.ndarray | None = field(default=None, repr=False)
    j: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_liouville(self):
        return self.a0.shape[0]

    def generator_split(self):
        """Return ``(L_NH, J)``."""
        if self.l_nh is not None and self.j is not None:
            return self.l_nh, self.j
        l_lindblad = -self.a0 / self.gamma_c
        j = self.a1 - self.gamma_c * np.eye(self.n_liouville) + l_lindblad
        return l_lindblad - j, j

    def evaluate(self, z):
        """``D(z) = z^2 I + A1 z + A0``."""
        z = complex(z)
        return z * z * np.eye(self.n_liouville) + z * self.a1 + self.a0


def build_pencil(model, generators=None):
    if model.gamma_c == 0:
        raise DegeneratePencilError(
            "gamma_c = 0 gives A0 = 0; use the non-Hermitian generator directly"
        )
    gens = generators if generators is not None else build_generators(model)
    n2 = gens.l_lindblad.shape[0]
    a1 = model.gamma_c * np.eye(n2) - gens.l_lindblad + gens.j
    a0 = -model.gamma_c * gens.l_lindblad
    return QuadraticPencil(a0, a1, model.gamma_c, l_nh=gens.l_nh, j=gens.j)


@dataclass(frozen=True)
class ExtendedMatrix:
    m: np.ndarray
    gamma_c: float
    pencil: QuadraticPencil | None = field(default=None, repr=False)

    @property
    def n_liouville(self):
        return self.m.shape[0] // 2


def build_extended_matrix(pencil):
    n2 = pencil.n_liouville
    m = np.block([
        [np.zeros((n2, n2)), np.eye(n2)],
        [-pencil.a0, -pencil.a1],
    ]).astype(complex)
    return ExtendedMatrix(m, pencil.gamma_c, pencil)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues of the extended matrix with their reduced-space projectors.

    ``projectors`` has shape ``(2N^2, N^2, N^2)``; entry ``i`` is the
    generalized projector weighting ``exp(lambda_i t)``.  ``right`` holds
    the right eigenvectors as columns, ``left`` the biorthonormal left
    eigenvectors as rows (``left @ right == I``).
    """

    eigenvalues: np.ndarray
    projectors: np.ndarray
    removed_flags: np.ndarray
    condition_number: float
    gamma_c: float
    right: np.ndarray | None = field(default=None, repr=False)
    left: np.ndarray | None = field(default=None, repr=False)
    lindblad_norm: float = 1.0

    @property
    def n_liouville(self):
        return self.projectors.shape[1]

    @property
    def dim(self):
        return int(round(np.sqrt(self.n_liouville)))

    @property
    def active(self):
        return ~self.removed_flags

    @property
    def active_eigenvalues(self):
        return self.eigenvalues[self.active]

    @property
    def projector_norms(self):
        return np.linalg.norm(self.projectors, axis=(1, 2))


def eigendecompose(ext, cond_limit=COND_LIMIT, deflate=True):
    """Diagonalize the extended matrix and build the generalized projectors.

    With ``deflate=False`` the full ``2N^2`` matrix is diagonalized as is:
    left eigenvectors are the rows of ``inv(V)`` and an eigenvalue is marked
    removed when it lies within :func:`pole_tolerance` of ``-gamma_c``.

    With ``deflate=True`` (default) the eigenspace at ``-gamma_c`` is split
    off exactly first.  In the coordinates ``(x, s) = (x, y + gamma_c x)``
    the extended matrix reads ``[[-gamma_c, 1], [gamma_c J, L_NH]]``;
    writing ``J = B C`` with ``rank J = r``, the ``N^2 - r`` directions
    ``x in ker C, s = 0`` are eigenvectors at exactly ``-gamma_c`` and the
    rest of the spectrum belongs to

        K = [[L_NH, gamma_c B], [C, -gamma_c I_r]].

    The projectors are then the top-left blocks of ``|v_i><w_i|`` for
    ``K``, which avoids forming ``lambda_i + gamma_c`` by cancellation.
    Removed poles carry exactly zero projectors.
    """
    if not deflate:
        return _eigendecompose_full(ext, cond_limit)
    pencil = ext.pencil
    if pencil is None:
        n2 = ext.n_liouville
        pencil = QuadraticPencil(-ext.m[n2:, :n2], -ext.m[n2:, n2:], ext.gamma_c)
    return _eigendecompose_deflated(pencil, cond_limit)


def _eigendecompose_full(ext, cond_limit):
    n2 = ext.n_liouville
    gc = ext.gamma_c
    lam, v = scipy.linalg.eig(ext.m)
    v = v / np.linalg.norm(v, axis=0)
    cond = float(np.linalg.cond(v))
    if not np.isfinite(cond) or cond > cond_limit:
        raise DefectiveSpectrumError(cond, _clustered(lam))
    w = np.linalg.inv(v)
    weights = lam + gc
    projectors = weights[:, None, None] * (v[:n2, :].T[:, :, None] * w[:, n2:][:, None, :])
    removed = np.abs(lam + gc) <= pole_tolerance(gc)
    return SpectralDecomposition(lam, projectors, removed, cond, gc, right=v, left=w)


def restoring_factors(j):
    """Rank factorization ``J = B C`` from the SVD."""
    u, s, vh = np.linalg.svd(j)
    tol = s[0] * max(j.shape) * np.finfo(float).eps if s.size and s[0] > 0 else 0.0
    r = int(np.sum(s > tol)) if s.size and s[0] > 0 else 0
    return u[:, :r] * s[:r], vh[:r]


def _eigendecompose_deflated(pencil, cond_limit):
    gc = pencil.gamma_c
    l_nh, j = pencil.generator_split()
    n2 = l_nh.shape[0]
    b, c = restoring_factors(j)
    r = b.shape[1]
    k = np.block([[l_nh, gc * b], [c, -gc * np.eye(r)]])
    lam, v = scipy.linalg.eig(k)
    v = v / np.linalg.norm(v, axis=0)
    cond = float(np.linalg.cond(v))
    if not np.isfinite(cond) or cond > cond_limit:
        raise DefectiveSpectrumError(cond, _clustered(lam))
    w = np.linalg.inv(v)
    active = v[:n2, :].T[:, :, None] * w[:, :n2][:, None, :]
    n_removed = n2 - r
    eigenvalues = np.concatenate([lam, np.full(n_removed, -gc, dtype=complex)])
    projectors = np.concatenate([active, np.zeros((n_removed, n2, n2), dtype=complex)])
    removed = np.concatenate([np.zeros(n2 + r, dtype=bool), np.ones(n_removed, dtype=bool)])
    return SpectralDecomposition(eigenvalues, projectors, removed, cond, gc, right=v, left=w)


def _clustered(lam, rel=1e-6):
    """Eigenvalues having a neighbour within ``rel * max(1, |lambda|)``."""
    out = []
    for i, a in enumerate(lam):
        d = np.abs(lam - a)
        d[i] = np.inf
        if d.min() <= rel * max(1.0, abs(a)):
            out.append(complex(a))
    return out


def decompose_nh(l_nh, cond_limit=COND_LIMIT):
    """Decomposition of the pure non-Hermitian generator (gamma_c = 0).

    This is the gamma_c -> 0 form of the extended problem: ``N^2`` removed
    poles at 0 with vanishing projectors, plus the spectrum of ``L_NH``
    with ordinary biorthogonal projectors.
    """
    n2 = l_nh.shape[0]
    lam, v = scipy.linalg.eig(l_nh)
    v = v / np.linalg.norm(v, axis=0)
    cond = float(np.linalg.cond(v))
    if not np.isfinite(cond) or cond > cond_limit:
        raise DefectiveSpectrumError(cond, _clustered(lam))
    w = np.linalg.inv(v)
    proj = v.T[:, :, None] * w[:, None, :]
    eigenvalues = np.concatenate([np.zeros(n2, dtype=complex), lam])
    projectors = np.concatenate([np.zeros((n2, n2, n2), dtype=complex), proj])
    removed = np.concatenate([np.ones(n2, dtype=bool), np.zeros(n2, dtype=bool)])
    return SpectralDecomposition(eigenvalues, projectors, removed, cond, 0.0)


def decompose(model, generators=None, cond_limit=COND_LIMIT, deflate=True):
    """Spectral decomposition of the mixed propagator for ``model``."""
    gens = generators if generators is not None else build_generators(model)
    if model.gamma_c == 0:
        dec = decompose_nh(gens.l_nh, cond_limit)
    else:
        pencil = build_pencil(model, gens)
        dec = eigendecompose(build_extended_matrix(pencil), cond_limit, deflate=deflate)
    norm = float(np.linalg.norm(gens.l_lindblad, 2))
    lam = dec.eigenvalues.copy()
    # D(0) = -gamma_c L_Lindblad is singular, so lambda = 0 is an exact pole; the
    # eigensolver leaves it at ~eps * gamma_c, which would rotate the stationary
    # mode by a spurious phase over long times
    lam[dec.active & (np.abs(lam) < STEADY_REL_TOL * max(1.0, norm))] = 0.0
    return replace(dec, eigenvalues=lam, lindblad_norm=norm)


# -- pole bookkeeping -------------------------------------------------------

@dataclass(frozen=True)
class PoleRecord:
    re: float
    im: float
    projector_norm: float
    removed: bool


@dataclass(frozen=True)
class PoleReport:
    n_removed: int
    n_active: int
    n_pathways: int | None
    expected_removed: int | None
    poles: list
    n_restoring: int = 0

    @property
    def rule_applicable(self):
        return self.expected_removed is not None

    @property
    def rule_holds(self):
        if self.expected_removed is None:
            return None
        return self.n_removed == self.expected_removed

    def to_dict(self):
        return {
            "n_active": self.n_active,
            "n_removed": self.n_removed,
            "n_pathways": self.n_pathways,
            "rank_j": self.n_restoring,
            "expected_removed": self.expected_removed,
            "rule_holds": self.rule_holds,
            "poles": [
                {"re": p.re, "im": p.im, "projector_norm": p.projector_norm, "removed": p.removed}
                for p in self.poles
            ],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def dissipative_pathways(model):
    """Number of distinct elementary transitions, or None if any channel is not elementary."""
    pairs = set()
    for ch in model.channels:
        t = ch.elementary_transition()
        if t is None:
            return None
        pairs.add(t)
    return len(pairs)


def classify_poles(dec, model):
    """Count removed and active poles and test the multiplicity rule.

    The rule (removed poles = N^2 - number of dissipative pathways) is only
    stated for elementary jumps ``|b><a|``; for other channels the report
    carries ``expected_removed = None``.  ``n_restoring`` is ``rank J``; the
    eigenspace at ``-gamma_c`` always has dimension ``N^2 - rank J`` because
    ``D(-gamma_c) = -gamma_c J``.
    """
    norms = dec.projector_norms
    poles = [
        PoleRecord(float(l.real), float(l.imag), float(nrm), bool(r))
        for l, nrm, r in zip(dec.eigenvalues, norms, dec.removed_flags)
    ]
    n_removed = int(dec.removed_flags.sum())
    pathways = dissipative_pathways(model)
    expected = None if pathways is None else model.dim ** 2 - pathways
    rank_j = restoring_factors(build_generators(model).j)[0].shape[1] if model.channels else 0
    return PoleReport(n_removed, len(poles) - n_removed, pathways, expected, poles, rank_j)


@dataclass(frozen=True)
class LinearizationReport:
    residuals: np.ndarray
    checked: np.ndarray
    tolerance: float
    violations: list

    @property
    def ok(self):
        return not self.violations


def pencil_residual(pencil, z):
    """Smallest singular value of ``D(z)`` relative to its 2-norm."""
    s = np.linalg.svd(pencil.evaluate(z), compute_uv=False)
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


def verify_linearization(pencil, dec, tol=1e-6):
    """Check that ``D(lambda_i)`` is singular at every active pole."""
    residuals = np.full(len(dec.eigenvalues), np.nan)
    violations = []
    for i, (lam, removed) in enumerate(zip(dec.eigenvalues, dec.removed_flags)):
        if removed:
            continue
        residuals[i] = pencil_residual(pencil, lam)
        if residuals[i] > tol:
            violations.append((i, complex(lam), residuals[i]))
    return LinearizationReport(residuals, ~dec.removed_flags, tol, violations)
