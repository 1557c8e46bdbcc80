"""
Model builders and named parameter presets.

Basis conventions: the two-level system is ordered ``(g, e)``; the M-level
system is ordered ``(g1, g2, g3, e1, e2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .liouville import JumpChannel, SystemModel, basis_projector, ketbra

G, E = 0, 1
M_LEVEL_STATES = ("g1", "g2", "g3", "e1", "e2")


def rate_from_coupling(sqrt_gamma_over_2pi):
    """Convert a continuum coupling ``sqrt(gamma / 2 pi)`` to the rate ``gamma``."""
    return 2 * math.pi * sqrt_gamma_over_2pi ** 2


def _check_rates(**rates):
    for name, value in rates.items():
        if value < 0:
            raise ValueError(f"{name} must be nonnegative, got {value}")


@dataclass(frozen=True)
class TwoLevelParams:
    delta_e: float
    v_eg: float
    gamma: float = 0.0
    gamma_pump: float = 0.0
    gamma_z: float = 0.0
    gamma_c: float = 0.0

    def __post_init__(self):
        _check_rates(gamma=self.gamma, gamma_pump=self.gamma_pump,
                     gamma_z=self.gamma_z, gamma_c=self.gamma_c)


def _two_level_hamiltonian(p):
    h = np.zeros((2, 2), dtype=complex)
    h[E, E] = p.delta_e
    h[E, G] = p.v_eg
    h[G, E] = np.conj(p.v_eg)
    return h


def sigma_z():
    return np.diag([-1.0, 1.0]).astype(complex)


def two_level(p):
    """Two-level system with decay, optional incoherent pump and dephasing.

    Zero-rate channels are left out.
    """
    channels = []
    if p.gamma > 0:
        channels.append(JumpChannel(math.sqrt(p.gamma) * ketbra(2, G, E), "decay e->g", "decay"))
    if p.gamma_pump > 0:
        channels.append(JumpChannel(math.sqrt(p.gamma_pump) * ketbra(2, E, G), "pump g->e", "pump"))
    if p.gamma_z > 0:
        channels.append(JumpChannel(math.sqrt(p.gamma_z) * sigma_z(), "dephasing", "dephasing"))
    return SystemModel(_two_level_hamiltonian(p), channels, p.gamma_c)


def two_level_dephasing(p):
    """Pure-dephasing two-level model; decay and pump rates are ignored."""
    if p.gamma_z <= 0:
        raise ValueError("two_level_dephasing needs gamma_z > 0")
    channels = [JumpChannel(math.sqrt(p.gamma_z) * sigma_z(), "dephasing", "dephasing")]
    return SystemModel(_two_level_hamiltonian(p), channels, p.gamma_c)


# decay e_j -> g_i keyed as in the jump list: F1..F4
M_LEVEL_DECAYS = {"11": (3, 0), "12": (3, 1), "22": (4, 1), "23": (4, 2)}
# pump g_i -> e_j: F1'..F4'
M_LEVEL_PUMPS = {"11": (0, 3), "21": (1, 3), "22": (1, 4), "32": (2, 4)}


@dataclass(frozen=True)
class MLevelParams:
    """Three ground states coupled to two excited states.

    ``couplings[(i, j)]`` is the Hamiltonian coupling between ``g_i`` and
    ``e_j`` (1-based).  ``gamma`` and ``gamma_prime`` are keyed by the
    channel subscripts ``"11", "12", "22", "23"`` and ``"11", "21", "22",
    "32"``.
    """

    delta: tuple
    couplings: dict
    gamma: dict
    gamma_prime: dict = field(default_factory=dict)
    gamma_c: float = 0.0

    def __post_init__(self):
        if len(self.delta) != 3:
            raise ValueError("delta needs three detunings")
        for key in self.gamma:
            if key not in M_LEVEL_DECAYS:
                raise ValueError(f"unknown decay channel gamma_{key}")
        for key in self.gamma_prime:
            if key not in M_LEVEL_PUMPS:
                raise ValueError(f"unknown pump channel gamma'_{key}")
        _check_rates(gamma_c=self.gamma_c,
                     **{f"gamma_{k}": v for k, v in self.gamma.items()},
                     **{f"gamma_prime_{k}": v for k, v in self.gamma_prime.items()})

    @classmethod
    def uniform(cls, delta, couplings, gamma, gamma_prime, gamma_c=0.0):
        """All decay rates equal ``gamma``, all pump rates equal ``gamma_prime``."""
        return cls(
            delta=(delta,) * 3 if np.isscalar(delta) else tuple(delta),
            couplings=dict(couplings),
            gamma={k: gamma for k in M_LEVEL_DECAYS},
            gamma_prime={k: gamma_prime for k in M_LEVEL_PUMPS},
            gamma_c=gamma_c,
        )


def m_level(p):
    h = np.zeros((5, 5), dtype=complex)
    for i, d in enumerate(p.delta):
        h[i, i] = d
    for (i, j), v in p.couplings.items():
        g, e = i - 1, 2 + j
        h[g, e] += v
        h[e, g] += np.conj(v)
    channels = []
    for key, (src, dst) in M_LEVEL_DECAYS.items():
        rate = p.gamma.get(key, 0.0)
        if rate > 0:
            label = f"decay {M_LEVEL_STATES[src]}->{M_LEVEL_STATES[dst]}"
            channels.append(JumpChannel(math.sqrt(rate) * ketbra(5, dst, src), label, "decay"))
    for key, (src, dst) in M_LEVEL_PUMPS.items():
        rate = p.gamma_prime.get(key, 0.0)
        if rate > 0:
            label = f"pump {M_LEVEL_STATES[src]}->{M_LEVEL_STATES[dst]}"
            channels.append(JumpChannel(math.sqrt(rate) * ketbra(5, dst, src), label, "pump"))
    return SystemModel(h, channels, p.gamma_c)


# -- presets ----------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    params: object
    gamma_c_values: tuple
    initial_state: str
    note: str = ""

    @property
    def default_gamma_c(self):
        return self.gamma_c_values[0]

    def model(self, gamma_c=None):
        gc = self.default_gamma_c if gamma_c is None else gamma_c
        p = self.params
        if isinstance(p, MLevelParams):
            return m_level(_replace(p, gamma_c=gc))
        p = _replace(p, gamma_c=gc)
        if p.gamma_z > 0 and p.gamma == 0 and p.gamma_pump == 0:
            return two_level_dephasing(p)
        return two_level(p)

    def state_labels(self):
        return M_LEVEL_STATES if isinstance(self.params, MLevelParams) else ("g", "e")

    def rho0(self, label=None):
        return initial_state(label or self.initial_state, self.state_labels())


def _replace(p, **kw):
    from dataclasses import replace
    return replace(p, **kw)


def initial_state(label, state_labels):
    """Basis projector from a label like ``"ee"``, ``"e"`` or ``"g3"``."""
    labels = list(state_labels)
    if label in labels:
        i = labels.index(label)
        return basis_projector(len(labels), i)
    if len(label) % 2 == 0:
        half = len(label) // 2
        a, b = label[:half], label[half:]
        if a == b and a in labels:
            return basis_projector(len(labels), labels.index(a))
    raise KeyError(f"unknown basis state {label!r}; choose from {labels}")


_FIG2_GAMMA = rate_from_coupling(0.3)
_FIG2_GC = (0.02, 0.00002, 20.0)
_FIG4_COUPLINGS = {(1, 1): 1.0, (2, 1): 1.2, (3, 1): 0.0, (1, 2): 0.0, (2, 2): 1.5, (3, 2): 1.6}

PRESETS = {
    p.name: p
    for p in [
        Preset("fig2_off_resonance", "two-level decay, off resonance",
               TwoLevelParams(delta_e=1.0, v_eg=0.2, gamma=_FIG2_GAMMA), _FIG2_GC, "ee",
               "gamma stored as sqrt(gamma/2pi) = 0.3"),
        Preset("fig2_on_resonance", "two-level decay, on resonance",
               TwoLevelParams(delta_e=0.001, v_eg=0.2, gamma=_FIG2_GAMMA), _FIG2_GC, "ee",
               "gamma stored as sqrt(gamma/2pi) = 0.3"),
        Preset("fig3_top", "two-level decay, on resonance (Gamma_c sweep)",
               TwoLevelParams(delta_e=0.001, v_eg=0.2, gamma=_FIG2_GAMMA), _FIG2_GC, "ee",
               "same parameters as fig2_on_resonance"),
        Preset("fig3_middle", "two-level decay, off resonance (Gamma_c sweep)",
               TwoLevelParams(delta_e=1.0, v_eg=0.2, gamma=_FIG2_GAMMA), _FIG2_GC, "ee",
               "same parameters as fig2_off_resonance"),
        Preset("fig3_bottom", "two-level decay, weak coupling strong continuum",
               TwoLevelParams(delta_e=0.001, v_eg=0.1, gamma=rate_from_coupling(0.9)),
               _FIG2_GC, "ee",
               "V_ek = 0.9 read as the continuum coupling sqrt(gamma/2pi); interpretation unconfirmed"),
        Preset("figB1_finite_T", "two-level decay plus incoherent pump",
               TwoLevelParams(delta_e=0.01, v_eg=0.3, gamma=0.15, gamma_pump=0.2), (0.3,), "ee"),
        Preset("figB2_dephasing", "two-level pure dephasing",
               TwoLevelParams(delta_e=0.01, v_eg=0.3, gamma_z=0.1), (0.02,), "ee"),
        Preset("fig4_cpt", "M-level system at the CPT point",
               MLevelParams.uniform(-0.1, _FIG4_COUPLINGS, 2.0, 0.0), (0.001, 1000.0), "g3"),
        Preset("fig4_non_cpt", "M-level system with incoherent pumping",
               MLevelParams.uniform(-0.1, _FIG4_COUPLINGS, 2.0, 0.1), (0.001, 1000.0), "g3",
               "pump rate 0.1 from the figure caption; the body text quotes 0.2"),
    ]
}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
