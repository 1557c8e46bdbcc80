import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_density, random_elementary_model, random_hermitian, seeds
from mixed_liouvillian.errors import NonHermitianError, PoleError
from mixed_liouvillian.liouville import (
    JumpChannel, SystemModel, build_dissipator, build_generators, build_hamiltonian_superop,
    check_density_matrix, devectorize, eval_l_mixed, eval_l_mixed_lindblad_form, ketbra,
    nh_hamiltonian, sprepost, trace_row, vectorize,
)
from mixed_liouvillian.models import PRESETS, TwoLevelParams, sigma_z, two_level

G, E = 0, 1


def apply(superop, rho):
    return devectorize(superop @ vectorize(rho), rho.shape[0])


# -- vectorization ------------------------------------------------------------

def test_vectorize_half_identity():
    np.testing.assert_array_equal(vectorize(np.eye(2) / 2), [0.5, 0, 0, 0.5])


def test_vectorize_single_entry():
    np.testing.assert_array_equal(vectorize(ketbra(2, E, G)), [0, 1, 0, 0])


def test_round_trip_random_hermitian(rng):
    for _ in range(50):
        rho = random_hermitian(rng, int(rng.integers(2, 6)))
        np.testing.assert_array_equal(devectorize(vectorize(rho)), rho)


def test_devectorize_batched(rng):
    stack = np.array([random_hermitian(rng, 3) for _ in range(4)])
    vecs = np.array([vectorize(r) for r in stack])
    np.testing.assert_array_equal(devectorize(vecs, 3), stack)


def test_devectorize_rejects_non_square_length():
    with pytest.raises(ValueError):
        devectorize(np.zeros(5))


@given(seeds, st.integers(1, 5))
def test_sprepost_matches_matrix_product(seed, n):
    rng = np.random.default_rng(seed)
    a, b, rho = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for _ in range(3))
    direct = a @ rho @ b
    got = apply(sprepost(a, b), rho)
    assert np.linalg.norm(got - direct) <= 1e-12 * max(1.0, np.linalg.norm(direct))


# -- Hamiltonian part ---------------------------------------------------------

def test_hamiltonian_phase_rotation():
    delta = 0.7
    h = delta * ketbra(2, E, E)
    rhs = apply(build_hamiltonian_superop(h), ketbra(2, E, G))
    assert rhs[E, G] == pytest.approx(-1j * delta)


def test_identity_hamiltonian_gives_zero():
    assert np.all(build_hamiltonian_superop(np.eye(3)) == 0)


def test_hamiltonian_matches_commutator(rng):
    h = 0.4 * ketbra(2, E, E) + 0.3 * (ketbra(2, E, G) + ketbra(2, G, E))
    lh = build_hamiltonian_superop(h)
    for _ in range(20):
        rho = random_hermitian(rng, 2)
        np.testing.assert_allclose(apply(lh, rho), -1j * (h @ rho - rho @ h), atol=1e-14)


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(NonHermitianError, match="Hermitian") as info:
        build_hamiltonian_superop(np.array([[0, 1], [0, 0]]))
    assert info.value.deviation == pytest.approx(1.0)


def test_hermiticity_tolerance_is_relative():
    h = 1e6 * np.array([[1, 2], [2, 3]], dtype=complex)
    h[0, 1] += 1e-8  # relative 5e-15
    SystemModel(h)
    with pytest.raises(NonHermitianError):
        SystemModel(np.array([[1, 2 + 1e-9], [2, 3]]))


# -- dissipator -----------------------------------------------------------------

def test_decay_dissipator_entries():
    gamma = 0.37
    ld = build_dissipator(JumpChannel(np.sqrt(gamma) * ketbra(2, G, E)))
    ee, gg, eg, ge = 3, 0, 1, 2  # column stacking: (r, c) -> c*N + r
    assert ld[gg, ee] == pytest.approx(gamma)
    assert ld[ee, ee] == pytest.approx(-gamma)
    assert ld[eg, eg] == pytest.approx(-gamma / 2)
    assert ld[ge, ge] == pytest.approx(-gamma / 2)


def test_zero_channel_is_zero():
    assert np.all(build_dissipator(JumpChannel(np.zeros((2, 2)))) == 0)


def test_dephasing_matches_hilbert_space_formula(rng):
    f = np.sqrt(0.2) * sigma_z()
    ld = build_dissipator(JumpChannel(f, kind="dephasing"))
    ff = f.conj().T @ f
    for _ in range(10):
        rho = random_density(rng, 2)
        expected = f @ rho @ f.conj().T - 0.5 * (ff @ rho + rho @ ff)
        got = apply(ld, rho)
        np.testing.assert_allclose(got, expected, atol=1e-14)
        np.testing.assert_allclose(np.diag(got), 0, atol=1e-14)


@given(seeds)
def test_dissipator_annihilates_trace(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    f = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert np.abs(trace_row(n) @ build_dissipator(f)).max() <= 1e-12 * np.abs(f).max() ** 2


# -- generators -----------------------------------------------------------------

def test_lindblad_minus_nh_is_j_exactly(rng):
    for _ in range(10):
        gens = build_generators(random_elementary_model(rng))
        assert np.array_equal(gens.l_lindblad - gens.l_nh, gens.j)


def test_decay_only_spectrum():
    gamma, delta = 0.4, 0.9
    m = two_level(TwoLevelParams(delta_e=delta, v_eg=0.0, gamma=gamma))
    ev = np.sort_complex(np.linalg.eigvals(build_generators(m).l_lindblad))
    expected = np.sort_complex(np.array([0, -gamma, -gamma / 2 + 1j * delta, -gamma / 2 - 1j * delta]))
    np.testing.assert_allclose(ev, expected, atol=1e-12)


def test_no_channels():
    m = SystemModel(np.diag([0.0, 1.0]))
    gens = build_generators(m)
    lh = build_hamiltonian_superop(m.hamiltonian)
    assert np.array_equal(gens.l_nh, lh)
    assert np.array_equal(gens.l_lindblad, lh)
    assert not gens.j.any()


def test_trace_rows_two_level_decay():
    gamma = 0.3
    m = two_level(TwoLevelParams(delta_e=0.5, v_eg=0.2, gamma=gamma))
    gens = build_generators(m)
    tr = trace_row(2)
    np.testing.assert_allclose(tr @ gens.l_lindblad, 0, atol=1e-15)
    np.testing.assert_allclose(tr @ gens.l_nh, -gamma * vectorize(ketbra(2, E, E)), atol=1e-15)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_preserve_trace_and_hermiticity(name, rng):
    m = PRESETS[name].model()
    gens = build_generators(m)
    assert np.abs(trace_row(m.dim) @ gens.l_lindblad).max() <= 1e-12
    for _ in range(5):
        out = apply(gens.l_lindblad, random_density(rng, m.dim))
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12)


@given(seeds)
def test_l_nh_matches_effective_hamiltonian(seed):
    rng = np.random.default_rng(seed)
    m = random_elementary_model(rng)
    h_nh = nh_hamiltonian(m)
    rho = random_density(rng, m.dim)
    expected = -1j * (h_nh @ rho - rho @ h_nh.conj().T)
    np.testing.assert_allclose(apply(build_generators(m).l_nh, rho), expected, atol=1e-12)


# -- L_mixed(z) -------------------------------------------------------------------

@pytest.fixture
def decay_model():
    return two_level(TwoLevelParams(delta_e=1.0, v_eg=0.2, gamma=0.5, gamma_c=0.3))


def test_l_mixed_at_zero_is_lindblad(decay_model):
    gens = build_generators(decay_model)
    assert np.array_equal(eval_l_mixed(decay_model, 0.0, gens), gens.l_lindblad)


def test_l_mixed_nh_when_gamma_c_zero(decay_model):
    m = decay_model.with_gamma_c(0.0)
    gens = build_generators(m)
    for z in (0.0, 1.0, -2 + 1j):
        assert np.array_equal(eval_l_mixed(m, z, gens), gens.l_nh)


def test_l_mixed_pole(decay_model):
    with pytest.raises(PoleError):
        eval_l_mixed(decay_model, -decay_model.gamma_c)
    with pytest.raises(PoleError):
        eval_l_mixed_lindblad_form(decay_model, -decay_model.gamma_c)


def test_l_mixed_small_z_close_to_lindblad(decay_model):
    gens = build_generators(decay_model)
    gc = decay_model.gamma_c
    for phase in np.exp(1j * np.linspace(0, 2 * np.pi, 7)):
        z = 1e-6 * gc * phase
        dev = np.linalg.norm(eval_l_mixed(decay_model, z, gens) - gens.l_lindblad)
        assert dev / np.linalg.norm(gens.j) <= 2e-6


@settings(max_examples=100)
@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_two_forms_agree(z):
    m = two_level(TwoLevelParams(delta_e=1.0, v_eg=0.2, gamma=0.5, gamma_pump=0.1, gamma_c=0.3))
    if abs(z + m.gamma_c) < 1e-6:
        return
    gens = build_generators(m)
    a = eval_l_mixed(m, z, gens)
    b = eval_l_mixed_lindblad_form(m, z, gens)
    scale = np.linalg.norm(gens.l_lindblad) + abs(m.gamma_c / (z + m.gamma_c)) * np.linalg.norm(gens.j)
    assert np.linalg.norm(a - b) <= 1e-13 * scale


# -- models and states --------------------------------------------------------------

def test_model_validation():
    with pytest.raises(ValueError):
        SystemModel(np.eye(2), gamma_c=-1.0)
    with pytest.raises(ValueError):
        SystemModel(np.eye(2), [JumpChannel(np.eye(3))])
    with pytest.raises(ValueError):
        SystemModel(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(ValueError):
        JumpChannel(np.eye(2), kind="gain")


def test_elementary_transition():
    assert JumpChannel(2.0 * ketbra(3, 0, 2)).elementary_transition() == (2, 0)
    assert JumpChannel(sigma_z()).elementary_transition() is None


def test_check_density_matrix():
    assert check_density_matrix(np.diag([0.3, 0.7])) is None
    assert check_density_matrix(np.diag([0.3, 0.2])) is None
    assert check_density_matrix(np.diag([0.3, 0.2]), require_unit_trace=True) == "unit trace"
    assert check_density_matrix(np.diag([1.2, 0.0])) == "trace bounds"
    assert check_density_matrix(np.diag([1.1, -0.1])) == "positivity"
    assert check_density_matrix(np.array([[0.5, 0.1], [0.0, 0.5]])) == "hermiticity"
    assert check_density_matrix(np.diag([np.nan, 1.0])) == "finite"
