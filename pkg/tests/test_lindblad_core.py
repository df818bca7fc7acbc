import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbsigma.laurent import LaurentSymbol, hatano_nelson_symbol, nearest_neighbor_interaction, nnn_symbol
from nbsigma.lindblad_core import (
    LindbladModel,
    assemble_nambu_liouvillian,
    block_diagonalize,
    build_bath_matrices,
    build_damping_matrix,
    build_full_superoperator,
    hatano_nelson_model,
    modular_hamiltonian,
    nnn_model,
    number_difference_sector,
    single_quasiparticle_block,
    solve_lyapunov,
    steady_state_log_partition,
)
from nbsigma.policy import ConfigError, NumericPolicyError, SizeGuardError


def random_model(seed, n=8, n_loss=None, n_gain=None):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = (a + a.conj().T) / 2
    cl = n_loss if n_loss is not None else int(rng.integers(0, n + 1))
    cg = n_gain if n_gain is not None else int(rng.integers(0, n + 1))
    dl = rng.normal(size=(cl, n)) + 1j * rng.normal(size=(cl, n))
    dg = rng.normal(size=(cg, n)) + 1j * rng.normal(size=(cg, n))
    return LindbladModel(n, h, dl, dg)


def multiset_distance(a, b):
    from scipy.optimize import linear_sum_assignment

    cost = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    r, c = linear_sum_assignment(cost)
    return cost[r, c].max()


# ---------------------------------------------------------------- model validation

def test_model_rejects_non_hermitian_h():
    h = np.array([[0, 1], [0, 0]], complex)
    with pytest.raises(ConfigError):
        LindbladModel(2, h, np.zeros((0, 2)), np.zeros((0, 2)))


def test_model_rejects_dimension_mismatch():
    with pytest.raises(ConfigError):
        LindbladModel(3, np.zeros((3, 3)), np.zeros((1, 2)), np.zeros((0, 3)))
    with pytest.raises(ConfigError):
        LindbladModel(3, np.zeros((2, 2)), np.zeros((0, 3)), np.zeros((0, 3)))


def test_model_rejects_bad_boundary():
    with pytest.raises(ConfigError):
        LindbladModel(2, np.zeros((2, 2)), np.zeros((0, 2)), np.zeros((0, 2)), boundary="twisted")


def test_model_arrays_are_read_only():
    m = hatano_nelson_model(4)
    with pytest.raises(ValueError):
        m.h[0, 0] = 1.0


# ---------------------------------------------------------------- bath matrices

def test_bath_matrices_hatano_nelson_n5():
    gamma = 0.5
    bath = build_bath_matrices(hatano_nelson_model(5, 1.0, gamma))
    ml = bath.m_loss
    assert np.allclose(np.diag(ml)[1:-1], gamma)
    assert np.allclose([ml[0, 0], ml[-1, -1]], gamma / 2)
    for j in range(4):
        assert abs(abs(ml[j, j + 1]) - gamma / 2) < 1e-14
        # opposite imaginary phases above and below the diagonal
        assert np.isclose(ml[j, j + 1], -1j * gamma / 2)
        assert np.isclose(ml[j + 1, j], 1j * gamma / 2)
    assert np.allclose(np.triu(ml, 2), 0)


def test_bath_matrices_hand_computed_n3():
    g = 0.5
    ml = build_bath_matrices(hatano_nelson_model(3, 1.0, g)).m_loss
    want = np.array([[g / 2, -1j * g / 2, 0], [1j * g / 2, g, -1j * g / 2], [0, 1j * g / 2, g / 2]])
    assert np.allclose(ml, want, atol=1e-15)


def test_bath_matrices_zero_dissipators():
    m = LindbladModel(3, np.zeros((3, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
    bath = build_bath_matrices(m)
    assert not bath.m_loss.any() and not bath.m_gain.any()


def test_bath_matrices_single_channel():
    dl = np.zeros((1, 3))
    dl[0, 0] = 1.0
    bath = build_bath_matrices(LindbladModel(3, np.zeros((3, 3)), dl, np.zeros((0, 3))))
    want = np.zeros((3, 3))
    want[0, 0] = 1.0
    assert np.array_equal(bath.m_loss, want)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bath_matrices_hermitian_psd(seed):
    bath = build_bath_matrices(random_model(seed, n=6))
    for m in (bath.m_loss, bath.m_gain):
        assert np.abs(m - m.conj().T).max() < 1e-12
        assert np.linalg.eigvalsh(m).min() > -1e-10


# ---------------------------------------------------------------- damping matrix

def test_damping_matrix_hatano_nelson_bulk():
    t, g = 1.0, 0.5
    x = build_damping_matrix(hatano_nelson_model(20, t, g))
    assert np.allclose(np.diag(x)[1:-1], -2 * g)
    mags = {round(abs(x[5, 6]), 12), round(abs(x[6, 5]), 12)}
    assert mags == {abs(t - g), abs(t + g)}
    assert np.allclose(np.triu(x, 2), 0) and np.allclose(np.tril(x, -2), 0)


def test_damping_matrix_symbol_matches_closed_form():
    t, g = 1.0, 0.5
    x = build_damping_matrix(hatano_nelson_model(20, t, g))
    sym = LaurentSymbol.from_matrix(x, column=10, max_range=1)
    for beta in [0.7, 1.3j, 2.0 * np.exp(0.4j)]:
        want = -2 * g - 1j * (t - g) * beta - 1j * (t + g) / beta
        assert abs(sym(beta) - want) < 1e-13
    assert sym.allclose(hatano_nelson_symbol(t, g))


def test_damping_matrix_edge_diagonal():
    g = 0.5
    x = build_damping_matrix(hatano_nelson_model(20, 1.0, g))
    assert np.isclose(x[0, 0], -g) and np.isclose(x[-1, -1], -g)


def test_damping_matrix_periodic_is_circulant():
    x = build_damping_matrix(hatano_nelson_model(12, 1.0, 0.5, boundary="periodic"))
    assert np.allclose(x, hatano_nelson_symbol().to_matrix(12, "periodic"))


def test_damping_matrix_zero_model():
    m = LindbladModel(4, np.zeros((4, 4)), np.zeros((0, 4)), np.zeros((0, 4)))
    assert not build_damping_matrix(m).any()


def test_nnn_model_bulk_symbol():
    for t2 in (0.04, 0.1):
        x = build_damping_matrix(nnn_model(30, t2=t2))
        sym = LaurentSymbol.from_matrix(x, column=15, max_range=2)
        assert sym.allclose(nnn_symbol(t2=t2), atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_damping_matrix_stable(seed):
    x = build_damping_matrix(random_model(seed))
    assert np.linalg.eigvals(x).real.max() <= 1e-10


@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_symbol_matrix_round_trip(m, seed):
    rng = np.random.default_rng(seed)
    coeffs = {r: complex(rng.normal(), rng.normal()) for r in range(-m, m + 1)}
    sym = LaurentSymbol(coeffs)
    n = 2 * m + 3 + int(rng.integers(0, 5))
    back = LaurentSymbol.from_matrix(sym.to_matrix(n), max_range=m)
    assert back.allclose(sym, atol=1e-14)


# ---------------------------------------------------------------- Nambu Liouvillian

def test_nambu_spectrum_pairing_hatano_nelson():
    m = hatano_nelson_model(8)
    x = build_damping_matrix(m)
    lam = np.linalg.eigvals(assemble_nambu_liouvillian(m))
    ex = np.linalg.eigvals(x)
    assert multiset_distance(lam, np.concatenate([ex, -ex.conj()])) < 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_nambu_spectrum_pairing_random(seed):
    m = random_model(seed, n=5)
    ex = np.linalg.eigvals(build_damping_matrix(m))
    lam = np.linalg.eigvals(assemble_nambu_liouvillian(m))
    assert multiset_distance(lam, np.concatenate([ex, -ex.conj()])) < 1e-8


def test_nambu_zero_model():
    m = LindbladModel(3, np.zeros((3, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
    assert not assemble_nambu_liouvillian(m).any()


def test_nambu_balanced_hadamard_block_triangular():
    m = hatano_nelson_model(8)
    assert m.is_balanced
    n = m.n_sites
    had = np.kron(np.array([[1, 1], [1, -1]]) / np.sqrt(2), np.eye(n))
    rot = had @ assemble_nambu_liouvillian(m) @ had
    assert np.abs(rot[n:, :n]).max() < 1e-14
    x = build_damping_matrix(m)
    assert np.allclose(rot[n:, n:], x)
    assert np.allclose(rot[:n, :n], -x.conj().T)


# ---------------------------------------------------------------- Lyapunov

def test_lyapunov_zero_source():
    x = build_damping_matrix(hatano_nelson_model(6))
    assert not solve_lyapunov(x, np.zeros((6, 6))).any()


def test_lyapunov_scalar_shift():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.allclose(solve_lyapunov(-np.eye(4), a), -a / 2, atol=1e-14)


def test_lyapunov_matches_kronecker_oracle():
    rng = np.random.default_rng(7)
    n = 6
    x = build_damping_matrix(random_model(7, n=n, n_loss=n, n_gain=2))
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    src = b + b.conj().T
    z = solve_lyapunov(x, src)
    kron = np.kron(x, np.eye(n)) + np.kron(np.eye(n), x.conj())
    zk = np.linalg.solve(kron, src.reshape(-1)).reshape(n, n)
    assert np.abs(z - zk).max() < 1e-10


def test_lyapunov_singular_raises():
    x = np.diag([-1.0, 0.0 + 1j])
    with pytest.raises(NumericPolicyError):
        solve_lyapunov(x, np.eye(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lyapunov_residual_random_models(seed):
    m = random_model(seed, n=8, n_loss=int(np.random.default_rng(seed).integers(1, 9)))
    blocks = block_diagonalize(m)
    bath = build_bath_matrices(m)
    res = blocks.x @ blocks.z + blocks.z @ blocks.x.conj().T - 2 * bath.m_gain.T + 2 * bath.m_loss
    assert np.abs(res).max() < 1e-10 * max(1.0, np.abs(bath.m_loss).max() + np.abs(bath.m_gain).max())
    assert np.linalg.eigvals(blocks.x).real.max() <= 1e-10


def test_balanced_models_have_zero_z():
    for m in (hatano_nelson_model(10), nnn_model(10)):
        assert np.abs(block_diagonalize(m).z).max() < 1e-12


def test_block_diagonalize_trace_shift():
    m = hatano_nelson_model(5)
    bath = build_bath_matrices(m)
    want = -np.trace(bath.m_loss + bath.m_gain.T - 1j * m.h)
    assert block_diagonalize(m).trace_shift == pytest.approx(want)


# ---------------------------------------------------------------- modular Hamiltonian and partition function

def test_modular_hamiltonian_zero():
    assert np.abs(modular_hamiltonian(np.zeros((3, 3)))).max() < 1e-14


def test_modular_hamiltonian_scalar():
    g = modular_hamiltonian(0.5 * np.eye(3))
    assert np.allclose(g, np.log(1 / 3) * np.eye(3), atol=1e-13)


def test_modular_hamiltonian_round_trip():
    from scipy.linalg import expm

    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    z = a + a.conj().T
    z *= 0.8 / np.abs(np.linalg.eigvalsh(z)).max()
    g = modular_hamiltonian(z)
    assert np.abs(g - g.conj().T).max() < 1e-9
    eg = expm(g)
    eye = np.eye(5)
    assert np.abs((eye - z) @ np.linalg.inv(eye + z) - eg).max() < 1e-8
    assert np.abs((eye - eg) @ np.linalg.inv(eye + eg) - z).max() < 1e-8


def test_modular_hamiltonian_singular():
    with pytest.raises(NumericPolicyError):
        modular_hamiltonian(np.diag([0.2, 1.0]))
    with pytest.raises(NumericPolicyError):
        modular_hamiltonian(np.diag([0.2, -1.0]))


def test_modular_hamiltonian_negative_axis_rejected():
    with pytest.raises(NumericPolicyError):
        modular_hamiltonian(np.diag([0.2, 2.0]))


def test_log_partition_cases():
    assert steady_state_log_partition(np.zeros((10, 10))) == pytest.approx(10 * np.log(2))
    want = 4 * np.log(2) - 4 * np.log(1.5)
    assert steady_state_log_partition(0.5 * np.eye(4)) == pytest.approx(want)


def test_log_partition_eigen_product_oracle():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    z = 0.3 * (a + a.conj().T) / np.abs(np.linalg.eigvalsh(a + a.conj().T)).max()
    zk = np.linalg.eigvalsh(z)
    want = np.log(np.prod(1 + (1 - zk) / (1 + zk)))
    assert steady_state_log_partition(z) == pytest.approx(want, abs=1e-12)


def test_log_partition_singular():
    with pytest.raises(NumericPolicyError):
        steady_state_log_partition(-np.eye(3))


# ---------------------------------------------------------------- full superoperator oracle

def test_full_superoperator_identity_zero_mode():
    m = hatano_nelson_model(4)
    lv = build_full_superoperator(m)
    eye = np.eye(16).reshape(-1)
    assert np.linalg.norm(lv @ eye) < 1e-10
    assert np.linalg.eigvals(lv.toarray()).real.max() < 1e-9


def test_full_superoperator_identity_zero_mode_interacting():
    m = hatano_nelson_model(4)
    lv = build_full_superoperator(m, nearest_neighbor_interaction(0.3))
    assert np.linalg.norm(lv @ np.eye(16).reshape(-1)) < 1e-10


def test_full_superoperator_zero_model():
    m = LindbladModel(3, np.zeros((3, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
    assert build_full_superoperator(m).count_nonzero() == 0


def test_full_superoperator_size_guard():
    with pytest.raises(SizeGuardError):
        build_full_superoperator(hatano_nelson_model(8))


def test_full_superoperator_single_sector_reproduces_x():
    m = hatano_nelson_model(3)
    block, residual = single_quasiparticle_block(m)
    assert residual < 1e-12
    x = build_damping_matrix(m)
    assert multiset_distance(np.linalg.eigvals(block), np.linalg.eigvals(x)) < 1e-8
    lv = build_full_superoperator(m).toarray()
    idx = number_difference_sector(3, 1)
    sector = np.linalg.eigvals(lv[np.ix_(idx, idx)])
    for lam in np.linalg.eigvals(x):
        assert np.abs(sector - lam).min() < 1e-8


def test_number_difference_sector_size():
    from math import comb

    n = 4
    want = sum(comb(n, k + 1) * comb(n, k) for k in range(n))
    assert len(number_difference_sector(n, 1)) == want
