"""Quadratic fermionic Lindbladians: model assembly, block diagonalisation and
small-N full superoperator oracles.

Dissipators are ``L^l_mu = sum_i D^l_{mu i} c_i`` (loss) and
``L^g_mu = sum_i D^g_{mu i} c_i^dagger`` (gain). The Lindblad generator is
``rho' = -i[H, rho] + sum_mu (2 L rho L^dag - {L^dag L, rho})``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .laurent import LaurentSymbol
from .policy import (DEFAULT_POLICY, ConfigError, NumericPolicy, NumericPolicyError,
                     SizeGuardError)

BOUNDARIES = ("open", "periodic")
FULL_SUPEROPERATOR_MAX_SITES = 7


@dataclass(frozen=True)
class LindbladModel:
    n_sites: int
    h: np.ndarray
    d_loss: np.ndarray
    d_gain: np.ndarray
    boundary: str = "open"

    def __post_init__(self):
        n = self.n_sites
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ConfigError(f"n_sites must be a positive integer, got {n!r}")
        h = np.array(self.h, dtype=complex)
        if h.shape != (n, n):
            raise ConfigError(f"h has shape {h.shape}, expected {(n, n)}")
        mats = []
        for name, raw in (("d_loss", self.d_loss), ("d_gain", self.d_gain)):
            arr = np.array(raw, dtype=complex)
            if arr.size == 0:
                arr = np.zeros((0, n), complex)
            if arr.ndim != 2 or arr.shape[1] != n:
                raise ConfigError(f"{name} must be a (channels, {n}) matrix, got shape {arr.shape}")
            mats.append(arr)
        dl, dg = mats
        if np.abs(h - h.conj().T).max(initial=0.0) > DEFAULT_POLICY.hermiticity:
            raise ConfigError("h is not Hermitian")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        for name, arr in (("h", h), ("d_loss", dl), ("d_gain", dg)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def is_balanced(self) -> bool:
        bath = build_bath_matrices(self)
        return np.allclose(bath.m_gain.T, bath.m_loss, atol=1e-12)


@dataclass(frozen=True)
class BathMatrices:
    m_loss: np.ndarray
    m_gain: np.ndarray


@dataclass(frozen=True)
class SimilarityBlocks:
    x: np.ndarray
    z: np.ndarray
    trace_shift: complex


# ---------------------------------------------------------------- presets

def _bonds(n: int, boundary: str, step: int = 1):
    if boundary == "periodic":
        return [(j, (j + step) % n) for j in range(n)]
    return [(j, j + step) for j in range(n - step)]


def hatano_nelson_model(n_sites: int, t: float = 1.0, gamma: float = 0.5,
                        boundary: str = "open") -> LindbladModel:
    """Hopping ``t`` with dissipators ``L^l_j = sqrt(gamma/2)(c_j - i c_{j+1})`` and
    ``L^g_j = (L^l_j)^dagger``. Open chains use bonds j = 0..N-2."""
    if gamma < 0:
        raise ConfigError("gamma must be non-negative")
    if boundary not in BOUNDARIES:
        raise ConfigError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    h = np.zeros((n_sites, n_sites), complex)
    bonds = _bonds(n_sites, boundary)
    for a, b in bonds:
        h[a, b] += t
        h[b, a] += t
    dl = np.zeros((len(bonds), n_sites), complex)
    s = np.sqrt(gamma / 2)
    for m, (a, b) in enumerate(bonds):
        dl[m, a] += s
        dl[m, b] += -1j * s
    return LindbladModel(n_sites, h, dl, dl.conj(), boundary)


def nnn_model(n_sites: int, t: float = 1.0, gamma: float = 0.5, gamma0: float = 1.1,
              t2: float = 0.1, boundary: str = "open") -> LindbladModel:
    """Hatano-Nelson chain plus next-nearest-neighbour hopping ``t2`` and balanced
    on-site loss/gain of rate ``(gamma0 - 2 gamma)/2`` so that the bulk damping
    diagonal equals ``-gamma0``."""
    kappa = (gamma0 - 2 * gamma) / 2
    if kappa < 0:
        raise ConfigError("nnn preset requires gamma0 >= 2*gamma")
    base = hatano_nelson_model(n_sites, t, gamma, boundary)
    h = np.array(base.h)
    for a, b in _bonds(n_sites, boundary, 2):
        h[a, b] += t2
        h[b, a] += t2
    onsite = np.sqrt(kappa) * np.eye(n_sites)
    dl = np.vstack([base.d_loss, onsite])
    dg = np.vstack([base.d_gain, onsite])
    return LindbladModel(n_sites, h, dl, dg, boundary)


# ---------------------------------------------------------------- quadratic algebra

def build_bath_matrices(model: LindbladModel) -> BathMatrices:
    """``M_ij = sum_mu conj(D_{mu i}) D_{mu j}``."""
    ml = model.d_loss.conj().T @ model.d_loss
    mg = model.d_gain.conj().T @ model.d_gain
    return BathMatrices(ml, mg)


def build_damping_matrix(model: LindbladModel) -> np.ndarray:
    """``X = -i h - (M^g)^T - M^l``."""
    bath = build_bath_matrices(model)
    return -1j * model.h - bath.m_gain.T - bath.m_loss


def assemble_nambu_liouvillian(model: LindbladModel) -> np.ndarray:
    bath = build_bath_matrices(model)
    h, ml, mgt = model.h, bath.m_loss, bath.m_gain.T
    return np.block([[-1j * h + mgt - ml, 2 * mgt],
                     [2 * ml, -1j * h - mgt + ml]])


def solve_lyapunov(x: np.ndarray, source: np.ndarray,
                   policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Solve ``X Z + Z X^dagger = source`` with a Schur-based Bartels-Stewart solver."""
    x = np.asarray(x, complex)
    source = np.asarray(source, complex)
    if not np.any(source):
        return np.zeros_like(source)
    lam = np.linalg.eigvals(x)
    gap = np.abs(lam[:, None] + lam[None, :].conj()).min()
    scale = max(1.0, np.abs(lam).max())
    if gap < 1e-12 * scale:
        raise NumericPolicyError("singular Lyapunov equation: lambda_m + conj(lambda_n) ~ 0")
    z = sla.solve_sylvester(x, x.conj().T, source)
    res = np.abs(x @ z + z @ x.conj().T - source).max()
    if res > policy.residual * max(1.0, np.abs(source).max()):
        raise NumericPolicyError(f"Lyapunov residual {res:.3e} exceeds tolerance")
    return z


def block_diagonalize(model: LindbladModel, policy: NumericPolicy = DEFAULT_POLICY) -> SimilarityBlocks:
    """Damping matrix, Z-matrix and constant shift of the quadratic Liouvillian."""
    bath = build_bath_matrices(model)
    x = build_damping_matrix(model)
    lam = np.linalg.eigvals(x)
    if lam.real.max() > policy.stability:
        raise NumericPolicyError("damping matrix has an eigenvalue with positive real part")
    src = 2 * bath.m_gain.T - 2 * bath.m_loss
    z = solve_lyapunov(x, src, policy)
    shift = -np.trace(bath.m_loss + bath.m_gain.T - 1j * model.h)
    return SimilarityBlocks(x, z, complex(shift))


def modular_hamiltonian(z: np.ndarray) -> np.ndarray:
    """``G = ln[(I - Z)(I + Z)^{-1}]`` on the principal branch."""
    z = np.asarray(z, complex)
    n = z.shape[0]
    ev = np.linalg.eigvals(z)
    if np.min(np.abs(1 + ev), initial=np.inf) < 1e-12 or np.min(np.abs(1 - ev), initial=np.inf) < 1e-12:
        raise NumericPolicyError("Z has an eigenvalue at +-1 (pure or empty mode)")
    eye = np.eye(n)
    k = (eye - z) @ np.linalg.inv(eye + z)
    kev = np.linalg.eigvals(k)
    if np.any((kev.real <= 0) & (np.abs(kev.imag) <= 1e-12 * np.maximum(1, np.abs(kev)))):
        raise NumericPolicyError("matrix logarithm undefined: eigenvalue on the closed negative real axis")
    g = sla.logm(k)
    if np.allclose(z, z.conj().T, atol=1e-12):
        g = 0.5 * (g + g.conj().T)
    return g


def steady_state_log_partition(z: np.ndarray) -> complex:
    """``ln(2^N / det(I + Z))``."""
    z = np.asarray(z, complex)
    n = z.shape[0]
    sign, logabs = np.linalg.slogdet(np.eye(n) + z)
    if sign == 0 or not np.isfinite(logabs):
        raise NumericPolicyError("det(I + Z) vanishes")
    return complex(n * np.log(2) - (logabs + np.log(sign)))


# ---------------------------------------------------------------- full superoperator oracle

def jordan_wigner(n: int) -> list[sp.csr_matrix]:
    """Annihilation operators on 2^n dimensional Fock space."""
    eye = sp.identity(2, format="csr")
    zpar = sp.diags([1.0, -1.0]).tocsr()
    low = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    ops = []
    for i in range(n):
        mats = [zpar] * i + [low] + [eye] * (n - i - 1)
        m = mats[0]
        for o in mats[1:]:
            m = sp.kron(m, o, format="csr")
        ops.append(m.astype(complex))
    return ops


def interaction_matrix(interactions: LaurentSymbol, n: int, boundary: str = "open") -> np.ndarray:
    """Real-space ``U_ij`` with ``U_ij = U_{i-j}``."""
    return interactions.to_matrix(n, boundary).real


def build_full_superoperator(model: LindbladModel, interactions: LaurentSymbol | None = None) -> sp.csr_matrix:
    """Liouvillian on the vectorised 4^N space (row-major ``vec``), with
    ``H = sum h_ij c_i^dag c_j + 1/2 sum_ij U_ij n_i n_j``."""
    n = model.n_sites
    if n > FULL_SUPEROPERATOR_MAX_SITES:
        raise SizeGuardError(f"full superoperator limited to N <= {FULL_SUPEROPERATOR_MAX_SITES}")
    c = jordan_wigner(n)
    cd = [o.conj().T.tocsr() for o in c]
    d = 2 ** n
    ham = sp.csr_matrix((d, d), dtype=complex)
    for i, j in zip(*np.nonzero(model.h)):
        ham = ham + model.h[i, j] * (cd[i] @ c[j])
    if interactions is not None and interactions.coeffs:
        umat = interaction_matrix(interactions, n, model.boundary)
        nops = [cd[i] @ c[i] for i in range(n)]
        for i, j in zip(*np.nonzero(umat)):
            ham = ham + 0.5 * umat[i, j] * (nops[i] @ nops[j])
    jumps = [sum(row[i] * c[i] for i in np.nonzero(row)[0]) for row in model.d_loss if np.any(row)]
    jumps += [sum(row[i] * cd[i] for i in np.nonzero(row)[0]) for row in model.d_gain if np.any(row)]
    eye = sp.identity(d, format="csr", dtype=complex)
    lv = -1j * (sp.kron(ham, eye) - sp.kron(eye, ham.T))
    for op in jumps:
        op = sp.csr_matrix(op)
        ldl = op.conj().T @ op
        lv = lv + 2 * sp.kron(op, op.conj()) - sp.kron(ldl, eye) - sp.kron(eye, ldl.T)
    return sp.csr_matrix(lv)


def single_quasiparticle_block(model: LindbladModel, interactions: LaurentSymbol | None = None):
    """Matrix of the Liouvillian on span{c_i^dag P} (P the parity operator).

    Returns ``(block, residual)``; the residual measures invariance of the span.
    At zero interaction the block equals the damping matrix.
    """
    n = model.n_sites
    lv = build_full_superoperator(model, interactions)
    c = jordan_wigner(n)
    d = 2 ** n
    parity = sp.identity(d, format="csr", dtype=complex)
    for o in c:
        parity = parity @ (sp.identity(d) - 2 * o.conj().T @ o)
    basis = np.array([(o.conj().T @ parity).toarray().reshape(-1) for o in c]).T
    image = lv @ basis
    block = np.linalg.lstsq(basis, image, rcond=None)[0]
    return block, float(np.abs(basis @ block - image).max())


def number_difference_sector(n_sites: int, delta: int = 1) -> np.ndarray:
    """Indices of vectorised ``|m><n|`` with ``N_m - N_n = delta``."""
    occ = np.array([bin(s).count("1") for s in range(2 ** n_sites)])
    diff = occ[:, None] - occ[None, :]
    return np.nonzero(diff.reshape(-1) == delta)[0]
