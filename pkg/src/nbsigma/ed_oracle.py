"""Exact diagonalisation of the interacting Liouvillian truncated to one and three
quasi-particles, plus finite-size extrapolation.

Basis: single states ``|i_a>`` followed by triples ``|p_a, q_a; k_b>`` with p < q.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lindblad_core import LindbladModel, build_bath_matrices, build_damping_matrix, interaction_matrix
from .nonbloch_band import obc_spectrum
from .policy import DEFAULT_POLICY, ConfigError, ConvergenceError, NumericPolicy

# Weight of the diagonal interaction terms; 1/4 reproduces first_order_shift.
DEFAULT_DIAGONAL_WEIGHT = 0.25
DENSE_MAX_DIM = 4000


@dataclass(frozen=True)
class TruncatedBasis:
    n_sites: int

    @property
    def n_pairs(self) -> int:
        return self.n_sites * (self.n_sites - 1) // 2

    @property
    def total_dim(self) -> int:
        return self.n_sites + self.n_pairs * self.n_sites

    def pair_index(self, p: int, q: int) -> int:
        n = self.n_sites
        return p * (2 * n - p - 1) // 2 + (q - p - 1)

    def triple(self, p: int, q: int, k: int) -> int:
        """Index of |p_a, q_a; k_b> for p < q."""
        return self.n_sites + self.pair_index(p, q) * self.n_sites + k

    def triple_states(self):
        n = self.n_sites
        return [(p, q, k) for p in range(n) for q in range(p + 1, n) for k in range(n)]


@dataclass
class ScalingSeries:
    sizes: list
    values: list
    slope: complex | None = None
    intercept: complex | None = None
    residual: float | None = None

    def __post_init__(self):
        if list(self.sizes) != sorted(set(self.sizes)):
            raise ConfigError("sizes must be strictly increasing")
        if len(self.sizes) != len(self.values):
            raise ConfigError("sizes and values differ in length")


def build_truncated_liouvillian(model: LindbladModel, interaction, diagonal_weight: float = DEFAULT_DIAGONAL_WEIGHT) -> sp.csr_matrix:
    """Sparse Liouvillian on the 1 + 3 quasi-particle sector of a balanced model.

    ``interaction`` is an InteractionSpec or a LaurentSymbol.
    """
    bath = build_bath_matrices(model)
    if not np.allclose(bath.m_gain.T, bath.m_loss, atol=1e-12):
        raise ConfigError("truncated ED requires balanced gain and loss, (M^g)^T = M^l")
    usym = getattr(interaction, "u_symbol", interaction)
    x = build_damping_matrix(model)
    n = model.n_sites
    umat = interaction_matrix(usym, n, model.boundary)
    basis = TruncatedBasis(n)
    s = umat.sum(axis=1)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    nz_cols = [np.nonzero(x[:, j])[0] for j in range(n)]
    for i in range(n):
        for j in range(n):
            if x[i, j] != 0:
                add(i, j, x[i, j])
        if diagonal_weight and s[i]:
            add(i, i, -1j * diagonal_weight * s[i])
    xc = x.conj()
    for p, q, k in basis.triple_states():
        col = basis.triple(p, q, k)
        if diagonal_weight:
            d = s[p] + s[q] - s[k]
            if d:
                add(col, col, -1j * diagonal_weight * d)
        for y in nz_cols[p]:
            if y == q:
                continue
            if y < q:
                add(basis.triple(y, q, k), col, x[y, p])
            else:
                add(basis.triple(q, y, k), col, -x[y, p])
        for y in nz_cols[q]:
            if y == p:
                continue
            if y > p:
                add(basis.triple(p, y, k), col, x[y, q])
            else:
                add(basis.triple(y, p, k), col, -x[y, q])
        for y in nz_cols[k]:
            add(basis.triple(p, q, y), col, xc[y, k])
    # doublon creation / annihilation: |l_a> <-> |l_a, m_a; m_b>
    for l, m in zip(*np.nonzero(umat)):
        if l == m:
            continue
        sign = 1.0 if l < m else -1.0
        r = basis.triple(min(l, m), max(l, m), m)
        v = -0.5j * umat[m, l] * sign
        add(r, l, v)
        add(l, r, v)
    dim = basis.total_dim
    return sp.csr_matrix((np.array(vals, complex), (rows, cols)), shape=(dim, dim))


def _unperturbed_pair(x: np.ndarray, target_e0: complex):
    w, vl, vr = sla.eig(x, left=True, right=True)
    i = int(np.argmin(np.abs(w - target_e0)))
    return w[i], vl[:, i], vr[:, i]


def _overlap(vl0: np.ndarray, v: np.ndarray, n: int) -> float:
    return float(abs(np.vdot(vl0, v[:n])) / (np.linalg.norm(vl0) * np.linalg.norm(v)))


def ed_selfenergy(model: LindbladModel, interaction, target_e0: complex,
                  diagonal_weight: float = DEFAULT_DIAGONAL_WEIGHT, dense_max_dim: int = DENSE_MAX_DIM,
                  n_candidates: int = 3, policy: NumericPolicy = DEFAULT_POLICY, details: bool = False):
    """Shift of the truncated-ED eigenvalue continuously connected to ``target_e0``.

    Each candidate eigenvalue nearest the unperturbed one gets its eigenvector
    from one inverse-iteration step on a fixed generic start vector; the
    candidate whose eigenvector overlaps most with the unperturbed left
    eigenvector (biorthogonal overlap) is tracked.
    """
    n = model.n_sites
    a = build_truncated_liouvillian(model, interaction, diagonal_weight)
    x = build_damping_matrix(model)
    e0, vl0, vr0 = _unperturbed_pair(x, target_e0)
    dim = a.shape[0]
    v0 = np.zeros(dim, complex)
    v0[:n] = vr0
    if dim <= dense_max_dim:
        ev = np.linalg.eigvals(a.toarray())
        solver, iterations = "dense", 0
    else:
        k = min(n_candidates + 2, dim - 2)
        try:
            ev = spla.eigs(a.tocsc(), k=k, sigma=e0, v0=v0, which="LM", return_eigenvectors=False,
                           maxiter=5000, tol=1e-13)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"shift-invert eigensolver did not converge: {exc}") from exc
        solver, iterations = "shift_invert", k
    order = np.argsort(np.abs(ev - e0))
    cands = ev[order[:n_candidates]]
    rng = np.random.default_rng(0)
    start = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    eye = sp.identity(dim, format="csc", dtype=complex)
    ac = a.tocsc()
    scores, vecs = [], []
    for lam in cands:
        shift = lam + 1e-9 * max(1.0, abs(lam))
        v = spla.splu((ac - shift * eye).tocsc()).solve(start)
        v /= np.linalg.norm(v)
        vecs.append(v)
        scores.append(_overlap(vl0, v, n))
    scores = np.array(scores)
    best = int(np.argmax(scores))
    vb = vecs[best]
    residual = float(np.linalg.norm(a @ vb - cands[best] * vb) / np.linalg.norm(vb))
    if len(cands) > 1:
        other = np.delete(np.arange(len(cands)), best)
        if np.any(np.abs(cands[other] - cands[best]) < policy.tracking_tol):
            raise ConvergenceError("ambiguous eigenvalue tracking: degenerate perturbed eigenvalues")
    shift = complex(cands[best] - e0)
    if details:
        return shift, {"e0": complex(e0), "eigenvalue": complex(cands[best]), "solver": solver,
                       "iterations": iterations, "overlap": float(scores[best]), "residual": residual,
                       "dim": dim}
    return shift


def nearest_obc_eigenvalue(model: LindbladModel, target: complex, radius: float | None = None) -> complex:
    """Finite-chain eigenvalue of X closest to ``target`` (e.g. X at a GBZ angle)."""
    x = build_damping_matrix(model)
    ev = obc_spectrum(x, radius=radius) if radius else np.linalg.eigvals(x)
    return complex(ev[np.argmin(np.abs(ev - target))])


def fit_scaling_series(sizes, values) -> ScalingSeries:
    """Least-squares fit ``value = intercept + slope / N``."""
    series = ScalingSeries(list(sizes), [complex(v) for v in values])
    if len(series.sizes) < 4:
        raise ConfigError("finite-size extrapolation needs at least 4 sizes")
    inv = 1.0 / np.asarray(series.sizes, float)
    design = np.column_stack([np.ones_like(inv), inv])
    if np.linalg.cond(design) > 1e12:
        raise ConvergenceError("ill-conditioned finite-size fit")
    y = np.asarray(series.values, complex)
    coef, *_ = np.linalg.lstsq(design.astype(complex), y, rcond=None)
    series.intercept, series.slope = complex(coef[0]), complex(coef[1])
    series.residual = float(np.abs(design @ coef - y).max())
    return series


def finite_size_extrapolate(series: ScalingSeries) -> complex:
    if series.intercept is None:
        series = fit_scaling_series(series.sizes, series.values)
    return series.intercept
