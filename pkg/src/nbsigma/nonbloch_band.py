"""Non-Bloch band theory for single-band Laurent symbols."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .laurent import LaurentSymbol
from .policy import DEFAULT_POLICY, ConfigError, NumericPolicy, NumericPolicyError


@dataclass(frozen=True)
class GbzCurve:
    samples: tuple  # ((beta, energy), ...) ordered by arg(beta)
    hopping_range: int
    analytic_radius: float | None = None

    @property
    def betas(self) -> np.ndarray:
        return np.array([b for b, _ in self.samples], dtype=complex)

    @property
    def energies(self) -> np.ndarray:
        return np.array([e for _, e in self.samples], dtype=complex)

    def radius(self) -> float:
        """Analytic radius, or the mean sample modulus for non-circular curves."""
        if self.analytic_radius is not None:
            return self.analytic_radius
        return float(np.mean(np.abs(self.betas)))


@dataclass(frozen=True)
class EigenstateDecomposition:
    energy: complex
    roots: np.ndarray
    phi_r: np.ndarray
    phi_l: np.ndarray
    n_sites: int
    pole_order: int  # index M: GBZ pair is roots[M-1], roots[M]
    degenerate: bool = False
    extra_null: tuple = field(default=())

    def right_state(self) -> np.ndarray:
        j = np.arange(1, self.n_sites + 1)
        return _power_sum(self.roots, self.phi_r, j)

    def left_state(self) -> np.ndarray:
        j = np.arange(1, self.n_sites + 1)
        return _power_sum(1 / self.roots, self.phi_l, j)


def _power_sum(roots, coeffs, j):
    out = np.zeros(len(j), complex)
    for b, p in zip(roots, coeffs):
        if p != 0:
            out += p * np.exp(j * np.log(b + 0j))
    return out


def _check_symbol(symbol: LaurentSymbol):
    if symbol.min_offset >= 0 or symbol.max_offset <= 0:
        raise ConfigError("symbol needs both positive and negative offsets (nonzero leading and trailing coefficients)")


def _char_poly(symbol: LaurentSymbol, energy: complex) -> np.ndarray:
    """Coefficients (highest power first) of ``beta^p (E - X(beta))``, p = max offset."""
    p, q = symbol.max_offset, symbol.min_offset
    deg = p - q
    coef = np.zeros(deg + 1, complex)  # coef[k] multiplies beta^k
    coef[p] += energy
    for r, v in symbol.coeffs.items():
        coef[p - r] -= v
    return coef[::-1]


def _sort_roots(roots: np.ndarray) -> np.ndarray:
    # round modulus so that numerically tied moduli fall back to the argument
    key_mod = np.round(np.abs(roots), 12)
    order = np.lexsort((np.angle(roots), key_mod))
    return roots[order]


def characteristic_roots(symbol: LaurentSymbol, energy: complex) -> np.ndarray:
    """All roots of ``E = X(beta)`` sorted by modulus, ties broken by argument."""
    _check_symbol(symbol)
    roots = np.roots(_char_poly(symbol, energy))
    return _sort_roots(roots)


def is_stable(symbol: LaurentSymbol, n: int = 4096, tol: float = DEFAULT_POLICY.stability) -> bool:
    k = 2 * np.pi * np.arange(n) / n
    return float(np.max(np.real(symbol(np.exp(1j * k))))) <= tol


def _refine_pair(symbol: LaurentSymbol, beta: float, partner: complex, iters: int = 30):
    """Newton refinement onto the locus X(beta) = X(beta e^{i phi}) at fixed phi."""
    phi = np.angle(partner / beta)
    if abs(np.sin(phi / 2)) < 1e-6:
        return beta
    rot = np.exp(1j * phi)
    dsym = LaurentSymbol({r + 1: -r * v for r, v in symbol.coeffs.items()})  # dX/dbeta
    b = complex(beta)
    for _ in range(iters):
        f = symbol(b) - symbol(b * rot)
        df = dsym(b) - rot * dsym(b * rot)
        if df == 0:
            break
        step = f / df
        b -= step
        if abs(step) < 1e-15 * abs(b):
            break
    return b


def compute_gbz(symbol: LaurentSymbol, n_samples: int = 512, reference_size: int = 120,
                policy: NumericPolicy = DEFAULT_POLICY) -> GbzCurve:
    """Generalized Brillouin zone.

    Nearest-neighbour symbols give the analytic circle of radius
    ``sqrt(|c_{+1}| / |c_{-1}|)``. Otherwise the OBC Toeplitz matrix at
    ``reference_size`` is diagonalised and the modulus-degenerate middle root
    pair of each eigenvalue is emitted (after Newton refinement onto the pair locus).
    """
    _check_symbol(symbol)
    if n_samples < 8:
        raise ConfigError("n_samples must be at least 8")
    if not is_stable(symbol, tol=policy.stability):
        raise NumericPolicyError("symbol is unstable: max Re X on the unit circle is positive")
    m = symbol.range
    if symbol.max_offset == 1 and symbol.min_offset == -1:
        rho = float(np.sqrt(abs(symbol.coeffs[1]) / abs(symbol.coeffs[-1])))
        th = 2 * np.pi * np.arange(n_samples) / n_samples
        betas = rho * np.exp(1j * th)
        energies = symbol(betas)
        return GbzCurve(tuple(zip(betas, energies)), 1, rho)
    p = symbol.max_offset
    coarse = gbz_from_agbz(symbol)
    rho0 = float(np.exp(np.mean(np.log(np.abs(coarse))))) if len(coarse) else 1.0
    pts = []
    for e in obc_spectrum(symbol, reference_size, rho0):
        roots = characteristic_roots(symbol, e)
        b1, b2 = roots[p - 1], roots[p]
        for b, partner in ((b1, b2), (b2, b1)):
            br = _refine_pair(symbol, b, partner)
            if _on_gbz(symbol, br, 1e-6):
                pts.append(br)
    pts = np.array(pts)
    if len(pts) < 8:
        raise NumericPolicyError("insufficient GBZ samples")
    pts = _resample_uniform(symbol, pts, n_samples)
    return GbzCurve(tuple(zip(pts, symbol(pts))), m, None)


def _pair_partner(symbol: LaurentSymbol, beta: complex) -> complex:
    roots = characteristic_roots(symbol, symbol(beta))
    p = symbol.max_offset
    pair = roots[p - 1:p + 1]
    return pair[np.argmax(np.abs(pair - beta))]


def _solve_at_angle(symbol: LaurentSymbol, phi: float, r: float, psi: float, iters: int = 40):
    """Newton on X(r e^{i phi}) = X(r e^{i(phi + psi)}) for real (r, psi)."""
    dsym = LaurentSymbol({k + 1: -k * v for k, v in symbol.coeffs.items()})
    for _ in range(iters):
        e1, e2 = np.exp(1j * phi), np.exp(1j * (phi + psi))
        b1, b2 = r * e1, r * e2
        f = symbol(b1) - symbol(b2)
        d1, d2 = dsym(b1), dsym(b2)
        jr = d1 * e1 - d2 * e2
        jp = -d2 * 1j * b2
        jac = np.array([[jr.real, jp.real], [jr.imag, jp.imag]])
        try:
            dr, dp = np.linalg.solve(jac, [-f.real, -f.imag])
        except np.linalg.LinAlgError:
            break
        r, psi = r + dr, psi + dp
        if r <= 0:
            break
        if abs(dr) < 1e-15 * r and abs(dp) < 1e-15:
            break
    return r * np.exp(1j * phi)


def _resample_uniform(symbol: LaurentSymbol, pts: np.ndarray, n: int) -> np.ndarray:
    """Resample a star-shaped GBZ at uniformly spaced arguments so that the
    trapezoid rule in arg(beta) is spectrally accurate on smooth arcs.
    Angles whose refinement leaves the GBZ keep the nearest original sample."""
    ang = np.angle(pts)
    psis = np.array([np.angle(_pair_partner(symbol, b) / b) for b in pts])
    out = []
    for phi in -np.pi + 2 * np.pi * (np.arange(n) + 0.5) / n:
        dist = np.abs(np.angle(np.exp(1j * (ang - phi))))
        found = None
        for k in np.argsort(dist)[:4]:
            b = _solve_at_angle(symbol, phi, abs(pts[k]), psis[k])
            if np.isfinite(b) and abs(b) > 0 and _on_gbz(symbol, b, 1e-6):
                found = b
                break
        out.append(found if found is not None else pts[np.argmin(dist)])
    out = np.array(out)
    return out[np.argsort(np.angle(out), kind="stable")]


def _on_gbz(symbol: LaurentSymbol, beta: complex, tol: float) -> bool:
    roots = characteristic_roots(symbol, symbol(beta))
    p = symbol.max_offset
    m1, m2 = abs(roots[p - 1]), abs(roots[p])
    if abs(m1 - m2) > tol * m1:
        return False
    return min(abs(roots[p - 1] - beta), abs(roots[p] - beta)) < tol * abs(beta)


def gbz_from_agbz(symbol: LaurentSymbol, n_phi: int = 512, tol: float = 1e-6) -> np.ndarray:
    """GBZ points obtained by keeping the aGBZ points that form the middle root pair."""
    agbz = agbz_locus(symbol, n_phi)
    pts = np.array([b for b in agbz.betas if _on_gbz(symbol, b, tol)])
    return pts[np.argsort(np.angle(pts), kind="stable")] if len(pts) else pts


def obc_spectrum(symbol_or_matrix, n_sites: int | None = None, radius: float | None = None) -> np.ndarray:
    """OBC eigenvalues computed after the similarity transform diag(radius^j).

    The transform leaves the spectrum unchanged but removes most of the
    exponential non-normality that ruins a direct dense eigensolve.
    """
    if isinstance(symbol_or_matrix, LaurentSymbol):
        mat = symbol_or_matrix.to_matrix(n_sites)
        if radius is None:
            coarse = gbz_from_agbz(symbol_or_matrix)
            radius = float(np.exp(np.mean(np.log(np.abs(coarse))))) if len(coarse) else 1.0
    else:
        mat = np.asarray(symbol_or_matrix, complex)
        radius = 1.0 if radius is None else radius
    s = radius ** np.arange(mat.shape[0], dtype=float)
    return np.linalg.eigvals((mat / s[:, None]) * s[None, :])


def pt_breaking_measure(symbol: LaurentSymbol, n_sites: int = 120) -> float:
    """Largest deviation of Re E from the on-site value over the bulk OBC spectrum.

    This is the largest |Im| of the effective Hamiltonian i(X - c_0), which is
    real below the PT transition.
    """
    e = obc_spectrum(symbol, n_sites)
    return float(np.abs(e.real - symbol.coeffs.get(0, 0).real).max())


def gbz_pair_gap(symbol: LaurentSymbol, beta: complex) -> float:
    """Relative modulus gap of the middle root pair at energy X(beta)."""
    roots = characteristic_roots(symbol, symbol(beta))
    p = symbol.max_offset
    return float(abs(abs(roots[p - 1]) - abs(roots[p])) / abs(roots[p - 1]))


def agbz_locus(symbol: LaurentSymbol, n_phi: int = 256) -> GbzCurve:
    """Auxiliary GBZ: all solutions of X(beta) = X(beta e^{i phi}) for phi in (0, 2 pi).

    Every point is a modulus-degenerate root pair of the characteristic equation.
    """
    _check_symbol(symbol)
    p, q = symbol.max_offset, symbol.min_offset
    pts = []
    for phi in 2 * np.pi * (np.arange(1, n_phi) / n_phi):
        coef = np.zeros(p - q + 1, complex)
        for r, v in symbol.coeffs.items():
            coef[p - r] += v * (1 - np.exp(-1j * r * phi))
        coef = np.trim_zeros(coef[::-1], "f")
        if len(coef) > 1:
            pts.extend(r for r in np.roots(coef) if r != 0)
    pts = np.array(pts)
    return GbzCurve(tuple(zip(pts, symbol(pts))), symbol.range, None)


def write_gbz_csv(curve: GbzCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re_beta", "im_beta", "re_energy", "im_energy"])
        for b, e in curve.samples:
            w.writerow([repr(float(b.real)), repr(float(b.imag)), repr(float(e.real)), repr(float(e.imag))])


def _contour_weights(betas: np.ndarray) -> np.ndarray:
    """Trapezoid weights for (1/2 pi i) oint d(beta)/beta over a closed sampled curve.

    Samples uniform in arg(beta) use the spectral derivative of log|beta|;
    otherwise the segment-averaged rule applies.
    """
    n = len(betas)
    ang = np.unwrap(np.angle(betas))
    steps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
    if np.abs(steps - 2 * np.pi / n).max() < 1e-9:
        k = np.fft.fftfreq(n, 1.0 / n)
        if n % 2 == 0:
            k[n // 2] = 0
        dlogr = np.fft.ifft(1j * k * np.fft.fft(np.log(np.abs(betas)))).real
        return (1 - 1j * dlogr) / n
    logb = np.log(np.abs(betas)) + 1j * ang
    nxt = np.roll(logb, -1)
    nxt[-1] += 2j * np.pi
    seg = nxt - logb
    w = 0.5 * (seg + np.roll(seg, 1))
    return w / (2j * np.pi)


def obc_green_function(symbol: LaurentSymbol, z: complex, i: int, j: int, gbz: GbzCurve,
                       policy: NumericPolicy = DEFAULT_POLICY) -> complex:
    """Bulk OBC resolvent ``[(z - X)^{-1}]_{ij}`` from the GBZ contour integral."""
    if not symbol.coeffs or all(r == 0 for r in symbol.coeffs):
        c = symbol.coeffs.get(0, 0)
        if abs(z - c) < policy.pole_tol:
            raise NumericPolicyError("z coincides with the constant symbol")
        return complex((i == j) / (z - c))
    betas = gbz.betas
    den = z - symbol(betas)
    if np.abs(den).min() < 1e-6:
        raise NumericPolicyError("z lies on the GBZ image of the spectrum")
    f = betas ** (i - j) / den
    if gbz.analytic_radius is not None:
        return complex(np.mean(f))
    return complex(np.sum(_contour_weights(betas) * f))


def winding_number(symbol: LaurentSymbol, z: complex, gbz: GbzCurve) -> float:
    vals = symbol(gbz.betas) - z
    ph = np.unwrap(np.angle(np.append(vals, vals[0])))
    return float((ph[-1] - ph[0]) / (2 * np.pi))


def _boundary_null(roots: np.ndarray, rows_low: int, rows_high: int, n: int):
    """Null vectors of the open-boundary system in column-normalised log form."""
    logb = np.log(roots.astype(complex))
    exps = [1 - nu for nu in range(1, rows_low + 1)] + [n + nu for nu in range(1, rows_high + 1)]
    logm = np.array([[e * lb for lb in logb] for e in exps])
    colmax = logm.real.max(axis=0)
    mat = np.exp(logm - colmax[None, :])
    _, s, vh = np.linalg.svd(mat)
    vecs = vh.conj()[::-1]  # ascending singular value
    svals = s[::-1]
    # undo the column normalisation in log space, then rescale
    out = []
    for v in vecs:
        logv = np.log(np.abs(v) + 1e-300) - colmax
        phase = np.exp(1j * np.angle(v))
        ref = logv.max()
        out.append(np.exp(logv - ref) * phase * (np.abs(v) > 0))
    rel = svals / s[0]
    return out, rel, mat


def boundary_coefficients(symbol: LaurentSymbol, energy: complex, n_sites: int,
                          policy: NumericPolicy = DEFAULT_POLICY) -> EigenstateDecomposition:
    """Coefficients of ``psi_j = sum_mu phi^R_mu beta_mu^j`` (and the left analogue
    ``psi^L_j = sum_mu phi^L_mu beta_mu^{-j}``) for an OBC eigenvalue."""
    _check_symbol(symbol)
    p, q = symbol.max_offset, -symbol.min_offset
    roots = characteristic_roots(symbol, energy)
    null_r, rel_r, _ = _boundary_null(roots, p, q, n_sites)
    null_l, rel_l, _ = _boundary_null(1 / roots, q, p, n_sites)
    degenerate = bool(len(rel_r) > 1 and rel_r[1] < 1e-8)
    if rel_r[0] > 1e-6:
        warnings.warn("energy does not appear to be an OBC eigenvalue (boundary system not singular)")
    mid = [p - 1, p]

    def norm(v):
        k = mid[int(np.argmax(np.abs(v[mid])))]
        return v / v[k]

    phi_r, phi_l = norm(null_r[0]), norm(null_l[0])
    extra = (norm(null_r[1]),) if degenerate else ()
    return EigenstateDecomposition(complex(energy), roots, phi_r, phi_l, n_sites, p, degenerate, extra)


def boundary_residual(decomp: EigenstateDecomposition) -> float:
    """Relative residual of the column-normalised boundary system."""
    p = decomp.pole_order
    q = len(decomp.roots) - p
    n = decomp.n_sites
    logb = np.log(decomp.roots.astype(complex))
    exps = [1 - nu for nu in range(1, p + 1)] + [n + nu for nu in range(1, q + 1)]
    logm = np.array([[e * lb for lb in logb] for e in exps])
    # scale each row by its largest entry so that both edges count equally
    rowmax = logm.real.max(axis=1)
    mat = np.exp(logm - rowmax[:, None])
    phi = decomp.phi_r
    return float(np.linalg.norm(mat @ phi) / np.linalg.norm(phi))


def scaling_hierarchy_ratio(decomp: EigenstateDecomposition) -> float:
    """``N min_{mu in pair}|phi^R_mu phi^L_mu|`` over the largest cross term
    ``|phi^R_mu phi^L_nu sum_j (beta_mu/beta_nu)^j|``, mu != nu."""
    n = decomp.n_sites
    p = decomp.pole_order
    j = np.arange(1, n + 1)
    roots, pr, pl = decomp.roots, decomp.phi_r, decomp.phi_l
    diag = n * min(abs(pr[p - 1] * pl[p - 1]), abs(pr[p] * pl[p]))
    cross = 0.0
    for a in range(len(roots)):
        for b in range(len(roots)):
            if a == b:
                continue
            s = np.sum(np.exp(j * np.log(roots[a] / roots[b] + 0j)))
            cross = max(cross, abs(pr[a] * pl[b] * s))
    return float(diag / cross) if cross > 0 else float("inf")
