"""Second-order non-Bloch self-energy of dissipative quasi-particles.

Three routes are provided:

* ``sigma_bz_double``: double integral over real momenta with the third
  momentum fixed by complex momentum conservation, beta_3 = beta / (beta_1 beta_2).
  The inner integral is done exactly by residues, the outer one by the
  trapezoid rule. This is the production route.
* ``sigma_gbz_triple``: Laurent coefficients from a triple contour integral,
  resummed over |r| <= r_max. Validation only.
* ``realspace_effective_element``: resolvent of the three-particle sector of a
  finite chain. Ground truth for both integrals.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .laurent import LaurentSymbol
from .lindblad_core import LindbladModel
from .nonbloch_band import (EigenstateDecomposition, GbzCurve, boundary_coefficients,
                            characteristic_roots, obc_spectrum)
from .policy import (DEFAULT_POLICY, ConfigError, NumericPolicy,
                     NumericPolicyError, SizeGuardError)

REALSPACE_MAX_SITES = 40
METHODS = ("gbz_triple", "bz_double", "realspace")


@dataclass(frozen=True)
class InteractionSpec:
    """Density-density interaction ``U(beta) = sum_r U_r beta^{-r}``."""

    u_symbol: LaurentSymbol
    u: float | None = None

    def __post_init__(self):
        if not self.u_symbol.is_real_symmetric():
            raise ConfigError("interaction coefficients must be real and symmetric, U_r = U_{-r}")

    @classmethod
    def nearest_neighbor(cls, u: float) -> "InteractionSpec":
        return cls(LaurentSymbol({1: u, -1: u}), u)


@dataclass(frozen=True)
class SelfEnergyValue:
    value: complex
    method: str
    quadrature_points: int
    error_estimate: float
    converged: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if not (np.isfinite(self.value) and np.isfinite(self.error_estimate)):
            raise NumericPolicyError("non-finite self-energy")


@dataclass(frozen=True)
class PerturbedBandPoint:
    beta: complex
    e0: complex
    sigma1: complex
    sigma2: SelfEnergyValue
    e_total: complex = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "e_total", self.e0 + self.sigma1 + self.sigma2.value)


def _usym(interaction) -> LaurentSymbol:
    return getattr(interaction, "u_symbol", interaction)


def first_order_shift(interaction) -> complex:
    """``-(i/4) sum_r U_r``."""
    return -0.25j * _usym(interaction).total().real


# ---------------------------------------------------------------- BZ double integral

def _laurent_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for i, x in a.items():
        for j, y in b.items():
            out[i + j] = out.get(i + j, 0) + x * y
    return out


def _residue_inner(num: list, den: list, k1: np.ndarray):
    """``(1/2 pi i) oint dw / w  N(w) / D(w)`` over |w| = 1, vectorised over k1.

    ``num`` and ``den`` are dicts power -> coefficient array (one entry per k1).
    With P(w) = w^A D(w), each term w^s of N contributes the sum of
    w^{s+A-1} / P'(w) over roots inside the circle when s + A - 1 >= 0 and
    minus the sum over roots outside otherwise (no residue at infinity).
    """
    powers = sorted(den)
    lo, hi = powers[0], powers[-1]
    a_shift = -lo
    deg = hi - lo
    nk = len(k1)
    # polynomial coefficients, highest first
    poly = np.zeros((nk, deg + 1), complex)
    for m, v in den.items():
        poly[:, hi - m] = v
    lead = poly[:, 0]
    drop = np.abs(lead) <= 1e-14 * np.abs(poly).max(axis=1)
    if np.any(drop):
        # degree drops on these rows: recurse with the top power removed
        if deg <= 1 or np.all(drop):
            if deg <= 1:
                raise NumericPolicyError("degenerate denominator polynomial")
            return _residue_inner(num, {m: v for m, v in den.items() if m != hi}, k1)
        out = np.empty(nk, complex)
        keep = ~drop
        out[keep] = _residue_inner({m: v[keep] for m, v in num.items()},
                                   {m: v[keep] for m, v in den.items()}, k1[keep])
        out[drop] = _residue_inner({m: v[drop] for m, v in num.items()},
                                   {m: v[drop] for m, v in den.items() if m != hi}, k1[drop])
        return out
    comp = np.zeros((nk, deg, deg), complex)
    comp[:, 0, :] = -poly[:, 1:] / lead[:, None]
    if deg > 1:
        comp[:, np.arange(1, deg), np.arange(deg - 1)] = 1.0
    roots = np.linalg.eigvals(comp)
    dcoef = poly[:, :-1] * np.arange(deg, 0, -1)[None, :]
    dp = np.zeros_like(roots)
    for c in range(deg):
        dp = dp * roots + dcoef[:, c:c + 1]
    if np.any(np.abs(dp) < 1e-14 * np.abs(lead)[:, None]):
        raise NumericPolicyError("repeated root of the denominator on the contour")
    inside = np.abs(roots) < 1.0
    total = np.zeros(nk, complex)
    for s, v in num.items():
        e = s + a_shift - 1
        terms = roots ** e / dp
        if e >= 0:
            total += v * np.where(inside, terms, 0).sum(axis=1)
        else:
            total -= v * np.where(inside, 0, terms).sum(axis=1)
    return total


def _integrand_polys(x_symbol: LaurentSymbol, u_symbol: LaurentSymbol, energy: complex, beta: complex,
                     k1: np.ndarray, z_symbol: LaurentSymbol | None, radius: float = 1.0):
    """Numerator and denominator as Laurent polynomials in w, beta_2 = radius * w."""
    b1 = radius * np.exp(1j * k1)
    c = beta / (radius * b1)  # beta_3 = c / w
    den = {0: energy - x_symbol(b1)}
    for r, v in x_symbol.coeffs.items():
        den[-r] = den.get(-r, 0) - v * radius ** (-r)
        den[r] = den.get(r, 0) - np.conj(v) * c ** (-r)
    ubb = u_symbol(beta / b1) * np.ones_like(c)  # U(beta_2 beta_3)
    num = {0: ubb ** 2}
    for r, v in u_symbol.coeffs.items():
        num[r] = num.get(r, 0) - ubb * v * (beta / radius) ** (-r)
    if z_symbol is not None and z_symbol.coeffs:
        zz = {}
        for r, zr in z_symbol.coeffs.items():
            for s_, zs in z_symbol.coeffs.items():
                p = s_ - r
                zz[p] = zz.get(p, 0) + zr * zs * radius ** (-r) * c ** (-s_)
        pref = {p: -v for p, v in zz.items()}
        pref[0] = pref.get(0, 0) + 1.0
        num = _laurent_mul(num, pref)
    den = {m: v * np.ones_like(b1) for m, v in den.items()}
    num = {m: v * np.ones_like(b1) for m, v in num.items()}
    return num, den


def _mesh_check(x_symbol, u_symbol, energy, beta, grid, z_symbol, policy, check_positivity, radius=1.0):
    k = 2 * np.pi * np.arange(grid) / grid
    b1 = radius * np.exp(1j * k)[:, None]
    b2 = radius * np.exp(1j * k)[None, :]
    b3 = beta / (b1 * b2)
    xs = x_symbol.conj()
    d = energy - x_symbol(b1) - x_symbol(b2) - xs(b3)
    v = u_symbol(beta / b1) ** 2 - u_symbol(beta / b1) * u_symbol(beta / b2)
    if z_symbol is not None and z_symbol.coeffs:
        v = v * (1 - z_symbol(b2) * z_symbol(b3))
    bad = (np.abs(d) < policy.pole_tol) & (np.abs(v) > policy.pole_tol)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise NumericPolicyError(f"denominator pole at (k1, k2) = ({k[i]:.6f}, {k[j]:.6f})")
    if check_positivity and d.real.min() < -policy.pole_tol:
        i, j = np.unravel_index(np.argmin(d.real), d.shape)
        raise NumericPolicyError(
            f"denominator positivity violated: Re D = {d.real[i, j]:.3e} at (k1, k2) = ({k[i]:.6f}, {k[j]:.6f})")


def double_torus_margin(x_symbol: LaurentSymbol, energy: complex, beta: complex, radius: float,
                        n: int = 64) -> float:
    """Minimum of Re D over an n x n mesh of |beta_1| = |beta_2| = radius, beta_3 = beta / (beta_1 beta_2)."""
    k = 2 * np.pi * np.arange(n) / n
    b1 = radius * np.exp(1j * k)[:, None]
    b2 = radius * np.exp(1j * k)[None, :]
    d = energy - x_symbol(b1) - x_symbol(b2) - x_symbol.conj()(beta / (b1 * b2))
    return float(d.real.min())


def best_double_radius(x_symbol: LaurentSymbol, energy: complex, beta: complex):
    """Radius a of |beta_1| = |beta_2| = a maximising the positivity margin of Re D."""
    a = np.exp(np.linspace(-1.0, 1.0, 101))
    m = np.array([double_torus_margin(x_symbol, energy, beta, x) for x in a])
    i = int(np.argmax(m))
    return float(a[i]), float(m[i])


def sigma_bz_double(x_symbol: LaurentSymbol, interaction, energy: complex, beta: complex, grid: int = 256,
                    z_symbol: LaurentSymbol | None = None, regulator: float = 0.0,
                    policy: NumericPolicy = DEFAULT_POLICY, check_positivity: bool | None = None,
                    radius: float | str = 1.0) -> SelfEnergyValue:
    """Self-energy ``-(1/4) <V / D>`` over (k1, k2) in [0, 2 pi)^2.

    ``D = E - X(beta_1) - X(beta_2) - X*(beta_3)``, ``V = U(beta_2 beta_3)^2 -
    U(beta_2 beta_3) U(beta_1 beta_3)``, beta_{1,2} = radius e^{i k_{1,2}},
    beta_3 = beta / (beta_1 beta_2). ``radius=1`` is the Brillouin zone;
    ``radius="auto"`` picks the Cauchy-equivalent torus with the largest
    positivity margin. With ``z_symbol`` the integrand carries the extra factor
    ``1 - Z(beta_2) Z(beta_3)``. ``regulator`` shifts E -> E + eps.
    """
    if beta == 0 or not np.isfinite(beta):
        raise ConfigError("beta must be finite and nonzero")
    if grid < 8 or grid % 2:
        raise ConfigError("grid must be an even integer >= 8")
    u_symbol = _usym(interaction)
    energy = complex(energy) + regulator
    if not u_symbol.coeffs:
        return SelfEnergyValue(0j, "bz_double", grid, 0.0)
    if check_positivity is None:
        check_positivity = policy.enforce_positivity
    if radius == "auto":
        radius = best_double_radius(x_symbol, energy, beta)[0]
    radius = float(radius)
    _mesh_check(x_symbol, u_symbol, energy, beta, grid, z_symbol, policy, check_positivity, radius)
    k1 = 2 * np.pi * np.arange(grid) / grid
    num, den = _integrand_polys(x_symbol, u_symbol, energy, complex(beta), k1, z_symbol, radius)
    inner = _residue_inner(num, den, k1)
    if not np.all(np.isfinite(inner)):
        raise NumericPolicyError("non-finite inner integral")
    full = -0.25 * np.mean(inner)
    half = -0.25 * np.mean(inner[::2])
    return SelfEnergyValue(complex(full), "bz_double", grid, float(abs(full - half) / 2))


def sigma_generic_z(x_symbol: LaurentSymbol, interaction, z_symbol: LaurentSymbol, energy: complex,
                    beta: complex, grid: int = 256, **kwargs) -> SelfEnergyValue:
    """BZ double integral with the steady-state factor ``1 - Z(beta_2) Z(beta_3)``."""
    return sigma_bz_double(x_symbol, interaction, energy, beta, grid, z_symbol=z_symbol, **kwargs)


def pbc_self_energy(x_symbol: LaurentSymbol, interaction, k: float, grid: int = 256,
                    energy_shift: complex = 0.0, regulator: float = 0.0,
                    policy: NumericPolicy = DEFAULT_POLICY, radius: float | str = 1.0,
                    check_positivity: bool = False) -> SelfEnergyValue:
    """Periodic-chain self-energy at beta = e^{ik}, E = X(e^{ik}) + energy_shift.

    Periodic band energies lie inside the real-part window of the
    three-particle continuum, so only pole proximity is checked by default.
    """
    beta = np.exp(1j * k)
    try:
        return sigma_bz_double(x_symbol, interaction, x_symbol(beta) + energy_shift, beta, grid,
                               regulator=regulator, policy=policy, radius=radius,
                               check_positivity=check_positivity)
    except NumericPolicyError as exc:
        if "pole" not in str(exc):
            raise
        raise NumericPolicyError(f"{exc} for k = {k:.6f}; use a regulator or a k off the quadrature mesh") from exc


# ---------------------------------------------------------------- GBZ triple integral

def _max_re_on_circle(symbol: LaurentSymbol, radius: np.ndarray, n: int = 2048) -> np.ndarray:
    th = 2 * np.pi * np.arange(n) / n
    vals = symbol(np.asarray(radius)[..., None] * np.exp(1j * th))
    return vals.real.max(axis=-1)


def min_re_denominator(x_symbol: LaurentSymbol, energy: complex, a1: float, a2: float, a3: float) -> float:
    """Minimum of Re D over the torus |beta_1| = a1, |beta_2| = a2, |beta_3| = a3."""
    xs = x_symbol.conj()
    return float(np.real(energy) - _max_re_on_circle(x_symbol, a1) - _max_re_on_circle(x_symbol, a2)
                 - _max_re_on_circle(xs, a3))


def choose_torus(x_symbol: LaurentSymbol, energy: complex, beta: complex, r_max: int,
                 max_amplification: float = 1e8):
    """Radii (a, a, b) with a^2 b = kappa |beta| maximising min Re D, kappa^r_max bounded."""
    kmax = max_amplification ** (1.0 / r_max)
    kappas = np.exp(np.linspace(0.0, np.log(kmax), 17))
    logs = np.linspace(-1.5, 1.5, 121)
    a = np.exp(logs)
    xs = x_symbol.conj()
    ma = _max_re_on_circle(x_symbol, a)
    best = (-np.inf, None)
    for kap in kappas:
        b = kap * abs(beta) / a ** 2
        m = np.real(energy) - 2 * ma - _max_re_on_circle(xs, b)
        i = int(np.argmax(m))
        if m[i] > best[0]:
            best = (float(m[i]), (float(a[i]), float(a[i]), float(b[i])))
    return best[1], best[0]


def _triple_coefficients(x_symbol, u_symbol, energy, radii, n):
    th = 2 * np.pi * np.arange(n) / n
    e = np.exp(1j * th)
    b1 = radii[0] * e[:, None, None]
    b2 = radii[1] * e[None, :, None]
    b3 = radii[2] * e[None, None, :]
    d = energy - x_symbol(b1) - x_symbol(b2) - x_symbol.conj()(b3)
    u23 = u_symbol(b2 * b3)
    f = (u23 ** 2 - u23 * u_symbol(b1 * b3)) / d
    del d, u23
    fh = np.fft.fftn(f) / n ** 3
    prod = radii[0] * radii[1] * radii[2]

    def coeff(r):
        # c_r = -(1/4) mean[(beta_1 beta_2 beta_3)^r f]
        return -0.25 * prod ** r * fh[(-r) % n, (-r) % n, (-r) % n]

    return coeff


def sigma_gbz_triple(x_symbol: LaurentSymbol, interaction, gbz: GbzCurve, energy: complex, beta: complex,
                     r_max: int = 60, n_contour: int = 128,
                     policy: NumericPolicy = DEFAULT_POLICY) -> SelfEnergyValue:
    """Validation route: ``sum_{|r| <= r_max} beta^{-r} c_r`` with each real-space
    coefficient ``c_r`` from a triple contour integral.

    The contours start on the GBZ torus and are deformed (Cauchy) to a torus
    on which Re D stays strictly positive and the beta^{-r} resummation is
    numerically stable. The deformation path is checked for positivity.
    """
    if r_max < 20:
        raise ConfigError("r_max must be >= 20")
    if n_contour <= 2 * r_max:
        raise ConfigError("n_contour must exceed 2 r_max to avoid aliasing")
    u_symbol = _usym(interaction)
    if not u_symbol.coeffs:
        return SelfEnergyValue(0j, "gbz_triple", n_contour ** 3, 0.0)
    energy = complex(energy)
    radii, margin = choose_torus(x_symbol, energy, beta, r_max)
    if margin <= 0:
        raise NumericPolicyError("no contour torus with positive Re D (doublon positivity violated)")
    rho = gbz.radius()
    start = np.log([rho, rho, rho])
    stop = np.log(radii)
    for s in np.linspace(0.0, 1.0, 21)[1:]:
        a1, a2, a3 = np.exp(start + s * (stop - start))
        if min_re_denominator(x_symbol, energy, a1, a2, a3) <= 0:
            raise NumericPolicyError("contour deformation from the GBZ crosses Re D <= 0")
    if min_re_denominator(x_symbol, energy, rho, rho, rho) < -policy.pole_tol:
        raise NumericPolicyError("denominator positivity violated on the GBZ torus")
    coeff = _triple_coefficients(x_symbol, u_symbol, energy, radii, n_contour)

    def partial(rm):
        return sum(beta ** (-r) * coeff(r) for r in range(-rm, rm + 1))

    full = partial(r_max)
    half = partial(r_max // 2)
    diff = abs(full - half)
    converged = bool(diff <= policy.triple_rel_tol * abs(full) or diff < 1e-14)
    return SelfEnergyValue(complex(full), "gbz_triple", n_contour ** 3, float(diff / 2), converged)


# ---------------------------------------------------------------- real space

class RealspaceResolvent:
    """Factorised three-particle resolvent of a finite chain at fixed energy."""

    def __init__(self, model: LindbladModel, interaction, energy: complex):
        from .ed_oracle import build_truncated_liouvillian

        if model.n_sites > REALSPACE_MAX_SITES:
            raise SizeGuardError(f"real-space oracle limited to N <= {REALSPACE_MAX_SITES}")
        n = model.n_sites
        a = build_truncated_liouvillian(model, interaction, diagonal_weight=0.0).tocsc()
        t = a[n:, n:]
        self.coupling = a[n:, :n].toarray()
        self.n_sites = n
        op = (complex(energy) * sp.identity(t.shape[0], dtype=complex, format="csc") - t).tocsc()
        try:
            self._lu = spla.splu(op)
        except RuntimeError as exc:
            raise NumericPolicyError(f"three-particle resolvent is singular: {exc}") from exc
        self._cols: dict = {}

    def _col(self, j):
        if j not in self._cols:
            self._cols[j] = self._lu.solve(self.coupling[:, j])
        return self._cols[j]

    def element(self, i: int, j: int) -> complex:
        """``<i_a| L_I Q (E - Q L_0 Q)^{-1} Q L_I |j_a>``."""
        return complex(self.coupling[:, i] @ self._col(j))

    def laurent(self, beta: complex, center: int, r_lo: int, r_hi: int) -> complex:
        """``sum_r beta^{-r} <(center + r)_a | ... | center_a>`` for r_lo <= r <= r_hi."""
        if center + r_lo < 0 or center + r_hi >= self.n_sites:
            raise ConfigError("Laurent window leaves the chain")
        col = self._col(center)
        return complex(sum(beta ** (-r) * (self.coupling[:, center + r] @ col) for r in range(r_lo, r_hi + 1)))


def realspace_effective_element(model: LindbladModel, interaction, energy: complex, i: int, j: int) -> complex:
    if not _usym(interaction).coeffs:
        return 0j
    return RealspaceResolvent(model, interaction, energy).element(i, j)


# ---------------------------------------------------------------- corrections and sweeps

def eigenstate_correction(decomp: EigenstateDecomposition, sigma_at_roots) -> complex:
    """Biorthogonal-weighted mean of Sigma at the two GBZ roots of an OBC eigenstate."""
    m = decomp.pole_order
    keys = np.array(list(sigma_at_roots.keys()), dtype=complex)
    vals = list(sigma_at_roots.values())

    def lookup(b):
        i = int(np.argmin(np.abs(keys - b)))
        if abs(keys[i] - b) > 1e-6 * max(1.0, abs(b)):
            raise ConfigError(f"no self-energy supplied for root {b}")
        return vals[i]

    w1 = decomp.phi_r[m - 1] * decomp.phi_l[m - 1]
    w2 = decomp.phi_r[m] * decomp.phi_l[m]
    den = w1 + w2
    if abs(den) < 1e-12 * max(abs(w1), abs(w2), 1e-300):
        raise NumericPolicyError("vanishing biorthogonal weight in eigenstate correction")
    return complex((w1 * lookup(decomp.roots[m - 1]) + w2 * lookup(decomp.roots[m])) / den)


def realspace_hopping_table(x_symbol: LaurentSymbol, interaction, gbz: GbzCurve, energy: complex,
                            beta: complex, r_range, n_project: int = 128, grid: int = 256,
                            radius: float | str = 1.0, policy: NumericPolicy = DEFAULT_POLICY) -> dict:
    """Interaction-induced hopping ``c_r = oint dbeta'/(2 pi i beta') beta'^r Sigma(E, beta')``.

    Projection runs over the circle |beta'| = GBZ radius. Returns
    ``{r: (c_r, |c_r| rho^r)}``. ``beta`` only labels the input point.
    """
    rho = gbz.radius()
    phi = 2 * np.pi * np.arange(n_project) / n_project
    sig = np.array([sigma_bz_double(x_symbol, interaction, energy, rho * np.exp(1j * p), grid,
                                    policy=policy, radius=radius).value for p in phi])
    out = {}
    for r in r_range:
        c = rho ** r * np.mean(np.exp(1j * r * phi) * sig)
        out[int(r)] = (complex(c), float(abs(c) * rho ** r))
    return out


def pair_weights(x_symbol: LaurentSymbol, gbz: GbzCurve, energy: complex, reference_size: int = 120):
    """GBZ root pair at ``energy`` and its biorthogonal weights.

    Circular GBZs carry equal weights. Otherwise the weights come from the
    boundary coefficients of the nearest OBC eigenvalue at ``reference_size``.
    """
    m = x_symbol.max_offset
    roots = characteristic_roots(x_symbol, energy)
    pair = (complex(roots[m - 1]), complex(roots[m]))
    if gbz.analytic_radius is not None:
        return pair, (0.5, 0.5)
    ev = obc_spectrum(x_symbol, reference_size, gbz.radius())
    e_ref = ev[np.argmin(np.abs(ev - energy))]
    d = boundary_coefficients(x_symbol, e_ref, reference_size)
    w = np.array([d.phi_r[m - 1] * d.phi_l[m - 1], d.phi_r[m] * d.phi_l[m]])
    if abs(w.sum()) < 1e-12 * np.abs(w).max():
        raise NumericPolicyError("vanishing biorthogonal weight in eigenstate correction")
    w = w / w.sum()
    return pair, (complex(w[0]), complex(w[1]))


def paired_sigma(x_symbol, interaction, energy, pair, weights, grid, policy, radius, check=None):
    vals = [sigma_bz_double(x_symbol, interaction, energy, b, grid, policy=policy, radius=radius,
                            check_positivity=check) for b in pair]
    value = weights[0] * vals[0].value + weights[1] * vals[1].value
    err = abs(weights[0]) * vals[0].error_estimate + abs(weights[1]) * vals[1].error_estimate
    return SelfEnergyValue(complex(value), "bz_double", grid, float(err))


@dataclass(frozen=True)
class GapResult:
    gap: float
    argmax_beta: complex
    points: tuple
    self_consistent: bool = False
    converged: bool = True


def self_consistent_energy(x_symbol: LaurentSymbol, interaction, beta: complex, grid: int = 256,
                           policy: NumericPolicy = DEFAULT_POLICY, radius: float | str = 1.0,
                           pair=None, weights=None):
    """Damped fixed point of ``E = X(beta) + Sigma1 + Sigma2(E)``.

    ``Sigma2`` is evaluated at ``beta``, or as the weighted mean over ``pair``
    when given. Returns ``(E, converged)``; on failure E is the one-shot value.
    """
    e0 = complex(x_symbol(beta))
    s1 = first_order_shift(interaction)
    if pair is None:
        pair, weights = (complex(beta), complex(beta)), (0.5, 0.5)

    def sigma(e, check=None):
        return paired_sigma(x_symbol, interaction, e, pair, weights, grid, policy, radius, check).value

    one_shot = e0 + s1 + sigma(e0)
    e = one_shot
    for _ in range(policy.scf_max_iter):
        # the iterate leaves the unperturbed band by O(u^2); Re D may dip below zero
        # at isolated integrable points, so positivity is not enforced here
        try:
            s2 = sigma(e, check=False)
        except NumericPolicyError:
            return one_shot, False
        target = e0 + s1 + s2
        new = (1 - policy.scf_mixing) * e + policy.scf_mixing * target
        if abs(new - e) <= policy.scf_tol * max(abs(target - e0), 1e-300):
            return new, True
        e = new
    return one_shot, False


def liouvillian_gap(x_symbol: LaurentSymbol, interaction, gbz: GbzCurve, n_angles: int = 64,
                    grid: int = 256, self_consistent: bool = False,
                    policy: NumericPolicy = DEFAULT_POLICY, radius: float | str = 1.0,
                    eigenstate_weighted: bool = True) -> GapResult:
    """Gap ``-max Re E(beta)`` over the GBZ and the maximising beta.

    With ``eigenstate_weighted`` the second-order term of each point is the
    biorthogonally weighted mean of Sigma over the GBZ root pair sharing the
    energy X(beta), i.e. the shift of the OBC eigenstate labelled by beta.
    """
    if gbz.analytic_radius is not None:
        th = 2 * np.pi * np.arange(n_angles) / n_angles
        betas = gbz.analytic_radius * np.exp(1j * th)
    else:
        all_b = gbz.betas
        betas = all_b[np.linspace(0, len(all_b) - 1, n_angles).astype(int)]
    s1 = first_order_shift(interaction)
    has_u = bool(_usym(interaction).coeffs)
    points = []
    converged = True
    for b in betas:
        e0 = complex(x_symbol(b))
        if eigenstate_weighted and has_u:
            pair, weights = pair_weights(x_symbol, gbz, e0)
        else:
            pair, weights = (complex(b), complex(b)), (0.5, 0.5)
        s2 = paired_sigma(x_symbol, interaction, e0, pair, weights, grid, policy, radius)
        if self_consistent and has_u:
            e, ok = self_consistent_energy(x_symbol, interaction, b, grid, policy, radius, pair, weights)
            converged &= ok
            s2 = SelfEnergyValue(e - e0 - s1, "bz_double", grid, s2.error_estimate, ok)
        points.append(PerturbedBandPoint(complex(b), e0, s1, s2))
    re = np.array([p.e_total.real for p in points])
    # ties within rounding go to the first angle in [0, 2 pi)
    i = int(np.flatnonzero(re >= re.max() - 1e-12 * max(1.0, abs(re.max())))[0])
    return GapResult(float(-re[i]), points[i].beta, tuple(points), self_consistent, converged)
