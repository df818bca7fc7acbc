"""Command-line front end: ``nbsigma <task> --config <file> [options]``.

Exit codes: 0 success, 2 config error, 3 numeric-policy violation,
4 solver non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .policy import DEFAULT_POLICY

TASKS = ("gbz", "spectrum", "self_energy_sweep", "hopping_table", "ed_compare", "gap", "pbc_compare", "scaling")
MODELS = ("hatano_nelson", "nnn", "custom")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CONVERGENCE = 0, 2, 3, 4

PRESETS = {
    "hatano_nelson": {"t": 1.0, "gamma": 0.5, "u": 0.02, "n_sites": 31},
    "nnn": {"t": 1.0, "gamma": 0.5, "gamma0": 1.1, "t2": 0.1, "u": 0.02, "n_sites": 31},
    "custom": {"u": 0.0},
}

_FIELDS = {
    "task": str, "model": str, "t": float, "gamma": float, "gamma0": float, "t2": float, "u": float,
    "n_sites": int, "boundary": str, "h": list, "d_loss": list, "d_gain": list,
    "grid": int, "n_angles": int, "thetas": list, "theta": float, "sizes": list, "u_values": list,
    "r_range": list, "r_max": int, "n_contour": int, "n_gbz_samples": int, "n_project": int,
    "self_consistent": bool, "k_values": list, "n_k": int, "regulator": float, "contour": str,
    "policy": dict, "output_dir": str,
}


@dataclass
class RunConfig:
    task: str
    model: str = "hatano_nelson"
    t: float = 1.0
    gamma: float = 0.5
    gamma0: float = 1.1
    t2: float = 0.1
    u: float = 0.02
    n_sites: int = 31
    boundary: str = "open"
    h: list | None = None
    d_loss: list | None = None
    d_gain: list | None = None
    grid: int = 256
    n_angles: int = 32
    thetas: list | None = None
    theta: float = 1.5707963267948966
    sizes: list = field(default_factory=lambda: [11, 15, 19, 23, 27, 31])
    u_values: list = field(default_factory=lambda: [0.005, 0.01, 0.02, 0.04])
    r_range: list = field(default_factory=lambda: [-10, 10])
    r_max: int = 60
    n_contour: int = 128
    n_gbz_samples: int = 512
    n_project: int = 128
    self_consistent: bool = False
    k_values: list | None = None
    n_k: int = 32
    regulator: float = 0.0
    contour: str = "auto"
    policy: dict = field(default_factory=dict)
    output_dir: str = "nbsigma_out"


def parse_config(data: dict, task: str | None = None) -> RunConfig:
    """Strictly validate a config mapping; errors cite the offending field."""
    from .policy import ConfigError

    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    for key, val in data.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config field '{key}'")
        want = _FIELDS[key]
        if want is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if want is bool and not isinstance(val, bool) or want is not bool and isinstance(val, bool):
            raise ConfigError(f"field '{key}' must be of type {want.__name__}")
        if not isinstance(val, want):
            raise ConfigError(f"field '{key}' must be of type {want.__name__}, got {type(val).__name__}")
        data = {**data, key: val}
    if task is not None:
        if "task" in data and data["task"] != task:
            raise ConfigError(f"field 'task' is {data['task']!r} but the command line requests {task!r}")
        data = {**data, "task": task}
    if data.get("task") not in TASKS:
        raise ConfigError(f"field 'task' must be one of {TASKS}")
    model = data.get("model", "hatano_nelson")
    if model not in MODELS:
        raise ConfigError(f"field 'model' must be one of {MODELS}")
    merged = {**PRESETS[model], **data, "model": model}
    cfg = RunConfig(**merged)
    if cfg.boundary not in ("open", "periodic"):
        raise ConfigError("field 'boundary' must be 'open' or 'periodic'")
    if cfg.n_sites < 3:
        raise ConfigError("field 'n_sites' must be >= 3")
    if cfg.grid < 8 or cfg.grid % 2:
        raise ConfigError("field 'grid' must be an even integer >= 8")
    if cfg.contour not in ("auto", "bz"):
        raise ConfigError("field 'contour' must be 'auto' or 'bz'")
    if len(cfg.r_range) != 2 or cfg.r_range[0] > cfg.r_range[1]:
        raise ConfigError("field 'r_range' must be [r_min, r_max]")
    if any(not isinstance(s, int) for s in cfg.sizes):
        raise ConfigError("field 'sizes' must be a list of integers")
    if model == "custom" and cfg.h is None:
        raise ConfigError("field 'h' is required for model 'custom'")
    try:
        DEFAULT_POLICY.updated(**cfg.policy)
    except ConfigError as exc:
        raise ConfigError(f"field 'policy': {exc}") from exc
    return cfg


def load_config(path, task: str | None = None) -> RunConfig:
    import yaml

    from .policy import ConfigError

    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return parse_config(data, task)


# ---------------------------------------------------------------- model construction

def _cmatrix(rows, name):
    import numpy as np

    from .policy import ConfigError

    try:
        return np.array([[complex(str(v).replace(" ", "")) if isinstance(v, str) else complex(v) for v in row]
                         for row in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{name}' is not a matrix of numbers: {exc}") from exc


def build_model(cfg: RunConfig, n_sites: int | None = None):
    from .lindblad_core import LindbladModel, hatano_nelson_model, nnn_model

    n = cfg.n_sites if n_sites is None else n_sites
    if cfg.model == "hatano_nelson":
        return hatano_nelson_model(n, cfg.t, cfg.gamma, cfg.boundary)
    if cfg.model == "nnn":
        return nnn_model(n, cfg.t, cfg.gamma, cfg.gamma0, cfg.t2, cfg.boundary)
    h = _cmatrix(cfg.h, "h")
    dl = _cmatrix(cfg.d_loss or [], "d_loss")
    dg = _cmatrix(cfg.d_gain or [], "d_gain")
    return LindbladModel(h.shape[0], h, dl, dg, cfg.boundary)


def build_symbols(cfg: RunConfig):
    from .laurent import LaurentSymbol, hatano_nelson_symbol, nnn_symbol
    from .lindblad_core import build_damping_matrix
    from .self_energy import InteractionSpec

    if cfg.model == "hatano_nelson":
        xs = hatano_nelson_symbol(cfg.t, cfg.gamma)
    elif cfg.model == "nnn":
        xs = nnn_symbol(cfg.t, cfg.gamma, cfg.gamma0, cfg.t2)
    else:
        x = build_damping_matrix(build_model(cfg))
        xs = LaurentSymbol.from_matrix(x, max_range=max(1, x.shape[0] // 2 - 1), tol=1e-14)
    return xs, InteractionSpec.nearest_neighbor(cfg.u)


# ---------------------------------------------------------------- outputs

def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def write_summary(path: Path, cfg: RunConfig, results: dict) -> None:
    import numpy
    import scipy

    from . import __version__

    payload = {
        "config": asdict(cfg),
        "results": results,
        "versions": {"nbsigma": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
        "metadata": {"timestamp": datetime.now(timezone.utc).isoformat()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "item"):
        v = obj.item()
        return [v.real, v.imag] if isinstance(v, complex) else v
    raise TypeError(f"not serialisable: {type(obj)}")


def _c(z):
    z = complex(z)
    return [z.real, z.imag]


# ---------------------------------------------------------------- tasks

def _policy(cfg):
    from .policy import DEFAULT_POLICY

    return DEFAULT_POLICY.updated(**cfg.policy)


def _radius(cfg):
    return "auto" if cfg.contour == "auto" else 1.0


def _angles(cfg):
    import numpy as np

    if cfg.thetas is not None:
        return [float(t) for t in cfg.thetas]
    return list(2 * np.pi * np.arange(cfg.n_angles) / cfg.n_angles)


def task_gbz(cfg, out):
    from .nonbloch_band import agbz_locus, compute_gbz, write_gbz_csv

    xs, _ = build_symbols(cfg)
    gbz = compute_gbz(xs, cfg.n_gbz_samples, policy=_policy(cfg))
    write_gbz_csv(gbz, out / "gbz.csv")
    write_gbz_csv(agbz_locus(xs), out / "agbz.csv")
    import numpy as np

    mods = np.abs(gbz.betas)
    return {"analytic_radius": gbz.analytic_radius, "n_samples": len(gbz.samples),
            "min_modulus": float(mods.min()), "max_modulus": float(mods.max())}, True


def task_spectrum(cfg, out):
    import numpy as np

    from .lindblad_core import build_damping_matrix
    from .nonbloch_band import compute_gbz, obc_spectrum, pt_breaking_measure

    xs, _ = build_symbols(cfg)
    gbz = compute_gbz(xs, cfg.n_gbz_samples)
    ev = obc_spectrum(build_damping_matrix(build_model(cfg)), radius=gbz.radius())
    ev = ev[np.lexsort((ev.real, ev.imag))]
    write_csv(out / "spectrum.csv", ["index", "re_energy", "im_energy"],
              [(i, float(e.real), float(e.imag)) for i, e in enumerate(ev)])
    res = {"max_re": float(ev.real.max()), "n_sites": cfg.n_sites}
    if cfg.model != "custom":
        res["pt_breaking_measure_bulk_n120"] = pt_breaking_measure(xs, 120)
    return res, True


def _sweep_rows(cfg, xs, inter, gbz):
    import numpy as np

    from .self_energy import first_order_shift, sigma_bz_double

    s1 = first_order_shift(inter)
    rows = []
    for th in _angles(cfg):
        b = gbz.radius() * np.exp(1j * th)
        e0 = complex(xs(b))
        s2 = sigma_bz_double(xs, inter, e0, b, cfg.grid, regulator=cfg.regulator, policy=_policy(cfg),
                             radius=_radius(cfg))
        tot = e0 + s1 + s2.value
        rows.append((th, e0.real, e0.imag, s1.real, s1.imag, s2.value.real, s2.value.imag,
                     tot.real, tot.imag, s2.error_estimate, s2.method))
    return rows


SWEEP_HEADER = ["theta_or_k", "re_e0", "im_e0", "re_sigma1", "im_sigma1", "re_sigma2", "im_sigma2",
                "re_total", "im_total", "err_estimate", "method"]


def task_self_energy_sweep(cfg, out):
    from .nonbloch_band import compute_gbz

    xs, inter = build_symbols(cfg)
    gbz = compute_gbz(xs, cfg.n_gbz_samples)
    if gbz.analytic_radius is None:
        from .policy import ConfigError
        raise ConfigError("self_energy_sweep parametrises the GBZ by angle and needs a circular GBZ")
    rows = _sweep_rows(cfg, xs, inter, gbz)
    write_csv(out / "self_energy_sweep.csv", SWEEP_HEADER, rows)
    return {"n_angles": len(rows), "max_err_estimate": max(r[9] for r in rows)}, True


def task_hopping_table(cfg, out):
    import numpy as np

    from .nonbloch_band import compute_gbz
    from .self_energy import realspace_hopping_table

    xs, inter = build_symbols(cfg)
    gbz = compute_gbz(xs, cfg.n_gbz_samples)
    thetas = cfg.thetas if cfg.thetas is not None else [0.0, float(np.pi / 2)]
    rows = []
    dominance = {}
    for th in thetas:
        b = gbz.radius() * np.exp(1j * th)
        tab = realspace_hopping_table(xs, inter, gbz, xs(b), b, range(cfg.r_range[0], cfg.r_range[1] + 1),
                                      cfg.n_project, cfg.grid, radius=_radius(cfg), policy=_policy(cfg))
        for r, (c, scaled) in sorted(tab.items()):
            rows.append((float(th), r, c.real, c.imag, abs(c), scaled))
        dominance[str(th)] = {str(r): bool(tab[r][1] > tab[-r][1]) for r in tab if r > 0 and -r in tab}
    write_csv(out / "hopping_table.csv", ["theta", "r", "re_c", "im_c", "abs_c", "scaled_abs_c"], rows)
    return {"right_dominates": dominance}, True


def _theory_at_theta(xs, inter, rho, theta, grid, energy=None, radius=1.0, gbz=None, policy=DEFAULT_POLICY):
    """Eigenstate-weighted Sigma at the GBZ root pair plus the first-order shift."""
    import numpy as np

    from .nonbloch_band import compute_gbz
    from .self_energy import first_order_shift, paired_sigma, pair_weights

    gbz = gbz or compute_gbz(xs)
    b = rho * np.exp(1j * theta)
    e = complex(xs(b)) if energy is None else energy
    pair, weights = pair_weights(xs, gbz, e)
    sig = paired_sigma(xs, inter, e, pair, weights, grid, policy, radius).value
    return first_order_shift(inter) + sig, sig


def task_ed_compare(cfg, out):
    import numpy as np

    from .ed_oracle import ed_selfenergy, nearest_obc_eigenvalue
    from .nonbloch_band import compute_gbz

    xs, inter = build_symbols(cfg)
    rho = compute_gbz(xs).radius()
    model = build_model(cfg)
    thetas = cfg.thetas if cfg.thetas is not None else [cfg.theta]
    rows = []
    for th in thetas:
        e0 = nearest_obc_eigenvalue(model, complex(xs(rho * np.exp(1j * th))), rho)
        shift, det = ed_selfenergy(model, inter, e0, details=True)
        total, _ = _theory_at_theta(xs, inter, rho, th, cfg.grid, radius=_radius(cfg), policy=_policy(cfg))
        rows.append((model.n_sites, cfg.u, float(th), shift.real, shift.imag, det["solver"], det["iterations"],
                     det["residual"], total.real, total.imag))
    write_csv(out / "ed_compare.csv", ["n_sites", "u", "theta", "re_shift", "im_shift", "solver", "iterations",
                                       "residual", "re_theory", "im_theory"], rows)
    return {"n_rows": len(rows)}, True


def task_gap(cfg, out):
    import numpy as np

    from .nonbloch_band import compute_gbz
    from .self_energy import liouvillian_gap

    xs, inter = build_symbols(cfg)
    gbz = compute_gbz(xs, cfg.n_gbz_samples)
    res = liouvillian_gap(xs, inter, gbz, cfg.n_angles, cfg.grid, cfg.self_consistent, _policy(cfg), _radius(cfg))
    rows = [(float(np.angle(p.beta)), p.e0.real, p.e0.imag, p.sigma1.real, p.sigma1.imag, p.sigma2.value.real,
             p.sigma2.value.imag, p.e_total.real, p.e_total.imag, p.sigma2.error_estimate, p.sigma2.method)
            for p in res.points]
    write_csv(out / "gap_sweep.csv", SWEEP_HEADER, rows)
    return {"gap": res.gap, "argmax_beta": _c(res.argmax_beta), "self_consistent": res.self_consistent,
            "converged": res.converged}, res.converged


def _margin(cfg, xs, energy, beta, bz=False):
    """min Re D on the integration torus; negative means positivity fails there."""
    from .self_energy import best_double_radius, double_torus_margin

    if cfg.contour == "auto" and not bz:
        return best_double_radius(xs, energy, beta)[1]
    return double_torus_margin(xs, energy, beta, 1.0)


def task_pbc_compare(cfg, out):
    import numpy as np

    from .nonbloch_band import compute_gbz
    from .self_energy import pbc_self_energy, sigma_bz_double

    xs, inter = build_symbols(cfg)
    gbz = compute_gbz(xs, cfg.n_gbz_samples)
    pol = _policy(cfg)
    rows = []
    if gbz.analytic_radius is not None:
        obc_betas = [gbz.analytic_radius * np.exp(1j * th) for th in _angles(cfg)]
    else:
        allb = gbz.betas
        obc_betas = list(allb[np.linspace(0, len(allb) - 1, cfg.n_angles).astype(int)])
    for b in obc_betas:
        e0 = complex(xs(b))
        s = sigma_bz_double(xs, inter, e0, b, cfg.grid, regulator=cfg.regulator, policy=pol, radius=_radius(cfg))
        rows.append(("obc", float(np.angle(b)), b.real, b.imag, e0.real, e0.imag, s.value.real, s.value.imag,
                     s.error_estimate, _margin(cfg, xs, e0 + cfg.regulator, b)))
    ks = cfg.k_values if cfg.k_values is not None else list(2 * np.pi * np.arange(cfg.n_k) / cfg.n_k - np.pi)
    for k in ks:
        # periodic rows integrate over the BZ itself: band energies lie in the continuum
        s = pbc_self_energy(xs, inter, float(k), cfg.grid, regulator=cfg.regulator, policy=pol)
        e0 = complex(xs(np.exp(1j * k)))
        rows.append(("pbc", float(k), float(np.cos(k)), float(np.sin(k)), e0.real, e0.imag, s.value.real,
                     s.value.imag, s.error_estimate, _margin(cfg, xs, e0 + cfg.regulator, np.exp(1j * k), bz=True)))
    write_csv(out / "pbc_compare.csv", ["boundary", "theta_or_k", "re_beta", "im_beta", "re_e0", "im_e0",
                                        "re_sigma2", "im_sigma2", "err_estimate", "positivity_margin"], rows)
    return {"n_obc": len(obc_betas), "n_pbc": len(ks)}, True


def task_scaling(cfg, out):
    import numpy as np

    from .ed_oracle import ed_selfenergy, fit_scaling_series, nearest_obc_eigenvalue
    from .nonbloch_band import compute_gbz

    xs, inter = build_symbols(cfg)
    rho = compute_gbz(xs).radius()
    values, rows = [], []
    for n in cfg.sizes:
        model = build_model(cfg, n)
        e0 = nearest_obc_eigenvalue(model, complex(xs(rho * np.exp(1j * cfg.theta))), rho)
        shift, det = ed_selfenergy(model, inter, e0, details=True)
        values.append(shift)
        rows.append((n, cfg.u, cfg.theta, shift.real, shift.imag, det["solver"], det["iterations"], det["residual"]))
    series = fit_scaling_series(cfg.sizes, values)
    write_csv(out / "scaling.csv", ["n_sites", "u", "theta", "re_shift", "im_shift", "solver", "iterations",
                                    "residual"], rows)
    target, sigma2 = _theory_at_theta(xs, inter, rho, cfg.theta, cfg.grid, radius=_radius(cfg), policy=_policy(cfg))
    rel = abs(series.intercept - target) / abs(target)
    return {"intercept": _c(series.intercept), "slope": _c(series.slope), "fit_residual": series.residual,
            "theory": _c(target), "theory_sigma2": _c(sigma2), "relative_error": rel}, True


TASK_FUNCS = {
    "gbz": task_gbz, "spectrum": task_spectrum, "self_energy_sweep": task_self_energy_sweep,
    "hopping_table": task_hopping_table, "ed_compare": task_ed_compare, "gap": task_gap,
    "pbc_compare": task_pbc_compare, "scaling": task_scaling,
}


# ---------------------------------------------------------------- check mode

def run_checks(cfg) -> list:
    """Quick acceptance subset for the configured preset. Returns (name, ok, detail)."""
    import numpy as np

    from .laurent import nnn_symbol
    from .nonbloch_band import compute_gbz, pt_breaking_measure
    from .self_energy import first_order_shift, sigma_bz_double, sigma_gbz_triple

    xs, inter = build_symbols(cfg)
    results = []
    if cfg.model == "hatano_nelson":
        gbz = compute_gbz(xs)
        want = np.sqrt((cfg.t + cfg.gamma) / (cfg.t - cfg.gamma))
        err = abs(gbz.analytic_radius - want)
        results.append(("gbz_radius", err < 1e-6, f"|rho - sqrt((t+g)/(t-g))| = {err:.2e}"))
        b = gbz.radius() * 1j
        d = sigma_bz_double(xs, inter, xs(b), b, cfg.grid).value
        tr = sigma_gbz_triple(xs, inter, gbz, xs(b), b).value
        rel = abs(d - tr) / abs(d) if d else 0.0
        results.append(("method_equivalence", rel < 1e-4, f"relative difference {rel:.2e}"))
    if cfg.model == "nnn":
        lo = pt_breaking_measure(nnn_symbol(cfg.t, cfg.gamma, cfg.gamma0, 0.04))
        hi = pt_breaking_measure(nnn_symbol(cfg.t, cfg.gamma, cfg.gamma0, 0.1))
        results.append(("pt_transition", lo < 1e-6 and hi > 1e-3, f"t2=0.04: {lo:.2e}, t2=0.1: {hi:.2e}"))
    s1 = first_order_shift(inter)
    results.append(("first_order_imaginary", abs(s1.real) < 1e-15, f"Re = {s1.real:.1e}"))
    return results


# ---------------------------------------------------------------- entry point

def _set_threads(k: int | None):
    k = k or os.environ.get("NBSIGMA_THREADS")
    if k:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(k)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nbsigma", description="Non-Bloch self-energies of dissipative quasi-particles.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True, help="YAML (or JSON) run configuration")
    p.add_argument("--out", help="output directory (default: config output_dir, or $NBSIGMA_OUT)")
    p.add_argument("--check", action="store_true", help="run the acceptance subset for the preset")
    p.add_argument("--grid", type=int, help="override the quadrature grid")
    p.add_argument("--threads", type=int, help="BLAS thread count")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    from .policy import ConfigError, ConvergenceError, NumericPolicyError

    try:
        cfg = load_config(args.config, args.task)
        if args.grid is not None:
            cfg = parse_config({**{k: v for k, v in asdict(cfg).items() if v is not None}, "grid": args.grid})
        out = Path(args.out or os.environ.get("NBSIGMA_OUT") or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.check:
            checks = run_checks(cfg)
            for name, ok, detail in checks:
                print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
            return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_NUMERIC
        results, converged = TASK_FUNCS[cfg.task](cfg, out)
        write_summary(out / "summary.json", cfg, results)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericPolicyError as exc:
        print(f"numeric policy violation in task '{args.task}': {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConvergenceError as exc:
        print(f"non-convergence in task '{args.task}': {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    if not converged:
        print(f"task '{args.task}' finished with a non-convergence flag", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
