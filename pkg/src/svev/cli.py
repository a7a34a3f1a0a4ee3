"""Command-line front end.

Subcommands: density (1-point density grids), cov-grid (cross-covariance
contour data, the rescaled 2λ·cov(r; λ²) convention), conditional (eigenradius
density at fixed squared singular values), sample (Monte-Carlo runs with
audits and a deviation report), verify (the analytic property suites).

Exit codes: 0 success, 1 verification failure, 2 configuration error.
Every output file gets a key=value metadata sidecar recording the fully
resolved configuration (flags beat the optional --config file).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import correlations as corr
from . import montecarlo as mc
from . import verify as verify_mod
from .ensembles import DOUBLE, DOUBLE_DOUBLE, EnsembleModel, Jacobi, Laguerre
from .exceptions import ConfigError, DegeneracyError, DomainError, PrecisionError, ToleranceError, VerificationFailure
from .quad import QuadratureSpec


def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--family", choices=["laguerre", "jacobi"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument(
        "--precision", choices=[DOUBLE, DOUBLE_DOUBLE], default=None,
        help="extended precision is required for n > 15",
    )


def _add_common_args(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None,
                   help="key=value file supplying defaults; explicit flags win")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--quad-abs-tol", type=float, default=None)
    p.add_argument("--quad-rel-tol", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="svev",
        description="Singular-value / eigenvalue cross-correlations of "
        "bi-unitarily invariant complex random matrix ensembles",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density", help="evaluate the 1-point densities on a grid")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--grid-min", type=float, default=None)
    p.add_argument("--grid-max", type=float, default=None)
    p.add_argument("--grid-count", type=int, default=None)
    p.add_argument("--grid", choices=["linear", "log"], default=None)

    p = sub.add_parser("cov-grid", help="cross-covariance contour data 2λ·cov(r;λ²)")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--lambda-min", type=float, default=None)
    p.add_argument("--lambda-max", type=float, default=None)
    p.add_argument("--lambda-count", type=int, default=None)
    p.add_argument("--r-min", type=float, default=None)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--r-count", type=int, default=None)
    p.add_argument("--rescale-n32", action="store_true",
                   help="multiply by n^{3/2} (hard-edge comparison convention)")

    p = sub.add_parser("conditional", help="eigenradius density at fixed squared svs")
    _add_common_args(p)
    p.add_argument("--a", type=str, default=None,
                   help="comma-separated squared singular values (defines n)")
    p.add_argument("--r-max", type=float, default=None, help="default 3·max(a)")
    p.add_argument("--grid-count", type=int, default=None)

    p = sub.add_parser("sample", help="Monte-Carlo sampling run with audits")
    _add_common_args(p)
    p.add_argument("--model", choices=["ginibre", "truncated", "fixed-sv", "laguerre-sv"],
                   default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None, help="truncated: Haar dimension (β = m−2n)")
    p.add_argument("--a", type=str, default=None, help="fixed-sv: squared singular values")
    p.add_argument("--alpha", type=float, default=None, help="laguerre-sv: weight exponent")
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--chunk", type=int, default=None)

    p = sub.add_parser("verify", help="run the analytic verification suites")
    _add_common_args(p)
    p.add_argument("--suite", choices=["quick", "full"], default=None)
    p.add_argument("--inject-psi0-flip", action="store_true", help=argparse.SUPPRESS)

    return ap


# ---------------------------------------------------------------------------
# configuration resolution
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "family": "laguerre",
    "n": 3,
    "alpha": 0.0,
    "beta": 1.0,
    "precision": DOUBLE,
    "grid": None,  # per-family default
    "grid_count": 200,
    "grid_min": None,
    "grid_max": None,
    "lambda_count": 40,
    "r_count": 40,
    "lambda_min": None,
    "lambda_max": None,
    "r_min": None,
    "r_max": None,
    "grid_kind": None,
    "model": "ginibre",
    "m": None,
    "a": None,
    "rescale_n32": False,
    "draws": 100000,
    "seed": 1,
    "bins": 50,
    "chunk": 20000,
    "threads": 1,
    "suite": "quick",
    "out": Path("."),
    "quad_abs_tol": None,
    "quad_rel_tol": None,
}


def _load_config_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line: {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        raw = _load_config_file(args.config)
        for k, v in raw.items():
            if k not in cfg:
                raise ConfigError(f"unknown config key {k!r}")
            ref = cfg[k]
            if k == "out":
                cfg[k] = Path(v)
            elif k in ("n", "m", "draws", "seed", "bins", "chunk", "threads",
                       "grid_count", "lambda_count", "r_count"):
                cfg[k] = int(v)
            elif k in ("family", "precision", "model", "suite", "grid", "a"):
                cfg[k] = v
            else:
                cfg[k] = float(v)
    for k, v in vars(args).items():
        if k in cfg and v is not None:
            cfg[k] = v
    if cfg["out"] is None:
        cfg["out"] = Path(".")
    return cfg


def _model_from_cfg(cfg: dict) -> EnsembleModel:
    if cfg["family"] == "laguerre":
        fam = Laguerre(cfg["alpha"])
    elif cfg["family"] == "jacobi":
        fam = Jacobi(cfg["alpha"], cfg["beta"])
    else:
        raise ConfigError(f"unknown family {cfg['family']!r}")
    return EnsembleModel(cfg["n"], fam, cfg["precision"])


def _quad_from_cfg(cfg: dict) -> QuadratureSpec:
    kw = {}
    if cfg["quad_abs_tol"] is not None:
        kw["abs_tol"] = cfg["quad_abs_tol"]
    if cfg["quad_rel_tol"] is not None:
        kw["rel_tol"] = cfg["quad_rel_tol"]
    return QuadratureSpec(**kw)


def _parse_a(cfg: dict) -> np.ndarray:
    if cfg["a"] is None:
        raise ConfigError("--a is required (comma-separated positive reals)")
    try:
        a = np.array([float(x) for x in str(cfg["a"]).split(",") if x.strip()])
    except ValueError as exc:
        raise ConfigError(f"cannot parse --a: {exc}") from exc
    if len(a) == 0 or np.any(a <= 0):
        raise ConfigError("--a needs positive entries")
    return a


def _grid_from_cfg(cfg: dict, model: EnsembleModel) -> np.ndarray:
    kind = cfg["grid"]
    if kind is None:
        kind = "linear" if model.is_jacobi else "log"
    lo, hi = cfg["grid_min"], cfg["grid_max"]
    if model.is_jacobi:
        lo = 5e-4 if lo is None else lo
        hi = 1.0 - 5e-4 if hi is None else hi
    else:
        lo = 1e-3 if lo is None else lo
        hi = (4.0 * model.n + 8.0 * math.sqrt(model.n) + 10.0) if hi is None else hi
    count = cfg["grid_count"]
    if count < 2:
        raise ConfigError("grid counts must be >= 2")
    if not (0 < lo < hi):
        raise ConfigError(f"need 0 < grid-min < grid-max, got ({lo}, {hi})")
    if kind == "log":
        return np.geomspace(lo, hi, count)
    return np.linspace(lo, hi, count)


def _write_meta(out: Path, stem: str, cfg: dict, extra: dict = None):
    entries = {k: v for k, v in cfg.items() if v is not None and k != "out"}
    entries["out"] = str(cfg["out"])
    if extra:
        entries.update(extra)
    mc.write_metadata(out / f"{stem}.meta.txt", entries)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_density(cfg: dict) -> int:
    model = _model_from_cfg(cfg)
    ctx = corr.make_context(model, quad=_quad_from_cfg(cfg))
    grid = _grid_from_cfg(cfg, model)
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    if model.n == 1:
        # rho_EV = rho_SV = f_SV exactly at n=1: evaluate once, emit twice
        ev = np.array([corr.n1_identity(ctx, float(x)) for x in grid])
        sv = ev.copy()
    else:
        ev = np.array([corr.rho_ev_polya(ctx, float(x)) for x in grid])
        sv = np.array([corr.rho_sv(ctx, float(x)) for x in grid])
    corr.DensityTable((grid,), ev, {"formula": "rho_ev_polya"}).to_csv(
        out / "rho_ev.csv", ("x", "value")
    )
    corr.DensityTable((grid,), sv, {"formula": "rho_sv"}).to_csv(
        out / "rho_sv.csv", ("x", "value")
    )
    mass_ev = float(np.trapz(ev, grid))
    mass_sv = float(np.trapz(sv, grid))
    _write_meta(out, "density", cfg, {"trapezoid_mass_ev": mass_ev, "trapezoid_mass_sv": mass_sv})
    print(f"wrote {out/'rho_ev.csv'} and {out/'rho_sv.csv'} "
          f"(trapezoid masses {mass_ev:.6f}, {mass_sv:.6f})")
    return 0


def cmd_cov_grid(cfg: dict) -> int:
    model = _model_from_cfg(cfg)
    if model.n <= 2:
        raise ConfigError("cov-grid requires n > 2")
    ctx = corr.make_context(model, quad=_quad_from_cfg(cfg))
    lam_lo = cfg["lambda_min"]
    lam_hi = cfg["lambda_max"]
    r_lo, r_hi = cfg["r_min"], cfg["r_max"]
    if model.is_jacobi:
        lam_lo = 0.02 if lam_lo is None else lam_lo
        lam_hi = 0.98 if lam_hi is None else lam_hi
        r_lo = 1e-3 if r_lo is None else r_lo
        r_hi = 0.98 if r_hi is None else r_hi
    else:
        hi = 2.0 * math.sqrt(model.n)
        lam_lo = 0.02 if lam_lo is None else lam_lo
        lam_hi = hi if lam_hi is None else lam_hi
        r_lo = 1e-3 if r_lo is None else r_lo
        r_hi = hi * hi if r_hi is None else r_hi
    lambdas = np.linspace(lam_lo, lam_hi, cfg["lambda_count"])
    rs = np.linspace(r_lo, r_hi, cfg["r_count"])
    scale = model.n ** 1.5 if cfg["rescale_n32"] else 1.0
    values = np.empty((len(lambdas), len(rs)))
    for i, lam in enumerate(lambdas):
        a = lam * lam
        for j, r in enumerate(rs):
            values[i, j] = 2.0 * lam * scale * corr.cov_closed(ctx, float(r), float(a))
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    table = corr.DensityTable(
        (lambdas, rs), values,
        {"formula": "2*lambda*cov(r;lambda^2)", "rescale_n32": cfg["rescale_n32"]},
    )
    table.to_csv(out / "cov.csv", ("lambda", "r", "value"))
    _write_meta(out, "cov", cfg, {"rescale_factor": scale})
    print(f"wrote {out/'cov.csv'} ({len(lambdas)}x{len(rs)} grid)")
    return 0


def cmd_conditional(cfg: dict) -> int:
    a = _parse_a(cfg)
    n = len(a)
    warn = None
    try:
        corr._check_distinct(a)
        a_eff = a
    except DegeneracyError:
        a_eff = corr.perturb_degenerate(a)
        warn = "degenerate a perturbed by relative 1e-6 spread"
    r_hi = cfg["r_max"] if cfg["r_max"] is not None else 3.0 * float(np.max(a))
    count = cfg["grid_count"]
    grid = np.linspace(r_hi / count, r_hi, count)
    if n == 2:
        # delegate to the direct n=2 closed forms
        fam = Laguerre(0.0)
        model = EnsembleModel(2, fam)
        fsv = corr.n2_fsv(model, *a_eff)
        vals = np.array([corr.n2_f12(model, float(r), *a_eff) / fsv for r in grid])
        formula = "n2_f12 / f_SV"
    else:
        vals = np.array(
            [corr.conditional_density(n, float(r), a_eff, mode="jacobi") for r in grid]
        )
        formula = "conditional determinant ratio (analytic derivative)"
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    corr.DensityTable((grid,), vals, {"formula": formula}).to_csv(
        out / "conditional.csv", ("r", "value")
    )
    mass = corr.conditional_mass(n, float(r_hi), a_eff) if n != 2 else float(np.trapz(vals, grid))
    extra = {"normalization_mass": mass, "n": n}
    if warn:
        extra["warning"] = warn
    _write_meta(out, "conditional", cfg, extra)
    print(f"wrote {out/'conditional.csv'} (mass on [0, {r_hi:g}] = {mass:.8f})")
    return 0


def _analytic_refs(cfg: dict, run: mc.MCRun):
    """Bin-averaged analytic references for the deviation report, when the
    sampled ensemble admits them."""
    kind = cfg["model"]
    bin_avg_1d = verify_mod.bin_averages_1d

    if kind == "fixed-sv":
        a = _parse_a(cfg)
        n = len(a)
        edges = run.hist_r.edges

        def masses():
            out = np.empty(len(edges) - 1)
            prev = corr.conditional_mass(n, float(edges[0]), a) if edges[0] > 0 else 0.0
            for i in range(1, len(edges)):
                cur = corr.conditional_mass(n, float(edges[i]), a)
                out[i - 1] = (cur - prev) / (edges[i] - edges[i - 1])
                prev = cur
            return out

        return {"rho_ev": masses()}, None
    if kind == "ginibre":
        model = EnsembleModel(cfg["n"], Laguerre(0.0))
    elif kind == "laguerre-sv":
        model = EnsembleModel(cfg["n"], Laguerre(cfg["alpha"] or 0.0))
    elif kind == "truncated":
        beta = mc.truncation_beta(cfg["n"], cfg["m"])
        if beta <= -1:
            return {}, None
        model = EnsembleModel(cfg["n"], Jacobi(0.0, float(beta)))
    else:
        return {}, None
    ctx = corr.make_context(model)
    refs = {
        "rho_ev": bin_avg_1d(lambda r: corr.rho_ev_polya(ctx, r), run.hist_r.edges),
        "rho_sv": bin_avg_1d(lambda a: corr.rho_sv(ctx, a), run.hist_a.edges),
    }
    f11 = None
    can_cov = model.n > 2 and (not model.is_jacobi or model.family.beta > 0)
    if can_cov:
        f11 = verify_mod.f11_bin_averages(ctx, run.joint.r_edges, run.joint.a_edges)
    return refs, f11


def _deviation_counts(density, stderr, ref, expected_counts, min_count=20.0, nsig=4.0):
    occupied = expected_counts >= min_count
    bad = occupied & (np.abs(density - ref) > nsig * stderr)
    return int(bad.sum()), int(occupied.sum())


def cmd_sample(cfg: dict) -> int:
    kind = cfg["model"]
    n = cfg["n"]
    if kind == "truncated" and not cfg["m"]:
        raise ConfigError("truncated sampler needs --m")
    if kind == "fixed-sv":
        a_vec = _parse_a(cfg)
        n = len(a_vec)
    bins = cfg["bins"]
    if kind in ("ginibre", "laguerre-sv"):
        hi = 4.0 * n + 6.0 * math.sqrt(n) + 3.0 * (cfg["alpha"] or 0.0)
        r_edges = np.linspace(0.0, hi, bins + 1)
        a_edges = np.linspace(0.0, hi, bins + 1)
    elif kind == "truncated":
        r_edges = np.linspace(0.0, 1.0, bins + 1)
        a_edges = np.linspace(0.0, 1.0, bins + 1)
    else:
        top = float(np.max(a_vec))
        r_edges = np.linspace(0.0, top, bins + 1)
        a_edges = np.linspace(0.0, top * 1.05, bins + 1)
    t0 = time.time()
    run = mc.run_sampler(
        kind,
        n,
        cfg["draws"],
        cfg["seed"],
        r_edges,
        a_edges,
        m=cfg["m"],
        a=(a_vec if kind == "fixed-sv" else cfg["alpha"] if kind == "laguerre-sv" else None),
        chunk=cfg["chunk"],
        threads=cfg["threads"],
    )
    dt = time.time() - t0
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    run.joint.to_csv(out / "hist_joint.csv")
    run.hist_r.to_csv(out / "hist_r.csv")
    run.hist_a.to_csv(out / "hist_a.csv")
    audits = run.audits
    audit_ok = (
        audits.total_violations == 0
        and audits.max_prod_gap < mc.PROD_TOL
        and audits.discard_rate < 1e-4
    )
    lines = [
        f"draws={run.draws}",
        f"seconds={dt:.1f}",
        f"discards={audits.discards}",
        f"discard_rate={audits.discard_rate:.2e}",
        f"weyl_product_violations={audits.weyl_product_violations}",
        f"weyl_sum_violations={audits.weyl_sum_violations}",
        f"bound_violations={audits.bound_violations}",
        f"max_product_identity_gap={audits.max_prod_gap:.3e}",
        f"audit_ok={audit_ok}",
    ]
    dev_ok = True
    refs, f11_ref = _analytic_refs(cfg, run)
    for name, ref in refs.items():
        h = run.hist_r if name == "rho_ev" else run.hist_a
        exp_counts = ref * h.widths * h.samples
        bad, occ = _deviation_counts(h.density(), h.stderr(), ref, exp_counts)
        frac = bad / max(occ, 1)
        dev_ok = dev_ok and frac <= 0.01
        lines.append(f"deviation_{name}=bins {bad}/{occ} beyond 4 sigma ({100 * frac:.3f}%)")
    if f11_ref is not None:
        exp_counts = f11_ref * run.joint.bin_areas * run.joint.samples
        bad, occ = _deviation_counts(run.joint.density(), run.joint.stderr(), f11_ref, exp_counts)
        frac = bad / max(occ, 1)
        dev_ok = dev_ok and frac <= 0.01
        lines.append(f"deviation_f11=bins {bad}/{occ} beyond 4 sigma ({100 * frac:.3f}%)")
    (out / "audit_report.txt").write_text("\n".join(lines) + "\n")
    _write_meta(out, "sample", cfg, {"draws": run.draws, "discards": audits.discards,
                                     "seconds": f"{dt:.1f}"})
    for line in lines:
        print(line)
    if not (audit_ok and dev_ok):
        print("sample run FAILED its audit/deviation contract", file=sys.stderr)
        return 1
    return 0


def cmd_verify(cfg: dict, inject_psi0_flip: bool = False) -> int:
    if inject_psi0_flip:
        corr._PSI0_SIGN = -1.0
    try:
        results = verify_mod.run_suite(cfg["suite"])
    finally:
        corr._PSI0_SIGN = 1.0
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    report = "\n".join(
        f"[{'PASS' if r.ok else 'FAIL'}] {r.name} ({r.seconds:.2f}s) {r.detail}" for r in results
    )
    (out / "verify_report.txt").write_text(report + "\n")
    if any(not r.ok for r in results):
        print("verification FAILED", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        if args.command == "density":
            return cmd_density(cfg)
        if args.command == "cov-grid":
            return cmd_cov_grid(cfg)
        if args.command == "conditional":
            return cmd_conditional(cfg)
        if args.command == "sample":
            return cmd_sample(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, inject_psi0_flip=getattr(args, "inject_psi0_flip", False))
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DomainError, PrecisionError, DegeneracyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (VerificationFailure, ToleranceError) as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
