"""Command-line front end: ufb {solve, classify, flatness, blowup, verify}."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .barriers import verify_doubling_barrier, verify_nondegeneracy_barrier
from .cone import SectorSpec, _quotient, blowup
from .geometry import cone_slope, extract_free_boundary, flatness
from .io import FormatError, RunConfig, load_config, read_ufbg, write_csv, write_json, write_ufbg
from .operators import ConfigurationError, InvalidInputError, OperatorSpec, check_ellipticity, check_homogeneity
from .solver import IterationLimitError, solve_maximal
from .stratify import DomainError, StructureError, classify_singular_points

log = logging.getLogger("ufb")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_STRUCTURE = 0, 2, 3, 4
GLOBAL_DEFAULTS = {"config": None, "out": None, "seed": None, "threads": None, "log_level": "WARNING"}
VERIFIERS = ("ellipticity", "homogeneity", "barrier-nondeg", "barrier-doubling")


def parse_radii(text: str) -> list:
    """'2^-2..2^-8' (dyadic range) or a comma list such as '0.5,0.25'."""
    m = re.fullmatch(r"\s*2\^(-?\d+)\s*\.\.\s*2\^(-?\d+)\s*", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        step = -1 if b < a else 1
        return [2.0 ** k for k in range(a, b + step, step)]
    try:
        return [float(eval_number(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse radii list {text!r}") from None


def eval_number(tok: str) -> float:
    tok = tok.strip()
    m = re.fullmatch(r"2\^(-?\d+)", tok)
    return 2.0 ** int(m.group(1)) if m else float(tok)


def resolve_threads(arg) -> int:
    if arg is not None:
        n = int(arg)
    else:
        env = os.environ.get("UFB_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigurationError(f"UFB_THREADS={env!r} is not an integer") from None
    if n < 1:
        raise ConfigurationError("thread count must be positive")
    return n


def _config(args) -> RunConfig:
    raw = load_config(args.config) if args.config else {}
    if args.seed is not None:
        raw = {**raw, "seed": int(args.seed)}
    return RunConfig.from_dict(raw)


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_report(cfg: RunConfig | None, command: str, threads: int, t0: float) -> dict:
    return {"command": command, "version": __version__, "config": cfg.echo if cfg else None,
            "runtime": {"threads": threads, "seconds": round(time.perf_counter() - t0, 3)}}


# subcommands ---------------------------------------------------------------------------------

def cmd_solve(args, threads):
    t0 = time.perf_counter()
    cfg = _config(args)
    out = _out(args)
    sol = solve_maximal(cfg.operator, cfg.grid, cfg.boundary, cfg.schedule)
    rep = sol.report()
    side = {"operator": cfg.operator.to_dict(), "schedule": cfg.schedule.to_dict(),
            "residuals": rep["residuals"], "boundary": cfg.boundary.to_dict()}
    write_ufbg(out / "field.ufbg", sol.field, side)
    report = _base_report(cfg, "solve", threads, t0)
    report.update({"residual": max(rep["residuals"]), "residuals": rep["residuals"],
                   "epsilons": rep["epsilons"], "monotonicity_violations": rep["violations"],
                   "field": "field.ufbg"})
    write_json(out / "report.json", report)
    print(f"solve: residual {report['residual']:.3e}, dump {out / 'field.ufbg'}")
    return EXIT_OK


def cmd_classify(args, threads):
    t0 = time.perf_counter()
    cfg = _config(args)
    out = _out(args)
    field = read_ufbg(args.field)
    a = cfg.analysis
    delta = args.delta if args.delta is not None else a["delta"]
    params = {k: a[k] for k in ("k_min", "k_max", "tol_u", "tol_g", "C_max")}
    params.update({"lambda": cfg.operator.lam, "Lambda": cfg.operator.Lam})
    results = classify_singular_points(field, delta, params, workers=threads)
    report = _base_report(cfg, "classify", threads, t0)
    report.update({"field": str(args.field), "delta": delta, "points": [r.to_dict() for r in results]})
    write_json(out / "classify.json", report)
    rows = []
    for i, r in enumerate(results):
        if r.profile is not None:
            rows += [(i,) + row for row in r.profile.rows()]
    write_csv(out / "profile.csv", ["point", "k", "r_k", "M", "h"], rows)
    print(f"classify: {len(results)} singular point(s): " + ", ".join(r.cls for r in results))
    return EXIT_OK


def cmd_flatness(args, threads):
    t0 = time.perf_counter()
    cfg = _config(args)
    out = _out(args)
    field = read_ufbg(args.field)
    fb = extract_free_boundary(field)
    x0 = np.array([eval_number(t) for t in args.x0.split(",")]) if args.x0 else np.zeros(field.grid.dim)
    radii = parse_radii(args.radii) if args.radii else list(cfg.analysis["radii"])
    rows, entries = [], []
    for r in radii:
        res = flatness(fb, r, x0)
        d = res.to_dict()
        if res.form is not None and field.grid.dim == 2:
            d["slope"] = cone_slope(res.form, field, probe=r / 2)["slope"]
        entries.append(d)
        rows.append((r, res.h, res.h / r if math.isfinite(res.h) else None))
    report = _base_report(cfg, "flatness", threads, t0)
    report.update({"field": str(args.field), "x0": x0.tolist(), "levels": entries})
    write_json(out / "flatness.json", report)
    write_csv(out / "flatness.csv", ["r", "h", "h_over_r"], rows)
    print("flatness: " + ", ".join(f"h({r:g})={h:.3e}" for r, h, _ in rows))
    return EXIT_OK


def _blowup_spec(args, cfg: RunConfig) -> OperatorSpec:
    lam = args.lam if args.lam is not None else None
    Lam = args.Lam if args.Lam is not None else None
    if args.controls:
        controls = json.loads(Path(args.controls).read_text())
        lam = lam if lam is not None else cfg.operator.lam
        Lam = Lam if Lam is not None else cfg.operator.Lam
        return OperatorSpec(lam, Lam, np.asarray(controls, float), "bellman-sup")
    if lam is None and Lam is None:
        return cfg.operator
    lam = 1.0 if lam is None else lam
    Lam = lam if Lam is None else Lam
    if lam > Lam:
        raise ConfigurationError("lambda must not exceed Lambda")
    if lam == Lam == 1.0:
        return OperatorSpec.laplacian(2)
    return OperatorSpec.isotropic(lam, Lam, 2, 2)


def cmd_blowup(args, threads):
    t0 = time.perf_counter()
    cfg = _config(args)
    out = _out(args)
    spec = _blowup_spec(args, cfg)
    aperture = args.aperture if args.aperture is not None else cfg.sector["aperture"]
    sector = SectorSpec(float(aperture), float(cfg.sector.get("orientation", 0.0)))
    b = cfg.blowup
    rk = parse_radii(args.rk) if args.rk else list(b["rk"])
    fit = tuple(b["fit_range"])
    r_min = 2.0 ** -b["octaves"]
    usable = [R for R in rk if R * fit[0] >= r_min * (1 - 1e-12) and R < 1]
    if not usable:
        raise ConfigurationError("no rescaling radius keeps the fit range on the polar grid")
    v, res = blowup(spec, sector, usable, fit, per_octave=b["per_octave"], octaves=b["octaves"])
    table = []
    for R in rk:
        q = _quotient(v, R, max(4 * r_min / R, fit[0]), 0.5, 1e-12) if R < 1 else None
        table.append({"R": R, "supK_R": v.sup_K(R), "C_R": q[0] if q else None})
    report = _base_report(cfg, "blowup", threads, t0)
    report.update({"spec": spec.to_dict(), "sector": sector.to_dict(), "kappa": res.kappa,
                   "kappa_harmonic": sector.analytic_kappa, "phi": res.phi, "theta": res.theta,
                   "profile_residual": res.profile_residual, "residuals": res.convergence,
                   "C_R": res.C_R, "table": table, "eps": res.eps,
                   "doubling": res.diagnostics["doubling"], "doubling_quotients": res.doubling_quotients,
                   "solver": v.metadata, "rk_used": usable})
    write_json(out / "blowup.json", report)
    write_csv(out / "blowup.csv", ["R", "supK_R", "C_R"], [(t["R"], t["supK_R"], t["C_R"]) for t in table])
    print(f"blowup: kappa = {res.kappa:.6f} (harmonic {sector.analytic_kappa:.6f})")
    return EXIT_OK


def cmd_verify(args, threads):
    t0 = time.perf_counter()
    cfg = _config(args)
    out = _out(args)
    spec = cfg.operator
    samples = args.samples or cfg.verify["samples"]
    if args.which == "ellipticity":
        rep = check_ellipticity(spec, samples, cfg.seed)
    elif args.which == "homogeneity":
        rep = check_homogeneity(spec, samples, cfg.seed)
    elif args.which == "barrier-nondeg":
        rep = verify_nondegeneracy_barrier(spec.n, spec.lam, spec.Lam, samples, cfg.seed)
    else:
        rep = verify_doubling_barrier(spec, samples, cfg.seed)
    report = _base_report(cfg, f"verify {args.which}", threads, t0)
    report.update({"check": rep.to_dict()})
    write_json(out / f"verify-{args.which}.json", report)
    print(f"verify {args.which}: {'pass' if rep.passed else 'FAIL'} "
          + ", ".join(f"{k}={v}" for k, v in rep.details.items() if isinstance(v, (int, float))))
    return EXIT_OK


# entry point ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the global flags appear before or after the subcommand
    sup = argparse.SUPPRESS
    common.add_argument("--config", default=sup, help="JSON run configuration")
    common.add_argument("--out", default=sup, help="output directory (default: current)")
    common.add_argument("--seed", type=int, default=sup, help="override the configured seed")
    common.add_argument("--threads", type=int, default=sup, help="worker count (fallback: $UFB_THREADS, then 1)")
    common.add_argument("--log-level", default=sup, choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = argparse.ArgumentParser(prog="ufb", description=__doc__, parents=[common])
    p.add_argument("--version", action="version", version=f"ufb {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="maximal solution on a grid")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("classify", parents=[common], help="classify singular free-boundary points")
    c.add_argument("field", help="UFBG dump")
    c.add_argument("--delta", type=float)
    c.set_defaults(func=cmd_classify)

    f = sub.add_parser("flatness", parents=[common], help="flatness h(r, x0) of the free boundary")
    f.add_argument("field", help="UFBG dump")
    f.add_argument("--x0", help="comma-separated center, default origin")
    f.add_argument("--radii", help="e.g. '2^-2..2^-4' or '0.25,0.125'")
    f.set_defaults(func=cmd_flatness)

    b = sub.add_parser("blowup", parents=[common], help="sector solution and blow-up exponent")
    b.add_argument("--aperture", type=float)
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--Lambda", dest="Lam", type=float)
    b.add_argument("--controls", help="JSON file with a list of 2x2 control matrices")
    b.add_argument("--rk", help="rescaling radii, e.g. '2^-1..2^-3'")
    b.set_defaults(func=cmd_blowup)

    v = sub.add_parser("verify", parents=[common], help="structural checks of the operator and barriers")
    v.add_argument("which", choices=VERIFIERS)
    v.add_argument("--samples", type=int)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = resolve_threads(args.threads)
        return args.func(args, threads)
    except (ConfigurationError, InvalidInputError, FormatError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IterationLimitError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StructureError as exc:
        print(f"structure error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE


if __name__ == "__main__":
    sys.exit(main())
