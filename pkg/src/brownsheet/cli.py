"""Command line entry point.

Every command writes its data files plus ``manifest.json`` into ``--out``.
``brownsheet replay MANIFEST`` reruns a command from its manifest; data
files never depend on ``--workers``.

Exit codes: 0 success, 2 bad arguments, 3 numerical failure, 4 request
outside the supported regime, 5 a verification gate failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (BrownSheetError, ConfigurationError, RegimeError, ValidationError)

log = logging.getLogger("brownsheet")

SEED_ENV = "BSHEET_SEED"
EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_REGIME, EXIT_GATE = 0, 2, 3, 4, 5
# parameters that never influence the data files
_RUNTIME_KEYS = ("out", "workers", "format", "verbose", "func")


class GateFailure(Exception):
    """A verification check did not pass."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


class Output:
    """Collects data files for one command run."""

    def __init__(self, directory: Path, fmt: str):
        self.directory = directory
        self.fmt = fmt
        self.files: list[str] = []
        directory.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, text: str) -> Path:
        path = self.directory / name
        path.write_text(text)
        self.files.append(name)
        return path

    def table(self, stem: str, header, rows) -> Path:
        header = list(header)
        if self.fmt == "json":
            name = f"{stem}.json"
            records = [{h: _jsonable(v) for h, v in zip(header, row)} for row in rows]
            text = json.dumps(records, indent=1) + "\n"
        else:
            name = f"{stem}.csv"
            lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
            text = "\n".join(lines) + "\n"
        return self.text(name, text)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def _pair(text: str, sep: str, kind=float, name: str = "value") -> tuple:
    parts = text.lower().split(sep)
    if len(parts) != 2:
        raise ConfigurationError(f"{name} must look like A{sep}B, got {text!r}")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse {name} {text!r}") from exc


def _list(text: str, kind=float, name: str = "list") -> list:
    try:
        return [kind(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse {name} {text!r}") from exc


def _complex(text: str) -> complex:
    try:
        return complex(text.replace("i", "j").replace(" ", ""))
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse complex number {text!r}") from exc


def _print_table(header, rows) -> None:
    print("  ".join(f"{h:>14}" for h in header))
    for row in rows:
        cells = []
        for v in row:
            cells.append(f"{v:>14.6g}" if isinstance(v, (float, np.floating)) else f"{v!s:>14}")
        print("  ".join(cells))


# ---------------------------------------------------------------- esm

def cmd_esm(args, out: Output) -> int:
    from .measures import DensityMeasure, histogram
    from .sheet import GridSpec
    from .studies import esm_w1_study, limit_measure

    n_s, n_t = _pair(args.grid, "x", int, "--grid")
    s_max, t_max = _pair(args.extent, "x", float, "--extent")
    grid = GridSpec(s_max, t_max, n_s, n_t, args.seed)
    point = grid.index_of(*_pair(args.point, ",", float, "--point"))
    s, t = grid.point(*point)
    dims = _list(args.ladder, int, "--ladder") if args.ladder else _default_ladder(args.dim)
    if args.dim not in dims:
        dims.append(args.dim)
    dims = sorted(set(dims))
    if dims[0] < 1:
        raise ConfigurationError("dimensions must be positive")
    target = limit_measure(args.initial, s, t)
    rows, measures = esm_w1_study(dims, args.reps, grid, point, args.initial,
                                  args.workers, limit=target, keep_measures=True)
    out.table("w1", ["d", "mean_w1", "se", "reps"],
              [(r.d, r.mean_w1, r.se, r.reps) for r in rows])
    pooled = measures[args.dim]
    lo = min(m.atoms[0] for m in pooled)
    hi = max(m.atoms[-1] for m in pooled)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    edges, mass = histogram(pooled, np.linspace(lo, hi, args.bins + 1))
    out.table("histogram", ["bin_left", "bin_right", "mass"],
              list(zip(edges[:-1], edges[1:], mass)))
    if isinstance(target, DensityMeasure):
        xs = np.linspace(*target.support, args.density_points)
        out.table("density", ["x", "pdf"], list(zip(xs, target.density(xs))))
    else:
        out.table("density", ["x", "pdf"], [])
    _print_table(["d", "mean_w1", "se"], [(r.d, r.mean_w1, r.se) for r in rows])
    if args.check_decreasing:
        w = [r.mean_w1 for r in rows]
        if not all(a > b for a, b in zip(w, w[1:])):
            raise GateFailure("W1 is not strictly decreasing in d")
    return EXIT_OK


def _default_ladder(d: int) -> list[int]:
    return sorted({max(1, d // 8), max(1, d // 4), max(1, d // 2), d})


# ---------------------------------------------------------------- pde-residual

def cmd_pde_residual(args, out: Output) -> int:
    from .limit_law import (StieltjesEvaluator, burgers_residual, mckean_vlasov_residual,
                            named_test_function)

    evaluator = None
    if args.initial == "pm":
        evaluator = StieltjesEvaluator(1.0, (-1.0, 1.0))
    s_vals = _list(args.s, float, "--s")
    t_vals = _list(args.t, float, "--t")
    worst = 0.0
    if args.which == "burgers":
        zs = [_complex(z) for z in args.z.split(",")]
        rows, ratios = [], []
        for s in s_vals:
            for t in t_vals:
                for z in zs:
                    r = burgers_residual(s, t, z, args.h, evaluator=evaluator)
                    rows.append((s, t, z.real, z.imag, r.real, r.imag))
                    worst = max(worst, abs(r))
                    if args.halving:
                        r2 = burgers_residual(s, t, z, args.h / 2, evaluator=evaluator)
                        r4 = burgers_residual(s, t, z, args.h / 4, evaluator=evaluator)
                        ratios.append((s, t, z.real, z.imag, abs(r - r2) / abs(r2 - r4)))
        out.table("burgers", ["s", "t", "z_re", "z_im", "resid_re", "resid_im"], rows)
        print(f"max |residual| = {worst:.3e}")
        if args.halving:
            out.table("richardson", ["s", "t", "z_re", "z_im", "ratio"], ratios)
            for row in ratios:
                print(f"Richardson ratio at s={row[0]:g} t={row[1]:g} z={complex(row[2], row[3])}: "
                      f"{row[4]:.3f}")
    else:
        f = named_test_function(args.f)
        rows = []
        for s in s_vals:
            for t in t_vals:
                r = mckean_vlasov_residual(s, t, f, args.h, evaluator=evaluator)
                rows.append((s, t, args.f, r.lhs, r.rhs, r.residual))
                worst = max(worst, r.residual)
        out.table("mckean_vlasov", ["s", "t", "f", "lhs", "rhs", "residual"], rows)
        print(f"max |residual| = {worst:.3e}")
    if args.tol is not None and worst > args.tol:
        raise GateFailure(f"max residual {worst:.3e} above tolerance {args.tol:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------- calc-verify

_FAMILIES = ("constant", "zero", "drift", "smooth")


def _family(name: str):
    from . import plane_calculus as pc
    return {"constant": pc.constant_family, "zero": pc.zero_family,
            "drift": pc.drift_family, "smooth": pc.smooth_family}[name]()


def cmd_calc_verify(args, out: Output) -> int:
    from . import plane_calculus as pc
    from .sheet import GridSpec

    levels = _list(args.levels, int, "--levels")
    failures = []
    if args.which == "j2":
        grid = GridSpec(1.0, 1.0, args.grid_n, args.grid_n, args.seed)
        n = args.grid_n
        pts = [(n, n), (n // 2, n), (n, n // 2), (n // 2, n // 2)]
        rows = []
        for p, mj, mj2, theory in pc.j_second_moment_mc(grid, args.reps, pts, args.workers):
            s, t = grid.point(*p)
            ok = mj2.within(theory) and mj.within(0.0)
            rows.append((s, t, mj.mean, mj.standard_error, mj2.mean, mj2.standard_error,
                         theory, int(ok)))
            if not ok:
                failures.append(f"E[J^2] at ({s:g},{t:g}) = {mj2.mean:.4f} +- "
                                f"{mj2.standard_error:.4f}, theory {theory:.4f}")
        header = ["s", "t", "mean_j", "se_j", "mean_j2", "se_j2", "theory", "pass"]
        out.table("j2", header, rows)
        _print_table(header, rows)
    elif args.which == "jcov":
        grid = GridSpec(1.0, 1.0, args.grid_n, args.grid_n, args.seed)
        patterns = {"shared": ("M", "N", "M", "N"), "independent": ("M", "N", "P", "Q"),
                    "half": ("M", "N", "M", "Q")}
        rows = []
        for name, labels in patterns.items():
            r = pc.j_covariation_mc(labels, grid, args.reps, workers=args.workers)
            ok = r.within()
            rows.append((name, r.estimate, r.standard_error, r.theory, r.max_sbp_residual,
                         int(ok)))
            if not ok:
                failures.append(f"{name}: {r.estimate:.4f} +- {r.standard_error:.4f} "
                                f"vs {r.theory}")
        header = ["pattern", "estimate", "se", "theory", "max_sbp_residual", "pass"]
        out.table("jcov", header, rows)
        _print_table(header, rows)
    elif args.which == "green":
        names = _FAMILIES if args.family == "all" else (args.family,)
        summary = []
        for name in names:
            spec = _family(name)
            table = pc.green_formula_residual(spec, levels, args.reps, args.seed, args.workers)
            if out.fmt == "csv":
                out.text(f"green_{name}.csv", pc.refinement_csv(table, None))
            else:
                out.table(f"green_{name}", ["level", "n", "rms_green", "se"],
                          [(r.level, r.n, r.rms, r.se) for r in table])
            if name == "zero":
                worst = max(r.max_scaled for r in table)
                ok = worst <= 1e-10
                check = f"exact identity, max scaled residual {worst:.2e}"
            else:
                rms = [r.rms for r in table]
                ok = all(a > b for a, b in zip(rms, rms[1:]))
                check = "strictly decreasing" if ok else "not strictly decreasing"
            if not ok:
                failures.append(f"green {name}: {check}")
            for r in table:
                summary.append((name, r.n, r.rms, r.se))
            print(f"{name}: {check}")
        _print_table(["family", "n", "rms", "se"], summary)
    else:
        table = pc.dual_refinement(levels, args.reps, args.seed, args.workers)
        text = pc.refinement_csv(None, table)
        if out.fmt == "csv":
            out.text("dual.csv", text)
        else:
            out.table("dual", ["level", "n", "rms_dual", "se"],
                      [(r.level, r.n, r.rms, r.se) for r in table])
        rows = []
        for a, b in zip(table, table[1:]):
            ratio = a.rms / b.rms
            expected = math.sqrt(b.n / a.n)
            ok = 0.5 * expected <= ratio <= 1.5 * expected
            rows.append((a.n, b.n, ratio, expected, int(ok)))
            if not ok:
                failures.append(f"dual ratio {a.n}->{b.n} = {ratio:.3f}, expected ~{expected:.3f}")
        out.table("dual_ratio", ["n_coarse", "n_fine", "ratio", "expected", "pass"], rows)
        _print_table(["n_coarse", "n_fine", "ratio", "expected", "pass"], rows)
    if failures:
        raise GateFailure("; ".join(failures))
    return EXIT_OK


# ---------------------------------------------------------------- deriv-check

def _dims(text: str) -> list[int]:
    if "-" in text:
        lo, hi = _pair(text, "-", int, "--dim")
        return list(range(lo, hi + 1))
    return _list(text, int, "--dim")


def cmd_deriv_check(args, out: Output) -> int:
    from .studies import derivative_corpus

    dims = _dims(args.dim)
    if not dims or min(dims) < 1:
        raise ConfigurationError("--dim needs positive dimensions")
    trials = derivative_corpus(dims, args.trials, args.gap_min, args.fd_step,
                               args.hess_step, args.seed)
    header = ["trial", "d", "gap_min", "grad_rel", "hess_rel", "laplacian", "third_sum",
              "third_forms", "inverse_gap", "vector_identity"]
    rows = [tuple(getattr(t, h) for h in header) for t in trials]
    out.table("derivatives", header, rows)
    limits = {"grad_rel": 1e-6, "hess_rel": 1e-4, "laplacian": 1e-8, "third_sum": 1e-8,
              "third_forms": 1e-8, "inverse_gap": 1e-8, "vector_identity": 1e-12}
    summary, failures = [], []
    for key, limit in limits.items():
        worst = max(getattr(t, key) for t in trials)
        ok = worst < limit
        summary.append((key, worst, limit, int(ok)))
        if not ok:
            failures.append(f"{key} = {worst:.2e} (limit {limit:.0e})")
    _print_table(["quantity", "worst", "limit", "pass"], summary)
    if failures:
        raise GateFailure("; ".join(failures))
    return EXIT_OK


# ---------------------------------------------------------------- spde-residual

def cmd_spde_residual(args, out: Output) -> int:
    from .spde import ito_vertical_residual

    d = args.dim
    if d < 1:
        raise ConfigurationError("--dim must be positive")
    if d == 1:
        ladder = np.zeros(1)
    else:
        ladder = args.initial_spread * (1.0 - 2.0 * np.arange(d) / (d - 1))
    levels = _list(args.levels, int, "--levels")
    table = ito_vertical_residual(d, args.index, levels, args.reps, s=args.column_s,
                                  t=args.t, initial=np.diag(ladder), seed=args.seed,
                                  workers=args.workers)
    header = ["level", "n_t", "rms", "discards", "replicas"]
    rows = [(r.level, r.n_t, r.rms, r.discards, r.replicas) for r in table]
    out.table("spde_residual", header, rows)
    _print_table(header, rows)
    rms = [r.rms for r in table]
    if d == 1:
        if any(v != 0.0 for v in rms):
            raise GateFailure("one-dimensional residual is not exactly zero")
    elif not all(a > b for a, b in zip(rms, rms[1:])):
        raise GateFailure("residual RMS is not strictly decreasing under refinement")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: {SEED_ENV}={raw!r} is not an integer") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brownsheet",
        description="Brownian-sheet matrix experiments with reproducible file outputs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help=f"root seed (default: ${SEED_ENV} or 0)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--workers", type=int, default=1, help="worker threads")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("esm", help="spectral measure and W1 distance to its limit")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--grid", default="1x1", help="cells NsxNt")
    p.add_argument("--extent", default="1x1", help="extent SxT")
    p.add_argument("--point", default="1,1", help="grid point s,t")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--initial", choices=("zero", "pm"), default="zero")
    p.add_argument("--ladder", default=None, help="comma list of dimensions")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--density-points", type=int, default=401)
    p.add_argument("--check-decreasing", action="store_true",
                   help="exit 5 unless W1 decreases strictly along the ladder")
    common(p)
    p.set_defaults(func=cmd_esm)

    p = sub.add_parser("pde-residual", help="Burgers or McKean-Vlasov residuals")
    p.add_argument("--which", choices=("burgers", "mv"), required=True)
    p.add_argument("--s", default="1", help="comma list")
    p.add_argument("--t", default="1", help="comma list")
    p.add_argument("--z", default="2i", help="comma list of complex points (burgers)")
    p.add_argument("--f", default="x2", choices=("const", "x2", "x4", "sin", "arctan"))
    p.add_argument("--h", type=float, default=None, help="finite-difference step")
    p.add_argument("--halving", action="store_true", help="also report the Richardson ratio")
    p.add_argument("--initial", choices=("zero", "pm"), default="zero")
    p.add_argument("--tol", type=float, default=None, help="exit 5 above this residual")
    common(p)
    p.set_defaults(func=cmd_pde_residual)

    p = sub.add_parser("calc-verify", help="two-parameter stochastic calculus checks")
    p.add_argument("--which", choices=("j2", "jcov", "green", "dual"), required=True)
    p.add_argument("--levels", default=None, help="comma list of grid sizes")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--grid-n", type=int, default=64)
    p.add_argument("--family", choices=_FAMILIES + ("all",), default="all")
    common(p)
    p.set_defaults(func=cmd_calc_verify)

    p = sub.add_parser("deriv-check", help="eigenvalue derivative formulas against finite differences")
    p.add_argument("--dim", default="6", help="dimension, comma list or range like 3-8")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--gap-min", type=float, default=0.5)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("--hess-step", type=float, default=1e-4)
    common(p)
    p.set_defaults(func=cmd_deriv_check)

    p = sub.add_parser("spde-residual", help="fixed-column Ito identity refinement study")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--index", type=int, default=0, help="eigenvalue index, 0 = largest")
    p.add_argument("--column-s", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--levels", default="32,64,128")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--initial-spread", type=float, default=2.0,
                   help="initial diagonal runs evenly from +spread to -spread")
    common(p)
    p.set_defaults(func=cmd_spde_residual)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="output directory (default: the manifest's)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=None)
    return parser


_DEFAULTS = {
    "calc-verify": {"j2": ("64", 10_000), "jcov": ("64", 10_000),
                    "green": ("16,32,64", 200), "dual": ("16,64,256", 200)},
}


def _fill_defaults(args) -> None:
    if args.seed is None:
        args.seed = _default_seed()
        args.seed_source = SEED_ENV if SEED_ENV in os.environ else "default"
    else:
        args.seed_source = "argument"
    if args.command == "calc-verify":
        levels, reps = _DEFAULTS["calc-verify"][args.which]
        args.levels = args.levels or levels
        args.reps = args.reps or reps
    if args.command == "pde-residual" and args.h is None:
        args.h = 1e-3 if args.which == "burgers" else 1e-2
    if getattr(args, "workers", 1) < 1:
        raise ConfigurationError("--workers must be at least 1")


def _params(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in _RUNTIME_KEYS}


def run(args) -> int:
    _fill_defaults(args)
    out = Output(Path(args.out), args.format)
    start = time.perf_counter()
    code = EXIT_OK
    gate = None
    try:
        code = args.func(args, out)
    except GateFailure as exc:
        gate = str(exc)
        code = EXIT_GATE
    manifest = {
        "command": args.command,
        "params": _params(args),
        "format": args.format,
        "seed": args.seed,
        "seed_env": SEED_ENV,
        "version": __version__,
        "workers": args.workers,
        "wall_time_s": round(time.perf_counter() - start, 3),
        "outputs": out.files,
        "exit_code": code,
    }
    (out.directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if gate:
        print(f"gate failed: {gate}", file=sys.stderr)
    return code


def replay(args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read manifest {path}: {exc}") from exc
    params = dict(manifest["params"])
    params.pop("seed_source", None)
    ns = argparse.Namespace(**params)
    ns.out = args.out or str(path.parent)
    ns.workers = args.workers or manifest.get("workers", 1)
    ns.format = manifest.get("format", "csv")
    ns.verbose = args.verbose
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[manifest["command"]]
    ns.func = sub.get_default("func")
    return run(ns)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return replay(args)
        return run(args)
    except (ConfigurationError, ValidationError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except RegimeError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (BrownSheetError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
