"""Command-line front end: ``csx verify|simplex|dominance|simulate|fixed-points|report``.

Model files are JSON objects::

    {"family": "LeslieGower", "n": 3, "A": [[...], ...], "c": [...], "r": [...]}

``u`` replaces ``c`` for Ricker, both are needed for Atkinson-Allen, and
``PlaneNullclineCustom`` takes ``u`` together with ``G`` (and optionally ``dG``)
as expressions in the variable ``s``.  Optional ``tolerances`` and
``resolution`` objects override numerical defaults.

Exit codes: 0 success, 1 usage/IO/format error, 2 conditions not established,
3 more than 1% of surface directions undetermined, 4 orbit overflow.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import replace

import numpy as np

from csx import __version__
from csx.dominance import analyze_dominance
from csx.dynamics import (
    check_periodic_unordered,
    classify_omega,
    find_axial_and_origin,
    find_interior_fixed_points,
    iterate,
)
from csx.errors import CsxError, FormatError, ModelError, OrbitOverflow
from csx.model import Family, ModelSpec
from csx.simplex import BasinTestConfig, compute_surface, export_surface
from csx.verify import verify_all

EXIT_OK, EXIT_USAGE, EXIT_NOT_ESTABLISHED, EXIT_GAPS, EXIT_OVERFLOW = 0, 1, 2, 3, 4
GAP_FRACTION = 0.01

MODEL_KEYS = {"family", "n", "A", "c", "u", "r", "G", "dG", "tolerances", "resolution", "description"}
TOLERANCE_KEYS = {"surface_tol", "zero_radius", "escape_margin", "newton_tol", "max_backward_steps"}
RESOLUTION_KEYS = {"verify", "surface", "report_surface"}
DEFAULT_RESOLUTION = {"verify": 10, "surface": 16, "report_surface": 8}


class ModelFile:
    """A parsed model file: the model plus numerical settings."""

    def __init__(self, model: ModelSpec, tolerances: dict, resolution: dict, description: str = ""):
        self.model = model
        self.tolerances = tolerances
        self.resolution = {**DEFAULT_RESOLUTION, **resolution}
        self.description = description

    def basin_config(self) -> BasinTestConfig:
        keys = {k: v for k, v in self.tolerances.items() if k != "surface_tol"}
        return replace(BasinTestConfig(), **keys)

    @property
    def surface_tol(self) -> float:
        return float(self.tolerances.get("surface_tol", 1e-6))


def fmt(v) -> str:
    return format(float(v), ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(str(obj))


# -- model files ------------------------------------------------------------------------


def _compile_expressions(G, dG, n):
    import sympy

    s = sympy.Symbol("s")
    if not isinstance(G, list) or len(G) != n or not all(isinstance(e, str) for e in G):
        raise ModelError(f"G must be a list of {n} expression strings in s", field="G")
    if dG is not None and (not isinstance(dG, list) or len(dG) != n):
        raise ModelError(f"dG must be a list of {n} expression strings in s", field="dG")
    g_fns, dg_fns, g_txt, dg_txt = [], [], [], []
    for k in range(n):
        name = f"G_{k + 1}"
        try:
            expr = sympy.sympify(G[k], locals={"s": s})
            dexpr = sympy.diff(expr, s) if dG is None else sympy.sympify(dG[k], locals={"s": s})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ModelError(f"cannot parse {name}: {exc}", field=name) from None
        extra = (expr.free_symbols | dexpr.free_symbols) - {s}
        if extra:
            raise ModelError(f"{name} uses unknown symbols {sorted(map(str, extra))}", field=name)
        g_fns.append(sympy.lambdify(s, expr, "numpy"))
        dg_fns.append(sympy.lambdify(s, dexpr, "numpy"))
        g_txt.append(str(expr))
        dg_txt.append(str(dexpr))
    # constant expressions must still broadcast over arrays
    wrap = lambda f: (lambda z: np.broadcast_to(f(z), np.shape(z)).astype(float))  # noqa: E731
    return [wrap(f) for f in g_fns], [wrap(f) for f in dg_fns], g_txt + dg_txt


def model_from_dict(data: dict) -> ModelFile:
    if not isinstance(data, dict):
        raise FormatError("model file must contain a JSON object")
    unknown = sorted(set(data) - MODEL_KEYS)
    if unknown:
        raise FormatError(f"unknown key(s): {', '.join(unknown)}")
    if "family" not in data or "A" not in data:
        raise FormatError("model file needs at least 'family' and 'A'")
    try:
        family = Family(data["family"])
    except ValueError:
        choices = ", ".join(f.value for f in Family)
        raise ModelError(f"unknown family {data['family']!r}; expected one of {choices}", field="family") from None
    try:
        A = np.array(data["A"], dtype=float)
    except (TypeError, ValueError):
        raise ModelError("A must be a numeric matrix", field="A") from None
    if "n" in data and (A.ndim != 2 or data["n"] != A.shape[0]):
        raise ModelError(f"n = {data['n']} does not match A", field="n")
    n = A.shape[0] if A.ndim == 2 else 0
    tolerances = data.get("tolerances", {})
    resolution = data.get("resolution", {})
    for name, block, allowed in (("tolerances", tolerances, TOLERANCE_KEYS), ("resolution", resolution, RESOLUTION_KEYS)):
        if not isinstance(block, dict):
            raise FormatError(f"'{name}' must be an object")
        bad = sorted(set(block) - allowed)
        if bad:
            raise FormatError(f"unknown key(s) in {name}: {', '.join(bad)}")
    c, u, r = data.get("c"), data.get("u"), data.get("r")
    if family is Family.LESLIE_GOWER:
        model = ModelSpec.leslie_gower(A, c, r=r)
    elif family is Family.ATKINSON_ALLEN:
        model = ModelSpec.atkinson_allen(A, c, u, r=r)
    elif family is Family.ATKINSON_ALLEN_STANDARD:
        model = ModelSpec.atkinson_allen_standard(A, c, r=r)
    elif family is Family.RICKER:
        model = ModelSpec.ricker(A, u, r=r)
    else:
        if "G" not in data:
            raise ModelError("PlaneNullclineCustom needs G expressions", field="G")
        G, dG, texts = _compile_expressions(data["G"], data.get("dG"), n)
        model = ModelSpec.plane_custom(A, G, dG, u, r=r, expressions=texts)
    return ModelFile(model, dict(tolerances), dict(resolution), str(data.get("description", "")))


def parse_model_file(path: str) -> ModelFile:
    """Read and validate a model file; syntax errors carry the line number."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return model_from_dict(data)


# -- helpers ----------------------------------------------------------------------------


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    try:
        return max(1, int(os.environ.get("CSX_THREADS", "1")))
    except ValueError:
        return 1


def _write_atomic(path: str, data: bytes) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".csx-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(data: bytes, out: str | None) -> None:
    if out:
        _write_atomic(out, data)
    else:
        sys.stdout.write(data.decode())


def _vec(v) -> str:
    return "(" + ", ".join(fmt(z) for z in v) + ")"


# -- commands ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    mf = parse_model_file(args.model)
    res = args.resolution or mf.resolution["verify"]
    report = verify_all(mf.model, res)
    for name in ("axial", "signs", "spectral", "dissipative", "inverse_signs"):
        v = getattr(report, name)
        line = f"{name:<14} {v.status.value:<17} {v.detail}"
        if v.witness is not None:
            line += f"  witness={_vec(v.witness)}"
        print(line.rstrip())
    print(f"classical_jacobian_negative {str(report.classical_jacobian_negative).lower()}")
    print(f"overall        {report.overall}")
    return EXIT_OK if report.simplex_exists else EXIT_NOT_ESTABLISHED


def cmd_simplex(args) -> int:
    mf = parse_model_file(args.model)
    model = mf.model
    if args.format == "obj" and model.n != 3:
        raise FormatError(f"obj export needs n = 3, model has n = {model.n}")
    res = args.resolution or mf.resolution["surface"]
    if not args.force:
        report = verify_all(model, mf.resolution["verify"])
        if not report.simplex_exists:
            print(f"existence conditions: {report.overall}; rerun with --force to compute anyway",
                  file=sys.stderr)
            return EXIT_NOT_ESTABLISHED
    surf = compute_surface(model, res, cfg=mf.basin_config(), tol=mf.surface_tol, force=True,
                           threads=_threads(args))
    _emit(export_surface(surf, args.format), args.out)
    info = surf.summary()
    log = sys.stderr if not args.out else sys.stdout
    print(f"residual {fmt(info['residual'])}", file=log)
    print(f"height_range {fmt(info['height_min'])} {fmt(info['height_max'])}", file=log)
    if args.force:
        print("caveat: computed with --force", file=log)
    gaps = surf.gaps
    for k in gaps:
        print(f"undetermined direction {_vec(surf.directions[k])}", file=sys.stderr)
    if len(gaps) > GAP_FRACTION * len(surf.heights):
        return EXIT_GAPS
    return EXIT_OK


def _print_dominance(verdict) -> None:
    for s, v in sorted(verdict.per_species.items()):
        print(f"species {s + 1}: {v}")
    if verdict.gas_point is not None:
        print(f"globally asymptotically stable: {_vec(verdict.gas_point.location)}")
    if verdict.permutation is not None:
        print("permutation: " + " ".join(str(k + 1) for k in verdict.permutation))
    for e in verdict.evidence:
        v = e.verdict
        line = f"  [{e.tag}] Gamma_{v.i + 1} vs Gamma_{v.j + 1}"
        if v.face:
            line += " on x_" + ",".join(str(k + 1) for k in sorted(v.face)) + " = 0"
        line += f": {v.relation.value} margin={fmt(v.margin)} ({v.method})"
        if v.binding is not None:
            line += f" at {_vec(v.binding)}"
        print(line)
    for note in verdict.notes:
        print(f"note: {note}")


def cmd_dominance(args) -> int:
    mf = parse_model_file(args.model)
    _print_dominance(analyze_dominance(mf.model, verify_resolution=mf.resolution["verify"]))
    return EXIT_OK


def cmd_simulate(args) -> int:
    mf = parse_model_file(args.model)
    model = mf.model
    try:
        x0 = [float(v) for v in args.x0.split(",")]
    except ValueError:
        raise FormatError(f"--x0 must be comma-separated numbers, got {args.x0!r}") from None
    if len(x0) != model.n or min(x0) < 0:
        raise FormatError(f"--x0 needs {model.n} nonnegative values")
    try:
        traj = iterate(model, x0, args.steps)
        window = min(1000, args.steps + 1)
        omega = classify_omega(model, traj.final, transient=0, window=max(window, 4))
    except OrbitOverflow as exc:
        print(f"overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    head = "step," + ",".join(f"x_{i + 1}" for i in range(model.n))
    rows = [head] + [f"{k}," + ",".join(fmt(v) for v in x) for k, x in enumerate(traj.states)]
    _emit(("\n".join(rows) + "\n").encode(), args.out)
    log = sys.stdout if args.out else sys.stderr
    msg = f"omega: {omega.kind}"
    if omega.kind == "PeriodicOrbit":
        msg += f" period={omega.period} unordered={str(check_periodic_unordered(model, omega.representative)).lower()}"
    print(msg + f" final={_vec(traj.final)}", file=log)
    return EXIT_OK


def _fixed_points(model):
    return find_axial_and_origin(model) + find_interior_fixed_points(model)


def cmd_fixed_points(args) -> int:
    mf = parse_model_file(args.model)
    for rec in _fixed_points(mf.model):
        mods = " ".join(fmt(abs(z)) for z in rec.eigenvalues)
        print(f"{_vec(rec.location)}  support={{{','.join(str(k + 1) for k in sorted(rec.support))}}}"
              f"  {rec.classification.value}  |eig|={mods}")
    return EXIT_OK


def build_report(mf: ModelFile, threads: int = 1, force: bool = False, timings: bool = False,
                 resolution: int | None = None) -> dict:
    model = mf.model
    clock = {}
    t0 = time.perf_counter()
    conditions = verify_all(model, mf.resolution["verify"])
    clock["verify"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    dominance = analyze_dominance(model, report=conditions)
    clock["dominance"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    fixed = _fixed_points(model)
    clock["fixed_points"] = time.perf_counter() - t0
    caveats = []
    surface = None
    if conditions.simplex_exists or force:
        if not conditions.simplex_exists:
            caveats.append("surface computed with --force although existence is not established")
        t0 = time.perf_counter()
        surf = compute_surface(model, resolution or mf.resolution["report_surface"], cfg=mf.basin_config(),
                               tol=mf.surface_tol, force=True, threads=threads)
        clock["surface"] = time.perf_counter() - t0
        surface = surf.summary()
    else:
        caveats.append("surface skipped: existence conditions not established")
    doc = {
        "tool": "csx",
        "version": __version__,
        "model": model.to_dict(),
        "model_hash": model.model_hash,
        "conditions": conditions.to_dict(),
        "dominance": dominance.to_dict(),
        "fixed_points": [rec.to_dict() for rec in fixed],
        "surface": surface,
        "caveats": caveats,
    }
    if timings:
        doc["timings"] = clock
    return doc


def cmd_report(args) -> int:
    mf = parse_model_file(args.model)
    doc = build_report(mf, threads=_threads(args), force=args.force, timings=args.timings,
                       resolution=args.resolution)
    _emit((dumps(doc) + "\n").encode(), args.out)
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csx", description="Carrying simplex analysis of competitive maps.")
    p.add_argument("--version", action="version", version=f"csx {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("model", help="model file (JSON)")
        sp.set_defaults(func=func)
        return sp

    sp = add("verify", cmd_verify, "check the existence conditions")
    sp.add_argument("--resolution", type=int)

    sp = add("simplex", cmd_simplex, "compute the radial surface")
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "obj"), default="csv")
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--threads", type=int)

    add("dominance", cmd_dominance, "vanishing and dominance verdicts")

    sp = add("simulate", cmd_simulate, "iterate the map")
    sp.add_argument("--x0", required=True, help="comma-separated initial state")
    sp.add_argument("--steps", type=int, default=1000)
    sp.add_argument("--out")

    add("fixed-points", cmd_fixed_points, "origin, axial and interior fixed points")

    sp = add("report", cmd_report, "full analysis report (JSON)")
    sp.add_argument("--out")
    sp.add_argument("--resolution", type=int, help="surface resolution")
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--timings", action="store_true", help="include wall-clock timings")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "steps", 0) is not None and getattr(args, "steps", 0) < 0:
        print("csx: --steps must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"csx: invalid model ({exc.field}): {exc}", file=sys.stderr)
    except (CsxError, ValueError, OSError) as exc:
        print(f"csx: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
