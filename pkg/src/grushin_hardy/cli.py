"""Command-line front end.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import fields as F
from .cp import extremal_constants
from .parser import ParseError, parse
from .quadrature import QuadratureBudgetError, QuadratureSettings
from .space import GrushinSpace
from .verifier import IdentitySpec, SupportError, hpw_deficit, verify_identity
from .weights import (
    CATALOG,
    AdmissibilityError,
    UnknownCatalogKey,
    bessel_residual,
    catalog_get,
    default_bessel_grid,
    derive_weight_batch,
)

CSV_HEADER = ["run", "key", "p", "lhs", "weighted", "extras_sum", "remainder", "residual_rel", "pass"]
SIG_DIGITS = 12


class UsageError(Exception):
    pass


def _fmt(x):
    """Shortest repr capped at 12 significant digits; NaN/inf become null."""
    if isinstance(x, bool) or x is None:
        return x
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, dict):
        return {k: _fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_fmt(v) for v in x]
    return x


def dumps(obj) -> str:
    return json.dumps(_fmt(obj), indent=2, allow_nan=False) + "\n"


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(["" if v is None else ("true" if v is True else "false" if v is False else v) for v in _fmt(r)])
    return buf.getvalue()


# ---------------------------------------------------------------- argument parsing helpers


def parse_space(text: str) -> GrushinSpace:
    try:
        parts = [s.strip() for s in text.split(",")]
        m, k, g = int(parts[0]), int(parts[1]), float(parts[2])
        if len(parts) != 3:
            raise ValueError
    except (ValueError, IndexError):
        raise UsageError(f"--space expects m,k,gamma, got {text!r}") from None
    try:
        return GrushinSpace(m, k, g)
    except ValueError as exc:
        raise UsageError(f"--space: {exc}") from None


def parse_params(text: str | None) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise UsageError(f"--params expects name=value pairs, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"--params: {k.strip()} needs a number, got {v!r}") from None
    return out


def parse_point(text: str, space: GrushinSpace):
    xs, _, ys = text.partition(";")
    try:
        x = [float(t) for t in xs.split(",") if t.strip()]
        y = [float(t) for t in ys.split(",") if t.strip()]
        return space.point(x, y)
    except ValueError as exc:
        raise UsageError(f"--at expects 'x1,..,xm;y1,..,yk': {exc}") from None


def parse_grid(text: str):
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise UsageError(f"--grid expects r0:r1:n, got {text!r}") from None
    if not (0 < a < b) or n < 2:
        raise UsageError("--grid needs 0 < r0 < r1 and n >= 2")
    return np.geomspace(a, b, n)


def parse_expr(text: str, flag: str):
    try:
        return parse(text)
    except ParseError as exc:
        caret = " " * exc.offset + "^"
        raise UsageError(f"{flag}: {exc}\n  {text}\n  {caret}") from None


# ---------------------------------------------------------------- run descriptions


def _build_run(run: dict):
    """Validate one run record and return a ready-to-execute closure argument."""
    kind = run.get("kind", "verify")
    if kind not in ("verify", "hpw"):
        raise UsageError(f"unknown run kind {kind!r}")
    sp = run.get("space")
    if not isinstance(sp, (list, tuple)) or len(sp) != 3:
        raise UsageError("each run needs space: [m, k, gamma]")
    try:
        space = GrushinSpace(int(sp[0]), int(sp[1]), float(sp[2]))
    except ValueError as exc:
        raise UsageError(f"space: {exc}") from None
    if "p" not in run or "f" not in run:
        raise UsageError("each run needs p and f")
    p = float(run["p"])
    f = parse_expr(run["f"], "f")
    try:
        F.check_space(f, space)
    except F.FieldDomainError as exc:
        raise UsageError(str(exc)) from None
    try:
        settings = QuadratureSettings.from_dict(run.get("settings"))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"settings: {exc}") from None
    tol = float(run.get("tolerance", 1e-3))
    if kind == "hpw":
        return dict(kind="hpw", space=space, p=p, f=f, text=run["f"], settings=settings, tol=tol,
                    alpha_scale=float(run.get("alpha_scale", 1.0)))
    key = run.get("catalog")
    try:
        triple = catalog_get(key, run.get("params"), space, p)
    except UnknownCatalogKey as exc:
        raise UsageError(str(exc)) from None
    except AdmissibilityError as exc:
        raise UsageError(str(exc)) from None
    return dict(kind="verify", spec=IdentitySpec(triple, f, settings, tol, label=run["f"]))


def _execute(built):
    if built["kind"] == "hpw":
        return hpw_deficit(built["space"], built["p"], built["f"], built["settings"],
                           alpha_scale=built["alpha_scale"], tolerance=built["tol"], label=built["text"])
    return verify_identity(built["spec"])


def _execute_safe(built):
    try:
        return _execute(built), None
    except (SupportError, F.FieldDomainError, QuadratureBudgetError, ZeroDivisionError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------- subcommands


def _emit(args, reports, names):
    payload = [r.to_json_dict() for r in reports]
    out = getattr(args, "out", None)
    if out and out.endswith(".csv"):
        text = _csv_text([r.csv_row(n) for r, n in zip(reports, names)])
        with open(out, "w") as fh:
            fh.write(text)
    elif out:
        with open(out, "w") as fh:
            fh.write(dumps(payload if len(payload) > 1 else payload[0]))
    sys.stdout.write(dumps(payload if len(payload) > 1 else payload[0]))


def cmd_verify(args):
    # the catalog key is validated before anything else
    if args.catalog not in CATALOG:
        raise UsageError(str(UnknownCatalogKey(args.catalog)))
    for flag in ("space", "p", "f"):
        if getattr(args, flag) is None:
            raise UsageError(f"verify needs --{flag}")
    space = parse_space(args.space)
    built = _build_run({
        "catalog": args.catalog, "params": parse_params(args.params), "space": [space.m, space.k, space.gamma],
        "p": args.p, "f": args.f, "tolerance": args.tol,
        "settings": {k: v for k, v in (("nodes", args.nodes), ("panels", args.panels)) if v is not None},
    })
    report, err = _execute_safe(built)
    if err:
        sys.stderr.write(err + "\n")
        return 1
    _emit(args, [report], ["verify"])
    return 0 if report.passed else 1


def cmd_hpw(args):
    space = parse_space(args.space)
    built = _build_run({
        "kind": "hpw", "space": [space.m, space.k, space.gamma], "p": args.p, "f": args.f,
        "tolerance": args.tol, "alpha_scale": args.alpha_scale,
        "settings": {k: v for k, v in (("nodes", args.nodes), ("panels", args.panels)) if v is not None},
    })
    report, err = _execute_safe(built)
    if err:
        sys.stderr.write(err + "\n")
        return 1
    _emit(args, [report], ["hpw"])
    return 0 if report.passed else 1


def cmd_derive_weight(args):
    space = parse_space(args.space)
    z = parse_point(args.at, space)
    triple = None
    if args.catalog:
        try:
            triple = catalog_get(args.catalog, parse_params(args.params), space, args.p)
        except (UnknownCatalogKey, AdmissibilityError) as exc:
            raise UsageError(str(exc)) from None
    if args.v is None or args.phi is None:
        if triple is None:
            raise UsageError("derive-weight needs --v and --phi, or --catalog")
    v = parse_expr(args.v, "--v") if args.v is not None else triple.v
    phi = parse_expr(args.phi, "--phi") if args.phi is not None else triple.phi
    X, Y = z.arrays()
    try:
        w = float(derive_weight_batch(space, args.p, v, phi, X, Y)[0])
    except F.FieldDomainError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    out = {"w": w, "point": {"x": list(z.x), "y": list(z.y)}}
    ok = True
    if triple is not None:
        closed = float(F.evaluate_batch(triple.w_total, space, X, Y).value[0].real)
        diff = abs(w - closed)
        ok = diff <= 1e-6 * (1.0 + abs(closed))
        out.update({"catalog": triple.name, "w_closed_total": closed, "abs_diff": diff, "pass": ok})
    sys.stdout.write(dumps(out))
    return 0 if ok else 1


def cmd_constants(args):
    if not args.p > 1:
        raise UsageError("--p must exceed 1")
    c = extremal_constants(args.p, grid=args.grid)
    d = c.to_dict()
    ok = True
    if args.p >= 2:
        ok = 0 < c.c1 <= 1 + 1e-12
    else:
        ok = c.c2_inf <= args.p * (args.p - 1) / 2 ** (args.p - 1) and c.c3_sup >= args.p / 2 ** (args.p - 1)
    widths = [v for k, v in d.items() if k.startswith("bracket") and v is not None]
    ok = ok and all(wd <= 1e-4 for wd in widths)
    d["pass"] = bool(ok)
    sys.stdout.write(dumps(d))
    return 0 if ok else 1


def cmd_bessel(args):
    space = parse_space(args.space)
    try:
        triple = catalog_get(args.catalog, parse_params(args.params), space, args.p)
    except (UnknownCatalogKey, AdmissibilityError) as exc:
        raise UsageError(str(exc)) from None
    if triple.radial is None:
        raise UsageError(f"catalog entry {triple.name} is not radial for these parameters")
    grid = parse_grid(args.grid) if args.grid else default_bessel_grid(triple)
    if triple.domain.kind == "ball" and grid[-1] >= triple.domain.R:
        raise UsageError(f"--grid must stay inside (0, R) with R = {triple.domain.R}")
    v, phi, w = triple.radial
    res = bessel_residual(space, args.p, v, w, phi, grid)
    ok = res <= args.tol
    sys.stdout.write(dumps({**triple.describe(), "grid": [float(grid[0]), float(grid[-1]), int(grid.size)],
                            "residual": res, "pass": ok}))
    return 0 if ok else 1


def cmd_campaign(args):
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    runs = cfg.get("runs") if isinstance(cfg, dict) else cfg
    if not isinstance(runs, list) or not runs:
        raise UsageError("config needs a nonempty 'runs' list")
    defaults = cfg.get("defaults", {}) if isinstance(cfg, dict) else {}
    built, names = [], []
    for i, run in enumerate(runs):
        if not isinstance(run, dict):
            raise UsageError(f"run {i} is not an object")
        merged = {**defaults, **run}
        if "settings" in defaults or "settings" in run:
            merged["settings"] = {**defaults.get("settings", {}), **run.get("settings", {})}
        try:
            built.append(_build_run(merged))
        except UsageError as exc:
            raise UsageError(f"run {i}: {exc}") from None
        names.append(str(run.get("name", i)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_execute_safe, built))
    else:
        results = [_execute_safe(b) for b in built]
    payload, rows, ok = [], [], True
    for name, (rep, err) in zip(names, results):
        if err:
            ok = False
            payload.append({"run": name, "error": err, "pass": False})
            rows.append([name, "", None, None, None, None, None, None, False])
            continue
        ok = ok and rep.passed
        payload.append({"run": name, **rep.to_json_dict()})
        rows.append(rep.csv_row(name))
    json_path = args.json or (cfg.get("json") if isinstance(cfg, dict) else None)
    csv_path = args.csv or (cfg.get("csv") if isinstance(cfg, dict) else None)
    if json_path:
        with open(json_path, "w") as fh:
            fh.write(dumps(payload))
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write(_csv_text(rows))
    sys.stdout.write(dumps(payload))
    return 0 if ok else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="grushin-hardy", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def quad(p):
        p.add_argument("--nodes", type=int)
        p.add_argument("--panels", type=int)
        p.add_argument("--tol", type=float, default=1e-3)

    v = sub.add_parser("verify", help="check a catalog identity by quadrature")
    v.add_argument("--catalog", required=True)
    v.add_argument("--params")
    v.add_argument("--space")
    v.add_argument("--p", type=float)
    v.add_argument("--f")
    v.add_argument("--out")
    quad(v)
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("derive-weight", help="w = -div_gamma(v|grad phi|^(p-2) grad phi)/phi^(p-1) at a point")
    d.add_argument("--space", required=True)
    d.add_argument("--p", type=float, required=True)
    d.add_argument("--v")
    d.add_argument("--phi")
    d.add_argument("--at", required=True, help="x1,..,xm;y1,..,yk")
    d.add_argument("--catalog")
    d.add_argument("--params")
    d.set_defaults(func=cmd_derive_weight)

    c = sub.add_parser("constants", help="extremal constants of the C_p ratios")
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--grid", type=int, default=400)
    c.set_defaults(func=cmd_constants)

    h = sub.add_parser("hpw", help="HPW deficit at the optimal Gaussian-type phi")
    h.add_argument("--space", required=True)
    h.add_argument("--p", type=float, required=True)
    h.add_argument("--f", required=True)
    h.add_argument("--alpha-scale", type=float, default=1.0)
    h.add_argument("--out")
    quad(h)
    h.set_defaults(func=cmd_hpw)

    b = sub.add_parser("bessel", help="radial ODE residual of a catalog entry")
    b.add_argument("--catalog", required=True)
    b.add_argument("--params")
    b.add_argument("--space", required=True)
    b.add_argument("--p", type=float, required=True)
    b.add_argument("--grid", help="r0:r1:n, log-spaced")
    b.add_argument("--tol", type=float, default=1e-6)
    b.set_defaults(func=cmd_bessel)

    k = sub.add_parser("campaign", help="run every entry of a JSON config")
    k.add_argument("--config", required=True)
    k.add_argument("--jobs", type=int, default=1)
    k.add_argument("--csv")
    k.add_argument("--json")
    k.set_defaults(func=cmd_campaign)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
