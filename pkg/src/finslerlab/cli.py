"""``finslerlab {report|verify|classify|geodesic|catalog}``.

Exit status: 0 pass, 1 identity failure, 2 config error, 3 domain/numeric error.
"""
from __future__ import annotations

import argparse
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import curvature as cv
from . import nonriem as nr
from . import symmetry as sym
from .catalog import METRICS, catalog_vector_fields, get_metric
from .config import PROBES, RunConfig, apply_overrides, load_config
from .core import CURVATURE, Geometry
from .errors import (ConfigError, ExprSyntaxError, FinslerError, IndexOutOfRange, InsufficientSamples,
                     InvalidParameter, LeftDomain, UnknownIdentifier, YVariableInVectorField)
from .geodesics import integrate_geodesic, probe_constancy
from .harness import SUITES, Target, run_suites
from .report import document, dumps, residual_table

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
CONFIG_ERRORS = (ConfigError, InvalidParameter, ExprSyntaxError, UnknownIdentifier, IndexOutOfRange,
                 YVariableInVectorField, InsufficientSamples)


class SampleError(FinslerError):
    """An engine error re-raised with the offending sample's coordinates."""


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def report_blocks(metric, xs, ys, flags: int, seed: int) -> list:
    """Full per-sample tensor dump."""
    geo = Geometry(metric, xs, ys, CURVATURE)
    geo.g0
    B, n = xs.shape
    t = {
        "F": geo.F, "g": geo.g, "g_inv": geo.ginv, "ell": geo.ell_up, "C": geo.Clow, "A": geo.A, "I": geo.I,
        "G": geo.G, "G^i_j": geo.N, "G^i_jk": geo.Gb, "Gamma": geo.Gamma, "B": geo.Bw,
        "R^i_k": cv.trace_curvature(geo), "Ric": cv.ricci_scalar(geo), "K^i_jkl": cv.berwald_hh(geo),
        "K_jl": cv.berwald_ricci(geo), "R~_ij": cv.ricci_first(geo), "Ric_ij": cv.ricci_second(geo),
        "cartan_R": cv.cartan_hh(geo), "cartan_P": cv.cartan_P(geo), "cartan_Q": cv.cartan_Q(geo),
        "S": nr.s_jet(geo), "E": nr.e_jet(geo), "H": nr.h_jet(geo), "L": nr.landsberg_jet(geo),
        "J": nr.mean_landsberg_jet(geo),
    }
    vals = {k: v.value for k, v in t.items()}
    vals["tau"] = nr.distortion_values(geo)
    if n > 1:
        v = np.random.default_rng(seed).normal(size=(B, flags, n))
        vals["flag_transverse"] = v
        vals["flag_curvature"] = cv.flag_curvature_values(geo, v)
    order = ["x", "y"] + list(vals)
    out = []
    for b in range(B):
        block = {"x": xs[b], "y": ys[b]}
        block.update({k: vals[k][b] for k in vals})
        out.append({k: block[k] for k in order})
    return out


def _locate(fn, metric, xs, ys, *args):
    """Run ``fn`` on the batch; on failure, find the first failing sample and name it."""
    try:
        return fn(metric, xs, ys, *args)
    except FinslerError as batch_exc:
        for b in range(len(xs)):
            try:
                fn(metric, xs[b:b + 1], ys[b:b + 1], *args)
            except FinslerError as exc:
                raise SampleError(f"{type(exc).__name__} at x = {xs[b].tolist()}, y = {ys[b].tolist()}: {exc}") \
                    from exc
        raise batch_exc


def cmd_report(cfg: RunConfig):
    start = time.perf_counter()
    entry = cfg.entry()
    xs, ys = entry.samples(cfg.samples, cfg.seed)
    blocks = _locate(report_blocks, entry.metric, xs, ys, cfg.flags, cfg.seed)
    payload = {"metric": entry.label, "dim": cfg.dim, "samples": blocks}
    return document("report", cfg.echo(), payload, True, EXIT_PASS,
                    {"total": time.perf_counter() - start}), EXIT_PASS


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

def cmd_verify(cfg: RunConfig, out=None):
    out = out or sys.stdout
    start = time.perf_counter()
    entry = cfg.entry()
    xs, ys = entry.samples(cfg.samples, cfg.seed)
    target = Target(entry.metric, entry, xs, ys, cfg.vector_fields())
    timings: dict = {}
    reports = run_suites(target, [cfg.suite], cfg.tolerances, timings)
    passed = all(r.passed for r in reports)
    for r in reports:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.suite} ({len(r.items)} items)", file=out)
        for i in r.items:
            print(f"    {'ok ' if i.passed else 'BAD'} {i.name:55s} max {i.max:.3e}  tol {i.tol:.0e}", file=out)
            if not i.passed and i.worst is not None:
                print(f"        worst sample: x = {i.worst[0]}, y = {i.worst[1]}", file=out)
        for note in r.notes:
            print(f"    note: {note}", file=out)
    code = EXIT_PASS if passed else EXIT_FAIL
    payload = {"metric": entry.label, "dim": cfg.dim, "suites": [residual_table(r) for r in reports]}
    timings["total"] = time.perf_counter() - start
    return document("verify", cfg.echo(), payload, passed, code, timings), code


# --------------------------------------------------------------------------
# classify
# --------------------------------------------------------------------------

def cmd_classify(cfg: RunConfig, out=None):
    out = out or sys.stdout
    start = time.perf_counter()
    entry = cfg.entry()
    xs, ys = entry.samples(cfg.samples, cfg.seed)
    tol = sym.Tolerances(flow=cfg.tolerances["flow"])
    rows = []
    header = f"{'metric':18s} {'field':14s} " + " ".join(f"{v:>12s}" for v in sym.VERDICTS)
    print(header, file=out)
    engine_errors = []
    for X in cfg.vector_fields():
        rep = sym.classify(entry.metric, X, (xs, ys), tol, seed=cfg.seed)
        marks = " ".join(f"{'Y' if rep.verdicts[v] else 'N':>12s}" for v in sym.VERDICTS)
        print(f"{entry.label:18s} {X.label:14s} {marks}", file=out)
        engine_errors += [f"{X.label}: {e}" for e in rep.engine_errors]
        rows.append({"field": X.label, "verdicts": rep.verdicts, "residuals": rep.residuals,
                     "lemma_b": rep.lemma_b, "psi": rep.psi, "f": rep.f, "engine_errors": rep.engine_errors})
    for e in engine_errors:
        print(f"engine error: {e}", file=out)
    code = EXIT_FAIL if engine_errors else EXIT_PASS
    payload = {"metric": entry.label, "dim": cfg.dim, "samples": cfg.samples,
               "tolerances": {"jet": tol.jet, "flow": tol.flow}, "rows": rows}
    return document("classify", cfg.echo(), payload, not engine_errors, code,
                    {"total": time.perf_counter() - start}), code


# --------------------------------------------------------------------------
# geodesic
# --------------------------------------------------------------------------

def cmd_geodesic(cfg: RunConfig, out=None):
    out = out or sys.stdout
    start = time.perf_counter()
    entry = cfg.entry()
    n = cfg.dim
    x0 = np.zeros(n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    y0 = np.eye(n)[0] if cfg.y0 is None else np.asarray(cfg.y0, dtype=float)
    if x0.shape != (n,) or y0.shape != (n,):
        raise ConfigError(f"--x0 and --y0 need {n} components")
    if cfg.probe == "flag_curvature" and n < 2:
        raise ConfigError("flag curvature needs dimension >= 2")
    curve = integrate_geodesic(entry.metric, x0, y0, T=cfg.T, steps=cfg.steps)
    stats = None
    if cfg.probe != "none":
        column = probe_constancy(entry.metric, curve, cfg.probe, flags=1, seed=cfg.seed)
        vals = column.values[:, 0] if column.values.ndim == 2 else column.values
        curve.probe, curve.probe_name = vals, cfg.probe
        st = probe_constancy(entry.metric, curve, cfg.probe, flags=cfg.flags, stride=max(1, cfg.steps // 100),
                             seed=cfg.seed)
        stats = {"quantity": st.quantity, "mean": st.mean, "max_deviation": st.max_deviation}
    if cfg.csv:
        curve.to_csv(cfg.csv)
    summary = (f"geodesic on {entry.label}: T = {cfg.T}, steps = {cfg.steps}, "
               f"F drift = {curve.drift:.3e}")
    if stats:
        summary += f", {stats['quantity']} mean = {stats['mean']:.10g}, max deviation = {stats['max_deviation']:.3e}"
    print(summary, file=out if cfg.csv else sys.stderr)
    if not cfg.csv:
        curve.to_csv(out)
    payload = {"metric": entry.label, "dim": n, "x_end": curve.x[-1], "y_end": curve.y[-1],
               "F_drift": curve.drift, "probe": stats}
    return document("geodesic", cfg.echo(), payload, True, EXIT_PASS,
                    {"total": time.perf_counter() - start}), EXIT_PASS


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------

def cmd_catalog(dim: int, out=None):
    out = out or sys.stdout
    payload = {"dim": dim, "metrics": [], "fields": []}
    print(f"metrics (dim {dim}):", file=out)
    for label in METRICS:
        try:
            e = get_metric(label, dim)
        except InvalidParameter as exc:
            print(f"  {label:18s} unavailable: {exc}", file=out)
            continue
        props = ", ".join(f"{k}={v}" for k, v in e.properties.items())
        print(f"  {label:18s} {props}", file=out)
        payload["metrics"].append({"label": label, "properties": e.properties, "provenance": e.provenance})
    print("vector fields:", file=out)
    for X in catalog_vector_fields(dim) if dim >= 2 else []:
        print(f"  {X.label:14s} " + ", ".join(c.source for c in X.components), file=out)
        payload["fields"].append({"label": X.label, "components": [c.source for c in X.components]})
    return document("catalog", {"dim": dim}, payload, True, EXIT_PASS, {}), EXIT_PASS


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, metric=True):
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--dim", type=int, help="dimension n (1..4); required")
    if metric:
        p.add_argument("--metric", help=f"catalog metric: {', '.join(METRICS)}")
        p.add_argument("--metric-expr", dest="metric_expr", help="Finsler function F as an expression in x1.., y1..")
        p.add_argument("--guard", help="domain guard expression (positive inside the domain)")
    p.add_argument("--samples", type=int, help="number of seeded samples (default 20)")
    p.add_argument("--seed", type=int, help="sampling seed (default 0)")
    p.add_argument("--out", dest="output", help="write the JSON report here ('-' for stdout)")
    for tier in ("jet", "flow", "quadrature"):
        p.add_argument(f"--tol-{tier}", dest=f"tol_{tier}", type=float, help=f"{tier} tolerance tier")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="finslerlab", description="Pointwise Finsler geometry by Taylor jets.")
    ap.add_argument("--version", action="version", version=f"finslerlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("report", help="dump every tensor at seeded samples")
    _common(p)
    p.add_argument("--flags", type=int, help="random flags per sample (default 5)")

    p = sub.add_parser("verify", help="run identity suites")
    _common(p)
    p.add_argument("--suite", help=f"one of {', '.join(SUITES)}, all (default all)")
    p.add_argument("--field", action="append",
                   help="vector field: catalog label or name=expr1;expr2 (repeatable; default: whole catalog)")

    p = sub.add_parser("classify", help="classify vector fields (projective, affine, Killing, ...)")
    _common(p)
    p.add_argument("--field", action="append", help="vector field: catalog label or name=expr1;expr2")

    p = sub.add_parser("geodesic", help="integrate a geodesic and probe a quantity along it")
    _common(p)
    p.add_argument("--x0", help="initial point, comma separated")
    p.add_argument("--y0", help="initial velocity, comma separated")
    p.add_argument("--T", type=float, help="integration time (negative runs backward)")
    p.add_argument("--steps", type=int, help="RK4 steps")
    p.add_argument("--probe", choices=PROBES, help="quantity recorded along the curve")
    p.add_argument("--flags", type=int, help="random flags per point for the statistics")
    p.add_argument("--csv", help="trajectory CSV path (default stdout)")

    p = sub.add_parser("catalog", help="list built-in metrics and vector fields")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--out", dest="output", help="write the JSON listing here ('-' for stdout)")
    return ap


def _emit(doc: dict, path: Optional[str]):
    if not path:
        return
    text = dumps(doc)
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        if args.command == "catalog":
            doc, code = cmd_catalog(args.dim)
            _emit(doc, args.output)
            return code
        cfg = apply_overrides(load_config(args.config), args).validate()
        if args.command == "report":
            doc, code = cmd_report(cfg)
            _emit(doc, cfg.output or "-")
            return code
        # verify/classify/geodesic print a human summary; JSON goes to --out
        quiet_out = sys.stderr if cfg.output == "-" else sys.stdout
        fn = {"verify": cmd_verify, "classify": cmd_classify, "geodesic": cmd_geodesic}[args.command]
        doc, code = fn(cfg, quiet_out)
        _emit(doc, cfg.output)
        return code
    except CONFIG_ERRORS as exc:
        print(f"finslerlab: config error: {exc}", file=sys.stderr)
        print(sub.format_usage(), file=sys.stderr, end="")
        return EXIT_CONFIG
    except LeftDomain as exc:
        print(f"finslerlab: trajectory left the domain at t = {exc.t!r}", file=sys.stderr)
        return EXIT_NUMERIC
    except FinslerError as exc:
        print(f"finslerlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
