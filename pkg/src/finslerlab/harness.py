"""Verification suites run by ``finslerlab verify``.

Each suite takes a metric, a seeded sample batch and the tolerance tiers and
returns a :class:`~finslerlab.symmetry.ResidualReport`.  Residuals are
per-sample maxima, relative where the compared objects have a natural scale.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import curvature as cv
from . import nonriem as nr
from . import symmetry as sym
from .catalog import CatalogEntry
from .core import CORE, CURVATURE, Geometry
from .errors import LeftDomain, MeanCartanVanishes
from .expr import MetricField, VectorFieldExpr
from .geodesics import integrate_geodesic, tau_derivative_check
from .jets import jeinsum
from .symmetry import ResidualReport

DEFAULT_TIERS = {"jet": 1e-8, "flow": 1e-5, "quadrature": 1e-3}
SUITES = ("core-identities", "curvature-identities", "nonriemannian", "lemma31", "prop-iinv", "ricci-compare")
LADDER = (0.5, 2.0, 7.0)


@dataclass
class Target:
    """What a suite runs on: the metric, its catalog entry (if any) and the samples."""
    metric: MetricField
    entry: Optional[CatalogEntry]
    xs: np.ndarray
    ys: np.ndarray
    fields: Sequence[VectorFieldExpr] = ()

    def has(self, prop: str) -> bool:
        return self.entry is not None and self.entry.is_(prop)


def _bmax(a) -> np.ndarray:
    a = np.asarray(a)
    return np.abs(a).reshape(a.shape[0], -1).max(axis=1) if a.ndim > 1 else np.abs(a)


def _rel(a, b) -> np.ndarray:
    """max |a - b| / (1 + max |b|), per sample."""
    return _bmax(np.asarray(a) - np.asarray(b)) / (1.0 + _bmax(b))


def _smp(t: Target):
    return t.xs, t.ys


# --------------------------------------------------------------------------
# Core identities
# --------------------------------------------------------------------------

LADDER_OBJECTS = (
    ("g", lambda geo: geo.g, 0),
    ("C", lambda geo: geo.Clow, -1),
    ("A", lambda geo: geo.A, 0),
    ("G", lambda geo: geo.G, 2),
    ("G^i_j", lambda geo: geo.N, 1),
    ("G^i_jk", lambda geo: geo.Gb, 0),
    ("B", lambda geo: geo.Bw, -1),
)


def core_identities(t: Target, tiers: dict) -> ResidualReport:
    tol = tiers["jet"]
    rep = ResidualReport("core-identities")
    geo = Geometry(t.metric, t.xs, t.ys, CORE)
    g = geo.g0
    n = geo.n
    F, Fy = geo.F, geo.F.grad_y()
    alt = jeinsum(",ij->ij", F, Fy.grad_y()) + jeinsum("i,j->ij", Fy, Fy)
    rep.add("g = F F_yy + F_y F_y", _rel(g, alt.value), tol, _smp(t))
    rep.add("g g^-1 = 1", _bmax(np.einsum("bij,bjk->bik", g, geo.ginv.value) - np.eye(n)), tol, _smp(t))
    C = geo.Clow.value
    yC = np.einsum("bi,bijk->bjk", geo.y, C)
    rep.add("y^i C_ijk = 0", _bmax(yC) / (1.0 + _bmax(C) * np.linalg.norm(geo.y, axis=1)), tol, _smp(t))
    ell = geo.ell_up.value
    rep.add("g(l, l) = 1", np.abs(np.einsum("bij,bi,bj->b", g, ell, ell) - 1.0), tol, _smp(t))
    A = geo.A.value
    rep.add("A(., ., l) = 0", _bmax(np.einsum("bijk,bk->bij", A, ell)) / (1.0 + _bmax(A)), tol, _smp(t))
    rep.add("nabla_k g_ij = 0", _bmax(geo.cartan_h(geo.g, "ll").value) / (1.0 + _bmax(geo.dg_h.value)), tol,
            _smp(t))
    yyG = np.einsum("bijk,bj,bk->bi", geo.Gamma.value, geo.y, geo.y)
    rep.add("y^j y^k Gamma^i_jk = 2 G^i", _rel(yyG, 2.0 * geo.G.value), tol, _smp(t))
    d0C = geo.contract_y(geo.cartan_h(geo.Clow, "lll")).value
    D0C = geo.contract_y(geo.berwald_h(geo.Clow, "lll")).value
    rep.add("nabla_0 C = D_0 C", _rel(d0C, D0C), tol, _smp(t))
    for lam in LADDER:
        geo2 = Geometry(t.metric, t.xs, lam * t.ys, CORE)
        Fv = t.metric.value(t.xs, lam * t.ys)
        rep.add(f"F homogeneity lambda={lam:g}", np.abs(Fv - lam * geo.F.value) / (lam * geo.F.value), tol,
                _smp(t))
        for name, fn, deg in LADDER_OBJECTS:
            ref = lam ** deg * fn(geo).value
            rep.add(f"{name} degree {deg} lambda={lam:g}", _rel(fn(geo2).value, ref), tol, _smp(t))
    return rep


# --------------------------------------------------------------------------
# Curvature identities
# --------------------------------------------------------------------------

def probe_vector(geo: Geometry):
    """A y-dependent, x-dependent vector field: (1 + x1^2) y^i + x_n F g^ij I_j."""
    x1, xn = geo.xj[0], geo.xj[-1]
    Iup = jeinsum("ij,j->i", geo.ginv, geo.I)
    return jeinsum(",i->i", 1.0 + x1 * x1, geo.yvec) + jeinsum(",i->i", xn * geo.F, Iup)


def probe_scalar(geo: Geometry):
    """A 1-homogeneous scalar: (1 + x1^2) F + x1 y1."""
    x1 = geo.xj[0]
    return (1.0 + x1 * x1) * geo.F + x1 * geo.yj[0]


def curvature_identities(t: Target, tiers: dict) -> ResidualReport:
    tol = tiers["flow"]
    rep = ResidualReport("curvature-identities")
    geo = Geometry(t.metric, t.xs, t.ys, CURVATURE)
    geo.g0
    y = geo.y
    K = cv.berwald_hh(geo).value
    R = cv.trace_curvature(geo).value
    rep.add("K^r_0m0 = R^r_m", _rel(np.einsum("brjml,bj,bl->brm", K, y, y), R), tol, _smp(t))
    Rkl = cv.nonlinear_curvature(geo).value
    rep.add("y^j K^i_jkl = R^i_kl", _rel(np.einsum("bijkl,bj->bikl", K, y), Rkl), tol, _smp(t))
    lhs, rhs = cv.ricci_identity_lhs_rhs(geo, probe_vector)
    rep.add("Cartan Ricci identity", _rel(lhs.value, rhs.value), tol, _smp(t))
    lhs, rhs = cv.berwald_commutation_lhs_rhs(geo, probe_scalar)
    rep.add("Berwald commutation D_m D_k - D_k D_m", _rel(lhs.value, rhs.value), tol, _smp(t))
    first, second = cv.bianchi_traces(geo)
    scale = 1.0 + _bmax(cv.berwald_ricci(geo).grad_y().value)
    rep.add("y^j K_jl.m = 0", _bmax(first.value) / scale, tol, _smp(t))
    rep.add("y^l K_jl.m = -2 H_jm", _bmax(second.value) / scale, tol, _smp(t))
    ell = geo.ell_up.value
    Ric = cv.ricci_scalar(geo).value / geo.F.value ** 2
    Ric_ij = cv.ricci_second(geo).value
    rep.add("Ric = l^i l^k Ric_ik", np.abs(np.einsum("bij,bi,bj->b", Ric_ij, ell, ell) - Ric) / (1 + np.abs(Ric)),
            tol, _smp(t))
    rep.add("Ric_ij = R~_ij - H_ij", _rel(Ric_ij, cv.ricci_first(geo).value - nr.h_jet(geo).value), tol, _smp(t))
    return rep


# --------------------------------------------------------------------------
# Non-Riemannian quantities
# --------------------------------------------------------------------------

S_BERWALD_TOL = 2e-6
S_TAU_TOL = 1e-4
IML_TOL = 1e-5
IML_STD_TOL = 1e-4


def nonriemannian(t: Target, tiers: dict) -> ResidualReport:
    rep = ResidualReport("nonriemannian")
    geo = Geometry(t.metric, t.xs, t.ys, CORE)
    geo.g0
    Fv = geo.F.value
    a, b = nr.e_path_a(geo).value, nr.e_jet(geo).value
    rep.add("E path A = E path B", _bmax(a - b) / (_bmax(b) + 1.0 / Fv), tiers["quadrature"], _smp(t))
    L = nr.landsberg_jet(geo).value
    rep.add("L totally symmetric", _bmax(L - np.swapaxes(L, 1, 2)) + _bmax(L - np.swapaxes(L, 1, 3)),
            tiers["jet"], _smp(t))
    rep.add("y^i L_ijk = 0", _bmax(np.einsum("bi,bijk->bjk", geo.y, L)) / (1.0 + _bmax(L) * Fv), tiers["jet"],
            _smp(t))
    S = nr.s_jet(geo).value
    if t.has("berwald"):
        rep.add("S = 0 (Berwald)", np.abs(S) / Fv, S_BERWALD_TOL, _smp(t))
    x0, y0 = t.xs[0], t.ys[0] / Fv[0]
    T = 0.25 * min(1.0, float(t.metric.guard(x0)))
    try:
        curve = integrate_geodesic(t.metric, x0, y0, T=T, steps=250)
        _, dtau, Sg = tau_derivative_check(t.metric, curve, stride=10)
        rep.add("S = d tau / dt along a geodesic", np.abs(dtau - Sg), S_TAU_TOL)
    except LeftDomain as exc:
        rep.notes.append(f"geodesic probe skipped: {exc}")
    if t.has("isotropic_mean_landsberg"):
        lam, res = nr.iml_fit_values(geo.ginv.value, geo.I.value, nr.mean_landsberg_jet(geo).value)
        rep.add("J + lambda I = 0 fit residual", res, IML_TOL, _smp(t))
        rep.add("std(lambda / F)", np.array([np.std(lam / Fv)]), IML_STD_TOL)
        rep.notes.append(f"mean lambda/F = {np.mean(lam / Fv):.12g}")
    else:
        try:
            lam, res = nr.iml_fit_values(geo.ginv.value, geo.I.value, nr.mean_landsberg_jet(geo).value)
            rep.notes.append(f"isotropy fit (not asserted): max residual {np.max(res):.3e}, "
                             f"lambda/F range [{np.min(lam / Fv):.6g}, {np.max(lam / Fv):.6g}]")
        except MeanCartanVanishes:
            rep.notes.append("isotropy fit skipped: mean Cartan torsion vanishes")
    return rep


# --------------------------------------------------------------------------
# Symmetry suites
# --------------------------------------------------------------------------

def _classified(t: Target, tiers: dict):
    tol = sym.Tolerances(jet=tiers.get("projective", 1e-6), flow=tiers["flow"])
    return [(X, sym.classify(t.metric, X, (t.xs, t.ys), tol)) for X in t.fields]


def lemma31(t: Target, tiers: dict, classified=None) -> ResidualReport:
    rep = ResidualReport("lemma31")
    tol = tiers["flow"]
    for X, c in classified or _classified(t, tiers):
        if not c.verdicts["projective"]:
            rep.notes.append(f"{X.label}: not projective, skipped")
            continue
        r = sym.verify_lemma31(t.metric, X, (t.xs, t.ys), tol)
        for item in r.items:
            item.name = f"{X.label}: {item.name}"
            rep.items.append(item)
        rep.notes += [f"{X.label}: {s}" for s in r.notes]
        rep.add(f"{X.label}: Lemma B consistency", np.array([c.lemma_b]), tol)
        geo = Geometry(t.metric, t.xs, t.ys, (3, 5))
        lj = sym.LieJets(geo, X)
        rep.add(f"{X.label}: y^k Psi_k = Psi", np.abs(np.einsum("bk,bk->b", lj.psi_k.value, t.ys) - lj.psi.value),
                tiers["jet"], _smp(t))
    return rep


def _iinv_fields(classified):
    return [(X, c) for X, c in classified if c.verdicts["projective"] and c.verdicts["i_invariant"]]


def prop_iinv(t: Target, tiers: dict, classified=None) -> ResidualReport:
    rep = ResidualReport("prop-iinv")
    cl = classified or _classified(t, tiers)
    for X, _ in _iinv_fields(cl):
        r = sym.verify_prop_Iinv(t.metric, X, (t.xs, t.ys), tiers["flow"])
        for item in r.items:
            item.name = f"{X.label}: {item.name}"
            rep.items.append(item)
    if not rep.items:
        rep.notes.append("no I-invariant projective field among the requested fields")
    return rep


def ricci_compare(t: Target, tiers: dict, classified=None) -> ResidualReport:
    rep = ResidualReport("ricci-compare")
    cl = classified or _classified(t, tiers)
    for X, _ in _iinv_fields(cl):
        r = sym.lie_ricci_compare(t.metric, X, (t.xs, t.ys), tiers["flow"])
        for item in r.items:
            item.name = f"{X.label}: {item.name}"
            rep.items.append(item)
        rep.notes += [f"{X.label}: {s}" for s in r.notes]
    if not rep.items:
        rep.notes.append("no I-invariant projective field among the requested fields")
    return rep


SUITE_FUNCS: dict = {
    "core-identities": core_identities,
    "curvature-identities": curvature_identities,
    "nonriemannian": nonriemannian,
    "lemma31": lemma31,
    "prop-iinv": prop_iinv,
    "ricci-compare": ricci_compare,
}


def pool_size(tasks: int) -> int:
    cap = os.environ.get("FINSLERLAB_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, tasks))


def run_suites(t: Target, names: Sequence[str], tiers: dict, timings: Optional[dict] = None) -> list:
    """Run the named suites in a worker pool; results come back in request order.

    Wall-clock seconds per suite go into ``timings`` when given.
    """
    names = list(SUITES) if "all" in names else list(names)
    classified = None
    if any(n in ("lemma31", "prop-iinv", "ricci-compare") for n in names):
        classified = _classified(t, tiers)

    def job(name: str):
        fn = SUITE_FUNCS[name]
        start = time.perf_counter()
        if name in ("lemma31", "prop-iinv", "ricci-compare"):
            out = fn(t, tiers, classified)
        else:
            out = fn(t, tiers)
        if timings is not None:
            timings[name] = time.perf_counter() - start
        return out

    with ThreadPoolExecutor(max_workers=pool_size(len(names))) as ex:
        return list(ex.map(job, names))
