"""Complete lifts, Lie derivatives along them, and the projective-field classifier.

Two independent routes to every Lie derivative are kept apart on purpose:

* the *flow route* pulls an object back along the flow of the complete lift
  (RK4 flow, its Jacobian and Hessian) and differentiates in the flow
  parameter with a Richardson-extrapolated central difference;
* the *jet route* evaluates closed-form right-hand sides built from the
  characteristic function Psi, which itself comes from the jet of the
  Lie derivative of the spray.

The verification suites compare the two.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import curvature as cv
from . import nonriem as nr
from .core import CURVATURE, SYMMETRY, Geometry, TangentSample, TensorValue, jlin
from .errors import (ExtrapolationDiverged, FlowLeftDomain, InsufficientSamples, NotIInvariant,
                     NotProjective)
from .expr import MetricField, VectorFieldExpr
from .geodesics import field_derivatives, flow_with_variations
from .jets import Jet, expr_jet, jeinsum, stack

FLOW_STEP = 1e-3
MIN_SAMPLES = 20


# --------------------------------------------------------------------------
# Complete lift
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LiftedField:
    base: VectorFieldExpr

    @property
    def n(self) -> int:
        return self.base.n

    def horizontal(self, x) -> np.ndarray:
        return self.base.value(x)

    def vertical(self, x, y) -> np.ndarray:
        """Y^i = y^k dX^i/dx^k."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        _, D, _ = field_derivatives(self.base, x, order=1)
        return np.einsum("bik,bk->bi", D, y)

    def lie_y(self, x, y, h: float = FLOW_STEP) -> np.ndarray:
        """Residual of d/dt (J(t) y)|_0 = Y: the lift moves y^i exactly as the flow Jacobian does."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        _, J, _ = flow_with_variations(self.base, x, [-2 * h, -h, h, 2 * h], dt_max=h)
        Jy = np.einsum("tbij,bj->tbi", J, y)
        d = (Jy[0] - 8 * Jy[1] + 8 * Jy[2] - Jy[3]) / (12 * h)
        return d - self.vertical(x, y)


def complete_lift(X: VectorFieldExpr) -> LiftedField:
    return LiftedField(X)


# --------------------------------------------------------------------------
# Flow route
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """A pipeline object to pull back: ``fn(geo) -> Jet`` and its index variance.

    ``kind`` is ``"tensor"`` or one of the connection objects ``"spray"``,
    ``"N"`` (G^i_j) and ``"Gb"`` (G^i_jk), whose pullbacks pick up flow
    Hessian terms.
    """
    name: str
    fn: Callable[[Geometry], Jet]
    variance: str
    kind: str = "tensor"


FIELDS = {
    "g": FieldSpec("g", lambda geo: geo.g, "ll"),
    "F2": FieldSpec("F2", lambda geo: geo.F * geo.F, ""),
    "I": FieldSpec("I", lambda geo: geo.I, "l"),
    "C": FieldSpec("C", lambda geo: geo.Clow, "lll"),
    "J": FieldSpec("J", nr.mean_landsberg_jet, "l"),
    "E": FieldSpec("E", nr.e_jet, "ll"),
    "H": FieldSpec("H", nr.h_jet, "ll"),
    "B": FieldSpec("B", lambda geo: geo.Bw, "ulll"),
    "K": FieldSpec("K", cv.berwald_hh, "ulll"),
    "Kjl": FieldSpec("Kjl", cv.berwald_ricci, "ll"),
    "Ric": FieldSpec("Ric", cv.ricci_second, "ll"),
    "Rtilde": FieldSpec("Rtilde", cv.ricci_first, "ll"),
    "spray": FieldSpec("spray", lambda geo: geo.G, "u", "spray"),
    "N": FieldSpec("N", lambda geo: geo.N, "ul", "N"),
    "Gb": FieldSpec("Gb", lambda geo: geo.Gb, "ull", "Gb"),
}


@dataclass(frozen=True)
class LieValue:
    value: np.ndarray   # (B, *tensor)
    error: np.ndarray   # (B,) difference between 6th- and 4th-order estimates


class FlowPullback:
    """Pullbacks of pipeline objects along the lifted flow at a batch of samples."""

    def __init__(self, metric: MetricField, X: VectorFieldExpr, x, y, h: float = FLOW_STEP,
                 order=CURVATURE):
        self.metric, self.X, self.h = metric, X, h
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        self.y = np.atleast_2d(np.asarray(y, dtype=float))
        B, n = self.x.shape
        self.times = h * np.array([-3, -2, -1, 1, 2, 3], dtype=float)
        xs, J, Hs = flow_with_variations(X, self.x, self.times, dt_max=h)
        if metric.domain_guard is not None and np.any(metric.guard(xs) <= 0):
            raise FlowLeftDomain("flow of the vector field leaves the domain within the difference stencil")
        self.J = J
        self.Jinv = np.linalg.inv(J)
        self.Hs = Hs
        ys = np.einsum("tbij,bj->tbi", J, self.y)
        self.geo = Geometry(metric, xs.reshape(-1, n), ys.reshape(-1, n), order)
        self.B, self.n = B, n

    def pulled(self, spec: FieldSpec) -> np.ndarray:
        """Pulled-back components at each stencil time, shape (6, B, *tensor)."""
        T = spec.fn(self.geo).value
        T = T.reshape((6, self.B) + T.shape[1:])
        J, Ji = self.J, self.Jinv
        if spec.kind == "spray":
            T = T + 0.5 * np.einsum("tbajk,bj,bk->tba", self.Hs, self.y, self.y)
            return np.einsum("tbia,tba->tbi", Ji, T)
        if spec.kind == "N":
            T = np.einsum("tbac,tbcj->tbaj", T, J) + np.einsum("tbajk,bk->tbaj", self.Hs, self.y)
            return np.einsum("tbia,tbaj->tbij", Ji, T)
        if spec.kind == "Gb":
            T = np.einsum("tbacd,tbcj,tbdk->tbajk", T, J, J) + self.Hs
            return np.einsum("tbia,tbajk->tbijk", Ji, T)
        letters = "cdefgh"
        for p, kind in enumerate(spec.variance):
            idx = letters[:len(spec.variance)]
            src = idx[:p] + "z" + idx[p + 1:]
            if kind == "l":
                T = np.einsum(f"tb{src},tbz{idx[p]}->tb{idx}", T, J)
            else:
                T = np.einsum(f"tb{idx[p]}z,tb{src}->tb{idx}", Ji, T)
        return T

    def lie(self, spec: Union[FieldSpec, str]) -> LieValue:
        if isinstance(spec, str):
            spec = FIELDS[spec]
        P = self.pulled(spec)
        h = self.h
        D = [(P[3 + k] - P[2 - k]) / (2 * (k + 1) * h) for k in range(3)]
        d6 = (15 * D[0] - 6 * D[1] + D[2]) / 10
        d4 = (4 * D[0] - D[1]) / 3
        axes = tuple(range(1, d6.ndim))
        err = np.max(np.abs(d6 - d4), axis=axes) if axes else np.abs(d6 - d4)
        scale = 1.0 + (np.max(np.abs(d6), axis=axes) if axes else np.abs(d6))
        if np.any(~np.isfinite(d6)) or np.any(err > 1e-2 * scale):
            raise ExtrapolationDiverged(f"Richardson estimates for {spec.name} disagree by {np.max(err):.2e}")
        return LieValue(d6, err)


def flow_lie(field_spec: Union[FieldSpec, str], X: VectorFieldExpr, F: MetricField, s: TangentSample,
             h: float = FLOW_STEP) -> tuple:
    """Lie derivative of one object at one sample by flow pullback: ``(TensorValue, error)``."""
    if isinstance(field_spec, str):
        field_spec = FIELDS[field_spec]
    fp = FlowPullback(F, X, s.x, s.y, h)
    lv = fp.lie(field_spec)
    variance = field_spec.variance
    return TensorValue(s, variance, lv.value[0]), float(lv.error[0])


# --------------------------------------------------------------------------
# Jet route
# --------------------------------------------------------------------------

class LieJets:
    """Closed-form jets of the Lie-derivative data of X at a batch of samples."""

    def __init__(self, geo: Geometry, X: VectorFieldExpr):
        self.geo, self.X = geo, X
        self.n = geo.n

    @cached_property
    def Xj(self) -> Jet:
        return stack([expr_jet(c, self.geo.xj, self.geo.yj) for c in self.X.components], axis=-1)

    @cached_property
    def DX(self) -> Jet:
        """[i, k] = d_k X^i."""
        return self.Xj.grad_x()

    @cached_property
    def Y(self) -> Jet:
        return jeinsum("rk,k->r", self.DX, self.geo.yvec)

    @cached_property
    def lie_G(self) -> Jet:
        """X^r d_r G^i + Y^r d.r G^i - G^r d_r X^i + 1/2 d_j d_k X^i y^j y^k."""
        geo = self.geo
        t1 = jeinsum("r,ir->i", self.Xj, geo.G.grad_x())
        t2 = jeinsum("r,ir->i", self.Y, geo.N)
        t3 = jeinsum("r,ir->i", geo.G, self.DX)
        ddX = self.DX.grad_x()
        t4 = 0.5 * jeinsum("ijk,j->ik", ddX, geo.yvec)
        t4 = jeinsum("ik,k->i", t4, geo.yvec)
        return t1 + t2 - t3 + t4

    @cached_property
    def psi(self) -> Jet:
        return jlin("ii->", self.lie_G.grad_y()) / (self.n + 1)

    @cached_property
    def psi_k(self) -> Jet:
        return self.psi.grad_y()

    @cached_property
    def psi_kj(self) -> Jet:
        return self.psi_k.grad_y()

    @cached_property
    def nabla_X(self) -> Jet:
        """[i, k] = nabla_k X^i (Cartan)."""
        return self.geo.cartan_h(self.Xj, "u")

    @cached_property
    def f(self) -> Jet:
        """f = nabla_i X^i + I_i nabla_0 X^i."""
        nX = self.nabla_X
        return jlin("ii->", nX) + jeinsum("i,i->", self.geo.I, self.geo.contract_y(nX))

    @cached_property
    def f_k(self) -> Jet:
        return self.f.grad_y()

    @cached_property
    def lie_g_closed(self) -> Jet:
        """nabla_i X_j + nabla_j X_i + 2 C_ijr nabla_0 X^r."""
        geo = self.geo
        nXl = jeinsum("jr,ri->ij", geo.g, self.nabla_X)  # [i, j] = nabla_i X_j
        return nXl + jlin("ij->ji", nXl) + 2.0 * jeinsum("ijr,r->ij", geo.Clow, geo.contract_y(self.nabla_X))

    @cached_property
    def D_psi(self) -> Jet:
        """[l, k] = D_k Psi_l (Berwald)."""
        return self.geo.berwald_h(self.psi_k, "l")


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass
class ResidualItem:
    name: str
    max: float
    mean: float
    tol: float
    worst: Optional[list] = None

    @property
    def passed(self) -> bool:
        return bool(self.max <= self.tol)


@dataclass
class ResidualReport:
    suite: str
    items: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    def add(self, name: str, residuals: np.ndarray, tol: float, samples=None) -> ResidualItem:
        r = np.asarray(residuals, dtype=float)
        worst = None
        if samples is not None and r.size:
            b = int(np.argmax(r))
            worst = [np.asarray(samples[0][b]).tolist(), np.asarray(samples[1][b]).tolist()]
        item = ResidualItem(name, float(np.max(r)) if r.size else 0.0, float(np.mean(r)) if r.size else 0.0,
                            tol, worst)
        self.items.append(item)
        return item

    def __getitem__(self, name: str) -> ResidualItem:
        for i in self.items:
            if i.name == name:
                return i
        raise KeyError(name)


def _bmax(a) -> np.ndarray:
    a = np.asarray(a)
    return np.abs(a).reshape(a.shape[0], -1).max(axis=1)


@dataclass
class LieSprayResult:
    lie_G: TensorValue
    psi: float
    residual: float


def _as_batch(samples):
    xs, ys = samples
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    return xs, ys


def projective_residuals(lj: LieJets) -> np.ndarray:
    lG = lj.lie_G.value
    res = lG - lj.psi.value[:, None] * lj.geo.y
    return np.linalg.norm(res, axis=1) / (1.0 + np.linalg.norm(lG, axis=1))


def lie_spray(F: MetricField, X: VectorFieldExpr, s: TangentSample) -> LieSprayResult:
    """Lie derivative of the spray, Psi by Euler contraction, and the projectivity residual."""
    geo = Geometry(F, s.x, s.y, (2, 4))
    lj = LieJets(geo, X)
    return LieSprayResult(geo.tensor(lj.lie_G, "u"), float(lj.psi.value[0]),
                          float(projective_residuals(lj)[0]))


@dataclass
class Tolerances:
    jet: float = 1e-6
    flow: float = 1e-5


VERDICTS = ("projective", "affine", "killing", "i_invariant", "e_invariant", "c_projective", "h_invariant")


@dataclass
class ClassificationReport:
    metric: str
    field: str
    verdicts: dict
    residuals: dict
    psi: list
    f: list
    samples: int
    seed: Optional[int]
    tolerances: dict
    lemma_b: Optional[float] = None
    engine_errors: list = field(default_factory=list)

    def row(self) -> str:
        marks = " ".join(f"{k}={'Y' if self.verdicts[k] else 'N'}" for k in VERDICTS)
        return f"{self.metric:18s} {self.field:14s} {marks}"


def classify(F: MetricField, X: VectorFieldExpr, samples, tol: Tolerances = Tolerances(),
             seed: Optional[int] = None) -> ClassificationReport:
    xs, ys = _as_batch(samples)
    if len(xs) < MIN_SAMPLES:
        raise InsufficientSamples(f"classification needs at least {MIN_SAMPLES} samples, got {len(xs)}")
    geo = Geometry(F, xs, ys, SYMMETRY)
    geo.g0
    lj = LieJets(geo, X)
    Fv = geo.F.value
    res = {}
    res["projective"] = float(projective_residuals(lj).max())
    psi = lj.psi.value
    res["affine"] = float(np.max(np.abs(psi) / Fv))
    fp = FlowPullback(F, X, xs, ys, order=(1, 2))
    lg = fp.lie("g")
    res["killing"] = float(np.max(_bmax(lg.value) / (1.0 + _bmax(geo.g0))))
    f = lj.f.value
    res["i_invariant"] = float(np.max(_bmax(lj.f_k.value) * Fv / (1.0 + np.abs(f))))
    pk = lj.psi_k.value
    res["e_invariant"] = float(np.max(_bmax(lj.psi_kj.value) * Fv / (1.0 + _bmax(pk))))
    dpsi = geo.cartan_h(lj.psi_k, "l").value          # [j, k] = nabla_k Psi_j
    res["c_projective"] = float(np.max(_bmax(dpsi - np.swapaxes(dpsi, 1, 2)) / (1.0 + _bmax(dpsi))))
    dpsi2 = geo.cartan_h(lj.psi_kj, "ll").value       # [j, k, l] = nabla_l Psi_jk
    hres = dpsi2 - np.swapaxes(dpsi2, 2, 3)
    res["h_invariant"] = float(np.max(_bmax(hres) * Fv / (1.0 + _bmax(dpsi2) * Fv)))

    projective = res["projective"] <= tol.jet
    v = {
        "projective": projective,
        "affine": projective and res["affine"] <= tol.jet,
        "killing": res["killing"] <= tol.flow,
        "i_invariant": projective and res["i_invariant"] <= tol.jet,
        "e_invariant": projective and res["e_invariant"] <= tol.jet,
        "c_projective": projective and res["c_projective"] <= tol.jet,
        "h_invariant": projective and res["h_invariant"] <= tol.jet,
    }
    errors = []
    if v["i_invariant"] and not v["e_invariant"]:
        errors.append("I-invariant field failed the E-invariance residual")
    if v["affine"] and not v["projective"]:
        errors.append("affine verdict without projectivity")
    lemma_b = None
    if projective:
        lemma_b = float(np.max(lemma_b_residuals(geo, lj, fp=None)))
    return ClassificationReport(F.label, X.label, v, res, psi.tolist(), f.tolist(), len(xs), seed,
                                {"jet": tol.jet, "flow": tol.flow}, lemma_b, errors)


def lemma_b_residuals(geo: Geometry, lj: LieJets, fp: Optional[FlowPullback] = None) -> np.ndarray:
    """nabla_0(Lie g_ij) - (2 Psi g_ij + Psi_i y_j + Psi_j y_i), per sample.

    The left side uses the closed-form Lie derivative of g; Psi comes from the
    flow route when ``fp`` is given, else from the jet route.
    """
    lhs = geo.contract_y(geo.cartan_h(lj.lie_g_closed, "ll")).value
    if fp is not None:
        psi, psi_k = flow_psi(fp)
    else:
        psi, psi_k = lj.psi.value, lj.psi_k.value
    g = geo.g0
    yl = np.einsum("bij,bj->bi", g, geo.y)
    rhs = 2 * psi[:, None, None] * g + np.einsum("bi,bj->bij", psi_k, yl) + np.einsum("bj,bi->bij", psi_k, yl)
    return _bmax(lhs - rhs) / (1.0 + _bmax(rhs))


def flow_psi(fp: FlowPullback):
    """Psi and Psi_k from the flow route: traces of Lie(G^i_j) and Lie(G^i_jk)."""
    n = fp.n
    lN = fp.lie("N").value
    lGb = fp.lie("Gb").value
    return np.einsum("bii->b", lN) / (n + 1), np.einsum("biik->bk", lGb) / (n + 1)


# --------------------------------------------------------------------------
# Verification suites
# --------------------------------------------------------------------------

def _rel(diff, ref) -> np.ndarray:
    return _bmax(diff) / (1.0 + _bmax(ref))


def _require_projective(lj: LieJets, tol: float):
    r = projective_residuals(lj)
    if np.max(r) > tol:
        raise NotProjective(f"{lj.X.label or 'field'} is not projective (residual {np.max(r):.2e})")


def verify_lemma31(F: MetricField, X: VectorFieldExpr, samples, tol: float = 1e-5,
                   proj_tol: float = 1e-6) -> ResidualReport:
    """Items 1-9 of the projective Lie-derivative lemma: flow-route left sides vs jet-route right sides."""
    xs, ys = _as_batch(samples)
    geo = Geometry(F, xs, ys, SYMMETRY)
    geo.g0
    lj = LieJets(geo, X)
    _require_projective(lj, proj_tol)
    fp = FlowPullback(F, X, xs, ys)
    n = geo.n
    eye = np.eye(n)
    y = geo.y
    psi, pk, pkj = lj.psi.value, lj.psi_k.value, lj.psi_kj.value
    pkjl = lj.psi_kj.grad_y().value
    rep = ResidualReport("lemma31")
    smp = (xs, ys)

    lhs = fp.lie("N").value
    rhs = np.einsum("bk,bi->bik", pk, y) + psi[:, None, None] * eye
    rep.add("item1 Lie G^i_k", _rel(lhs - rhs, rhs), tol, smp)

    lhs = fp.lie("Gb").value
    rhs = (np.einsum("ij,bk->bijk", eye, pk) + np.einsum("ik,bj->bijk", eye, pk)
           + np.einsum("bi,bkj->bijk", y, pkj))
    rep.add("item2 Lie G^i_jk", _rel(lhs - rhs, rhs), tol, smp)

    lhs = fp.lie("B").value
    rhs = (np.einsum("ij,bkl->bijkl", eye, pkj) + np.einsum("ik,bjl->bijkl", eye, pkj)
           + np.einsum("il,bkj->bijkl", eye, pkj) + np.einsum("bi,bkjl->bijkl", y, pkjl))
    rep.add("item3 Lie G^i_jkl", _rel(lhs - rhs, rhs), tol, smp)

    lhs = fp.lie("E").value
    rhs = 0.5 * (n + 1) * pkj
    rep.add("item4 Lie E_jl", _rel(lhs - rhs, rhs), tol, smp)

    fk = lj.f_k.value
    lhs = fp.lie("I").value
    rep.add("item5 Lie I_k", _rel(lhs - fk, fk), tol, smp)

    d0fk = geo.contract_y(geo.cartan_h(lj.f_k, "l")).value
    rhs = d0fk + psi[:, None] * geo.I.value
    lhs = fp.lie("J").value
    rep.add("item6 Lie J_k", _rel(lhs - rhs, rhs), tol, smp)

    _, flow_pk = flow_psi(fp)
    rhs = geo.cartan_h(lj.f, "").value + d0fk
    rep.add("item7 (n+1) Psi_k", _rel((n + 1) * flow_pk - rhs, rhs), tol, smp)

    Dp = lj.D_psi                                   # [l, k] = D_k Psi_l
    A = jlin("lk->kl", Dp) - Dp                     # [k, l] = D_k Psi_l - D_l Psi_k
    Dv, Av, Adot = Dp.value, A.value, A.grad_y().value
    rhs = (np.einsum("ij,bkl->bijkl", eye, Av) + np.einsum("il,bjk->bijkl", eye, Dv)
           - np.einsum("ik,bjl->bijkl", eye, Dv) + np.einsum("bi,bklj->bijkl", y, Adot))
    lhs = fp.lie("K").value
    rep.add("item8 Lie K^i_jkl", _rel(lhs - rhs, rhs), tol, smp)

    Y = geo.contract_y(geo.berwald_h(lj.psi_kj, "ll")).value   # [l, j] = y^i D_i Psi_l.j
    rhs = np.swapaxes(Dv, 1, 2) - n * Dv + np.swapaxes(Y, 1, 2)
    lhs = fp.lie("Kjl").value
    rep.add("item9 Lie K_jl", _rel(lhs - rhs, rhs), tol, smp)

    d0f = geo.contract_y(geo.cartan_h(lj.f, "")).value
    rep.add("item7 cross-check Psi = nabla_0 f/(n+1)", np.abs(psi - d0f / (n + 1)) / (1.0 + np.abs(psi)), tol, smp)
    return rep


def _require_i_invariant(F, X, xs, ys, tol: Tolerances):
    rep = classify(F, X, (xs, ys), tol)
    if not (rep.verdicts["projective"] and rep.verdicts["i_invariant"]):
        raise NotIInvariant(f"{X.label or 'field'} is not an I-invariant projective field")
    return rep


def verify_prop_Iinv(F: MetricField, X: VectorFieldExpr, samples, tol: float = 1e-5,
                     check: Tolerances = Tolerances()) -> ResidualReport:
    """Lie derivatives of E, H and B vanish along an I-invariant projective field."""
    xs, ys = _as_batch(samples)
    _require_i_invariant(F, X, xs, ys, check)
    fp = FlowPullback(F, X, xs, ys)
    rep = ResidualReport("prop-iinv")
    for name in ("E", "H", "B"):
        rep.add(f"Lie {name}", _bmax(fp.lie(name).value), tol, (xs, ys))
    return rep


def lie_ricci_compare(F: MetricField, X: VectorFieldExpr, samples, tol: float = 1e-5,
                      check: Tolerances = Tolerances()) -> ResidualReport:
    """Lie derivatives of the two Ricci tensors agree along I-invariant projective fields."""
    xs, ys = _as_batch(samples)
    _require_i_invariant(F, X, xs, ys, check)
    fp = FlowPullback(F, X, xs, ys)
    a, b = fp.lie("Ric").value, fp.lie("Rtilde").value
    rep = ResidualReport("ricci-compare")
    rep.add("Lie Ric - Lie Rtilde", _bmax(a - b), tol, (xs, ys))
    rep.notes.append(f"max |Lie Ric| = {np.max(_bmax(a)):.3e}, max |Lie Rtilde| = {np.max(_bmax(b)):.3e}")
    return rep


def verify_lemma_b(F: MetricField, X: VectorFieldExpr, samples, tol: float = 1e-5,
                   proj_tol: float = 1e-6) -> ResidualReport:
    xs, ys = _as_batch(samples)
    geo = Geometry(F, xs, ys, SYMMETRY)
    lj = LieJets(geo, X)
    _require_projective(lj, proj_tol)
    fp = FlowPullback(F, X, xs, ys, order=(2, 4))
    rep = ResidualReport("lemma-b")
    rep.add("nabla_0 Lie g - (2 Psi g + Psi_i y_j + Psi_j y_i)", lemma_b_residuals(geo, lj, fp), tol, (xs, ys))
    return rep


@dataclass
class Codifferential:
    value: float
    residual: float


def codifferential_values(geo: Geometry, X: VectorFieldExpr):
    """Horizontal codifferential of X_j = g_jr X^r by the Cartan and the Berwald formula."""
    Xu = stack([expr_jet(c, geo.xj, geo.yj) for c in X.components], axis=-1)
    Xl = jeinsum("jr,r->j", geo.g, Xu)
    cart = geo.cartan_h(Xl, "l")                     # [j, i] = nabla_i X_j
    d0C = geo.contract_y(geo.cartan_h(geo.Ctrace, "u"))
    a = -(jeinsum("ij,ji->", geo.ginv, cart) - jeinsum("j,j->", Xl, d0C))
    berw = geo.berwald_h(Xl, "l")                    # [j, i] = D_i X_j
    b = -jeinsum("ij,ji->", geo.ginv, berw)
    return a.value, b.value


def codifferential_h(F: MetricField, X: VectorFieldExpr, s: TangentSample) -> Codifferential:
    geo = Geometry(F, s.x, s.y, (2, 4))
    geo.g0
    a, b = codifferential_values(geo, X)
    return Codifferential(float(b[0]), float(abs(a[0] - b[0])))
