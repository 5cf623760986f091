"""Fundamental tensor, Cartan torsion, spray and the Berwald/Cartan connections.

Everything is evaluated pointwise from the Taylor jet of ``L = F^2 / 2`` at a
batch of base points.  Quantities that later get differentiated are kept as
jets; :class:`Geometry` caches each one on first use.  Index conventions: a
derivative index (``delta_k``, ``d/dy^k``, ``nabla_k``) is always appended as
the last tensor axis, and every upper/lower slot is listed in a variance
string such as ``"ull"``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, wraps
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, GuardViolation, NotPositiveDefinite
from .expr import MetricField
from .jets import Jet, JetSpec, expr_jet, jeinsum, reciprocal, stack

# Orders of the L = F^2/2 jet required by each consumer (x order, y order).
SPRAY = (1, 2)
CORE = (1, 5)
FLAG = (2, 4)
CURVATURE = (2, 6)
SYMMETRY = (3, 7)

MIN_MARGIN = 1e-3
_LETTERS = "abcdefgh"


@dataclass(frozen=True)
class TangentSample:
    x: np.ndarray
    y: np.ndarray
    margin: float = float("inf")

    @property
    def n(self) -> int:
        return len(self.x)


@dataclass
class TensorValue:
    base: TangentSample
    variance: str
    components: np.ndarray

    def __post_init__(self):
        n = self.base.n
        if self.components.shape != (n,) * len(self.variance):
            raise ValueError(f"{self.components.shape} does not match variance {self.variance!r}")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)


def tangent_sample(metric: MetricField, x, y, min_margin: float = MIN_MARGIN) -> TangentSample:
    """Validate a point of the slit tangent bundle."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (metric.n,) or y.shape != (metric.n,):
        raise ValueError(f"expected coordinates of dimension {metric.n}")
    if not np.any(y):
        raise DomainError("y must be non-zero")
    margin = float(metric.guard(x))
    if margin < min_margin:
        raise GuardViolation(f"domain margin {margin:.3g} below {min_margin}")
    if not metric.value(x, y) > 0:
        raise DomainError("F(x, y) must be positive")
    return TangentSample(x, y, margin)


def memo(fn):
    """Cache a derived jet ``fn(geo)`` on the Geometry instance."""
    key = f"{fn.__module__}.{fn.__qualname__}"

    @wraps(fn)
    def wrapper(geo):
        try:
            return geo._memo[key]
        except KeyError:
            out = geo._memo[key] = fn(geo)
            return out
    return wrapper


# --------------------------------------------------------------------------
# Index helpers
# --------------------------------------------------------------------------

def jlin(subscripts: str, T: Jet) -> Jet:
    """Linear index operation (transpose, trace) applied to a single jet."""
    ins, out = subscripts.split("->")
    return Jet(np.einsum(f"...{ins}Z->...{out}Z", T.c), T.spec)


def _slot_terms(T: Jet, variance: str, conn: Jet, sign_up=1.0):
    """Sum of connection terms T^{..s..} W^i_{sk} - T_{..s..} W^s_{ik} (k appended)."""
    idx = _LETTERS[:len(variance)]
    out = None
    for p, kind in enumerate(variance):
        a = idx[p]
        src = idx[:p] + "s" + idx[p + 1:]
        if kind == "u":
            term = jeinsum(f"{src},{a}sk->{idx}k", T, conn)
        else:
            term = -jeinsum(f"{src},s{a}k->{idx}k", T, conn)
        out = term if out is None else out + term
    return out


class Geometry:
    """Cached jets of every pointwise object at a batch of base points.

    ``x`` and ``y`` have shape ``(n,)`` or ``(B, n)``.  ``order`` is the
    (x, y) truncation of the ``F^2/2`` jet; choose the smallest preset that
    covers what you need.
    """

    def __init__(self, metric: MetricField, x, y, order=CURVATURE, check=True):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        self.metric = metric
        self.n = metric.n
        self.x, self.y = x, y
        self.B = x.shape[0]
        self._memo = {}
        if check:
            metric.check_guard(x)
        self.spec = JetSpec(self.n, *order)
        self.xj, self.yj = Jet.variables(self.spec, x, y)
        self.F = expr_jet(metric.f, self.xj, self.yj)
        if np.any(self.F.value <= 0):
            raise DomainError("F must be positive at every base point")
        self.L = 0.5 * self.F * self.F

    # --- vectors ----------------------------------------------------------------
    @cached_property
    def yvec(self) -> Jet:
        return stack(self.yj, axis=-1)

    # --- fundamental tensor and Cartan family ---------------------------------
    @cached_property
    def g(self) -> Jet:
        return self.L.grad_y().grad_y()

    @cached_property
    def g0(self) -> np.ndarray:
        g0 = self.g.value
        ev = np.linalg.eigvalsh(g0)
        if np.any(ev[:, 0] <= 0):
            b = int(np.argmin(ev[:, 0]))
            raise NotPositiveDefinite(ev[b, 0], where=(self.x[b].tolist(), self.y[b].tolist()))
        return g0

    @cached_property
    def ginv(self) -> Jet:
        # (g0 + N)^-1 = sum_k (-g0^-1 N)^k g0^-1, N nilpotent
        g0inv = np.linalg.inv(self.g0)
        A = -jeinsum("ij,jk->ik", g0inv, self.g.nilpotent())
        r = Jet.const(self.g.spec, g0inv)
        for _ in range(self.g.spec.degree):
            r = jeinsum("ij,jk->ik", A, r) + g0inv
        return r

    @cached_property
    def Clow(self) -> Jet:
        """C_ijk = (1/2) dg_ij/dy^k."""
        return 0.5 * self.g.grad_y()

    @cached_property
    def A(self) -> Jet:
        return jeinsum(",ijk->ijk", self.F, self.Clow)

    @cached_property
    def Cup(self) -> Jet:
        """C^i_jk = g^il C_ljk."""
        return jeinsum("il,ljk->ijk", self.ginv, self.Clow)

    @cached_property
    def I(self) -> Jet:
        return jeinsum("jk,ijk->i", self.ginv, self.Clow)

    @cached_property
    def Ctrace(self) -> Jet:
        """C^k = g^ij C^k_ij."""
        return jeinsum("ij,kij->k", self.ginv, self.Cup)

    @cached_property
    def ell_up(self) -> Jet:
        return jeinsum("i,->i", self.yvec, reciprocal(self.F))

    @cached_property
    def ell_low(self) -> Jet:
        return self.F.grad_y()

    @cached_property
    def ylow(self) -> Jet:
        return jeinsum("ij,j->i", self.g, self.yvec)

    # --- spray and Berwald connection ------------------------------------------
    @cached_property
    def G(self) -> Jet:
        Ly = self.L.grad_y()
        W = jeinsum("lk,k->l", Ly.grad_x(), self.yvec) - self.L.grad_x()
        return 0.5 * jeinsum("il,l->i", self.ginv, W)

    @cached_property
    def N(self) -> Jet:
        """Nonlinear connection G^i_j (derivative index last)."""
        return self.G.grad_y()

    @cached_property
    def Gb(self) -> Jet:
        """Berwald coefficients G^i_jk."""
        return self.N.grad_y()

    @cached_property
    def Bw(self) -> Jet:
        """Berwald curvature B^i_jkl."""
        return self.Gb.grad_y()

    # --- horizontal derivative and Cartan connection ----------------------------
    def delta(self, T: Jet) -> Jet:
        """delta_k T = dT/dx^k - G^r_k dT/dy^r, index k appended."""
        idx = _LETTERS[:len(T.shape)]
        return T.grad_x() - jeinsum(f"{idx}r,rk->{idx}k", T.grad_y(), self.N)

    @cached_property
    def dg_h(self) -> Jet:
        return self.delta(self.g)

    @cached_property
    def Gamma(self) -> Jet:
        D = self.dg_h  # D_abc = delta_c g_ab
        t1 = jeinsum("il,lkj->ijk", self.ginv, D)
        t2 = jeinsum("il,jlk->ijk", self.ginv, D)
        t3 = jeinsum("il,jkl->ijk", self.ginv, D)
        return 0.5 * (t1 + t2 - t3)

    # --- covariant derivatives ---------------------------------------------------
    def cartan_h(self, T: Jet, variance: str) -> Jet:
        base = self.delta(T)
        return base if not variance else base + _slot_terms(T, variance, self.Gamma)

    def cartan_v(self, T: Jet, variance: str) -> Jet:
        base = T.grad_y()
        return base if not variance else base + _slot_terms(T, variance, self.Cup)

    def berwald_h(self, T: Jet, variance: str) -> Jet:
        base = self.delta(T)
        return base if not variance else base + _slot_terms(T, variance, self.Gb)

    def contract_y(self, T: Jet) -> Jet:
        """Contract the last index with y (e.g. nabla_0 from nabla_k)."""
        idx = _LETTERS[:len(T.shape) - 1]
        return jeinsum(f"{idx}k,k->{idx}", T, self.yvec)

    # --- pointwise helpers ---------------------------------------------------------
    def sample(self, b: int = 0) -> TangentSample:
        margin = float(self.metric.guard(self.x[b]))
        return TangentSample(self.x[b].copy(), self.y[b].copy(), margin)

    def tensor(self, T: Jet, variance: str, b: int = 0) -> TensorValue:
        return TensorValue(self.sample(b), variance, T.value[b].copy())


# --------------------------------------------------------------------------
# Public single-sample operations
# --------------------------------------------------------------------------

def _geom(F: MetricField, s: TangentSample, order) -> Geometry:
    return Geometry(F, s.x, s.y, order)


def fundamental_tensor(F: MetricField, s: TangentSample):
    """Return ``(g_ij, g^ij)`` as tensor values."""
    geo = _geom(F, s, (0, 2))
    geo.g0
    return geo.tensor(geo.g, "ll"), geo.tensor(geo.ginv, "uu")


def fundamental_tensor_from_F(F: MetricField, s: TangentSample) -> np.ndarray:
    """g_ij assembled as F F_{y^i y^j} + F_{y^i} F_{y^j} (second route)."""
    geo = _geom(F, s, (0, 2))
    Fy = geo.F.grad_y()
    Fyy = Fy.grad_y()
    g = jeinsum(",ij->ij", geo.F, Fyy) + jeinsum("i,j->ij", Fy, Fy)
    return g.value[0]


def cartan(F: MetricField, s: TangentSample):
    """Return ``(A_ijk, C_ijk, C^i_jk, C^k, I_i)``."""
    geo = _geom(F, s, (0, 3))
    geo.g0
    return (geo.tensor(geo.A, "lll"), geo.tensor(geo.Clow, "lll"), geo.tensor(geo.Cup, "ull"),
            geo.tensor(geo.Ctrace, "u"), geo.tensor(geo.I, "l"))


def canonical_section(F: MetricField, s: TangentSample):
    """Return ``(l^i, l_i)`` with ``l^i = y^i / F`` and ``l_i = dF/dy^i``."""
    geo = _geom(F, s, (0, 1))
    return geo.tensor(geo.ell_up, "u"), geo.tensor(geo.ell_low, "l")


def spray(F: MetricField, s: TangentSample) -> TensorValue:
    geo = _geom(F, s, SPRAY)
    geo.g0
    return geo.tensor(geo.G, "u")


def nonlinear_connection(F: MetricField, s: TangentSample) -> TensorValue:
    geo = _geom(F, s, (1, 3))
    return geo.tensor(geo.N, "ul")


def berwald_coeffs(F: MetricField, s: TangentSample) -> TensorValue:
    geo = _geom(F, s, (1, 4))
    return geo.tensor(geo.Gb, "ull")


def berwald_curvature(F: MetricField, s: TangentSample) -> TensorValue:
    geo = _geom(F, s, CORE)
    return geo.tensor(geo.Bw, "ulll")


def cartan_coeffs(F: MetricField, s: TangentSample) -> TensorValue:
    geo = _geom(F, s, (1, 3))
    return geo.tensor(geo.Gamma, "ull")


FieldFn = Callable[[Geometry], Jet]


def _field_cov(method: str, field_fn: FieldFn, variance: str, F, s, order):
    geo = _geom(F, s, order)
    T = field_fn(geo)
    out = getattr(geo, method)(T, variance)
    return geo.tensor(out, variance + "l")


def cartan_h_cov(field_fn: FieldFn, variance: str, F: MetricField, s: TangentSample, order=CORE):
    """Cartan horizontal covariant derivative of a jet-evaluable field ``field_fn(geo)``."""
    return _field_cov("cartan_h", field_fn, variance, F, s, order)


def cartan_v_cov(field_fn: FieldFn, variance: str, F: MetricField, s: TangentSample, order=CORE):
    return _field_cov("cartan_v", field_fn, variance, F, s, order)


def berwald_h_cov(field_fn: FieldFn, variance: str, F: MetricField, s: TangentSample, order=CORE):
    return _field_cov("berwald_h", field_fn, variance, F, s, order)
