"""Truncated multivariate Taylor jets over the 2n variables (x, y).

A :class:`Jet` stores Taylor coefficients ``f^(a)(base) / a!`` for every
multi-index ``a`` allowed by its :class:`JetSpec`.  Coefficient arrays have
shape ``(B, *tensor_shape, M)``: a batch axis over base points, any number of
tensor axes, and the flat monomial axis.  All arithmetic is exact for
polynomials within the truncation order; transcendental functions are applied
by composing their univariate Taylor series at the constant term with the
nilpotent remainder (Horner form), which is exact to the same order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence

import numpy as np

from .errors import (
    DomainError,
    GuardViolation,
    OrderOutOfSpec,
    StencilLeavesDomain,
    TruncationOrderExceeded,
)
from .expr import Expr, FloatOps, MetricField, evaluate

MAX_X_ORDER = 3
MAX_Y_ORDER = 7
MAX_TOTAL_ORDER = 10
MAX_DIM = 4


@dataclass(frozen=True)
class JetSpec:
    n: int
    max_x_order: int
    max_y_order: int
    max_total_order: int = -1

    def __post_init__(self):
        if self.max_total_order < 0:
            object.__setattr__(self, "max_total_order", self.max_x_order + self.max_y_order)
        if not 1 <= self.n <= MAX_DIM:
            raise TruncationOrderExceeded(f"dimension {self.n} outside 1..{MAX_DIM}")
        if min(self.max_x_order, self.max_y_order, self.max_total_order) < 0:
            raise TruncationOrderExceeded(f"negative order in {self}")
        if (self.max_x_order > MAX_X_ORDER or self.max_y_order > MAX_Y_ORDER
                or self.max_total_order > MAX_TOTAL_ORDER):
            raise TruncationOrderExceeded(f"{self} exceeds the supported orders")

    @property
    def degree(self) -> int:
        return min(self.max_x_order + self.max_y_order, self.max_total_order)

    def contains(self, alpha) -> bool:
        n = self.n
        ax, ay = sum(alpha[:n]), sum(alpha[n:])
        return (len(alpha) == 2 * n and min(alpha) >= 0 and ax <= self.max_x_order
                and ay <= self.max_y_order and ax + ay <= self.max_total_order)

    def lower(self, dx=0, dy=0) -> "JetSpec":
        ox = self.max_x_order - dx
        oy = self.max_y_order - dy
        if ox < 0 or oy < 0:
            raise OrderOutOfSpec(f"cannot differentiate beyond {self}")
        return JetSpec(self.n, ox, oy, max(0, min(self.max_total_order - dx - dy, ox + oy)))


def common_spec(a: JetSpec, b: JetSpec) -> JetSpec:
    if a == b:
        return a
    if a.n != b.n:
        raise ValueError("jets of different dimension")
    return JetSpec(a.n, min(a.max_x_order, b.max_x_order), min(a.max_y_order, b.max_y_order),
                   min(a.max_total_order, b.max_total_order))


# --------------------------------------------------------------------------
# Index tables
# --------------------------------------------------------------------------

class _Tables:
    def __init__(self, spec: JetSpec):
        n = spec.n
        xs = [a for a in _multi(n, spec.max_x_order)]
        ys = [b for b in _multi(n, spec.max_y_order)]
        monos = [a + b for a, b in product(xs, ys)
                 if sum(a) + sum(b) <= spec.max_total_order]
        monos.sort(key=lambda m: (sum(m), tuple(-v for v in m)))
        self.monos = np.array(monos, dtype=np.int64).reshape(len(monos), 2 * n)
        self.M = len(monos)
        self.index = {m: i for i, m in enumerate(monos)}
        self.factorial = np.array([math.prod(math.factorial(v) for v in m) for m in monos], dtype=float)
        self.degree = self.monos.sum(axis=1)
        self._pairs(spec)

    def _pairs(self, spec):
        base = 2 * max(spec.max_x_order, spec.max_y_order, 1) + 1
        weights = base ** np.arange(self.monos.shape[1], dtype=np.int64)
        codes = self.monos @ weights
        order = np.argsort(codes)
        sorted_codes = codes[order]
        ia, ib, ic = [], [], []
        n = spec.n
        mx = self.monos[:, :n].sum(axis=1)
        my = self.monos[:, n:].sum(axis=1)
        for i in range(self.M):
            ok = ((mx[i] + mx <= spec.max_x_order) & (my[i] + my <= spec.max_y_order)
                  & (self.degree[i] + self.degree <= spec.max_total_order))
            js = np.nonzero(ok)[0]
            s = codes[i] + codes[js]
            pos = np.searchsorted(sorted_codes, s)
            ks = order[pos]
            ia.append(np.full(len(js), i))
            ib.append(js)
            ic.append(ks)
        ia, ib, ic = (np.concatenate(v) for v in (ia, ib, ic))
        srt = np.argsort(ic, kind="stable")
        self.ia, self.ib, ic = ia[srt], ib[srt], ic[srt]
        self.starts = np.searchsorted(ic, np.arange(self.M))
        self.P = len(self.ia)
        self.scalar_ia = None


def _multi(n, order):
    out = []
    for tot in range(order + 1):
        for m in product(range(tot + 1), repeat=n):
            if sum(m) == tot:
                out.append(tuple(m))
    return out


@lru_cache(maxsize=None)
def tables(spec: JetSpec) -> _Tables:
    return _Tables(spec)


@lru_cache(maxsize=None)
def _deriv_table(spec: JetSpec, var: int):
    n = spec.n
    target = spec.lower(dx=1) if var < n else spec.lower(dy=1)
    tt, st = tables(target), tables(spec)
    src = np.empty(tt.M, dtype=np.int64)
    fac = np.empty(tt.M)
    for k, m in enumerate(map(tuple, tt.monos)):
        up = list(m)
        up[var] += 1
        src[k] = st.index[tuple(up)]
        fac[k] = up[var]
    return target, src, fac


@lru_cache(maxsize=None)
def _trunc_table(spec: JetSpec, target: JetSpec):
    tt, st = tables(target), tables(spec)
    try:
        return np.array([st.index[tuple(m)] for m in tt.monos], dtype=np.int64)
    except KeyError as exc:
        raise OrderOutOfSpec(f"{target} is not contained in {spec}") from exc


# --------------------------------------------------------------------------
# Jet
# --------------------------------------------------------------------------

class Jet:
    __slots__ = ("c", "spec")
    __array_priority__ = 100

    def __init__(self, c: np.ndarray, spec: JetSpec):
        self.c = c
        self.spec = spec

    # construction ---------------------------------------------------------
    @classmethod
    def const(cls, spec: JetSpec, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (tables(spec).M,))
        c[..., 0] = value
        return cls(c, spec)

    @classmethod
    def variables(cls, spec: JetSpec, x, y):
        """Coordinate jets for a batch of base points ``x``, ``y`` of shape ``(B, n)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        t = tables(spec)
        n = spec.n
        out = []
        for v in range(2 * n):
            c = np.zeros((x.shape[0], t.M))
            c[:, 0] = x[:, v] if v < n else y[:, v - n]
            unit = [0] * (2 * n)
            unit[v] = 1
            k = t.index.get(tuple(unit))
            if k is not None:
                c[:, k] = 1.0
            out.append(cls(c, spec))
        return out[:n], out[n:]

    # basic properties -------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    @property
    def shape(self):
        return self.c.shape[1:-1]

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.c[(slice(None),) + idx], self.spec)

    def trunc(self, spec: JetSpec) -> "Jet":
        if spec == self.spec:
            return self
        return Jet(self.c[..., _trunc_table(self.spec, spec)], spec)

    def nilpotent(self) -> "Jet":
        c = self.c.copy()
        c[..., 0] = 0.0
        return Jet(c, self.spec)

    # differentiation ----------------------------------------------------------
    def d(self, var: int) -> "Jet":
        """Partial derivative in variable ``var`` (0..n-1 are x, n..2n-1 are y)."""
        target, src, fac = _deriv_table(self.spec, var)
        return Jet(self.c[..., src] * fac, target)

    def dx(self, k: int) -> "Jet":
        return self.d(k)

    def dy(self, k: int) -> "Jet":
        return self.d(self.spec.n + k)

    def grad_x(self) -> "Jet":
        """x-gradient; the new index is appended as the last tensor axis."""
        return stack([self.dx(k) for k in range(self.spec.n)], axis=-1)

    def grad_y(self) -> "Jet":
        return stack([self.dy(k) for k in range(self.spec.n)], axis=-1)

    # arithmetic ---------------------------------------------------------------
    def _unify(self, other):
        spec = common_spec(self.spec, other.spec)
        return self.trunc(spec), other.trunc(spec), spec

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b, spec = self._unify(other)
            return Jet(a.c + b.c, spec)
        new0 = self.c[..., 0] + other
        c = np.broadcast_to(self.c, new0.shape + self.c.shape[-1:]).copy()
        c[..., 0] = new0
        return Jet(c, self.spec)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.spec)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return _convolve(self, other)
        other = np.asarray(other, dtype=float)
        return Jet(self.c * other[..., None], self.spec)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        other = np.asarray(other, dtype=float)
        if np.any(other == 0):
            raise DomainError("division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        return power(self, p)

    def __repr__(self):
        return f"Jet(shape={self.shape}, batch={self.c.shape[0]}, spec={self.spec})"


def _convolve(a: Jet, b: Jet) -> Jet:
    a, b, spec = a._unify(b)
    t = tables(spec)
    prod = a.c[..., t.ia] * b.c[..., t.ib]
    return Jet(np.add.reduceat(prod, t.starts, axis=-1), spec)


def stack(jets: Sequence[Jet], axis: int = -1) -> Jet:
    spec = jets[0].spec
    for j in jets[1:]:
        spec = common_spec(spec, j.spec)
    cs = [j.trunc(spec).c for j in jets]
    batch = max(c.shape[0] for c in cs)
    cs = [np.broadcast_to(c, (batch,) + c.shape[1:]) for c in cs]
    if axis < 0:
        axis = cs[0].ndim + axis  # position counted before the monomial axis
    return Jet(np.stack(cs, axis=axis), spec)


def jeinsum(subscripts: str, a, b) -> Jet:
    """Tensor contraction of two jets (or a jet and a constant array).

    ``subscripts`` names tensor axes only, e.g. ``"il,l->i"``; the batch and
    monomial axes are handled implicitly.  Constant operands carry shape
    ``(B, *t)`` or ``(*t)``.
    """
    ins, out = subscripts.split("->")
    sa, sb = ins.split(",")
    if isinstance(a, Jet) and isinstance(b, Jet):
        a, b, spec = a._unify(b)
        t = tables(spec)
        prod = np.einsum(f"...{sa}Z,...{sb}Z->...{out}Z", a.c[..., t.ia], b.c[..., t.ib])
        return Jet(np.add.reduceat(prod, t.starts, axis=-1), spec)
    if isinstance(a, Jet):
        b = np.asarray(b, dtype=float)
        if b.ndim == len(sb):
            return Jet(np.einsum(f"...{sa}Z,{sb}->...{out}Z", a.c, b), a.spec)
        return Jet(np.einsum(f"...{sa}Z,...{sb}->...{out}Z", a.c, b), a.spec)
    a = np.asarray(a, dtype=float)
    if a.ndim == len(sa):
        return Jet(np.einsum(f"{sa},...{sb}Z->...{out}Z", a, b.c), b.spec)
    return Jet(np.einsum(f"...{sa},...{sb}Z->...{out}Z", a, b.c), b.spec)


# --------------------------------------------------------------------------
# Univariate composition
# --------------------------------------------------------------------------

def compose(f: Jet, coeffs) -> Jet:
    """Apply ``sum_k coeffs[k] * (f - f0)^k`` (Horner form)."""
    nil = f.nilpotent()
    r = Jet.const(f.spec, coeffs[-1]) if len(coeffs) == 1 else nil * coeffs[-1] + coeffs[-2]
    for ck in reversed(coeffs[:-2]):
        r = nil * r + ck
    return r


def _binom_coeffs(a0, p, K):
    coeffs = []
    c = np.ones_like(a0)
    for k in range(K + 1):
        coeffs.append(c * a0 ** (p - k))
        c = c * (p - k) / (k + 1)
    return coeffs


def reciprocal(f: Jet) -> Jet:
    a0 = f.value
    if np.any(a0 == 0):
        raise DomainError("division by a jet with zero constant term")
    K = f.spec.degree
    return compose(f, [(-1.0) ** k / a0 ** (k + 1) for k in range(K + 1)])


def sqrt(f: Jet) -> Jet:
    a0 = f.value
    if np.any(a0 < 0):
        raise DomainError("sqrt of a negative number")
    if np.any(a0 == 0) and f.spec.degree > 0:
        raise DomainError("sqrt is not differentiable at zero")
    return compose(f, _binom_coeffs(a0, 0.5, f.spec.degree))


def exp(f: Jet) -> Jet:
    e0 = np.exp(f.value)
    return compose(f, [e0 / math.factorial(k) for k in range(f.spec.degree + 1)])


def ln(f: Jet) -> Jet:
    a0 = f.value
    if np.any(a0 <= 0):
        raise DomainError("ln of a non-positive number")
    K = f.spec.degree
    return compose(f, [np.log(a0)] + [(-1.0) ** (k + 1) / (k * a0 ** k) for k in range(1, K + 1)])


def jabs(f: Jet) -> Jet:
    a0 = f.value
    if np.any(a0 == 0) and f.spec.degree > 0:
        raise DomainError("abs is not differentiable where its argument vanishes")
    return f * np.sign(a0)


def power(f: Jet, p) -> Jet:
    p = float(p)
    if p.is_integer():
        k = int(p)
        if k < 0:
            return power(reciprocal(f), -k)
        result = Jet.const(f.spec, np.ones(f.c.shape[:-1]))
        base = f
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result
    a0 = f.value
    if np.any(a0 <= 0):
        raise DomainError("non-integer power of a non-positive base")
    return compose(f, _binom_coeffs(a0, p, f.spec.degree))


class JetOps:
    """Operation table that lets :func:`finslerlab.expr.evaluate` run on jets."""

    @staticmethod
    def _is_jet(a):
        return isinstance(a, Jet)

    @staticmethod
    def sqrt(a):
        return sqrt(a) if isinstance(a, Jet) else FloatOps.sqrt(a)

    @staticmethod
    def exp(a):
        return exp(a) if isinstance(a, Jet) else FloatOps.exp(a)

    @staticmethod
    def ln(a):
        return ln(a) if isinstance(a, Jet) else FloatOps.ln(a)

    @staticmethod
    def abs(a):
        return jabs(a) if isinstance(a, Jet) else FloatOps.abs(a)

    @staticmethod
    def div(a, b):
        if isinstance(b, Jet):
            return a * reciprocal(b)
        return a / b if isinstance(a, Jet) else FloatOps.div(a, b)

    @staticmethod
    def pow(a, p):
        return power(a, p) if isinstance(a, Jet) else FloatOps.pow(a, p)


# --------------------------------------------------------------------------
# Public operations
# --------------------------------------------------------------------------

def expr_jet(expr: Expr, xj, yj) -> Jet:
    """Evaluate an expression on coordinate jets; constants are promoted."""
    out = evaluate(expr.root, xj, yj, JetOps)
    if not isinstance(out, Jet):
        ref = xj[0]
        out = Jet.const(ref.spec, np.full(ref.c.shape[:-1], float(out)))
    return out


def jet_of(expr, base, spec: JetSpec) -> Jet:
    """Truncated Taylor jet of ``expr`` (an :class:`Expr` or :class:`MetricField`) at ``base=(x, y)``."""
    guard = None
    if isinstance(expr, MetricField):
        guard = expr.domain_guard
        expr = expr.f
    x, y = base
    if guard is not None and np.any(np.asarray(evaluate(guard.root, list(np.atleast_2d(x).T), None)) <= 0):
        raise GuardViolation("jet base point outside the domain guard")
    xj, yj = Jet.variables(spec, x, y)
    return expr_jet(expr, xj, yj)


def partial(jet: Jet, alpha) -> np.ndarray:
    """``f^(alpha)(base)`` from the stored coefficient."""
    alpha = tuple(int(a) for a in alpha)
    if not jet.spec.contains(alpha):
        raise OrderOutOfSpec(f"multi-index {alpha} outside {jet.spec}")
    t = tables(jet.spec)
    k = t.index[alpha]
    out = jet.c[..., k] * t.factorial[k]
    return out[0] if out.shape[0] == 1 and out.ndim == 1 else out


def fd_oracle(expr, base, alpha, h=None, guard=None) -> float:
    """Central finite-difference estimate of a mixed partial with one Richardson step.

    Each variable of order ``k`` uses the standard second-order central stencil
    for the k-th derivative; combining step ``h`` and ``h/2`` as
    ``(4 D(h/2) - D(h)) / 3`` gives an O(h^4) truncation error, with round-off
    of order ``eps * |f| / h^|alpha|``.
    """
    if isinstance(expr, MetricField):
        guard = expr.domain_guard if guard is None else guard
        expr = expr.f
    x, y = (np.asarray(v, dtype=float) for v in base)
    n = expr.n
    alpha = tuple(int(a) for a in alpha)
    order = sum(alpha)
    if order > 4 or len(alpha) != 2 * n:
        raise OrderOutOfSpec(f"fd_oracle supports |alpha| <= 4 over 2n variables, got {alpha}")
    z0 = np.concatenate([x, y])
    if h is None:
        h = np.finfo(float).eps ** (1.0 / (order + 4)) if order else 0.0
    scale = np.ones(2 * n)
    scale[n:] = max(np.linalg.norm(y), 1e-12)

    def stencil(step):
        pts = [np.zeros(2 * n)]
        wts = [1.0]
        for v, k in enumerate(alpha):
            if k == 0:
                continue
            hv = step * scale[v]
            offs, ws = _central(k)
            new_pts, new_wts = [], []
            for p, w in zip(pts, wts):
                for o, c in zip(offs, ws):
                    q = p.copy()
                    q[v] += o * hv
                    new_pts.append(q)
                    new_wts.append(w * c / hv ** k)
            pts, wts = new_pts, new_wts
        return np.array(pts), np.array(wts)

    P1, W1 = stencil(h)
    P2, W2 = stencil(h / 2)
    Z = z0 + np.concatenate([P1, P2])
    if guard is not None:
        gv = np.asarray(evaluate(guard.root, [Z[:, i] for i in range(n)], None)) * np.ones(len(Z))
        if np.any(gv <= 0):
            raise StencilLeavesDomain("finite-difference stencil leaves the domain")
    try:
        vals = np.asarray(evaluate(expr.root, [Z[:, i] for i in range(n)],
                                   [Z[:, n + i] for i in range(n)]), dtype=float) * np.ones(len(Z))
    except DomainError as exc:
        raise StencilLeavesDomain(str(exc)) from exc
    d1 = float(np.dot(W1, vals[:len(W1)]))
    d2 = float(np.dot(W2, vals[len(W1):]))
    return (4.0 * d2 - d1) / 3.0


def _central(k):
    # second-order central stencils for the k-th derivative
    return {
        1: ((-1, 1), (-0.5, 0.5)),
        2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
        3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
        4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
    }[k]
