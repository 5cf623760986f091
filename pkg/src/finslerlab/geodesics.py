"""Fixed-step RK4 integration of geodesics and vector-field flows, plus probes along curves."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import FLAG, SPRAY, Geometry
from .errors import DomainError, InvalidParameter, LeftDomain, StepUnderflow
from .expr import MetricField, VectorFieldExpr
from .jets import Jet, JetSpec, expr_jet

MIN_STEP = 1e-12
_BISECT_ITERS = 60


def rk4_step(f: Callable, t: float, u, dt: float):
    k1 = f(t, u)
    k2 = f(t + 0.5 * dt, u + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, u + 0.5 * dt * k2)
    k4 = f(t + dt, u + dt * k3)
    return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    F: np.ndarray
    step: float
    order: int = 4
    probe: Optional[np.ndarray] = None
    probe_name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def drift(self) -> float:
        """max |F(t) - F(0)| / F(0)."""
        if self.F is None or len(self.F) == 0:
            return 0.0
        return float(np.max(np.abs(self.F - self.F[0])) / self.F[0])

    def to_csv(self, dest) -> None:
        """Write ``t, x..., y..., F[, probe]`` rows to a path or an open text stream."""
        if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
            with open(dest, "w", newline="") as fh:
                self.to_csv(fh)
            return
        n = self.x.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)] + ["F"]
        if self.probe is not None:
            header.append(self.probe_name or "probe")
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(header)
        for k in range(len(self.t)):
            row = [self.t[k], *self.x[k], *self.y[k], self.F[k]]
            if self.probe is not None:
                row.append(self.probe[k])
            w.writerow([repr(float(v)) for v in row])


def _check_steps(T: float, steps: int) -> float:
    if steps < 1:
        raise InvalidParameter("steps must be positive")
    dt = T / steps
    if dt == 0 or abs(dt) < MIN_STEP * max(1.0, abs(T)):
        raise StepUnderflow(f"step {dt:.3g} below the minimum {MIN_STEP}")
    return dt


def _inside(metric: MetricField, x) -> bool:
    return bool(np.all(metric.guard(x) > 0))


def _locate_exit(rhs, guard_ok, t0, u0, dt) -> float:
    """Bisect the step [t0, t0 + dt] for the first guard sign change."""
    lo, hi = 0.0, dt
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        try:
            ok = guard_ok(rk4_step(rhs, t0, u0, mid))
        except DomainError:
            ok = False
        lo, hi = (mid, hi) if ok else (lo, mid)
    return t0 + hi


def spray_values(metric: MetricField, x, y) -> np.ndarray:
    return Geometry(metric, x, y, SPRAY, check=False).G.value


def integrate_geodesic(F: MetricField, x0, y0, T: float = 1.0, steps: int = 1000) -> Trajectory:
    """Solve x'' + 2 G(x, x') = 0 with fixed-step RK4."""
    n = F.n
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    dt = _check_steps(T, steps)
    if not _inside(F, x0):
        raise LeftDomain(0.0, "initial point outside the domain")

    def rhs(t, u):
        x, y = u[:n], u[n:]
        if not _inside(F, x):
            raise DomainError("stage left the domain")
        with np.errstate(over="ignore", invalid="ignore"):
            return np.concatenate([y, -2.0 * spray_values(F, x, y)[0]])

    def guard_ok(u):
        # a chart can run off to infinity in finite time (e.g. past the antipode)
        return bool(np.all(np.isfinite(u))) and _inside(F, u[:n])

    u = np.concatenate([x0, y0])
    out = [u]
    t = 0.0
    for k in range(steps):
        try:
            nxt = rk4_step(rhs, t, u, dt)
            ok = guard_ok(nxt)
        except DomainError:
            ok = False
        if not ok:
            raise LeftDomain(_locate_exit(rhs, guard_ok, t, u, dt))
        u, t = nxt, (k + 1) * dt
        out.append(u)
    U = np.array(out)
    ts = dt * np.arange(steps + 1)
    Fv = F.value(U[:, :n], U[:, n:], check=False)
    return Trajectory(ts, U[:, :n], U[:, n:], np.asarray(Fv, dtype=float), dt, meta={"kind": "geodesic"})


# --------------------------------------------------------------------------
# Vector-field flows
# --------------------------------------------------------------------------

def field_derivatives(X: VectorFieldExpr, x, order: int = 2):
    """Values, Jacobian and Hessian of X at a batch of points ``(B, n)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    spec = JetSpec(X.n, order, 0)
    xj, yj = Jet.variables(spec, x, np.ones_like(x))
    comps = [expr_jet(c, xj, yj) for c in X.components]
    vals = np.stack([c.value for c in comps], axis=1)
    D = np.stack([c.grad_x().value for c in comps], axis=1)
    if order < 2:
        return vals, D, None
    D2 = np.stack([c.grad_x().grad_x().value for c in comps], axis=1)
    return vals, D, D2


def integrate_flow(X: VectorFieldExpr, x0, T: float, steps: int, metric: Optional[MetricField] = None) -> Trajectory:
    """Integral curve of X (base curve only)."""
    x0 = np.asarray(x0, dtype=float)
    dt = _check_steps(T, steps)

    def rhs(t, u):
        return X.value(u)

    def guard_ok(u):
        return bool(np.all(np.isfinite(u))) and (metric is None or _inside(metric, u))

    if not guard_ok(x0):
        raise LeftDomain(0.0, "initial point outside the domain")
    u = x0
    out = [u]
    for k in range(steps):
        nxt = rk4_step(rhs, k * dt, u, dt)
        if not guard_ok(nxt):
            raise LeftDomain(_locate_exit(rhs, guard_ok, k * dt, u, dt))
        u = nxt
        out.append(u)
    xs = np.array(out)
    vel = X.value(xs)
    Fv = metric.value(xs, vel, check=False) if metric is not None else np.linalg.norm(vel, axis=1)
    return Trajectory(dt * np.arange(steps + 1), xs, vel, np.asarray(Fv, dtype=float), dt,
                      meta={"kind": "flow", "field": X.label})


def flow_with_variations(X: VectorFieldExpr, x0, times, dt_max: float = 1e-3):
    """Flow map, Jacobian and Hessian at each requested time.

    Integrates x' = X, J' = DX J, H' = D2X(J, J) + DX H from a batch of base
    points.  Returns arrays indexed ``[time, batch, ...]``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    B, n = x0.shape

    def rhs(t, u):
        x = u[:, :n]
        J = u[:, n:n + n * n].reshape(B, n, n)
        H = u[:, n + n * n:].reshape(B, n, n, n)
        v, D, D2 = field_derivatives(X, x)
        dJ = D @ J
        dH = np.einsum("zabc,zbj,zck->zajk", D2, J, J) + np.einsum("zab,zbjk->zajk", D, H)
        return np.concatenate([v, dJ.reshape(B, -1), dH.reshape(B, -1)], axis=1)

    u0 = np.concatenate([x0, np.tile(np.eye(n).ravel(), (B, 1)), np.zeros((B, n ** 3))], axis=1)
    results = {}
    for sign in (1.0, -1.0):
        ts = sorted(abs(t) for t in times if np.sign(t) == sign)
        u, t = u0, 0.0
        for target in ts:
            span = target - t
            if span > 0:
                k = max(1, int(np.ceil(span / dt_max - 1e-9)))
                dt = sign * span / k
                for _ in range(k):
                    u = rk4_step(rhs, sign * t, u, dt)
                t = target
            results[sign * target] = u
    out = np.array([results[t] if t != 0 else u0 for t in times])
    xs = out[..., :n]
    J = out[..., n:n + n * n].reshape(len(times), B, n, n)
    H = out[..., n + n * n:].reshape(len(times), B, n, n, n)
    return xs, J, H


# --------------------------------------------------------------------------
# Probes along curves
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeStats:
    quantity: str
    mean: float
    max_deviation: float
    values: np.ndarray


def _curve_points(curve: Trajectory, stride: int):
    idx = np.arange(0, len(curve.t), max(1, stride))
    return idx, curve.x[idx], curve.y[idx]


def probe_constancy(F: MetricField, curve: Trajectory, quantity: str = "flag_curvature",
                    flags: int = 20, stride: int = 1, seed: int = 0, reference=None) -> ProbeStats:
    """Statistics of a scalar along a curve.

    ``quantity`` is one of ``flag_curvature`` (random transverse vectors at
    each point), ``ric`` (Ric/F^2), ``s_over_f`` or ``tau``.  The deviation
    is measured from ``reference`` when given, otherwise from the mean.
    """
    from . import curvature, nonriem  # local import keeps module layering flat

    idx, xs, ys = _curve_points(curve, stride)
    rng = np.random.default_rng(seed)
    if quantity == "flag_curvature":
        geo = Geometry(F, xs, ys, FLAG)
        geo.g0
        v = rng.normal(size=(len(xs), flags, F.n))
        vals = curvature.flag_curvature_values(geo, v)
    elif quantity == "ric":
        geo = Geometry(F, xs, ys, (2, 4))
        vals = curvature.ricci_scalar(geo).value / geo.F.value ** 2
    elif quantity == "s_over_f":
        geo = Geometry(F, xs, ys, (1, 3))
        vals = nonriem.s_jet(geo).value / geo.F.value
    elif quantity == "tau":
        geo = Geometry(F, xs, ys, (0, 2))
        vals = nonriem.distortion_values(geo)
    else:
        raise InvalidParameter(f"unknown probe quantity {quantity!r}")
    vals = np.asarray(vals)
    mean = float(np.mean(vals))
    ref = mean if reference is None else float(reference)
    return ProbeStats(quantity, mean, float(np.max(np.abs(vals - ref))), vals)


def tau_derivative_check(F: MetricField, curve: Trajectory, stride: int = 10):
    """Compare S(t) with the numerical derivative of tau(t) along a geodesic.

    tau is differentiated with the 5-point stencil on the curve's own grid;
    returns ``(t, dtau/dt, S)`` at interior points.
    """
    from . import nonriem

    geo = Geometry(F, curve.x, curve.y, (1, 3))
    geo.g0
    tau = nonriem.distortion_values(geo)
    S = nonriem.s_jet(geo).value
    dt = curve.step
    k = np.arange(2, len(curve.t) - 2, max(1, stride))
    dtau = (tau[k - 2] - 8 * tau[k - 1] + 8 * tau[k + 1] - tau[k + 2]) / (12 * dt)
    return curve.t[k], dtau, S[k]
