"""Distortion, S-curvature and the non-Riemannian tensors E, H, L, J.

The distortion needs the Euclidean volume of the indicatrix ``{F(x, .) < 1}``,
obtained by polar quadrature with the radial boundary ``r = 1/F(x, theta)``.
Only the volume's x-derivative is taken by finite differences; everything
else comes from jets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import qmc
from scipy.special import gamma, ndtri

from .core import CORE, CURVATURE, Geometry, TangentSample, TensorValue, memo
from .errors import MeanCartanVanishes, QuadratureNotConverged
from .expr import MetricField
from .jets import Jet, jeinsum

# Relative error budget of the volume per dimension (n = 1..4).
VOLUME_TOL = {1: 1e-12, 2: 1e-8, 3: 1e-6, 4: 1e-4}
SOBOL_SEED = 20240517


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


@dataclass(frozen=True)
class IndicatrixQuadrature:
    x: np.ndarray
    method: str
    node_count: int
    volume: float
    error_estimate: float


# --------------------------------------------------------------------------
# Angular rules: directions on S^{n-1} and weights summing to |S^{n-1}|
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _circle_rule(m: int):
    t, w = np.polynomial.legendre.leggauss(m)
    theta = math.pi * (t + 1.0)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1), math.pi * w


@lru_cache(maxsize=None)
def _sphere2_rule(mt: int, mp: int):
    u, wu = np.polynomial.legendre.leggauss(mt)  # u = cos(theta)
    phi = 2.0 * math.pi * np.arange(mp) / mp      # periodic trapezoid
    s = np.sqrt(1.0 - u * u)
    dirs = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)),
                     np.outer(u, np.ones(mp))], axis=-1).reshape(-1, 3)
    w = np.outer(wu, np.full(mp, 2.0 * math.pi / mp)).ravel()
    return dirs, w


@lru_cache(maxsize=None)
def _sphere3_rule(log2m: int, seed: int):
    pts = qmc.Sobol(d=4, scramble=True, seed=seed).random_base2(log2m)
    z = ndtri(np.clip(pts, 1e-16, 1 - 1e-16))
    dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
    return dirs, np.full(len(dirs), 2.0 * math.pi ** 2 / len(dirs))


def _rule(n: int, level: int):
    """Angular rule at refinement ``level`` (0 = production resolution)."""
    if n == 2:
        return _circle_rule(256 << level), "gauss-legendre"
    if n == 3:
        return _sphere2_rule(64 << level, 128 << level), "gauss-legendre x trapezoid"
    return _sphere3_rule(16 + level, SOBOL_SEED), "scrambled sobol"


def _polar_volume(F: MetricField, x: np.ndarray, dirs, w) -> np.ndarray:
    """sum_w r^n / n with r = 1/F(x, theta); ``x`` has shape (B, n)."""
    n = F.n
    xb = np.broadcast_to(x[:, None, :], (len(x), len(dirs), n))
    yb = np.broadcast_to(dirs[None], xb.shape)
    Fv = F.value(xb, yb, check=False)
    return (Fv ** (-float(n)) / n) @ w


def indicatrix_volumes(F: MetricField, x, level: int = 0) -> np.ndarray:
    """Volumes at a batch of points, without error estimate."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = F.n
    if n == 1:
        return 1.0 / F.value(x, np.ones_like(x), check=False) + 1.0 / F.value(x, -np.ones_like(x), check=False)
    (dirs, w), _ = _rule(n, level)
    return _polar_volume(F, x, dirs, w)


def indicatrix_volume(F: MetricField, x, level: int = 0) -> IndicatrixQuadrature:
    """Euclidean volume of the indicatrix at ``x`` with a refinement-based error estimate."""
    x = np.asarray(x, dtype=float)
    F.check_guard(x)
    n = F.n
    if n == 1:
        v = float(indicatrix_volumes(F, x[None])[0])
        return IndicatrixQuadrature(x, "exact", 2, v, 0.0)
    (dirs, w), method = _rule(n, level)
    v = float(_polar_volume(F, x[None], dirs, w)[0])
    if n == 4:
        # two independent scrambles estimate the QMC error
        d2, w2 = _sphere3_rule(16 + level, SOBOL_SEED + 1)
        err = abs(v - float(_polar_volume(F, x[None], d2, w2)[0]))
    else:
        dc, wc = _rule(n, level - 1)[0] if level > 0 else _coarse_rule(n)
        err = abs(v - float(_polar_volume(F, x[None], dc, wc)[0]))
    if not np.isfinite(v) or v <= 0 or err > VOLUME_TOL[n] * v:
        raise QuadratureNotConverged(f"indicatrix volume {v:.6g} with error estimate {err:.2e} at x = {x.tolist()}")
    return IndicatrixQuadrature(x, method, len(dirs), v, err)


def _coarse_rule(n: int):
    if n == 2:
        return _circle_rule(128)
    return _sphere2_rule(32, 64)


# --------------------------------------------------------------------------
# Distortion and S-curvature
# --------------------------------------------------------------------------

def dlog_volume(F: MetricField, x, margin=None, level: int = 0) -> np.ndarray:
    """d/dx^k ln V(x) by 5-point central differences plus one Richardson step.

    The step is 1e-3 times the local domain margin (capped at 1); error
    O(h^6) before quadrature noise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B, n = x.shape
    if margin is None:
        margin = F.guard(x)
    h = 1e-3 * np.minimum(np.asarray(margin, dtype=float) * np.ones(B), 1.0)
    offs = np.array([-2, -1, 1, 2], dtype=float)
    coef = np.array([1, -8, 8, -1], dtype=float) / 12.0
    pts = []
    for scale in (1.0, 0.5):
        for k in range(n):
            for o in offs:
                p = x.copy()
                p[:, k] += o * scale * h
                pts.append(p)
    lv = np.log(indicatrix_volumes(F, np.concatenate(pts), level)).reshape(2, n, 4, B)
    d = np.einsum("snob,o->snb", lv, coef) / (h * np.array([1.0, 0.5])[:, None, None])
    return ((16.0 * d[1] - d[0]) / 15.0).T


def _vol_term(geo: Geometry) -> np.ndarray:
    if "dlnV" not in geo._memo:
        geo._memo["dlnV"] = dlog_volume(geo.metric, geo.x)
    return geo._memo["dlnV"]


@memo
def s_jet(geo: Geometry) -> Jet:
    """S = y^k (1/2 g^ij d_k g_ij + d_k ln V) - 2 G^i I_i."""
    dg = geo.g.grad_x()
    tr = 0.5 * jeinsum("ij,ijk->k", geo.ginv, dg)
    S = jeinsum("k,k->", tr, geo.yvec) - 2.0 * jeinsum("i,i->", geo.G, geo.I)
    return S + jeinsum("k,k->", geo.yvec, _vol_term(geo))


@memo
def e_path_a(geo: Geometry) -> Jet:
    """E_ij = 1/2 S_{.i.j} from the distortion route."""
    return 0.5 * s_jet(geo).grad_y().grad_y()


@memo
def e_jet(geo: Geometry) -> Jet:
    """E_ij = 1/2 G^m_{imj} (connection route, canonical)."""
    return 0.5 * Jet(np.einsum("...mimjp->...ijp", geo.Bw.c), geo.Bw.spec)


@memo
def h_jet(geo: Geometry) -> Jet:
    return geo.contract_y(geo.cartan_h(e_jet(geo), "ll"))


@memo
def landsberg_jet(geo: Geometry) -> Jet:
    return geo.contract_y(geo.cartan_h(geo.Clow, "lll"))


@memo
def mean_landsberg_jet(geo: Geometry) -> Jet:
    return jeinsum("jk,ijk->i", geo.ginv, landsberg_jet(geo))


def distortion_values(geo: Geometry, volumes=None) -> np.ndarray:
    if volumes is None:
        volumes = indicatrix_volumes(geo.metric, geo.x)
    det = np.linalg.det(geo.g0)
    return np.log(np.sqrt(det) * volumes / unit_ball_volume(geo.n))


# --------------------------------------------------------------------------
# Public single-sample operations
# --------------------------------------------------------------------------

def _geo(F, s: TangentSample, order):
    return Geometry(F, s.x, s.y, order)


def distortion(F: MetricField, s: TangentSample) -> float:
    geo = _geo(F, s, (0, 2))
    vol = indicatrix_volume(F, s.x).volume
    return float(distortion_values(geo, np.array([vol]))[0])


def s_curvature(F: MetricField, s: TangentSample) -> float:
    geo = _geo(F, s, (1, 3))
    geo.g0
    return float(s_jet(geo).value[0])


@dataclass(frozen=True)
class MeanBerwald:
    path_a: TensorValue
    path_b: TensorValue
    disagreement: float


def mean_berwald(F: MetricField, s: TangentSample) -> MeanBerwald:
    """E_ij by both routes and their relative disagreement."""
    geo = _geo(F, s, CORE)
    geo.g0
    a, b = e_path_a(geo).value[0], e_jet(geo).value[0]
    scale = max(np.abs(b).max(), np.abs(a).max(), 1e-300)
    dis = float(np.abs(a - b).max() / scale) if scale > 1e-12 else float(np.abs(a - b).max())
    return MeanBerwald(TensorValue(geo.sample(), "ll", a.copy()), TensorValue(geo.sample(), "ll", b.copy()), dis)


def h_curvature(F: MetricField, s: TangentSample) -> TensorValue:
    geo = _geo(F, s, CURVATURE)
    geo.g0
    return geo.tensor(h_jet(geo), "ll")


def landsberg(F: MetricField, s: TangentSample):
    """Return ``(L_ijk, J_i)``."""
    geo = _geo(F, s, (1, 4))
    geo.g0
    return geo.tensor(landsberg_jet(geo), "lll"), geo.tensor(mean_landsberg_jet(geo), "l")


@dataclass(frozen=True)
class IsotropyFit:
    lam: float
    residual: float
    F: float


def iml_fit_values(ginv: np.ndarray, I: np.ndarray, J: np.ndarray, Fv=None):
    """Batched least-squares fit of J + lambda I = 0 in the g^-1 inner product."""
    II = np.einsum("bij,bi,bj->b", ginv, I, I)
    if np.any(np.sqrt(II) <= 1e-8):
        raise MeanCartanVanishes("mean Cartan torsion vanishes; the isotropy factor is undefined")
    JI = np.einsum("bij,bi,bj->b", ginv, J, I)
    lam = -JI / II
    R = J + lam[:, None] * I
    rn = np.sqrt(np.einsum("bij,bi,bj->b", ginv, R, R))
    jn = np.sqrt(np.einsum("bij,bi,bj->b", ginv, J, J))
    return lam, np.where(jn > 0, rn / np.where(jn > 0, jn, 1.0), rn)


def iml_fit(F: MetricField, s: TangentSample) -> IsotropyFit:
    """Fit J_i + lambda I_i = 0; returns lambda-hat and the relative residual."""
    geo = _geo(F, s, (1, 4))
    geo.g0
    lam, res = iml_fit_values(geo.ginv.value, geo.I.value, mean_landsberg_jet(geo).value)
    return IsotropyFit(float(lam[0]), float(res[0]), float(geo.F.value[0]))
