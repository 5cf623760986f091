"""Curvature of the Berwald and Cartan connections, flag and Ricci curvature.

All index layouts follow the written symbol: ``K[i, j, k, l]`` is
``K^i_{jkl}``.  Derivative indices produced by :mod:`core` are appended
last and transposed into place here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import CURVATURE, FLAG, Geometry, TangentSample, TensorValue, jlin, memo
from .errors import DegenerateFlag
from .expr import MetricField
from .jets import Jet, jeinsum
from .nonriem import h_jet


# --------------------------------------------------------------------------
# Jet-level curvature (cached per Geometry)
# --------------------------------------------------------------------------

@memo
def trace_curvature(geo: Geometry) -> Jet:
    """R^i_k = 2 d_k G^i - y^j d_j G^i_k + 2 G^j G^i_jk - G^i_j G^j_k (spray-only formula)."""
    t1 = 2.0 * geo.G.grad_x()
    t2 = jeinsum("ikj,j->ik", geo.N.grad_x(), geo.yvec)
    t3 = 2.0 * jeinsum("j,ijk->ik", geo.G, geo.Gb)
    t4 = jeinsum("ij,jk->ik", geo.N, geo.N)
    return t1 - t2 + t3 - t4


@memo
def ricci_scalar(geo: Geometry) -> Jet:
    """Ric = R^i_i, positively 2-homogeneous."""
    return jlin("ii->", trace_curvature(geo))


@memo
def nonlinear_curvature(geo: Geometry) -> Jet:
    """R^i_kl = delta_k G^i_l - delta_l G^i_k (= y^j K^i_jkl)."""
    dN = geo.delta(geo.N)  # [i, l, k] = delta_k G^i_l
    return jlin("ilk->ikl", dN) - dN


@memo
def berwald_hh(geo: Geometry) -> Jet:
    """K^i_jkl = delta_k G^i_jl - delta_l G^i_jk + G^i_rk G^r_jl - G^i_rl G^r_jk."""
    dG = geo.delta(geo.Gb)  # [i, j, l, k] = delta_k G^i_jl
    GG = jeinsum("irk,rjl->ijkl", geo.Gb, geo.Gb)
    return jlin("ijlk->ijkl", dG) - dG + GG - jlin("ijlk->ijkl", GG)


@memo
def berwald_ricci(geo: Geometry) -> Jet:
    """K_jl = K^i_jil."""
    return jlin("ijil->jl", berwald_hh(geo))


@memo
def ricci_first(geo: Geometry) -> Jet:
    K = berwald_ricci(geo)
    return 0.5 * (K + jlin("ij->ji", K))


@memo
def ricci_second(geo: Geometry) -> Jet:
    """Ric_ij = (1/2 F^2 Ric)_{y^i y^j} with Ric normalised by F^2, i.e. 1/2 d_yy R^m_m."""
    return 0.5 * ricci_scalar(geo).grad_y().grad_y()


@memo
def cartan_hh(geo: Geometry) -> Jet:
    """Cartan hh-curvature; the R^s_km C^i_sj term takes R^s_km from the spray."""
    dG = geo.delta(geo.Gamma)  # [i, j, m, k] = delta_k Gamma^i_jm
    GG = jeinsum("isk,sjm->ijkm", geo.Gamma, geo.Gamma)
    RC = jeinsum("skm,isj->ijkm", nonlinear_curvature(geo), geo.Cup)
    return jlin("ijmk->ijkm", dG) - dG + GG - jlin("ijmk->ijkm", GG) + RC


@memo
def cartan_P(geo: Geometry) -> Jet:
    """P^i_jkl = nabla^i C_kjl - nabla_j C^i_kl + C^i_kr nabla_0 C^r_jl - C^r_kj nabla_0 C^i_rl."""
    dCl = geo.cartan_h(geo.Clow, "lll")   # [k, j, l, a] = nabla_a C_kjl
    dCu = geo.cartan_h(geo.Cup, "ull")    # [i, k, l, j] = nabla_j C^i_kl
    t1 = jeinsum("ia,kjla->ijkl", geo.ginv, dCl)
    t2 = jlin("iklj->ijkl", dCu)
    d0 = geo.contract_y(dCu)              # [r, j, l] = nabla_0 C^r_jl
    t3 = jeinsum("ikr,rjl->ijkl", geo.Cup, d0)
    t4 = jeinsum("rkj,irl->ijkl", geo.Cup, d0)
    return t1 - t2 + t3 - t4


@memo
def cartan_Q(geo: Geometry) -> Jet:
    """Q^i_jkl = C^i_lr C^r_jk - C^i_rk C^r_jl."""
    C = geo.Cup
    return jeinsum("ilr,rjk->ijkl", C, C) - jeinsum("irk,rjl->ijkl", C, C)


# --------------------------------------------------------------------------
# Identity residuals on a Geometry
# --------------------------------------------------------------------------

FieldFn = Callable[[Geometry], Jet]


def ricci_identity_lhs_rhs(geo: Geometry, psi: FieldFn):
    """Both sides of the Cartan Ricci identity for a vector field Psi^i.

    ``nabla_k nabla_l Psi^i`` is the component ``[i, l, k]`` of the iterated
    derivative (inner direction l, outer direction k).
    """
    P = psi(geo)
    d1 = geo.cartan_h(P, "u")            # [i, l]
    d2 = geo.cartan_h(d1, "ul")          # [i, l, k]
    lhs = jlin("ilk->ikl", d2) - d2      # nabla_k nabla_l - nabla_l nabla_k
    R = cartan_hh(geo)
    S = geo.Cup - jlin("rkl->rlk", geo.Cup)
    rhs = (jeinsum("r,irkl->ikl", P, R)
           - jeinsum("ir,rkl->ikl", geo.cartan_v(P, "u"), nonlinear_curvature(geo))
           - jeinsum("ir,rkl->ikl", d1, S))
    return lhs, rhs


def berwald_commutation_lhs_rhs(geo: Geometry, psi: FieldFn):
    """Both sides of D_m D_k psi - D_k D_m psi = K^r_0mk psi_.r.

    ``D_m D_k psi`` denotes the component ``[m, k]`` of the iterated
    horizontal derivative, i.e. ``D_k`` applied to ``D_m psi``.
    """
    p = psi(geo)
    DD = geo.berwald_h(geo.berwald_h(p, ""), "l")  # [a, b] = D_b D_a psi
    lhs = DD - jlin("km->mk", DD)
    K0 = geo.contract_y(jlin("rjmk->rmkj", berwald_hh(geo)))  # K^r_{0mk}
    rhs = jeinsum("rmk,r->mk", K0, p.grad_y())
    return lhs, rhs


def bianchi_traces(geo: Geometry):
    """(y^j K_jl.m, y^l K_jl.m + 2 H_jm)."""
    dK = berwald_ricci(geo).grad_y()  # [j, l, m]
    first = jeinsum("jlm,j->lm", dK, geo.yvec)
    second = jeinsum("jlm,l->jm", dK, geo.yvec) + 2.0 * h_jet(geo)
    return first, second


def flag_curvature_values(geo: Geometry, v: np.ndarray) -> np.ndarray:
    """K(y, v) for each base point; ``v`` has shape (B, n) or (B, m, n)."""
    g = geo.g0
    y = geo.y
    R = trace_curvature(geo).value
    v = np.asarray(v, dtype=float)
    if v.ndim == 2:
        return flag_curvature_values(geo, v[:, None, :])[:, 0]
    num = np.einsum("bij,bik,bmk,bmj->bm", g, R, v, v)
    gyy = np.einsum("bij,bi,bj->b", g, y, y)[:, None]
    gvv = np.einsum("bij,bmi,bmj->bm", g, v, v)
    gvy = np.einsum("bij,bmi,bj->bm", g, v, y)
    den = gyy * gvv - gvy ** 2
    if np.any(den <= 1e-10 * gyy * gvv):
        raise DegenerateFlag("flag transverse vector is (nearly) parallel to the flagpole")
    return num / den


# --------------------------------------------------------------------------
# Public single-sample operations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Flag:
    base: TangentSample
    transverse: np.ndarray


@dataclass
class CurvatureBundle:
    R: TensorValue
    Ric: float
    K: TensorValue
    K_ric: TensorValue
    R_tilde: TensorValue
    Ric_ij: TensorValue
    R_cartan: TensorValue
    P: TensorValue
    Q: TensorValue
    H: TensorValue


def _geo(F: MetricField, s: TangentSample, order=CURVATURE) -> Geometry:
    geo = Geometry(F, s.x, s.y, order)
    geo.g0
    return geo


def riemann_trace(F: MetricField, s: TangentSample):
    """Return ``(R^i_k, Ric)`` with ``Ric = R^i_i``."""
    geo = _geo(F, s, (2, 4))
    return geo.tensor(trace_curvature(geo), "ul"), float(ricci_scalar(geo).value[0])


def flag_curvature(F: MetricField, flag: Flag) -> float:
    geo = _geo(F, flag.base, FLAG)
    return float(flag_curvature_values(geo, np.asarray(flag.transverse, dtype=float)[None])[0])


def berwald_hh_tensor(F: MetricField, s: TangentSample):
    """Return ``(K^i_jkl, K_jl)``."""
    geo = _geo(F, s, (2, 5))
    return geo.tensor(berwald_hh(geo), "ulll"), geo.tensor(berwald_ricci(geo), "ll")


def ricci_tensors(F: MetricField, s: TangentSample):
    """Return ``(R~_ij, Ric_ij)``."""
    geo = _geo(F, s)
    return geo.tensor(ricci_first(geo), "ll"), geo.tensor(ricci_second(geo), "ll")


def cartan_curvatures(F: MetricField, s: TangentSample):
    """Return Cartan ``(R^i_jkm, P^i_jkl, Q^i_jkl)``."""
    geo = _geo(F, s, (2, 5))
    return (geo.tensor(cartan_hh(geo), "ulll"), geo.tensor(cartan_P(geo), "ulll"),
            geo.tensor(cartan_Q(geo), "ulll"))


def curvature_bundle(F: MetricField, s: TangentSample) -> CurvatureBundle:
    geo = _geo(F, s)
    t = geo.tensor
    return CurvatureBundle(
        R=t(trace_curvature(geo), "ul"), Ric=float(ricci_scalar(geo).value[0]),
        K=t(berwald_hh(geo), "ulll"), K_ric=t(berwald_ricci(geo), "ll"),
        R_tilde=t(ricci_first(geo), "ll"), Ric_ij=t(ricci_second(geo), "ll"),
        R_cartan=t(cartan_hh(geo), "ulll"), P=t(cartan_P(geo), "ulll"), Q=t(cartan_Q(geo), "ulll"),
        H=t(h_jet(geo), "ll"))


def ricci_identity_residual(F: MetricField, s: TangentSample, psi: FieldFn) -> TensorValue:
    geo = _geo(F, s)
    lhs, rhs = ricci_identity_lhs_rhs(geo, psi)
    return geo.tensor(lhs - rhs, "ull")


def berwald_commutation_residual(F: MetricField, s: TangentSample, psi: FieldFn) -> TensorValue:
    geo = _geo(F, s)
    lhs, rhs = berwald_commutation_lhs_rhs(geo, psi)
    return geo.tensor(lhs - rhs, "ll")
