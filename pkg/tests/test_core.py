import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerlab import catalog, core
from finslerlab.core import CORE, Geometry, TangentSample, tangent_sample
from finslerlab.errors import GuardViolation, NotPositiveDefinite

from conftest import METRIC_LABELS, bmax, sample
from sympy_oracle import Oracle, funk_F, randers_F, sphere_F


def ts(metric, x, y):
    return tangent_sample(metric, np.asarray(x, float), np.asarray(y, float))


def batch(label, count=30, seed=0, n=2):
    e = catalog.get_metric(label, n)
    xs, ys = e.samples(count, seed)
    return e, Geometry(e.metric, xs, ys, CORE)


# --- fundamental tensor --------------------------------------------------------------

def test_euclidean_g_is_identity():
    m = catalog.euclidean(2).metric
    g, ginv = core.fundamental_tensor(m, ts(m, [0.3, 0.1], [2.0, -1.0]))
    assert np.allclose(g.components, np.eye(2), atol=1e-15)
    assert g.variance == "ll" and ginv.variance == "uu"


@pytest.mark.parametrize("label", METRIC_LABELS)
def test_hessian_form_equals_F_form(label):
    e = catalog.get_metric(label, 2)
    xs, ys = e.samples(10, 3)
    for x, y in zip(xs, ys):
        s = ts(e.metric, x, y)
        g, ginv = core.fundamental_tensor(e.metric, s)
        alt = core.fundamental_tensor_from_F(e.metric, s)
        assert bmax(g.components - alt) <= 1e-10 * (1 + bmax(alt))
        assert bmax(g.components @ ginv.components - np.eye(2)) <= 1e-12


def test_funk_origin_g_is_identity():
    m = catalog.funk(2).metric
    g, _ = core.fundamental_tensor(m, ts(m, [0, 0], [0.6, -0.8]))
    assert np.allclose(g.components, np.eye(2), atol=1e-14)


def test_not_positive_definite_reports_eigenvalue():
    m = catalog.quartic_minkowski(2).metric
    with pytest.raises(NotPositiveDefinite) as exc:
        core.fundamental_tensor(m, ts(m, [0, 0], [1.0, 0.0]))
    assert "eigenvalue" in str(exc.value)


def test_tangent_sample_rejects_boundary_and_zero():
    m = catalog.funk(2).metric
    with pytest.raises(GuardViolation):
        ts(m, [0.9999, 0], [1, 0])
    with pytest.raises(Exception):
        ts(m, [0.1, 0], [0, 0])


# --- Cartan family -------------------------------------------------------------------

def test_euclidean_cartan_vanishes():
    m = catalog.euclidean(2).metric
    # the y-Hessian of |y| is formed in floating point, so "zero" means round-off
    for T in core.cartan(m, ts(m, [0.2, 0.4], [1.0, 2.0])):
        assert bmax(T.components) <= 1e-14


def test_randers_mean_cartan_nonzero():
    m = catalog.randers(2).metric
    *_, I = core.cartan(m, ts(m, [0, 0], [0.0, 1.0]))
    assert np.linalg.norm(I.components) > 1e-3


@pytest.mark.parametrize("label", METRIC_LABELS)
def test_cartan_algebra(label):
    e, geo = batch(label)
    C, A, F = geo.Clow.value, geo.A.value, geo.F.value
    assert bmax(np.einsum("bi,bijk->bjk", geo.y, C)) <= 1e-10 * (1 + bmax(C))
    for perm in [(0, 2, 1, 3), (0, 3, 2, 1), (0, 1, 3, 2)]:
        assert bmax(A - A.transpose(perm)) <= 1e-12 * (1 + bmax(A))
    assert bmax(C - A / F[:, None, None, None]) <= 1e-12 * (1 + bmax(C))
    assert bmax(geo.I.value - np.einsum("bjk,bijk->bi", geo.ginv.value, C)) <= 1e-12 * (1 + bmax(C))
    Ck = np.einsum("bij,bkij->bk", geo.ginv.value, geo.Cup.value)
    assert bmax(geo.Ctrace.value - Ck) <= 1e-12 * (1 + bmax(Ck))


def test_deicke_consistency_on_catalog():
    for label in METRIC_LABELS:
        e, geo = batch(label, 20, seed=4)
        I = np.linalg.norm(geo.I.value, axis=1)
        C = np.abs(geo.Clow.value).reshape(20, -1).max(axis=1)
        both_zero = (I < 1e-10) & (C < 1e-10)
        both_big = (I > 1e-6) & (C > 1e-6)
        assert np.all(both_zero | both_big), label


# --- canonical section -----------------------------------------------------------------

def test_euclidean_ell():
    m = catalog.euclidean(2).metric
    up, low = core.canonical_section(m, ts(m, [0, 0], [3.0, 4.0]))
    assert np.allclose(up.components, [0.6, 0.8], atol=1e-15)
    assert np.allclose(low.components, [0.6, 0.8], atol=1e-15)


@pytest.mark.parametrize("label", METRIC_LABELS)
def test_ell_unit_and_cartan_orthogonal(label):
    e, geo = batch(label)
    ell = geo.ell_up.value
    assert bmax(np.einsum("bij,bi,bj->b", geo.g0, ell, ell) - 1) <= 1e-10
    assert bmax(np.einsum("bijk,bk->bij", geo.A.value, ell)) <= 1e-10
    # l_i = g_ij l^j = dF/dy^i
    assert bmax(np.einsum("bij,bj->bi", geo.g0, ell) - geo.ell_low.value) <= 1e-12


# --- spray and Berwald connection ----------------------------------------------------------

def test_euclidean_spray_zero():
    m = catalog.euclidean(2).metric
    assert bmax(core.spray(m, ts(m, [0.3, 0.3], [1, 2])).components) == 0.0


def test_sphere_spray_quadratic():
    m = catalog.sphere_chart(2).metric
    s = ts(m, [0.3, -0.5], [0.4, 1.1])
    G1 = core.spray(m, s).components
    G2 = core.spray(m, TangentSample(s.x, 2 * s.y, s.margin)).components
    assert bmax(G2 - 4 * G1) <= 1e-10 * bmax(G1)


# G of the Funk metric at x = (0.1, 0), y = (1, 0); 50-digit oracle value:
# G^1 = 0.5555555555555555..., G^2 = 0, F = 1.1111111111111111...
FUNK_G1 = 0.55555555555555555898
FUNK_F = 1.1111111111111111267


def test_funk_spray_is_half_F_y():
    m = catalog.funk(2).metric
    s = ts(m, [0.1, 0.0], [1.0, 0.0])
    G = core.spray(m, s).components
    assert abs(G[0] - FUNK_G1) <= 1e-12 and abs(G[1]) <= 1e-14
    assert bmax(G - 0.5 * FUNK_F * s.y) <= 1e-8
    e, geo = batch("funk")
    assert bmax(geo.G.value - 0.5 * geo.F.value[:, None] * geo.y) <= 1e-8


@pytest.mark.parametrize("F, label, pts", [
    (funk_F(2), "funk", [((0.1, -0.2), (0.7, 0.4)), ((-0.5, 0.3), (0.2, -1.3))]),
    (sphere_F(2), "sphere_chart", [((0.4, -0.7), (1.2, 0.5))]),
])
def test_spray_against_symbolic_oracle(F, label, pts):
    o = Oracle(F, 2)
    m = catalog.get_metric(label, 2).metric
    for x, y in pts:
        G = core.spray(m, ts(m, x, y)).components
        ref = np.array([float(v) for v in o.spray(x, y)])
        assert bmax(G - ref) <= 1e-12 * (1 + bmax(ref))


def test_randers_poly_spray_against_oracle():
    # beta = (0.3 - 0.2 x2) y1 + 0.2 x1 y2
    import sympy as sp
    from sympy_oracle import symbols
    x, y = symbols(2)
    F = sp.sqrt(y[0] ** 2 + y[1] ** 2) + (sp.Rational(3, 10) - sp.Rational(1, 5) * x[1]) * y[0] \
        + sp.Rational(1, 5) * x[0] * y[1]
    o = Oracle(F, 2)
    m = catalog.randers(2, mode="polynomial").metric
    pt = ((0.2, -0.3), (0.6, 0.9))
    G = core.spray(m, ts(m, *pt)).components
    ref = np.array([float(v) for v in o.spray(*pt)])
    assert bmax(G - ref) <= 1e-12 * (1 + bmax(ref))


@pytest.mark.parametrize("label", METRIC_LABELS)
def test_berwald_symmetries(label):
    e, geo = batch(label)
    Gb, B = geo.Gb.value, geo.Bw.value
    scale = 1 + bmax(B)
    assert bmax(Gb - np.swapaxes(Gb, 2, 3)) <= 1e-12 * (1 + bmax(Gb))
    for perm in [(0, 1, 3, 2, 4), (0, 1, 2, 4, 3), (0, 1, 4, 3, 2)]:
        assert bmax(B - B.transpose(perm)) <= 1e-10 * scale
    assert bmax(np.einsum("bijkl,bj->bikl", B, geo.y)) <= 1e-10 * scale


@pytest.mark.parametrize("label", ["euclidean", "randers", "quartic_minkowski", "sphere_chart"])
def test_berwald_metrics_have_zero_B(label):
    e, geo = batch(label)
    assert bmax(geo.Bw.value) <= 1e-9
    if e.is_("locally_minkowski"):
        assert bmax(geo.G.value) <= 1e-10


def test_randers_constant_public_ops_vanish():
    m = catalog.randers(2).metric
    s = ts(m, [0.2, 0.1], [0.5, 1.0])
    assert bmax(core.nonlinear_connection(m, s).components) <= 1e-12
    assert bmax(core.berwald_coeffs(m, s).components) <= 1e-12
    assert bmax(core.berwald_curvature(m, s).components) <= 1e-10


# --- Cartan connection and covariant derivatives ----------------------------------------------

def test_sphere_cartan_coeffs_are_christoffel():
    # g = e^{2 phi} delta with phi = ln 2 - ln(1 + |x|^2):
    # gamma^i_jk = delta^i_j phi_k + delta^i_k phi_j - delta_jk phi_i
    m = catalog.sphere_chart(2).metric
    x = np.array([0.35, -0.6])
    s = ts(m, x, [0.9, 0.4])
    dphi = -2 * x / (1 + x @ x)
    d = np.eye(2)
    ref = (np.einsum("ij,k->ijk", d, dphi) + np.einsum("ik,j->ijk", d, dphi) - np.einsum("jk,i->ijk", d, dphi))
    assert bmax(core.cartan_coeffs(m, s).components - ref) <= 1e-8


@pytest.mark.parametrize("label", METRIC_LABELS)
def test_metric_compatibility_and_spray_identity(label):
    e, geo = batch(label)
    assert bmax(geo.cartan_h(geo.g, "ll").value) <= 1e-9 * (1 + bmax(geo.dg_h.value))
    Gam = geo.Gamma.value
    assert bmax(Gam - np.swapaxes(Gam, 2, 3)) <= 1e-12 * (1 + bmax(Gam))
    yyG = np.einsum("bijk,bj,bk->bi", Gam, geo.y, geo.y)
    assert bmax(yyG - 2 * geo.G.value) <= 1e-9 * (1 + bmax(geo.G.value))


@pytest.mark.parametrize("label", METRIC_LABELS)
def test_nabla0_equals_D0(label):
    e, geo = batch(label)
    for T, var in [(geo.Clow, "lll"), (geo.I, "l"), (geo.g, "ll")]:
        a = geo.contract_y(geo.cartan_h(T, var)).value
        b = geo.contract_y(geo.berwald_h(T, var)).value
        assert bmax(a - b) <= 1e-9 * (1 + bmax(b))


def test_public_cov_wrappers():
    m = catalog.euclidean(2).metric
    s = ts(m, [0.4, -0.2], [1.5, 0.5])
    # D_k f for f = x1 y2 / F (0-homogeneous) on flat space: D_0 f = y^k df/dx^k = y1 y2 / F
    D = core.berwald_h_cov(lambda geo: geo.xj[0] * geo.yj[1] / geo.F, "", m, s)
    assert D.variance == "l"
    assert D.components @ s.y == pytest.approx(s.y[0] * s.y[1] / np.linalg.norm(s.y), rel=1e-14)
    for label in ("funk", "randers_poly"):
        mm, ss = sample(label, 2)
        dotF = core.cartan_v_cov(lambda geo: geo.F, "", mm, ss)
        _, ell = core.canonical_section(mm, ss)
        assert bmax(dotF.components - ell.components) <= 1e-12
        Dg = core.cartan_h_cov(lambda geo: geo.g, "ll", mm, ss)
        assert Dg.variance == "lll" and bmax(Dg.components) <= 1e-9


# --- homogeneity ladder -----------------------------------------------------------------------

LADDER = [("g", lambda geo: geo.g, 0), ("C", lambda geo: geo.Clow, -1), ("A", lambda geo: geo.A, 0),
          ("G", lambda geo: geo.G, 2), ("N", lambda geo: geo.N, 1), ("Gb", lambda geo: geo.Gb, 0),
          ("B", lambda geo: geo.Bw, -1)]


@given(st.sampled_from(METRIC_LABELS), st.floats(0.2, 8.0), st.integers(0, 10))
def test_homogeneity_ladder(label, lam, seed):
    e = catalog.get_metric(label, 2)
    xs, ys = e.samples(3, seed)
    g1 = Geometry(e.metric, xs, ys, CORE)
    g2 = Geometry(e.metric, xs, lam * ys, CORE)
    for name, fn, deg in LADDER:
        a, b = fn(g2).value, lam ** deg * fn(g1).value
        assert bmax(a - b) <= 1e-9 * (1 + bmax(b)), name
