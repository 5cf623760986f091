import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerlab import catalog
from finslerlab import symmetry as sym
from finslerlab.core import SYMMETRY, Geometry, tangent_sample
from finslerlab.errors import FlowLeftDomain, InsufficientSamples, NotIInvariant, NotProjective
from finslerlab.expr import parse_vector_field

from conftest import bmax, sample


def ts(metric, x, y):
    return tangent_sample(metric, np.asarray(x, float), np.asarray(y, float))


def batch(label, count=20, seed=0, n=2):
    e = catalog.get_metric(label, n)
    return e, e.samples(count, seed)


ROT = catalog.rotation(2)
TRANS = catalog.translation(2)
CPROJ = catalog.projective_family(2)
CUBIC = catalog.cubic(2)


# --- complete lift ----------------------------------------------------------------------

def test_complete_lift_examples():
    y = np.array([[0.3, -0.7]])
    x = np.array([[0.5, 1.5]])
    assert np.allclose(sym.complete_lift(ROT).vertical(x, y), [[0.7, 0.3]], atol=1e-15)
    assert bmax(sym.complete_lift(TRANS).vertical(x, y)) == 0.0
    X = parse_vector_field(["x1*(x1)", "x2*(x1)"], 2)
    Y = sym.complete_lift(X).vertical([[2.0, 1.0]], [[1.0, 1.0]])
    assert np.allclose(Y, [[4.0, 3.0]], atol=1e-12)


def test_lift_moves_y_like_the_flow_jacobian():
    lift = sym.complete_lift(CUBIC)
    xs = np.array([[0.1, 0.2], [-0.3, 0.4]])
    ys = np.array([[1.0, 0.5], [0.2, -0.9]])
    assert bmax(lift.lie_y(xs, ys)) <= 1e-9


# --- flow route ---------------------------------------------------------------------------

def test_flow_lie_examples_on_euclidean():
    m = catalog.euclidean(2).metric
    s = ts(m, [0.4, -0.3], [1.0, 2.0])
    lg, err = sym.flow_lie("g", ROT, m, s)
    assert bmax(lg.components) <= 1e-9
    lf, _ = sym.flow_lie("F2", ROT, m, s)
    assert abs(float(lf.components)) <= 1e-9
    X = parse_vector_field(["x1", "0"], 2)
    t, _ = sym.flow_lie("g", X, m, s)
    assert t.components[0, 0] == pytest.approx(2.0, abs=1e-9)
    assert bmax(t.components - np.diag([2.0, 0.0])) <= 1e-9


@pytest.mark.parametrize("label, field", [("euclidean", ROT), ("sphere_chart", ROT), ("funk", ROT),
                                          ("randers", TRANS), ("quartic_minkowski", TRANS)])
def test_killing_flow_matches_closed_form(label, field):
    e, (xs, ys) = batch(label)
    fp = sym.FlowPullback(e.metric, field, xs, ys, order=(1, 2))
    geo = Geometry(e.metric, xs, ys, (1, 3))
    closed = sym.LieJets(geo, field).lie_g_closed.value
    lg = fp.lie("g").value
    assert bmax(lg) <= 1e-8
    assert bmax(lg - closed) <= 1e-7


@pytest.mark.parametrize("label, field", [("funk", CPROJ), ("randers_poly", CUBIC), ("sphere_chart", TRANS)])
def test_flow_and_closed_form_lie_g_agree_off_killing(label, field):
    e, (xs, ys) = batch(label, 10, seed=3)
    fp = sym.FlowPullback(e.metric, field, xs, ys, order=(1, 2))
    closed = sym.LieJets(Geometry(e.metric, xs, ys, (1, 3)), field).lie_g_closed.value
    lg = fp.lie("g").value
    assert bmax(lg) > 1e-3
    assert bmax(lg - closed) <= 1e-7 * (1 + bmax(closed))


def test_flow_left_domain():
    m = catalog.funk(2).metric
    with pytest.raises(FlowLeftDomain):
        sym.FlowPullback(m, TRANS, [[0.9999, 0.0]], [[1.0, 0.0]])


# --- lie_spray ---------------------------------------------------------------------------

def test_lie_spray_c_family_on_euclidean():
    e, (xs, ys) = batch("euclidean", 20, seed=1)
    ratios = []
    for x, y in zip(xs, ys):
        r = sym.lie_spray(e.metric, CPROJ, ts(e.metric, x, y))
        assert r.residual <= 1e-6
        ratios.append(r.psi / y[0])  # c = (1, 0)
    assert np.ptp(ratios) <= 1e-6
    assert abs(ratios[0]) > 0.5


def test_lie_spray_rotation_and_negative_control():
    m, s = sample("euclidean")
    assert abs(sym.lie_spray(m, ROT, s).psi) <= 1e-9
    m, s = sample("funk", 1)
    assert sym.lie_spray(m, CUBIC, s).residual > 1e-2


@pytest.mark.parametrize("label, field", [("euclidean", CPROJ), ("funk", CPROJ), ("funk", catalog.dilation(2)),
                                          ("randers", ROT), ("sphere_chart", ROT)])
def test_psi_euler_consistency(label, field):
    e, (xs, ys) = batch(label, 10, seed=5)
    lj = sym.LieJets(Geometry(e.metric, xs, ys, SYMMETRY), field)
    assert bmax(sym.projective_residuals(lj)) <= 1e-6
    psi, pk = lj.psi.value, lj.psi_k.value
    assert bmax(np.einsum("bk,bk->b", pk, ys) - psi) <= 1e-8 * (1 + bmax(psi))


@given(st.floats(0.2, 5.0), st.integers(0, 30))
def test_psi_one_homogeneous(lam, seed):
    e = catalog.funk(2)
    xs, ys = e.samples(2, seed)
    a = sym.LieJets(Geometry(e.metric, xs, ys, (2, 4)), CPROJ).psi.value
    b = sym.LieJets(Geometry(e.metric, xs, lam * ys, (2, 4)), CPROJ).psi.value
    assert bmax(b - lam * a) <= 1e-9 * (1 + bmax(a))


# --- classifier ---------------------------------------------------------------------------

def test_classify_euclidean_rotation_all_true():
    e, smp = batch("euclidean")
    rep = sym.classify(e.metric, ROT, smp)
    assert all(rep.verdicts[k] for k in sym.VERDICTS)
    assert max(rep.residuals.values()) <= 1e-8
    assert rep.engine_errors == []


def test_classify_euclidean_c_family():
    e, smp = batch("euclidean")
    rep = sym.classify(e.metric, CPROJ, smp)
    v = rep.verdicts
    assert v["projective"] and not v["affine"] and v["e_invariant"]
    assert rep.residuals["affine"] > 1e-3
    assert rep.residuals["e_invariant"] <= 1e-8
    assert rep.lemma_b is not None and rep.lemma_b <= 1e-6


def test_classify_sphere_rotation_killing():
    e, smp = batch("sphere_chart")
    rep = sym.classify(e.metric, ROT, smp)
    assert rep.verdicts["killing"] and rep.residuals["killing"] <= 1e-8


def test_classify_needs_twenty_samples():
    e, (xs, ys) = batch("euclidean", 19)
    with pytest.raises(InsufficientSamples):
        sym.classify(e.metric, ROT, (xs, ys))


@pytest.mark.parametrize("label", tuple(catalog.METRICS))
def test_classifier_implications(label):
    e, smp = batch(label, 20, seed=2)
    for X in catalog.catalog_vector_fields(2):
        rep = sym.classify(e.metric, X, smp)
        v = rep.verdicts
        assert not rep.engine_errors
        assert not v["affine"] or v["projective"]
        assert not v["i_invariant"] or v["e_invariant"]
        if v["killing"]:
            assert v["affine"], (label, X.label)


# --- verification suites -----------------------------------------------------------------

def test_lemma31_euclidean_c_family():
    e, smp = batch("euclidean", 10)
    rep = sym.verify_lemma31(e.metric, CPROJ, smp)
    assert len([i for i in rep.items if i.name.startswith("item")]) == 10
    for item in rep.items:
        assert item.max <= 1e-5, item.name


def test_lemma31_rotation_cases():
    e, smp = batch("euclidean", 10)
    rep = sym.verify_lemma31(e.metric, ROT, smp)
    assert all(i.max <= 1e-8 for i in rep.items)
    e, smp = batch("sphere_chart", 10)
    assert sym.verify_lemma31(e.metric, ROT, smp).passed


def test_lemma31_funk_c_family_and_cross_check():
    # Funk is projectively flat: the c-family is projective with non-trivial Psi
    e, smp = batch("funk", 10, seed=4)
    rep = sym.verify_lemma31(e.metric, CPROJ, smp)
    assert rep.passed, [(i.name, i.max) for i in rep.items]
    assert rep["item7 cross-check Psi = nabla_0 f/(n+1)"].max <= 1e-5


def test_lemma31_rejects_non_projective():
    e, smp = batch("funk", 10)
    with pytest.raises(NotProjective):
        sym.verify_lemma31(e.metric, CUBIC, smp)


def test_prop_iinv_examples():
    for label, X in [("euclidean", CPROJ), ("euclidean", TRANS), ("sphere_chart", ROT)]:
        e, smp = batch(label)
        rep = sym.verify_prop_Iinv(e.metric, X, smp)
        assert rep.passed, (label, [(i.name, i.max) for i in rep.items])
    e, smp = batch("euclidean")
    assert all(i.max <= 1e-12 for i in sym.verify_prop_Iinv(e.metric, TRANS, smp).items)


def test_prop_iinv_requires_i_invariance():
    e, smp = batch("randers_poly")
    with pytest.raises(NotIInvariant):
        sym.verify_prop_Iinv(e.metric, ROT, smp)


def test_lie_ricci_compare_examples():
    for label, X in [("euclidean", CPROJ), ("sphere_chart", ROT), ("funk", ROT)]:
        e, smp = batch(label)
        rep = sym.lie_ricci_compare(e.metric, X, smp)
        assert rep.items[0].max <= 1e-5
    # Killing: both Lie derivatives small on their own
    e, (xs, ys) = batch("funk")
    fp = sym.FlowPullback(e.metric, ROT, xs, ys)
    assert bmax(fp.lie("Ric").value) <= 1e-6 and bmax(fp.lie("Rtilde").value) <= 1e-6


def test_lemma_b_flow_route():
    e, smp = batch("funk", 10, seed=6)
    rep = sym.verify_lemma_b(e.metric, CPROJ, smp)
    assert rep.passed


# --- codifferential -----------------------------------------------------------------------

def test_codifferential_examples():
    m = catalog.euclidean(2).metric
    s = ts(m, [0.3, 0.5], [1.0, -0.5])
    assert sym.codifferential_h(m, parse_vector_field(["x1", "0"], 2), s).value == pytest.approx(-1.0, abs=1e-12)
    assert abs(sym.codifferential_h(m, ROT, s).value) <= 1e-12
    m, s = sample("randers_poly", 2)
    X = parse_vector_field(["x1^2 - 0.3*x2", "0.5*x1*x2 + 1"], 2)
    c = sym.codifferential_h(m, X, s)
    assert c.residual <= 1e-7 and abs(c.value) > 1e-3
