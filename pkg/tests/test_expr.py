import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerlab import catalog
from finslerlab.errors import (DomainError, ExprSyntaxError, GuardViolation, IndexOutOfRange, UnknownIdentifier,
                               YVariableInVectorField)
from finslerlab.expr import eval_expr, parse, parse_metric, parse_vector_field, pretty


def test_euclidean_norm_at_3_4():
    m = parse_metric("sqrt(y1^2 + y2^2)", 2)
    assert eval_expr(m.f, [0, 0], [3, 4]) == 5.0


def test_randers_value():
    m = parse_metric("sqrt(y1^2+y2^2) + 0.3*y1", 2)
    assert eval_expr(m.f, [0, 0], [1, 0]) == pytest.approx(1.3, abs=1e-15)


def test_unbalanced_source_reports_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse_metric("sqrt(y1^2 +", 2)
    assert exc.value.position == 12


def test_unknown_identifier_and_index_range():
    with pytest.raises(UnknownIdentifier):
        parse("foo(y1)", 2)
    with pytest.raises(IndexOutOfRange):
        parse("y3 + y1", 2)


def test_rotation_field():
    X = parse_vector_field(["-x2", "x1"], 2)
    assert X.value(np.array([[1.0, 0.0]]))[0].tolist() == [0.0, 1.0]


def test_projective_field_components():
    X = parse_vector_field(["x1*(x1)", "x2*(x1)"], 2)
    assert X.value(np.array([[2.0, 1.0]]))[0].tolist() == [4.0, 2.0]


def test_vector_field_rejects_y():
    with pytest.raises(YVariableInVectorField):
        parse_vector_field(["y1"], 1)


def test_eval_sqrt2_and_domain_errors():
    m = parse_metric("sqrt(y1^2 + y2^2)", 2)
    assert eval_expr(m.f, [0, 0], [1, 1]) == math.sqrt(2)
    with pytest.raises(DomainError):
        eval_expr(parse("ln(x1)", 1), [-1.0])
    with pytest.raises(DomainError):
        eval_expr(parse("1/(x1 - 1)", 1), [1.0])
    with pytest.raises(DomainError):
        eval_expr(parse("pow(x1, 0.5)", 1), [-2.0])


def test_guard_violation():
    e = catalog.funk(2)
    with pytest.raises(GuardViolation):
        eval_expr(e.metric.f, [1.2, 0], [1, 0], guard=e.metric.domain_guard)


def test_funk_at_origin_is_euclidean():
    # at x = 0 the Funk formula reduces to sqrt(|y|^2) = |y|
    f = catalog.funk(2).metric.f
    assert eval_expr(f, [0, 0], [1, 0]) == 1.0
    assert eval_expr(f, [0, 0], [3, 4]) == pytest.approx(5.0, abs=1e-15)


def test_precedence_and_associativity():
    x = [2.0]
    assert eval_expr(parse("-x1^2", 1), x) == -4.0
    assert eval_expr(parse("x1^3^2", 1), x) == 2.0 ** 9
    assert eval_expr(parse("8/x1/2", 1), x) == 2.0
    assert eval_expr(parse("1 - x1 - 1", 1), x) == -2.0


# --- properties ----------------------------------------------------------------

_leaf = st.one_of(
    st.sampled_from(["x1", "x2", "y1", "y2"]),
    st.floats(min_value=0, max_value=50, allow_nan=False).map(repr),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*/^"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        children.map(lambda c: f"-{c}"),
        st.tuples(st.sampled_from(["sqrt", "exp", "ln", "abs"]), children).map(lambda t: f"{t[0]}({t[1]})"),
        st.tuples(children, st.sampled_from(["2", "0.5", "-1.5"])).map(lambda t: f"pow({t[0]}, {t[1]})"),
    )


sources = st.recursive(_leaf, _combine, max_leaves=12)


@given(sources)
def test_pretty_round_trip(src):
    tree = parse(src, 2)
    again = parse(pretty(tree.root), 2)
    assert again.root == tree.root


@given(sources, st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_eval_is_deterministic(src, pt):
    tree = parse(src, 2)
    try:
        a = eval_expr(tree, pt[:2], pt[2:])
    except (DomainError, OverflowError, ZeroDivisionError):
        return
    b = eval_expr(tree, pt[:2], pt[2:])
    assert np.asarray(a).tobytes() == np.asarray(b).tobytes()


@pytest.mark.parametrize("label", tuple(catalog.METRICS))
def test_catalog_homogeneity_acceptance(label):
    e = catalog.get_metric(label, 2)
    xs, ys = e.samples(50, seed=11)
    lam = np.random.default_rng(5).uniform(0.1, 10.0, size=50)
    F1 = e.metric.value(xs, ys)
    Fl = e.metric.value(xs, lam[:, None] * ys)
    assert np.max(np.abs(Fl - lam * F1) / (lam * F1)) <= 1e-10
