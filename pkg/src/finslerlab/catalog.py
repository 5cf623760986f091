"""Built-in Finsler structures and vector fields used by the test suites."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidParameter
from .expr import MetricField, VectorFieldExpr, parse_metric, parse_vector_field


@dataclass(frozen=True)
class CatalogEntry:
    label: str
    metric: MetricField
    properties: dict
    provenance: dict
    x_radius: float = 1.0
    axis_margin: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.metric.n

    def is_(self, prop: str) -> bool:
        return bool(self.properties.get(prop, False))

    def samples(self, count: int, seed: int = 0):
        """Seeded accepted samples ``(x, y)`` of shape ``(count, n)`` each."""
        return sample_points(self, count, np.random.default_rng(seed))


def sample_points(entry: CatalogEntry, count: int, rng: np.random.Generator):
    n = entry.n
    xs, ys = [], []
    while len(xs) < count:
        d = rng.normal(size=n)
        x = d / np.linalg.norm(d) * entry.x_radius * rng.uniform() ** (1.0 / n)
        y = rng.normal(size=n)
        y *= rng.uniform(0.5, 2.0) / np.linalg.norm(y)
        if entry.axis_margin and np.min(np.abs(y)) < entry.axis_margin * np.linalg.norm(y):
            continue
        if entry.metric.domain_guard is not None and entry.metric.guard(x) < 1e-3:
            continue
        xs.append(x)
        ys.append(y)
    return np.array(xs), np.array(ys)


def _sum(fmt: str, n: int) -> str:
    return "(" + " + ".join(fmt.format(i=i) for i in range(1, n + 1)) + ")"


def _num(v) -> str:
    return repr(float(v))


def _check_dim(n):
    if not 1 <= n <= 4:
        raise InvalidParameter(f"dimension must be 1..4, got {n}")


FLAT = {"riemannian": True, "berwald": True, "landsberg": True, "locally_minkowski": True,
        "isotropic_s": True, "weak_berwald": True, "constant_flag": 0.0}


def euclidean(n: int = 2) -> CatalogEntry:
    _check_dim(n)
    m = parse_metric(f"sqrt{_sum('y{i}^2', n)}", n, label="euclidean")
    return CatalogEntry("euclidean", m, dict(FLAT), {k: "trivial" for k in FLAT}, x_radius=1.0)


def sphere_chart(n: int = 2) -> CatalogEntry:
    """Round unit sphere in stereographic coordinates, g_ij = 4 delta_ij / (1+|x|^2)^2."""
    _check_dim(n)
    m = parse_metric(f"2*sqrt{_sum('y{i}^2', n)}/(1 + {_sum('x{i}^2', n)})", n, label="sphere_chart")
    props = {"riemannian": True, "berwald": True, "landsberg": True, "locally_minkowski": False,
             "isotropic_s": True, "weak_berwald": True, "constant_flag": 1.0, "einstein": 1.0}
    prov = {k: "derived: closed-form round metric" for k in props}
    return CatalogEntry("sphere_chart", m, props, prov, x_radius=1.0)


def randers(n: int = 2, b: Optional[Sequence[float]] = None, mode: str = "constant",
            twist: float = 0.2) -> CatalogEntry:
    """F = |y| + beta with beta = b_i y^i (constant) or a non-closed linear b(x) (polynomial)."""
    _check_dim(n)
    b = np.array([0.3] + [0.0] * (n - 1) if b is None else b, dtype=float)
    if b.shape != (n,):
        raise InvalidParameter(f"b must have {n} components")
    norm_y = f"sqrt{_sum('y{i}^2', n)}"
    if mode == "constant":
        if np.linalg.norm(b) >= 1:
            raise InvalidParameter("Randers requires |b| < 1")
        beta = " + ".join(f"{_num(bi)}*y{i + 1}" for i, bi in enumerate(b))
        m = parse_metric(f"{norm_y} + {beta}", n, label="randers")
        props = {"riemannian": False, "berwald": True, "landsberg": True, "locally_minkowski": True,
                 "isotropic_s": True, "weak_berwald": True, "constant_flag": 0.0}
        prov = {k: "derived: F independent of x" for k in props}
        return CatalogEntry("randers", m, props, prov, x_radius=1.0,
                            params={"b": b.tolist(), "mode": mode})
    if mode != "polynomial":
        raise InvalidParameter(f"unknown Randers mode {mode!r}")
    if n < 2:
        raise InvalidParameter("polynomial Randers needs n >= 2")
    comps = [f"({_num(b[0])} - {_num(twist)}*x2)", f"({_num(b[1])} + {_num(twist)}*x1)"]
    comps += [_num(bi) for bi in b[2:]]
    beta = " + ".join(f"{c}*y{i + 1}" for i, c in enumerate(comps))
    guard = "1 - (" + " + ".join(f"{c}^2" for c in comps) + ")"
    m = parse_metric(f"{norm_y} + {beta}", n, guard=guard, label="randers_poly")
    radius = 0.5
    if np.linalg.norm(b) + abs(twist) * radius >= 0.95:
        raise InvalidParameter("|b(x)| must stay below 1 on the sampling ball")
    props = {"riemannian": False, "berwald": False, "landsberg": False, "locally_minkowski": False}
    prov = {k: "derived: non-closed beta" for k in props}
    return CatalogEntry("randers_poly", m, props, prov, x_radius=radius,
                        params={"b": b.tolist(), "mode": mode, "twist": twist})


def funk(n: int = 2) -> CatalogEntry:
    """Funk metric of the unit ball."""
    _check_dim(n)
    xx = _sum("x{i}^2", n)
    yy = _sum("y{i}^2", n)
    xy = _sum("x{i}*y{i}", n)
    src = f"(sqrt((1 - {xx})*{yy} + {xy}^2) + {xy})/(1 - {xx})"
    m = parse_metric(src, n, guard=f"1 - {xx}", label="funk")
    props = {"riemannian": False, "berwald": False, "landsberg": False, "locally_minkowski": False,
             "isotropic_s": True, "isotropic_mean_landsberg": True, "constant_flag": -0.25}
    prov = {"isotropic_mean_landsberg": "literature: J + cFI = 0 for the Funk metric",
            "constant_flag": "derived: fd_oracle pipeline", "isotropic_s": "derived"}
    return CatalogEntry("funk", m, props, prov, x_radius=0.7)


def quartic_minkowski(n: int = 2) -> CatalogEntry:
    _check_dim(n)
    m = parse_metric(f"pow{_sum('y{i}^4', n)[:-1]}, 0.25)", n, label="quartic_minkowski")
    props = {"riemannian": False, "berwald": True, "landsberg": True, "locally_minkowski": True,
             "isotropic_s": True, "weak_berwald": True, "constant_flag": 0.0}
    prov = {k: "derived: F independent of x" for k in props}
    return CatalogEntry("quartic_minkowski", m, props, prov, x_radius=1.0, axis_margin=0.05)


METRICS: dict = {
    "euclidean": euclidean,
    "sphere_chart": sphere_chart,
    "randers": randers,
    "randers_poly": lambda n=2: randers(n, mode="polynomial"),
    "funk": funk,
    "quartic_minkowski": quartic_minkowski,
}


def get_metric(label: str, n: int = 2) -> CatalogEntry:
    try:
        factory = METRICS[label]
    except KeyError:
        raise InvalidParameter(f"unknown catalog metric {label!r}; choose from {sorted(METRICS)}") from None
    return factory(n)


# --------------------------------------------------------------------------
# Vector fields
# --------------------------------------------------------------------------

def rotation(n: int = 2) -> VectorFieldExpr:
    if n < 2:
        raise InvalidParameter("rotation needs n >= 2")
    return parse_vector_field(["-x2", "x1"] + ["0"] * (n - 2), n, "rotation")


def translation(n: int = 2, axis: int = 0) -> VectorFieldExpr:
    return parse_vector_field(["1" if i == axis else "0" for i in range(n)], n, f"translation{axis + 1}")


def dilation(n: int = 2) -> VectorFieldExpr:
    return parse_vector_field([f"x{i}" for i in range(1, n + 1)], n, "dilation")


def projective_family(n: int = 2, a=None, b=None, c=None, label: str = "c-projective") -> VectorFieldExpr:
    """X^i = a^i + b^i_j x^j + x^i (c_j x^j)."""
    a = np.zeros(n) if a is None else np.asarray(a, dtype=float)
    b = np.zeros((n, n)) if b is None else np.asarray(b, dtype=float)
    c = np.eye(n)[0] if c is None else np.asarray(c, dtype=float)
    cx = " + ".join(f"{_num(c[j])}*x{j + 1}" for j in range(n) if c[j])
    comps = []
    for i in range(n):
        terms = []
        if a[i]:
            terms.append(_num(a[i]))
        terms += [f"{_num(b[i, j])}*x{j + 1}" for j in range(n) if b[i, j]]
        if cx:
            terms.append(f"x{i + 1}*({cx})")
        comps.append(" + ".join(terms) if terms else "0")
    return parse_vector_field(comps, n, label)


def cubic(n: int = 2) -> VectorFieldExpr:
    """Generic cubic field used as a negative control."""
    comps = ["x1^3 + 0.5*x2*x1 + 0.2", "x2^3 - 0.3*x1^2 + 0.1*x2"] + [f"x{i}^2*x1" for i in range(3, n + 1)]
    return parse_vector_field(comps[:n], n, "cubic")


VECTOR_FIELDS: dict = {
    "rotation": rotation,
    "translation": translation,
    "dilation": dilation,
    "c-projective": projective_family,
    "cubic": cubic,
}


def catalog_vector_fields(n: int = 2) -> list:
    return [factory(n) for factory in VECTOR_FIELDS.values()]


def get_field(label: str, n: int = 2) -> VectorFieldExpr:
    try:
        return VECTOR_FIELDS[label](n)
    except KeyError:
        raise InvalidParameter(f"unknown catalog field {label!r}; choose from {sorted(VECTOR_FIELDS)}") from None
