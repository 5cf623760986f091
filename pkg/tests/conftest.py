import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finslerlab import catalog
from finslerlab.core import tangent_sample

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

METRIC_LABELS = tuple(catalog.METRICS)


def entry(label, n=2):
    return catalog.get_metric(label, n)


def sample(label, idx=0, n=2, seed=0):
    """One accepted TangentSample from the catalog entry's seeded sampler."""
    e = entry(label, n)
    xs, ys = e.samples(idx + 1, seed)
    return e.metric, tangent_sample(e.metric, xs[idx], ys[idx])


def bmax(a):
    return float(np.max(np.abs(np.asarray(a))))


@pytest.fixture(params=METRIC_LABELS)
def any_entry(request):
    return entry(request.param)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
