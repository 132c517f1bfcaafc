import os

import pytest
from hypothesis import HealthCheck, settings

from nestlab import NestConfig, PrecisionContext, QuadraticMap, build_nest, compute_geometry

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# 40 significant digits of the Fibonacci parameter, as located by
# locate_itinerary and re-validated at four times the working precision.
FIB_C = "-1.870528632164644888890617419269815853072"


def build(c, depth=8, bits=256, **kw):
    fmap = QuadraticMap.from_value(c, PrecisionContext(bits=bits))
    return build_nest(fmap, depth, NestConfig(depth=depth, **kw))


@pytest.fixture(scope="session")
def fib_nest():
    return build(FIB_C, depth=12, bits=512)


@pytest.fixture(scope="session")
def fib_geometry(fib_nest):
    return compute_geometry(fib_nest)


@pytest.fixture(scope="session")
def cascade_nest():
    # two non-central levels, then central returns from level 3 on
    return build("-1.87", depth=8)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
