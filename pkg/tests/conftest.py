import numpy as np
import pytest
from hypothesis import settings

from warpcurv.classify import ClassifyConfig
from warpcurv.tensor import parse_chart

settings.register_profile("repo", deadline=None, derandomize=True, print_blob=True)
settings.load_profile("repo")


SPHERE = """\
dim 2
coords th ph
domain th 0.3 2.8
domain ph 0 6
g 1 1 : 1
g 2 2 : sin(th)^2
"""

HYPERBOLIC = """\
dim 2
coords x1 x2
domain x1 -1 1
domain x2 0.5 2
g 1 1 : 1 / x2^2
g 2 2 : 1 / x2^2
"""

FLAT3 = """\
dim 3
coords x1 x2 x3
domain x1 0 1
domain x2 0 1
domain x3 0 1
g 1 1 : 1
g 2 2 : 1
g 3 3 : 1
"""

# non-diagonal 3-metric used for frozen oracle values
SKEW3 = """\
dim 3
coords x1 x2 x3
domain x1 0 1
domain x2 0 1
domain x3 -1 1
g 1 1 : 1 + x1^2
g 1 2 : x2*x3/5
g 2 2 : 2 + sin(x1)
g 2 3 : x1/10
g 3 3 : exp(x2)
"""

# round 3-sphere of radius 2 in hyperspherical coordinates
SPHERE3 = """\
dim 3
coords a b c
domain a 0.4 2.6
domain b 0.4 2.6
domain c 0 6
g 1 1 : 4
g 2 2 : 4*sin(a)^2
g 3 3 : 4*sin(a)^2*sin(b)^2
"""

# conformally flat, not Einstein: conformal factor times Euclidean 4-space
CONFORMAL4 = """\
dim 4
coords x1 x2 x3 x4
domain x1 0.2 1
domain x2 0.2 1
domain x3 0.2 1
domain x4 0.2 1
g 1 1 : exp(x1 + x2^2)
g 2 2 : exp(x1 + x2^2)
g 3 3 : exp(x1 + x2^2)
g 4 4 : exp(x1 + x2^2)
"""


@pytest.fixture
def charts():
    return {k: parse_chart(v) for k, v in
            dict(sphere=SPHERE, hyperbolic=HYPERBOLIC, flat3=FLAT3, skew3=SKEW3,
                 sphere3=SPHERE3, conformal4=CONFORMAL4).items()}


@pytest.fixture
def small_config():
    return ClassifyConfig(points=6, seed=7)


def random_symmetric(rng, n):
    a = rng.normal(size=(n, n))
    return a + a.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    def record(label, passed, detail):
        ACCEPTANCE.append(f"{label:<38} {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
