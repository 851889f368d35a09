import numpy as np
import pytest
import sympy

from fcfv.cases import _symbols, poisson_case, stokes_case
from fcfv.generators import generate_structured_mesh
from fcfv.mesh import neumann_on_plane

CELL_TYPES_2D = ["TRI", "QUA", "HYBRID"]
CELL_TYPES_3D = ["TET", "HEX", "PRI", "PYR", "HYBRID"]
ALL_FAMILIES = [(ct, 2) for ct in CELL_TYPES_2D] + [(ct, 3) for ct in CELL_TYPES_3D]


def linear_poisson_case(nsd):
    xs = _symbols(nsd)
    coef = [2.0, -3.0, 0.5][:nsd]
    u = 1 + sum(c * x for c, x in zip(coef, xs))
    return poisson_case(f"linear{nsd}d", u, xs, {}, neumann_on_plane(1))


def linear_stokes_case(nsd, nu=1.0):
    """Linear divergence-free velocity with a constant pressure."""
    xs = _symbols(nsd)
    if nsd == 2:
        x1, x2 = xs
        u = [1 + x1 + 2 * x2, -0.5 + 3 * x1 - x2]
    else:
        x1, x2, x3 = xs
        u = [x1 + 2 * x2 + 0.3, 0.5 * x1 - 2 * x2 + x3, x1 - x2 + x3 - 1]
    return stokes_case(f"linear_stokes{nsd}d", u, sympy.Float(1.5), xs, nu, {"nu": nu}, neumann_on_plane(1))


@pytest.fixture
def unit_square():
    return generate_structured_mesh("QUA", 2, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
