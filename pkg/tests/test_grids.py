import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from comploc.errors import DomainMismatchError
from comploc.grids import (
    Domain,
    ScalarField,
    grid_shape,
    integrate,
    trapezoid_weights,
)


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain((1.0, 1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        Domain((1.0, -1.0))
    with pytest.raises(ValueError):
        Domain((1.0,), outer="robin")
    d = Domain.unit_cube(2)
    assert d.d == 2 and d.volume == 1.0


def test_grid_shape_exact_span():
    dom = Domain((1.0, 2.0))
    assert grid_shape(dom, 0.25) == (5, 9)
    assert grid_shape(dom, (0.5, 0.25)) == (3, 9)
    with pytest.raises(DomainMismatchError):
        grid_shape(dom, 0.3)


def test_trapezoid_weights_2d():
    w = trapezoid_weights((3, 3))
    assert w[1, 1] == 1.0
    assert w[0, 1] == 0.5
    assert w[0, 0] == 0.25
    # weights sum to the cell count
    assert np.isclose(w.sum(), 4.0)


@given(st.floats(min_value=-3.0, max_value=3.0), st.integers(2, 40))
@settings(max_examples=30, deadline=None)
def test_integrate_constant(value, cells):
    dom = Domain((2.0,))
    f = ScalarField.constant(dom, 2.0 / cells, value)
    assert np.isclose(integrate(f), 2.0 * value, atol=1e-12)


def test_integrate_polynomial_exact_for_linear():
    dom = Domain((1.0, 1.0))
    f = ScalarField.from_callable(dom, 0.125, lambda x, y: 3.0 * x + y)
    assert np.isclose(integrate(f), 2.0, atol=1e-13)


def test_field_validation():
    dom = Domain((1.0,))
    with pytest.raises(DomainMismatchError):
        ScalarField(dom, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ScalarField(dom, np.array([0.0, np.nan, 1.0]))
    f = ScalarField.from_callable(dom, 0.5, lambda x: x)
    assert f.h == (0.5,)
    assert np.allclose(f.values, [0.0, 0.5, 1.0])
