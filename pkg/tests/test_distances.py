import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from comploc.distances import histogram_l1, w1_atoms_vs_density
from comploc.grids import Domain, ScalarField
from comploc.limit import DensityMeasure

UNIT1 = Domain.unit_cube(1)
UNIT2 = Domain.unit_cube(2)


def uniform_density(h=1e-3):
    return DensityMeasure(ScalarField.constant(UNIT1, h, 1.0))


@given(st.integers(1, 200))
@settings(max_examples=40, deadline=None)
def test_w1_equal_spacing_closed_form(n):
    atoms = (np.arange(n) + 0.5) / n
    # closed form for n mid-cell atoms against the uniform density: 1/(4n)
    assert abs(w1_atoms_vs_density(atoms, uniform_density()) - 1 / (4 * n)) < 1e-9


def test_w1_single_atom_at_half():
    # |x - 1/2| CDF gap integrates to 1/4
    d = w1_atoms_vs_density(np.array([0.5]), uniform_density())
    assert abs(d - 0.25) < 1e-9


@given(st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=25))
@settings(max_examples=50, deadline=None)
def test_w1_matches_dense_numeric_oracle(atom_list):
    atoms = np.array(atom_list)
    dens = uniform_density(h=1e-2)
    got = w1_atoms_vs_density(atoms, dens)
    # oracle: midpoint quadrature of |F1 - F2| on a very fine grid
    xs = np.linspace(0, 1, 200001)[:-1] + 0.5 / 200000
    f1 = np.searchsorted(np.sort(atoms), xs, side="right") / atoms.size
    f2 = xs  # uniform CDF
    oracle = np.mean(np.abs(f1 - f2))
    assert abs(got - oracle) < 2e-5


def test_histogram_l1_same_measure_small():
    rng = np.random.default_rng(0)
    atoms = rng.random((4000, 2))
    dens = DensityMeasure(ScalarField.constant(UNIT2, 1.0 / 64, 1.0))
    d = histogram_l1(atoms, dens, nbins=4)
    assert d < 0.1  # sampling noise only


def test_histogram_l1_disjoint_measures():
    atoms = np.full((100, 2), 0.05)  # all mass in one corner bin
    dens = DensityMeasure(ScalarField.constant(UNIT2, 1.0 / 64, 1.0))
    d = histogram_l1(atoms, dens, nbins=2)
    # one quarter holds everything vs uniform quarters: L1 = 2*(1 - 1/4)
    assert abs(d - 1.5) < 0.05
