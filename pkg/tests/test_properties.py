import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ringlab.analysis import BlowupSeries, classify_ring, fit_power_law
from ringlab.grid import EquationSpec, Family, FieldState, RadialGrid, radial_laplacian, weighted_power
from ringlab.regrid import equidistribute, scaled_cell_integrals, transfer_field

NLS2 = EquationSpec(Family.NLS, 2, 3.0)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def grids(draw, min_n=12, max_n=60):
    n = draw(st.integers(min_n, max_n))
    gaps = draw(arrays(float, n - 1, elements=st.floats(0.2, 1.0)))
    r_outer = draw(st.floats(1.0, 30.0))
    d = draw(st.integers(1, 3))
    x = np.r_[0, np.cumsum(gaps)]
    return RadialGrid(r_outer * x / x[-1], d)


@settings(max_examples=40, deadline=None)
@given(grids(), st.data())
def test_laplacian_is_linear(g, data):
    n = len(g)
    f = data.draw(arrays(float, n, elements=finite))
    h = data.draw(arrays(float, n, elements=finite))
    a, b = data.draw(finite), data.draw(finite)
    lhs = radial_laplacian(FieldState(a * f + 1j * b * h, NLS2), g).values
    rhs = a * radial_laplacian(FieldState(f, NLS2), g).values + 1j * b * radial_laplacian(FieldState(h, NLS2), g).values
    scale = 1 + np.max(np.abs(lhs)) + np.max(np.abs(rhs))
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * scale


@settings(max_examples=60, deadline=None)
@given(grids())
def test_weights_sum_to_measure(g):
    assert np.all(g.weights > 0)
    assert np.isclose(g.weights.sum(), g.nodes[-1] ** g.d / g.d, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(grids(), st.data())
def test_power_is_nonnegative_and_quadratic(g, data):
    v = data.draw(arrays(complex, len(g), elements=st.complex_numbers(max_magnitude=5, allow_nan=False)))
    c = data.draw(st.floats(0.1, 3))
    p = weighted_power(FieldState(v, NLS2), g)
    assert p >= 0
    assert np.isclose(weighted_power(FieldState(c * v, NLS2), g), c * c * p, rtol=1e-12, atol=1e-300)


monitors = arrays(float, st.integers(20, 200), elements=st.floats(0.05, 50))


@settings(max_examples=40, deadline=None)
@given(monitors, st.integers(10, 120), st.floats(0, 5), st.floats(0.5, 20))
def test_equidistribution_endpoints_and_spread(m, n, a, length):
    x = np.linspace(a, a + length, m.size)
    g = equidistribute(m, x, n, window=None)
    assert g.nodes[0] == x[0] and g.nodes[-1] == x[-1]
    assert np.all(np.diff(g.nodes) > 0)
    cells = scaled_cell_integrals(x, m, g.nodes)
    assert (cells.max() - cells.min()) / cells.mean() < 1e-6


@settings(max_examples=40, deadline=None)
@given(grids(min_n=20), grids(min_n=20), st.data())
def test_transfer_never_overshoots(old, new, data):
    new = RadialGrid(new.nodes * old.nodes[-1] / new.nodes[-1], new.d)
    v = data.draw(arrays(float, len(old), elements=st.floats(-3, 3)))
    ph = data.draw(arrays(float, len(old), elements=st.floats(0, 6.3)))
    out = transfer_field(FieldState(v * np.exp(1j * ph), NLS2), old, new)
    assert np.max(np.abs(out.values)) <= np.max(np.abs(v)) * (1 + 1e-12) + 1e-300
    heat = transfer_field(FieldState(np.abs(v), EquationSpec(Family.NLHE, 2, 3.0)), old, new)
    assert heat.values.min() >= 0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 20), st.integers(2, 5), st.sampled_from([Family.NLS, Family.BNLS]))
def test_classification_is_continuous_in_sigma(sigma, d, family):
    a = classify_ring(sigma, d, family).alpha
    b = classify_ring(sigma * (1 + 1e-9), d, family).alpha
    assert abs(a - b) <= 1e-7 * (1 + abs(a))
    crit = 2.0 if family is Family.NLS else 4.0
    assert np.sign(a) == np.sign(crit - sigma) or a == 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5), st.floats(0.2, 0.6), st.floats(0.1, 10))
def test_fit_round_trip(kappa, p, tc):
    t = tc - tc * np.logspace(0, -8, 200)
    L = kappa * (tc - t) ** p
    s = BlowupSeries(Family.NLS, 3.0, 1, t=t, L=L)
    fit = fit_power_law(s, tc)
    assert abs(fit.kappa - kappa) <= 1e-9 * max(1, kappa) and abs(fit.p - p) <= 1e-9
