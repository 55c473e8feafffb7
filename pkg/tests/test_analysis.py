import numpy as np
import pytest

from ringlab.analysis import (
    BlowupSeries,
    FitError,
    admissible_rescaled,
    classify_ring,
    compare_profiles,
    estimate_tc,
    fit_power_law,
    focusing_factor,
    heat_gap,
    heat_width,
    profile_from_function,
    rate_limit,
    rescale_profile,
    rescaled_complex,
    ring_power,
    ring_power_scaling,
)
from ringlab.grid import DomainError, EquationSpec, Family, FieldState, NoPeakError, RadialGrid
from ringlab.profile import find_admissible


def synthetic(kappa, p, tc=1.0, n=400, family=Family.NLS, sigma=3.0, d=1, noise=0.0, seed=0):
    t = tc - tc * np.logspace(0, -10, n)
    # recompute the gap from the stored times so the data are exactly on the model
    L = kappa * (tc - t) ** p
    if noise:
        L = L * (1 + noise * np.random.default_rng(seed).standard_normal(n))
    return BlowupSeries(family, sigma, d, t=t, L=L, r_max=np.zeros(n), power=np.ones(n), hamiltonian=np.zeros(n), dt=np.full(n, 1e-3))


NLS1 = EquationSpec(Family.NLS, 1, 3.0, one_dimensional=True)


@pytest.fixture(scope="module")
def admissible3():
    return find_admissible(3.0)


@pytest.fixture(scope="module")
def mismatch(admissible3):
    return compare_profiles(admissible_rescaled(admissible3), admissible_rescaled(find_admissible(2.5)))


class TestSeries:
    def test_rejects_non_increasing_time(self):
        with pytest.raises(ValueError):
            BlowupSeries(Family.NLS, 3.0, 1, t=np.array([0.0, 0.0]), L=np.ones(2))

    def test_csv_round_trip(self, tmp_path):
        s = synthetic(2.0, 0.5, n=50)
        s.write_csv(tmp_path / "s.csv")
        back = BlowupSeries.read_csv(tmp_path / "s.csv", Family.NLS, 3.0, 1)
        np.testing.assert_allclose(back.L, s.L, rtol=1e-15)
        np.testing.assert_array_equal(back.t, s.t)


class TestFocusingFactor:
    def test_unit_focusing(self):
        assert focusing_factor(1.155, EquationSpec(Family.NLS, 1, 3.0), 1.155) == 1.0

    def test_biharmonic_power_law(self):
        assert focusing_factor(1e4, EquationSpec(Family.BNLS, 1, 6.0)) == pytest.approx(1e-12, rel=1e-12)

    def test_nls_scaled_by_s0(self):
        assert focusing_factor(1.155e4, EquationSpec(Family.NLS, 1, 3.0), 1.155) == pytest.approx(1e-12, rel=1e-12)

    def test_zero_field(self):
        with pytest.raises(NoPeakError):
            focusing_factor(FieldState(np.zeros(5), NLS1), NLS1)


class TestTcAndFit:
    def test_square_root_exact(self):
        assert estimate_tc(synthetic(2.0, 0.5), 0.5) == pytest.approx(1.0, abs=1e-8)

    def test_quartic_root_exact(self):
        s = synthetic(1.0, 0.25, tc=0.5, family=Family.BNLS, sigma=6.0)
        assert estimate_tc(s, 0.25) == pytest.approx(0.5, abs=1e-8)

    def test_noisy_square_root(self):
        s = synthetic(2.0, 0.5, noise=1e-4, seed=7)
        assert estimate_tc(s, 0.5) == pytest.approx(1.0, abs=1e-4)

    def test_fit_round_trip(self):
        fit = fit_power_law(synthetic(2.0, 0.5), 1.0)
        assert abs(fit.kappa - 2.0) < 1e-9 and abs(fit.p - 0.5) < 1e-9

    def test_increasing_tail_rejected(self):
        s = synthetic(2.0, 0.5)
        grow = BlowupSeries(Family.NLS, 3.0, 1, t=s.t, L=s.L[::-1])
        with pytest.raises(FitError):
            estimate_tc(grow, 0.5)

    def test_window_past_tc(self):
        with pytest.raises(FitError):
            fit_power_law(synthetic(2.0, 0.5), 0.5)


class TestRateLimit:
    def test_closed_form(self):
        k = 1.664
        # three-point differences on geometric sampling carry an O(h^2) bias
        assert rate_limit(synthetic(k, 0.5, n=4000), 2) == pytest.approx(-k * k / 2, rel=1e-4)

    def test_quartic(self):
        k = 1.02
        assert rate_limit(synthetic(k, 0.25, n=4000), 4) == pytest.approx(-(k**4) / 4, rel=1e-4)

    def test_needs_two_decades(self):
        s = synthetic(2.0, 0.5)
        short = BlowupSeries(Family.NLS, 3.0, 1, t=s.t[:60], L=s.L[:60])
        with pytest.raises(FitError):
            rate_limit(short, 2)

    def test_order_checked(self):
        with pytest.raises(ValueError):
            rate_limit(synthetic(2.0, 0.5), 3)


class TestClassify:
    @pytest.mark.parametrize(
        "sigma,d,family,alpha,regime",
        [
            (2.0, 2, Family.NLS, 0.0, "standing"),
            (3.0, 2, Family.NLS, -1 / 3, "standing"),
            (4.0, 2, Family.BNLS, 0.0, "standing"),
            (1.5, 2, Family.NLS, 1 / 3, "shrinking"),
            (1.0, 2, Family.NLS, 1.0, "equal_rate"),
            (0.5, 2, Family.NLS, 3.0, "subcritical"),
        ],
    )
    def test_examples(self, sigma, d, family, alpha, regime):
        c = classify_ring(sigma, d, family)
        assert c.alpha == pytest.approx(alpha, abs=1e-15) and c.regime == regime

    def test_expanding_flag(self):
        assert classify_ring(3.0, 2).expanding_forbidden
        assert not classify_ring(2.0, 2).expanding_forbidden

    def test_rejects_heat_and_1d(self):
        with pytest.raises(ValueError):
            classify_ring(3.0, 2, Family.NLHE)
        with pytest.raises(DomainError):
            classify_ring(3.0, 1)


def psi_f_snapshot(L, sigma, r0=5.0, n=4001):
    # ring profile L^{-1/sigma} Q((r - r0)/L), Q = sech
    g = RadialGrid(np.linspace(0, 10, n), 2)
    z = (g.nodes - r0) / L
    v = L ** (-1 / sigma) / np.cosh(np.minimum(np.abs(z), 700))
    return FieldState(v.astype(complex), EquationSpec(Family.NLS, 2, sigma)), g


class TestRingPower:
    def test_strong_collapse_at_critical_sigma(self):
        snaps = []
        for L in (1e-1, 1e-2, 1e-3):
            st, g = psi_f_snapshot(L, 2.0, n=200001)
            snaps.append((st, g, L, 5.0))
        assert ring_power_scaling(snaps) == pytest.approx(0.0, abs=1e-3)

    def test_supercritical_exponent(self):
        snaps = []
        for L in (1e-1, 1e-2, 1e-3):
            st, g = psi_f_snapshot(L, 3.0, n=200001)
            snaps.append((st, g, L, 5.0))
        assert ring_power_scaling(snaps) == pytest.approx(1 - 2 / 3, abs=1e-3)

    def test_window_must_fit(self):
        st, g = psi_f_snapshot(1.0, 3.0)
        with pytest.raises(DomainError):
            ring_power(st, g, 2.0, 5.0)

    def test_needs_span(self):
        st, g = psi_f_snapshot(0.1, 3.0)
        with pytest.raises(FitError):
            ring_power_scaling([(st, g, 0.1, 5.0)] * 3)


class TestProfiles:
    def test_self_distance_zero(self):
        p = profile_from_function(lambda x: np.exp(-(x**2)), Family.NLS)
        assert compare_profiles(p, p) == 0.0

    def test_admissible_at_unit_focusing(self, admissible3):
        # place the admissible amplitude at r = 15 on a 1D grid
        g = RadialGrid(np.linspace(0, 30, 6001), 1)
        ref = admissible_rescaled(admissible3, span=14.9)
        amp = np.interp(g.nodes - 15, ref.rho, ref.amplitude)
        st = FieldState(amp.astype(complex), EquationSpec(Family.NLS, 1, 3.0, one_dimensional=True))
        prof = rescale_profile(st, g, st.spec, 1.0, 15.0)
        assert prof.amplitude[200] == pytest.approx(admissible3.s0, rel=1e-6)

    def test_sigma_mismatch_is_visible(self, mismatch):
        assert mismatch > 0.05

    @pytest.mark.xfail(strict=True, reason="the sigma 3 and 2.5 amplitudes differ by at most 0.0987")
    def test_sigma_mismatch_exceeds_tenth(self, mismatch):
        assert mismatch > 0.1

    def test_peak_centred(self):
        g = RadialGrid(np.linspace(0, 10, 2001), 2)
        spec = EquationSpec(Family.NLS, 2, 3.0)
        st = FieldState(np.exp(-((g.nodes - 4) ** 2) / 0.01).astype(complex), spec)
        prof = rescale_profile(st, g, spec, 0.1, 4.0)
        assert np.argmax(prof.amplitude) == 200
        np.testing.assert_allclose(prof.amplitude, prof.amplitude[::-1], rtol=1e-6, atol=1e-9)

    def test_window_outside_domain(self):
        g = RadialGrid(np.linspace(1, 10, 200), 2)
        spec = EquationSpec(Family.NLS, 2, 3.0)
        st = FieldState(np.ones(200, dtype=complex), spec)
        with pytest.raises(DomainError):
            rescale_profile(st, g, spec, 1.0, 5.0)

    def test_heat_scales(self):
        assert heat_gap(np.sqrt(6e-4), 3.0) == pytest.approx(1e-4)
        assert heat_width(1.0, 1.0 - 1e-4, 3.0) == pytest.approx(np.sqrt(2 * (7 / 3) * 1e-4 * np.log(1e4)))
        with pytest.raises(DomainError):
            heat_width(1.0, 1.0, 3.0)


def test_rescaled_complex_phase_and_scale():
    g = RadialGrid(np.linspace(0, 10, 4001), 1)
    spec = EquationSpec(Family.BNLS, 1, 6.0, one_dimensional=True)
    L = 0.1
    v = L ** (-1 / 3) * np.exp(-((g.nodes / L) ** 2)) * np.exp(2.0j)
    xi, b = rescaled_complex(FieldState(v, spec), g, spec, L, 0.0, span=5.0, step=0.25)
    assert xi[1] == 0.25 and xi[-1] == 5.0
    np.testing.assert_allclose(b, np.exp(-(xi**2)), atol=1e-6)
