import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kerr_exact.errors import CutoffError, ParameterError, TruncationError
from kerr_exact.exact import SteadyState, g2, mean_photon_number, select_cutoff
from kerr_exact.exact.kernel import build_kernel_series, converged_series
from kerr_exact.exact.steady_state import (
    correlation,
    cutoff_from_partials,
    density_matrix_from_series,
    normalization,
)
from kerr_exact.liouvillian import steady_state_numeric
from kerr_exact.params import SystemParams, reduce

# <n> from the truncated master equation (dense solve), frozen
ORACLE_N = {
    -0.5: 0.12114401438727113,
    0.5: 1.1659247408580662,
    1.5: 1.9305347993025388,
}


def coherent_only_oracle(params, j):
    """<a+^j a^j> for G = eta = 0 straight from 0F2 sums (no kernel involved).

    With ``x = 2f`` and ``b = -2c``::

        <a+^j a^j> = |x|^{2j} |Gamma(b)/Gamma(b+j)|^2 0F2(b+j, b*+j; 2|x|^2) / 0F2(b, b*; 2|x|^2)
    """
    rp = reduce(params)
    with mpmath.workdps(40):
        x = 2 * mpmath.mpc(rp.f)
        b = -2 * mpmath.mpc(rp.c)
        z = 2 * abs(x) ** 2
        num = mpmath.hyper([], [b + j, mpmath.conj(b) + j], z)
        den = mpmath.hyper([], [b, mpmath.conj(b)], z)
        ratio = abs(mpmath.gamma(b) / mpmath.gamma(b + j)) ** 2
        return float(abs(x) ** (2 * j) * ratio * (num / den).real)


class TestNormalization:
    def test_free_cavity(self):
        rp = reduce(SystemParams(delta=0.7, gamma=0.3, eta=0.2))
        c = rp.c
        with mpmath.workdps(30):
            expected = float(abs(mpmath.rgamma(-2 * mpmath.mpc(c))) ** 2)
        ks = converged_series(rp)
        assert normalization(ks).to_complex() == pytest.approx(expected, rel=1e-14)

    def test_stable_under_longer_series(self):
        rp = reduce(SystemParams(delta=5, f_amp=2, g_amp=3, gamma=0.1, eta=0.1))
        ks = converged_series(rp)
        longer = build_kernel_series(rp, ks.cutoff + 10).with_converged(True)
        a, b = normalization(ks), normalization(longer)
        assert abs(a.log_magnitude - b.log_magnitude) < 1e-14

    def test_unconverged_series_rejected(self):
        rp = reduce(SystemParams(delta=1, f_amp=1, gamma=0.1))
        with pytest.raises(Exception):
            normalization(build_kernel_series(rp, 20))


class TestMoments:
    def test_master_equation_fixtures(self):
        for delta, expected in ORACLE_N.items():
            p = SystemParams(delta=delta, g_amp=0.5, gamma=0.03, eta=0.03)
            assert mean_photon_number(p) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("delta,f_amp,gamma", [(0.5, 1.0, 0.2), (3.0, 2 - 1j, 0.5), (-1.0, 0.7j, 1.0)])
    def test_coherent_drive_oracle(self, delta, f_amp, gamma):
        p = SystemParams(delta=delta, f_amp=f_amp, gamma=gamma)
        s = SteadyState(p)
        assert s.mean_photon_number() == pytest.approx(coherent_only_oracle(p, 1), rel=1e-10)
        assert s.correlation(2, 2).real == pytest.approx(coherent_only_oracle(p, 2), rel=1e-10)

    def test_parity_selection(self):
        s = SteadyState(SystemParams(delta=2.0, g_amp=1 + 0.5j, gamma=0.2, eta=0.1))
        assert s.correlation(0, 1) == 0
        assert s.correlation(1, 2) == 0
        assert abs(s.correlation(0, 2)) > 0

    @given(st.integers(0, 3), st.integers(0, 3))
    @settings(max_examples=10)
    def test_hermitian_symmetry(self, i, j):
        s = SteadyState(SystemParams(delta=1.5, f_amp=0.8, g_amp=0.6j, gamma=0.3, eta=0.2))
        assert s.correlation(j, i) == pytest.approx(s.correlation(i, j).conjugate(), rel=1e-12, abs=1e-14)

    def test_g2_undefined_in_vacuum(self):
        with pytest.raises(ParameterError):
            g2(SystemParams(delta=1.0, gamma=0.1))

    def test_photon_blockade(self):
        # weak resonant drive, Kerr shift much larger than the linewidth
        s = SteadyState(SystemParams(delta=0.0, f_amp=0.01, gamma=0.1))
        assert s.g2() < 0.05
        assert s.g2() == pytest.approx(coherent_only_oracle(s.params, 2) / s.mean_photon_number() ** 2,
                                       rel=1e-10)

    def test_too_short_series(self):
        rp = reduce(SystemParams(delta=1, f_amp=3, gamma=0.1))
        ks = converged_series(rp)
        with pytest.raises(CutoffError):
            correlation(5, 5, ks.truncated(8).with_converged(True))

    def test_g_to_zero_continuity(self):
        base = SystemParams(delta=1.0, f_amp=1.5, gamma=0.2, eta=0.1)
        n0 = mean_photon_number(base)
        for g in (1e-6, 1e-9):
            assert mean_photon_number(base.replace(g_amp=g)) == pytest.approx(n0, rel=1e-5)

    def test_drive_phase_invariance_of_density(self):
        p = SystemParams(delta=3.0, f_amp=1.2, g_amp=2.0, gamma=0.2, eta=0.1)
        q = p.replace(f_amp=1.2 * np.exp(0.7j), g_amp=2.0 * np.exp(1.4j))
        assert mean_photon_number(q) == pytest.approx(mean_photon_number(p), rel=1e-12)


class TestCutoff:
    def test_vacuum(self):
        assert select_cutoff(SystemParams(delta=0.3, gamma=0.1, eta=0.1)) == 2

    def test_frozen_value(self):
        assert select_cutoff(SystemParams(delta=20, f_amp=1, g_amp=10, gamma=0.1, eta=0.1)) == 84

    def test_tighter_tolerance_never_lowers_cutoff(self):
        p = SystemParams(delta=10, f_amp=1, g_amp=5, gamma=0.1, eta=0.1)
        cuts = [select_cutoff(p, tol) for tol in (1e-3, 1e-6, 1e-9, 1e-12)]
        assert cuts == sorted(cuts)

    def test_criterion_holds_persistently(self):
        s = SteadyState(SystemParams(delta=20, f_amp=1, g_amp=10, gamma=0.1, eta=0.1))
        from kerr_exact.exact.steady_state import partial_mean_photon_numbers

        n = partial_mean_photon_numbers(s.series())
        m = s.cutoff
        for k in range(m, len(n)):
            assert abs(n[k] - n[k - 2]) <= 1e-6 * n[k]
        assert abs(n[m + 10] - n[m]) <= 1e-6 * n[m]

    def test_late_peak_is_not_missed(self):
        # flat start, then growth: a single early pass must not be accepted
        n = np.concatenate([np.full(20, 1.0), np.linspace(1, 50, 20), np.full(30, 50.0)])
        assert cutoff_from_partials(n, 1e-6) >= 40

    def test_errors(self):
        with pytest.raises(ParameterError):
            cutoff_from_partials(np.ones(30), 0)
        with pytest.raises(CutoffError):
            cutoff_from_partials(np.ones(5))


class TestDensityMatrix:
    def test_vacuum(self):
        rho = SteadyState(SystemParams(delta=0.4, gamma=0.1)).density_matrix(p_max=3)
        expected = np.zeros((4, 4))
        expected[0, 0] = 1
        np.testing.assert_allclose(rho.elements, expected, atol=1e-15)

    def test_parity_zeros(self):
        rho = SteadyState(SystemParams(delta=2.0, g_amp=1.5, gamma=0.2, eta=0.1)).density_matrix()
        p, q = np.indices(rho.elements.shape)
        assert np.all(rho.elements[(p + q) % 2 == 1] == 0)

    def test_physical(self):
        rho = SteadyState(SystemParams(delta=4.0, f_amp=1.0, g_amp=2.0, gamma=0.2, eta=0.1)).density_matrix()
        rho.check(trace_tol=1e-10)
        assert np.linalg.eigvalsh(rho.elements).min() > -1e-13

    def test_matches_master_equation(self):
        p = SystemParams(delta=1.0, f_amp=1.0, g_amp=1.0, gamma=0.3, eta=0.2)
        exact = SteadyState(p).density_matrix(p_max=30)
        numeric = steady_state_numeric(p, n_max=40, tol=1e-12)
        np.testing.assert_allclose(exact.elements, numeric.elements[:31, :31], atol=1e-6)

    def test_moments_agree_with_series(self):
        s = SteadyState(SystemParams(delta=3.0, f_amp=0.5 - 0.5j, g_amp=1.5j, gamma=0.2, eta=0.2))
        rho = s.density_matrix()
        assert rho.mean_photon_number() == pytest.approx(s.mean_photon_number(), rel=1e-9)
        assert rho.moment(0, 2) == pytest.approx(s.correlation(0, 2), rel=1e-9)

    def test_truncation_error(self):
        s = SteadyState(SystemParams(delta=8.0, g_amp=5.0, gamma=0.1, eta=0.1))
        with pytest.raises(TruncationError):
            s.density_matrix(p_max=4)

    def test_from_series_too_short(self):
        ks = converged_series(reduce(SystemParams(delta=1, f_amp=1, gamma=0.3)))
        with pytest.raises(CutoffError):
            density_matrix_from_series(ks, ks.cutoff + 5)


class TestWigner:
    def test_vacuum_gaussian(self):
        s = SteadyState(SystemParams(delta=0.4, gamma=0.1))
        for z in (0, 0.5, 0.3 - 0.8j):
            assert s.wigner(z) == pytest.approx(2 / math.pi * math.exp(-2 * abs(z) ** 2), rel=1e-14)

    def test_grid_nonnegative_and_normalized(self):
        s = SteadyState(SystemParams(delta=2.0, f_amp=1.0, g_amp=3.0, gamma=0.1, eta=0.1))
        grid = s.wigner_grid(n_points=121)
        assert grid.values.min() >= 0
        assert grid.integral() == pytest.approx(1.0, abs=1e-8)

    def test_marginal_moment(self):
        # <n> + 1/2 = integral |z|^2 W
        s = SteadyState(SystemParams(delta=2.0, f_amp=1.0, g_amp=1.0, gamma=0.3, eta=0.1))
        grid = s.wigner_grid(n_points=161)
        zz = grid.x[None, :] ** 2 + grid.y[:, None] ** 2
        second = np.trapezoid(np.trapezoid(zz * grid.values, grid.x, axis=1), grid.y)
        assert second == pytest.approx(s.mean_photon_number() + 0.5, rel=1e-7)

    def test_local_maxima_of_single_gaussian(self):
        grid = SteadyState(SystemParams(delta=0.4, gamma=0.1)).wigner_grid(extent=3, n_points=61)
        peaks = grid.local_maxima()
        assert len(peaks) == 1 and abs(peaks[0][0]) < 1e-12


@given(delta=st.floats(-3, 6), f_abs=st.floats(0, 1.5), f_arg=st.floats(-3, 3),
       g_abs=st.floats(0, 1.5), g_arg=st.floats(-3, 3),
       gamma=st.floats(0.2, 1.0), eta=st.floats(0.0, 0.5))
@settings(max_examples=12)
def test_agrees_with_master_equation(delta, f_abs, f_arg, g_abs, g_arg, gamma, eta):
    p = SystemParams(delta=delta, f_amp=f_abs * np.exp(1j * f_arg), g_amp=g_abs * np.exp(1j * g_arg),
                     gamma=gamma, eta=eta)
    numeric = steady_state_numeric(p, tol=1e-12)
    assert mean_photon_number(p) == pytest.approx(numeric.mean_photon_number(), rel=1e-7, abs=1e-12)


def _local_maxima(x, y):
    return [x[k] for k in range(1, len(y) - 1) if y[k] > y[k - 1] and y[k] > y[k + 1]]


@pytest.mark.parametrize("f_amp,g_amp", [(0, 0.1), (0, 0.2), (0, 0.3), (0.1, 0.1), (0.2, 0.2), (0.3, 0.3)])
def test_weak_drive_multiphoton_resonances(f_amp, g_amp):
    # maxima sit at delta = (n - 1)/2; without one-photon drive only even n appear
    step = 0.05
    deltas = np.round(np.arange(-1, 3 + step / 2, step), 10)
    n = [mean_photon_number(SystemParams(delta=float(d), f_amp=f_amp, g_amp=g_amp, gamma=0.03, eta=0.03))
         for d in deltas]
    peaks = _local_maxima(deltas, n)
    assert len(peaks) >= 2
    orders = [2 * d + 1 for d in peaks]
    nearest = [round(o) for o in orders]
    assert all(abs(o - k) <= 2 * step + 1e-9 for o, k in zip(orders, nearest))
    if f_amp == 0:
        assert all(k % 2 == 0 for k in nearest)
    else:
        assert any(k % 2 == 1 for k in nearest)
