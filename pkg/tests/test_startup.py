"""Taylor recursion, startup Borel series and the choice of q_m."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from borelns.forcing import RationalForcing
from borelns.spectral_field import SpectralVectorField, WavevectorGrid, kida_initial, v1_field
from borelns.startup import (StartupConfigError, TaylorSeries, borel_startup_eval,
                             borel_startup_rhs, choose_qm, taylor_coeffs)

from conftest import galerkin_solution, random_field, single_mode


@pytest.fixture(scope="module")
def kida_series():
    grid = WavevectorGrid(4, 0.5)
    return taylor_coeffs(kida_initial(grid), m0=8)


class TestRecursion:
    def test_first_coefficient_is_v1(self, rng):
        grid = WavevectorGrid(3, 0.3)
        v0 = random_field(grid, rng, scale=0.2)
        f = random_field(grid, rng, scale=0.1)
        ts = taylor_coeffs(v0, f, m0=3)
        np.testing.assert_allclose(ts.c[0], v1_field(v0, f).coeffs, atol=1e-14)

    def test_borel_images(self, kida_series):
        g = np.array([math.gamma(m / 2) for m in range(1, 9)])
        np.testing.assert_allclose(kida_series.d * g[:, None, None, None, None],
                                   kida_series.c, rtol=1e-14, atol=1e-300)

    def test_heat_equation(self, rng):
        grid = WavevectorGrid(3, 0.7)
        v0 = random_field(grid, rng)
        ts = taylor_coeffs(v0, m0=6, nonlinear=False)
        lam = grid.nu * grid.ksq
        for m in range(1, 7):
            np.testing.assert_allclose(ts.c[m - 1], (-lam) ** m / math.factorial(m) * v0.coeffs,
                                       rtol=1e-12, atol=1e-15)

    def test_single_mode_forcing(self):
        # a single Fourier pair has no self-interaction
        grid = WavevectorGrid(3, 0.4)
        f = single_mode(grid)
        ts = taylor_coeffs(SpectralVectorField.zeros(grid), f, m0=5)
        lam = 0.4 * 5
        for m in range(1, 6):
            np.testing.assert_allclose(ts.c[m - 1],
                                       (-lam) ** (m - 1) / math.factorial(m) * f.coeffs,
                                       atol=1e-15)

    def test_time_sum_matches_ode(self, kida_series):
        t = 0.02
        ref = galerkin_solution(SpectralVectorField(kida_series.grid, kida_series.v0, True, True),
                                t)
        err = np.abs(kida_series.time_sum(t) - ref).max()
        assert err <= 1e-10 * np.abs(ref).max()

    def test_time_dependent_forcing(self, rng):
        grid = WavevectorGrid(2, 1.0)
        C = random_field(grid, rng, scale=0.3)
        f = RationalForcing(((1, C),))
        ts = taylor_coeffs(SpectralVectorField.zeros(grid), f, m0=4, nonlinear=False)
        # heat equation with f = C/(1+t): c1 = C, 2 c2 = -lam C - C
        lam = grid.ksq
        np.testing.assert_allclose(ts.c[1], 0.5 * (-lam - 1.0) * C.coeffs, atol=1e-15)

    def test_single_term(self, kida_series):
        ts = taylor_coeffs(kida_initial(kida_series.grid), m0=1)
        assert ts.c.shape[0] == 1 and ts.rho.shape[0] == 1
        np.testing.assert_array_equal(ts.c[0], kida_series.c[0])

    def test_rejects_zero_terms(self, kida_series):
        with pytest.raises(ValueError):
            taylor_coeffs(kida_initial(kida_series.grid), m0=0)

    def test_coefficients_real_and_solenoidal(self, kida_series):
        for m in range(1, kida_series.m0 + 1):
            f = kida_series.c_field(m)
            assert f.hermitian_defect() <= 1e-14 * max(1.0, np.abs(f.coeffs).max())
            assert f.divergence_defect() <= 1e-12 * max(1.0, np.abs(f.coeffs).max())

    def test_rhs_coefficients_close_recursion(self, kida_series):
        # (m+1) c_{m+1} = -lam c_m + rho_m
        lam = kida_series.grid.nu * kida_series.grid.ksq
        for m in range(1, kida_series.m0):
            lhs = (m + 1) * kida_series.c[m]
            rhs = -lam * kida_series.c[m - 1] + kida_series.rho[m - 1]
            np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(lhs).max())

    def test_overflow_truncates(self, rng):
        grid = WavevectorGrid(2, 0.01)
        v0 = random_field(grid, rng, scale=1e30)
        ts = taylor_coeffs(v0, m0=40)
        assert ts.truncated and ts.m0 < 40
        assert np.isfinite(ts.radius_estimate)


class TestBorelSeries:
    def test_eval_power_sum(self, kida_series):
        q = 0.13
        u = borel_startup_eval(kida_series, q).coeffs
        ref = sum(kida_series.d[m - 1] * q ** (m / 2 - 1) for m in range(1, 9))
        np.testing.assert_allclose(u, ref, rtol=1e-13, atol=1e-16)

    def test_laplace_consistency(self, kida_series):
        # int_0^qm U(q) exp(-q/t^2) dq reproduces the Taylor sum; the tail is e^{-80}
        t = 0.05
        ts = kida_series
        N = ts.grid.N
        idx = (0, N + 1, N + 1, N + 1)
        # q = s^2 absorbs the q^{-1/2} endpoint
        val = quad(lambda s: 2 * s * borel_startup_eval(ts, s * s).coeffs[idx].real
                   * math.exp(-s * s / t**2), 0.0, math.sqrt(ts.qm), epsabs=1e-16,
                   epsrel=1e-13, limit=200)[0]
        ref = (ts.time_sum(t) - ts.v0)[idx].real
        assert val == pytest.approx(ref, rel=1e-10)

    def test_rhs_series(self, kida_series):
        q = 0.05
        r = borel_startup_rhs(kida_series, q)
        ref = sum(kida_series.rho_d[m - 1] * q ** (m / 2 - 1) for m in range(1, 9))
        np.testing.assert_allclose(r, ref, rtol=1e-13, atol=1e-16)

    @pytest.mark.parametrize("q", [0.0, 0.25, -1.0])
    def test_outside_interval(self, kida_series, q):
        with pytest.raises(ValueError):
            borel_startup_eval(kida_series, q)
        with pytest.raises(ValueError):
            borel_startup_rhs(kida_series, q)


class TestChooseQm:
    def test_cap_when_series_terminates(self, rng):
        grid = WavevectorGrid(2, 1.0)
        ts = taylor_coeffs(SpectralVectorField.zeros(grid), single_mode(grid), m0=4,
                           nonlinear=False)
        zeroed = TaylorSeries(grid, 2, ts.v0, np.concatenate([ts.c[:3], 0 * ts.c[3:]]),
                              ts.rho)
        assert choose_qm(zeroed, cap=0.2) == 0.2

    def test_within_cap(self, kida_series):
        qm = choose_qm(kida_series, tol=1e-4, cap=0.2)
        assert 1e-3 <= qm < 0.2

    def test_tolerance_monotone(self, kida_series):
        assert choose_qm(kida_series, tol=1e-6) < choose_qm(kida_series, tol=1e-4)

    def test_refuses_at_floor(self, kida_series):
        with pytest.raises(StartupConfigError):
            choose_qm(kida_series, tol=1e-10)

    def test_needs_four_terms(self, kida_series):
        ts = taylor_coeffs(kida_initial(kida_series.grid), m0=3)
        with pytest.raises(ValueError):
            choose_qm(ts)
