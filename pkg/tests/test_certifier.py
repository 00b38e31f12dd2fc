"""Certificates, tail functionals and the comparison times."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from borelns.borel_kernel import U0_term, b0_bound, b0_sample_pairs
from borelns.certifier import (NOT_A_PROOF, Certificate, CertificateRefused, CmTable,
                               CmTableMissing, _exp_linear_weights, _lattice_zeta,
                               calibrate_cm_table, certify, classical_time, decay_fit, energy,
                               kernel_sups, lattice_cm_table, leray_Tc, refined_condition,
                               rough_alpha, sample_c1, sample_C2, shipped_cm_table,
                               solve_alpha, truncate, u_s_tail, weighted_l1_integral)
from borelns.marcher import MarchConfig, Marcher, run
from borelns.spectral_field import (SpectralVectorField, WavevectorGrid, kida_initial,
                                    l1_norm, v1_field)

from conftest import single_mode

# constants of the n = 2 reference certificate
B_REF, EPS_REF, EPS1_REF, ALPHA0_REF = 0.0, 1.1403, 13.6921, 30.0


class TestSolveAlpha:
    def test_reference_values(self):
        alpha, T = solve_alpha(B_REF, EPS_REF, EPS1_REF, 2, ALPHA0_REF)
        assert alpha == pytest.approx(32.7564, abs=1e-3)
        assert T == pytest.approx(0.1747, abs=1e-4)

    def test_exponent_is_three_quarters_for_n2(self):
        alpha, _ = solve_alpha(0.0, 0.0, 40.0, 2, 1.0, margin=0.0)
        assert alpha ** 0.75 == pytest.approx(40.0, rel=1e-14)

    def test_floor_at_alpha0(self):
        alpha, T = solve_alpha(0.0, 0.0, 0.0, 2, 30.0, margin=0.0)
        assert alpha == 30.0 and T == 30.0**-0.5

    @pytest.mark.parametrize("which", [0, 1, 2])
    def test_monotone_in_inputs(self, which):
        base = [0.5, 1.2, 20.0]
        lo = solve_alpha(*base, 2, 1.0)[0]
        base[which] *= 2.0
        assert solve_alpha(*base, 2, 1.0)[0] > lo

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            solve_alpha(-1.0, 1.0, 1.0, 2, 30.0)

    def test_gamma_three_quarters(self):
        assert math.gamma(0.75) == pytest.approx(1.225416702, abs=1e-9)


class TestRefinedCondition:
    def test_arithmetic(self):
        c_g, c_s, a0, q0, e1 = 0.7, 1.2, 30.0, 1.0, 20.0
        r = refined_condition(c_g, c_s, a0, q0, e1, 2)
        up = quad(lambda x: x ** (-0.25) * math.exp(-x), a0 * q0, math.inf)[0]
        ref = e1 + 2 * math.sqrt(2 * math.gamma(0.75) * up * c_g * c_s) * q0 ** -0.25
        assert r.rhs == pytest.approx(ref, rel=1e-10)
        assert math.isnan(r.alpha_direct) and r.alpha == r.alpha_refined

    def test_vanishing_tail(self):
        r = refined_condition(0.7, 0.0, 30.0, 1.0, 20.0, 2, margin=0.0)
        assert r.alpha == pytest.approx(max(30.0, 20.0 ** (4 / 3)))

    def test_picks_smaller(self):
        r = refined_condition(0.7, 1e6, 30.0, 1.0, 20.0, 2, b=0.0, epsilon=1.0)
        assert r.alpha == r.alpha_direct < r.alpha_refined


class TestCertificate:
    def make(self):
        alpha, T = solve_alpha(B_REF, EPS_REF, EPS1_REF, 2, ALPHA0_REF)
        return Certificate(q0=10.0, alpha0=ALPHA0_REF, n=2, b=B_REF, epsilon=EPS_REF,
                           epsilon1=EPS1_REF, alpha_star=alpha, T=T, caveats=["x", "y"])

    def test_verifies(self):
        assert self.make().verify()

    def test_keyvalue_round_trip(self):
        c = self.make()
        d = Certificate.from_keyvalue(c.to_keyvalue())
        assert d.to_keyvalue() == c.to_keyvalue() and d.caveats == ["x", "y"]

    def test_tampered_refused(self):
        text = self.make().to_keyvalue()
        lines = [("alpha_star = 31.0" if ln.startswith("alpha_star") else ln)
                 for ln in text.splitlines()]
        with pytest.raises(CertificateRefused):
            Certificate.from_keyvalue("\n".join(lines))

    def test_report_flags_caveats(self):
        rep = self.make().report()
        assert NOT_A_PROOF in rep and "(0, 0.174724)" in rep


class TestLerayTime:
    def test_unit_values(self):
        Tc, Tca = leray_Tc(1.0, 1.0, 1.0)
        assert Tc == pytest.approx(256 * (1 + math.sqrt(2)) ** 2 * 9 / math.sqrt(3), rel=1e-12)
        assert Tca == Tc

    def test_linear_in_energy(self):
        a = leray_Tc(1.0, 0.3, 2.0)[0]
        assert leray_Tc(3.5, 0.3, 2.0)[0] == pytest.approx(3.5 * a, rel=1e-14)

    def test_sector_grows(self):
        Tc, Tca = leray_Tc(1.0, 0.5, 1.0, 0.3)
        assert Tca > Tc

    def test_rejects(self):
        with pytest.raises(ValueError):
            leray_Tc(1.0, 0.0, 1.0)

    def test_energy_single_mode(self):
        grid = WavevectorGrid(3, 1.0)
        f = single_mode(grid)
        # u = cos(k.x) e3 has mean square 1/2
        assert energy(f) == pytest.approx(0.5 * 0.5 * (2 * math.pi) ** 3, rel=1e-14)


class TestDecayFit:
    def test_synthetic(self):
        q = np.linspace(5.0, 10.0, 101)
        nrm = 3.0 * np.exp(-0.42 * q ** (1 / 3))
        slope, icpt = decay_fit((q, nrm, 2), (5.0, 10.0))
        assert slope == pytest.approx(-0.42, abs=1e-10)
        assert icpt == pytest.approx(math.log(3.0), abs=1e-10)

    def test_refuses_growth(self):
        q = np.linspace(5.0, 10.0, 11)
        with pytest.raises(ValueError):
            decay_fit((q, np.exp(q), 2), (5.0, 10.0))

    def test_refuses_short_window(self):
        q = np.linspace(5.0, 10.0, 11)
        with pytest.raises(ValueError):
            decay_fit((q, np.exp(-q), 2), (5.0, 5.6))

    def test_from_trajectory(self, kida_traj):
        slope, _ = decay_fit(kida_traj, (0.5, 1.0))
        assert slope < 0


class TestClassicalTime:
    def test_needs_table(self):
        with pytest.raises(CmTableMissing):
            classical_time(kida_initial(WavevectorGrid(4, 1.0)), None)

    def test_scaling(self):
        grid = WavevectorGrid(4, 1.0)
        v0 = kida_initial(grid)
        t1, m1 = classical_time(v0, shipped_cm_table())
        t2, m2 = classical_time(v0 * 2.0, shipped_cm_table())
        assert t2 == pytest.approx(t1 / 2, rel=1e-14) and m1 == m2

    def test_lattice_sum(self):
        # brute force over a larger cube with the same continuum tail
        p, R = 6.0, 70
        r = np.arange(-R, R + 1)
        ksq = (r[:, None, None] ** 2 + r[None, :, None] ** 2 + r[None, None, :] ** 2).ravel()
        inside = ksq[(ksq > 0) & (ksq <= R * R)].astype(float)
        reff = (3.0 * (inside.size + 1) / (4.0 * math.pi)) ** (1 / 3)
        ref = np.sum(inside ** (-p / 2)) + 4 * math.pi * reff ** (3 - p) / (p - 3)
        assert _lattice_zeta(p) == pytest.approx(ref, rel=1e-6)

    def test_shipped_table_is_scaled_lattice(self):
        s, lat = shipped_cm_table(), lattice_cm_table()
        np.testing.assert_allclose(s.m, lat.m, atol=1e-6)
        ratio = s.c / lat.c
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)

    def test_calibration_hits_target(self):
        v0 = kida_initial(WavevectorGrid(4, 1.0))
        tab = calibrate_cm_table(v0, 0.02)
        assert classical_time(v0, tab)[0] == pytest.approx(0.02, rel=1e-12)

    def test_table_text_round_trip(self):
        t = lattice_cm_table(m_grid=[2.6, 3.0, 4.0])
        u = CmTable.from_text("# comment\n" + t.to_text())
        np.testing.assert_allclose(u.c, t.c, rtol=1e-15)

    def test_needs_m_above_five_halves(self):
        with pytest.raises(ValueError):
            lattice_cm_table(m_grid=[2.5, 3.0])


class TestTail:
    def test_single_mode_tail_is_u0(self):
        cfg = MarchConfig(N=3, nu=0.5, delta=0.05, q0=1.0)
        traj = run(cfg, single_mode(cfg.grid()))
        v1 = SpectralVectorField(cfg.grid(), traj.v1, True, True)
        for q in (1.05, 1.5, 7.0):
            u, _ = u_s_tail(traj, q)
            ref = U0_term(v1, q).coeffs
            assert np.abs(u.coeffs - ref).max() <= 1e-9 * np.abs(ref).max()

    def test_continuity_at_q0(self):
        cfg = MarchConfig(N=4, nu=0.5, delta=0.05, q0=1.05)
        full = Marcher(cfg, kida_initial(cfg.grid())).run()
        short = truncate(full, 1.0)
        u, nrm = u_s_tail(short, 1.05)
        # the remainder is an integral over one step beyond q0
        assert np.abs(u.coeffs - full.U[cfg.M]).max() <= 0.02 * np.abs(full.U[cfg.M]).max()
        assert nrm == pytest.approx(full.norms[cfg.M], rel=0.02)

    def test_evaluation_domain(self, kida_traj):
        with pytest.raises(ValueError):
            u_s_tail(kida_traj, 0.9)
        with pytest.raises(ValueError):
            u_s_tail(kida_traj, 1.07)

    def test_truncate_beyond_range(self, kida_traj):
        with pytest.raises(ValueError):
            truncate(kida_traj, 2.0)

    def test_exp_linear_weights(self):
        q = np.linspace(0.2, 1.0, 9)
        w = _exp_linear_weights(q, 3.0)
        p = 2.0 + 5.0 * q
        ref = quad(lambda x: math.exp(-3 * x) * (2 + 5 * x), 0.2, 1.0)[0]
        assert w @ p == pytest.approx(ref, rel=1e-13)

    def test_weighted_integral_decreases(self, kida_traj):
        assert weighted_l1_integral(kida_traj, 30.0) < weighted_l1_integral(kida_traj, 5.0)


class TestCertify:
    def test_kida(self, kida_traj):
        c = certify(kida_traj, 30.0)
        assert c.verify() and c.alpha_star >= 30.0
        assert c.T == pytest.approx(c.alpha_star ** -0.5)
        assert len(c.caveats) == 3

    def test_refuses_time_dependent_forcing(self, manufactured_traj):
        traj, _ = manufactured_traj
        with pytest.raises(CertificateRefused):
            certify(traj)

    def test_kernel_sups_match_b0(self):
        ksq = np.array([1.0, 2.0, 3.0])
        s = kernel_sups(ksq, 1.0, 0.5, 2)
        ref = b0_bound(ksq, b0_sample_pairs(1.0, 4.0), 0.5, 2)
        np.testing.assert_allclose(s.B0, ref, rtol=1e-15)
        assert s.sup_kB0 == pytest.approx(np.max(np.sqrt(ksq) * ref))


class TestRoughAlpha:
    def test_bisection_contract(self):
        grid = WavevectorGrid(3, 0.5)
        v0 = kida_initial(grid)
        C2, c1 = 0.5, sample_c1(2)
        alpha = rough_alpha(v0, None, 0.5, 2, C2, c1)
        v0n, v1n = l1_norm(v0), l1_norm(v1_field(v0))

        def lhs(a):
            return (C2 / math.sqrt(0.5) * math.gamma(0.25) * a ** -0.25
                    * (4 * v0n + 4 * c1 * math.gamma(0.5) * a ** -0.5 * v1n))

        assert lhs(alpha) < 1.0 <= lhs(alpha * (1 - 1e-8))

    def test_c1_is_f_at_zero(self):
        assert sample_c1(2) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-14)

    def test_sampled_c2_positive(self):
        assert 0 < sample_C2([1.0, 2.0], 1.0, 2, q_values=(1.0,), n_d=10) < 1.0
