"""Fourier fields: projection, dealiased convolution, norms and the nonlinearity."""

import itertools
import math

import numpy as np
import pytest

from borelns.io import field_bytes, field_from_bytes, read_field, write_field, write_field_csv
from borelns.spectral_field import (GridMismatch, ScalarModeField, SpectralVectorField,
                                    WavevectorGrid, convolve, convolve_arrays, hodge_project,
                                    kida_initial, l1_norm, nonlinear_rhs, project_array,
                                    to_physical, v1_field)

from conftest import direct_convolution, random_field


def single_mode(grid, k, value):
    c = grid.zeros()
    N = grid.N
    c[:, k[0] + N, k[1] + N, k[2] + N] = value
    return SpectralVectorField(grid, c, False, False)


def direct_nonlinear(u, w, grid):
    """-i k_j P_k[u_j * w] from enumerated convolutions and an explicit projector."""
    N = grid.N
    conv = np.array([[direct_convolution(u[j], w[i], N) for j in range(3)] for i in range(3)])
    div = -1j * np.einsum("jabc,ijabc->iabc", grid.k, conv)
    out = np.zeros_like(div)
    for idx in itertools.product(range(2 * N + 1), repeat=3):
        k = grid.k[(slice(None),) + idx]
        ksq = float(k @ k)
        if ksq == 0:
            continue
        P = np.eye(3) - np.outer(k, k) / ksq
        out[(slice(None),) + idx] = P @ div[(slice(None),) + idx]
    return out


class TestGrid:
    def test_mode_count(self):
        g = WavevectorGrid(3, 0.1)
        assert g.shape == (7, 7, 7)
        assert g.ksq[3, 3, 3] == 0

    @pytest.mark.parametrize("N, nu", [(0, 1.0), (2, 0.0), (2, -1.0)])
    def test_rejects_bad_parameters(self, N, nu):
        with pytest.raises(ValueError):
            WavevectorGrid(N, nu)


class TestHodge:
    def test_hand_example(self):
        g = WavevectorGrid(2)
        f = single_mode(g, (1, 0, 0), [1.0, 1.0, 0.0])
        out = hodge_project(f).coeffs[:, 3, 2, 2]
        np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-15)

    def test_parallel_mode_vanishes(self):
        g = WavevectorGrid(2)
        f = single_mode(g, (1, 2, -1), [1.0, 2.0, -1.0])
        assert np.max(np.abs(hodge_project(f).coeffs)) < 1e-15

    def test_idempotent_and_self_adjoint(self, rng):
        g = WavevectorGrid(3)
        a = random_field(g, rng, solenoidal=False)
        b = random_field(g, rng, solenoidal=False)
        pa, pb = hodge_project(a), hodge_project(b)
        np.testing.assert_allclose(hodge_project(pa).coeffs, pa.coeffs, atol=1e-13)
        lhs = np.vdot(pa.coeffs, b.coeffs)
        rhs = np.vdot(a.coeffs, pb.coeffs)
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)
        assert pa.divergence_defect() < 1e-12
        assert pa.hermitian_defect() < 1e-12


class TestConvolve:
    def test_single_modes(self):
        g = WavevectorGrid(2)
        a = ScalarModeField(g, np.zeros(g.shape, complex))
        b = ScalarModeField(g, np.zeros(g.shape, complex))
        a.values[3, 2, 2] = 2.0          # k1 = (1, 0, 0)
        b.values[2, 3, 1] = 1.5j         # k2 = (0, 1, -1)
        out = convolve(a, b).values
        expected = np.zeros(g.shape, complex)
        expected[3, 3, 1] = 3.0j
        np.testing.assert_allclose(out, expected, atol=1e-14)

    @pytest.mark.parametrize("real", [True, False])
    def test_matches_direct_sum(self, rng, real):
        g = WavevectorGrid(2)
        a = random_field(g, rng, solenoidal=False, real=real)
        b = random_field(g, rng, solenoidal=False, real=real)
        fast = convolve(a, b).coeffs
        slow = direct_convolution(a.coeffs, b.coeffs, 2)
        slow[:, 2, 2, 2] = 0.0
        assert np.max(np.abs(fast - slow)) <= 1e-12 * np.max(np.abs(slow))

    def test_banach_algebra(self, rng):
        g = WavevectorGrid(3)
        for _ in range(5):
            a = random_field(g, rng, solenoidal=False, scale=rng.uniform(0.1, 3))
            b = random_field(g, rng, solenoidal=False, scale=rng.uniform(0.1, 3))
            for i in range(3):
                ai = ScalarModeField(g, a.coeffs[i])
                bi = ScalarModeField(g, b.coeffs[i])
                assert l1_norm(convolve(ai, bi)) <= l1_norm(ai) * l1_norm(bi)

    def test_hermitian_preserved(self, rng):
        g = WavevectorGrid(3)
        out = convolve(random_field(g, rng), random_field(g, rng))
        assert out.hermitian_defect() < 1e-13
        phys = to_physical(out.coeffs, g.N, g.pad)
        assert np.isrealobj(phys)

    def test_grid_mismatch(self, rng):
        a = random_field(WavevectorGrid(2), rng)
        b = random_field(WavevectorGrid(3), rng)
        with pytest.raises(GridMismatch):
            convolve(a, b)


class TestNorms:
    def test_zero(self):
        assert l1_norm(SpectralVectorField.zeros(WavevectorGrid(2))) == 0.0

    def test_weighted_single_mode(self):
        g = WavevectorGrid(2)
        f = single_mode(g, (1, 1, 1), [1.0, 0.0, 0.0])
        assert l1_norm(f, 2) == pytest.approx(3.0, rel=1e-15)

    def test_kida_enumeration(self):
        g = WavevectorGrid(4)
        v = kida_initial(g)
        nz = np.argwhere(np.any(v.coeffs != 0, axis=0))
        total = sum(math.sqrt(sum(abs(v.coeffs[(j,) + tuple(i)]) ** 2 for j in range(3)))
                    for i in nz)
        assert l1_norm(v) == pytest.approx(total, rel=1e-14)

    def test_rejects_bad_weight(self):
        with pytest.raises(ValueError):
            l1_norm(SpectralVectorField.zeros(WavevectorGrid(2)), 4)


class TestNonlinear:
    def test_zero_partner(self, rng):
        g = WavevectorGrid(2)
        out = nonlinear_rhs(random_field(g, rng), SpectralVectorField.zeros(g))
        assert np.max(np.abs(out.coeffs)) == 0.0

    def test_matches_direct_sum(self, rng):
        g = WavevectorGrid(2)
        u, w = random_field(g, rng), random_field(g, rng)
        fast = nonlinear_rhs(u, w).coeffs
        slow = direct_nonlinear(u.coeffs, w.coeffs, g)
        assert np.max(np.abs(fast - slow)) <= 1e-12 * np.max(np.abs(slow))
        assert nonlinear_rhs(u, w).divergence_defect() < 1e-12

    def test_projection_bound(self, rng):
        g = WavevectorGrid(3)
        for _ in range(4):
            u, w = random_field(g, rng), random_field(g, rng)
            # |P_k[w_j * v]|_l1 <= 2 |w_j|_l1 |v|_l1 on each component j
            for j in range(3):
                conv = convolve_arrays(w.coeffs[j][None], u.coeffs, g.N, True)
                pc = project_array(conv, g.k, g.ksq)
                lhs = l1_norm(SpectralVectorField(g, pc, True, False))
                wj = ScalarModeField(g, w.coeffs[j])
                assert lhs <= 2.0 * l1_norm(wj) * l1_norm(u)


class TestV1:
    def test_zero_initial_field(self, rng):
        g = WavevectorGrid(2)
        f = random_field(g, rng)
        out = v1_field(SpectralVectorField.zeros(g), f)
        np.testing.assert_allclose(out.coeffs, f.coeffs, atol=0)

    def test_single_mode_pair(self):
        g = WavevectorGrid(2, nu=0.7)
        c = g.zeros()
        # k = (0, 0, 2) and -k: the self-interaction lands at |k| = 4, outside the cube
        c[:, 2, 2, 4] = [1.0, 0.5j, 0.0]
        c[:, 2, 2, 0] = np.conj(c[:, 2, 2, 4])
        v0 = SpectralVectorField(g, c, True, True)
        out = v1_field(v0).coeffs
        np.testing.assert_allclose(out, -0.7 * g.ksq * c, atol=1e-14)

    def test_kida_direct_sum(self):
        g = WavevectorGrid(3, nu=0.1)
        v0 = kida_initial(g)
        fast = v1_field(v0).coeffs
        slow = -0.1 * g.ksq * v0.coeffs + direct_nonlinear(v0.coeffs, v0.coeffs, g)
        assert np.max(np.abs(fast - slow)) < 1e-13


class TestKida:
    def test_invariants(self):
        v = kida_initial(WavevectorGrid(3))
        assert v.divergence_defect() == 0.0
        assert v.hermitian_defect() == 0.0
        assert np.all(v.mean_mode() == 0)
        # eight conjugate pairs per component, values +-1/8
        assert [np.count_nonzero(v.coeffs[j]) for j in range(3)] == [16, 16, 16]
        assert set(np.abs(v.coeffs[v.coeffs != 0]).round(15)) == {0.125}

    def test_pointwise_values(self, rng):
        g = WavevectorGrid(3)
        v = kida_initial(g)
        x = rng.uniform(0, 2 * np.pi, (5, 3))
        phase = np.exp(1j * np.einsum("iabc,pi->pabc", g.k, x))
        samples = np.einsum("jabc,pabc->pj", v.coeffs, phase).real

        def kida(x1, x2, x3):
            return math.sin(x1) * (math.cos(3 * x2) * math.cos(x3)
                                   - math.cos(x2) * math.cos(3 * x3))

        for p, (a, b, c) in enumerate(x):
            expected = [kida(a, b, c), kida(b, c, a), kida(c, a, b)]
            np.testing.assert_allclose(samples[p], expected, atol=1e-14)

    def test_zero_at_half_pi(self):
        g = WavevectorGrid(3)
        v = kida_initial(g)
        x = np.array([np.pi / 2, 0.0, 0.0])
        val = np.einsum("jabc,abc->j", v.coeffs, np.exp(1j * np.einsum("iabc,i->abc", g.k, x)))
        assert abs(val[0]) < 1e-15

    def test_needs_three_modes(self):
        with pytest.raises(ValueError):
            kida_initial(WavevectorGrid(2))


class TestSnapshot:
    def test_binary_round_trip(self, rng, tmp_path):
        g = WavevectorGrid(3, 0.25)
        f = random_field(g, rng)
        write_field(f, tmp_path / "f.bnsf")
        back = read_field(tmp_path / "f.bnsf", 0.25)
        np.testing.assert_array_equal(back.coeffs, f.coeffs)
        assert back.real and back.solenoidal

    def test_header_layout(self, rng):
        g = WavevectorGrid(2)
        raw = field_bytes(random_field(g, rng))
        assert raw[:4] == b"BNSF"
        assert np.frombuffer(raw[4:16], "<u4").tolist() == [1, 2, 3]
        assert len(raw) == 16 + 125 * 3 * 16

    def test_lexicographic_order(self):
        g = WavevectorGrid(2)
        f = single_mode(g, (-2, -2, -1), [1.0, 2.0, 3.0])
        body = np.frombuffer(field_bytes(f)[16:], "<c16")
        # k = (-2, -2, -1) is the second wavevector in lexicographic order
        np.testing.assert_array_equal(body[3:6], [1.0, 2.0, 3.0])

    def test_rejects_bad_magic(self, rng):
        raw = b"XXXX" + field_bytes(random_field(WavevectorGrid(2), rng))[4:]
        with pytest.raises(ValueError):
            field_from_bytes(raw)

    def test_csv_export(self, tmp_path):
        g = WavevectorGrid(3)
        write_field_csv(kida_initial(g), tmp_path / "k.csv")
        lines = (tmp_path / "k.csv").read_text().splitlines()
        assert lines[0] == "k1,k2,k3,re1,im1,re2,im2,re3,im3"
        assert len(lines) == 1 + 24
