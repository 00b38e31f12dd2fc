"""Shared fixtures and oracles: seeded generators, random fields, small trajectories."""

import itertools

import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from borelns.marcher import MarchConfig, Marcher
from borelns.spectral_field import (SpectralVectorField, WavevectorGrid, _pin_mean,
                                    kida_initial, nonlinear_arrays, project_array,
                                    symmetrize)
from borelns.synthesis import manufactured_case

SEED = 20261016


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


def random_field(grid: WavevectorGrid, rng, solenoidal: bool = True, real: bool = True,
                 scale: float = 1.0) -> SpectralVectorField:
    """Random zero-mean field, optionally Hermitian and divergence free."""
    c = rng.standard_normal((3,) + grid.shape) + 1j * rng.standard_normal((3,) + grid.shape)
    c *= scale
    if real:
        c = symmetrize(c)
    if solenoidal:
        c = project_array(c, grid.k, grid.ksq)
    return SpectralVectorField(grid, _pin_mean(c, grid.N), real, solenoidal)


def single_mode(grid, k=(1, 2, 0), amp=(0.0, 0.0, 1.0)):
    """Real solenoidal field made of the pair +-k."""
    c = grid.zeros()
    N = grid.N
    a = np.asarray(amp, dtype=complex)
    assert abs(np.dot(a, k)) == 0
    c[(slice(None),) + tuple(N + x for x in k)] = 0.5 * a
    c[(slice(None),) + tuple(N - x for x in k)] = 0.5 * a.conj()
    return SpectralVectorField(grid, c, True, True)


def galerkin_solution(v0, t, f=None):
    """Integrate the truncated Navier-Stokes ODE to time t (DOP853)."""
    g = v0.grid
    shape = v0.coeffs.shape

    def rhs(_, y):
        u = y.view(complex).reshape(shape)
        du = -g.nu * g.ksq * u + nonlinear_arrays(u, u, g)
        if f is not None:
            du = du + f.coeffs
        return du.ravel().view(float)

    y0 = v0.coeffs.astype(complex).ravel().view(float)
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[:, -1].view(complex).reshape(shape)


@pytest.fixture(scope="session")
def kida_traj():
    """Kida flow, N = 4, nu = 0.5, marched to q0 = 1."""
    cfg = MarchConfig(N=4, nu=0.5, n=2, delta=0.05, q0=1.0, qm=0.2, m0=8)
    return Marcher(cfg, kida_initial(cfg.grid())).run()


@pytest.fixture(scope="session")
def manufactured_traj():
    """Manufactured case, N = 4, nu = 1, marched to q0 = 1."""
    cfg = MarchConfig(N=4, nu=1.0, n=2, delta=0.05, q0=1.0, qm=0.2, m0=8)
    case = manufactured_case(cfg.grid())
    return Marcher(cfg, case.v0, case.forcing).run(), case


def hankel(mu, n, which, dps=30):
    """Contour oracle on the Hankel loop around the negative axis.

    ``F = (1/2 pi i) int_H e^z z^{-1/n} exp(-mu z^{-1/n}) dz`` and
    ``G = -(1/2 pi i) int_H e^z exp(-mu z^{-1/n}) dz``: two rays at arg z = -pi
    and +pi joined by the unit circle, with the branch written out explicitly.
    """
    with mp.workdps(dps):
        mu = mp.mpf(mu)
        a = mp.mpf(1) / n

        def g(r, th):
            w = r ** (-a) * mp.expj(-a * th)
            e = mp.exp(r * mp.expj(th) - mu * w)
            return e * w if which == "F" else -e

        lo = mp.quad(lambda r: -g(r, -mp.pi) * mp.expj(-mp.pi), [1, mp.inf])
        circ = mp.quad(lambda th: g(1, th) * 1j * mp.expj(th), [-mp.pi, 0, mp.pi])
        up = mp.quad(lambda r: g(r, mp.pi) * mp.expj(mp.pi), [1, mp.inf])
        return float(((lo + circ + up) / (2j * mp.pi)).real)


def direct_convolution(a, b, N):
    """O(N^6) truncated convolution sum_{k'} a(k') b(k - k') by enumeration."""
    M = 2 * N + 1
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
    rng = range(-N, N + 1)
    for k in itertools.product(rng, repeat=3):
        acc = 0
        for kp in itertools.product(rng, repeat=3):
            d = tuple(ki - kpi for ki, kpi in zip(k, kp))
            if max(abs(x) for x in d) > N:
                continue
            acc = acc + a[(...,) + tuple(x + N for x in kp)] * b[(...,) + tuple(x + N for x in d)]
        out[(...,) + tuple(x + N for x in k)] = acc
    assert out.shape[-1] == M
    return out


# one verdict line per acceptance criterion, echoed in the terminal summary
VERDICTS: list[str] = []


def verdict(number: int, ok: bool, detail: str) -> None:
    """Record and print ``criterion <number>: PASS|FAIL  <detail>``."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
