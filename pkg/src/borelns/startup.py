"""Small-q representation of U from the time-domain Taylor series.

With ``v(t) = v0 + sum_{m>=1} c_m t^m`` and ``f(t) = sum_m f_m t^m`` the
Navier-Stokes equation gives

    (m+1) c_{m+1} = -nu|k|^2 c_m + rho_m,
    rho_m = -i k_j P_k[ sum_{l=0}^{m} c_{l,j} * c_{m-l} ] + f_m,   c_0 = v0,

so ``c_1 = v1``. Since the Borel transform of ``t^m`` at order n is
``q^{m/n-1} / Gamma(m/n)``, the truncated series

    U(k, q) = sum_{m=1}^{m0} d_m(k) q^{m/n-1},   d_m = c_m / Gamma(m/n),

represents U on ``[0, q_m]``, and ``rho_m / Gamma(m/n)`` plays the same role
for the right-hand side ``R = -i k_j H_j + F`` of the integral equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forcing import Forcing, as_forcing
from .spectral_field import (SpectralVectorField, WavevectorGrid, _pin_mean, from_physical,
                             project_array, to_physical)

__all__ = [
    "TaylorSeries",
    "StartupConfigError",
    "taylor_coeffs",
    "borel_startup_eval",
    "borel_startup_rhs",
    "choose_qm",
    "tensor_divergence",
]

# beyond this l1 size the recursion is cut off and a radius estimate reported
_OVERFLOW = 1e250


class StartupConfigError(ValueError):
    pass


def tensor_divergence(tensor_hat: np.ndarray, grid: WavevectorGrid) -> np.ndarray:
    """``-i k_j P_k[T_{j i}]`` for a coefficient tensor ``T[j, i]``."""
    div = -1j * np.einsum("jabc,jiabc->iabc", grid.k, tensor_hat)
    return project_array(div, grid.k, grid.ksq)


@dataclass
class TaylorSeries:
    """Taylor coefficients ``c_m`` and their Borel images ``d_m``, m = 1..m0.

    ``rho`` holds the right-hand-side coefficients and ``rho_d`` their Borel
    images ``rho_m / Gamma(m/n)``. Coefficient arrays are stacked along the
    first axis (index ``m - 1``).
    """

    grid: WavevectorGrid
    n: int
    v0: np.ndarray
    c: np.ndarray
    rho: np.ndarray
    qm: float = 0.2
    truncated: bool = False
    radius_estimate: float = math.nan
    d: np.ndarray = field(init=False)
    rho_d: np.ndarray = field(init=False)

    def __post_init__(self):
        g = self.gammas
        self.d = self.c / g[:, None, None, None, None]
        self.rho_d = self.rho / g[:, None, None, None, None]

    @property
    def m0(self) -> int:
        return self.c.shape[0]

    @property
    def gammas(self) -> np.ndarray:
        return np.array([math.gamma(m / self.n) for m in range(1, self.c.shape[0] + 1)])

    def c_field(self, m: int) -> SpectralVectorField:
        return SpectralVectorField(self.grid, self.c[m - 1], True, True)

    def d_field(self, m: int) -> SpectralVectorField:
        return SpectralVectorField(self.grid, self.d[m - 1], True, True)

    def norms(self) -> np.ndarray:
        """Rows ``(m, |c_m|_l1, |d_m|_l1)``."""
        mag = lambda a: np.sum(np.sqrt(np.sum(np.abs(a) ** 2, axis=1)), axis=(1, 2, 3))
        m = np.arange(1, self.m0 + 1)
        return np.column_stack([m, mag(self.c), mag(self.d)])

    def time_sum(self, t: float) -> np.ndarray:
        """Partial Taylor sum ``v0 + sum_m c_m t^m``."""
        powers = t ** np.arange(1, self.m0 + 1)
        return self.v0 + np.tensordot(powers, self.c, axes=1)


def taylor_coeffs(v0: SpectralVectorField, f=None, nu: float | None = None, m0: int = 8,
                  n: int = 2, qm: float = 0.2, nonlinear: bool = True) -> TaylorSeries:
    """Run the Taylor recursion for ``m0`` terms.

    ``f`` is a static field, a :class:`~borelns.forcing.Forcing`, or None.
    ``nonlinear=False`` drops the convolution (heat equation check).
    """
    if m0 < 1:
        raise ValueError("m0 must be at least 1")
    grid = v0.grid
    nu = grid.nu if nu is None else float(nu)
    forcing: Forcing = as_forcing(f)
    N, L = grid.N, grid.pad
    lam = nu * grid.ksq
    coeffs = [v0.coeffs.astype(complex)]
    phys = [to_physical(coeffs[0], N, L)]
    rho = []
    truncated, radius = False, math.nan
    for m in range(0, m0):
        r = np.zeros_like(coeffs[0])
        if nonlinear:
            tensor = np.zeros((3, 3) + phys[0].shape[1:])
            for ell in range(m + 1):
                a, b = phys[ell], phys[m - ell]
                tensor += a[:, None] * b[None, :]  # T[j, i] = c_{l,j} c_{m-l,i}
            r += tensor_divergence(from_physical(tensor, N), grid)
        fm = forcing.taylor(m)
        if fm is not None:
            r = r + fm
        r = _pin_mean(project_array(r, grid.k, grid.ksq), N)
        if m >= 1:
            rho.append(r)
        nxt = (-lam * coeffs[m] + r) / (m + 1)
        nxt = _pin_mean(nxt, N)
        size = float(np.sum(np.abs(nxt)))
        if not np.isfinite(size) or size > _OVERFLOW:
            truncated = True
            norms = [float(np.sum(np.abs(c))) for c in coeffs[1:]]
            if len(norms) >= 2 and norms[-2] > 0:
                radius = norms[-2] / norms[-1]
            break
        coeffs.append(nxt)
        phys.append(to_physical(nxt, N, L))
    if len(rho) < len(coeffs) - 1:
        # rho_{m0} needs c_0..c_{m0}, all available
        m = len(coeffs) - 1
        r = np.zeros_like(coeffs[0])
        if nonlinear:
            tensor = np.zeros((3, 3) + phys[0].shape[1:])
            for ell in range(m + 1):
                tensor += phys[ell][:, None] * phys[m - ell][None, :]
            r += tensor_divergence(from_physical(tensor, N), grid)
        fm = forcing.taylor(m)
        if fm is not None:
            r = r + fm
        rho.append(_pin_mean(project_array(r, grid.k, grid.ksq), N))
    c = np.array(coeffs[1:])
    return TaylorSeries(grid=grid, n=n, v0=coeffs[0], c=c, rho=np.array(rho[: c.shape[0]]),
                        qm=qm, truncated=truncated, radius_estimate=radius)


def _power_sum(stack: np.ndarray, q: float, n: int) -> np.ndarray:
    powers = q ** (np.arange(1, stack.shape[0] + 1) / n - 1.0)
    return np.tensordot(powers, stack, axes=1)


def borel_startup_eval(ts: TaylorSeries, q: float) -> SpectralVectorField:
    """``sum_m d_m q^{m/n-1}`` for ``0 < q <= q_m``."""
    if not 0 < q <= ts.qm * (1 + 1e-12):
        raise ValueError(f"q={q} outside the startup interval (0, {ts.qm}]")
    return SpectralVectorField(ts.grid, _power_sum(ts.d, q, ts.n), True, True)


def borel_startup_rhs(ts: TaylorSeries, q: float) -> np.ndarray:
    """Startup series of the integral-equation right-hand side R at q."""
    if not 0 < q <= ts.qm * (1 + 1e-12):
        raise ValueError(f"q={q} outside the startup interval (0, {ts.qm}]")
    return _power_sum(ts.rho_d, q, ts.n)


def choose_qm(ts: TaylorSeries, tol: float = 1e-10, cap: float = 0.2,
              floor: float = 1e-3) -> float:
    """Largest q <= cap whose last retained term is below ``tol`` of the sum (l1).

    Raises :class:`StartupConfigError` when even ``q = floor`` fails.
    """
    if ts.m0 < 4:
        raise ValueError("choose_qm needs m0 >= 4")
    l1 = lambda a: float(np.sum(np.sqrt(np.sum(np.abs(a) ** 2, axis=0))))
    last = l1(ts.d[-1])
    if last == 0.0:
        return cap
    qs = np.geomspace(1e-8, cap, 400)
    ok = np.array([last * q ** (ts.m0 / ts.n - 1.0) <= tol * l1(_power_sum(ts.d, q, ts.n))
                   for q in qs])
    if not ok[np.searchsorted(qs, floor)]:
        raise StartupConfigError(
            f"startup series already fails the {tol:g} truncation test at q={floor:g}")
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return cap
    first_bad = bad[0]
    return float(qs[first_bad - 1])
