"""March the discretized Borel-plane integral equation on the grid q = m delta.

At every node the equation reads

    U(k, q) = U0(k, q) + int_0^q G(q, q'; nu|k|^2) R(k, q') dq',
    R = -i k_j P_k[v0_j * U + U_j * v0 + (U_j ** U)] + F,

where ``**`` is the Laplace self-convolution in q combined with the Fourier
convolution in k, and F is the Borel transform of ``f(t) - f(0)``. On
``[0, q_m]`` both U and R come from the Taylor startup series. Beyond it the
kernel integral uses exact product-integration weights against the piecewise
linear interpolant of R, and each step is a predictor-corrector pair
(extrapolate R, solve, re-evaluate R, solve again).

The Laplace convolution at ``q = m delta`` is split into four pieces:

* ``q' in [0, a]``, ``a = min(q_m, q - q_m)``: startup series times the
  linear interpolant of the marched partner, integrated exactly against
  ``q'^{l/n-1}``;
* its mirror image ``q' in [q - a, q]``;
* ``q' in [q - q_m, q_m]`` (only when ``q < 2 q_m``): series times series via
  incomplete beta functions;
* ``q' in [q_m, q - q_m]``: trapezoid rule on the marched slices.

All products are formed pointwise on the dealiased collocation grid, so each
right-hand-side evaluation costs a single batch of forward transforms.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from . import _kernels
from .borel_kernel import KernelCache, u0_factor
from .forcing import Forcing, as_forcing
from .spectral_field import (SpectralVectorField, WavevectorGrid, _pin_mean, from_physical,
                             l1_norm, project_array, symmetrize, to_physical, v1_field)
from .startup import (TaylorSeries, borel_startup_eval, borel_startup_rhs, taylor_coeffs,
                      tensor_divergence)

__all__ = [
    "MarchConfig",
    "MarchAborted",
    "BorelTrajectory",
    "Marcher",
    "run",
    "rk2_step",
    "discrete_H",
    "discrete_norm",
    "assemble_row_weights",
    "hat_moments",
    "beta_moments",
]

log = logging.getLogger(__name__)


class MarchAborted(ArithmeticError):
    """Non-finite or exploding slice; the march cannot continue."""


@dataclass(frozen=True)
class MarchConfig:
    N: int
    nu: float
    n: int = 2
    delta: float = 0.05
    q0: float = 10.0
    qm: float = 0.2
    m0: int = 8
    quad_level: float = 1.0

    def __post_init__(self):
        if self.N < 1 or self.nu <= 0 or self.delta <= 0 or self.m0 < 1 or self.n < 1:
            raise ValueError("N, nu, delta, m0, n must be positive")
        if not self.q0 > self.qm > 0:
            raise ValueError(f"need q0 > qm > 0, got q0={self.q0}, qm={self.qm}")
        if abs(self.m_s * self.delta - self.qm) > 1e-9 * self.qm or self.m_s < 1:
            raise ValueError("qm must be a positive multiple of delta")
        if abs(self.M * self.delta - self.q0) > 1e-9 * self.q0:
            raise ValueError("q0 must be a multiple of delta")

    @property
    def m_s(self) -> int:
        return int(round(self.qm / self.delta))

    @property
    def M(self) -> int:
        return int(round(self.q0 / self.delta))

    def grid(self) -> WavevectorGrid:
        return WavevectorGrid(self.N, self.nu)


# --- closed-form convolution weights ---------------------------------------------


def hat_moments(betas, delta: float, K: int, start: int = 0) -> np.ndarray:
    """``A[l, i] = int x^{beta_l - 1} hat_i(x) dx`` over ``[start delta, K delta]``.

    Hats sit on the nodes ``i delta``, ``i = start..K``; column ``i - start``.
    """
    betas = np.asarray(betas, dtype=float)[:, None]
    j = np.arange(start, K, dtype=float)[None, :]
    a, b = j * delta, (j + 1) * delta
    i0 = (b**betas - a**betas) / betas
    i1 = (b ** (betas + 1) - a ** (betas + 1)) / (betas + 1)
    A = np.zeros((betas.shape[0], K - start + 1))
    A[:, :-1] += (b * i0 - i1) / delta
    A[:, 1:] += (i1 - a * i0) / delta
    return A


def beta_moments(betas, q: float, lo: float, hi: float) -> np.ndarray:
    """``E[l, l'] = int_lo^hi x^{beta_l - 1} (q - x)^{beta_l' - 1} dx``."""
    b = np.asarray(betas, dtype=float)
    B1, B2 = np.meshgrid(b, b, indexing="ij")
    full = sp.beta(B1, B2)
    inc = sp.betainc(B1, B2, hi / q) - sp.betainc(B1, B2, lo / q)
    return q ** (B1 + B2 - 1.0) * full * inc


# --- trajectory ---------------------------------------------------------------------


@dataclass
class BorelTrajectory:
    """Marched slices ``U(., m delta)`` for ``m = m_s..M`` plus the startup series."""

    config: MarchConfig
    v0: np.ndarray
    v1: np.ndarray
    startup: TaylorSeries
    U: np.ndarray          # (M + 1, 3, Mk, Mk, Mk); rows below m_s unused
    R: np.ndarray          # right-hand side at the same nodes
    norms: np.ndarray      # l1 norm per node, nan below m_s
    forcing: Forcing | None = None
    completed: int = -1    # last filled node

    @property
    def grid(self) -> WavevectorGrid:
        return self.config.grid()

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.config.m_s, self.completed + 1)

    @property
    def q(self) -> np.ndarray:
        return self.nodes * self.config.delta

    def slice(self, m: int) -> SpectralVectorField:
        if not self.config.m_s <= m <= self.completed:
            raise IndexError(f"node {m} not available")
        return SpectralVectorField(self.grid, self.U[m], True, True)

    def U_at(self, q: float) -> np.ndarray:
        """U at any ``0 < q <= q_end``: series on the startup interval, else linear."""
        cfg = self.config
        if q <= cfg.qm * (1 + 1e-12):
            return borel_startup_eval(self.startup, min(q, cfg.qm)).coeffs
        x = q / cfg.delta
        i = min(int(math.floor(x)), self.completed - 1)
        if x > self.completed + 1e-9:
            raise ValueError("q beyond the computed range")
        f = x - i
        return (1 - f) * self.U[i] + f * self.U[i + 1]

    def l1_norms(self) -> tuple[np.ndarray, np.ndarray]:
        ms = self.nodes
        return ms * self.config.delta, self.norms[ms]

    def write_norm_csv(self, path, alpha: float = 0.0) -> None:
        cfg = self.config
        q, nrm = self.l1_norms()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "l1_norm", "weighted_norm"])
            for qi, ni in zip(q, nrm):
                w.writerow([f"{qi:.12g}", f"{ni:.17g}",
                            f"{_weight(qi, cfg.n, alpha) * ni:.17g}"])


def _weight(q, n, alpha):
    return q ** (1.0 - 1.0 / n) * (1.0 + q * q) * np.exp(-alpha * q)


def discrete_norm(traj: BorelTrajectory, alpha: float) -> float:
    """``sup_m (m delta)^{1-1/n} (1 + m^2 delta^2) e^{-alpha m delta} |U_m|_l1``."""
    q, nrm = traj.l1_norms()
    if q.size == 0:
        raise ValueError("empty trajectory")
    return float(np.max(_weight(q, traj.config.n, alpha) * nrm))


# --- the marcher ----------------------------------------------------------------------


class Marcher:
    """Owns the state of one march; ``run`` drives it node by node."""

    def __init__(self, config: MarchConfig, v0: SpectralVectorField, f=None,
                 cache: KernelCache | None = None, ts: TaylorSeries | None = None):
        self.cfg = cfg = config
        grid = cfg.grid()
        if v0.grid.N != grid.N:
            raise ValueError("initial field and config disagree on N")
        self.grid = grid
        self.forcing = as_forcing(f)
        self.N, self.L = grid.N, grid.pad
        self.v0 = np.asarray(v0.coeffs, dtype=complex)
        f0 = self.forcing.taylor(0)
        v0f = SpectralVectorField(grid, self.v0, True, True)
        self.v1 = v1_field(v0f, SpectralVectorField(grid, f0, True, True)
                           if f0 is not None else None).coeffs
        self.ts = ts if ts is not None else taylor_coeffs(v0f, self.forcing, cfg.nu, cfg.m0,
                                                          cfg.n, cfg.qm)
        if self.ts.qm != cfg.qm:
            self.ts.qm = cfg.qm
        self.betas = np.arange(1, self.ts.m0 + 1) / cfg.n
        ksq = grid.ksq.ravel().astype(float)
        self.cache = cache if cache is not None else KernelCache(
            cfg.n, cfg.nu, cfg.delta, cfg.m_s, self.ts.m0, ksq, cfg.quad_level)
        self.lam_index = self.cache.lam_index(ksq).astype(np.int64)
        self.D = to_physical(self.ts.d, self.N, self.L)         # (m0, 3, L, L, L)
        self.v0_phys = to_physical(self.v0, self.N, self.L)
        M = cfg.M
        shape = (M + 1, 3) + grid.shape
        self.U = np.zeros(shape, dtype=complex)
        self.R = np.zeros(shape, dtype=complex)
        self.P = np.zeros((M + 1, 3) + (self.L,) * 3)
        self.norms = np.full(M + 1, np.nan)
        ms = cfg.m_s
        for m in range(1, ms + 1):
            q = m * cfg.delta
            self.R[m] = borel_startup_rhs(self.ts, q)
        self.U[ms] = borel_startup_eval(self.ts, cfg.qm).coeffs
        self.P[ms] = to_physical(self.U[ms], self.N, self.L)
        self.norms[ms] = l1_norm(SpectralVectorField(grid, self.U[ms], True, True))
        self.completed = ms
        self.timing = {"weights": 0.0, "rhs": 0.0}
        # R at q_m through the full right-hand side: exact series-times-series
        # convolution and exact forcing, rather than the truncated R series
        self.R[ms] = self.rhs(ms)

    # right-hand side ---------------------------------------------------------------

    def conv_tensor(self, m: int) -> np.ndarray:
        """Physical tensor ``int_0^q U(q') (x) U(q - q') dq'`` at ``q = m delta``."""
        cfg = self.cfg
        ms, d = cfg.m_s, cfg.delta
        q = m * d
        out = np.zeros((3, 3) + self.P.shape[2:])
        flat = out.reshape(3, 3, -1)
        K = min(ms, m - ms)
        # startup series against the marched partner, and its mirror
        A = hat_moments(self.betas, d, K)                          # (m0, K+1)
        partners = self.P[m - K:m + 1][::-1]                       # node m - i for i = 0..K
        X = np.tensordot(A, partners, axes=(1, 0))                 # (m0, 3, L, L, L)
        Dl = self.D.reshape(self.D.shape[0], 3, -1)
        Xl = X.reshape(X.shape[0], 3, -1)
        ones = np.ones(Dl.shape[0])
        _kernels.pair_sum(Dl, Xl, ones, flat)
        _kernels.pair_sum(Xl, Dl, ones, flat)
        if m < 2 * ms:
            E = beta_moments(self.betas, q, q - cfg.qm, cfg.qm)
            # sum_{l,l'} E[l,l'] D_l (x) D_l'
            Y = np.tensordot(E, Dl, axes=(1, 0))
            _kernels.pair_sum(Dl, Y, ones, flat)
        elif m - ms > ms:
            lo, hi = ms, m - ms
            w = np.full(hi - lo + 1, d)
            w[0] = w[-1] = 0.5 * d
            Pf = self.P.reshape(self.P.shape[0], 3, -1)
            _kernels.trapezoid_pairs(Pf, lo, hi, m, w, flat)
        return out

    def rhs(self, m: int) -> np.ndarray:
        """R at node m from the slices currently stored (node m included)."""
        t0 = time.perf_counter()
        T = self.conv_tensor(m)
        u, v0 = self.P[m], self.v0_phys
        T += v0[:, None] * u[None, :] + u[:, None] * v0[None, :]
        r = tensor_divergence(from_physical(T, self.N), self.grid)
        fb = self.forcing.borel(m * self.cfg.delta, self.cfg.n)
        if fb is not None:
            r = r + fb
        self.timing["rhs"] += time.perf_counter() - t0
        return _pin_mean(r, self.N)

    def H_tensor(self, m: int) -> np.ndarray:
        """``P_k[v0_j * U + U_j * v0 + U_j ** U]`` as an array ``H[j, i]``."""
        T = self.conv_tensor(m)
        u, v0 = self.P[m], self.v0_phys
        T += v0[:, None] * u[None, :] + u[:, None] * v0[None, :]
        That = from_physical(T, self.N)
        g = self.grid
        return np.stack([_pin_mean(project_array(That[j], g.k, g.ksq), self.N)
                         for j in range(3)])

    # one step ---------------------------------------------------------------------------

    def _base(self, m: int, W: np.ndarray, S: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        q = m * cfg.delta
        li = self.lam_index
        fac = u0_factor(q, self.cache.lams, cfg.n)[li]
        nk = li.size
        out = (self.v1.reshape(3, nk) * fac).astype(complex)
        # startup interval: sum_l S_l(lam) rho_d_l
        rho = self.ts.rho_d.reshape(self.ts.m0, 3, nk)
        out += np.einsum("lk,lck->ck", S[:, li], rho, optimize=True)
        hist = self.R[cfg.m_s:m].reshape(m - cfg.m_s, 3, nk)
        _kernels.history_sum(W[:-1], li, hist, out)
        return out

    def _finish(self, base: np.ndarray, wdiag: np.ndarray, r: np.ndarray) -> np.ndarray:
        nk = self.lam_index.size
        u = base + wdiag[self.lam_index] * r.reshape(3, nk)
        u = symmetrize(u.reshape((3,) + self.grid.shape))
        u = project_array(u, self.grid.k, self.grid.ksq)
        return _pin_mean(u, self.N)

    def step(self, m: int) -> np.ndarray:
        cfg = self.cfg
        if m != self.completed + 1:
            raise ValueError(f"node {m} requested but {self.completed} is the last one")
        t0 = time.perf_counter()
        W, S = self.cache.row(m)
        self.timing["weights"] += time.perf_counter() - t0
        base = self._base(m, W, S)
        wdiag = W[-1]
        # predictor: linear extrapolation of R
        if m - 2 >= 1:
            r_pred = 2.0 * self.R[m - 1] - self.R[m - 2]
        else:
            r_pred = self.R[m - 1]
        u = self._finish(base, wdiag, r_pred)
        self._store(m, u)
        r = self.rhs(m)
        # corrector, then refresh R with the corrected slice
        u = self._finish(base, wdiag, r)
        self._store(m, u)
        self.R[m] = self.rhs(m)
        nrm = float(np.sum(np.sqrt(np.sum(np.abs(u) ** 2, axis=0))))
        if not np.isfinite(nrm) or nrm > 1e200:
            raise MarchAborted(f"slice at q={m * cfg.delta:g} is not finite (l1={nrm})")
        self.norms[m] = nrm
        self.completed = m
        return u

    def _store(self, m, u):
        self.U[m] = u
        self.P[m] = to_physical(u, self.N, self.L)

    def run(self, upto: int | None = None, progress=None) -> BorelTrajectory:
        last = self.cfg.M if upto is None else upto
        for m in range(self.completed + 1, last + 1):
            self.step(m)
            if progress is not None:
                progress(m, self)
        return self.trajectory()

    def trajectory(self) -> BorelTrajectory:
        return BorelTrajectory(config=self.cfg, v0=self.v0, v1=self.v1, startup=self.ts,
                               U=self.U, R=self.R, norms=self.norms, forcing=self.forcing,
                               completed=self.completed)


def run(config: MarchConfig, v0: SpectralVectorField, f=None, cache: KernelCache | None = None,
        progress=None) -> BorelTrajectory:
    """March from ``q_m`` to ``q_0``; returns the trajectory."""
    return Marcher(config, v0, f, cache).run(progress=progress)


def rk2_step(marcher: Marcher, m: int) -> SpectralVectorField:
    """Advance ``marcher`` to node m (which must be the next node)."""
    return SpectralVectorField(marcher.grid, marcher.step(m), True, True)


def discrete_H(marcher: Marcher, m: int) -> np.ndarray:
    """``H[j, i]`` at node ``m`` from the stored slices."""
    if not marcher.cfg.m_s <= m <= marcher.completed:
        raise ValueError(f"node {m} has no history yet")
    return marcher.H_tensor(m)


def assemble_row_weights(m: int, cache: KernelCache) -> tuple[np.ndarray, np.ndarray]:
    """(hat weights over the marched interval, startup power moments) for node m.

    The last hat weight is the diagonal weight multiplying the unknown slice.
    """
    return cache.row(m)
