"""Back from the Borel plane: Laplace resummation and the manufactured test.

The velocity is ``v(k, t) = v0(k) + int_0^inf U(k, q) exp(-q / t^n) dq``. With
``x = t^{-n}`` the integral splits into

* ``[0, q_m]``: the startup series, integrated exactly,
  ``int_0^{q_m} d_m q^{m/n-1} e^{-xq} dq = c_m t^m P(m/n, x q_m)`` with P the
  regularized lower incomplete gamma function;
* ``[q_m, q0]``: the marched slices, piecewise linear in q, integrated
  exactly against the exponential;
* ``[q0, inf)``: a closure that freezes the shape of ``U(., q0)`` and lets
  its size follow an exponential fitted to the trajectory tail.

The manufactured case takes the Kida field w and the exact solution
``v = w / (1 + t)``, whose forcing ``A / (1 + t) + B / (1 + t)^2`` is
rational in t. Its Borel image is ``U(k, q) = w(k) g_1(q)`` with g_1 the
Borel transform of ``(1 + t)^{-1} - 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy import special as sp

from .certifier import _exp_linear_weights
from .forcing import RationalForcing, rational_borel
from .marcher import BorelTrajectory, MarchConfig, Marcher
from .spectral_field import (SpectralVectorField, WavevectorGrid, kida_initial,
                             nonlinear_arrays, to_physical)

__all__ = [
    "LaplaceEvaluator",
    "InadmissibleTime",
    "laplace_eval",
    "physical_field",
    "ManufacturedCase",
    "manufactured_case",
    "borel_reference",
    "convergence_study",
    "ConvergenceRow",
    "write_convergence_csv",
    "format_convergence_table",
]


class InadmissibleTime(ValueError):
    pass


# --- Laplace resummation --------------------------------------------------------------


@dataclass
class LaplaceEvaluator:
    """Resums one trajectory at any admissible t.

    ``tail_model = (c1, c2)`` fits ``|U(., q)|_l1 ~ c1 exp(-c2 q)`` over the
    last ``tail_fraction`` of the nodes; ``c2 < 0`` means the trajectory
    still grows and only ``t^{-n} > -c2`` is admissible.
    """

    traj: BorelTrajectory
    tail_fraction: float = 0.25

    def __post_init__(self):
        q, nrm = self.traj.l1_norms()
        if self.traj.completed < self.traj.config.M:
            raise ValueError("trajectory does not cover [0, q0]")
        self.n = self.traj.config.n
        start = int(len(q) * (1.0 - self.tail_fraction))
        qq, nn = q[start:], nrm[start:]
        pos = nn > 0
        if np.count_nonzero(pos) >= 2:
            slope, icpt = np.polyfit(qq[pos], np.log(nn[pos]), 1)
            self.tail_model = (float(np.exp(icpt)), float(-slope))
        else:
            self.tail_model = (0.0, 0.0)
        cfg = self.traj.config
        nodes = np.arange(cfg.m_s, cfg.M + 1)
        self._q = nodes * cfg.delta
        self._U = self.traj.U[cfg.m_s:cfg.M + 1]

    @property
    def growth_rate(self) -> float:
        return max(0.0, -self.tail_model[1])

    @property
    def t_max(self) -> float:
        g = self.growth_rate
        return math.inf if g == 0.0 else g ** (-1.0 / self.n)

    def check(self, t: float) -> float:
        if not t > 0:
            raise InadmissibleTime("t must be positive")
        x = t ** (-self.n)
        if not x > self.growth_rate:
            raise InadmissibleTime(
                f"t={t:g} is not admissible: the trajectory grows like exp({self.growth_rate:.4g} q),"
                f" so t must stay below {self.t_max:.6g}")
        return x

    def parts(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(startup, marched, tail) contributions to ``v(., t) - v0``."""
        x = self.check(t)
        cfg, ts = self.traj.config, self.traj.startup
        betas = np.arange(1, ts.m0 + 1) / ts.n
        coef = t ** np.arange(1, ts.m0 + 1) * sp.gammainc(betas, x * cfg.qm)
        startup = np.tensordot(coef, ts.c, axes=1)
        w = _exp_linear_weights(self._q, x)
        marched = np.tensordot(w, self._U, axes=1)
        c2 = self.tail_model[1]
        q0 = self._q[-1]
        tail = self._U[-1] * (math.exp(-x * q0) / (x + c2))
        return startup, marched, tail

    def __call__(self, t: float) -> SpectralVectorField:
        s, m, tl = self.parts(t)
        return SpectralVectorField(self.traj.grid, self.traj.v0 + s + m + tl, True, True)


def laplace_eval(traj: BorelTrajectory, t: float) -> SpectralVectorField:
    """``v(., t)`` from the trajectory; raises :class:`InadmissibleTime` beyond the range."""
    return LaplaceEvaluator(traj)(t)


def physical_field(vhat: SpectralVectorField, L: int | None = None,
                   tol: float = 1e-10) -> np.ndarray:
    """Real samples ``(3, L, L, L)`` on the collocation grid ``2 pi i / L``.

    Rejects fields whose coefficients are not Hermitian to ``tol`` (relative).
    """
    scale = float(np.max(np.abs(vhat.coeffs), initial=0.0))
    if vhat.hermitian_defect() > tol * max(scale, 1e-300):
        raise ValueError("field is not Hermitian; its samples would not be real")
    g = vhat.grid
    return to_physical(vhat.coeffs, g.N, g.pad if L is None else L)


# --- manufactured solution --------------------------------------------------------------


def borel_reference(q: float, n: int = 2, epsrel: float = 1e-12) -> float:
    """Borel transform of ``(1 + t)^{-1} - 1`` from its real-axis inversion integral.

    In ``tau = t^{-n}`` the Laplace image is ``-1 / (1 + tau^{1/n})``; the cut
    along negative tau gives
    ``-(1/pi) int_0^inf e^{-q r} r^{1/n} sin(pi/n) / (1 + 2 r^{1/n} cos(pi/n) + r^{2/n}) dr``.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    if n == 1:
        return -math.exp(-q)
    s, c = math.sin(math.pi / n), math.cos(math.pi / n)

    def f(r):
        p = r ** (1.0 / n)
        return p * s / (1.0 + 2.0 * p * c + p * p)

    # r = y / q puts the exponential in standard form
    val, _ = integrate.quad(lambda y: math.exp(-y) * f(y / q) / q, 0.0, math.inf,
                            epsabs=0.0, epsrel=epsrel, limit=400)
    return -val / math.pi


@dataclass(frozen=True)
class ManufacturedCase:
    grid: WavevectorGrid
    w: SpectralVectorField
    forcing: RationalForcing

    @property
    def v0(self) -> SpectralVectorField:
        return self.w

    def exact_v(self, t: float) -> SpectralVectorField:
        return self.w * (1.0 / (1.0 + t))

    def exact_U(self, q: float, n: int = 2) -> SpectralVectorField:
        return self.w * float(rational_borel(q, 1, n))

    def residual(self, t: float) -> float:
        """Max |v_t + nu|k|^2 v + i k_j P[v_j * v] - f| for the exact v."""
        g = self.grid
        v = self.w.coeffs / (1.0 + t)
        vt = -self.w.coeffs / (1.0 + t) ** 2
        res = vt + g.nu * g.ksq * v - nonlinear_arrays(v, v, g) - self.forcing.at_time(t)
        return float(np.max(np.abs(res)))


def manufactured_case(grid: WavevectorGrid) -> ManufacturedCase:
    """Exact solution ``v = w / (1 + t)`` with w the Kida field, and its forcing.

    ``f = A / (1 + t) + B / (1 + t)^2`` with ``A = nu |k|^2 w`` and
    ``B = -w + i k_j P[w_j * w]``.
    """
    w = kida_initial(grid)
    A = SpectralVectorField(grid, grid.nu * grid.ksq * w.coeffs, True, True)
    B = SpectralVectorField(grid, -w.coeffs - nonlinear_arrays(w.coeffs, w.coeffs, grid),
                            True, True)
    return ManufacturedCase(grid, w, RationalForcing(((1, A), (2, B))))


# --- convergence study -------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    delta: float
    error: float
    order: float          # nan on the first row


def _max_error(traj: BorelTrajectory, case: ManufacturedCase) -> float:
    cfg = traj.config
    g = case.grid
    exact = case.exact_U(cfg.M * cfg.delta, cfg.n).coeffs
    return float(np.max(np.abs(to_physical(traj.U[cfg.M] - exact, g.N, g.pad))))


def convergence_study(deltas, N: int = 8, nu: float = 1.0, n: int = 2, q0: float = 1.0,
                      qm: float = 0.2, m0: int = 8, quad_level: float = 1.0,
                      progress=None) -> list[ConvergenceRow]:
    """Errors ``e = max_x |U_delta(x, q0) - U(x, q0)|`` and orders ``log2(e_{2 delta} / e)``."""
    grid = WavevectorGrid(N, nu)
    case = manufactured_case(grid)
    rows: list[ConvergenceRow] = []
    for d in deltas:
        cfg = MarchConfig(N=N, nu=nu, n=n, delta=float(d), q0=q0, qm=qm, m0=m0,
                          quad_level=quad_level)
        traj = Marcher(cfg, case.v0, case.forcing).run()
        err = _max_error(traj, case)
        order = math.nan
        if rows and abs(rows[-1].delta - 2.0 * d) < 1e-12 * d:
            order = math.log2(rows[-1].error / err)
        rows.append(ConvergenceRow(float(d), err, order))
        if progress is not None:
            progress(rows[-1])
    return rows


def write_convergence_csv(rows, path, echo: list[str] | None = None) -> None:
    """Table layout ``delta, e_delta, beta_delta``; a single row has no order column."""
    with_order = len(rows) > 1
    with open(path, "w", newline="") as fh:
        for line in echo or []:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(["delta", "e_delta", "beta_delta"] if with_order else ["delta", "e_delta"])
        for r in rows:
            row = [f"{r.delta:.12g}", f"{r.error:.6e}"]
            if with_order:
                row.append("" if math.isnan(r.order) else f"{r.order:.4f}")
            wr.writerow(row)


def format_convergence_table(rows) -> str:
    """Plain-text table in the same layout as the CSV."""
    with_order = len(rows) > 1
    head = f"{'delta':>10} {'e_delta':>12}" + (f" {'beta':>7}" if with_order else "")
    lines = [head]
    for r in rows:
        inv = 1.0 / r.delta
        d = f"1/{round(inv)}" if abs(inv - round(inv)) < 1e-9 else f"{r.delta:g}"
        line = f"{d:>10} {r.error:12.4e}"
        if with_order:
            line += f" {'':>7}" if math.isnan(r.order) else f" {r.order:7.2f}"
        lines.append(line)
    return "\n".join(lines) + "\n"
