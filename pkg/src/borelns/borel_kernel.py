"""The Volterra kernel G(q, q'; k) and the inhomogeneous term U0(k, q).

The kernel depends on the wavevector only through ``lam = nu |k|^2``. For
n >= 2 it is an integral of the entire function F,

    G(q, q') = int_{s0}^1 p^{1/n-1} F(lam (1 - s) p^{1/n}) ds,
    s0 = (q'/q)^{1/n},  p = q (1 - (s0/s)^n),

evaluated after the substitution ``s = s0 + (1 - s0) u^n`` (which removes the
algebraic endpoint singularity) by a tanh-sinh rule in ``u``; F comes from a
piecewise Chebyshev table built once from the regime-dispatching evaluator.
For n = 1 the kernel is the Bessel combination

    G = (pi z'/z) (J1(z') Y1(z) - J1(z) Y1(z')),  z = 2 sqrt(lam q).

Near the diagonal ``G ~ (q - q')^{1/n} / (q Gamma(1/n))`` for fixed lam, so
product-integration panels are parametrized by ``t = (q - q')^{1/n}``, in
which the kernel is smooth uniformly in lam.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import special as sp

from . import _kernels
from .special_functions import default_evaluator, eval_G
from .spectral_field import SpectralVectorField

__all__ = [
    "FTable",
    "f_table",
    "kernel_G",
    "kernel_G_bessel",
    "kernel_values",
    "u0_factor",
    "U0_term",
    "hat_weights",
    "power_moments",
    "KernelCache",
    "b0_bound",
    "b0_sample_pairs",
    "bound_exponent",
]

# beyond this mu the n = 2 function F is below 1e-20 of its value at 0
_MU_MAX_N2 = 400.0


def bound_exponent(n: int) -> float:
    """Exponent theta in the kernel envelope |G| <~ (q - q')^{-theta}."""
    return 0.5 - 0.5 / n


@dataclass(frozen=True)
class FTable:
    """Piecewise Chebyshev interpolant of F on [0, mu_max], zero beyond."""

    n: int
    h: float
    coeffs: np.ndarray = field(repr=False)
    mu_max: float

    def __call__(self, mu):
        return _kernels._cheb_F_numpy(mu, self.h, self.coeffs, self.mu_max)


@lru_cache(maxsize=8)
def f_table(n: int = 2, h: float = 0.5, degree: int = 10) -> FTable:
    """Build the Chebyshev table of F used inside the compiled kernel."""
    if n < 2:
        raise ValueError("the tabulated kernel is for n >= 2")
    ev = default_evaluator(n)
    mu_max = _MU_MAX_N2 if n == 2 else ev.crossover_mu
    panels = int(math.ceil(mu_max / h))
    x = np.cos(np.pi * (np.arange(degree) + 0.5) / degree)  # Chebyshev points
    mus = (np.arange(panels)[:, None] + 0.5 * (x[None, :] + 1.0)) * h
    vals = ev.F(mus.ravel()).reshape(panels, degree)
    # discrete Chebyshev transform on each panel
    T = np.cos(np.outer(np.arange(degree), np.arccos(x)))
    coeffs = (2.0 / degree) * vals @ T.T
    coeffs[:, 0] *= 0.5
    return FTable(n=n, h=h, coeffs=np.ascontiguousarray(coeffs), mu_max=panels * h)


def _check_lams_range(q: float, lams: np.ndarray, n: int, table: FTable) -> None:
    if n >= 3 and lams.size and lams.max() * q ** (1.0 / n) > table.mu_max:
        raise ValueError(
            f"kernel for n={n} needs F beyond mu={table.mu_max}, outside the series range")


def kernel_values(q: float, qps, lams, n: int = 2) -> np.ndarray:
    """G(q, qps[a]; lams[b]) as an ``(len(qps), len(lams))`` array.

    ``qps`` must lie in ``[0, q)``; the value at ``q' = q`` is the limit 0.
    """
    qps = np.atleast_1d(np.asarray(qps, dtype=float))
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if not q > 0:
        raise ValueError("q must be positive")
    if np.any(qps < 0) or np.any(qps > q):
        raise ValueError("need 0 <= q' <= q")
    if n == 1:
        return _bessel_matrix(q, qps, lams)
    table = f_table(n)
    _check_lams_range(q, lams, n, table)
    out = np.zeros((qps.size, lams.size))
    inside = qps < q
    if np.any(inside):
        out[inside] = _kernels.kernel_matrix(q, qps[inside], lams, n, table.h, table.coeffs,
                                             table.mu_max)
    return out


def _bessel_matrix(q, qps, lams):
    r = np.broadcast_to(qps[:, None] / q, (qps.size, lams.size))
    z = np.broadcast_to(2.0 * np.sqrt(lams[None, :] * q), r.shape)
    zp = 2.0 * np.sqrt(lams[None, :] * qps[:, None])
    out = 1.0 - r  # lam = 0 limit
    live = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.pi * zp / z * (sp.j1(zp) * sp.y1(z) - sp.j1(z) * sp.y1(zp))
        at0 = 2.0 * sp.j1(z) / z  # q' -> 0 limit
    val = np.where(r == 0.0, at0, val)
    return np.where(live, val, out)


def kernel_G(q: float, qp: float, ksq: float, nu: float = 1.0, n: int = 2) -> float:
    """Scalar kernel value for ``0 < q' < q``."""
    if not 0 < qp < q:
        raise ValueError(f"need 0 < q' < q, got q'={qp}, q={q}")
    if ksq < 1:
        raise ValueError("|k|^2 must be at least 1")
    return float(kernel_values(q, [qp], [nu * ksq], n)[0, 0])


def kernel_G_bessel(q: float, qp: float, ksq: float, nu: float = 1.0) -> float:
    """n = 1 kernel in closed form, ``0 < q' <= q``."""
    if not 0 < qp <= q:
        raise ValueError(f"need 0 < q' <= q, got q'={qp}, q={q}")
    return float(_bessel_matrix(q, np.array([qp]), np.array([nu * ksq]))[0, 0])


def u0_factor(q: float, lams, n: int = 2) -> np.ndarray:
    """Multiplier taking v1 to U0(., q), per lam.

    n >= 2: ``G(lam q^{1/n}) / (lam q)``; n = 1: ``2 J1(z)/z`` with ``z = 2 sqrt(lam q)``.
    At lam = 0 both reduce to ``q^{1/n-1} / Gamma(1/n)``.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    lams = np.asarray(lams, dtype=float)
    out = np.empty_like(lams)
    zero = lams == 0
    out[zero] = q ** (1.0 / n - 1.0) / math.gamma(1.0 / n)
    lp = lams[~zero]
    if n == 1:
        z = 2.0 * np.sqrt(lp * q)
        out[~zero] = 2.0 * sp.j1(z) / z
    else:
        mu = lp * q ** (1.0 / n)
        ev = default_evaluator(n)
        if n >= 3 and mu.size and mu.max() > ev.crossover_mu:
            raise ValueError(f"U0 for n={n} needs G beyond the series range")
        out[~zero] = eval_G(mu, n) / (lp * q)
    return out


def U0_term(v1: SpectralVectorField, q: float, n: int = 2) -> SpectralVectorField:
    """Inhomogeneous term U0(k, q) = v1(k) * factor(nu |k|^2, q)."""
    grid = v1.grid
    ksq = grid.ksq
    lam_u, inv = np.unique(grid.nu * ksq, return_inverse=True)
    fac = u0_factor(q, lam_u, n)[inv].reshape(ksq.shape)
    fac[grid.N, grid.N, grid.N] = 0.0
    return v1.replace(v1.coeffs * fac)


# --- product integration -------------------------------------------------------


@lru_cache(maxsize=None)
def _gauss(p: int):
    x, w = np.polynomial.legendre.leggauss(p)
    return 0.5 * (x + 1.0), 0.5 * w


def _panel_points(q, a, b, lam_max, n, level, min_points=3):
    """Quadrature on [a, b] (b <= q) in the variable t = (q - q')^{1/n}."""
    ta = (q - a) ** (1.0 / n)
    tb = (q - b) ** (1.0 / n) if b < q else 0.0
    dt = ta - tb
    p = int(math.ceil(level * max(3.0 + 1.5 * lam_max * dt, min_points)))
    if b >= q:
        p = max(p, int(math.ceil(8 * level)))  # diagonal panel
    p = min(max(p, 3), 64)
    x, w = _gauss(p)
    t = tb + dt * x
    qp = q - t**n
    wt = w * dt * n * t ** (n - 1)
    return qp, wt


def _origin_exponent(n: int) -> int:
    # n >= 2 kernels expand in (q'/q)^{1/n}; the n = 1 kernel carries
    # q' log q' terms from Y1, which a cubic clustering smooths out.
    return n if n >= 2 else 3


def _origin_points(q, b, lam_max, n, level):
    """Quadrature on [0, b] in q' = b w^c, clustering at q' = 0."""
    c = _origin_exponent(n)
    p = int(math.ceil(level * (8.0 + 1.5 * lam_max * b ** (1.0 / n))))
    p = min(max(p, 8), 64)
    x, w = _gauss(p)
    qp = b * x**c
    wt = w * b * c * x ** (c - 1)
    return qp, wt, x


def hat_weights(q: float, x0: float, delta: float, K: int, lams, n: int = 2,
                level: float = 1.0) -> np.ndarray:
    """Exact-in-the-hat product-integration weights over [x0, x0 + K delta].

    Returns ``W`` of shape ``(K+1, len(lams))`` with
    ``int_{x0}^{x0+K delta} G(q, q') p(q') dq' = sum_i W[i] p(x0 + i delta)``
    for every ``p`` linear on each panel. Requires ``x0 + K delta <= q``.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if K < 1:
        return np.zeros((K + 1, lams.size))
    xK = x0 + K * delta
    if xK > q * (1 + 1e-12):
        raise ValueError("hat grid extends beyond q")
    xK = min(xK, q)
    lam_max = float(lams.max()) if lams.size else 0.0
    pts, wts, rows, frac = [], [], [], []
    for j in range(K):
        a = x0 + j * delta
        b = xK if j == K - 1 else x0 + (j + 1) * delta
        qp, wt = _panel_points(q, a, b, lam_max, n, level)
        pts.append(qp)
        wts.append(wt)
        rows.append(np.full(qp.size, j))
        frac.append((qp - a) / delta)
    qp = np.concatenate(pts)
    wt = np.concatenate(wts)
    row = np.concatenate(rows)
    fr = np.concatenate(frac)
    kv = kernel_values(q, qp, lams, n) * wt[:, None]
    W = np.zeros((K + 1, lams.size))
    np.add.at(W, row, kv * (1.0 - fr)[:, None])
    np.add.at(W, row + 1, kv * fr[:, None])
    return W


def power_moments(q: float, qm: float, panels: int, betas, lams, n: int = 2,
                  level: float = 1.0) -> np.ndarray:
    """``int_0^{qm} G(q, q') q'^{beta-1} dq'`` for each beta and lam.

    The interval is split into ``panels`` equal panels; the first uses the
    substitution ``q' = h w^n`` so the singular weight becomes polynomial.
    Requires ``qm <= q``. Returns shape ``(len(betas), len(lams))``.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    betas = np.asarray(betas, dtype=float)
    if qm > q * (1 + 1e-12):
        raise ValueError("moment interval extends beyond q")
    qm = min(qm, q)
    h = qm / panels
    lam_max = float(lams.max()) if lams.size else 0.0
    qp0, _, x0 = _origin_points(q, h, lam_max, n, level)
    c = _origin_exponent(n)
    # q'^{beta-1} dq' = h^beta c w^{c beta - 1} dw on the first panel
    basis0 = (h ** betas[None, :]) * c * x0[:, None] ** (c * betas[None, :] - 1.0)
    _, w0 = _gauss(x0.size)
    out = basis0.T @ (kernel_values(q, qp0, lams, n) * w0[:, None])
    if panels > 1:
        pts, wts = [], []
        for j in range(1, panels):
            b = qm if j == panels - 1 else (j + 1) * h
            # q'^{beta-1} is steep on the panels next to the origin
            qp, wt = _panel_points(q, j * h, b, lam_max, n, level, min_points=3 + 12 / j)
            pts.append(qp)
            wts.append(wt)
        qp = np.concatenate(pts)
        wt = np.concatenate(wts)
        basis = qp[:, None] ** (betas[None, :] - 1.0) * wt[:, None]
        out = out + basis.T @ kernel_values(q, qp, lams, n)
    return out


# --- cache ------------------------------------------------------------------------

_BNSK_MAGIC = b"BNSK"
_BNSK_VERSION = 1


class KernelCache:
    """Product-integration rows for the uniform node grid ``q = m delta``.

    Row ``m`` holds the hat weights over ``[q_m, m delta]`` (nodes
    ``m_s..m``) and the startup power moments over ``[0, q_m]`` for
    ``beta = l/n, l = 1..m0``, each for every distinct ``lam`` in ``lams``.
    Point values ``G(m delta, m' delta)`` are memoized separately.
    """

    def __init__(self, n: int, nu: float, delta: float, m_s: int, m0: int, ksq_values,
                 level: float = 1.0):
        if m_s < 1:
            raise ValueError("m_s must be at least 1")
        self.n = int(n)
        self.nu = float(nu)
        self.delta = float(delta)
        self.m_s = int(m_s)
        self.m0 = int(m0)
        self.level = float(level)
        self.ksq = np.asarray(np.unique(np.asarray(ksq_values, dtype=float)))
        self.lams = self.nu * self.ksq
        self._rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._points: dict[tuple[int, int], np.ndarray] = {}

    @property
    def qm(self) -> float:
        return self.m_s * self.delta

    @property
    def qgrid(self) -> np.ndarray:
        ms = sorted(self._rows)
        return np.array(ms, dtype=float) * self.delta

    def lam_index(self, ksq) -> np.ndarray:
        idx = np.searchsorted(self.ksq, ksq)
        if np.any(idx >= self.ksq.size) or np.any(self.ksq[np.minimum(idx, self.ksq.size - 1)]
                                                  != ksq):
            raise KeyError("|k|^2 value not in cache")
        return idx

    def row(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """(hat weights ``(m - m_s + 1, n_lam)``, startup moments ``(m0, n_lam)``)."""
        if m <= self.m_s:
            raise ValueError("rows exist only beyond the startup interval")
        hit = self._rows.get(m)
        if hit is None:
            q = m * self.delta
            W = hat_weights(q, self.qm, self.delta, m - self.m_s, self.lams, self.n, self.level)
            betas = np.arange(1, self.m0 + 1) / self.n
            S = power_moments(q, self.qm, self.m_s, betas, self.lams, self.n, self.level)
            hit = (W, S)
            self._rows[m] = hit
        return hit

    def value(self, m: int, mp: int) -> np.ndarray:
        key = (m, mp)
        hit = self._points.get(key)
        if hit is None:
            if not 0 <= mp <= m:
                raise ValueError("need 0 <= m' <= m")
            hit = kernel_values(m * self.delta, [mp * self.delta], self.lams, self.n)[0]
            self._points[key] = hit
        return hit

    def b0(self, q0: float, qmax: float | None = None, **kw) -> np.ndarray:
        """Sampled B0 per cached lam (a discrete lower bound of the sup)."""
        pairs = b0_sample_pairs(q0, qmax if qmax is not None else 4.0 * q0, **kw)
        return b0_bound(self.ksq, pairs, self.nu, self.n)

    # persistence: header (magic, version u32, n u32, flags u32) then a key/value body
    def save(self, path) -> None:
        path = Path(path)
        ms = np.array(sorted(self._rows), dtype=np.int64)
        with path.open("wb") as fh:
            fh.write(_BNSK_MAGIC)
            fh.write(struct.pack("<III", _BNSK_VERSION, self.n, 0))
            fh.write(struct.pack("<dddqqq", self.nu, self.delta, self.level, self.m_s, self.m0,
                                 ms.size))
            fh.write(struct.pack("<q", self.ksq.size))
            fh.write(self.ksq.astype("<f8").tobytes())
            for m in ms:
                W, S = self._rows[int(m)]
                fh.write(struct.pack("<q", int(m)))
                fh.write(W.astype("<f8").tobytes())
                fh.write(S.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "KernelCache":
        raw = Path(path).read_bytes()
        if raw[:4] != _BNSK_MAGIC:
            raise ValueError("not a kernel cache file")
        version, n, _flags = struct.unpack_from("<III", raw, 4)
        if version != _BNSK_VERSION:
            raise ValueError(f"unsupported kernel cache version {version}")
        off = 16
        nu, delta, level, m_s, m0, nrows = struct.unpack_from("<dddqqq", raw, off)
        off += struct.calcsize("<dddqqq")
        (nk,) = struct.unpack_from("<q", raw, off)
        off += 8
        ksq = np.frombuffer(raw, "<f8", nk, off).copy()
        off += 8 * nk
        cache = cls(n, nu, delta, m_s, m0, ksq, level)
        for _ in range(nrows):
            (m,) = struct.unpack_from("<q", raw, off)
            off += 8
            rw = m - m_s + 1
            W = np.frombuffer(raw, "<f8", rw * nk, off).reshape(rw, nk).copy()
            off += 8 * rw * nk
            S = np.frombuffer(raw, "<f8", m0 * nk, off).reshape(m0, nk).copy()
            off += 8 * m0 * nk
            cache._rows[m] = (W, S)
        return cache

    def compatible(self, n, nu, delta, m_s, m0, level) -> bool:
        return (self.n == n and self.nu == nu and self.delta == delta and self.m_s == m_s
                and self.m0 == m0 and self.level == level)


def b0_sample_pairs(q0: float, qmax: float, n_qp: int = 6, n_d: int = 40,
                    d_min: float = 1e-8) -> np.ndarray:
    """Sample pairs (q, q') with ``q0 <= q' < q <= qmax``.

    ``q'`` runs over a few points from q0 upward and ``q - q'`` is
    log-spaced from ``d_min`` so the peak near ``q - q' ~ lam^{-n}`` is seen.
    """
    qps = q0 * np.geomspace(1.0, qmax / q0, n_qp, endpoint=False)
    pairs = []
    for qp in qps:
        ds = np.geomspace(d_min, qmax - qp, n_d)
        pairs.extend((qp + d, qp) for d in ds)
    return np.array(pairs)


def b0_bound(ksq, pairs, nu: float = 1.0, n: int = 2) -> np.ndarray:
    """``max over pairs of (q - q')^theta |G(q, q'; nu |k|^2)|`` per |k|^2.

    A discrete sup, hence a lower bound of the true B0.
    """
    pairs = np.atleast_2d(np.asarray(pairs, dtype=float))
    if pairs.size == 0:
        raise ValueError("no sample pairs")
    ksq = np.atleast_1d(np.asarray(ksq, dtype=float))
    lams = nu * ksq
    theta = bound_exponent(n)
    best = np.zeros(ksq.size)
    for q, qp in pairs:
        if not 0 <= qp < q:
            raise ValueError("pairs need 0 <= q' < q")
        g = kernel_values(q, [qp], lams, n)[0]
        best = np.maximum(best, (q - qp) ** theta * np.abs(g))
    return best
