"""Existence-time certificates from a computed Borel trajectory.

Given U on ``[0, q0]`` the decay rate ``alpha`` of ``int e^{-alpha q} |U|_l1``
is controlled by three functionals, with ``a = 1/2 + 1/(2n)``:

    b        = alpha^a int_{q0}^inf e^{-alpha q} |U^(s)(., q)|_l1 dq,
    epsilon1 = Gamma(a) [B1 + int_0^{q0} e^{-alpha0 q} B2(q) dq],
    epsilon  = Gamma(a) B3,

where ``U^(s)`` is the solution of the linear problem driven by the part of
the nonlinearity that only involves U on ``[0, q0]``. Any ``alpha >= alpha0``
with ``alpha^a > epsilon1 + 2 sqrt(epsilon b)`` is admissible and the
classical solution exists on ``(0, alpha^{-1/n})``.

Every supremum here is taken over finitely many samples (pairs ``(q, q')``,
wavevectors in the Galerkin cube), so the constants are lower bounds of the
true ones. Certificates carry caveat flags saying so.

The module also evaluates two comparison times: a classical Sobolev
local-existence time ``T_cl`` and the time ``T_c`` after which a Leray weak
solution is classical.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import special as sp
from scipy.integrate import trapezoid

from . import _kernels
from .borel_kernel import (b0_sample_pairs, bound_exponent, hat_weights, kernel_values,
                           power_moments, u0_factor)
from .marcher import BorelTrajectory, hat_moments
from .special_functions import eval_G
from .spectral_field import (SpectralVectorField, _pin_mean, from_physical,
                             l1_norm, to_physical, v1_field)
from .startup import tensor_divergence

__all__ = [
    "Certificate",
    "CertificateRefused",
    "CmTableMissing",
    "CertificateConstants",
    "TailEvaluator",
    "CmTable",
    "solve_alpha",
    "refined_condition",
    "certificate_constants",
    "certify",
    "u_s_tail",
    "truncate",
    "kernel_sups",
    "classical_time",
    "lattice_cm_table",
    "shipped_cm_table",
    "calibrate_cm_table",
    "leray_Tc",
    "energy",
    "decay_fit",
    "rough_alpha",
    "sample_C2",
    "sample_c1",
    "sample_CG",
]

CAVEAT_B0 = "B0 is a sup over sampled (q, q') pairs"
CAVEAT_K = "sup over k restricted to the Galerkin cube"
CAVEAT_TAIL = "b integrates sampled U^(s) up to Q_max plus a c_s closure"
NOT_A_PROOF = "numerical evidence, not a proof"


class CertificateRefused(RuntimeError):
    pass


class CmTableMissing(LookupError):
    pass


def _a(n: int) -> float:
    return 0.5 + 0.5 / n


# --- the certificate -------------------------------------------------------------------------


@dataclass
class Certificate:
    """Inputs and result of one decay-rate certificate.

    ``alpha_star`` satisfies ``alpha_star^a > epsilon1 + 2 sqrt(epsilon b)``
    and ``alpha_star >= alpha0``; ``T = alpha_star^{-1/n}``.
    """

    q0: float
    alpha0: float
    n: int
    b: float
    epsilon: float
    epsilon1: float
    alpha_star: float
    T: float
    c_g: float = math.nan
    c_s: float = math.nan
    caveats: list[str] = field(default_factory=list)
    T_cl: float = math.nan
    T_c: float = math.nan

    @property
    def lhs(self) -> float:
        return self.alpha_star ** _a(self.n)

    @property
    def rhs(self) -> float:
        return self.epsilon1 + 2.0 * math.sqrt(self.epsilon * self.b)

    def verify(self) -> bool:
        """The defining inequality, ``alpha_star >= alpha0`` and ``T = alpha_star^{-1/n}``."""
        return (self.lhs > self.rhs and self.alpha_star >= self.alpha0
                and self.T == self.alpha_star ** (-1.0 / self.n))

    def to_keyvalue(self) -> str:
        # plain Python scalars so the text never carries numpy reprs
        rows = [(f.name, int(v) if f.name == "n" else float(v))
                for f in dataclasses.fields(self) if f.name != "caveats"
                for v in [getattr(self, f.name)]]
        lines = [f"{k} = {v!r}" for k, v in rows]
        lines.append("caveats = " + " | ".join(self.caveats))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_keyvalue(cls, text: str) -> "Certificate":
        raw = {}
        for line in text.splitlines():
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, _, val = line.partition("=")
            raw[key.strip()] = val.strip()
        caveats = [c.strip() for c in raw.pop("caveats", "").split("|") if c.strip()]
        kw = {}
        for f in dataclasses.fields(cls):
            if f.name in raw:
                kw[f.name] = int(raw[f.name]) if f.name == "n" else float(raw[f.name])
        cert = cls(caveats=caveats, **kw)
        if not cert.verify():
            raise CertificateRefused("stored certificate fails its own inequality")
        return cert

    def report(self) -> str:
        a = _a(self.n)
        lines = [
            "Existence-time certificate",
            f"  order n            {self.n}",
            f"  q0                 {self.q0:.6g}",
            f"  alpha0             {self.alpha0:.6g}",
            f"  b                  {self.b:.6e}",
            f"  epsilon            {self.epsilon:.6g}",
            f"  epsilon1           {self.epsilon1:.6g}",
            f"  c_g, c_s           {self.c_g:.6g}, {self.c_s:.6g}",
            f"  alpha*             {self.alpha_star:.6f}",
            f"  alpha*^{a:.4g}       {self.lhs:.12g} > {self.rhs:.12g}",
            f"  existence interval (0, {self.T:.6f})",
        ]
        if math.isfinite(self.T_cl):
            lines.append(f"  classical T_cl     {self.T_cl:.6g}")
        if math.isfinite(self.T_c):
            lines.append(f"  Leray T_c          {self.T_c:.6g}")
        if self.caveats:
            lines.append(f"  status: {NOT_A_PROOF}")
            lines.extend(f"    - {c}" for c in self.caveats)
        return "\n".join(lines) + "\n"


def solve_alpha(b: float, epsilon: float, epsilon1: float, n: int, alpha0: float,
                margin: float = 1e-9) -> tuple[float, float]:
    """Smallest admissible decay rate and the matching existence time.

    ``alpha* = max(alpha0, (epsilon1 + 2 sqrt(epsilon b))^{2n/(n+1)}) (1 + margin)``,
    ``T = alpha*^{-1/n}``.
    """
    if min(b, epsilon, epsilon1, alpha0) < 0:
        raise ValueError("certificate inputs must be nonnegative")
    rhs = epsilon1 + 2.0 * math.sqrt(epsilon * b)
    alpha = max(alpha0, rhs ** (1.0 / _a(n))) * (1.0 + margin)
    if alpha == 0.0:
        alpha = margin
    return alpha, alpha ** (-1.0 / n)


@dataclass(frozen=True)
class RefinedBound:
    rhs: float              # epsilon1 + 2 [2 Gamma(a) Gamma(a, alpha0 q0) c_g c_s]^{1/2} q0^{-1/4}
    alpha_refined: float
    alpha_direct: float     # from (b, epsilon) when supplied, else nan
    alpha: float            # the smaller admissible one


def refined_condition(c_g: float, c_s: float, alpha0: float, q0: float, epsilon1: float,
                      n: int, b: float | None = None, epsilon: float | None = None,
                      margin: float = 1e-9) -> RefinedBound:
    """Decay rate from the bounds ``b <= c_s Gamma(a, alpha0 q0)`` and
    ``epsilon <= 2 Gamma(a) c_g q0^{-1/2}``.

    ``Gamma(a, x)`` is the upper incomplete gamma function. When ``b`` and
    ``epsilon`` are also given the direct rate is computed and the smaller
    of the two is reported.
    """
    a = _a(n)
    upper = sp.gammaincc(a, alpha0 * q0) * math.gamma(a)
    rhs = epsilon1 + 2.0 * math.sqrt(2.0 * math.gamma(a) * upper * c_g * c_s) * q0**-0.25
    alpha_ref = max(alpha0, rhs ** (1.0 / a)) * (1.0 + margin)
    alpha_dir = math.nan
    if b is not None and epsilon is not None:
        alpha_dir = solve_alpha(b, epsilon, epsilon1, n, alpha0, margin)[0]
    best = alpha_ref if not math.isfinite(alpha_dir) else min(alpha_ref, alpha_dir)
    return RefinedBound(rhs, alpha_ref, alpha_dir, best)


# --- trajectory helpers ----------------------------------------------------------------------


def truncate(traj: BorelTrajectory, q0: float) -> BorelTrajectory:
    """View of ``traj`` restricted to ``[0, q0]`` (``q0`` on the node grid)."""
    cfg = dataclasses.replace(traj.config, q0=q0)
    if cfg.M > traj.completed:
        raise ValueError(f"trajectory only reaches q={traj.completed * cfg.delta:g}")
    return dataclasses.replace(traj, config=cfg, U=traj.U[:cfg.M + 1], R=traj.R[:cfg.M + 1],
                               norms=traj.norms[:cfg.M + 1], completed=cfg.M)


def _check_complete(traj: BorelTrajectory) -> None:
    if traj.completed < traj.config.M:
        raise ValueError("trajectory does not cover [0, q0]")
    if traj.forcing is not None and not traj.forcing.static:
        raise CertificateRefused("certificates need a time-independent forcing")


def _exp_linear_weights(q: np.ndarray, alpha: float) -> np.ndarray:
    """Weights for ``int e^{-alpha q} p(q) dq`` with p linear between the nodes q."""
    q = np.asarray(q, dtype=float)
    w = np.zeros_like(q)
    for j in range(q.size - 1):
        a, h = q[j], q[j + 1] - q[j]
        if alpha * h < 1e-6:
            i0 = h * math.exp(-alpha * a)
            w[j] += 0.5 * i0
            w[j + 1] += 0.5 * i0
            continue
        # int_0^h e^{-alpha (a + s)} (1 - s/h) ds and its mirror
        ea, x = math.exp(-alpha * a), alpha * h
        ex = math.exp(-x)
        right = ea * (1.0 - ex * (1.0 + x)) / (alpha * x)
        left = ea * (1.0 - ex) / alpha - right
        w[j] += left
        w[j + 1] += right
    return w


def _startup_integral(traj: BorelTrajectory, alpha: float, points: int = 40) -> float:
    """``int_0^{q_m} e^{-alpha q} |U(., q)|_l1 dq`` with the series on the startup piece."""
    ts = traj.startup
    n, qm = ts.n, traj.config.qm
    x, w = np.polynomial.legendre.leggauss(points)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    # q = qm x^n absorbs the q^{1/n - 1} endpoint behaviour
    total = 0.0
    for xi, wi in zip(x, w):
        q = qm * xi**n
        powers = q ** (np.arange(1, ts.m0 + 1) / n - 1.0)
        u = np.tensordot(powers, ts.d, axes=1)
        nrm = float(np.sum(np.sqrt(np.sum(np.abs(u) ** 2, axis=0))))
        total += wi * nrm * math.exp(-alpha * q) * qm * n * xi ** (n - 1)
    return total


def weighted_l1_integral(traj: BorelTrajectory, alpha: float) -> float:
    """``int_0^{q0} e^{-alpha q} |U(., q)|_l1 dq`` (series piece plus exact exp-linear weights)."""
    q, nrm = traj.l1_norms()
    return _startup_integral(traj, alpha) + float(_exp_linear_weights(q, alpha) @ nrm)


# --- the tail U^(s) --------------------------------------------------------------------------


class TailEvaluator:
    """Evaluates ``U^(s)(., q)`` for ``q > q0`` from a trajectory on ``[0, q0]``.

    ``R^(a) = -i k_j H^(a)_j`` uses U only on ``[0, q0]``: on ``[0, q0]`` it is
    the stored R, and on ``(q0, 2 q0]`` only the truncated Laplace convolution
    ``int_{q-q0}^{q0} U(s) (x) U(q - s) ds`` survives. The jump at ``q0`` is
    kept by integrating ``[q_m, q0]`` and ``[q0, 2 q0]`` with separate hat bases.
    """

    def __init__(self, traj: BorelTrajectory, level: float | None = None):
        _check_complete(traj)
        self.traj = traj
        cfg = self.cfg = traj.config
        if cfg.M < 2 * cfg.m_s:
            raise ValueError("q0 must be at least 2 q_m for the tail evaluation")
        self.grid = traj.grid
        self.level = cfg.quad_level if level is None else level
        g = self.grid
        ksq = g.ksq.ravel().astype(float)
        self.ksq_u, self.inv = np.unique(ksq, return_inverse=True)
        self.lams = g.nu * self.ksq_u
        N, L = g.N, g.pad
        ms, M = cfg.m_s, cfg.M
        self.P = np.zeros((M + 1, 3) + (L,) * 3)
        self.P[ms:] = to_physical(traj.U[ms:M + 1], N, L)
        self.D = to_physical(traj.startup.d, N, L)
        self.betas = np.arange(1, traj.startup.m0 + 1) / cfg.n
        self._Ra: dict[int, np.ndarray] = {}

    def R_a(self, p: int) -> np.ndarray:
        """``R^(a)`` at node ``p`` in ``[M, 2M]``; node M gives the right limit."""
        cfg = self.cfg
        ms, M, d = cfg.m_s, cfg.M, cfg.delta
        if not M <= p <= 2 * M:
            raise ValueError("R^(a) beyond q0 lives on nodes M..2M")
        hit = self._Ra.get(p)
        if hit is not None:
            return hit
        N = self.grid.N
        out = np.zeros((3, 3) + self.P.shape[2:])
        flat = out.reshape(3, 3, -1)
        Pf = self.P.reshape(self.P.shape[0], 3, -1)
        j0 = p - M
        if j0 < ms:
            A = hat_moments(self.betas, d, ms, start=j0)             # nodes j0..ms
            partners = Pf[p - ms:p - j0 + 1][::-1]                     # node p - i
            X = np.tensordot(A, partners, axes=(1, 0))
            Dl = self.D.reshape(self.D.shape[0], 3, -1)
            ones = np.ones(Dl.shape[0])
            _kernels.pair_sum(Dl, X, ones, flat)
            _kernels.pair_sum(X, Dl, ones, flat)
            lo, hi = ms, p - ms
        else:
            lo, hi = j0, M
        if hi > lo:
            w = np.full(hi - lo + 1, d)
            w[0] = w[-1] = 0.5 * d
            _kernels.trapezoid_pairs(Pf, lo, hi, p, w, flat)
        r = _pin_mean(tensor_divergence(from_physical(out, N), self.grid), N)
        self._Ra[p] = r
        return r

    def evaluate(self, q: float) -> np.ndarray:
        """Coefficients of ``U^(s)(., q)``; inside ``(q0, 2 q0]`` q must be a node."""
        cfg, traj = self.cfg, self.traj
        ms, M, d = cfg.m_s, cfg.M, cfg.delta
        q0 = M * d
        if not q > q0 * (1 + 1e-12):
            raise ValueError(f"U^(s) is evaluated only beyond q0={q0:g}")
        g = self.grid
        nk = self.inv.size
        lam = self.lams
        out = (traj.v1.reshape(3, nk) * u0_factor(q, lam, cfg.n)[self.inv]).astype(complex)
        S = power_moments(q, cfg.qm, ms, self.betas, lam, cfg.n, self.level)
        rho = traj.startup.rho_d.reshape(traj.startup.m0, 3, nk)
        out += np.einsum("lk,lck->ck", S[:, self.inv], rho, optimize=True)
        W1 = hat_weights(q, cfg.qm, d, M - ms, lam, cfg.n, self.level)
        hist = np.ascontiguousarray(traj.R[ms:M + 1].reshape(M - ms + 1, 3, nk))
        _kernels.history_sum(W1, self.inv.astype(np.int64), hist, out)
        if q <= 2 * q0 * (1 + 1e-12):
            x = q / d
            p = int(round(x))
            if abs(x - p) > 1e-9 * x:
                raise ValueError("inside (q0, 2 q0] U^(s) is available on grid nodes only")
        else:
            p = 2 * M
        W2 = hat_weights(q, q0, d, p - M, lam, cfg.n, self.level)
        hist2 = np.stack([self.R_a(i).reshape(3, nk) for i in range(M, p + 1)])
        _kernels.history_sum(W2, self.inv.astype(np.int64), hist2, out)
        return _pin_mean(out.reshape((3,) + g.shape), g.N)

    def norm(self, q: float) -> float:
        u = self.evaluate(q)
        return float(np.sum(np.sqrt(np.sum(np.abs(u) ** 2, axis=0))))


def u_s_tail(traj: BorelTrajectory, q: float) -> tuple[SpectralVectorField, float]:
    """``U^(s)(., q)`` for ``q > q0`` and its l1 norm."""
    ev = TailEvaluator(traj)
    u = SpectralVectorField(traj.grid, ev.evaluate(q), True, True)
    return u, l1_norm(u)


def _tail_samples(cfg, stride: int, q_max: float, n_far: int) -> np.ndarray:
    M, d = cfg.M, cfg.delta
    near = np.arange(M + stride, 2 * M + 1, stride) * d
    if near.size == 0 or near[-1] < 2 * M * d:
        near = np.append(near, 2 * M * d)
    far = np.geomspace(2 * M * d, q_max, n_far + 1)[1:] if q_max > 2 * M * d else np.array([])
    return np.concatenate([[M * d], near, far])


def tail_integral(ev: TailEvaluator, alpha: float, q_max: float | None = None,
                  stride: int | None = None, n_far: int = 12, rtol: float = 0.05,
                  floor: float = 0.0) -> tuple[float, float, np.ndarray, np.ndarray]:
    """``(b, c_s, q, u_s)``: the tail functional at ``alpha`` and the decay constant.

    ``u_s`` is sampled on nodes of ``(q0, 2 q0]`` (every ``stride``-th) and on a
    geometric grid up to ``q_max``; the integral uses exact exp-linear weights,
    and beyond ``q_max`` the bound ``u_s <= c_s q^{-(1/2 - 1/(2n))}`` closes it.
    The estimate is compared with the one from every other sample; a relative
    gap above ``rtol`` (on a term that matters, i.e. above ``floor``) refuses.
    """
    cfg = ev.cfg
    n = cfg.n
    q0 = cfg.M * cfg.delta
    q_max = 20.0 * q0 if q_max is None else q_max
    if stride is None:
        stride = max(1, cfg.M // 40)
    qs = _tail_samples(cfg, stride, q_max, n_far)
    # the value at q0 itself is the right limit, taken from the first node beyond it
    vals = np.array([ev.norm(q) for q in qs[1:]])
    vals = np.concatenate([[vals[0]], vals])
    theta = bound_exponent(n)
    c_s = float(np.max(qs**theta * vals))
    a = _a(n)

    def integral(q, v):
        finite = float(_exp_linear_weights(q, alpha) @ v)
        close = c_s * sp.gammaincc(a, alpha * q[-1]) * math.gamma(a) * alpha ** (-a)
        return alpha**a * (finite + close)

    fine = integral(qs, vals)
    keep = np.unique(np.r_[0:qs.size:2, qs.size - 1])
    coarse = integral(qs[keep], vals[keep])
    gap = abs(fine - coarse)
    if gap > rtol * max(abs(fine), 1e-300) and gap > floor:
        raise CertificateRefused(
            f"tail quadrature for b did not settle: {fine:.3e} vs {coarse:.3e}")
    return fine, c_s, qs, vals


# --- kernel sups -----------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSups:
    ksq: np.ndarray
    B0: np.ndarray           # per |k|^2
    sup_kB0: float           # sup_k |k| B0(k)
    c_g: float               # sup |k| q^{1/2} (q - q')^theta |G|


def kernel_sups(ksq, q0: float, nu: float, n: int, q_max: float | None = None,
                n_qp: int = 6, n_d: int = 40) -> KernelSups:
    """Sampled ``B0(k)``, ``sup_k |k| B0`` and ``c_g`` over ``q0 <= q' < q <= q_max``."""
    ksq = np.unique(np.asarray(ksq, dtype=float))
    ksq = ksq[ksq > 0]
    pairs = b0_sample_pairs(q0, 4.0 * q0 if q_max is None else q_max, n_qp, n_d)
    lams = nu * ksq
    theta = bound_exponent(n)
    B0 = np.zeros(ksq.size)
    cg = np.zeros(ksq.size)
    for q, qp in pairs:
        g = np.abs(kernel_values(q, [qp], lams, n)[0]) * (q - qp) ** theta
        B0 = np.maximum(B0, g)
        cg = np.maximum(cg, g * math.sqrt(q))
    kmag = np.sqrt(ksq)
    return KernelSups(ksq, B0, float(np.max(kmag * B0)), float(np.max(kmag * cg)))


# --- certificate constants -------------------------------------------------------------------


@dataclass
class CertificateConstants:
    b: float
    epsilon: float
    epsilon1: float
    sup_kB0: float
    c_g: float
    c_s: float
    B1: float
    B3: float
    weighted_integral: float     # int_0^{q0} e^{-alpha0 q} |U|_l1 dq
    caveats: list[str]

    def __iter__(self):
        return iter((self.b, self.epsilon, self.epsilon1))

    def epsilon1_at(self, traj: BorelTrajectory, alpha: float) -> float:
        """The variant with ``e^{-alpha q}`` in place of ``e^{-alpha0 q}``."""
        a = _a(traj.config.n)
        B2_int = 4.0 * self.sup_kB0 * weighted_l1_integral(traj, alpha)
        return math.gamma(a) * (self.B1 + B2_int)


def certificate_constants(traj: BorelTrajectory, alpha0: float = 30.0, *,
                       sups: KernelSups | None = None, q_max: float | None = None,
                       stride: int | None = None, n_far: int = 12,
                       rtol: float = 0.05) -> CertificateConstants:
    """``(b, epsilon, epsilon1)`` with ``epsilon1`` in its ``alpha0`` form.

    ``b`` is evaluated at ``alpha = alpha0``; since ``alpha^a e^{-alpha q}``
    decreases in alpha for ``alpha q0 > a`` this overestimates ``b`` at any
    admissible ``alpha >= alpha0``.
    """
    _check_complete(traj)
    cfg = traj.config
    n = cfg.n
    a = _a(n)
    q0 = cfg.M * cfg.delta
    if sups is None:
        sups = kernel_sups(traj.grid.ksq, q0, cfg.nu, n)
    v0_l1 = l1_norm(SpectralVectorField(traj.grid, traj.v0, True, True))
    B1 = 4.0 * sups.sup_kB0 * v0_l1
    B3 = 2.0 * sups.sup_kB0
    wint = weighted_l1_integral(traj, alpha0)
    epsilon1 = math.gamma(a) * (B1 + 4.0 * sups.sup_kB0 * wint)
    epsilon = math.gamma(a) * B3
    ev = TailEvaluator(traj)
    # the tail matters only through 2 sqrt(epsilon b) against epsilon1
    floor = 1e-12 * max(epsilon1, 1e-300) ** 2 / max(4.0 * epsilon, 1e-300)
    b, c_s, _, _ = tail_integral(ev, alpha0, q_max, stride, n_far, rtol, floor)
    caveats = [CAVEAT_B0, CAVEAT_K, CAVEAT_TAIL]
    return CertificateConstants(b, epsilon, epsilon1, sups.sup_kB0, sups.c_g, c_s, B1, B3, wint,
                             caveats)


def certify(traj: BorelTrajectory, alpha0: float = 30.0, **kw) -> Certificate:
    """Run the whole pipeline on a trajectory and return the certificate."""
    c = certificate_constants(traj, alpha0, **kw)
    n = traj.config.n
    alpha, T = solve_alpha(c.b, c.epsilon, c.epsilon1, n, alpha0)
    q0 = traj.config.M * traj.config.delta
    return Certificate(q0=q0, alpha0=alpha0, n=n, b=c.b, epsilon=c.epsilon,
                       epsilon1=c.epsilon1, alpha_star=alpha, T=T, c_g=c.c_g, c_s=c.c_s,
                       caveats=list(c.caveats))


# --- comparison times ------------------------------------------------------------------------


@dataclass(frozen=True)
class CmTable:
    """Sobolev constants ``c_m`` as ``(m, c_m)`` pairs, interpolated in ``log c_m``."""

    m: np.ndarray
    c: np.ndarray

    def __call__(self, m):
        return np.exp(np.interp(m, self.m, np.log(self.c)))

    def scaled(self, factor: float) -> "CmTable":
        return CmTable(self.m, self.c * factor)

    def to_text(self) -> str:
        return "".join(f"{mi:.6f} {ci:.17g}\n" for mi, ci in zip(self.m, self.c))

    @classmethod
    def from_text(cls, text: str) -> "CmTable":
        rows = [line.replace(",", " ").split() for line in text.splitlines()
                if line.strip() and not line.lstrip().startswith("#")]
        arr = np.array(rows, dtype=float)
        order = np.argsort(arr[:, 0])
        return cls(arr[order, 0], arr[order, 1])


def _lattice_zeta(p: float, radius: int = 40) -> float:
    """``sum_{k in Z^3, k != 0} |k|^{-p}`` for ``p > 3``: direct sum plus a volume tail."""
    r = np.arange(-radius, radius + 1)
    ksq = (r[:, None, None] ** 2 + r[None, :, None] ** 2 + r[None, None, :] ** 2).ravel()
    inside = ksq[(ksq > 0) & (ksq <= radius * radius)].astype(float)
    # effective radius of the counted lattice points keeps the tail consistent
    reff = (3.0 * (inside.size + 1) / (4.0 * math.pi)) ** (1.0 / 3.0)
    return float(np.sum(inside ** (-0.5 * p)) + 4.0 * math.pi * reff ** (3.0 - p) / (p - 3.0))


def lattice_cm_table(scale: float = 1.0, m_grid=None) -> CmTable:
    """``c_m = scale (sum_{k != 0} |k|^{2 - 2m})^{1/2}``, finite for ``m > 5/2``.

    This is the Cauchy-Schwarz constant in ``sum |k||v(k)| <= c_m |D^m v|``,
    the quantity a Sobolev local-existence argument needs.
    """
    m = np.linspace(2.52, 6.0, 175) if m_grid is None else np.asarray(m_grid, dtype=float)
    if np.any(m <= 2.5):
        raise ValueError("the lattice constant needs m > 5/2")
    c = np.array([scale * math.sqrt(_lattice_zeta(2.0 * mi - 2.0)) for mi in m])
    return CmTable(m, c)


def shipped_cm_table() -> CmTable:
    """The calibrated lattice table shipped with the package (``data/cm_table.txt``).

    It is :func:`lattice_cm_table` rescaled by the one factor that puts the
    Kida ``T_cl`` at 0.01; :func:`calibrate_cm_table` regenerates it.
    """
    text = resources.files("borelns").joinpath("data/cm_table.txt").read_text()
    return CmTable.from_text(text)


def _sobolev_seminorm(v0: SpectralVectorField, m: float) -> float:
    ksq = v0.grid.ksq
    amp = np.sum(np.abs(v0.coeffs) ** 2, axis=0)
    nz = ksq > 0
    return float(math.sqrt(np.sum(ksq[nz] ** m * amp[nz])))


def classical_time(v0: SpectralVectorField, c_m_table: CmTable | None,
                   m_grid=None) -> tuple[float, float]:
    """``max_m 1 / (c_m |D^m v0|)`` over ``m in (5/2, 6]`` and its argmax.

    ``|D^m v0| = (sum |k|^{2m} |v0(k)|^2)^{1/2}``.
    """
    if c_m_table is None:
        raise CmTableMissing("classical_time needs a c_m table (see lattice_cm_table)")
    if m_grid is None:
        lo = max(2.5, float(c_m_table.m[0]))
        m_grid = np.linspace(lo, min(6.0, float(c_m_table.m[-1])), 701)
        m_grid = m_grid[m_grid > 2.5]
    m_grid = np.asarray(m_grid, dtype=float)
    T = np.array([1.0 / (c_m_table(m) * _sobolev_seminorm(v0, m)) for m in m_grid])
    i = int(np.argmax(T))
    return float(T[i]), float(m_grid[i])


def calibrate_cm_table(v0: SpectralVectorField, target: float,
                       base: CmTable | None = None) -> CmTable:
    """Rescale a c_m table by the single factor making ``T_cl`` equal ``target``."""
    base = lattice_cm_table() if base is None else base
    T, _ = classical_time(v0, base)
    return base.scaled(T / target)


def energy(v0: SpectralVectorField) -> float:
    """``E = 1/2 |v0|_{L^2}^2`` on ``[0, 2 pi]^3`` via Parseval."""
    return 0.5 * (2.0 * math.pi) ** 3 * float(np.sum(np.abs(v0.coeffs) ** 2))


def leray_Tc(E: float, nu: float, c4: float, delta_tilde: float = 0.0) -> tuple[float, float]:
    """Times after which a Leray weak solution is classical (real axis, sector).

    ``T_c = 256 E c4^3 (sqrt(nu) + sqrt 2)^2 (2 + sqrt(nu))^2 / (sqrt 3 nu^{9/2})``;
    ``T_ca`` replaces nu by ``nu cos(delta_tilde)`` except for one outer factor.
    """
    if not (E >= 0 and nu > 0 and c4 > 0 and 0 <= delta_tilde < math.pi / 2):
        raise ValueError("need E >= 0, nu > 0, c4 > 0 and 0 <= delta_tilde < pi/2")
    num = 256.0 * E * c4**3
    Tc = num * (math.sqrt(nu) + math.sqrt(2.0)) ** 2 * (2.0 + math.sqrt(nu)) ** 2 / (
        math.sqrt(3.0) * nu**4.5)
    nc = nu * math.cos(delta_tilde)
    Tca = num * (math.sqrt(nc) + math.sqrt(2.0)) ** 2 * (2.0 + math.sqrt(nc)) ** 2 / (
        math.sqrt(3.0) * nu * nc**3.5)
    return Tc, Tca


# --- decay fit -------------------------------------------------------------------------------


def decay_fit(traj_or_data, window: tuple[float, float], n: int | None = None
              ) -> tuple[float, float]:
    """Least-squares line ``log |U|_l1 ~ intercept + slope q^{1/(n+1)}`` on ``window``.

    ``traj_or_data`` is a trajectory or a ``(q, norms, n)`` triple.
    """
    if isinstance(traj_or_data, BorelTrajectory):
        q, nrm = traj_or_data.l1_norms()
        n = traj_or_data.config.n
    else:
        q, nrm, n = traj_or_data
        q, nrm = np.asarray(q, dtype=float), np.asarray(nrm, dtype=float)
    lo, hi = window
    sel = (q >= lo) & (q <= hi)
    if np.count_nonzero(sel) < 3:
        raise ValueError("fit window holds fewer than three samples")
    if np.any(nrm[sel] <= 0):
        raise ValueError("norms must be positive in the fit window")
    s = q[sel] ** (1.0 / (n + 1))
    slope, intercept = np.polyfit(s, np.log(nrm[sel]), 1)
    if slope >= 0:
        raise ValueError(f"tail does not decay on {window}: fitted slope {slope:.3g} >= 0")
    return float(slope), float(intercept)


# --- heuristic a priori rate -----------------------------------------------------------------


def sample_C2(ksq, nu: float, n: int, q_values=(0.5, 1.0, 2.0, 5.0, 10.0), n_d: int = 40
              ) -> float:
    """``sup nu^{1/2} |k| q^{1/2} (q - q')^{1/2 - 1/(2n)} |G|`` over sampled points."""
    ksq = np.unique(np.asarray(ksq, dtype=float))
    ksq = ksq[ksq > 0]
    lams = nu * ksq
    theta = bound_exponent(n)
    best = 0.0
    for q in q_values:
        for d in np.geomspace(1e-6 * q, q * (1 - 1e-6), n_d):
            g = np.abs(kernel_values(q, [q - d], lams, n)[0])
            best = max(best, float(np.max(math.sqrt(nu) * np.sqrt(ksq) * math.sqrt(q)
                                          * d**theta * g)))
    return best


def sample_c1(n: int, mu_max: float = 60.0, points: int = 2000) -> float:
    """``sup |U0 factor| q^{1 - 1/n} = sup_mu |G(mu) / mu|`` on real q (n >= 2)."""
    if n == 1:
        return 1.0
    mu = np.linspace(mu_max / points, mu_max, points)
    # G(mu) / mu -> 1 / Gamma(1/n) as mu -> 0, a point the grid does not contain
    return float(max(np.max(np.abs(eval_G(mu, n) / mu)), 1.0 / math.gamma(1.0 / n)))


def sample_CG(n: int, mu_max: float = 60.0, points: int = 4000) -> float:
    """``n int_0^inf |G(s)| / s ds`` along the real axis (trapezoid, truncated)."""
    s = np.linspace(mu_max / points, mu_max, points)
    g = np.abs(eval_G(s, n)) / s
    # near 0, G(s)/s tends to a constant
    return float(n * (trapezoid(g, s) + g[0] * s[0]))


def rough_alpha(v0: SpectralVectorField, f: SpectralVectorField | None, nu: float, n: int,
                C2: float, c1: float, rel_tol: float = 1e-10) -> float:
    """Smallest alpha with
    ``C2 nu^{-1/2} Gamma(1/(2n)) alpha^{-1/(2n)} {4 |v0| + 4 c1 Gamma(1/n) alpha^{-1/n} |v1|} < 1``.

    HEURISTIC: ``C2`` and ``c1`` are sampled sups, hence lower bounds.
    """
    v0n = l1_norm(v0)
    v1n = l1_norm(v1_field(v0, f))

    def lhs(alpha):
        return (C2 / math.sqrt(nu) * math.gamma(1.0 / (2 * n)) * alpha ** (-1.0 / (2 * n))
                * (4.0 * v0n + 4.0 * c1 * math.gamma(1.0 / n) * alpha ** (-1.0 / n) * v1n))

    # lhs decreases from +inf to 0; bracket the crossing, then bisect
    lo = hi = 1.0
    while lhs(lo) < 1.0:
        lo *= 0.5
    while lhs(hi) >= 1.0:
        hi *= 2.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if lhs(mid) < 1.0:
            hi = mid
        else:
            lo = mid
    return hi
