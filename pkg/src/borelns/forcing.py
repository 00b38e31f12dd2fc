"""Forcing terms in the two forms the solver consumes.

The startup recursion needs the Taylor coefficients ``f_m`` of ``f(t)`` at
``t = 0``; the Borel-plane equation needs the Borel transform ``F(q)`` of
``f(t) - f(0)``, i.e. ``f(t) - f(0) = int_0^inf F(q) exp(-q/t^n) dq``.
A static forcing has ``F = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .spectral_field import SpectralVectorField

__all__ = ["Forcing", "StaticForcing", "RationalForcing", "rational_borel", "as_forcing"]


class Forcing:
    """Interface: ``taylor(m)`` and ``borel(q)`` return coefficient arrays."""

    grid = None

    def taylor(self, m: int) -> np.ndarray:
        raise NotImplementedError

    def borel(self, q: float, n: int) -> np.ndarray | None:
        """Borel transform at q, or None when it vanishes identically."""
        raise NotImplementedError

    @property
    def static(self) -> bool:
        return False


@dataclass(frozen=True)
class StaticForcing(Forcing):
    field: SpectralVectorField | None

    def taylor(self, m: int):
        if self.field is None or m > 0:
            return None
        return self.field.coeffs

    def borel(self, q, n):
        return None

    @property
    def static(self) -> bool:
        return True


def rational_borel(q, j: int, n: int, terms: int = 200):
    """Borel transform of ``(1 + t)^{-j} - 1`` at order n, for j = 1, 2, 3.

    Series ``sum_{m>=1} (-1)^m C(m+j-1, j-1) q^{m/n-1} / Gamma(m/n)``; for
    n = 2 and j <= 2 the closed forms in ``erfcx`` are used instead.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("q must be positive")
    if n == 2 and j in (1, 2):
        r = np.sqrt(q)
        g1 = sp.erfcx(r) - 1.0 / np.sqrt(np.pi * q)
        if j == 1:
            return g1
        # g2 = g1 + 2 (q g1)'
        return 3.0 * g1 + 2.0 * q * g1 + 1.0 / np.sqrt(np.pi * q)
    if j not in (1, 2, 3):
        raise ValueError("j must be 1, 2 or 3")
    out = np.zeros_like(q)
    comp = np.zeros_like(q)
    biggest = np.zeros_like(q)
    for m in range(1, terms + 1):
        lg = (m / n - 1.0) * np.log(q) - sp.gammaln(m / n)
        term = (-1) ** m * math.comb(m + j - 1, j - 1) * np.exp(lg)
        biggest = np.maximum(biggest, np.abs(term))
        y = term - comp
        t = out + y
        comp = (t - out) - y
        out = t
        if m > 2 * n and np.all(np.abs(term) < 1e-17 * np.maximum(np.abs(out), 1e-300)):
            break
    if np.any(biggest > 1e8 * np.maximum(np.abs(out), 1e-300)):
        raise ArithmeticError("rational Borel series lost its precision at this q")
    return out


@dataclass(frozen=True)
class RationalForcing(Forcing):
    """``f(t) = sum_j C_j / (1 + t)^j`` with coefficient fields ``C_j``."""

    parts: tuple[tuple[int, SpectralVectorField], ...]

    @property
    def grid(self):
        return self.parts[0][1].grid

    def taylor(self, m: int):
        out = None
        for j, c in self.parts:
            w = (-1) ** m * math.comb(m + j - 1, j - 1)
            out = w * c.coeffs if out is None else out + w * c.coeffs
        return out

    def borel(self, q, n):
        out = None
        for j, c in self.parts:
            g = float(rational_borel(q, j, n))
            out = g * c.coeffs if out is None else out + g * c.coeffs
        return out

    def at_time(self, t: float) -> np.ndarray:
        return sum(c.coeffs / (1.0 + t) ** j for j, c in self.parts)


def as_forcing(f) -> Forcing:
    if isinstance(f, Forcing):
        return f
    if f is None or isinstance(f, SpectralVectorField):
        return StaticForcing(f)
    raise TypeError(f"cannot interpret {type(f).__name__} as a forcing")
