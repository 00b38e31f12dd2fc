"""The entire functions F and G behind the Borel-plane heat kernel.

For an acceleration order ``n >= 2``

    F(mu) = sum_j (-1)^j mu^j / (j! Gamma((j+1)/n)),
    G(mu) = -sum_{j>=1} (-1)^j mu^j / (j! Gamma(j/n)),

so that ``G' = F``, ``F(0) = 1/Gamma(1/n)`` and ``G(0) = 0``. Both are entire,
but their power series cancel catastrophically once ``mu`` is large, so beyond
a crossover point the n = 2 functions are evaluated from their exponentially
small asymptotic expansions in the singulant

    z = xi0 mu^{n/(n+1)} exp(i pi/(n+1)),   xi0 = (n+1) n^{-n/(n+1)}.

For n = 1 the same series are Bessel functions, ``F = J0(2 sqrt(mu))`` and
``G = sqrt(mu) J1(2 sqrt(mu))``, which gives a large-argument route for free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import special as sp

__all__ = [
    "SeriesNotConverged",
    "AsymptoticRegimeError",
    "SeriesResult",
    "series_ratios",
    "F_series",
    "G_series",
    "F_series_detail",
    "G_series_detail",
    "F_series_derivative",
    "asymptotic_coeffs_a",
    "asymptotic_coeffs_c",
    "singulant",
    "F_asymptotic",
    "G_asymptotic",
    "F_leading",
    "G_leading",
    "F_envelope",
    "G_envelope",
    "FGEvaluator",
    "default_evaluator",
    "eval_F",
    "eval_G",
    "bessel_kernel_pair",
    "calibrate_crossover",
]

# Crossover for n = 2, fixed by the overlap scan in ``calibrate_crossover``.
CROSSOVER_N2 = 13.0
ASYMPTOTIC_TERMS = 20
CANCELLATION_GUARD = 1e8


class SeriesNotConverged(ArithmeticError):
    """Power series terms were still growing at the term cap."""


class AsymptoticRegimeError(ValueError):
    """The asymptotic expansion was requested where it is not available."""


class SeriesResult(NamedTuple):
    value: float
    terms: int
    max_term: float
    converged: bool

    @property
    def safe(self) -> bool:
        """True while the largest term stays below the cancellation guard."""
        return self.max_term < CANCELLATION_GUARD * max(abs(self.value), 1e-300)


def _check_n(n: int) -> int:
    n = int(n)
    if n < 1:
        raise ValueError(f"acceleration order must be >= 1, got {n}")
    return n


@lru_cache(maxsize=None)
def series_ratios(n: int, which: str, jmax: int = 400) -> tuple[np.ndarray, float]:
    """Successive coefficient ratios of the F or G series.

    Returns ``(r, c0)`` with the leading coefficient ``c0`` and ``r[j]`` such
    that ``coef[j] = coef[j-1] * r[j]``. For G the series starts at j = 1, so
    ``c0`` is the j = 1 coefficient and ``r[0]`` is unused.
    """
    n = _check_n(n)
    j = np.arange(jmax + 1, dtype=float)
    r = np.zeros(jmax + 1)
    if which == "F":
        c0 = 1.0 / math.gamma(1.0 / n)
        # coef_j / coef_{j-1} = -Gamma(j/n) / (j Gamma((j+1)/n))
        jj = j[1:]
        r[1:] = -np.exp(sp.gammaln(jj / n) - sp.gammaln((jj + 1) / n)) / jj
    elif which == "G":
        c0 = 1.0 / math.gamma(1.0 / n)
        jj = j[2:]
        r[2:] = -np.exp(sp.gammaln((jj - 1) / n) - sp.gammaln(jj / n)) / jj
    else:
        raise ValueError(which)
    r.setflags(write=False)
    return r, c0


def _kahan_series(mu: float, ratios: np.ndarray, c0: float, start: int,
                  terms_max: int) -> SeriesResult:
    term = c0 * mu**start if start else c0
    total = term
    comp = 0.0
    max_term = abs(term)
    if mu == 0.0:
        return SeriesResult(total, 1, max_term, True)
    jmax = min(terms_max, len(ratios) - 1)
    past_peak = False
    for j in range(start + 1, jmax + 1):
        term *= mu * ratios[j]
        a = abs(term)
        if a > max_term:
            max_term = a
        else:
            past_peak = True
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if past_peak and (a <= 2.0**-60 * max_term or a < 1e-300):
            return SeriesResult(total, j - start + 1, max_term, True)
    return SeriesResult(total, jmax - start + 1, max_term, False)


def F_series_detail(mu: float, n: int = 2, terms_max: int = 400) -> SeriesResult:
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    r, c0 = series_ratios(_check_n(n), "F")
    return _kahan_series(float(mu), r, c0, 0, terms_max)


def G_series_detail(mu: float, n: int = 2, terms_max: int = 400) -> SeriesResult:
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        return SeriesResult(0.0, 0, 0.0, True)
    r, c0 = series_ratios(_check_n(n), "G")
    return _kahan_series(float(mu), r, c0, 1, terms_max)


def F_series(mu: float, n: int = 2, terms_max: int = 400) -> float:
    """Power-series value of F, raising when the series has not settled."""
    res = F_series_detail(mu, n, terms_max)
    if not res.converged:
        raise SeriesNotConverged(f"F series unconverged at mu={mu} after {res.terms} terms")
    return res.value


def G_series(mu: float, n: int = 2, terms_max: int = 400) -> float:
    res = G_series_detail(mu, n, terms_max)
    if not res.converged:
        raise SeriesNotConverged(f"G series unconverged at mu={mu} after {res.terms} terms")
    return res.value


def F_series_derivative(mu: float, order: int, n: int = 2, terms_max: int = 400) -> float:
    """Termwise derivative ``F^{(order)}(mu)`` of the power series."""
    n = _check_n(n)
    total = 0.0
    comp = 0.0
    max_term = 0.0
    for j in range(order, terms_max + 1):
        logc = -sp.gammaln(j + 1) - sp.gammaln((j + 1) / n) + sp.gammaln(j + 1) - sp.gammaln(j - order + 1)
        p = j - order
        if mu == 0.0:
            term = math.exp(logc) * (-1) ** j if p == 0 else 0.0
        else:
            term = (-1) ** j * math.exp(logc + p * math.log(mu))
        a = abs(term)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if a > max_term:
            max_term = a
        elif a <= 2.0**-60 * max_term:
            return total
    raise SeriesNotConverged(f"derivative series unconverged at mu={mu}")


# --- asymptotic regime, n = 2 -------------------------------------------------

@lru_cache(maxsize=None)
def _coeffs_a_exact(m_max: int) -> tuple[Fraction, ...]:
    a = [Fraction(1), Fraction(-1, 12)]
    for m in range(2, m_max + 1):
        a.append(-Fraction(1, 12 * m) * ((12 * m * m - 12 * m + 1) * a[m - 1]
                                         + (4 * m**3 - 12 * m**2 + 9 * m - 2) * a[m - 2]))
    return tuple(a[: m_max + 1])


@lru_cache(maxsize=None)
def _coeffs_c_exact(m_max: int) -> tuple[Fraction, ...]:
    c = [Fraction(1), Fraction(5, 12), Fraction(-35, 288)]
    for m in range(3, m_max + 1):
        c.append(Fraction(1, 24 * m) * ((-48 * m * m + 60 * m - 2) * c[m - 1]
                                        + (-32 * m**3 + 108 * m**2 - 80 * m + 9) * c[m - 2]
                                        + (-8 * m**4 + 52 * m**3 - 102 * m**2 + 67 * m - 14) * c[m - 3]))
    return tuple(c[: m_max + 1])


def asymptotic_coeffs_a(m_max: int, exact: bool = False):
    """Coefficients a_0..a_{m_max} of the n = 2 large-mu expansion of F."""
    if m_max < 2:
        raise ValueError("m_max must be >= 2")
    a = _coeffs_a_exact(m_max)
    return list(a) if exact else np.array([float(x) for x in a])


def asymptotic_coeffs_c(m_max: int, exact: bool = False):
    """Coefficients c_0..c_{m_max} of the n = 2 large-mu expansion of G."""
    if m_max < 2:
        raise ValueError("m_max must be >= 2")
    c = _coeffs_c_exact(m_max)
    return list(c) if exact else np.array([float(x) for x in c])


def singulant(mu, n: int = 2):
    n = _check_n(n)
    xi0 = (n + 1) * n ** (-n / (n + 1))
    return xi0 * np.asarray(mu, dtype=float) ** (n / (n + 1)) * np.exp(1j * np.pi / (n + 1))


def _truncated_sum(zinv: np.ndarray, coeffs: np.ndarray, terms: int) -> np.ndarray:
    """Sum coeffs[m] z^-m with optimal truncation, elementwise.

    Truncates after the term where ``max(|t_m|, |t_{m-1}|)`` is smallest; the
    pairwise max keeps an accidentally tiny coefficient from stopping the sum
    early.
    """
    zinv = np.asarray(zinv, dtype=complex)
    K = min(terms, len(coeffs) - 1)
    m = np.arange(K + 1).reshape((-1,) + (1,) * zinv.ndim)
    t = coeffs[: K + 1].reshape(m.shape) * zinv[None] ** m
    mag = np.abs(t)
    pair = np.maximum(mag[1:], mag[:-1])
    stop = 1 + np.argmin(pair, axis=0)
    keep = m <= stop[None]
    return np.sum(np.where(keep, t, 0.0), axis=0)


_PREF_F2 = 2.0 / math.sqrt(3.0 * math.pi)


def F_asymptotic(mu, terms: int = 10, n: int = 2, crossover: float | None = None):
    """Large-mu expansion of F for n = 2.

    The expansion reads ``(2/sqrt(3 pi)) Re{exp(-z) (1 + sum a_m z^-m)}``;
    equivalently ``Im{i exp(-z) ...}``, the phase that the leading-order formula
    for general n carries and that the contour quadrature confirms.
    """
    if n != 2:
        raise AsymptoticRegimeError("full asymptotic series only available for n = 2")
    mu_arr = np.asarray(mu, dtype=float)
    if crossover is not None and np.any(mu_arr < crossover):
        raise AsymptoticRegimeError("mu below crossover; use the power series")
    if np.any(mu_arr <= 0):
        raise AsymptoticRegimeError("asymptotic expansion needs mu > 0")
    z = singulant(mu_arr, 2)
    s = _truncated_sum(1.0 / z, asymptotic_coeffs_a(max(terms, 2)), terms)
    out = _PREF_F2 * np.real(np.exp(-z) * s)
    return out if out.ndim else float(out)


def G_asymptotic(mu, terms: int = 10, n: int = 2, crossover: float | None = None):
    """Large-mu expansion of G for n = 2."""
    if n != 2:
        raise AsymptoticRegimeError("full asymptotic series only available for n = 2")
    mu_arr = np.asarray(mu, dtype=float)
    if crossover is not None and np.any(mu_arr < crossover):
        raise AsymptoticRegimeError("mu below crossover; use the power series")
    if np.any(mu_arr <= 0):
        raise AsymptoticRegimeError("asymptotic expansion needs mu > 0")
    z = singulant(mu_arr, 2)
    s = _truncated_sum(1.0 / z, asymptotic_coeffs_c(max(terms, 2)), terms)
    pref = -np.cbrt(4.0 * mu_arr) / math.sqrt(3.0 * math.pi)
    out = pref * np.imag(np.exp(-z + 1j * np.pi / 6) * s)
    return out if out.ndim else float(out)


def F_leading(mu, n: int):
    """Leading-order large-mu behavior of F for any n >= 2."""
    mu = np.asarray(mu, dtype=float)
    z = singulant(mu, n)
    pref = math.sqrt(2 / math.pi) * n ** (3 / (2 * (n + 1))) / math.sqrt(n + 1)
    return pref * np.imag(mu ** ((n - 2) / (2 * (n + 1))) * np.exp(3j * np.pi / (2 * (n + 1))) * np.exp(-z))


def G_leading(mu, n: int):
    mu = np.asarray(mu, dtype=float)
    z = singulant(mu, n)
    pref = -math.sqrt(2 / math.pi) * n ** (1 / (2 * (n + 1))) / math.sqrt(n + 1)
    return pref * np.imag(mu ** (n / (2 * (n + 1))) * np.exp(1j * np.pi / (2 * (n + 1))) * np.exp(-z))


def F_envelope(mu, n: int = 2):
    """Modulus of the leading oscillatory factor of F; a scale for errors."""
    mu = np.asarray(mu, dtype=float)
    z = singulant(mu, n)
    pref = math.sqrt(2 / math.pi) * n ** (3 / (2 * (n + 1))) / math.sqrt(n + 1)
    return pref * mu ** ((n - 2) / (2 * (n + 1))) * np.abs(np.exp(-z))


def G_envelope(mu, n: int = 2):
    mu = np.asarray(mu, dtype=float)
    z = singulant(mu, n)
    pref = math.sqrt(2 / math.pi) * n ** (1 / (2 * (n + 1))) / math.sqrt(n + 1)
    return pref * mu ** (n / (2 * (n + 1))) * np.abs(np.exp(-z))


# --- dispatching evaluator ----------------------------------------------------

def _vector_series(mu: np.ndarray, ratios: np.ndarray, c0: float, start: int) -> np.ndarray:
    """Vectorized Kahan-summed series over an array of mu values."""
    out = np.zeros_like(mu)
    if mu.size == 0:
        return out
    term = c0 * mu**start
    total = term.copy()
    comp = np.zeros_like(mu)
    max_term = np.abs(term)
    for j in range(start + 1, len(ratios)):
        term = term * (mu * ratios[j])
        a = np.abs(term)
        max_term = np.maximum(max_term, a)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if np.all((a <= 2.0**-60 * max_term) | (a < 1e-300)) and j > 4:
            return total
    raise SeriesNotConverged("vectorized series did not settle")


@dataclass(frozen=True)
class FGEvaluator:
    """Regime-dispatching evaluator for F and G at a fixed order n."""

    n: int = 2
    series_terms_max: int = 400
    asymptotic_terms: int = ASYMPTOTIC_TERMS
    crossover_mu: float = CROSSOVER_N2
    coeffs_a: np.ndarray = field(init=False, repr=False, compare=False)
    coeffs_c: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_n(self.n)
        if self.crossover_mu <= 0:
            raise ValueError("crossover_mu must be positive")
        m_max = max(self.asymptotic_terms, 2)
        object.__setattr__(self, "coeffs_a", asymptotic_coeffs_a(m_max))
        object.__setattr__(self, "coeffs_c", asymptotic_coeffs_c(m_max))

    def regime(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.where(mu <= self.crossover_mu, "series", "asymptotic")

    def _dispatch(self, mu, which: str):
        mu_arr = np.atleast_1d(np.asarray(mu, dtype=float))
        if np.any(mu_arr < 0) or not np.all(np.isfinite(mu_arr)):
            raise ValueError("mu must be finite and nonnegative")
        out = np.empty_like(mu_arr)
        lo = mu_arr <= self.crossover_mu
        r, c0 = series_ratios(self.n, which, self.series_terms_max)
        out[lo] = _vector_series(mu_arr[lo], r, c0, 0 if which == "F" else 1)
        hi = ~lo
        if np.any(hi):
            x = mu_arr[hi]
            if self.n == 2:
                out[hi] = (F_asymptotic(x, self.asymptotic_terms) if which == "F"
                           else G_asymptotic(x, self.asymptotic_terms))
            elif self.n == 1:
                s = 2.0 * np.sqrt(x)
                out[hi] = sp.j0(s) if which == "F" else np.sqrt(x) * sp.j1(s)
            else:
                raise AsymptoticRegimeError(
                    f"mu > {self.crossover_mu} needs asymptotics, unsupported for n={self.n}")
        if np.ndim(mu) == 0:
            return float(out[0])
        return out.reshape(np.shape(mu))

    def F(self, mu):
        return self._dispatch(mu, "F")

    def G(self, mu):
        return self._dispatch(mu, "G")

    def fast_tables(self) -> tuple[np.ndarray, float, np.ndarray]:
        """Arrays consumed by the compiled kernel: (F ratios, F(0), a_m)."""
        r, c0 = series_ratios(self.n, "F", self.series_terms_max)
        return np.ascontiguousarray(r), c0, np.ascontiguousarray(self.coeffs_a)


@lru_cache(maxsize=None)
def default_evaluator(n: int = 2) -> FGEvaluator:
    crossover = CROSSOVER_N2 if n == 2 else (30.0 if n == 1 else 60.0)
    return FGEvaluator(n=n, crossover_mu=crossover)


def eval_F(mu, n: int = 2):
    return default_evaluator(n).F(mu)


def eval_G(mu, n: int = 2):
    return default_evaluator(n).G(mu)


def bessel_kernel_pair(z):
    """(J1(z), Y1(z)) for z > 0."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0):
        raise ValueError("Y1 needs z > 0")
    j1, y1 = sp.j1(z_arr), sp.y1(z_arr)
    if j1.ndim == 0:
        return float(j1), float(y1)
    return j1, y1


def calibrate_crossover(candidates=None, terms: int = ASYMPTOTIC_TERMS, window: float = 0.2,
                        samples: int = 41) -> tuple[float, float]:
    """Choose the n = 2 crossover minimizing the worst series/asymptotic gap.

    The gap is measured on ``[(1-window) c, (1+window) c]`` for each candidate
    ``c``, relative to the envelope of F (F itself has zeros there).
    Returns ``(best_c, worst_gap_at_best_c)``.
    """
    if candidates is None:
        candidates = np.arange(12.0, 30.5, 1.0)
    best = (math.nan, math.inf)
    for c in candidates:
        mus = np.linspace((1 - window) * c, (1 + window) * c, samples)
        ser = np.array([F_series(m) for m in mus])
        asy = F_asymptotic(mus, terms)
        gap = float(np.max(np.abs(ser - asy) / F_envelope(mus)))
        if gap < best[1]:
            best = (float(c), gap)
    return best
