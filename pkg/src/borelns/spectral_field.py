"""Dense Fourier-coefficient vector fields on the periodic box [0, 2pi]^3.

Coefficients live on the cube k in [-N, N]^3, stored centered: array index
``a`` along an axis holds wavenumber ``a - N``. A vector field is a
``(3, 2N+1, 2N+1, 2N+1)`` complex array; physical values are recovered as
``v(x) = sum_k vhat(k) exp(i k.x)``.

Products are formed on a zero-padded collocation grid of ``L >= 3N + 1``
points per axis (the 3/2 rule), which makes the truncated quadratic
convolution exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as spfft

__all__ = [
    "WavevectorGrid",
    "SpectralVectorField",
    "ScalarModeField",
    "GridMismatch",
    "hodge_project",
    "convolve",
    "l1_norm",
    "nonlinear_rhs",
    "v1_field",
    "kida_initial",
    "to_physical",
    "from_physical",
    "symmetrize",
    "trig_modes",
]


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class WavevectorGrid:
    """Galerkin cube [-N, N]^3 together with the viscosity."""

    N: int
    nu: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def M(self) -> int:
        return 2 * self.N + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.M, self.M, self.M)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavevectors, shape (3, M, M, M)."""
        r = np.arange(-self.N, self.N + 1)
        return np.stack(np.meshgrid(r, r, r, indexing="ij"))

    @cached_property
    def ksq(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def pad(self) -> int:
        """Collocation points per axis used for products."""
        return spfft.next_fast_len(3 * self.N + 1, real=True)

    @cached_property
    def _rfft_index(self):
        L = self.pad
        idx = np.arange(-self.N, self.N + 1) % L
        return (idx[:, None, None], idx[None, :, None], np.arange(self.N + 1)[None, None, :])

    @cached_property
    def _cfft_index(self):
        idx = np.arange(-self.N, self.N + 1) % self.pad
        return (idx[:, None, None], idx[None, :, None], idx[None, None, :])

    def zeros(self, ncomp: int | None = 3) -> np.ndarray:
        shape = self.shape if ncomp is None else (ncomp,) + self.shape
        return np.zeros(shape, dtype=complex)

    def collocation_points(self, L: int | None = None) -> np.ndarray:
        L = self.pad if L is None else L
        x = 2 * np.pi * np.arange(L) / L
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))


def _check_same_grid(*grids: WavevectorGrid) -> None:
    g0 = grids[0]
    for g in grids[1:]:
        if g.N != g0.N:
            raise GridMismatch(f"grid half-widths differ: {g0.N} vs {g.N}")


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    """Complex 3-vector of Fourier coefficients per wavevector."""

    grid: WavevectorGrid
    coeffs: np.ndarray
    real: bool = True
    solenoidal: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (3,) + self.grid.shape:
            raise ValueError(f"coeffs shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: WavevectorGrid) -> "SpectralVectorField":
        return cls(grid, grid.zeros(), True, True)

    def replace(self, coeffs: np.ndarray, **flags) -> "SpectralVectorField":
        kw = dict(real=self.real, solenoidal=self.solenoidal)
        kw.update(flags)
        return SpectralVectorField(self.grid, coeffs, **kw)

    def _combine(self, other, op) -> "SpectralVectorField":
        if isinstance(other, SpectralVectorField):
            _check_same_grid(self.grid, other.grid)
            return SpectralVectorField(self.grid, op(self.coeffs, other.coeffs),
                                       self.real and other.real,
                                       self.solenoidal and other.solenoidal)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return self.replace(-self.coeffs)

    def __mul__(self, s):
        if np.iscomplexobj(s) and np.imag(s) != 0:
            return SpectralVectorField(self.grid, self.coeffs * s, False, self.solenoidal)
        return self.replace(self.coeffs * float(np.real(s)))

    __rmul__ = __mul__

    def l1_norm(self, j: int = 0) -> float:
        return l1_norm(self, j)

    def mean_mode(self) -> np.ndarray:
        N = self.grid.N
        return self.coeffs[:, N, N, N]

    def hermitian_defect(self) -> float:
        c = self.coeffs
        return float(np.max(np.abs(c - np.conj(c[:, ::-1, ::-1, ::-1])), initial=0.0))

    def divergence_defect(self) -> float:
        return float(np.max(np.abs(np.sum(self.grid.k * self.coeffs, axis=0)), initial=0.0))


@dataclass(frozen=True, eq=False)
class ScalarModeField:
    """One complex number per wavevector (for |k|^2, per-mode bounds, ...)."""

    grid: WavevectorGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar mode field must be finite")
        object.__setattr__(self, "values", v)


# --- transforms ---------------------------------------------------------------

def _pin_mean(c: np.ndarray, N: int) -> np.ndarray:
    c[..., N, N, N] = 0.0
    return c


def to_physical(coeffs: np.ndarray, N: int, L: int) -> np.ndarray:
    """Real physical samples of Hermitian coefficients on an L^3 grid."""
    g = WavevectorGrid(N)
    lead = coeffs.shape[:-3]
    half = np.zeros(lead + (L, L, L // 2 + 1), dtype=complex)
    if L == g.pad:
        I, J, K = g._rfft_index
    else:
        idx = np.arange(-N, N + 1) % L
        I, J, K = idx[:, None, None], idx[None, :, None], np.arange(N + 1)[None, None, :]
    half[..., I, J, K] = coeffs[..., :, :, N:]
    return spfft.irfftn(half, s=(L, L, L), axes=(-3, -2, -1)) * float(L) ** 3


def from_physical(phys: np.ndarray, N: int) -> np.ndarray:
    """Coefficients with |k_i| <= N of a real field sampled on an L^3 grid."""
    L = phys.shape[-1]
    h = spfft.rfftn(phys, axes=(-3, -2, -1)) / float(L) ** 3
    idx = np.arange(-N, N + 1) % L
    half = h[..., idx[:, None, None], idx[None, :, None], np.arange(N + 1)[None, None, :]]
    lead = phys.shape[:-3]
    M = 2 * N + 1
    full = np.zeros(lead + (M, M, M), dtype=complex)
    full[..., N:] = half
    rev = full[..., ::-1, ::-1, ::-1]
    full[..., :N] = np.conj(rev[..., :N])
    return full


def _to_physical_complex(coeffs: np.ndarray, N: int, L: int) -> np.ndarray:
    idx = np.arange(-N, N + 1) % L
    out = np.zeros(coeffs.shape[:-3] + (L, L, L), dtype=complex)
    out[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]] = coeffs
    return spfft.ifftn(out, axes=(-3, -2, -1)) * float(L) ** 3


def _from_physical_complex(phys: np.ndarray, N: int) -> np.ndarray:
    L = phys.shape[-1]
    h = spfft.fftn(phys, axes=(-3, -2, -1)) / float(L) ** 3
    idx = np.arange(-N, N + 1) % L
    return h[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]]


def symmetrize(coeffs: np.ndarray) -> np.ndarray:
    """Project onto Hermitian-symmetric coefficients, c(-k) = conj c(k)."""
    return 0.5 * (coeffs + np.conj(coeffs[..., ::-1, ::-1, ::-1]))


# --- operations ---------------------------------------------------------------

def project_array(c: np.ndarray, k: np.ndarray, ksq: np.ndarray) -> np.ndarray:
    """P_k c = c - k (k.c) / |k|^2 with the k = 0 mode set to zero."""
    safe = np.where(ksq == 0, 1, ksq)
    kdotc = np.sum(k * c, axis=0)
    out = c - k * (kdotc / safe)
    out[:, ksq == 0] = 0.0
    return out


def hodge_project(f: SpectralVectorField) -> SpectralVectorField:
    g = f.grid
    return f.replace(project_array(f.coeffs, g.k, g.ksq), solenoidal=True)


def _raw(x):
    if isinstance(x, SpectralVectorField):
        return x.grid, x.coeffs, x.real
    if isinstance(x, ScalarModeField):
        return x.grid, x.values, False
    raise TypeError(f"unsupported field type {type(x).__name__}")


def convolve_arrays(a: np.ndarray, b: np.ndarray, N: int, real: bool = False,
                    L: int | None = None) -> np.ndarray:
    """Truncated Fourier convolution of coefficient arrays (broadcasting)."""
    L = WavevectorGrid(N).pad if L is None else L
    if real:
        out = from_physical(to_physical(a, N, L) * to_physical(b, N, L), N)
    else:
        out = _from_physical_complex(_to_physical_complex(a, N, L) * _to_physical_complex(b, N, L), N)
    return out


def convolve(a, b):
    """Dealiased Fourier convolution ``sum_k' a(k') b(k - k')`` on the cube.

    Vector fields convolve componentwise; a scalar field broadcasts against a
    vector field. The result's k = 0 mode is pinned to zero.
    """
    ga, ca, ra = _raw(a)
    gb, cb, rb = _raw(b)
    _check_same_grid(ga, gb)
    out = _pin_mean(convolve_arrays(ca, cb, ga.N, ra and rb), ga.N)
    if out.ndim == 4:
        return SpectralVectorField(ga, out, ra and rb, False)
    return ScalarModeField(ga, out)


def l1_norm(f, j: int = 0) -> float:
    """``sum_k |k|^j |f(k)|`` with the Euclidean magnitude of vector values."""
    if j not in (0, 1, 2, 3):
        raise ValueError("weight exponent must be 0..3")
    g, c, _ = _raw(f)
    mag = np.sqrt(np.sum(np.abs(c) ** 2, axis=0)) if c.ndim == 4 else np.abs(c)
    return float(np.sum(g.kmag**j * mag))


def nonlinear_arrays(u: np.ndarray, w: np.ndarray, grid: WavevectorGrid,
                     real: bool = True) -> np.ndarray:
    """``-i k_j P_k[u_j * w]`` for coefficient arrays."""
    N, L = grid.N, grid.pad
    if real:
        pu, pw = to_physical(u, N, L), to_physical(w, N, L)
        tensor = from_physical(pu[None, :] * pw[:, None], N)  # T[i, j] = w_i u_j
    else:
        pu, pw = _to_physical_complex(u, N, L), _to_physical_complex(w, N, L)
        tensor = _from_physical_complex(pu[None, :] * pw[:, None], N)
    div = -1j * np.einsum("jabc,ijabc->iabc", grid.k, tensor)
    return project_array(div, grid.k, grid.ksq)


def nonlinear_rhs(u: SpectralVectorField, w: SpectralVectorField) -> SpectralVectorField:
    """``-i k_j P_k[u_j * w]``, the building block of the NS nonlinearity."""
    _check_same_grid(u.grid, w.grid)
    real = u.real and w.real
    return SpectralVectorField(u.grid, nonlinear_arrays(u.coeffs, w.coeffs, u.grid, real),
                               real, True)


def v1_field(v0: SpectralVectorField, f: SpectralVectorField | None = None) -> SpectralVectorField:
    """``f - nu |k|^2 v0 - i k_j P_k[v0_j * v0]``, the initial time derivative."""
    g = v0.grid
    out = -g.nu * g.ksq * v0.coeffs + nonlinear_arrays(v0.coeffs, v0.coeffs, g, v0.real)
    real = v0.real
    if f is not None:
        _check_same_grid(g, f.grid)
        out = out + f.coeffs
        real = real and f.real
    return SpectralVectorField(g, _pin_mean(out, g.N), real, v0.solenoidal)


# --- the Kida initial condition ----------------------------------------------

def trig_modes(factors) -> dict[tuple[int, int, int], complex]:
    """Expand a product of axis-aligned sines/cosines into exponentials.

    ``factors`` is a sequence of ``(kind, axis, wavenumber)`` with kind
    ``"sin"`` or ``"cos"``. Returns ``{k: coefficient}``.
    """
    modes: dict[tuple[int, int, int], complex] = {(0, 0, 0): 1.0 + 0j}
    for kind, axis, m in factors:
        if kind == "cos":
            parts = ((m, 0.5), (-m, 0.5))
        elif kind == "sin":
            parts = ((m, -0.5j), (-m, 0.5j))
        else:
            raise ValueError(kind)
        new: dict[tuple[int, int, int], complex] = {}
        for k, c in modes.items():
            for dm, w in parts:
                kk = list(k)
                kk[axis] += dm
                key = tuple(kk)
                new[key] = new.get(key, 0) + c * w
        modes = new
    return {k: c for k, c in modes.items() if c != 0}


def _kida_first_component() -> dict[tuple[int, int, int], complex]:
    a = trig_modes([("sin", 0, 1), ("cos", 1, 3), ("cos", 2, 1)])
    b = trig_modes([("sin", 0, 1), ("cos", 1, 1), ("cos", 2, 3)])
    out = dict(a)
    for k, c in b.items():
        out[k] = out.get(k, 0) - c
    return {k: c for k, c in out.items() if c != 0}


def kida_initial(grid: WavevectorGrid) -> SpectralVectorField:
    """Exact Fourier coefficients of the Kida flow.

    First component ``sin x1 (cos 3x2 cos x3 - cos x2 cos 3x3)``; the others
    follow by cyclic permutation of the coordinates.
    """
    if grid.N < 3:
        raise ValueError("the Kida flow has modes up to |k_i| = 3; need N >= 3")
    N = grid.N
    c = grid.zeros()
    base = _kida_first_component()
    for comp in range(3):
        for (k1, k2, k3), val in base.items():
            # v^(comp)(x) = v^(1)(x_{comp+1}, x_{comp+2}, x_{comp}) cyclically
            k = [0, 0, 0]
            k[comp % 3], k[(comp + 1) % 3], k[(comp + 2) % 3] = k1, k2, k3
            c[comp, k[0] + N, k[1] + N, k[2] + N] += val
    return SpectralVectorField(grid, c, real=True, solenoidal=True)
