"""Binary and text persistence for fields, trajectories and CSV tables.

Field snapshot (``BNSF``), little endian::

    magic "BNSF" | version u32 | N u32 | flags u32 | (2N+1)^3 x 3 complex128

with coefficients in lexicographic k order (k1 slowest, each running from
-N to N) and flags bit 0 = real, bit 1 = solenoidal.

Trajectory (``BNST``)::

    magic "BNST" | version u32 | nbytes u32 | config echo (utf-8 key = value)
    | count u32 | count x (tag i32 | BNSF record)

Tags: ``-1`` v0, ``-2`` v1, ``-3`` static forcing, ``-(100 + m)`` Taylor
coefficient c_m, ``-(200 + m)`` its right-hand-side coefficient, ``m >= 0``
the slice U at node m (from m_s on) and ``1_000_000 + m`` the right-hand
side R at node m (from 1 on).
"""

from __future__ import annotations

import csv
import io
import math
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .forcing import StaticForcing
from .marcher import BorelTrajectory, MarchConfig
from .spectral_field import SpectralVectorField, WavevectorGrid, l1_norm
from .startup import TaylorSeries

__all__ = [
    "write_field",
    "read_field",
    "field_bytes",
    "field_from_bytes",
    "write_field_csv",
    "write_trajectory",
    "read_trajectory",
    "write_csv",
    "echo_lines",
]

FIELD_MAGIC = b"BNSF"
TRAJ_MAGIC = b"BNST"
FIELD_VERSION = 1
TRAJ_VERSION = 1
_R_OFFSET = 1_000_000


def field_bytes(f: SpectralVectorField) -> bytes:
    flags = (1 if f.real else 0) | (2 if f.solenoidal else 0)
    head = FIELD_MAGIC + struct.pack("<III", FIELD_VERSION, f.grid.N, flags)
    # (3, M, M, M) -> (M, M, M, 3): three components per wavevector
    body = np.ascontiguousarray(np.moveaxis(f.coeffs, 0, -1)).astype("<c16").tobytes()
    return head + body


def field_from_bytes(raw: bytes, nu: float = 1.0, offset: int = 0
                     ) -> tuple[SpectralVectorField, int]:
    """Parse one BNSF record at ``offset``; returns the field and the next offset."""
    if raw[offset:offset + 4] != FIELD_MAGIC:
        raise ValueError("not a BNSF field record")
    version, N, flags = struct.unpack_from("<III", raw, offset + 4)
    if version != FIELD_VERSION:
        raise ValueError(f"unsupported field version {version}")
    M = 2 * N + 1
    count = M**3 * 3
    start = offset + 16
    data = np.frombuffer(raw, "<c16", count, start).reshape(M, M, M, 3)
    grid = WavevectorGrid(N, nu)
    f = SpectralVectorField(grid, np.moveaxis(data, -1, 0).copy(), bool(flags & 1),
                            bool(flags & 2))
    return f, start + 16 * count


def write_field(f: SpectralVectorField, path) -> None:
    Path(path).write_bytes(field_bytes(f))


def read_field(path, nu: float = 1.0) -> SpectralVectorField:
    raw = Path(path).read_bytes()
    f, end = field_from_bytes(raw, nu)
    if end != len(raw):
        raise ValueError("trailing bytes after the field record")
    return f


def write_field_csv(f: SpectralVectorField, path, echo: list[str] | None = None) -> None:
    """Rows ``k1, k2, k3, re1, im1, re2, im2, re3, im3`` for the nonzero modes."""
    N = f.grid.N
    rows = []
    for idx in zip(*np.nonzero(np.any(f.coeffs != 0, axis=0))):
        c = f.coeffs[(slice(None),) + idx]
        k = [i - N for i in idx]
        rows.append(k + [x for z in c for x in (f"{z.real:.17g}", f"{z.imag:.17g}")])
    write_csv(path, ["k1", "k2", "k3", "re1", "im1", "re2", "im2", "re3", "im3"], rows, echo)


# --- trajectories ---------------------------------------------------------------------


def _config_text(cfg: MarchConfig, extra: dict | None = None) -> str:
    items = {f: getattr(cfg, f) for f in ("N", "nu", "n", "delta", "q0", "qm", "m0",
                                           "quad_level")}
    if extra:
        items.update(extra)
    return "".join(f"{k} = {v!r}\n" for k, v in items.items())


def _parse_config(text: str) -> tuple[MarchConfig, dict]:
    vals = {}
    for line in text.splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            vals[k.strip()] = v.strip()
    cast = {"N": int, "n": int, "m0": int, "nu": float, "delta": float, "q0": float,
            "qm": float, "quad_level": float}
    cfg = MarchConfig(**{k: fn(vals.pop(k)) for k, fn in cast.items()})
    extra = {k: v.strip("'\"") for k, v in vals.items()}
    return cfg, extra


def write_trajectory(traj: BorelTrajectory, path, extra: dict | None = None) -> None:
    """Persist everything later stages need: config, v0, v1, startup data and slices."""
    cfg = traj.config
    g = traj.grid
    text = _config_text(cfg, extra).encode()
    records: list[tuple[int, np.ndarray]] = [(-1, traj.v0), (-2, traj.v1)]
    if traj.forcing is not None and traj.forcing.static:
        f0 = traj.forcing.taylor(0)
        if f0 is not None:
            records.append((-3, f0))
    ts = traj.startup
    for m in range(ts.m0):
        records.append((-(100 + m + 1), ts.c[m]))
        records.append((-(200 + m + 1), ts.rho[m]))
    for m in range(cfg.m_s, traj.completed + 1):
        records.append((m, traj.U[m]))
    for m in range(1, traj.completed + 1):
        records.append((_R_OFFSET + m, traj.R[m]))
    buf = io.BytesIO()
    buf.write(TRAJ_MAGIC + struct.pack("<II", TRAJ_VERSION, len(text)) + text)
    buf.write(struct.pack("<I", len(records)))
    for tag, arr in records:
        buf.write(struct.pack("<i", tag))
        buf.write(field_bytes(SpectralVectorField(g, arr, True, True)))
    Path(path).write_bytes(buf.getvalue())


def read_trajectory(path) -> tuple[BorelTrajectory, dict]:
    """Inverse of :func:`write_trajectory`; returns the trajectory and extra config keys."""
    raw = Path(path).read_bytes()
    if raw[:4] != TRAJ_MAGIC:
        raise ValueError("not a BNST trajectory file")
    version, nbytes = struct.unpack_from("<II", raw, 4)
    if version != TRAJ_VERSION:
        raise ValueError(f"unsupported trajectory version {version}")
    cfg, extra = _parse_config(raw[12:12 + nbytes].decode())
    off = 12 + nbytes
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    g = cfg.grid()
    shape = (cfg.M + 1, 3) + g.shape
    U = np.zeros(shape, dtype=complex)
    R = np.zeros(shape, dtype=complex)
    c, rho = {}, {}
    v0 = v1 = f0 = None
    completed = -1
    for _ in range(count):
        (tag,) = struct.unpack_from("<i", raw, off)
        f, off = field_from_bytes(raw, cfg.nu, off + 4)
        a = f.coeffs
        if tag == -1:
            v0 = a
        elif tag == -2:
            v1 = a
        elif tag == -3:
            f0 = f
        elif -200 < tag <= -101:
            c[-tag - 100] = a
        elif tag <= -201:
            rho[-tag - 200] = a
        elif tag >= _R_OFFSET:
            R[tag - _R_OFFSET] = a
        else:
            U[tag] = a
            completed = max(completed, tag)
    if v0 is None or v1 is None or not c:
        raise ValueError("trajectory file lacks its initial data")
    m0 = len(c)
    ts = TaylorSeries(grid=g, n=cfg.n, v0=v0, c=np.array([c[m] for m in range(1, m0 + 1)]),
                      rho=np.array([rho[m] for m in range(1, m0 + 1)]), qm=cfg.qm)
    norms = np.full(cfg.M + 1, np.nan)
    for m in range(cfg.m_s, completed + 1):
        norms[m] = l1_norm(SpectralVectorField(g, U[m], True, True))
    forcing = StaticForcing(f0) if f0 is not None else None
    traj = BorelTrajectory(config=cfg, v0=v0, v1=v1, startup=ts, U=U, R=R, norms=norms,
                           forcing=forcing, completed=completed)
    return traj, extra


# --- CSV ------------------------------------------------------------------------------


def echo_lines(items: dict) -> list[str]:
    """Comment lines carrying the version stamp and the configuration."""
    lines = [f"borelns {__version__}"]
    lines += [f"{k} = {v}" for k, v in items.items()]
    return lines


def _fmt(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else f"{x:.17g}"
    return x


def write_csv(path, header: list[str], rows, echo: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in echo or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
