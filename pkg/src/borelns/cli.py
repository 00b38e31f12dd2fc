"""Command-line front end: ``borelns <command> [--config FILE] [--key value ...]``.

Configuration is flat ``key = value`` text; every key can also be given as a
flag, and flags win over the file. Keys:

=================  ===========================================================
problem            ``kida``, ``manufactured`` or ``file``
N, nu, n           truncation, viscosity, acceleration order
delta, q0, qm, m0  march step, march end, startup radius, Taylor terms
quad_level         product-integration refinement level
alpha0             lower bound for the certified decay rate
output_dir         directory for every output and relative input path
c4                 constant for the Leray comparison time (omit to skip it)
c_m_table_path     ``m c_m`` table for the classical time (default: shipped)
init_path          BNSF initial field when ``problem = file``
forcing_path       optional BNSF static forcing when ``problem = file``
=================  ===========================================================

Exit codes: 0 success, 2 configuration error, 3 numerical abort, 4 certificate
refused. ``THREADS`` in the environment caps the numba worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .certifier import (Certificate, CertificateRefused, CmTable, classical_time, certify,
                        energy, leray_Tc, shipped_cm_table, solve_alpha)
from .forcing import StaticForcing
from .io import echo_lines, read_field, read_trajectory, write_csv, write_field, \
    write_field_csv, write_trajectory
from .marcher import MarchAborted, MarchConfig, Marcher, _weight
from .special_functions import default_evaluator
from .spectral_field import SpectralVectorField, kida_initial, l1_norm, to_physical
from .startup import taylor_coeffs
from .synthesis import (InadmissibleTime, LaplaceEvaluator, convergence_study,
                        format_convergence_table, manufactured_case, write_convergence_csv)

__all__ = ["RunConfig", "ConfigError", "load_config", "main"]

log = logging.getLogger("borelns")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_REFUSED = 0, 2, 3, 4
PROBLEMS = ("kida", "manufactured", "file")
TRAJECTORY_FILE = "trajectory.bnst"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem: str = "kida"
    N: int = 8
    nu: float = 0.1
    n: int = 2
    delta: float = 0.05
    q0: float = 10.0
    qm: float = 0.2
    m0: int = 8
    quad_level: float = 1.0
    alpha0: float = 30.0
    output_dir: str = "."
    c4: float = math.nan
    c_m_table_path: str = ""
    init_path: str = ""
    forcing_path: str = ""

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}")
        for key in ("N", "nu", "n", "delta", "q0", "qm", "m0", "quad_level", "alpha0"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if not (math.isnan(self.c4) or self.c4 > 0):
            raise ConfigError("c4 must be positive")
        if self.problem in ("kida", "manufactured") and self.N < 3:
            raise ConfigError("the Kida field has modes up to |k_i| = 3; N must be at least 3")
        if self.problem == "file" and not self.init_path:
            raise ConfigError("problem = file needs init_path")
        try:
            self.march_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def march_config(self) -> MarchConfig:
        return MarchConfig(N=self.N, nu=self.nu, n=self.n, delta=self.delta, q0=self.q0,
                           qm=self.qm, m0=self.m0, quad_level=self.quad_level)

    def path(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.output_dir) / p

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_CAST = {"int": int, "float": float, "str": str}


def _cast(key: str, value: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        return _CAST[_FIELD_TYPES[key]](value)
    except ValueError:
        raise ConfigError(f"{key} = {value!r} is not a valid {_FIELD_TYPES[key]}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        out[key.strip()] = _cast(key.strip(), value.strip())
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _cast(k, str(v))
    return RunConfig(**values)


# --- problem setup --------------------------------------------------------------------


def _check_field(f: SpectralVectorField, what: str) -> None:
    scale = max(float(np.max(np.abs(f.coeffs), initial=0.0)), 1e-300)
    if f.hermitian_defect() > 1e-12 * scale:
        raise ConfigError(f"{what} is not Hermitian")
    if f.divergence_defect() > 1e-12 * scale * f.grid.N:
        raise ConfigError(f"{what} is not divergence free")
    if np.max(np.abs(f.mean_mode())) > 1e-12 * scale:
        raise ConfigError(f"{what} has a nonzero mean")


def build_problem(cfg: RunConfig):
    """Initial field and forcing for the configured problem."""
    grid = cfg.march_config().grid()
    if cfg.problem == "kida":
        return kida_initial(grid), None
    if cfg.problem == "manufactured":
        case = manufactured_case(grid)
        return case.v0, case.forcing
    try:
        v0 = read_field(cfg.path(cfg.init_path), cfg.nu)
        f = read_field(cfg.path(cfg.forcing_path), cfg.nu) if cfg.forcing_path else None
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load field: {exc}") from None
    for field, what in ((v0, "initial field"), (f, "forcing")):
        if field is None:
            continue
        if field.grid.N != cfg.N:
            raise ConfigError(f"{what} has N={field.grid.N} but the config says N={cfg.N}")
        _check_field(field, what)
    return v0, (StaticForcing(f) if f is not None else None)


def _load_trajectory(path: Path):
    try:
        traj, extra = read_trajectory(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load trajectory: {exc}") from None
    if extra.get("problem") == "manufactured":
        # the rational forcing is regenerated rather than stored
        traj = dataclasses.replace(traj, forcing=manufactured_case(traj.grid).forcing)
    return traj, extra


def _echo(cfg: RunConfig, **more) -> list[str]:
    items = cfg.echo()
    items.update(more)
    return echo_lines(items)


# --- commands ---------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig, args) -> int:
    v0, forcing = build_problem(cfg)
    mcfg = cfg.march_config()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    def progress(m, marcher):
        if m % 20 == 0:
            log.info("node %d  q=%.4g  |U|=%.6g", m, m * mcfg.delta, marcher.norms[m])

    traj = Marcher(mcfg, v0, forcing).run(progress=progress)
    write_trajectory(traj, out / TRAJECTORY_FILE,
                     {"problem": cfg.problem, "version": __version__})
    q, nrm = traj.l1_norms()
    rows = [(qi, ni, _weight(qi, mcfg.n, cfg.alpha0) * ni) for qi, ni in zip(q, nrm)]
    write_csv(out / "norms.csv", ["q", "l1_norm", "weighted_norm"], rows, _echo(cfg))
    (out / "config.txt").write_text("".join(f"# {l}\n" for l in echo_lines({})) + "".join(
        f"{k} = {v}\n" for k, v in cfg.echo().items()))
    print(f"solved to q0={mcfg.q0:g}: |U(q0)|_l1 = {nrm[-1]:.6e}; wrote {out / TRAJECTORY_FILE}")
    return EXIT_OK


def _cm_table(cfg: RunConfig) -> tuple[CmTable, str]:
    if cfg.c_m_table_path:
        try:
            return CmTable.from_text(cfg.path(cfg.c_m_table_path).read_text()), "file"
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read c_m table: {exc}") from None
    return shipped_cm_table(), "shipped calibrated lattice table"


def _write_certificate(cfg: RunConfig, cert: Certificate, extra_echo: dict) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = "".join(f"# {l}\n" for l in _echo(cfg, **extra_echo))
    (out / "certificate.txt").write_text(head + cert.to_keyvalue())


def cmd_certify(cfg: RunConfig, args) -> int:
    if args.self_test:
        b, eps, eps1 = args.b, args.epsilon, args.epsilon1
        alpha, T = solve_alpha(b, eps, eps1, cfg.n, cfg.alpha0)
        cert = Certificate(q0=math.nan, alpha0=cfg.alpha0, n=cfg.n, b=b, epsilon=eps,
                           epsilon1=eps1, alpha_star=alpha, T=T,
                           caveats=["constants injected, not computed"])
        if not cert.verify():
            raise CertificateRefused("injected constants do not yield a valid certificate")
        _write_certificate(cfg, cert, {"mode": "self-test"})
        print(cert.report(), end="")
        return EXIT_OK
    path = Path(args.trajectory) if args.trajectory else cfg.path(TRAJECTORY_FILE)
    traj, _ = _load_trajectory(path)
    cert = certify(traj, cfg.alpha0)
    v0 = SpectralVectorField(traj.grid, traj.v0, True, True)
    table, source = _cm_table(cfg)
    cert.T_cl, m_best = classical_time(v0, table)
    if not math.isnan(cfg.c4) and traj.forcing is None:
        cert.T_c, _ = leray_Tc(energy(v0), traj.config.nu, cfg.c4)
    if not cert.verify():
        raise CertificateRefused("computed constants do not satisfy the inequality")
    _write_certificate(cfg, cert, {"trajectory": str(path), "c_m_table": source,
                                   "T_cl_argmax_m": f"{m_best:.4f}"})
    print(cert.report(), end="")
    return EXIT_OK


def cmd_synthesize(cfg: RunConfig, args) -> int:
    path = Path(args.trajectory) if args.trajectory else cfg.path(TRAJECTORY_FILE)
    traj, extra = _load_trajectory(path)
    try:
        ev = LaplaceEvaluator(traj)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for t in args.t:
        try:
            ev.check(t)
        except InadmissibleTime as exc:
            raise ConfigError(str(exc)) from None
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    case = manufactured_case(traj.grid) if extra.get("problem") == "manufactured" else None
    rows = []
    for t in args.t:
        v = ev(t)
        stem = f"field_t{t:g}"
        write_field(v, out / f"{stem}.bnsf")
        write_field_csv(v, out / f"{stem}.csv", _echo(cfg, t=t))
        if case is not None:
            g = traj.grid
            diff = to_physical(v.coeffs - case.exact_v(t).coeffs, g.N, g.pad)
            err = float(np.max(np.abs(diff)))
            rows.append((t, err))
            print(f"t={t:g}  max error {err:.6e}")
        else:
            print(f"t={t:g}  |v|_l1 = {l1_norm(v):.6e}")
    if case is not None:
        write_csv(out / "synthesis_errors.csv", ["t", "max_error"], rows, _echo(cfg))
    return EXIT_OK


def cmd_convergence(cfg: RunConfig, args) -> int:
    if cfg.problem != "manufactured":
        raise ConfigError("convergence needs problem = manufactured (an exact solution)")
    deltas = [float(eval_fraction(d)) for d in args.deltas]
    for d in deltas:
        try:
            dataclasses.replace(cfg.march_config(), delta=d)
        except ValueError as exc:
            raise ConfigError(f"delta={d:g}: {exc}") from None
    rows = convergence_study(deltas, N=cfg.N, nu=cfg.nu, n=cfg.n, q0=cfg.q0, qm=cfg.qm,
                             m0=cfg.m0, quad_level=cfg.quad_level,
                             progress=lambda r: log.info("delta=%g  e=%.4e", r.delta, r.error))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_convergence_csv(rows, out / "convergence.csv", _echo(cfg))
    print(format_convergence_table(rows), end="")
    return EXIT_OK


def eval_fraction(text: str) -> float:
    """``"1/40"`` or ``"0.025"``."""
    num, sep, den = text.partition("/")
    try:
        return float(num) / float(den) if sep else float(num)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad step {text!r}") from None


def cmd_kernel_table(cfg: RunConfig, args) -> int:
    ev = default_evaluator(cfg.n)
    mu = np.linspace(0.0, args.mu_max, args.points)
    F, G, regime = ev.F(mu), ev.G(mu), ev.regime(mu)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(float(m), float(f), float(g), str(r)) for m, f, g, r in zip(mu, F, G, regime)]
    write_csv(out / "kernel_table.csv", ["mu", "F", "G", "regime"], rows,
              _echo(cfg, mu_max=args.mu_max, points=args.points))
    print(f"wrote {len(rows)} rows to {out / 'kernel_table.csv'}")
    return EXIT_OK


def cmd_startup_dump(cfg: RunConfig, args) -> int:
    v0, forcing = build_problem(cfg)
    ts = taylor_coeffs(v0, forcing, cfg.nu, cfg.m0, cfg.n, cfg.qm)
    g = v0.grid
    rows = [(m, l1_norm(SpectralVectorField(g, ts.c[m - 1], True, True)),
             l1_norm(SpectralVectorField(g, ts.d[m - 1], True, True)))
            for m in range(1, ts.m0 + 1)]
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "startup.csv", ["m", "c_norm", "d_norm"], rows, _echo(cfg))
    for m, c, d in rows:
        print(f"{m:3d}  {c:.6e}  {d:.6e}")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    for name, typ in _FIELD_TYPES.items():
        p.add_argument(f"--{name}", dest=f"cfg_{name}", default=None, metavar=typ.upper(),
                       help=f"override {name}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="borelns", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"borelns {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run startup and march, write the trajectory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="existence-time certificate from a trajectory")
    _add_config_flags(p)
    p.add_argument("--trajectory", help=f"BNST file (default output_dir/{TRAJECTORY_FILE})")
    p.add_argument("--self-test", action="store_true",
                   help="skip the trajectory and certify injected constants")
    p.add_argument("--b", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=1.1403)
    p.add_argument("--epsilon1", type=float, default=13.6921)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("synthesize", help="Laplace-resum the trajectory at given times")
    _add_config_flags(p)
    p.add_argument("--trajectory")
    p.add_argument("--t", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("convergence", help="error and order table for the manufactured case")
    _add_config_flags(p)
    p.add_argument("--deltas", nargs="+", default=["1/20", "1/40", "1/80", "1/160"])
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("kernel-table", help="tabulate F and G with the regime used")
    _add_config_flags(p)
    p.add_argument("--mu-max", type=float, default=20.0)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(func=cmd_kernel_table)

    p = sub.add_parser("startup-dump", help="norms of the Taylor and Borel startup coefficients")
    _add_config_flags(p)
    p.set_defaults(func=cmd_startup_dump)
    return parser


def _apply_threads() -> None:
    threads = os.environ.get("THREADS")
    if not threads:
        return
    try:
        import numba

        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        log.warning("ignoring THREADS=%r", threads)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    _apply_threads()
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
    try:
        cfg = load_config(args.config, overrides)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"borelns: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MarchAborted, ArithmeticError) as exc:
        print(f"borelns: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CertificateRefused as exc:
        print(f"borelns: certificate refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
