"""Persistence formats and the command-line front end."""

import csv

import numpy as np
import pytest

from borelns.certifier import Certificate
from borelns.cli import EXIT_CONFIG, EXIT_OK, EXIT_REFUSED, ConfigError, eval_fraction, main
from borelns.io import (echo_lines, field_from_bytes, read_field, read_trajectory, write_csv,
                        write_field, write_trajectory)
from borelns.spectral_field import WavevectorGrid

from conftest import random_field

SMALL = ["--N", "3", "--nu", "0.5", "--q0", "0.6", "--delta", "0.05"]


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


class TestFormats:
    def test_field_round_trip(self, rng, tmp_path):
        f = random_field(WavevectorGrid(2, 0.3), rng)
        write_field(f, tmp_path / "f.bnsf")
        g = read_field(tmp_path / "f.bnsf", nu=0.3)
        assert np.array_equal(f.coeffs, g.coeffs) and g.real and g.solenoidal

    def test_trailing_bytes_rejected(self, rng, tmp_path):
        f = random_field(WavevectorGrid(1, 1.0), rng)
        p = tmp_path / "f.bnsf"
        write_field(f, p)
        p.write_bytes(p.read_bytes() + b"\0")
        with pytest.raises(ValueError):
            read_field(p)

    def test_record_offsets(self, rng, tmp_path):
        f = random_field(WavevectorGrid(1, 1.0), rng)
        p = tmp_path / "f.bnsf"
        write_field(f, p)
        raw = p.read_bytes() * 2
        _, off = field_from_bytes(raw)
        g, end = field_from_bytes(raw, offset=off)
        assert end == len(raw) and np.array_equal(g.coeffs, f.coeffs)

    def test_trajectory_round_trip(self, kida_traj, tmp_path):
        p = tmp_path / "t.bnst"
        write_trajectory(kida_traj, p, {"problem": "kida"})
        back, extra = read_trajectory(p)
        assert extra["problem"] == "kida"
        assert back.config == kida_traj.config and back.completed == kida_traj.completed
        for name in ("U", "R", "v0", "v1"):
            assert np.array_equal(getattr(back, name), getattr(kida_traj, name))
        np.testing.assert_array_equal(back.startup.c, kida_traj.startup.c)
        ms = kida_traj.config.m_s
        np.testing.assert_allclose(back.norms[ms:], kida_traj.norms[ms:], rtol=1e-15)

    def test_trajectory_magic(self, tmp_path):
        p = tmp_path / "x.bnst"
        p.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(ValueError):
            read_trajectory(p)

    def test_csv_echo(self, tmp_path):
        p = tmp_path / "x.csv"
        write_csv(p, ["a", "b"], [(1.5, float("nan"))], echo_lines({"N": 3}))
        lines = p.read_text().splitlines()
        assert lines[0].startswith("# borelns ") and lines[1] == "# N = 3"
        assert lines[3] == "1.5,"


class TestCli:
    def test_self_test(self, tmp_path, capsys):
        rc = main(["certify", "--self-test", "--output_dir", str(tmp_path)])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "32.756" in out and "constants injected, not computed" in out
        cert = Certificate.from_keyvalue((tmp_path / "certificate.txt").read_text())
        assert abs(cert.alpha_star - 32.7564) < 1e-3

    def test_bad_config_writes_nothing(self, tmp_path):
        rc = main(["solve", "--q0", "0.1", "--qm", "0.2", "--output_dir", str(tmp_path)])
        assert rc == EXIT_CONFIG
        assert not any(tmp_path.iterdir())

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("N = 3\nnu = 0.5\nq0 = 0.6\n# comment\n")
        out = tmp_path / "o"
        rc = main(["solve", "--config", str(cfg), "--q0", "0.5", "--output_dir", str(out)])
        assert rc == EXIT_OK
        traj, _ = read_trajectory(out / "trajectory.bnst")
        assert traj.config.q0 == 0.5 and traj.config.N == 3

    def test_solve_is_deterministic(self, tmp_path):
        for d in ("a", "b"):
            assert main(["solve", *SMALL, "--output_dir", str(tmp_path / d)]) == EXIT_OK
        a = (tmp_path / "a" / "trajectory.bnst").read_bytes()
        b = (tmp_path / "b" / "trajectory.bnst").read_bytes()
        assert a == b
        rows = read_rows(tmp_path / "a" / "norms.csv")
        assert rows[0] == ["q", "l1_norm", "weighted_norm"] and len(rows) == 1 + 9

    def test_solve_then_synthesize(self, tmp_path):
        assert main(["solve", *SMALL, "--output_dir", str(tmp_path)]) == EXIT_OK
        rc = main(["synthesize", *SMALL, "--output_dir", str(tmp_path), "--t", "0.05"])
        assert rc == EXIT_OK
        f = read_field(tmp_path / "field_t0.05.bnsf", nu=0.5)
        assert f.grid.N == 3
        assert read_rows(tmp_path / "field_t0.05.csv")[0][0] == "k1"

    def test_synthesize_refuses_inadmissible(self, tmp_path):
        assert main(["solve", *SMALL, "--output_dir", str(tmp_path)]) == EXIT_OK
        rc = main(["synthesize", *SMALL, "--output_dir", str(tmp_path), "--t", "-1"])
        assert rc == EXIT_CONFIG

    def test_manufactured_pipeline(self, tmp_path, capsys):
        args = ["--problem", "manufactured", "--N", "3", "--nu", "1.0", "--q0", "1.0",
                "--output_dir", str(tmp_path)]
        assert main(["solve", *args]) == EXIT_OK
        assert main(["synthesize", *args, "--t", "0.1", "0.02"]) == EXIT_OK
        rows = read_rows(tmp_path / "synthesis_errors.csv")
        errs = {float(t): float(e) for t, e in rows[1:]}
        assert errs[0.1] <= 1e-3 and errs[0.02] <= 1e-8
        # a time-dependent forcing cannot be certified
        capsys.readouterr()
        assert main(["certify", *args]) == EXIT_REFUSED

    def test_certify_kida(self, tmp_path, capsys):
        args = ["--N", "3", "--nu", "0.5", "--q0", "1.0", "--c4", "1.0",
                "--output_dir", str(tmp_path)]
        assert main(["solve", *args]) == EXIT_OK
        assert main(["certify", *args]) == EXIT_OK
        text = (tmp_path / "certificate.txt").read_text()
        cert = Certificate.from_keyvalue(text)
        assert cert.verify() and np.isfinite(cert.T_cl) and np.isfinite(cert.T_c)
        assert "# c_m_table = shipped calibrated lattice table" in text

    def test_convergence_single_step(self, tmp_path, capsys):
        args = ["--problem", "manufactured", "--N", "3", "--nu", "1.0", "--q0", "0.4",
                "--output_dir", str(tmp_path)]
        assert main(["convergence", *args, "--deltas", "1/20"]) == EXIT_OK
        rows = read_rows(tmp_path / "convergence.csv")
        assert rows[0] == ["delta", "e_delta"] and len(rows) == 2
        assert "1/20" in capsys.readouterr().out

    def test_convergence_needs_exact_solution(self, tmp_path):
        rc = main(["convergence", *SMALL, "--output_dir", str(tmp_path), "--deltas", "1/20"])
        assert rc == EXIT_CONFIG

    def test_kernel_table(self, tmp_path):
        rc = main(["kernel-table", "--output_dir", str(tmp_path), "--mu-max", "20",
                   "--points", "11"])
        assert rc == EXIT_OK
        rows = read_rows(tmp_path / "kernel_table.csv")
        assert rows[0] == ["mu", "F", "G", "regime"] and len(rows) == 12
        assert rows[1][3] == "series" and rows[-1][3] == "asymptotic"
        assert float(rows[1][1]) == pytest.approx(0.5641895835477563, rel=1e-15)

    def test_startup_dump(self, tmp_path):
        assert main(["startup-dump", *SMALL, "--m0", "5", "--output_dir", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "startup.csv")
        assert rows[0] == ["m", "c_norm", "d_norm"] and len(rows) == 6

    def test_kida_needs_n3(self, tmp_path):
        assert main(["solve", "--N", "2", "--output_dir", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_trajectory(self, tmp_path):
        assert main(["synthesize", "--output_dir", str(tmp_path), "--t", "0.1"]) == EXIT_CONFIG

    @pytest.mark.parametrize("text, val", [("1/40", 0.025), ("0.5", 0.5)])
    def test_fraction(self, text, val):
        assert eval_fraction(text) == val

    def test_bad_fraction(self):
        with pytest.raises(ConfigError):
            eval_fraction("1/0")
