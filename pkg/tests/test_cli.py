import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from sdl import cli, export


def write_cfg(path, **cfg):
    path.write_text(yaml.safe_dump(cfg))
    return path


def run(path):
    return cli.main(["run", str(path)])


def load(out, name):
    return json.loads((out / name).read_text())


class TestRun:
    def test_spectrum_sphere(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "c.yaml",
            domain={"builder": "icosphere", "params": {"subdivisions": 5}},
            task="spectrum",
            params={"count": 4},
            output="out",
        )
        assert run(cfg) == 0
        head, rows = export.read_spectrum_csv(tmp_path / "out" / "spectrum.csv")
        assert np.abs(rows["eigenvalue"][1:4] / 2 - 1).max() < 0.005
        man = load(tmp_path / "out", "manifest.json")
        assert man["passed"] and man["exit_status"] == 0
        assert man["outputs"]["spectrum.csv"]["operation"] == "weighted_laplace_spectrum"
        assert man["outputs"]["spectrum.csv"]["tolerances"]["zero_tol"] == float(head["zero_tol"])
        assert man["version"] and man["wall_time_s"] > 0
        assert man["config"]["domain"]["params"]["subdivisions"] == 5
        assert not list((tmp_path / "out").glob("*.tmp"))

    def test_optimize_density(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "c.yaml",
            domain={"builder": "icosphere", "params": {"subdivisions": 4}},
            task="optimize-density",
            params={"beta0": "1 + 0.5*clip(z, 0, 1)"},
            output="out",
        )
        assert run(cfg) == 0
        s = load(tmp_path / "out", "summary.json")
        assert s["F1"] == pytest.approx(8 * np.pi, rel=0.02)
        assert s["bound_chain"] is True
        assert s["F1"] <= s["certified_bound"]
        with open(tmp_path / "out" / "trace.csv") as fh:
            header = next(csv.reader(fh))
        assert header[:5] == ["iteration", "F1", "gap", "beta_change", "map_rank"]
        U, meta = export.read_map_checkpoint(tmp_path / "out" / "final_map.txt")
        assert meta["operation"] == "maximize_F1" and meta["on_sphere"]

    def test_optimize_steklov(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "c.yaml",
            domain={"builder": "disk", "params": {"radial_resolution": 12}},
            task="optimize-steklov",
            params={"rho0": "2 + sin(3*theta)"},
            output="out",
        )
        assert run(cfg) == 0
        s = load(tmp_path / "out", "summary.json")
        assert s["G1"] == pytest.approx(2 * np.pi, rel=0.02)

    def test_harmonic_solve_with_indices(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "c.yaml",
            domain={"builder": "icosphere", "params": {"subdivisions": 3}},
            task="harmonic-solve",
            params={"indices": True, "tol": 1e-4},
            seed=1,
            output="out",
        )
        assert run(cfg) == 0
        s = load(tmp_path / "out", "summary.json")
        assert (s["ind_E"], s["nul_E"], s["ind_S"], s["nul_S"]) == (0, 6, 1, 3)
        assert s["degree"] == pytest.approx(1.0)

    def test_gl_continuation_torus(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "c.yaml",
            domain={"builder": "flat_torus", "params": {"side_lengths": [1, 1], "resolution": 64}},
            task="gl-continuation",
            params={"initial": "circle", "schedule": [0.1, 0.05, 0.025]},
            output="out",
        )
        assert run(cfg) == 0
        s = load(tmp_path / "out", "summary.json")
        assert s["projected_energy"] == pytest.approx(2 * np.pi**2, rel=0.02)
        assert s["potential_first"] / s["potential_last"] >= 10
        with open(tmp_path / "out" / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == list(export.TRACE_COLUMNS) and len(rows) == 3

    def test_mesh_domain_and_export(self, tmp_path):
        a = write_cfg(
            tmp_path / "a.yaml",
            domain={"builder": "icosphere", "params": {"subdivisions": 2}},
            task="spectrum",
            output="a",
            export_mesh=True,
        )
        assert run(a) == 0
        b = write_cfg(
            tmp_path / "b.yaml",
            domain={"builder": "mesh", "params": {"path": "a/mesh.off"}},
            task="spectrum",
            output="b",
        )
        assert run(b) == 0
        assert (tmp_path / "a" / "spectrum.csv").read_bytes() == (tmp_path / "b" / "spectrum.csv").read_bytes()

    def test_failed_check_exit_1(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "c.yaml",
            domain={"builder": "icosphere", "params": {"subdivisions": 2}},
            task="spectrum",
            params={"expected": [0, 3, 3]},
            output="out",
        )
        assert run(cfg) == 1
        man = load(tmp_path / "out", "manifest.json")
        assert man["checks"]["expected_eigenvalues"]["passed"] is False
        assert man["passed"] is False

    def test_solver_failure_exit_3(self, tmp_path, monkeypatch):
        from sdl import spectral

        def boom(*a, **k):
            raise spectral.EigensolverError("no convergence (residual 1.0)")

        monkeypatch.setattr(spectral, "weighted_laplace_spectrum", boom)
        cfg = write_cfg(
            tmp_path / "c.yaml",
            domain={"builder": "icosphere", "params": {"subdivisions": 1}},
            task="spectrum",
            output="out",
        )
        assert run(cfg) == 3
        man = load(tmp_path / "out", "manifest.json")
        assert "EigensolverError" in man["error"]

    def test_deterministic_bytes(self, tmp_path):
        cfgs = [
            dict(domain={"builder": "icosphere", "params": {"subdivisions": 3}}, task="optimize-density", params={"beta0": "exp(y)"}),
            dict(domain={"builder": "icosphere", "params": {"subdivisions": 3}}, task="harmonic-solve", params={"perturbation": 0.05, "tol": 1e-4}, seed=4),
        ]
        for j, c in enumerate(cfgs):
            outs = []
            for rep in range(2):
                out = f"o{j}_{rep}"
                assert run(write_cfg(tmp_path / f"c{j}{rep}.yaml", output=out, **c)) == 0
                outs.append(tmp_path / out)
            for f in outs[0].iterdir():
                if f.name != "manifest.json":
                    assert f.read_bytes() == (outs[1] / f.name).read_bytes(), f.name

    def test_threads_recorded(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "c.yaml",
            domain={"builder": "icosphere", "params": {"subdivisions": 1}},
            task="spectrum",
            output="out",
        )
        env = dict(os.environ, SDL_THREADS="2")
        proc = subprocess.run([sys.executable, "-m", "sdl.cli", "run", str(cfg)], env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert load(tmp_path / "out", "manifest.json")["threads"] == 2


class TestValidation:
    base = dict(domain={"builder": "icosphere", "params": {"subdivisions": 1}}, task="spectrum", output="out")

    @pytest.mark.parametrize(
        "change",
        [
            {"bogus": 1},
            {"task": "nope"},
            {"params": {"cnt": 3}},
            {"domain": {"builder": "cube"}},
            {"domain": {"builder": "icosphere", "params": {"level": 2}}},
            {"domain": {"builder": "icosphere", "params": {"subdivisions": 9}}},
            {"output": None},
            {"seed": "x"},
            {"params": {"density": "__import__('os').getcwd()"}},
            {"params": {"density": "x.real"}},
            {"params": {"density": "q + 1"}},
            {"params": {"problem": "steklov"}},
        ],
    )
    def test_rejected(self, tmp_path, change):
        cfg = dict(self.base)
        cfg.update(change)
        assert run(write_cfg(tmp_path / "c.yaml", **cfg)) == 2

    def test_unreadable_config(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 2

    def test_field_expressions(self):
        P = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        assert np.allclose(cli.eval_field("1 + x", P, 2), [2.0, 1.0])
        assert np.allclose(cli.eval_field(3, P, 2), [3.0, 3.0])
        assert np.allclose(cli.eval_field("sin(pi*y/2)", P, 2), [0.0, 1.0])
        assert np.allclose(cli.eval_field("theta", P, 2), [0.0, np.pi / 2])


class TestSweep:
    def test_resolution_sweep(self, tmp_path):
        d = tmp_path / "sw"
        d.mkdir()
        for s in (2, 3, 4, 5):
            write_cfg(
                d / f"s{s}.yaml",
                domain={"builder": "icosphere", "params": {"subdivisions": s}},
                task="spectrum",
                params={"count": 4},
                output=f"out{s}",
            )
        assert cli.main(["sweep", str(d), "--jobs", "2"]) == 0
        with open(d / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["config"].rsplit("/", 1)[1] for r in rows] == ["s2.yaml", "s3.yaml", "s4.yaml", "s5.yaml"]
        for j, exact in ((1, 2.0), (4, 6.0)):
            err = [abs(float(r[f"eigenvalues[{j}]"]) - exact) for r in rows]
            assert all(b < a for a, b in zip(err, err[1:]))

    def test_epsilon_schedule_sweep(self, tmp_path):
        d = tmp_path / "sw"
        d.mkdir()
        scheds = [[0.4, 0.2], [0.4, 0.2, 0.1], [0.4, 0.2, 0.1, 0.05]]
        for j, s in enumerate(scheds):
            write_cfg(
                d / f"e{j}.yaml",
                domain={"builder": "icosphere", "params": {"subdivisions": 3}},
                task="gl-continuation",
                params={"schedule": s},
                output=f"out{j}",
            )
        results = cli.sweep(sorted(d.glob("*.yaml")), d / "sweep.csv")
        assert [r["status"] for r in results] == [0, 0, 0]
        pot = [r["potential_last"] for r in results]
        assert pot[0] > pot[1] > pot[2]

    def test_isolation(self, tmp_path):
        d = tmp_path / "sw"
        d.mkdir()
        write_cfg(d / "a.yaml", task="nope", output="x")
        write_cfg(
            d / "b.yaml",
            domain={"builder": "icosphere", "params": {"subdivisions": 1}},
            task="spectrum",
            output="b",
        )
        assert cli.main(["sweep", str(d)]) == 1
        rows = list(csv.DictReader(open(d / "sweep.csv")))
        assert [int(r["status"]) for r in rows] == [2, 0]
        assert (d / "b" / "spectrum.csv").exists()

    def test_empty(self, tmp_path):
        assert cli.sweep([], tmp_path / "s.csv") == []
        assert (tmp_path / "s.csv").read_text() == "config,status\n"
        (tmp_path / "empty").mkdir()
        assert cli.main(["sweep", str(tmp_path / "empty")]) == 0

    def test_missing_directory(self, tmp_path):
        assert cli.main(["sweep", str(tmp_path / "nope")]) == 2


def test_verify_runs_acceptance_suite(tmp_path):
    out = tmp_path / "v"
    assert cli.main(["verify", "--output", str(out)]) == 0
    s = load(out, "summary.json")
    assert set(s["criteria"]) == {str(i) for i in range(1, 10)}
    assert all(s["criteria"].values())
    rows = list(csv.DictReader(open(out / "acceptance.csv")))
    assert len(rows) == 9 and all(r["passed"] == "true" for r in rows)
