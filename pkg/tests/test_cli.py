"""Command-line contract: schema errors, exit codes, artifacts,
byte-level determinism."""

import hashlib
import json

import numpy as np
import pytest

from qlert import cli


def write_config(tmp_path, tree, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(tree), encoding="utf-8")
    return path


def disk_geometry(refinement=2):
    return {"shape": "disk", "radius_m": 1.0, "refinement": refinement}


def solve_config():
    return {
        "units": "SI",
        "geometry": {
            "shape": "cable",
            "outer_radius_m": 0.6e-3,
            "petal_radius_m": 0.2e-3,
            "petals": {"centers_m": [[0.0, 0.0]]},
            "refinement": 2,
        },
        "materials": {
            "matrix": {"model": "linear", "sigma_s_per_m": 5.55e7},
            "inclusions": {"model": "preset", "name": "YBCO-AMSC"},
        },
        "boundary": {"profile": "x-linear", "amplitude_v": 1e-3},
        "task": {"kind": "solve", "mode": "pec-limit"},
    }


def sweep_config():
    return {
        "units": "SI",
        "geometry": disk_geometry(),
        "materials": {
            "matrix": {"model": "weighted-power", "theta": 2.0, "p": 2.0}
        },
        "boundary": {"profile": "x-linear", "amplitude_v": 1.0},
        "task": {"kind": "sweep", "limit": "pec", "lambda_high": 1.0,
                 "lambda_low": 1e-2, "per_decade": 1},
    }


def oracle_config():
    return {
        "units": "SI",
        "task": {"kind": "oracle", "annulus_r": 10.0, "L": 11.0,
                 "n_scales": 1, "refinements": [1, 2]},
    }


def tomo_config():
    return {
        "units": "SI",
        "geometry": disk_geometry(),
        "materials": {"matrix": {"model": "linear", "sigma_s_per_m": 1.0}},
        "boundary": {
            "profile": "x-linear",
            "amplitude_v": 1.0,
            "electrodes": {"count": 8, "coverage": 0.5},
        },
        "task": {
            "kind": "tomo",
            "defects": [{"center_m": [0.0, 0.0], "radius_m": 0.45}],
            "eta": 0.01,
            "seed": 2,
            "delta": "noise-norm",
            "test_radii_m": [0.35],
            "test_spacing_m": 0.35,
            "mode": "pec-limit",
        },
    }


def run(command, config_path, out_dir, *extra):
    return cli.main([command, "--config", str(config_path),
                     "--out", str(out_dir), *extra])


class TestConfigValidation:
    def test_sha_is_of_the_raw_bytes(self, tmp_path):
        path = write_config(tmp_path, oracle_config())
        _, digest = cli.load_config(path)
        assert digest == hashlib.sha256(path.read_bytes()).hexdigest()

    def test_missing_key_names_the_path(self, tmp_path, capsys):
        tree = tomo_config()
        del tree["task"]["eta"]
        code = run("tomo", write_config(tmp_path, tree), tmp_path / "out")
        assert code == cli.EXIT_CONFIG
        assert "task.eta" in capsys.readouterr().err

    def test_nested_missing_key(self, tmp_path, capsys):
        tree = tomo_config()
        del tree["boundary"]["electrodes"]
        code = run("tomo", write_config(tmp_path, tree), tmp_path / "out")
        assert code == cli.EXIT_CONFIG
        assert "boundary.electrodes" in capsys.readouterr().err

    def test_unknown_key_rejected_with_path(self, tmp_path, capsys):
        tree = solve_config()
        tree["geometry"]["bogus"] = 1
        code = run("solve", write_config(tmp_path, tree), tmp_path / "out")
        assert code == cli.EXIT_CONFIG
        assert "geometry.bogus" in capsys.readouterr().err

    def test_units_must_be_si(self, tmp_path, capsys):
        tree = solve_config()
        tree["units"] = "CGS"
        code = run("solve", write_config(tmp_path, tree), tmp_path / "out")
        assert code == cli.EXIT_CONFIG
        assert "units" in capsys.readouterr().err

    def test_task_kind_must_match_subcommand(self, tmp_path, capsys):
        code = run("sweep", write_config(tmp_path, solve_config()),
                   tmp_path / "out")
        assert code == cli.EXIT_CONFIG
        assert "task.kind" in capsys.readouterr().err

    def test_wrong_type_reports_path(self, tmp_path, capsys):
        tree = solve_config()
        tree["geometry"]["refinement"] = "fine"
        code = run("solve", write_config(tmp_path, tree), tmp_path / "out")
        assert code == cli.EXIT_CONFIG
        assert "geometry.refinement" in capsys.readouterr().err

    def test_material_for_unknown_region(self, tmp_path, capsys):
        tree = sweep_config()
        tree["materials"]["petal-7"] = {"model": "linear",
                                        "sigma_s_per_m": 1.0}
        code = run("sweep", write_config(tmp_path, tree), tmp_path / "out")
        assert code == cli.EXIT_CONFIG
        assert "materials.petal-7" in capsys.readouterr().err

    def test_region_without_material(self, tmp_path, capsys):
        tree = solve_config()
        del tree["materials"]["inclusions"]
        code = run("solve", write_config(tmp_path, tree), tmp_path / "out")
        assert code == cli.EXIT_CONFIG
        assert "materials.inclusion-1" in capsys.readouterr().err

    def test_broken_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"units": "SI", oops', encoding="utf-8")
        assert run("solve", path, tmp_path / "out") == cli.EXIT_CONFIG
        assert "invalid JSON" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        code = run("solve", tmp_path / "nope.json", tmp_path / "out")
        assert code == cli.EXIT_CONFIG


class TestSolveCommand:
    def test_artifacts_and_provenance(self, tmp_path, capsys):
        path = write_config(tmp_path, solve_config())
        out = tmp_path / "out"
        assert run("solve", path, out) == cli.EXIT_OK
        _, digest = cli.load_config(path)
        for name in ("potential.csv", "field.csv", "potential.svg",
                     "field.svg", "report.json"):
            assert (out / name).exists()
        head = (out / "potential.csv").read_text().splitlines()[0]
        assert head == f"# config sha256:{digest}"
        assert f"config sha256:{digest}" in (out / "field.svg").read_text()
        report = json.loads((out / "report.json").read_text())
        assert report["config_sha256"] == digest
        assert report["mode"] == "pec-limit"
        assert report["iterations"] == 1
        assert report["monitors"]["energy_descent_ok"]
        assert report["violations"] == []

    def test_field_csv_has_one_row_per_element(self, tmp_path):
        tree = solve_config()
        path = write_config(tmp_path, tree)
        out = tmp_path / "out"
        assert run("solve", path, out) == cli.EXIT_OK
        lines = (out / "field.csv").read_text().splitlines()
        # comment + header + elements
        mesh = cli.build_mesh(tree)
        assert len(lines) == mesh.element_count + 2
        assert lines[1].split(",")[0] == "element"

    def test_nonlinear_mode_runs(self, tmp_path):
        tree = solve_config()
        tree["task"]["mode"] = "nonlinear"
        tree["solver"] = {"picard_tol": 1e-6}
        out = tmp_path / "out"
        assert run("solve", write_config(tmp_path, tree), out) == cli.EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["iterations"] >= 1
        assert report["monitors"]["max_principle_ok"]


class TestSweepCommand:
    def test_csv_and_plot(self, tmp_path):
        path = write_config(tmp_path, sweep_config())
        out = tmp_path / "out"
        assert run("sweep", path, out) == cli.EXIT_OK
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[1] == "lambda,e2,einf,G0_lambda,picard_iters"
        data = np.array([line.split(",") for line in lines[2:]], dtype=float)
        assert data.shape == (3, 5)
        # quadratic material: the normalized solution is scale-free
        assert np.all(data[:, 1] <= 1e-9)
        svg = (out / "sweep.svg").read_text()
        assert svg.startswith("<svg") and "polyline" in svg
        report = json.loads((out / "report.json").read_text())
        assert report["all_ok"] is True
        assert report["status"] == ["ok", "ok", "ok"]


class TestOracleCommand:
    def test_validation_report(self, tmp_path):
        path = write_config(tmp_path, oracle_config())
        out = tmp_path / "out"
        assert run("oracle", path, out) == cli.EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["scales"]["interleaved"] is True
        assert report["scales"]["ratio_error"] <= 1e-12
        assert report["scales"]["psi_convex"] is True
        assert report["energies"]["separated"] is True
        assert report["energies"]["ell2"] > report["energies"]["ell1"]
        rows = report["annulus"]["rows"]
        assert len(rows) == 2
        assert rows[1][2] < rows[0][2]
        lines = (out / "oracle.csv").read_text().splitlines()
        assert lines[1] == "refinement,h,rel_l2_error,observed_order"
        assert len(lines) == 4


class TestTomoCommand:
    def test_pipeline_and_determinism(self, tmp_path):
        path = write_config(tmp_path, tomo_config())
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run("tomo", path, out_a) == cli.EXIT_OK
        assert run("tomo", path, out_b) == cli.EXIT_OK
        names = ("background_g.csv", "measured_g.csv", "reconstruction.csv",
                 "reconstruction.svg", "report.json")
        for name in names:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        report = json.loads((out_a / "report.json").read_text())
        assert report["seed"] == 2
        assert report["delta"] > 0
        assert 0.0 <= report["coverage"] <= 1.0
        assert isinstance(report["upper_bound"], bool)
        g_lines = (out_a / "measured_g.csv").read_text().splitlines()
        assert g_lines[1].split(",") == [f"electrode_{i}" for i in range(8)]
        assert len(g_lines) == 10
        assert all(len(line.split(",")) == 8 for line in g_lines[2:])

    def test_seed_flag_overrides_config(self, tmp_path):
        path = write_config(tmp_path, tomo_config())
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run("tomo", path, out_a) == cli.EXIT_OK
        assert run("tomo", path, out_b, "--seed", "9") == cli.EXIT_OK
        same = (out_a / "background_g.csv").read_bytes()
        assert same == (out_b / "background_g.csv").read_bytes()
        assert (out_a / "measured_g.csv").read_bytes() != \
            (out_b / "measured_g.csv").read_bytes()
        assert json.loads((out_b / "report.json").read_text())["seed"] == 9

    def test_reconstruction_rows_cover_the_mesh(self, tmp_path):
        tree = tomo_config()
        path = write_config(tmp_path, tree)
        out = tmp_path / "out"
        assert run("tomo", path, out) == cli.EXIT_OK
        lines = (out / "reconstruction.csv").read_text().splitlines()
        mesh = cli.build_mesh(tree)
        assert len(lines) == mesh.element_count + 2
        flags = np.array([line.split(",")[3:] for line in lines[2:]],
                         dtype=int)
        assert set(np.unique(flags)) <= {0, 1}
        assert flags[:, 0].sum() > 0


class TestExitCodes:
    def test_non_convergence_maps_to_three(self, tmp_path, capsys):
        tree = solve_config()
        tree["task"]["mode"] = "nonlinear"
        tree["solver"] = {"max_picard_iter": 1, "picard_tol": 1e-14}
        code = run("solve", write_config(tmp_path, tree), tmp_path / "out")
        assert code == cli.EXIT_SOLVER
        assert "tolerance" in capsys.readouterr().err

    def test_unwritable_output_maps_to_four(self, tmp_path, capsys):
        path = write_config(tmp_path, oracle_config())
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory", encoding="utf-8")
        code = run("oracle", path, blocker / "out")
        assert code == cli.EXIT_IO
        assert "error" in capsys.readouterr().err
