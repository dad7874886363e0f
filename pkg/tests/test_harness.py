"""Config handling, study drivers, and output files."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from rdqmc.fields import load_kl
from rdqmc.harness import (
    ConfigError,
    build_problem,
    deterministic_csv_hash,
    format_csv,
    load_config,
    parse_config_text,
    parse_parameter_vector,
    resolve_config,
    resolve_vector,
    run_cbc,
    run_kl,
    run_single,
    run_study,
)

MINI_STUDY = """
mode = uniform
mesh.n = 6
field.s = 4
time.dt = 0.25
time.t_end = 1.0
qmc.m_min = 2
qmc.m_max = 4
qmc.shifts = 4
mc.enabled = true
"""


def resolve_text(text):
    return resolve_config(parse_config_text(text))


class TestConfigParsing:
    def test_key_value_lines(self):
        raw = parse_config_text("a.b = 1\n# comment\n\nc = x\n")
        assert raw == {"a.b": "1", "c": "x"}

    def test_missing_equals_reports_line(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("mode uniform\n")
        assert "line 1" in str(err.value)

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("a = 1\na = 2\n")
        assert "duplicate" in str(err.value)


class TestResolveConfig:
    def test_defaults_filled(self):
        cfg = resolve_config({})
        assert cfg["mode"] == "uniform"
        assert cfg["mesh.n"] == 25
        assert cfg["time.dt"] == 0.125
        assert cfg["qmc.shifts"] == 8
        assert cfg["solver.newton_tol"] == 1e-10

    def test_all_errors_collected(self):
        raw = {
            "mode": "sideways",
            "mesh.n": "-3",
            "qmc.m_min": "7",
            "qmc.m_max": "4",
            "nonsense.key": "1",
        }
        with pytest.raises(ConfigError) as err:
            resolve_config(raw)
        text = str(err.value)
        assert "mode" in text
        assert "mesh.n" in text
        assert "m_min" in text or "m_max" in text
        assert "nonsense.key" in text
        assert len(err.value.errors) >= 4

    def test_odd_dimension_rejected(self):
        with pytest.raises(ConfigError) as err:
            resolve_config({"field.s": "7"})
        assert "even" in str(err.value)

    def test_mesh_file_must_exist(self):
        with pytest.raises(ConfigError) as err:
            resolve_config({"mesh.kind": "file", "mesh.path": "/nope/missing.txt"})
        assert "mesh.path" in str(err.value)

    def test_mesh_file_kind_loads(self, tmp_path):
        from rdqmc.mesh import generate_structured, save_mesh

        path = tmp_path / "m.txt"
        save_mesh(generate_structured(50.0, 3), path)
        cfg = resolve_config(
            {"mesh.kind": "file", "mesh.path": str(path), "field.s": "4"}
        )
        prob, info = build_problem(cfg)
        assert info["mesh_nodes"] == 16
        assert "sha256" in info["mesh_file"]


class TestParameterVector:
    def test_uniform_range_enforced(self):
        with pytest.raises(ConfigError):
            parse_parameter_vector("0.6,0.0", 2, "uniform")

    def test_length_enforced(self):
        with pytest.raises(ConfigError):
            parse_parameter_vector("0.1,0.2,0.3", 2, "uniform")

    def test_parse_failure(self):
        with pytest.raises(ConfigError):
            parse_parameter_vector("0.1,zebra", 2, "uniform")

    def test_gaussian_unbounded(self):
        y = parse_parameter_vector("3.5,-4.25", 2, "lognormal")
        assert y.tolist() == [3.5, -4.25]


class TestCsvFormat:
    def test_header_and_rows(self):
        rows = [("qmc", 3, 8, 4, 1.25, 0.5, 0.01)]
        text = format_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "kind,m,N,R,mean,rms_or_stderr,wall_seconds"
        assert lines[1].startswith("qmc,3,8,4,1.25,0.5,")

    def test_hash_ignores_wall_seconds(self):
        rows_a = [("qmc", 3, 8, 4, 1.25, 0.5, 0.01)]
        rows_b = [("qmc", 3, 8, 4, 1.25, 0.5, 99.9)]
        assert deterministic_csv_hash(format_csv(rows_a)) == deterministic_csv_hash(
            format_csv(rows_b)
        )

    def test_hash_sees_value_changes(self):
        rows_a = [("qmc", 3, 8, 4, 1.25, 0.5, 0.01)]
        rows_b = [("qmc", 3, 8, 4, 1.26, 0.5, 0.01)]
        assert deterministic_csv_hash(format_csv(rows_a)) != deterministic_csv_hash(
            format_csv(rows_b)
        )


class TestBuildProblem:
    def test_uniform_mean_field_solve(self):
        cfg = resolve_text(MINI_STUDY)
        prob, info = build_problem(cfg)
        assert prob.dim == 4
        assert prob.target == "centered"
        g = prob.evaluate(np.zeros(4))
        assert np.isfinite(g) and g > 0

    def test_zero_amplitude_gives_zero(self):
        cfg = resolve_text(MINI_STUDY + "ic.amplitude = 0\n")
        prob, _ = build_problem(cfg)
        assert prob.evaluate(np.zeros(4)) == 0.0

    def test_problem_survives_pickling(self):
        import pickle

        cfg = resolve_text(MINI_STUDY)
        prob, _ = build_problem(cfg)
        before = prob.evaluate(np.full(4, 0.25))
        clone = pickle.loads(pickle.dumps(prob))
        assert clone.evaluate(np.full(4, 0.25)) == before


class TestRunSingle:
    def test_mean_field_prints_and_returns(self, tmp_path, capsys):
        cfg = resolve_text(MINI_STUDY)
        report = run_single(cfg, np.zeros(4), outdir=tmp_path)
        out = capsys.readouterr().out
        assert "qoi" in out
        assert report["qoi"] > 0
        assert math.isfinite(report["stability_constant"])
        assert (tmp_path / "trajectory.txt").exists()
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert meta["report"]["qoi"] == report["qoi"]
        assert meta["y"] == [0.0] * 4

    def test_trajectory_shape(self, tmp_path):
        cfg = resolve_text(MINI_STUDY)
        run_single(cfg, np.zeros(4), outdir=tmp_path)
        rows = [
            line
            for line in (tmp_path / "trajectory.txt").read_text().splitlines()
            if not line.startswith("#")
        ]
        assert len(rows) == 5  # 4 steps + initial level
        assert len(rows[0].split()) == 49  # 7x7 nodes


class TestRunStudy:
    def test_outputs_and_rerun_identical(self, tmp_path):
        cfg = resolve_text(MINI_STUDY)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        run_study(cfg, out1)
        run_study(cfg, out2)
        csv1 = (out1 / "results.csv").read_text()
        csv2 = (out2 / "results.csv").read_text()
        assert deterministic_csv_hash(csv1) == deterministic_csv_hash(csv2)
        for name in ("results.csv", "metadata.json", "plot.gp", "qmc.dat", "mc.dat"):
            assert (out1 / name).exists(), name
        meta = json.loads((out1 / "metadata.json").read_text())
        assert meta["config"]["mesh.n"] == 6
        assert "results_csv_deterministic_sha256" in meta

    def test_csv_row_layout(self, tmp_path):
        cfg = resolve_text(MINI_STUDY)
        run_study(cfg, tmp_path / "o")
        lines = (tmp_path / "o" / "results.csv").read_text().strip().split("\n")
        kinds = [line.split(",")[0] for line in lines[1:]]
        assert kinds == ["qmc"] * 3 + ["mc"] * 3
        ns = [int(line.split(",")[2]) for line in lines[1:4]]
        assert ns == [4, 8, 16]
        # MC rows use matched budgets: R * 2^m samples reported at N = 2^m
        mc_rows = [line.split(",") for line in lines[4:]]
        assert [int(r[2]) for r in mc_rows] == [4, 8, 16]
        assert all(int(r[3]) == 4 for r in mc_rows)

    def test_worker_counts_identical(self, tmp_path):
        cfg = resolve_text(MINI_STUDY)
        hashes = []
        for workers, sub in ((1, "w1"), (3, "w3")):
            cfg_w = dict(cfg)
            cfg_w["workers"] = workers
            run_study(cfg_w, tmp_path / sub)
            text = (tmp_path / sub / "results.csv").read_text()
            hashes.append(deterministic_csv_hash(text))
        assert hashes[0] == hashes[1]


class TestRunKl:
    def test_lognormal_cache_and_decay(self, tmp_path):
        cfg = resolve_text(
            """
mode = lognormal
mesh.n = 10
field.s = 8
"""
        )
        report = run_kl(cfg, tmp_path)
        for which in ("diffusion", "growth"):
            cache = tmp_path / f"kl_{which}.txt"
            assert cache.exists()
            exp = load_kl(cache)
            assert exp.n_modes == 4
            decay = (tmp_path / f"decay_{which}.csv").read_text().strip().split("\n")
            assert decay[0] == "k,mu,sqrt_mu"
            assert len(decay) == 5
            assert report[which]["orthonormality_residual"] < 1e-8
            assert report[which]["decay_slope"] < 0
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert "sha256" in meta["fields"]["diffusion"]["cache"]

    def test_uniform_mode_rejected(self, tmp_path):
        cfg = resolve_text(MINI_STUDY)
        with pytest.raises(ConfigError):
            run_kl(cfg, tmp_path)

    def test_too_many_modes_rejected(self, tmp_path):
        cfg = resolve_text("mode = lognormal\nmesh.n = 3\nfield.s = 64\n")
        with pytest.raises(ConfigError):
            run_kl(cfg, tmp_path)

    def test_study_reuses_cache_bit_exactly(self, tmp_path):
        # The coarse mesh under-resolves the default initial bump, so use
        # the bound-preserving lumped scheme to keep the solve benign.
        text = f"""
mode = lognormal
mesh.n = 6
field.s = 4
solver.lambda_shift = auto
solver.mass_lumping = true
cov.cache_dir = {tmp_path / "cache"}
"""
        cfg = resolve_text(text)
        prob1, info1 = build_problem(cfg)
        v1 = prob1.evaluate(np.full(4, 0.3))
        # second build must load the caches written by the first
        prob2, info2 = build_problem(cfg)
        assert info2["cache_diffusion"] == info1["cache_diffusion"]
        assert info2["cache_growth"]["sha256"] == info1["cache_growth"]["sha256"]
        assert prob2.evaluate(np.full(4, 0.3)) == v1


class TestRunCbc:
    def test_vector_file_and_report(self, tmp_path):
        cfg = resolve_config({"cbc.n_points": "64", "cbc.dim": "8"})
        run_cbc(cfg, tmp_path)
        z = [
            int(line)
            for line in (tmp_path / "vector.txt").read_text().splitlines()
            if line and not line.startswith("#")
        ]
        assert len(z) == 8
        report = (tmp_path / "wce_report.csv").read_text().strip().split("\n")
        assert report[0] == "dim,z,wce"
        assert len(report) == 9
        # wce grows with dimension in the construction trace
        values = [float(r.split(",")[2]) for r in report[1:]]
        assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))

    def test_single_dimension(self, tmp_path):
        cfg = resolve_config({"cbc.n_points": "16", "cbc.dim": "1"})
        run_cbc(cfg, tmp_path)
        z = [
            line
            for line in (tmp_path / "vector.txt").read_text().splitlines()
            if line and not line.startswith("#")
        ]
        assert z == ["1"]

    def test_non_prime_power_rejected(self, tmp_path):
        cfg = resolve_config({"cbc.n_points": "12", "cbc.dim": "2"})
        with pytest.raises(ConfigError):
            run_cbc(cfg, tmp_path)


class TestResolveVector:
    def test_bundled_source(self):
        cfg = resolve_config({"qmc.vector": "bundled", "field.s": "8", "qmc.m_max": "5"})
        z, info = resolve_vector(cfg, 8)
        assert len(z) == 8
        assert info["source"] == "bundled"

    def test_file_source(self, tmp_path):
        from rdqmc.lattice import save_generating_vector

        path = tmp_path / "vec.txt"
        save_generating_vector(path, [1, 3, 5, 7])
        cfg = resolve_config(
            {
                "qmc.vector": str(path),
                "field.s": "4",
                "qmc.m_min": "2",
                "qmc.m_max": "3",
            }
        )
        z, info = resolve_vector(cfg, 4)
        assert z.tolist() == [1, 3, 5, 7]
        assert "sha256" in info

    def test_cbc_source(self):
        cfg = resolve_config({"field.s": "4", "qmc.m_max": "4"})
        z, info = resolve_vector(cfg, 4)
        assert len(z) == 4
        assert info["source"] == "cbc"

    def test_missing_file_rejected_early(self):
        with pytest.raises(ConfigError):
            resolve_config({"qmc.vector": "/nope/vec.txt"})


CLI_SOLVE = """
mode = uniform
mesh.n = 6
field.s = 4
time.dt = 0.25
time.t_end = 1.0
"""


class TestCli:
    @staticmethod
    def write(tmp_path, text, name="run.cfg"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    def test_solve_success(self, tmp_path, capsys):
        from rdqmc.cli import main

        cfg = self.write(tmp_path, CLI_SOLVE)
        code = main(["solve", "--config", cfg, "--y", "0.1,0.2,-0.1,0.0"])
        assert code == 0
        assert "qoi" in capsys.readouterr().out

    def test_study_success(self, tmp_path, capsys):
        from rdqmc.cli import main

        cfg = self.write(
            tmp_path,
            CLI_SOLVE + "qmc.m_min = 2\nqmc.m_max = 3\nqmc.shifts = 2\n"
            "mc.enabled = false\n",
        )
        out = tmp_path / "out"
        code = main(["study", "--config", cfg, "--out", str(out)])
        assert code == 0
        assert (out / "results.csv").exists()

    def test_cbc_success(self, tmp_path):
        from rdqmc.cli import main

        cfg = self.write(tmp_path, "cbc.n_points = 32\ncbc.dim = 4\n")
        out = tmp_path / "cbc_out"
        assert main(["cbc", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "vector.txt").exists()

    def test_missing_config_is_validation_error(self, tmp_path, capsys):
        from rdqmc.cli import main

        code = main(["solve", "--config", str(tmp_path / "absent.cfg"), "--y", "0"])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_key_is_validation_error(self, tmp_path, capsys):
        from rdqmc.cli import main

        cfg = self.write(tmp_path, "bogus.key = 1\n")
        code = main(["solve", "--config", cfg, "--y", "0"])
        assert code == 2
        assert "bogus.key" in capsys.readouterr().err

    def test_out_of_range_vector_is_validation_error(self, tmp_path, capsys):
        from rdqmc.cli import main

        cfg = self.write(tmp_path, CLI_SOLVE)
        code = main(["solve", "--config", cfg, "--y", "0.9,0,0,0"])
        assert code == 2
        capsys.readouterr()

    def test_negative_seed_rejected(self, tmp_path, capsys):
        from rdqmc.cli import main

        cfg = self.write(tmp_path, CLI_SOLVE)
        code = main(["solve", "--config", cfg, "--y", "0,0,0,0", "--seed", "-1"])
        assert code == 2
        capsys.readouterr()

    def test_solver_divergence_is_numerical_error(self, tmp_path, capsys):
        from rdqmc.cli import main

        cfg = self.write(tmp_path, CLI_SOLVE + "solver.newton_max_iter = 1\n")
        code = main(["solve", "--config", cfg, "--y", "0,0,0,0"])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err
