"""Config parsing, file formats, and the command-line driver."""

import numpy as np
import pytest

from seqmix.cli import main
from seqmix.config import load_experiment, load_model_spec, save_model_spec
from seqmix.gamp import generate_dataset
from seqmix.gaussian import McPlan
from seqmix.saddle import solve_fixed_point, SolverConfig
from seqmix.serialize import (
    load_dataset,
    load_report,
    read_table,
    save_dataset,
    save_report,
    write_table,
)
from seqmix.zoo import gmm_instance, ridge_instance, two_token_instance

RIDGE_EXPERIMENT = """
[model]
instance = ridge
alpha = 1.0
lambda = 0.1

[mc]
gh_order = 7
seed = 1

[solver]
damping = 0.3
tol = 1e-9
max_iters = 500

[sweep]
alphas = 0.5, 1.0, 2.0
lambdas = 0.1

[gamp]
d = 80
seeds = 0
max_iters = 200
tol = 1e-9
damping = 0.0

[erm]
d = 60
seeds = 0, 1
grad_tol = 1e-6
n_test = 20000
"""


@pytest.fixture
def ridge_config(tmp_path):
    path = tmp_path / "ridge.ini"
    path.write_text(RIDGE_EXPERIMENT)
    return path


class TestModelConfig:
    def test_round_trip_explicit_sections(self, tmp_path):
        for spec in (ridge_instance(), gmm_instance(), two_token_instance()):
            path = tmp_path / f"{spec.name}.ini"
            save_model_spec(spec, path)
            back = load_model_spec(path)
            assert back.dims == spec.dims
            assert back.class_law.support == spec.class_law.support
            assert back.loss.name == spec.loss.name
            for a, b in zip(back.nu.atoms, spec.nu.atoms):
                assert a.weight == b.weight
                assert a.gamma == b.gamma
                assert a.tau == b.tau
                np.testing.assert_array_equal(a.pi, b.pi)

    def test_round_trip_preserves_fixed_point(self, tmp_path):
        spec = ridge_instance(alpha=1.0, lam=0.1)
        path = tmp_path / "m.ini"
        save_model_spec(spec, path)
        back = load_model_spec(path)
        cfg = SolverConfig(damping=0.3, tol=1e-10, max_iters=500,
                           mc_plan=McPlan(gh_order=7))
        a = solve_fixed_point(spec, spec.nu, cfg)
        b = solve_fixed_point(back, back.nu, cfg)
        assert a.test_error == pytest.approx(b.test_error, abs=1e-12)

    def test_experiment_sections(self, ridge_config):
        cfg = load_experiment(ridge_config)
        assert cfg.alphas == (0.5, 1.0, 2.0)
        assert cfg.solver.mc_plan.gh_order == 7
        assert cfg.gamp.d == 80
        assert cfg.erm.seeds == (0, 1)
        assert cfg.violations() == []


class TestTables:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        header = ["a", "b"]
        rows = [[1, 2.5], [3, -0.125]]
        write_table(path, header, rows, {"tool": "seqmix test", "seed": 7})
        meta, hdr, got = read_table(path)
        assert meta["tool"] == "seqmix test" and meta["seed"] == "7"
        assert hdr == header
        assert [[float(x) for x in row] for row in got] == [[1.0, 2.5], [3.0, -0.125]]

    def test_float_cells_survive_exactly(self, tmp_path):
        path = tmp_path / "f.csv"
        value = 0.1234567890123456789
        write_table(path, ["x"], [[value]])
        _, _, rows = read_table(path)
        assert float(rows[0][0]) == value


class TestReportsAndDatasets:
    def test_report_round_trip(self, tmp_path):
        spec = ridge_instance()
        cfg = SolverConfig(damping=0.3, tol=1e-9, max_iters=300,
                           mc_plan=McPlan(gh_order=7))
        rep = solve_fixed_point(spec, spec.nu, cfg)
        path = tmp_path / "rep.json"
        save_report(rep, path)
        doc = load_report(path)
        assert doc["converged"] is True
        np.testing.assert_array_equal(doc["params"].q[(0, 0)], rep.params.q[(0, 0)])
        np.testing.assert_array_equal(doc["conj"].q_hat[(0, 0)], rep.conj.q_hat[(0, 0)])

    def test_dataset_round_trip(self, tmp_path):
        spec = two_token_instance()
        data = generate_dataset(spec, spec.nu, d=32, n=16, seed=3)
        path = tmp_path / "data.npz"
        save_dataset(data, path)
        back = load_dataset(path)
        np.testing.assert_array_equal(back.X, data.X)
        np.testing.assert_array_equal(back.y, data.y)
        np.testing.assert_array_equal(back.c, data.c)
        np.testing.assert_array_equal(
            back.meta.eigenvalues[(1, 0)], data.meta.eigenvalues[(1, 0)]
        )


class TestCli:
    def test_solve_se(self, ridge_config, tmp_path):
        out = tmp_path / "out"
        code = main(["solve-se", "--config", str(ridge_config), "--out", str(out)])
        assert code == 0
        meta, header, rows = read_table(out / "learning_curve.csv")
        assert len(rows) == 3
        assert all(row[header.index("converged")] == "True" for row in rows)
        assert (out / "report_alpha0.5.json").exists()

    def test_warm_start_saves_iterations(self, ridge_config, tmp_path):
        # the chain pays off once neighboring grid points are close
        alphas = [round(0.4 + 0.2 * i, 2) for i in range(9)]
        text = ridge_config.read_text().replace(
            "alphas = 0.5, 1.0, 2.0", "alphas = " + ", ".join(map(str, alphas))
        )
        ridge_config.write_text(text)
        out = tmp_path / "out"
        main(["solve-se", "--config", str(ridge_config), "--out", str(out)])
        _, header, rows = read_table(out / "learning_curve.csv")
        iters_warm = [int(r[header.index("iterations")]) for r in rows]
        cold = []
        for alpha in alphas:
            spec = ridge_instance(alpha=alpha, lam=0.1)
            cfg = SolverConfig(damping=0.3, tol=1e-9, max_iters=500,
                               mc_plan=McPlan(gh_order=7, seed=1))
            cold.append(solve_fixed_point(spec, spec.nu, cfg).iterations)
        saved = sum(w <= c for w, c in zip(iters_warm, cold))
        assert saved >= 0.8 * len(cold)

    def test_run_gamp(self, ridge_config, tmp_path):
        out = tmp_path / "out"
        code = main(["run-gamp", "--config", str(ridge_config), "--out", str(out)])
        assert code == 0
        meta, header, rows = read_table(out / "gamp_trajectory_seed0.csv")
        assert header[0] == "iteration" and len(rows) >= 1
        _, fh, frows = read_table(out / "gamp_final.csv")
        assert frows[0][fh.index("converged")] == "True"

    def test_run_rbp(self, ridge_config, tmp_path):
        out = tmp_path / "out"
        code = main(["run-rbp", "--config", str(ridge_config), "--out", str(out)])
        assert code == 0
        assert (out / "rbp_trajectory_seed0.csv").exists()

    def test_run_erm(self, ridge_config, tmp_path):
        out = tmp_path / "out"
        code = main(["run-erm", "--config", str(ridge_config), "--out", str(out)])
        assert code == 0
        _, header, rows = read_table(out / "erm_curve.csv")
        assert len(rows) == 2
        eg = float(rows[0][header.index("eg")])
        assert 0.0 <= eg < 1.0

    def test_missing_config_is_validation_error(self, tmp_path):
        code = main(["solve-se", "--config", str(tmp_path / "nope.ini")])
        assert code == 2

    def test_unknown_instance_is_validation_error(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[model]\ninstance = unobtainium\n")
        code = main(["solve-se", "--config", str(path)])
        assert code == 2

    def test_empty_grid_is_validation_error(self, tmp_path):
        path = tmp_path / "empty.ini"
        path.write_text(RIDGE_EXPERIMENT + "\n")
        text = path.read_text().replace("alphas = 0.5, 1.0, 2.0", "alphas =")
        path.write_text(text)
        code = main(["solve-se", "--config", str(path)])
        assert code == 2

    def test_verify_unknown_instance(self):
        assert main(["verify", "--instance", "nope"]) == 2

    def test_nonconvergence_is_numerical_failure(self, ridge_config, tmp_path):
        text = ridge_config.read_text().replace("max_iters = 500", "max_iters = 2")
        ridge_config.write_text(text)
        out = tmp_path / "out"
        code = main(["solve-se", "--config", str(ridge_config), "--out", str(out)])
        assert code == 3
        # the run continued and recorded the failure in-table
        _, header, rows = read_table(out / "learning_curve.csv")
        assert all(r[header.index("converged")] == "False" for r in rows)

    def test_sweep_grid_order(self, ridge_config, tmp_path):
        out = tmp_path / "out"
        text = ridge_config.read_text().replace(
            "lambdas = 0.1", "lambdas = 0.1, 0.5"
        )
        ridge_config.write_text(text)
        code = main(["sweep", "--config", str(ridge_config), "--out", str(out)])
        assert code == 0
        _, header, rows = read_table(out / "sweep.csv")
        lams = [float(r[header.index("lam")]) for r in rows]
        alphas = [float(r[header.index("alpha")]) for r in rows]
        assert lams == [0.1] * 3 + [0.5] * 3
        assert alphas == [0.5, 1.0, 2.0] * 2
