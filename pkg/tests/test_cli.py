import json

import numpy as np
import pytest
from click.testing import CliRunner

from hfsem import harness
from hfsem.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestSimulate:
    def test_writes_csv_with_header(self, runner, tmp_path):
        out = tmp_path / "path.csv"
        invoke(runner, ["simulate", "--model", "true4-6", "--n", "50",
                        "--T", "1", "--seed", "3", "--out", str(out)])
        lines = out.read_text().splitlines()
        assert lines[0] == "t," + ",".join(f"x{i}" for i in range(1, 11))
        assert len(lines) == 52

    def test_latent_dump(self, runner, tmp_path):
        out = tmp_path / "path.csv"
        invoke(runner, ["simulate", "--n", "10", "--T", "1",
                        "--seed", "3", "--out", str(out), "--with-latents"])
        header = out.read_text().splitlines()[0].split(",")
        assert "xi1" in header and "delta4" in header
        assert "eps6" in header and "zeta2" in header and "eta2" in header
        assert len(header) == 1 + 10 + 1 + 4 + 6 + 2 + 2

    def test_unknown_model(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--model", "nope", "--n", "5",
                                      "--out", str(tmp_path / "x.csv")])
        assert result.exit_code != 0

    def test_determinism(self, runner, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            invoke(runner, ["simulate", "--n", "20", "--T", "1",
                            "--seed", "9", "--out", str(out)])
        assert a.read_text() == b.read_text()


class TestQuadvar:
    def test_matches_library(self, runner, tmp_path):
        path = tmp_path / "path.csv"
        out = tmp_path / "q.csv"
        invoke(runner, ["simulate", "--n", "200", "--T", "1", "--seed", "5",
                        "--out", str(path)])
        invoke(runner, ["quadvar", "--in", str(path), "--T", "1",
                        "--out", str(out)])
        q = np.loadtxt(out, delimiter=",")
        from hfsem.diffsim import simulate_true_model
        from hfsem.qlik import quad_var
        bundle = simulate_true_model(200, 1.0, seed=5)
        expected = quad_var(bundle.x_obs, 1.0).q_xx
        assert np.abs(q - expected).max() < 1e-8

    def test_latent_columns_ignored(self, runner, tmp_path):
        plain, latent = tmp_path / "a.csv", tmp_path / "b.csv"
        invoke(runner, ["simulate", "--n", "50", "--T", "1", "--seed", "4",
                        "--out", str(plain)])
        invoke(runner, ["simulate", "--n", "50", "--T", "1", "--seed", "4",
                        "--out", str(latent), "--with-latents"])
        qa, qb = tmp_path / "qa.csv", tmp_path / "qb.csv"
        invoke(runner, ["quadvar", "--in", str(plain), "--T", "1", "--out", str(qa)])
        invoke(runner, ["quadvar", "--in", str(latent), "--T", "1", "--out", str(qb)])
        assert np.allclose(np.loadtxt(qa, delimiter=","),
                           np.loadtxt(qb, delimiter=","), atol=1e-12)


@pytest.fixture(scope="module")
def fit_files(tmp_path_factory):
    runner = CliRunner()
    root = tmp_path_factory.mktemp("cli_fit")
    path = root / "path.csv"
    invoke(runner, ["simulate", "--n", "800", "--T", "1", "--seed", "21",
                    "--out", str(path)])
    fits = []
    for name in ("model1", "model2", "model3"):
        out = root / f"{name}.json"
        invoke(runner, ["fit", "--spec", name, "--data", str(path),
                        "--T", "1", "--out", str(out)])
        fits.append(out)
    return root, path, fits


class TestFitAndCriteria:
    def test_fit_report_fields(self, fit_files):
        _, _, fits = fit_files
        doc = json.loads(fits[0].read_text())
        for key in ("model", "n", "q", "theta_hat", "h_at_hat", "grad_norm",
                    "hessian", "j_flag", "gamma_tilde", "iterations",
                    "restarts", "converged", "boundary_hit"):
            assert key in doc
        assert doc["n"] == 800 and doc["q"] == 22

    def test_fit_with_init_and_starts(self, runner, fit_files, tmp_path):
        root, path, _ = fit_files
        init = tmp_path / "init.csv"
        np.savetxt(init, [[3, 4, 6, 3, 2, 2, 4, 3, 2, 9, 4, 1, 4, 9, 25, 1,
                           4, 1, 9, 4, 9, 1]], delimiter=",")
        out = tmp_path / "fit.json"
        invoke(runner, ["fit", "--spec", "model1", "--data", str(path),
                        "--T", "1", "--init", str(init), "--out", str(out)])
        doc = json.loads(out.read_text())
        assert doc["restarts"] == 0

    def test_criteria_csv(self, runner, fit_files, tmp_path):
        _, _, fits = fit_files
        out = tmp_path / "criteria.csv"
        args = ["criteria"]
        for f in fits:
            args += ["--fits", str(f)]
        args += ["--criterion", "qbic2", "--out", str(out)]
        invoke(runner, args)
        lines = out.read_text().splitlines()
        assert lines[0] == ("model_id,q,n,h_at_hat,qbic1,qbic2,qaic,"
                            "j_flag,posterior_prob,selected")
        assert len(lines) == 4
        selected = [ln.split(",")[0] for ln in lines[1:]
                    if ln.split(",")[-1] == "True"]
        assert selected == ["model1"]
        probs = [float(ln.split(",")[-2]) for ln in lines[1:]]
        assert abs(sum(probs) - 1.0) < 1e-9

    def test_criteria_priors_flag(self, runner, fit_files, tmp_path):
        _, _, fits = fit_files
        out = tmp_path / "criteria.csv"
        args = ["criteria"]
        for f in fits:
            args += ["--fits", str(f)]
        args += ["--priors", "0.2,0.3,0.5", "--out", str(out)]
        invoke(runner, args)

    def test_criteria_rejects_mixed_grids(self, runner, fit_files, tmp_path):
        root, path, fits = fit_files
        other = tmp_path / "path2.csv"
        invoke(runner, ["simulate", "--n", "400", "--T", "1", "--seed", "22",
                        "--out", str(other)])
        fit2 = tmp_path / "m1_other.json"
        invoke(runner, ["fit", "--spec", "model1", "--data", str(other),
                        "--T", "1", "--out", str(fit2)])
        result = runner.invoke(main, ["criteria", "--fits", str(fits[0]),
                                      "--fits", str(fit2),
                                      "--out", str(tmp_path / "c.csv")])
        assert result.exit_code != 0


class TestTable1:
    def test_full_run(self, runner, tmp_path):
        config = harness.ExperimentConfig(
            n_values=[100], T=1.0, replications=2, master_seed=5,
            model_spec_paths=["model1", "model2", "model3"],
            criteria=["qbic2"])
        config_path = tmp_path / "exp.json"
        config.to_json(config_path)
        out_dir = tmp_path / "results"
        result = invoke(runner, ["table1", "--config", str(config_path),
                                 "--out-dir", str(out_dir)])
        assert (out_dir / "table.txt").exists()
        assert (out_dir / "table.csv").exists()
        assert (out_dir / "replications.csv").exists()
        assert "Selection counts" in result.output
