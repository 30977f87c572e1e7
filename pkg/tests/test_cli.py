"""CLI contract: schema, artifacts, exit codes, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from panelmidas.cli import DEFAULT_CONFIG, main, read_panel_csv, resolve_config
from panelmidas.errors import SchemaError


def write_panel(path, y, covs):
    """Long-format fixture: subperiod j holds lag j-1 (1 = most recent)."""
    N, T = y.shape
    lines = ["entity,period,subperiod,variable,value"]
    for i in range(N):
        for t in range(T):
            lines.append(f"e{i},{t+1},1,y,{y[i,t]:.12g}")
            for name, arr in covs.items():
                for j in range(arr.shape[2]):
                    lines.append(f"e{i},{t+1},{j+1},{name},{arr[i,t,j]:.12g}")
    path.write_text("\n".join(lines) + "\n")


def tiny_fixture(path, seed=0, N=2, T=12, m=3):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((N, T, m))
    y = 1.0 + 0.8 * x[:, :, 0] + 0.1 * rng.standard_normal((N, T))
    write_panel(path, y, {"x0": x})


class TestConfig:
    def test_defaults_pass_through(self):
        cfg = resolve_config(None, [])
        assert cfg == DEFAULT_CONFIG
        assert cfg is not DEFAULT_CONFIG

    def test_file_merges_and_rejects_unknown(self, tmp_path):
        good = tmp_path / "good.json"
        good.write_text('{"cv": {"n_folds": 3}}')
        cfg = resolve_config(str(good), [])
        assert cfg["cv"]["n_folds"] == 3
        assert cfg["cv"]["n_lambda"] == DEFAULT_CONFIG["cv"]["n_lambda"]
        bad = tmp_path / "bad.json"
        bad.write_text('{"cv": {"bogus": 3}}')
        with pytest.raises(SchemaError):
            resolve_config(str(bad), [])

    def test_set_overrides(self):
        cfg = resolve_config(None, ["cv.n_folds=4", 'test.targets=["x0"]',
                                    'simulate.dgp={"m": 6}'])
        assert cfg["cv"]["n_folds"] == 4
        assert cfg["test"]["targets"] == ["x0"]
        assert cfg["simulate"]["dgp"]["m"] == 6
        assert cfg["simulate"]["dgp"]["stride"] == 3  # merge, not replace

    def test_set_rejects_unknown_and_malformed(self):
        with pytest.raises(SchemaError):
            resolve_config(None, ["nope.key=1"])
        with pytest.raises(SchemaError):
            resolve_config(None, ["cv.bogus=1"])
        with pytest.raises(SchemaError):
            resolve_config(None, ["cv.n_folds"])
        with pytest.raises(SchemaError):
            resolve_config(None, ['simulate.dgp=3'])


class TestReadPanelCsv:
    def test_reads_fixture(self, tmp_path):
        path = tmp_path / "p.csv"
        tiny_fixture(path)
        data = read_panel_csv(str(path))
        assert data.y.shape == (2, 12)
        assert data.covariates[0].name == "x0"
        assert data.covariates[0].values.shape == (2, 12, 3)

    def test_lag_order_matches_subperiod(self, tmp_path):
        path = tmp_path / "p.csv"
        y = np.zeros((1, 2))
        arr = np.array([[[10.0, 11.0, 12.0], [20.0, 21.0, 22.0]]])
        write_panel(path, y, {"x0": arr})
        data = read_panel_csv(str(path))
        assert np.array_equal(data.covariates[0].values, arr)

    @pytest.mark.parametrize("mutate, fragment", [
        (lambda t: t.replace("e0,1,1,y", "e0,oops,1,y"), "line"),
        (lambda t: t + "e0,1,1,y,0.0\n", "duplicate"),
        (lambda t: "\n".join(t.splitlines()[:-1]) + "\n", "missing cell"),
        (lambda t: t.replace("entity,", "who,"), "expected columns"),
        (lambda t: t.replace("e0,1,1,y", "e0,1,0,y"), "subperiod"),
    ])
    def test_schema_violations_are_named(self, tmp_path, mutate, fragment):
        path = tmp_path / "p.csv"
        tiny_fixture(path)
        path.write_text(mutate(path.read_text()))
        with pytest.raises(SchemaError, match=fragment):
            read_panel_csv(str(path))

    def test_missing_response_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("entity,period,subperiod,variable,value\n"
                        "e0,1,1,x0,1.0\n")
        with pytest.raises(SchemaError, match="'y' missing"):
            read_panel_csv(str(path))


class TestFitCommand:
    def test_golden_fit_artifact(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "fit.json"
        tiny_fixture(path)
        rc = main(["fit", "--input", str(path), "--lambda", "0.01",
                   "--set", "design.legendre_degree=1",
                   "--output", str(out)])
        assert rc == 0
        art = json.loads(out.read_text())
        assert art["schema_version"] == 1
        assert art["converged"] is True
        assert len(art["coefficients"]) == 2
        assert len(art["intercepts"]) == 1
        assert art["penalty"] == {"lambda": 0.01, "gamma": 1.0,
                                  "source": "flag"}

    def test_huge_lambda_zeroes_all_slopes(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "fit.json"
        tiny_fixture(path)
        rc = main(["fit", "--input", str(path), "--lambda", "1e9",
                   "--set", "design.legendre_degree=1",
                   "--output", str(out)])
        assert rc == 0
        art = json.loads(out.read_text())
        assert all(c["value"] == 0.0 for c in art["coefficients"])

    def test_malformed_csv_exits_1_naming_row(self, tmp_path, capsys):
        path = tmp_path / "p.csv"
        tiny_fixture(path)
        text = path.read_text().replace("e1,3,1,y", "e1,bogus,1,y")
        path.write_text(text)
        rc = main(["fit", "--input", str(path), "--lambda", "0.1"])
        assert rc == 1
        assert "line" in capsys.readouterr().err

    def test_nonconvergence_exits_2_with_artifact(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "fit.json"
        tiny_fixture(path)
        rc = main(["fit", "--input", str(path), "--lambda", "1e-4",
                   "--set", "solver.max_iterations=1",
                   "--set", "design.legendre_degree=1",
                   "--output", str(out)])
        assert rc == 2
        art = json.loads(out.read_text())
        assert art["converged"] is False

    def test_fixed_effects_estimator(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "fit.json"
        tiny_fixture(path, N=3, T=10)
        rc = main(["fit", "--input", str(path), "--estimator", "fe-sgl",
                   "--lambda", "0.05", "--set", "design.legendre_degree=1",
                   "--output", str(out)])
        assert rc == 0
        art = json.loads(out.read_text())
        assert len(art["intercepts"]) == 3

    def test_cv_source_when_lambda_omitted(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "fit.json"
        tiny_fixture(path)
        rc = main(["fit", "--input", str(path),
                   "--set", "cv.n_folds=3", "--set", "cv.n_lambda=4",
                   "--set", "cv.gamma_grid=[1.0]",
                   "--set", "design.legendre_degree=1",
                   "--output", str(out)])
        assert rc == 0
        art = json.loads(out.read_text())
        assert art["penalty"]["source"] == "cv"
        assert art["penalty"]["lambda"] > 0

    def test_umidas_rejects_other_gamma(self, tmp_path, capsys):
        path = tmp_path / "p.csv"
        tiny_fixture(path)
        rc = main(["fit", "--input", str(path), "--estimator", "lasso-umidas",
                   "--lambda", "0.1", "--gamma", "0.5"])
        assert rc == 1
        assert "gamma=1" in capsys.readouterr().err

    def test_artifact_round_trips(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "fit.json"
        tiny_fixture(path)
        main(["fit", "--input", str(path), "--lambda", "0.01",
              "--set", "design.legendre_degree=1", "--output", str(out)])
        text = out.read_text()
        assert json.dumps(json.loads(text), indent=2) + "\n" == text


class TestCvCommand:
    def test_cv_artifact(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "cv.json"
        tiny_fixture(path)
        rc = main(["cv", "--input", str(path),
                   "--set", "cv.n_folds=3", "--set", "cv.n_lambda=4",
                   "--set", "cv.gamma_grid=[0.5,1.0]",
                   "--set", "design.legendre_degree=1",
                   "--output", str(out)])
        assert rc == 0
        art = json.loads(out.read_text())
        assert art["command"] == "cv"
        assert len(art["table"]) == 8
        pairs = {(row["gamma"], row["lambda"]) for row in art["table"]}
        assert (art["best_gamma"], art["best_lambda"]) in pairs
        text = out.read_text()
        assert json.dumps(json.loads(text), indent=2) + "\n" == text


class TestTestCommand:
    def base_args(self, path, out):
        return ["test", "--input", str(path), "--lambda", "0.05",
                "--set", "design.legendre_degree=1",
                "--set", 'test.targets=["x0"]',
                "--set", "nodewise.n_folds=5", "--set", "nodewise.n_lambda=4",
                "--output", str(out)]

    def test_kernel_bandwidth_grid_cells(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "t.json"
        tiny_fixture(path, N=3, T=20)
        rc = main(self.base_args(path, out)
                  + ["--set", 'test.kernels=["parzen","qs"]',
                     "--set", "test.bandwidths=[10.0,20.0,30.0]"])
        assert rc == 0
        art = json.loads(out.read_text())
        assert len(art["cells"]) == 6
        seen = {(c["kernel"], c["bandwidth"]) for c in art["cells"]}
        assert seen == {(k, b) for k in ("parzen", "qs")
                        for b in (10.0, 20.0, 30.0)}

    def test_scalar_group_matches_t_ratio(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "t.json"
        tiny_fixture(path, N=3, T=20)
        rc = main(["test", "--input", str(path), "--lambda", "0.05",
                   "--set", "design.legendre_degree=0",
                   "--set", 'test.targets=["x0"]',
                   "--set", "nodewise.n_folds=5",
                   "--set", "nodewise.n_lambda=4",
                   "--kernel", "parzen", "--bandwidth", "5",
                   "--output", str(out)])
        assert rc == 0
        cell = json.loads(out.read_text())["cells"][0]
        assert cell["df"] == 1
        expected = 2.0 * stats.norm.sf(np.sqrt(cell["statistic"]))
        assert cell["p_value"] == pytest.approx(expected, rel=1e-12)

    def test_unknown_target_exits_1(self, tmp_path, capsys):
        path = tmp_path / "p.csv"
        tiny_fixture(path)
        rc = main(["test", "--input", str(path), "--lambda", "0.05",
                   "--set", "design.legendre_degree=1",
                   "--set", 'test.targets=["nope"]'])
        assert rc == 1
        assert "nope" in capsys.readouterr().err

    def test_fe_estimator_rejected(self, tmp_path, capsys):
        path = tmp_path / "p.csv"
        tiny_fixture(path)
        rc = main(["test", "--input", str(path), "--estimator", "fe-sgl",
                   "--lambda", "0.05", "--set", 'test.targets=["x0"]'])
        assert rc == 1
        assert "pooled" in capsys.readouterr().err

    def test_white_noise_pvalues_uniform(self, tmp_path):
        # no true effect: p-values across seeds should look U[0,1]
        pvals = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            y = rng.standard_normal((4, 50))
            x = rng.standard_normal((4, 50, 3))
            path = tmp_path / "wn.csv"
            out = tmp_path / "wn.json"
            write_panel(path, y, {"x0": x})
            rc = main(self.base_args(path, out)
                      + ["--kernel", "parzen", "--bandwidth", "5"])
            assert rc == 0
            pvals.append(json.loads(out.read_text())["cells"][0]["p_value"])
        ks = stats.kstest(pvals, "uniform").statistic
        assert ks < 0.15


class TestSimulateCommand:
    SIM_SETS = ["--set", 'simulate.models=[["sgl-midas","pooled"]]',
                "--set", "simulate.replications=2",
                "--set", "simulate.weight_scales=[0.0]",
                "--set", "simulate.bandwidths=[5.0]",
                "--set", 'simulate.dgp={"n_entities":4,"n_periods":24,'
                         '"n_covariates":2,"m":6,"hf_burnin":60,"lf_burnin":5}',
                "--set", "simulate.legendre_degree=2",
                "--set", "cv.n_folds=4", "--set", "cv.n_lambda=5",
                "--set", "cv.gamma_grid=[0.5,1.0]",
                "--set", "nodewise.n_folds=3", "--set", "nodewise.n_lambda=4"]

    def test_requires_seed(self, capsys):
        rc = main(["simulate"] + self.SIM_SETS)
        assert rc == 1
        assert "--seed" in capsys.readouterr().err

    def test_writes_csv_and_table(self, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        rc = main(["simulate", "--seed", "4", "--output", str(out)]
                  + self.SIM_SETS)
        assert rc == 0
        text = capsys.readouterr().out
        assert "rejection frequencies" in text
        body = out.read_text()
        assert body.startswith("model,pooling,weight_scale,kernel,bandwidth")
        assert "reject_freq" in body

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        rc = main(["simulate", "--seed", "4", "--output", str(a),
                   "--threads", "1"] + self.SIM_SETS)
        assert rc == 0
        rc = main(["simulate", "--seed", "4", "--output", str(b),
                   "--threads", "2"] + self.SIM_SETS)
        assert rc == 0
        assert a.read_bytes() == b.read_bytes()


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        path = tmp_path / "p.csv"
        out = tmp_path / "fit.json"
        tiny_fixture(path)
        proc = subprocess.run(
            [sys.executable, "-m", "panelmidas", "fit", "--input", str(path),
             "--lambda", "0.01", "--set", "design.legendre_degree=1",
             "--output", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(out.read_text())["converged"] is True

    def test_bad_flag_exits_1(self, capsys):
        assert main(["fit", "--nope"]) == 1
        assert main(["wat"]) == 1
