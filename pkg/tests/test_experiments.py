import json

import numpy as np
import pytest

from brokensample import cli, loss
from brokensample.errors import ConfigError, DegenerateCV, MissingInput
from brokensample.experiments import oracles
from brokensample.experiments.config import DEFAULT_CONFIGS, ExperimentConfig, load_config
from brokensample.experiments.io import SCHEMAS, format_value, read_csv, write_csv
from brokensample.experiments.plotting import freedman_diaconis_bins, render_svg
from brokensample.experiments.runners import (EstimateRow, run_limit_convergence,
                                              run_loss_curves, run_simulate, summarize)


def _cfg(tmp_path, **over):
    raw = {"model": {"kind": "torus_wrapped_gaussian", "true_sigma": 0.1},
           "M_list": [5], "N_list": [4], "replicates": 3, "seed": 11,
           "optimizer": {"grid_points": 11},
           "outputs": {"directory": str(tmp_path)}}
    raw.update(over)
    return ExperimentConfig.from_dict(raw)


class TestConfig:
    def test_defaults_valid(self):
        for raw in DEFAULT_CONFIGS.values():
            ExperimentConfig.from_dict(raw)

    @pytest.mark.parametrize("raw", [
        {"model": {"kind": "torus_wrapped_gaussian"}, "M_list": [2], "N_list": [1], "typo": 1},
        {"model": {"kind": "torus_wrapped_gaussian", "sigma": 0.1}, "M_list": [2], "N_list": [1]},
        {"model": {"kind": "nope"}, "M_list": [2], "N_list": [1]},
        {"model": {"kind": "torus_wrapped_gaussian"}, "M_list": [], "N_list": [1]},
        {"model": {"kind": "torus_wrapped_gaussian"}, "M_list": [2], "N_list": [1], "replicates": 0},
        {"model": {"kind": "torus_wrapped_gaussian"}, "M_list": [2], "N_list": [1],
         "theta_star": [0.9]},
        {"model": {"kind": "torus_wrapped_gaussian"}, "M_list": [2], "N_list": [1],
         "theta_grid": {"lo": 0.3, "hi": 0.2, "count": 5}},
        {"model": {"kind": "torus_wrapped_gaussian"}, "M_list": [2], "N_list": [1],
         "outputs": {"formats": ["png"]}},
    ])
    def test_rejected(self, raw):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_load(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(DEFAULT_CONFIGS["simulate"]))
        assert load_config(p).M_list == (50,)
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_overrides(self, tmp_path):
        cfg = _cfg(tmp_path).with_overrides(seed=5, out_dir="x")
        assert (cfg.seed, cfg.out_dir) == (5, "x")


class TestThetaGrid:
    @pytest.mark.parametrize("lo,hi,count", [(-0.95, 0.95, 39), (-0.9, 0.9, 7),
                                             (0.02, 0.5, 61), (-1.2, 1.6, 5)])
    def test_endpoints_exact_and_symmetric_zero(self, lo, hi, count):
        from brokensample.experiments.config import ThetaGrid
        pts = ThetaGrid(lo, hi, count).points()
        assert pts[0] == lo and pts[-1] == hi
        assert np.all(np.diff(pts) > 0)
        if lo == -hi and count % 2:
            assert pts[count // 2] == 0.0


class TestIO:
    def test_golden_schema(self):
        assert SCHEMAS == {
            "estimates": ["theta_star", "replicate", "M", "N", "theta_hat", "loss_at_hat"],
            "timing": ["theta_star", "replicate", "M", "N", "wall_time"],
            "summary": ["theta_star", "M", "N", "replicates", "mean", "sd", "cv",
                        "median_abs_err"],
            "loss_curves": ["theta_star", "M", "N", "replicate", "theta", "loss"],
            "limit_curve": ["theta_star", "theta", "limit_loss"],
            "limit_convergence": ["theta", "is_truth", "M", "expected_loss", "limit_loss",
                                  "abs_error"],
            "limit_slopes": ["theta", "is_truth", "slope", "ratio_64_8"],
            "oracle_check": ["check", "max_deviation", "tolerance", "passed"],
        }

    def test_format(self):
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(True) == "true"
        assert format_value(None) == ""
        assert format_value(3) == "3"

    def test_round_trip(self, tmp_path):
        write_csv(tmp_path / "a.csv", "limit_curve", [(0.1, 0.2, -1.0 / 3)])
        text = (tmp_path / "a.csv").read_text()
        assert text == "theta_star,theta,limit_loss\n0.10000000000000001," \
                       "0.20000000000000001,-0.33333333333333331\n"
        assert float(read_csv(tmp_path / "a.csv")[0]["limit_loss"]) == -1.0 / 3

    def test_wrong_width(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "a.csv", "limit_curve", [(1, 2)])


class TestRunners:
    def test_simulate_rows(self, tmp_path):
        cfg = _cfg(tmp_path)
        res = run_simulate(cfg)
        assert len(res.rows) == 3
        assert all(0.02 <= r.theta_hat <= 0.5 for r in res.rows)
        rows = read_csv(tmp_path / "simulate_estimates.csv")
        assert [int(r["replicate"]) for r in rows] == [0, 1, 2]
        s = res.cell(5, 4)
        assert s.cv == pytest.approx(s.sd / s.mean)

    def test_rerun_is_byte_identical(self, tmp_path):
        run_simulate(_cfg(tmp_path / "a", replicates=1))
        run_simulate(_cfg(tmp_path / "b", replicates=1))
        for f in ("simulate_estimates.csv", "simulate_summary.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_threads_do_not_change_output(self, tmp_path):
        run_simulate(_cfg(tmp_path / "a"), threads=1)
        run_simulate(_cfg(tmp_path / "b"), threads=4)
        for f in ("simulate_estimates.csv", "simulate_summary.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_bivariate_curves_share_zero(self, tmp_path):
        cfg = _cfg(tmp_path, model={"kind": "bivariate_normal_ratio", "true_rho": -0.5},
                   theta_grid={"lo": -0.9, "hi": 0.9, "count": 7}, M_list=[2, 5])
        res = run_loss_curves(cfg)
        for (_, M, N), (grid, vals) in res.curves.items():
            zero = int(np.argmin(np.abs(grid)))
            assert grid[zero] == 0.0
            assert np.all(np.abs(vals[:, zero]) < 1e-12)
        assert len(res.rows) == 3 * 2

    def test_summary_degenerate_cv(self):
        rows = [EstimateRow(0.0, r, 2, 2, 0.0, 0.0, 0.0) for r in range(3)]
        assert summarize(rows)[0].cv is None
        with pytest.raises(DegenerateCV):
            summarize(rows, require_cv=True)

    def test_requires_scalar_model(self, tmp_path):
        g = [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 0.0]]]
        with pytest.raises(ConfigError):
            _cfg(tmp_path, model={"kind": "discrete_tabular", "mu": [0.5, 0.5],
                                  "nu": [0.5, 0.5], "features": g,
                                  "theta_domain": [[-1, -1], [1, 1]],
                                  "true_theta": [0.1, 0.2]})

    def test_limit_convergence_table(self, tmp_path):
        raw = dict(DEFAULT_CONFIGS["limit-convergence"], outputs={"directory": str(tmp_path)})
        table = run_limit_convergence(ExperimentConfig.from_dict(raw))
        assert len(table.thetas) == 6 and table.truth in table.thetas
        for th in table.thetas:
            assert table.errors[th][0] > table.errors[th][-1]
            assert -1.5 <= table.slopes[th] <= -0.7
        assert len(read_csv(tmp_path / "limit_convergence.csv")) == 6 * 8

    def test_limit_convergence_needs_discrete(self, tmp_path):
        with pytest.raises(ConfigError):
            run_limit_convergence(_cfg(tmp_path))


class TestOracles:
    def test_tolerances_match_acceptance_values(self):
        t = oracles.TOLERANCES
        assert t["bruteforce_vs_exact"] == 1e-12
        assert t["limit_decay_ratio"] == 0.25
        assert t["kl_identity"] == 1e-10
        assert t["gradient_torus"] == t["gradient_bivariate"] == 1e-6
        assert t["permutation_invariance"] == 1e-10
        assert t["m1_collapse"] == 0.0
        assert t["bivariate_gauss_hermite"] == 1e-6
        assert t["torus_trapezoid"] == 1e-8

    def test_mutation_is_detected(self, monkeypatch, discrete2, discrete3):
        original = loss.expected_loss_exact
        monkeypatch.setattr(loss, "expected_loss_exact",
                            lambda m, t, M: original(m, t, M) + 1e-6)
        dev = oracles.check_bruteforce([discrete2, discrete3])
        assert dev > oracles.TOLERANCES["bruteforce_vs_exact"]


class TestPlotting:
    def test_fd_bins_against_numpy(self):
        rng = np.random.default_rng(0)
        for n in (10, 50, 400):
            x = rng.normal(size=n)
            expected = max(8, len(np.histogram_bin_edges(x, bins="fd")) - 1)
            assert freedman_diaconis_bins(x) == expected

    def test_fd_bins_degenerate(self):
        assert freedman_diaconis_bins(np.ones(5)) == 8
        with pytest.raises(MissingInput):
            freedman_diaconis_bins([])

    def test_loss_curve_panels(self, tmp_path):
        cfg = _cfg(tmp_path, M_list=[2, 5], N_list=[3],
                   theta_grid={"lo": 0.05, "hi": 0.3, "count": 6})
        run_loss_curves(cfg)
        files = render_svg(tmp_path, kinds=["loss_curve"])
        panels = sorted(f.name for f in files if f.name.startswith("loss_curve_ts"))
        assert panels == ["loss_curve_ts0.1_M2_N3.svg", "loss_curve_ts0.1_M5_N3.svg"]
        text = (tmp_path / panels[0]).read_text()
        assert "θ" in text and "loss" in text
        assert "xlink:href=\"http" not in text

    def test_svg_deterministic(self, tmp_path):
        run_simulate(_cfg(tmp_path))
        a = [f.read_bytes() for f in render_svg(tmp_path)]
        b = [f.read_bytes() for f in render_svg(tmp_path)]
        assert a == b

    def test_missing_inputs(self, tmp_path):
        with pytest.raises(MissingInput):
            render_svg(tmp_path)
        write_csv(tmp_path / "simulate_estimates.csv", "estimates", [])
        with pytest.raises(MissingInput):
            render_svg(tmp_path)


class TestCli:
    def test_oracle_check_exit_zero(self, tmp_path, capsys):
        assert cli.main(["oracle-check", "--out-dir", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == len(oracles.TOLERANCES)
        assert (tmp_path / "oracle_check.csv").exists()

    def test_oracle_failure_exit_two(self, tmp_path, monkeypatch):
        original = loss.expected_loss_exact
        monkeypatch.setattr(loss, "expected_loss_exact",
                            lambda m, t, M: original(m, t, M) + 1e-6)
        assert cli.main(["oracle-check", "--out-dir", str(tmp_path)]) == 2
        rows = read_csv(tmp_path / "oracle_check.csv")
        assert {r["check"]: r["passed"] for r in rows}["bruteforce_vs_exact"] == "false"

    def test_usage_errors_exit_one(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            cli.main(["bogus"])
        assert e.value.code == 1
        with pytest.raises(SystemExit) as e:
            cli.main(["simulate", "--seed", "-4"])
        assert e.value.code == 1
        assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1
        assert cli.main(["render", "--out-dir", str(tmp_path)]) == 1

    def test_numeric_failure_exit_three(self, tmp_path, monkeypatch):
        from brokensample.errors import NonFiniteLoss
        from brokensample.experiments import runners

        def boom(*a, **k):
            raise NonFiniteLoss("pseudo loss is not finite")

        monkeypatch.setattr(runners, "pseudo_loss", boom)
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"model": {"kind": "torus_wrapped_gaussian"},
                                   "M_list": [3], "N_list": [2], "replicates": 1}))
        assert cli.main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 3

    def test_simulate_with_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"model": {"kind": "bivariate_normal_ratio"},
                                   "M_list": [3], "N_list": [2], "replicates": 2,
                                   "optimizer": {"grid_points": 9}}))
        code = cli.main(["--seed", "9", "simulate", "--config", str(cfg), "-M", "4", "-N", "3",
                         "--out-dir", str(tmp_path / "o"), "--threads", "2"])
        assert code == 0
        rows = read_csv(tmp_path / "o" / "simulate_estimates.csv")
        assert {(r["M"], r["N"]) for r in rows} == {("4", "3")}
        assert any(p.suffix == ".svg" for p in (tmp_path / "o").iterdir())
