import json
import math
import subprocess
import sys

import numpy as np
import pytest

import mvphase as mv
from mvphase.errors import InvalidConfigError
from mvphase.harness import CSV_HEADER, SweepRow, SweepTable, draw_scenario


def small_cfg(**overrides):
    base = dict(n=40, k=3, i_count=6, b_count=2, m_per_device=35, q=0.25,
                theta=0.2, p_outlier=0.02, sigma_w=1.5, seed=0)
    base.update(overrides)
    return mv.ScenarioConfig(**base)


class TestRelativeError:
    def test_exact(self):
        v = np.array([1.0, -2.0, 0.0])
        assert mv.relative_error_up_to_sign(v, v) == 0.0

    def test_global_sign_flip_is_exact(self):
        v = np.array([1.0, -2.0, 0.0])
        assert mv.relative_error_up_to_sign(-v, v) == 0.0

    def test_partial_estimate(self):
        est = np.array([2.0, 0.0, 0.0, 0.0])
        truth = np.array([2.0, 0.0, -1.0, 0.0])
        assert mv.relative_error_up_to_sign(est, truth) == \
            pytest.approx(1 / math.sqrt(5))

    def test_zero_truth(self):
        z = np.zeros(3)
        assert mv.relative_error_up_to_sign(z, z) == 0.0
        assert mv.relative_error_up_to_sign(np.array([1.0, 0, 0]), z) == \
            float("inf")

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mv.relative_error_up_to_sign(np.zeros(2), np.zeros(3))


class TestRunTrial:
    def test_noiseless_full_view_succeeds(self):
        result = mv.run_trial(small_cfg(theta=0.0, p_outlier=0.0, sigma_w=0.0),
                              "proposed", seed=11)
        assert result.all_success
        assert result.support_exact
        assert result.amplitude_max_rel_err <= 1e-9
        assert result.audit_problems == ()

    def test_degenerate_outliers_behave_as_noiseless(self):
        result = mv.run_trial(small_cfg(theta=0.0, p_outlier=1.0, sigma_w=0.0),
                              "proposed", seed=12)
        assert result.all_success
        assert result.condition.k_o == 0

    def test_no_collab_mode_runs(self):
        result = mv.run_trial(small_cfg(), "no_collab", seed=13)
        assert len(result.errors) == 6
        assert result.comm["total"]["messages"] == 0

    def test_unknown_mode_rejected(self):
        with pytest.raises(InvalidConfigError):
            mv.run_trial(small_cfg(), "bogus", seed=1)

    def test_collaboration_gain_on_starved_device(self):
        # Device 1 alone has no private rows for column 1 of the support
        # (every row containing it also contains column 0), so its solo ratio
        # evidence is contaminated; pooled with device 2 the pipeline is exact.
        n = 6
        signal = mv.GlobalSignal(n=n, support=np.array([0, 1]),
                                 values=np.array([1.5, -2.0, 0, 0, 0, 0]))
        phi1 = np.array([
            [1.0, 1.0, 0, 0, 0, 0],
            [2.0, 1.0, 0, 0, 0, 0],
            [0.0, 0, 1.0, 0, 0, 0],
            [0.0, 0, 0, 1.0, 0, 0],
            [0.0, 0, 0, 0, 1.0, 1.0],
        ])
        phi2 = np.array([
            [1.0, 1.0, 0, 0, 0, 0],
            [1.0, 0.0, 0, 0, 0, 0],
            [0.0, 1.0, 0, 0, 0, 0],
            [0.0, 0, 1.0, 0, 0, 0],
            [0.0, 0, 0, 0, 0, 1.0],
        ])
        views = tuple(
            mv.make_device_view(dev, signal, np.ones(n, dtype=np.int8), phi,
                                np.zeros(5))
            for dev, phi in ((1, phi1), (2, phi2)))
        cfg = mv.ScenarioConfig(n=n, k=2, i_count=2, b_count=1, m_per_device=5,
                                q=0.5, theta=0.0, p_outlier=0.0, sigma_w=0.0,
                                seed=0)
        scen = mv.Scenario(config=cfg, signal=signal, views=views)
        solo_phi1 = mv.support_conditional_t(phi1, [0, 1], 1)
        assert solo_phi1 == 0
        proposed = mv.run_trial_on(scen, "proposed", eta=1.0)
        no_collab = mv.run_trial_on(scen, "no_collab", eta=1.0)
        assert proposed.all_success
        assert not no_collab.success[0]


class TestSweep:
    def test_theta_zero_noiseless_rate_one(self):
        cfg = small_cfg(p_outlier=0.0, sigma_w=0.0)
        table = mv.sweep(cfg, "theta", [0.0], trials_per_point=5,
                         modes=("proposed",), master_seed=3, min_t_eff=1)
        assert table.rows[0].success_rate == 1.0
        assert table.audit_ok

    def test_axes_apply(self):
        cfg = small_cfg()
        for axis, value in [("nsr_db", 3.0), ("m_total", 120), ("k", 4)]:
            table = mv.sweep(cfg, axis, [value], trials_per_point=2,
                             modes=("proposed",), master_seed=1, min_t_eff=None)
            assert len(table.rows) == 1

    def test_resampling_counts(self):
        cfg = small_cfg(m_per_device=14, q=0.2)
        table = mv.sweep(cfg, "theta", [0.0], trials_per_point=3,
                         modes=("proposed",), master_seed=5, min_t_eff=1)
        assert table.resamples >= 0

    def test_identical_seeds_reproduce_rows(self):
        cfg = small_cfg()
        t1 = mv.sweep(cfg, "theta", [0.0, 0.2], trials_per_point=3,
                      master_seed=9)
        t2 = mv.sweep(cfg, "theta", [0.0, 0.2], trials_per_point=3,
                      master_seed=9)
        assert t1 == t2


class TestEmitCsv:
    def test_empty_table_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        mv.emit_csv(SweepTable(axis="theta", rows=()), path)
        assert path.read_text() == CSV_HEADER + "\n"

    def test_single_point_two_lines(self, tmp_path):
        path = tmp_path / "one.csv"
        table = SweepTable(axis="theta", rows=(
            SweepRow(value=0.1, mode="proposed", trials=4, success_rate=1.0,
                     mean_rel_err=0.0),))
        mv.emit_csv(table, path)
        assert len(path.read_text().splitlines()) == 2

    def test_three_values_two_modes_seven_lines(self, tmp_path):
        rows = tuple(
            SweepRow(value=v, mode=m, trials=2, success_rate=0.5,
                     mean_rel_err=0.1)
            for v in (0.0, 0.1, 0.2) for m in ("proposed", "no_collab"))
        path = tmp_path / "grid.csv"
        mv.emit_csv(SweepTable(axis="theta", rows=rows), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 7
        assert lines[0] == CSV_HEADER

    def test_master_seed_recorded_as_comment(self, tmp_path):
        path = tmp_path / "seeded.csv"
        mv.emit_csv(SweepTable(axis="theta", rows=(), master_seed=42), path)
        assert path.read_text().splitlines()[0] == "# master_seed=42"

    def test_byte_identical_reruns(self, tmp_path):
        cfg = small_cfg()
        paths = []
        for tag in ("a", "b"):
            table = mv.sweep(cfg, "theta", [0.0, 0.3], trials_per_point=3,
                             master_seed=21)
            path = tmp_path / f"{tag}.csv"
            mv.emit_csv(table, path)
            paths.append(path.read_bytes())
        assert paths[0] == paths[1]


class TestDrawScenario:
    def test_resample_until_t_eff(self):
        cfg = small_cfg()
        scen, resamples = draw_scenario(cfg, 0, 0, 0, min_t_eff=1)
        part = mv.partition_devices(cfg.i_count, cfg.b_count)
        assert mv.effective_t(scen.views, part, scen.signal.support) >= 1
        assert resamples >= 0

    def test_unreachable_bound_raises(self):
        cfg = small_cfg(m_per_device=5)
        with pytest.raises(InvalidConfigError):
            draw_scenario(cfg, 0, 0, 0, min_t_eff=10, max_resamples=3)


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "mvphase.cli", *args],
                          capture_output=True, text=True)


class TestCli:
    @pytest.fixture
    def config_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(small_cfg().to_json())
        return path

    def test_gen_writes_scenario(self, tmp_path, config_file):
        out = tmp_path / "scenario.json"
        proc = run_cli("gen", "--config", str(config_file), "--out", str(out))
        assert proc.returncode == 0
        doc = json.loads(out.read_text())
        assert doc["config"]["seed"] == 0
        assert len(doc["views"]) == 6

    def test_run_reports_summary(self, tmp_path, config_file):
        trace = tmp_path / "trace.jsonl"
        proc = run_cli("run", "--config", str(config_file), "--seed", "3",
                       "--trace", str(trace))
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert doc["seed"] == 3
        assert doc["audit_problems"] == []
        assert len(trace.read_text().splitlines()) >= 6

    def test_sweep_writes_csv(self, tmp_path, config_file):
        out = tmp_path / "sweep.csv"
        proc = run_cli("sweep", "--config", str(config_file), "--axis", "theta",
                       "--values", "0,0.2", "--trials", "2", "--min-t-eff", "1",
                       "--out", str(out))
        assert proc.returncode == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "# master_seed=0"
        assert lines[1] == CSV_HEADER
        assert len(lines) == 6

    def test_verify_reports_conditions(self, config_file):
        proc = run_cli("verify", "--config", str(config_file), "--seed", "2")
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert "t_eff" in doc and "conditions" in doc
        assert len(doc["groups"]) == 2

    def test_invalid_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        doc = small_cfg().to_dict()
        doc["q"] = 2.0
        bad.write_text(json.dumps(doc))
        proc = run_cli("verify", "--config", str(bad))
        assert proc.returncode == 2

    def test_io_error_exits_3(self, tmp_path, config_file):
        proc = run_cli("gen", "--config", str(config_file),
                       "--out", str(tmp_path / "missing" / "out.json"))
        assert proc.returncode == 3
