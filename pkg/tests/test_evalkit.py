import csv
import json
from pathlib import Path

import numpy as np
import pytest

from oransim import ArtifactError
from oransim.evalkit import (
    EvalError,
    audit_decision_log,
    compare_modes,
    read_kpi_csv,
    render_report_text,
    residuals,
    write_report,
)


class TestResiduals:
    def test_perfect_prediction(self):
        r = residuals(np.ones(5), np.ones(5))
        assert np.array_equal(r.e, np.zeros(5))

    def test_hand_values(self):
        r = residuals(np.array([200.0, 210.0]), np.array([195.0, 215.0]))
        assert list(r.e) == [5.0, -5.0]

    def test_length_mismatch(self):
        with pytest.raises(EvalError, match="mismatch"):
            residuals(np.ones(4), np.ones(5))

    def test_unbiased_on_zero_mean_noise(self):
        rng = np.random.default_rng(0)
        n = 40_000
        noise = rng.normal(0.0, 1.0, n)
        r = residuals(noise, np.zeros(n))
        assert abs(r.stats()["mean"]) < 3.0 / np.sqrt(n)

    def test_stats_invariant_under_reordering(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=50)
        yhat = rng.normal(size=50)
        perm = rng.permutation(50)
        a = residuals(y, yhat).stats()
        b = residuals(y[perm], yhat[perm]).stats()
        for key in a:
            assert a[key] == pytest.approx(b[key], rel=1e-12, abs=1e-12)


def _write_run(
    run_dir: Path,
    mode: str,
    tput,
    ee,
    scenario_hash="abc",
    eval_seed=0,
    with_predictions=False,
):
    run_dir.mkdir(parents=True, exist_ok=True)
    n = len(tput)
    (run_dir / "manifest.json").write_text(
        json.dumps(
            {
                "stage": "evaluate",
                "mode": mode,
                "eval_seed": eval_seed,
                "scenario_hash": scenario_hash,
                "duration_s": float(n),
                "config_hash": "x",
            }
        )
    )
    with open(run_dir / "kpi.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["frame", "throughput_mbps", "latency_ms_video", "latency_ms_gaming",
             "latency_ms_voice", "drop_rate", "power_w", "ee_mbits_per_joule"]
        )
        for i in range(n):
            writer.writerow([i, tput[i], 1.0, 1.0, 1.0, 0.0, 400.0, ee[i]])
    with open(run_dir / "series.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "mbps"])
        for i in range(n):
            writer.writerow([i, tput[i]])
    if with_predictions:
        with open(run_dir / "predictions.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "actual_mbps", "predicted_mbps", "naive_mbps",
                             "moving_avg_mbps"])
            for i in range(n):
                writer.writerow([i, tput[i], tput[i] + 1.0, tput[i] + 3.0, tput[i] - 2.0])


class TestCompareModes:
    def test_identical_runs_zero_delta(self, tmp_path):
        tput = [200.0, 210.0, 190.0]
        ee = [0.5, 0.55, 0.45]
        _write_run(tmp_path / "a", "proposed", tput, ee, with_predictions=True)
        _write_run(tmp_path / "b", "always_steering", tput, ee)
        _write_run(tmp_path / "c", "always_sleeping", tput, ee)
        report = compare_modes([tmp_path / "a", tmp_path / "b", tmp_path / "c"])
        assert report.ee_delta_vs_always_steering == pytest.approx(0.0)
        assert report.throughput_delta_vs_always_sleeping == pytest.approx(0.0)

    def test_deltas_recomputable_from_csvs(self, tmp_path):
        _write_run(tmp_path / "p", "proposed", [220.0, 230.0], [0.6, 0.62])
        _write_run(tmp_path / "s", "always_steering", [218.0, 226.0], [0.5, 0.52])
        report = compare_modes([tmp_path / "p", tmp_path / "s"])
        kpi_p = read_kpi_csv(tmp_path / "p")
        kpi_s = read_kpi_csv(tmp_path / "s")
        ee_p = np.sum(kpi_p["throughput_mbps"]) / np.sum(kpi_p["power_w"])
        ee_s = np.sum(kpi_s["throughput_mbps"]) / np.sum(kpi_s["power_w"])
        assert report.ee_delta_vs_always_steering == pytest.approx((ee_p - ee_s) / ee_s, rel=1e-9)

    def test_mismatched_scenarios_rejected(self, tmp_path):
        _write_run(tmp_path / "a", "proposed", [200.0], [0.5], scenario_hash="abc")
        _write_run(tmp_path / "b", "always_steering", [200.0], [0.5], scenario_hash="zzz")
        with pytest.raises(EvalError, match="mismatched"):
            compare_modes([tmp_path / "a", tmp_path / "b"])

    def test_mismatched_seed_sets_rejected(self, tmp_path):
        _write_run(tmp_path / "a", "proposed", [200.0], [0.5], eval_seed=0)
        _write_run(tmp_path / "b", "always_steering", [200.0], [0.5], eval_seed=5)
        with pytest.raises(EvalError, match="seed"):
            compare_modes([tmp_path / "a", tmp_path / "b"])

    def test_residual_stats_from_predictions(self, tmp_path):
        _write_run(tmp_path / "p", "proposed", [200.0, 210.0, 190.0], [0.5] * 3,
                   with_predictions=True)
        report = compare_modes([tmp_path / "p"])
        assert report.residual_stats["forecaster"]["mean"] == pytest.approx(-1.0)
        assert report.residual_stats["moving_average"]["mean"] == pytest.approx(2.0)

    def test_volume_bins_present(self, tmp_path):
        rng = np.random.default_rng(0)
        tput = list(rng.uniform(100, 300, 50))
        _write_run(tmp_path / "p", "proposed", tput, [0.5] * 50)
        report = compare_modes([tmp_path / "p"], volume_bin_mbps=50.0)
        assert report.volume_bins
        assert all("volume_mbps" in row for row in report.volume_bins)

    def test_report_files_written(self, tmp_path):
        _write_run(tmp_path / "p", "proposed", [200.0, 250.0], [0.5, 0.6],
                   with_predictions=True)
        report = compare_modes([tmp_path / "p"])
        out = write_report(report, tmp_path / "report")
        assert (out / "report.txt").exists()
        assert (out / "report.json").exists()
        assert (out / "aggregates.csv").exists()
        text = render_report_text(report)
        assert "proposed" in text

    def test_missing_artifacts_named(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(ArtifactError, match="manifest"):
            compare_modes([tmp_path / "empty"])


class TestDecisionAudit:
    def test_audit_counts_violations(self, tmp_path):
        run = tmp_path / "run"
        run.mkdir()
        rows = [
            ("0", "", "220", "140", "idle", "0", "0"),
            ("1", "250.0", "220", "140", "activate_steering", "1", "0"),
            ("2", "100.0", "220", "140", "activate_sleeping", "0", "1"),
            ("3", "180.0", "220", "140", "idle", "0", "0"),
        ]
        with open(run / "decision_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "t_p_mbps", "th_p_mbps", "th_t_mbps", "decision", "S", "V"])
            writer.writerows(rows)
        audit = audit_decision_log(run)
        assert audit == {"frames": 4, "sv_violations": 0, "lead_mismatches": 0}

    def test_audit_flags_bad_rows(self, tmp_path):
        run = tmp_path / "run"
        run.mkdir()
        rows = [
            ("0", "100.0", "220", "140", "activate_sleeping", "1", "1"),  # S+V violation
            ("1", "180.0", "220", "140", "idle", "1", "0"),  # steering without trigger
        ]
        with open(run / "decision_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "t_p_mbps", "th_p_mbps", "th_t_mbps", "decision", "S", "V"])
            writer.writerows(rows)
        audit = audit_decision_log(run)
        assert audit["sv_violations"] == 1
        assert audit["lead_mismatches"] >= 1
