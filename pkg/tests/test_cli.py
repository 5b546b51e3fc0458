from __future__ import annotations

import json
from pathlib import Path

import pytest

from cascadekit.cli import main

PROFILES_CSV = (
    "model_id,flops_per_example,latency_ms,gpu_tier\n"
    "m1,1e6,2.0,V100\n"
    "m2,2e6,3.0,V100\n"
    "m3,9e6,8.0,A100\n"
)


@pytest.fixture
def workspace(tmp_path):
    profiles = tmp_path / "profiles.csv"
    profiles.write_text(PROFILES_CSV, encoding="utf-8")
    preds = tmp_path / "preds.csv"
    code = main(
        [
            "synth",
            "--num-examples", "400",
            "--label-space", "5",
            "--accuracies", "0.7,0.75,0.9",
            "--correlation", "0.4",
            "--seed", "11",
            "--out-file", str(preds),
        ]
    )
    assert code == 0
    return tmp_path


def read_outputs(out_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}


class TestRun:
    def test_pipeline_and_outputs(self, workspace, capsys):
        out = workspace / "out"
        code = main(
            [
                "run",
                "--predictions", str(workspace / "preds.csv"),
                "--profiles", str(workspace / "profiles.csv"),
                "--tiers", "m1,m2|m3",
                "--theta", "1.0",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "traces.csv").is_file()
        assert (out / "report.csv").is_file()
        summary = json.loads((out / "summary.json").read_text())
        assert 0.0 <= summary["accuracy"] <= 1.0
        assert len(summary["exit_fractions"]) == 2
        assert summary["best_single"]["model_id"] == "m3"
        assert "accuracy=" in capsys.readouterr().out

    def test_repeat_runs_byte_identical(self, workspace):
        argv = [
            "run",
            "--predictions", str(workspace / "preds.csv"),
            "--profiles", str(workspace / "profiles.csv"),
            "--tiers", "m1,m2|m3",
            "--theta", "0.66|1.0",
        ]
        out1, out2 = workspace / "o1", workspace / "o2"
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        assert read_outputs(out1) == read_outputs(out2)

    def test_zero_threshold_reports_tier_one_metrics(self, workspace):
        out = workspace / "zero"
        code = main(
            [
                "run",
                "--predictions", str(workspace / "preds.csv"),
                "--profiles", str(workspace / "profiles.csv"),
                "--tiers", "m1,m2|m3",
                "--theta", "0.0|1.0",
                "--out", str(out),
            ]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["exit_fractions"] == [1.0, 0.0]
        # tier 1 parallel cost: max flops of m1,m2 and max latency, V100 rate
        assert summary["coe"] == {
            "flops": 2e6,
            "latency_ms": 3.0,
            "gpu_dollars_per_hour": 0.50,
        }

    def test_config_file_with_flag_override(self, workspace):
        config = workspace / "run.ini"
        config.write_text(
            "[paths]\n"
            f"predictions = {workspace / 'preds.csv'}\n"
            f"profiles = {workspace / 'profiles.csv'}\n"
            "[cascade]\n"
            "tiers = m1,m2|m3\n"
            "theta = 1.0\n"
            "[run]\n"
            f"out = {workspace / 'cfg_out'}\n",
            encoding="utf-8",
        )
        assert main(["run", "--config", str(config)]) == 0
        assert (workspace / "cfg_out" / "summary.json").is_file()
        # flag wins over the config value
        assert main(["run", "--config", str(config), "--out", str(workspace / "flag_out")]) == 0
        assert (workspace / "flag_out" / "summary.json").is_file()

    def test_unknown_tier_model_is_validation_error(self, workspace, capsys):
        code = main(
            [
                "run",
                "--predictions", str(workspace / "preds.csv"),
                "--profiles", str(workspace / "profiles.csv"),
                "--tiers", "m1|ghost",
                "--theta", "1.0",
                "--out", str(workspace / "x"),
            ]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error: validation:")
        assert err.count("\n") == 1


class TestCostReport:
    def test_cifar_fixture_reproduces_published_total(self, tmp_path, capsys):
        out = tmp_path / "report"
        assert main(["cost-report", "--fixture", "cifar10", "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "gpu_dollars=0.79" in stdout
        assert "dollar_reduction=3.16x" in stdout
        lines = (out / "report.csv").read_text().splitlines()
        dollars_row = next(l for l in lines if l.startswith("gpu_dollars_per_hour"))
        assert dollars_row.split(",")[-2] == "0.79"
        assert dollars_row.split(",")[-1] == "2.49"

    def test_fixture_path_also_accepted(self, tmp_path):
        fixture = tmp_path / "mini.csv"
        fixture.write_text(
            "tier,exit_fraction,dollars_per_hour,latency_ms,flops\n"
            "1,1.0,0.5,1.0,1e6\n"
            "best_single,1.00,0.5,1.0,1e6\n",
            encoding="utf-8",
        )
        assert main(["cost-report", "--fixture", str(fixture), "--out", str(tmp_path / "o")]) == 0


class TestCommSim:
    def test_sst2_default_delays(self, tmp_path, capsys):
        out = tmp_path / "comm"
        assert main(["comm-sim", "--fixture", "sst2", "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "reduction_ratio=13.59x" in stdout
        coe_ms, best_ms, ratio = [
            float(v) for v in (out / "comm.csv").read_text().splitlines()[1].split(",")
        ]
        assert 13.0 <= ratio <= 15.0
        assert coe_ms < best_ms

    def test_custom_delays(self, tmp_path, capsys):
        out = tmp_path / "comm"
        assert (
            main(["comm-sim", "--fixture", "sst2", "--delays", "0,0", "--out", str(out)]) == 0
        )
        stdout = capsys.readouterr().out
        # zero delays reduce to plain latency aggregation
        assert "best_single=7.22 ms" in stdout


class TestPareto:
    def test_three_handmade_points_frontier_of_two(self, tmp_path, capsys):
        points = tmp_path / "points.csv"
        points.write_text(
            "cost,accuracy,tag\n1.0,0.80,a\n2.0,0.90,b\n3.0,0.85,c\n", encoding="utf-8"
        )
        out = tmp_path / "o"
        assert main(["pareto", "--points", str(points), "--out", str(out)]) == 0
        assert "frontier=2 of 3" in capsys.readouterr().out
        rows = (out / "pareto.csv").read_text().splitlines()
        assert rows[0] == "cost,accuracy,tag"
        assert [r.split(",")[2] for r in rows[1:]] == ["a", "b"]

    def test_custom_columns_over_sweep_output(self, workspace):
        out = workspace / "sweep_out"
        assert (
            main(
                [
                    "sweep",
                    "--predictions", str(workspace / "preds.csv"),
                    "--profiles", str(workspace / "profiles.csv"),
                    "--pool", "m1,m2|m3",
                    "--sizes", "1,2",
                    "--thetas", "0.66,1.0",
                    "--out", str(out),
                ]
            )
            == 0
        )
        pareto_out = workspace / "pareto_out"
        assert (
            main(
                [
                    "pareto",
                    "--points", str(out / "sweep.csv"),
                    "--cost-column", "avg_flops",
                    "--accuracy-column", "accuracy",
                    "--out", str(pareto_out),
                ]
            )
            == 0
        )
        assert (pareto_out / "pareto.csv").is_file()


class TestSweepCommand:
    def test_sweep_csv_shape(self, workspace):
        out = workspace / "sweep"
        assert (
            main(
                [
                    "sweep",
                    "--predictions", str(workspace / "preds.csv"),
                    "--profiles", str(workspace / "profiles.csv"),
                    "--pool", "m1,m2|m3",
                    "--sizes", "2",
                    "--thetas", "1.0",
                    "--woc-thetas", "0.5,0.9",
                    "--out", str(out),
                ]
            )
            == 0
        )
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "config,theta_v,ensemble_size,accuracy,avg_flops,avg_latency_ms,gpu_dollars"
        # 1 coe + 3 singles + 2 woc
        assert len(lines) == 1 + 6


class TestErrorsCommand:
    def test_rows_per_threshold(self, workspace):
        out = workspace / "errors"
        assert (
            main(
                [
                    "errors",
                    "--predictions", str(workspace / "preds.csv"),
                    "--tiers", "m1,m2|m3",
                    "--theta", "0.66",
                    "--theta", "1.0",
                    "--big-model", "m3",
                    "--out", str(out),
                ]
            )
            == 0
        )
        import csv

        with open(out / "wrong_agreements.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["config", "wrong_agreements", "big_model_wrong", "rate_percent"]
        assert len(rows) == 3
        assert rows[1][0] == "2 models, threshold=0.66"
        assert rows[2][0] == "2 models, threshold=1.0"


class TestFetch:
    @pytest.fixture
    def live_provider(self):
        import threading

        from test_remote import _ProviderHandler, _QuietServer

        server = _QuietServer(("127.0.0.1", 0), _ProviderHandler)
        server.mode = "ok"
        threading.Thread(target=server.serve_forever, daemon=True).start()
        yield server
        server.shutdown()
        server.server_close()

    def test_fetch_writes_loadable_predictions(self, live_provider, workspace):
        from test_remote import LABEL_SPACE, expected_label

        from cascadekit import load_predictions

        labels_src = workspace / "labels.csv"
        labels_src.write_text(
            "example_id,true_label\n" + "".join(f"e{i},{i % LABEL_SPACE}\n" for i in range(7)),
            encoding="utf-8",
        )
        out = workspace / "fetched"
        code = main(
            [
                "fetch",
                "--remote", f"http://127.0.0.1:{live_provider.server_port}",
                "--models", "m1,m2",
                "--labels-from", str(labels_src),
                "--label-space", str(LABEL_SPACE),
                "--batch-size", "3",
                "--out", str(out),
            ]
        )
        assert code == 0
        table = load_predictions(out / "predictions.csv", label_space_size=LABEL_SPACE)
        assert table.num_examples == 7
        assert table.predictions["m1"] == tuple(
            expected_label(f"e{i}", "m1") for i in range(7)
        )

    def test_fetch_threads_byte_identical(self, live_provider, workspace):
        from test_remote import LABEL_SPACE

        labels_src = workspace / "labels.csv"
        labels_src.write_text(
            "example_id,true_label\n" + "".join(f"e{i},{i % LABEL_SPACE}\n" for i in range(9)),
            encoding="utf-8",
        )
        argv = [
            "fetch",
            "--remote", f"http://127.0.0.1:{live_provider.server_port}",
            "--models", "m1,m2,m3",
            "--labels-from", str(labels_src),
            "--label-space", str(LABEL_SPACE),
            "--batch-size", "2",
        ]
        a, b = workspace / "f1", workspace / "f8"
        assert main(argv + ["--threads", "1", "--out", str(a)]) == 0
        assert main(argv + ["--threads", "8", "--out", str(b)]) == 0
        assert (a / "predictions.csv").read_bytes() == (b / "predictions.csv").read_bytes()

    def test_remote_failure_exits_three(self, workspace, capsys):
        import threading

        from test_remote import _ProviderHandler, _QuietServer

        server = _QuietServer(("127.0.0.1", 0), _ProviderHandler)
        server.mode = "http500"
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            labels_src = workspace / "labels.csv"
            labels_src.write_text("example_id,true_label\ne0,0\n", encoding="utf-8")
            code = main(
                [
                    "fetch",
                    "--remote", f"http://127.0.0.1:{server.server_port}",
                    "--models", "m1",
                    "--labels-from", str(labels_src),
                    "--label-space", "3",
                    "--out", str(workspace / "f"),
                ]
            )
            assert code == 3
            err = capsys.readouterr().err
            assert err.startswith("error: remote:")
            assert err.count("\n") == 1
        finally:
            server.shutdown()
            server.server_close()


class TestValidateAndErrors:
    def test_validate_ok(self, workspace, capsys):
        code = main(
            [
                "validate",
                "--predictions", str(workspace / "preds.csv"),
                "--profiles", str(workspace / "profiles.csv"),
            ]
        )
        assert code == 0
        assert capsys.readouterr().out.startswith("ok:")

    def test_validation_failure_single_line_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("example_id,true_label,pred:m1\ne1,0,9\n", encoding="utf-8")
        code = main(["validate", "--predictions", str(bad), "--label-space", "3"])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error: validation:")
        assert err.count("\n") == 1

    def test_missing_file_is_validation_error(self, tmp_path, capsys):
        code = main(["validate", "--predictions", str(tmp_path / "nope.csv")])
        assert code == 1
        assert "does not exist" in capsys.readouterr().err

    def test_io_failure_exit_two(self, workspace, capsys):
        # --out beneath a regular file cannot be created
        blocker = workspace / "blocker"
        blocker.write_text("x", encoding="utf-8")
        code = main(
            [
                "run",
                "--predictions", str(workspace / "preds.csv"),
                "--profiles", str(workspace / "profiles.csv"),
                "--tiers", "m1|m3",
                "--theta", "1.0",
                "--out", str(blocker / "sub"),
            ]
        )
        assert code == 2
        assert capsys.readouterr().err.startswith("error: io:")

    def test_bad_flag_is_validation_error(self, capsys):
        assert main(["run", "--no-such-flag"]) == 1
        assert capsys.readouterr().err.startswith("error: validation:")

    def test_synth_determinism(self, tmp_path):
        argv = [
            "synth",
            "--num-examples", "50",
            "--label-space", "3",
            "--accuracies", "0.8",
            "--seed", "9",
        ]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(argv + ["--out-file", str(a)]) == 0
        assert main(argv + ["--out-file", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
