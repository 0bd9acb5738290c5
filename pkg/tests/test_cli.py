import csv
import io
import json
import threading
from pathlib import Path

import pytest

from harvestopt.cli import main
from harvestopt.scenario import dumps_scenario, load_bundled


@pytest.fixture
def two_target_file(tmp_path):
    sc, opts = load_bundled("two-target")
    path = tmp_path / "two-target.scenario"
    path.write_text(dumps_scenario(sc, opts), encoding="utf-8")
    return path


class TestSimulateCommand:
    def test_writes_trace_and_events(self, two_target_file, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(["simulate", str(two_target_file), "--out", str(out)])
        assert rc == 0
        assert (out / "trace.csv").exists()
        assert (out / "events.csv").exists()
        printed = capsys.readouterr().out
        assert "events" in printed

    def test_bundled_name_accepted(self, tmp_path):
        rc = main(["simulate", "two-target", "--out", str(tmp_path / "o")])
        assert rc == 0

    def test_bundled_name_with_extension(self, tmp_path):
        rc = main(["simulate", "two-target.scenario",
                   "--out", str(tmp_path / "o2")])
        assert rc == 0

    def test_missing_scenario_errors(self, tmp_path, capsys):
        rc = main(["simulate", "no-such-file.scenario",
                   "--out", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_reproducible_outputs(self, two_target_file, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["simulate", str(two_target_file), "--out", str(out1)]) == 0
        assert main(["simulate", str(two_target_file), "--out", str(out2)]) == 0
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
        assert (out1 / "events.csv").read_bytes() == (out2 / "events.csv").read_bytes()


class TestOptimizeCommand:
    def test_p1_short_run_outputs(self, two_target_file, tmp_path, capsys):
        out = tmp_path / "opt"
        rc = main(["optimize", str(two_target_file), "--mode", "P1",
                   "--max-iters", "2", "--out", str(out)])
        assert rc == 0
        for name in ("history.csv", "trace.csv", "events.csv",
                     "trajectory.csv", "report.json"):
            path = out / name
            assert path.exists() and path.stat().st_size > 0
        report = json.loads((out / "report.json").read_text())
        assert report["mode"] == "P1"
        assert report["J2"] == 0.0
        listed = {Path(p).name for p in report["files"]}
        assert {"history.csv", "trace.csv", "events.csv",
                "trajectory.csv"} <= listed

    def test_byte_identical_reruns(self, two_target_file, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            rc = main(["optimize", str(two_target_file), "--mode", "P1",
                       "--max-iters", "2", "--out", str(out)])
            assert rc == 0
            outs.append(out)
        for name in ("history.csv", "trace.csv", "events.csv",
                     "trajectory.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_stall_demo_offset_start(self, tmp_path, capsys):
        out = tmp_path / "stall"
        rc = main(["optimize", "fig3-offset-start", "--mode", "P1",
                   "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["event_counts"]["visit_start"] == 0
        assert report["stop_reason"] == "gradient_tolerance"
        rows = list(csv.reader(io.StringIO(
            (out / "history.csv").read_text())))
        theta_cols = [r[6:] for r in rows[1:]]
        assert all(t == theta_cols[0] for t in theta_cols)


class TestGradcheckCommand:
    def test_table_and_exit_code(self, two_target_file, tmp_path, capsys):
        out = tmp_path / "g"
        rc = main(["gradcheck", str(two_target_file), "--mode", "P1",
                   "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "max relative discrepancy" in printed
        assert "PASS" in printed
        assert (out / "gradcheck.csv").exists()


class TestRemoteMode:
    def test_cli_against_live_server(self, tmp_path):
        import uvicorn

        from harvestopt.service.app import create_app

        config = uvicorn.Config(create_app(), host="127.0.0.1", port=8731,
                                log_level="error")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        import time

        import httpx
        base = "http://127.0.0.1:8731"
        for _ in range(100):
            try:
                if httpx.get(base + "/health", timeout=1.0).status_code == 200:
                    break
            except httpx.TransportError:
                time.sleep(0.1)
        else:
            pytest.fail("server did not come up")
        try:
            out = tmp_path / "remote"
            rc = main(["optimize", "two-target", "--mode", "P1",
                       "--max-iters", "2", "--server", base,
                       "--out", str(out)])
            assert rc == 0
            assert (out / "history.csv").exists()
            report = json.loads((out / "report.json").read_text())
            assert report["iterations"] <= 2
        finally:
            server.should_exit = True
            thread.join(timeout=5)
