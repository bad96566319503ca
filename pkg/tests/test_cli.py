from __future__ import annotations

import csv
import io
import json
import re
import threading
import urllib.request

import pytest

from tracescope import Mode, QueryService, SelectorTuple, View
from tracescope.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, main


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = root / "demo"
    code = main(["demo-train", "--steps", "80", "--seed", "2", "--out", str(out),
                 "--growth", "1.5"])
    assert code == EXIT_OK
    return out


class TestDemoTrainAndValidate:
    def test_validate_clean_run(self, demo_run):
        assert main(["validate", str(demo_run)]) == EXIT_OK

    def test_validate_missing_dir(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope")]) == EXIT_IO

    def test_validate_corrupted_chunk_names_it(self, demo_run, tmp_path, capsys):
        import shutil
        copy = tmp_path / "corrupt"
        shutil.copytree(demo_run, copy)
        chunk = sorted((copy / "chunks").glob("*.chunk"))[0]
        data = bytearray(chunk.read_bytes())
        data[len(data) // 2] ^= 0x55
        chunk.write_bytes(bytes(data))
        assert main(["validate", str(copy)]) == EXIT_VALIDATION
        err = capsys.readouterr().err
        assert chunk.name in err

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["demo-train"])  # missing required --out
        assert excinfo.value.code == 2

    def test_inject_bug_run_still_validates(self, tmp_path):
        out = tmp_path / "buggy"
        assert main(["demo-train", "--steps", "30", "--seed", "3", "--out",
                     str(out), "--inject-bug"]) == EXIT_OK
        assert main(["validate", str(out)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["losses"] == ["main", "combined"]


class TestStats:
    def test_stats_summary(self, demo_run, capsys):
        assert main(["stats", str(demo_run)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "run_id:          toy_run" in out
        assert "trial_0 / default" in out
        assert "chunk storage" in out

    def test_stats_on_non_run(self, tmp_path):
        assert main(["stats", str(tmp_path)]) == EXIT_IO


class TestExport:
    def test_csv_matches_api_payloads(self, demo_run, tmp_path):
        service = QueryService(demo_run.parent)
        steps = service.list_steps("demo", "trial_0")
        step = steps[-1]
        out_file = tmp_path / "dump.csv"
        assert main(["export", "--run", str(demo_run), "--trial", "trial_0",
                     "--step", str(step), "--node", "input", "--format", "csv",
                     "--out", str(out_file)]) == EXIT_OK
        rows = list(csv.DictReader(out_file.open()))
        assert rows, "export produced no rows"

        agg_rows = [r for r in rows if r["view"] == "aggregate"]
        for row in agg_rows:
            mode = Mode.forward() if row["mode"] == "forward" else \
                Mode.gradient(row["loss"])
            payload = service.get_record("demo", SelectorTuple(
                trial_id="trial_0", step=step, node_id="input",
                variant_key=row["variant"], mode=mode, view=View.aggregate()))
            assert float(row["mean"]) == payload["stats"]["mean"]
            assert int(row["count"]) == payload["stats"]["count"]

        sample_rows = [r for r in rows if r["view"] == "sample"]
        assert sample_rows
        probe = sample_rows[0]
        mode = Mode.forward() if probe["mode"] == "forward" else \
            Mode.gradient(probe["loss"])
        payload = service.get_record("demo", SelectorTuple(
            trial_id="trial_0", step=step, node_id="input",
            variant_key=probe["variant"], mode=mode,
            view=View.sample(int(probe["index"]))))
        assert json.loads(probe["values"]) == payload["values"]

    def test_jsonl_row_per_projection(self, demo_run, capsys):
        service = QueryService(demo_run.parent)
        steps = service.list_steps("demo", "trial_0")
        assert main(["export", "--run", str(demo_run), "--trial", "trial_0",
                     "--step", str(steps[0]), "--node", "loss_main",
                     "--format", "jsonl"]) == EXIT_OK
        lines = [json.loads(line) for line in
                 capsys.readouterr().out.strip().splitlines()]
        views = {(l["mode"], l["loss"], l["view"], l["index"]) for l in lines}
        assert len(views) == len(lines)
        # loss_main: forward + main/combined gradients, aggregate + 1 neuron each
        assert {"aggregate", "per_neuron"} <= {l["view"] for l in lines}


class TestServe:
    def test_serve_ephemeral_port_lists_runs(self, demo_run, capsys):
        # drive the server exactly as the CLI would, but stoppable
        from tracescope.server import make_server
        server = make_server(demo_run.parent, port=0)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address[:2]
            with urllib.request.urlopen(f"http://{host}:{port}/api/runs") as resp:
                runs = json.loads(resp.read())
            assert [r["run_id"] for r in runs] == ["demo"]
        finally:
            server.shutdown()
            server.server_close()

    def test_serve_missing_root_is_io_error(self, tmp_path):
        assert main(["serve", "--data-root", str(tmp_path / "missing")]) == EXIT_IO

    def test_empty_root_serves_empty_listing(self, tmp_path):
        from tracescope.server import make_server
        server = make_server(tmp_path, port=0)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address[:2]
            with urllib.request.urlopen(f"http://{host}:{port}/api/runs") as resp:
                assert json.loads(resp.read()) == []
        finally:
            server.shutdown()
            server.server_close()
