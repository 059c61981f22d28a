import subprocess
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from loadcast.cli import COMMANDS, dispatch
from loadcast.network import load_model
from loadcast.simulate import read_prediction

from .conftest import write_trace


def run(*argv):
    return dispatch([str(a) for a in argv])


class TestExitCodes:
    def test_no_command(self, capsys):
        assert run() == 2
        assert "command" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert run("frobnicate") == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag(self):
        assert run("synth", "--profile", "worldcup-days", "--out", "x", "--bogus") == 2

    def test_missing_required(self):
        assert run("ingest", "--out", "x") == 2

    def test_bad_choice(self):
        assert run("synth", "--profile", "hourly", "--out", "x") == 2

    def test_ingest_missing_dir(self, tmp_path, capsys):
        missing = tmp_path / "missing"
        assert run("ingest", "--in", missing, "--out", tmp_path / "o") == 1
        assert str(missing) in capsys.readouterr().err

    def test_plot_empty_prediction(self, tmp_path):
        (tmp_path / "p.tsv").write_text("INDEX\tTARGET\tOUTPUT\tSPLIT\n")
        assert run("plot-data", "--prediction", tmp_path / "p.tsv", "--out", tmp_path / "x") == 1

    def test_experiment_without_data(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LOADCAST_DATA_DIR", raising=False)
        assert run("experiment", "--case", "D1", "--out", tmp_path / "r.csv") == 2

    def test_unknown_case(self, tmp_path):
        assert run("experiment", "--case", "D99", "--synthetic", "--out", tmp_path / "r.csv") == 1

    @pytest.mark.parametrize("command", sorted(COMMANDS))
    def test_help_everywhere(self, command, capsys):
        assert run(command, "--help") == 0
        assert "usage" in capsys.readouterr().out.lower()

    def test_top_level_help(self, capsys):
        assert run("--help") == 0

    @settings(max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(command=st.sampled_from(sorted(COMMANDS)),
           bad=st.sampled_from(["--nope", "-z", "--seed=abc", "--jobs=x", "--out"]),
           extra=st.lists(st.sampled_from(["abc", "--title", "1"]), max_size=2))
    def test_malformed_invocations_exit_2(self, command, bad, extra, capsys):
        assert run(command, *extra, bad) == 2
        capsys.readouterr()


class TestSynth:
    def test_byte_identical(self, tmp_path):
        for name in ("a.tsv", "b.tsv"):
            assert run("synth", "--profile", "worldcup-days", "--seed", 1, "--out", tmp_path / name) == 0
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()

    def test_seed_matters(self, tmp_path):
        run("synth", "--profile", "worldcup-days", "--seed", 1, "--out", tmp_path / "a.tsv")
        run("synth", "--profile", "worldcup-days", "--seed", 2, "--out", tmp_path / "b.tsv")
        assert (tmp_path / "a.tsv").read_bytes() != (tmp_path / "b.tsv").read_bytes()

    def test_profile_needs_out(self):
        assert run("synth", "--profile", "day6-seconds") == 2


class TestPipeline:
    def test_ingest_to_plot(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        traces = tmp_path / "traces"
        traces.mkdir()
        start = 898_000_000
        for day in range(1, 41):
            n = 200 + 20 * day + int(rng.integers(0, 100))
            ts = start + 86400 * (day - 1) + rng.integers(0, 60, n)
            write_trace(traces / f"wc_day{day}_1.gz", ts, compress=True, rng=rng)
        write_trace(traces / "wc_day38_2.gz", np.full(7, start), compress=True)
        counts = tmp_path / "counts"
        assert run("ingest", "--in", traces, "--out", counts, "--jobs", 2) == 0
        assert (counts / "manifest.tsv").is_file()
        assert (counts / "wc_day38_2.count.txt").is_file()

        cal = tmp_path / "cal.tsv"
        cal.write_text("DAY\tMATCHES\n30\t2\n31\t1\n")
        days = tmp_path / "days.tsv"
        assert run("aggregate-days", "--counts", counts, "--calendar", cal, "--total-days", 40,
                   "--out", days) == 0
        lines = days.read_text().splitlines()
        assert lines[0] == "DAY\tREQUESTS\tMATCHES\tISMATCH"
        assert len(lines) == 41
        assert lines[30].split("\t")[2:] == ["2", "1"]

        model = tmp_path / "m.json"
        assert run("train", "--data", days, "--out", model, "--seed", 3, "--attempts", 2,
                   "--exogenous", "MATCHES", "--loop", "closed") == 0
        assert (tmp_path / "m.attempts.csv").read_text().count("\n") == 3
        net = load_model(model)
        assert net.x_delays == (1, 2) and net.loop_mode == "closed"

        pred = tmp_path / "p.tsv"
        assert run("simulate", "--model", model, "--data", days, "--out", pred) == 0
        p = read_prediction(pred)
        assert len(p) == 38 and p.indices[0] == 3
        assert set(p.labels) == {"train", "val", "test"}

        assert run("plot-data", "--prediction", pred, "--out", tmp_path / "plot") == 0
        assert (tmp_path / "plot.tsv").read_bytes() == pred.read_bytes()
        assert "plot.tsv" in (tmp_path / "plot.gp").read_text()
        capsys.readouterr()

    def test_count(self, tmp_path, capsys):
        p = write_trace(tmp_path / "t", [1, 1, 2])
        assert run("count", p) == 0
        assert capsys.readouterr().out.strip().endswith("\t3")

    def test_experiment_single_case_with_source(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        assert run("experiment", "--case", "S12b", "--synthetic", "--out", out, "--seed", 4,
                   "--plots-dir", tmp_path / "plots") == 0
        lines = out.read_text().splitlines()
        assert [l.split(",")[0] for l in lines[1:]] == ["S12a", "S12b"]
        assert (tmp_path / "r-models" / "S12b.json").is_file()
        assert (tmp_path / "plots" / "S12a.gp").is_file()
        assert capsys.readouterr().out == out.read_text()

    def test_export_catalog_round_trip(self, tmp_path):
        cat = tmp_path / "cat.json"
        assert run("experiment", "--suite", "builtin", "--export-catalog", cat) == 0
        out = tmp_path / "r.csv"
        assert run("experiment", "--case", "D6", "--catalog", cat, "--synthetic", "--out", out) == 0

    def test_data_dir_from_environment(self, tmp_path, monkeypatch, capsys):
        data = tmp_path / "data"
        assert run("synth", "--catalog-dir", data, "--seed", 2) == 0
        monkeypatch.setenv("LOADCAST_DATA_DIR", str(data))
        assert run("experiment", "--case", "D1", "--out", tmp_path / "r.csv") == 0
        capsys.readouterr()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "loadcast.cli", "synth", "--profile", "worldcup-days",
                           "--out", str(tmp_path / "s.tsv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout == ""
    bad = subprocess.run([sys.executable, "-m", "loadcast.cli", "nope"], capture_output=True, text=True)
    assert bad.returncode == 2 and bad.stdout == ""
