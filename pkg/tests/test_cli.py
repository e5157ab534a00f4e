"""CLI contract: commands, flags, exit codes, output conventions."""

from __future__ import annotations

import subprocess
import sys

from netmbt.cli import main
from netmbt.models import MODEL_REGISTRY


def run_cli(*argv, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "netmbt", *argv],
        capture_output=True, text=True, cwd=cwd,
    )


class TestRunCommand:
    def test_passing_suite_exits_zero(self, tmp_path):
        out = tmp_path / "t.trace"
        code = main(["run", "--model", "server-main", "--backend", "sim",
                     "--seed", "42", "--tests", "50", "--trace-out", str(out)])
        assert code == 0
        assert out.exists()

    def test_failing_suite_exits_one_and_writes_traces(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = main(["run", "--model", "minimalist", "--backend", "sim",
                     "--seed", "1", "--tests", "200", "--fault", "duplicate-bytes"])
        assert code == 1
        captured = capsys.readouterr()
        assert (tmp_path / "netmbt-failures.trace").exists()
        assert "failing traces written" in captured.out

    def test_seed_chosen_and_printed_when_omitted(self, capsys):
        code = main(["run", "--model", "minimalist", "--tests", "2"])
        assert code == 0
        first_line = capsys.readouterr().out.splitlines()[0]
        assert first_line.startswith("seed ")
        int(first_line.split()[1])  # parses as an integer

    def test_non_root_model_is_config_error(self, capsys):
        assert main(["run", "--model", "worker", "--tests", "1"]) == 2
        assert "cannot run standalone" in capsys.readouterr().err

    def test_unknown_model_is_config_error(self):
        assert main(["run", "--model", "nonesuch", "--tests", "1"]) == 2

    def test_fault_with_real_backend_is_config_error(self, capsys):
        code = main(["run", "--model", "minimalist", "--backend", "real",
                     "--fault", "drop-bytes", "--tests", "1"])
        assert code == 2
        assert "sim backend" in capsys.readouterr().err

    def test_unknown_flag_exits_two(self):
        proc = run_cli("run", "--model", "minimalist", "--frobnicate")
        assert proc.returncode == 2
        assert "--frobnicate" in proc.stderr

    def test_bad_port_range_exits_two(self):
        proc = run_cli("run", "--model", "minimalist", "--port-range", "bananas")
        assert proc.returncode == 2

    def test_report_includes_coverage_block(self, capsys):
        main(["run", "--model", "server-main", "--seed", "3", "--tests", "30"])
        out = capsys.readouterr().out
        assert any(line.startswith("coverage server-main states ")
                   for line in out.splitlines())

    def test_zero_latency_flag(self):
        code = main(["run", "--model", "server-main", "--seed", "3",
                     "--tests", "30", "--latency", "zero"])
        assert code == 0

    def test_port_exhaustion_is_backend_error_not_test_failure(self, capsys):
        # a 1-port range with a 2-test cooldown cannot serve a second test
        code = main(["run", "--model", "minimalist", "--seed", "3",
                     "--tests", "5", "--port-range", "21000:21000"])
        assert code == 2
        assert "port" in capsys.readouterr().err


class TestReplayCommand:
    def test_replay_matches_and_exits_zero(self, tmp_path, capsys):
        trace = tmp_path / "t.trace"
        main(["run", "--model", "server-main", "--seed", "5", "--tests", "5",
              "--trace-out", str(trace)])
        capsys.readouterr()
        assert main(["replay", "--replay", str(trace)]) == 0
        out = capsys.readouterr().out
        assert out.count("MATCH verdict=PASS") == 5

    def test_replay_of_failures_exits_one_same_step(self, tmp_path, capsys):
        from netmbt.explorer import parse_traces

        trace = tmp_path / "t.trace"
        main(["run", "--model", "server-main", "--seed", "9", "--tests", "100",
              "--fault", "duplicate-bytes", "--trace-out", str(trace)])
        capsys.readouterr()
        recorded_steps = {
            str(t.test_index): str(t.failing_step_index)
            for t in parse_traces(trace.read_text()) if t.verdict == "FAIL"
        }
        assert recorded_steps
        assert main(["replay", "--replay", str(trace), "--fault", "duplicate-bytes"]) == 1
        replay_out = capsys.readouterr().out
        replayed = 0
        for line in replay_out.splitlines():
            if "verdict=FAIL" in line:
                test_id = line.split()[2].rstrip(":")
                step = line.rsplit("step ", 1)[1]
                assert recorded_steps.get(test_id) == step
                replayed += 1
        assert replayed == len(recorded_steps)

    def test_replay_with_wrong_flags_diverges_exit_two(self, tmp_path, capsys):
        trace = tmp_path / "t.trace"
        main(["run", "--model", "server-main", "--seed", "9", "--tests", "50",
              "--fault", "duplicate-bytes", "--trace-out", str(trace)])
        capsys.readouterr()
        assert main(["replay", "--replay", str(trace)]) == 2  # fault flag omitted
        assert "DIVERGED" in capsys.readouterr().out

    def test_missing_file_exits_two(self, capsys):
        assert main(["replay", "--replay", "/nonexistent/file.trace"]) == 2


class TestOtherCommands:
    def test_list_models_names(self, capsys):
        assert main(["list-models"]) == 0
        names = capsys.readouterr().out.split()
        assert names == list(MODEL_REGISTRY)

    def test_export_dot_all_models(self, capsys):
        for name in MODEL_REGISTRY:
            assert main(["export-dot", "--model", name]) == 0
            out = capsys.readouterr().out
            assert out.startswith(f'digraph "{name}"')

    def test_export_dot_unknown_model(self):
        assert main(["export-dot", "--model", "nope"]) == 2

    def test_command_required(self):
        proc = run_cli()
        assert proc.returncode == 2
