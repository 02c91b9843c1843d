"""CLI subcommands, exit codes, and output surfaces."""

import numpy as np
import pytest

from blockterm.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestParams:
    def test_prints_dim64_table(self, capsys, tmp_path):
        cfg = tmp_path / "p.txt"
        cfg.write_text("input_size=64\noutput_size=64\nd_values=2\nranks=1,4\nn_values=1,2\n")
        code, out, _ = run_cli(capsys, "params", "--config", str(cfg))
        assert code == 0
        lines = out.splitlines()
        counts = {
            (row.split()[2], row.split()[3]): int(row.split()[6])
            for row in lines
            if row.startswith("block_term")
        }
        assert counts[("1", "1")] == 129
        assert counts[("4", "1")] == 528
        assert counts[("1", "2")] == 258

    def test_dense_baseline(self, capsys):
        code, out, _ = run_cli(capsys, "params")
        dense = next(row for row in out.splitlines() if row.startswith("dense"))
        assert code == 0 and dense.split()[-1] == "1048576"


class TestExitCodes:
    def test_config_error_is_2(self, capsys, tmp_path):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("R=0\n")
        code, _, err = run_cli(capsys, "recover", "--config", str(cfg))
        assert code == 2
        assert "config error" in err

    def test_unknown_key_is_2(self, capsys, tmp_path):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("zzz=1\n")
        code, _, err = run_cli(capsys, "sweep", "--config", str(cfg))
        assert code == 2 and "unknown key" in err

    def test_missing_config_file_is_2(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "sweep", "--config", str(tmp_path / "none.txt"))
        assert code == 2 and "not found" in err

    def test_seed_override_rejected_for_seedless_command(self, capsys):
        # params/sweep have no randomness; a seed override is a config error
        # rather than a silent no-op.
        code, _, err = run_cli(capsys, "params", "--seed", "1")
        assert code == 2 and "takes no seed" in err

    def test_runtime_error_is_1(self, capsys, tmp_path):
        # A prime dim cannot be split into two modes, which only surfaces
        # once the run starts.
        cfg = tmp_path / "c.txt"
        cfg.write_text("dim=17\nd=2\nepochs=1\nsample_count=4\n")
        code, _, err = run_cli(capsys, "recover", "--config", str(cfg))
        assert code == 1 and "error" in err


class TestRecover:
    def test_writes_outputs_and_reports(self, capsys, tmp_path):
        cfg = tmp_path / "r.txt"
        cfg.write_text("epochs=2\nsample_count=8\n")
        code, out, _ = run_cli(
            capsys, "recover", "--config", str(cfg), "--out", str(tmp_path / "o")
        )
        assert code == 0
        assert "params=129" in out
        assert (tmp_path / "o" / "recovery_metrics.csv").exists()

    def test_seed_override_changes_result(self, capsys, tmp_path):
        cfg = tmp_path / "r.txt"
        cfg.write_text("epochs=2\nsample_count=8\n")
        _, out_a, _ = run_cli(capsys, "recover", "--config", str(cfg), "--seed", "1")
        _, out_b, _ = run_cli(capsys, "recover", "--config", str(cfg), "--seed", "2")
        assert out_a != out_b


class TestTrainAndBench:
    def test_train_reports_compression(self, capsys, tmp_path):
        cfg = tmp_path / "t.txt"
        cfg.write_text("epochs=2\ninput_dim=64\ntrain_size=8\ntest_size=8\n")
        code, out, _ = run_cli(capsys, "train", "--config", str(cfg))
        assert code == 0
        assert "input_map_params=" in out and "test_accuracy=" in out

    def test_bench_table(self, capsys, tmp_path):
        cfg = tmp_path / "b.txt"
        cfg.write_text("d_values=1,2\nranks=1\nn_values=1\nrepetitions=1\n")
        code, out, _ = run_cli(capsys, "bench", "--config", str(cfg))
        assert code == 0
        assert "flops_reordered" in out

    def test_sweep_writes_csv(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, "sweep", "--out", str(tmp_path / "s"))
        assert code == 0
        assert (tmp_path / "s" / "sweep.csv").exists()


class TestGradcheck:
    def test_pass_exit_zero(self, capsys):
        code, out, _ = run_cli(capsys, "gradcheck")
        assert code == 0 and "gradcheck PASS" in out

    def test_fail_exit_one(self, capsys, tmp_path):
        # An absurdly tight threshold turns a healthy check into a failure.
        cfg = tmp_path / "g.txt"
        cfg.write_text("threshold=1e-300\n")
        code, out, _ = run_cli(capsys, "gradcheck", "--config", str(cfg))
        assert code == 1 and "gradcheck FAIL" in out
