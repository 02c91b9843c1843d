"""Config parsing, checkpoint round-trips, and exact CSV/grid files."""

import numpy as np
import pytest

from blockterm import FactorizedShape, init_btd
from blockterm.cells import BTLinear, gru_step, init_bt_gru, init_bt_lstm, lstm_step
from blockterm.experiments import RecoveryConfig, SweepConfig
from blockterm.io import (
    CheckpointError,
    ConfigError,
    load_checkpoint,
    parse_config,
    read_csv,
    read_grid,
    save_checkpoint,
    write_csv,
    write_grid,
)


def write(tmp_path, text, name="config.txt"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_direct_mapping(self, tmp_path):
        path = write(tmp_path, "d=2\nR=4\nN=1\ndim=64\n")
        cfg = parse_config(path, RecoveryConfig)
        assert (cfg.d, cfg.R, cfg.N, cfg.dim) == (2, 4, 1, 64)

    def test_validation_error(self, tmp_path):
        path = write(tmp_path, "R=0\n")
        with pytest.raises(ConfigError, match="R must be >= 1"):
            parse_config(path, RecoveryConfig)

    def test_empty_file_gives_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, ""), RecoveryConfig)
        assert cfg == RecoveryConfig()

    def test_unknown_key_with_line_number(self, tmp_path):
        path = write(tmp_path, "dim=64\nbogus=3\n")
        with pytest.raises(ConfigError, match="line 2: unknown key 'bogus'"):
            parse_config(path, RecoveryConfig)

    def test_parse_error_with_line_number(self, tmp_path):
        path = write(tmp_path, "dim=sixty-four\n")
        with pytest.raises(ConfigError, match="line 1"):
            parse_config(path, RecoveryConfig)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.txt", RecoveryConfig)

    def test_comments_and_blanks(self, tmp_path):
        path = write(tmp_path, "# a comment\n\ndim=32  # trailing\n")
        assert parse_config(path, RecoveryConfig).dim == 32

    def test_tuple_values(self, tmp_path):
        path = write(tmp_path, "d_values=2,3,4\nranks=1, 2\n")
        cfg = parse_config(path, SweepConfig)
        assert cfg.d_values == (2, 3, 4)
        assert cfg.ranks == (1, 2)

    def test_duplicate_key(self, tmp_path):
        path = write(tmp_path, "dim=64\ndim=32\n")
        with pytest.raises(ConfigError, match="duplicate key"):
            parse_config(path, RecoveryConfig)

    def test_missing_equals(self, tmp_path):
        with pytest.raises(ConfigError, match="key=value"):
            parse_config(write(tmp_path, "dim 64\n"), RecoveryConfig)

    def test_float_and_string_fields(self, tmp_path):
        path = write(tmp_path, "noise_std=0.25\ntruth=identity\n")
        cfg = parse_config(path, RecoveryConfig)
        assert cfg.noise_std == 0.25 and cfg.truth == "identity"


class TestCheckpoints:
    def test_bt_linear_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        layer = BTLinear(
            init_btd(FactorizedShape((3, 4), (2, 2)), 2, 2, seed=1), rng.normal(size=4)
        )
        path = tmp_path / "layer.btck"
        save_checkpoint(layer, path)
        loaded = load_checkpoint(path)
        for (ka, a), (kb, b) in zip(
            layer.parameters().items(), loaded.parameters().items()
        ):
            assert ka == kb
            np.testing.assert_array_equal(a, b)

    def test_lstm_round_trip_and_forward(self, tmp_path):
        rng = np.random.default_rng(1)
        cell = init_bt_lstm((2, 4), (4, 4), 4, 2, 2, seed=2)
        path = tmp_path / "cell.btck"
        save_checkpoint(cell, path)
        loaded = load_checkpoint(path)
        x = rng.normal(size=8)
        a = lstm_step(cell, x)
        b = lstm_step(loaded, x)
        np.testing.assert_array_equal(a.h, b.h)
        np.testing.assert_array_equal(a.c, b.c)

    def test_gru_round_trip(self, tmp_path):
        cell = init_bt_gru((2, 4), (4, 3), 4, 1, 2, seed=3)
        path = tmp_path / "gru.btck"
        save_checkpoint(cell, path)
        loaded = load_checkpoint(path)
        x = np.linspace(-1, 1, 8)
        np.testing.assert_array_equal(gru_step(cell, x).h, gru_step(loaded, x).h)

    def test_dense_linear_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        layer = BTLinear(rng.normal(size=(3, 5)), rng.normal(size=3))
        save_checkpoint(layer, tmp_path / "d.btck")
        loaded = load_checkpoint(tmp_path / "d.btck")
        np.testing.assert_array_equal(loaded.weight, layer.weight)

    def test_corrupted_magic(self, tmp_path):
        path = tmp_path / "bad.btck"
        layer = BTLinear(np.zeros((2, 2)), np.zeros(2))
        save_checkpoint(layer, path)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="version mismatch"):
            load_checkpoint(path)

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "v9.btck"
        layer = BTLinear(np.zeros((2, 2)), np.zeros(2))
        save_checkpoint(layer, path)
        data = bytearray(path.read_bytes())
        data[4] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="version mismatch"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.btck"
        layer = BTLinear(np.ones((4, 4)), np.zeros(4))
        save_checkpoint(layer, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_unsupported_object(self, tmp_path):
        with pytest.raises(TypeError):
            save_checkpoint(object(), tmp_path / "x.btck")


class TestCsv:
    def test_empty_rows_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_csv([], path, ["a", "b"])
        assert path.read_text() == "a,b\n"

    def test_float_round_trip_form(self, tmp_path):
        path = tmp_path / "f.csv"
        write_csv([(0.1,)], path, ["x"])
        assert path.read_text().splitlines()[1] == "0.1"
        assert float("0.1") == 0.1

    def test_read_back_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        values = rng.normal(size=20)
        path = tmp_path / "vals.csv"
        write_csv([(i, v) for i, v in enumerate(values)], path, ["i", "v"])
        _, rows = read_csv(path)
        for i, row in enumerate(rows):
            assert float(row[1]) == values[i]

    def test_heterogeneous_rows_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="fields"):
            write_csv([(1, 2), (3,)], tmp_path / "bad.csv", ["a", "b"])

    def test_int_and_str_formatting(self, tmp_path):
        path = tmp_path / "mix.csv"
        write_csv([(np.int64(7), "8x8", np.float64(0.5))], path, ["n", "dims", "x"])
        assert path.read_text().splitlines()[1] == "7,8x8,0.5"


class TestGrid:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        m = rng.normal(size=(5, 7))
        path = tmp_path / "w.txt"
        write_grid(m, path)
        np.testing.assert_array_equal(read_grid(path), m)

    def test_vector_becomes_row(self, tmp_path):
        write_grid(np.array([1.0, 2.0]), tmp_path / "v.txt")
        assert read_grid(tmp_path / "v.txt").shape == (1, 2)
