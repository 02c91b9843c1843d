"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
complete.  Tolerances and runtime budgets are pinned in the asserts.
"""

import contextlib
import time

import numpy as np
import pytest

from blockterm import (
    BTDecomposition,
    FactorizedShape,
    FlopCounter,
    flops_forward,
    flops_naive,
    init_btd,
    param_count,
)
from blockterm.cells import init_bt_lstm
from blockterm.cli import main as cli_main
from blockterm.experiments import (
    BenchConfig,
    RecoveryConfig,
    SequenceTaskConfig,
    SweepConfig,
    run_benchmark,
    run_recovery,
    run_sequence_task,
    run_sweep,
)
from blockterm.training import SequenceClassifier, grad_check


@contextlib.contextmanager
def criterion(number, label):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} FAIL - {label}")
        raise
    print(f"ACCEPTANCE {number} PASS - {label} ({time.monotonic() - start:.1f}s)")


def rel_err(got, want):
    return np.linalg.norm(np.ravel(got) - np.ravel(want)) / max(
        np.linalg.norm(np.ravel(want)), 1e-300
    )


def test_criterion_1_dense_equivalence():
    with criterion(1, "dense equivalence over 100 random configs, rel err < 1e-10"):
        start = time.monotonic()
        rng = np.random.default_rng(1001)
        worst = 0.0
        for _ in range(100):
            d = int(rng.integers(1, 5))
            idims = tuple(int(s) for s in rng.integers(1, 6, size=d))
            jdims = tuple(int(s) for s in rng.integers(1, 6, size=d))
            shape = FactorizedShape(idims, jdims)
            n = int(rng.integers(1, 4))
            r = int(rng.integers(1, 4))
            btd = init_btd(shape, n, r, seed=rng)
            x = rng.normal(size=shape.input_size)
            worst = max(worst, rel_err(btd.forward(x), btd.reconstruct_dense() @ x))
        elapsed = time.monotonic() - start
        assert worst < 1e-10, f"max relative error {worst}"
        assert elapsed < 10.0, f"runtime {elapsed:.1f}s exceeds 10s budget"


def _fd_layer_max_rel(btd, x, dy, h=1e-5):
    """Max relative error of analytic vs central-difference layer gradients."""
    analytic = btd.backward(x, dy)

    def loss():
        return float(dy @ btd.forward(x))

    worst = 0.0

    def fd_against(array, grad):
        nonlocal worst
        for idx in np.ndindex(array.shape):
            orig = array[idx]
            array[idx] = orig + h
            hi = loss()
            array[idx] = orig - h
            lo = loss()
            array[idx] = orig
            numeric = (hi - lo) / (2 * h)
            exact = float(grad[idx])
            denom = max(abs(exact), abs(numeric), 1e-8)
            worst = max(worst, abs(exact - numeric) / denom)

    for n in range(btd.n_blocks):
        fd_against(btd.cores[n], analytic.d_cores[n])
        for k in range(btd.shape.order):
            fd_against(btd.factors[n][k], analytic.d_factors[n][k])
    fd_against(x, analytic.d_input)
    return worst


def test_criterion_2_gradient_suite():
    with criterion(2, "layer gradients < 1e-6 and BPTT gradients < 1e-5 vs "
                      "finite differences"):
        start = time.monotonic()
        rng = np.random.default_rng(1002)
        layer_worst = 0.0
        for idims, jdims, n, r in (
            ((3, 2), (2, 2), 2, 2),
            ((2, 2, 2), (2, 2, 2), 2, 2),
            ((4,), (3,), 3, 2),
        ):
            btd = init_btd(FactorizedShape(idims, jdims), n, r, seed=rng)
            x = rng.normal(size=btd.shape.input_size)
            dy = rng.normal(size=btd.shape.output_size)
            layer_worst = max(layer_worst, _fd_layer_max_rel(btd, x, dy))
        assert layer_worst < 1e-6, f"layer gradient error {layer_worst}"

        cell = init_bt_lstm((4, 4), (4, 4), 4, 2, 2, seed=7)
        model = SequenceClassifier.init(cell, 3, seed=8)
        xs = rng.normal(size=(2, 3, 16))
        ys = rng.integers(0, 3, size=2)
        bptt_err = grad_check(model, (xs, ys), loss="xent", h=1e-5)
        assert bptt_err < 1e-5, f"BPTT gradient error {bptt_err}"

        elapsed = time.monotonic() - start
        assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeds 60s budget"


def test_criterion_3_parameter_counts(capsys, tmp_path):
    with criterion(3, "params table: 129/528/258 at dim 64, dense 1048576, "
                      "U-shaped P(d) for R >= 2"):
        cfg = tmp_path / "p64.txt"
        cfg.write_text(
            "input_size=64\noutput_size=64\nd_values=2\nranks=1,4\nn_values=1,2\n"
        )
        assert cli_main(["params", "--config", str(cfg)]) == 0
        table = capsys.readouterr().out
        counts = {
            (row.split()[2], row.split()[3]): int(row.split()[6])
            for row in table.splitlines()
            if row.startswith("block_term")
        }
        assert counts[("1", "1")] == 129
        assert counts[("4", "1")] == 528
        assert counts[("1", "2")] == 258

        assert cli_main(["params"]) == 0
        table = capsys.readouterr().out
        dense = next(r for r in table.splitlines() if r.startswith("dense"))
        assert int(dense.split()[-1]) == 1048576

        rows, _ = run_sweep(SweepConfig())
        for rank in (2, 4, 8):
            curve = sorted(
                (row[1], row[6])
                for row in rows
                if row[0] == "block_term" and row[2] == rank
            )
            counts_by_d = [c for _, c in curve]
            low = min(counts_by_d)
            assert counts_by_d[0] > low, f"R={rank}: no initial descent"
            assert counts_by_d[-1] > low, f"R={rank}: no eventual rise"


def test_criterion_4_degenerations():
    with criterion(4, "R=1 equals CP, N=1 equals Tucker, d=1 N=1 equals a "
                      "scaled matvec, all to 1e-12"):
        rng = np.random.default_rng(1004)

        # R=1: CP construction via Kronecker products of transposed slices.
        shape = FactorizedShape((3, 2, 2), (2, 2, 3))
        btd = init_btd(shape, 3, 1, seed=11)
        want = np.zeros((shape.output_size, shape.input_size))
        for n in range(3):
            block = np.array([[float(btd.cores[n].reshape(()))]])
            for k in range(shape.order):
                block = np.kron(block, btd.factors[n][k][:, :, 0].T)
            want += block
        assert rel_err(btd.reconstruct_dense(), want) < 1e-12

        # N=1: Tucker construction by direct element-wise loops.
        shape = FactorizedShape((3, 2), (2, 3))
        btd = init_btd(shape, 1, 2, seed=12)
        assert len(btd.cores) == 1
        assert btd.param_count == param_count(shape, 1, 2)
        want = np.zeros((shape.output_size, shape.input_size))
        for j in range(shape.output_size):
            jd = np.unravel_index(j, shape.output_dims)
            for i in range(shape.input_size):
                idx = np.unravel_index(i, shape.input_dims)
                total = 0.0
                for r1 in range(2):
                    for r2 in range(2):
                        total += (
                            btd.cores[0][r1, r2]
                            * btd.factors[0][0][idx[0], jd[0], r1]
                            * btd.factors[0][1][idx[1], jd[1], r2]
                        )
                want[j, i] = total
        assert rel_err(btd.reconstruct_dense(), want) < 1e-12

        # d=1, N=1: forward equals a plain scaled matrix-vector product.
        a = rng.normal(size=(5, 4, 2))
        g = rng.normal(size=2)
        btd = BTDecomposition(FactorizedShape((5,), (4,)), [g], [[a]])
        x = rng.normal(size=5)
        want = sum(g[r] * a[:, :, r].T @ x for r in range(2))
        assert rel_err(btd.forward(x), want) < 1e-12


def test_criterion_5_complexity():
    with criterion(5, "instrumented multiply-adds equal flops_forward on 20 "
                      "configs; reordered <= naive for R <= min(J_k)"):
        rng = np.random.default_rng(1005)
        grid = []
        for d in (1, 2, 3, 4):
            for r, n in ((1, 1), (1, 2), (2, 1), (2, 2), (2, 3)):
                idims = tuple(int(s) for s in rng.integers(2, 6, size=d))
                jdims = tuple(int(min(i, s)) for i, s in
                              zip(idims, rng.integers(2, 6, size=d)))
                grid.append((FactorizedShape(idims, jdims), n, r))
        assert len(grid) == 20
        for shape, n, r in grid:
            assert r <= min(shape.output_dims)
            btd = init_btd(shape, n, r, seed=rng)
            x = rng.normal(size=shape.input_size)
            with FlopCounter() as fc:
                btd.forward(x)
            assert fc.multiply_adds == flops_forward(shape, n, r), (
                f"instrumented {fc.multiply_adds} != analytic "
                f"{flops_forward(shape, n, r)} at {shape}, N={n}, R={r}"
            )
            with FlopCounter() as fc:
                btd.forward_naive(x)
            assert fc.multiply_adds == flops_naive(shape, n, r)
            assert flops_forward(shape, n, r) <= flops_naive(shape, n, r)


def test_criterion_6_recovery_trends():
    with criterion(6, "recovery: median MSE non-increasing in R, N=2 <= N=1, "
                      "identity run rel Frobenius < 0.05"):
        start = time.monotonic()
        seeds = range(5)
        finals = {}
        for r in (1, 2, 4):
            runs = [run_recovery(RecoveryConfig(d=2, R=r, N=1, seed=s)) for s in seeds]
            for rep in runs:
                # Loss decrease sanity on every run in the sweep.
                assert rep.losses[min(50, len(rep.losses) - 1)] < rep.losses[0]
                assert rep.param_count == param_count(
                    FactorizedShape(rep.input_dims, rep.output_dims),
                    1, r,
                )
            finals[("R", r)] = float(np.median([rep.final_mse for rep in runs]))
        assert finals[("R", 1)] >= finals[("R", 2)] >= finals[("R", 4)], finals

        n2 = [run_recovery(RecoveryConfig(d=2, R=1, N=2, seed=s)) for s in seeds]
        for rep in n2:
            assert rep.losses[min(50, len(rep.losses) - 1)] < rep.losses[0]
        n2_median = float(np.median([rep.final_mse for rep in n2]))
        assert n2_median <= finals[("R", 1)], (n2_median, finals[("R", 1)])

        identity = run_recovery(
            RecoveryConfig(truth="identity", noise_std=0.0, d=2, R=8, N=1,
                           epochs=300, seed=0)
        )
        assert identity.rel_frobenius < 0.05, identity.rel_frobenius

        elapsed = time.monotonic() - start
        assert elapsed < 300.0, f"runtime {elapsed:.1f}s exceeds 5min budget"


def test_criterion_7_sequence_task():
    with criterion(7, "block-term LSTM at R=4: median accuracy >= 0.9 within "
                      "100 epochs using < 5% of the dense input-to-hidden "
                      "parameters"):
        start = time.monotonic()
        reports = [
            run_sequence_task(SequenceTaskConfig(cell="bt_lstm", R=4, d=2, N=1,
                                                 epochs=100, seed=s))
            for s in range(3)
        ]
        median_acc = float(np.median([r.final_accuracy for r in reports]))
        assert median_acc >= 0.9, f"median accuracy {median_acc}"
        for rep in reports:
            ratio = rep.input_map_params / rep.dense_input_map_params
            assert ratio < 0.05, f"compression ratio {ratio}"
        elapsed = time.monotonic() - start
        assert elapsed < 600.0, f"runtime {elapsed:.1f}s exceeds 10min budget"


def test_criterion_8_reproducibility(tmp_path):
    with criterion(8, "identical config + seed give bitwise-identical CSVs"):
        rec_cfg = RecoveryConfig(epochs=5, sample_count=32, seed=9)
        seq_cfg = SequenceTaskConfig(epochs=3, input_dim=64, train_size=16,
                                     test_size=8, seed=9)
        for name, runner, cfg, files in (
            ("recover", run_recovery, rec_cfg,
             ["recovery_metrics.csv", "learned_w.txt", "truth_w.txt"]),
            ("sweep", run_sweep, SweepConfig(), ["sweep.csv", "sweep_notes.txt"]),
            ("bench", run_benchmark, BenchConfig(repetitions=1), ["bench.csv"]),
            ("train", run_sequence_task, seq_cfg, ["train_metrics.csv"]),
        ):
            out_a = tmp_path / f"{name}_a"
            out_b = tmp_path / f"{name}_b"
            runner(cfg, out_dir=out_a)
            runner(cfg, out_dir=out_b)
            for fname in files:
                bytes_a = (out_a / fname).read_bytes()
                bytes_b = (out_b / fname).read_bytes()
                assert bytes_a == bytes_b, f"{name}/{fname} differs between runs"
