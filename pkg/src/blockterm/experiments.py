"""Reproducible desk-scale studies.

Every run is driven by a flat config dataclass and a single integer seed;
all randomness is derived from that seed through named ``SeedSequence``
streams, so identical configs give bitwise-identical result CSVs.  Wall
clock measurements are written to separate ``*_timing.csv`` files to keep
the result files deterministic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cells import (
    BTLinear,
    init_bt_gru,
    init_bt_lstm,
    init_dense_gru,
    init_dense_lstm,
)
from .io import write_csv, write_grid
from .layer import (
    FactorizedShape,
    flops_forward,
    flops_naive,
    init_btd,
    param_count,
    validate_ranks,
)
from .training import (
    BTRegressor,
    SequenceClassifier,
    TrainingConfig,
    adam_init,
    adam_step,
    apply_update,
    clip_gradients,
)

__all__ = [
    "FactorizationError",
    "balanced_factorization",
    "RecoveryConfig",
    "RecoveryReport",
    "run_recovery",
    "SweepConfig",
    "run_sweep",
    "BenchConfig",
    "run_benchmark",
    "SequenceTaskConfig",
    "SequenceReport",
    "make_template_dataset",
    "run_sequence_task",
    "GradcheckConfig",
    "run_gradcheck",
]


class FactorizationError(ValueError):
    """A size cannot be split into the requested number of modes >= 2."""


def _prime_factors(n: int) -> list[int]:
    factors = []
    p = 2
    while p * p <= n:
        while n % p == 0:
            factors.append(p)
            n //= p
        p += 1
    if n > 1:
        factors.append(n)
    return factors


def balanced_factorization(n: int, d: int) -> tuple[int, ...]:
    """Split ``n`` into ``d`` factors >= 2, as close to n^(1/d) as the prime
    structure allows.

    Primes are assigned largest-first to the currently smallest bucket and
    the result is sorted descending; e.g. 64 -> (8, 8) for d=2 and
    4096 -> (8, 8, 8, 8) for d=4.  Raises :class:`FactorizationError` when
    ``n`` has fewer than ``d`` prime factors.
    """
    if d < 1:
        raise FactorizationError(f"mode count must be >= 1, got {d}")
    primes = _prime_factors(n)
    if len(primes) < d:
        raise FactorizationError(
            f"{n} cannot be split into {d} factors >= 2 "
            f"(it has only {len(primes)} prime factors)"
        )
    buckets = [1] * d
    for p in sorted(primes, reverse=True):
        buckets[buckets.index(min(buckets))] *= p
    return tuple(sorted(buckets, reverse=True))


def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


# -- synthetic matrix recovery -------------------------------------------


@dataclass
class RecoveryConfig:
    """Learn a dense map y = W' x with a block-term layer and measure how
    close the reconstruction gets."""

    dim: int = 64
    d: int = 2
    R: int = 1
    N: int = 1
    noise_std: float = 0.01
    sample_count: int = 256
    epochs: int = 150
    seed: int = 0
    learning_rate: float = 0.02
    batch_size: int = 32
    truth: str = "gaussian"
    scalar_width: str = "float64"

    def validate(self) -> None:
        from .io import ConfigError

        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.R < 1:
            raise ConfigError("R must be >= 1")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if min(self.sample_count, self.epochs, self.batch_size) < 1:
            raise ConfigError("sample_count, epochs, batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.truth not in ("gaussian", "identity"):
            raise ConfigError(f"unknown truth kind '{self.truth}'")
        if self.scalar_width not in ("float64", "float32"):
            raise ConfigError("scalar_width must be 'float64' or 'float32'")


@dataclass
class RecoveryReport:
    param_count: int
    final_mse: float
    rel_frobenius: float
    losses: list[float]
    rel_errors: list[float]
    learned: np.ndarray
    truth: np.ndarray
    input_dims: tuple[int, ...]
    output_dims: tuple[int, ...]
    warnings: list[str]


def run_recovery(cfg: RecoveryConfig, out_dir: str | Path | None = None) -> RecoveryReport:
    """Train a block-term layer to recover a ground-truth matrix.

    Inputs are Gaussian with variance 0.5; the model sees them with a small
    additive perturbation while targets come from the clean inputs, so the
    perturbation acts as a regularizer.  Writes per-epoch metrics, a timing
    file, and learned/truth matrices as plain-text grids when ``out_dir``
    is given.
    """
    if cfg.d == 1:
        dims = (cfg.dim,)
    else:
        dims = balanced_factorization(cfg.dim, cfg.d)
    shape = FactorizedShape(dims, dims)
    warnings = validate_ranks(shape, cfg.R)
    dtype = np.float64 if cfg.scalar_width == "float64" else np.float32

    data_rng = _stream(cfg.seed, 1)
    noise_rng = _stream(cfg.seed, 2)
    model_rng = _stream(cfg.seed, 3)
    shuffle_rng = _stream(cfg.seed, 4)

    if cfg.truth == "identity":
        w_true = np.eye(cfg.dim, dtype=dtype)
    else:
        w_true = data_rng.normal(0.0, 1.0 / math.sqrt(cfg.dim), size=(cfg.dim, cfg.dim)).astype(dtype)
    xs = data_rng.normal(0.0, math.sqrt(0.5), size=(cfg.sample_count, cfg.dim)).astype(dtype)
    ys = xs @ w_true.T
    seen = xs
    if cfg.noise_std > 0:
        seen = xs + noise_rng.normal(0.0, cfg.noise_std, size=xs.shape).astype(dtype)

    layer = BTLinear(
        init_btd(shape, cfg.N, cfg.R, seed=model_rng, dtype=dtype),
        np.zeros(cfg.dim, dtype=dtype),
    )
    model = BTRegressor(layer)
    train_cfg = TrainingConfig(
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        scalar_width=cfg.scalar_width,
    )
    params = model.parameters()
    state = adam_init(params)

    losses: list[float] = []
    rel_errors: list[float] = []
    wall_ms: list[float] = []
    truth_norm = float(np.linalg.norm(w_true))
    for _ in range(cfg.epochs):
        start = time.perf_counter()
        order = shuffle_rng.permutation(cfg.sample_count)
        for lo in range(0, cfg.sample_count, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            _, grads = model.loss_and_gradients((seen[idx], ys[idx]), loss="mse")
            new_values, state = adam_step(params, grads, state, train_cfg)
            apply_update(params, new_values)
        losses.append(model.loss_value((seen, ys), loss="mse"))
        rel_errors.append(
            float(np.linalg.norm(layer.weight.reconstruct_dense() - w_true)) / truth_norm
        )
        wall_ms.append((time.perf_counter() - start) * 1e3)

    report = RecoveryReport(
        param_count=param_count(shape, cfg.N, cfg.R),
        final_mse=losses[-1],
        rel_frobenius=rel_errors[-1],
        losses=losses,
        rel_errors=rel_errors,
        learned=layer.weight.reconstruct_dense(),
        truth=np.asarray(w_true),
        input_dims=dims,
        output_dims=dims,
        warnings=warnings,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(e + 1, losses[e], rel_errors[e]) for e in range(cfg.epochs)]
        write_csv(rows, out / "recovery_metrics.csv", ["epoch", "train_loss", "eval_metric"])
        write_csv(
            [(e + 1, wall_ms[e]) for e in range(cfg.epochs)],
            out / "recovery_timing.csv",
            ["epoch", "wall_ms"],
        )
        write_grid(report.learned, out / "learned_w.txt")
        write_grid(report.truth, out / "truth_w.txt")
    return report


# -- parameter-count sweep -------------------------------------------------


@dataclass
class SweepConfig:
    """Parameter counts across core orders and ranks for one (I, J) pair."""

    input_size: int = 4096
    output_size: int = 256
    d_values: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)
    ranks: tuple[int, ...] = (1, 2, 4, 8)
    n_values: tuple[int, ...] = (1,)

    def validate(self) -> None:
        from .io import ConfigError

        if self.input_size < 1 or self.output_size < 1:
            raise ConfigError("input_size and output_size must be >= 1")
        if not self.d_values or not self.ranks or not self.n_values:
            raise ConfigError("d_values, ranks, n_values must be non-empty")
        if min(self.d_values) < 1 or min(self.ranks) < 1 or min(self.n_values) < 1:
            raise ConfigError("d_values, ranks, n_values entries must be >= 1")


def _factorize_pair(input_size, output_size, d):
    if d == 1:
        return (input_size,), (output_size,)
    return (
        balanced_factorization(input_size, d),
        balanced_factorization(output_size, d),
    )


def run_sweep(cfg: SweepConfig, out_dir: str | Path | None = None):
    """Tabulate parameter counts; returns (rows, notes).

    The first row is the dense baseline ``I*J``.  Core orders for which
    either size cannot be factorized are skipped with a note; factorization
    notes record the exact mode splits so every count is auditable.
    """
    dims_str = lambda dims: "x".join(str(v) for v in dims)
    rows = [
        (
            "dense",
            "",
            "",
            "",
            str(cfg.input_size),
            str(cfg.output_size),
            cfg.input_size * cfg.output_size,
        )
    ]
    notes: list[str] = []
    for d in cfg.d_values:
        try:
            idims, jdims = _factorize_pair(cfg.input_size, cfg.output_size, d)
        except FactorizationError as exc:
            notes.append(f"d={d}: skipped ({exc})")
            continue
        notes.append(
            f"d={d}: input {cfg.input_size} -> {dims_str(idims)}, "
            f"output {cfg.output_size} -> {dims_str(jdims)}"
        )
        shape = FactorizedShape(idims, jdims)
        for rank in cfg.ranks:
            for n in cfg.n_values:
                rows.append(
                    (
                        "block_term",
                        d,
                        rank,
                        n,
                        dims_str(idims),
                        dims_str(jdims),
                        param_count(shape, n, rank),
                    )
                )
    header = ["kind", "d", "rank", "n_blocks", "input_dims", "output_dims", "params"]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(rows, out / "sweep.csv", header)
        (out / "sweep_notes.txt").write_text("\n".join(notes) + "\n")
    return rows, notes


# -- complexity benchmark -----------------------------------------------


@dataclass
class BenchConfig:
    """Analytic multiply-add counts plus measured wall time per config."""

    input_size: int = 256
    output_size: int = 64
    d_values: tuple[int, ...] = (1, 2, 4)
    ranks: tuple[int, ...] = (1, 2, 4)
    n_values: tuple[int, ...] = (1, 2)
    repetitions: int = 5
    seed: int = 0

    def validate(self) -> None:
        from .io import ConfigError

        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.d_values or not self.ranks or not self.n_values:
            raise ConfigError("d_values, ranks, n_values must be non-empty")


def run_benchmark(cfg: BenchConfig, out_dir: str | Path | None = None):
    """FLOP accounting for reordered vs left-to-right schedules.

    Checks the reordered count never exceeds the naive one whenever the
    rank is within every output mode size; wall times go to a separate
    timing file.  Returns (rows, timing_rows, notes).
    """
    rng = _stream(cfg.seed, 5)
    rows = []
    timing_rows = []
    notes: list[str] = []
    for d in cfg.d_values:
        try:
            idims, jdims = _factorize_pair(cfg.input_size, cfg.output_size, d)
        except FactorizationError as exc:
            notes.append(f"d={d}: skipped ({exc})")
            continue
        shape = FactorizedShape(idims, jdims)
        for rank in cfg.ranks:
            for n in cfg.n_values:
                reordered = flops_forward(shape, n, rank)
                naive = flops_naive(shape, n, rank)
                if rank <= min(jdims) and reordered > naive:
                    raise RuntimeError(
                        f"reordered schedule costs more than the naive one at "
                        f"d={d}, rank={rank}, n={n} despite rank <= min(J_k)"
                    )
                btd = init_btd(shape, n, rank, seed=rng)
                x = rng.normal(size=shape.input_size)
                start = time.perf_counter_ns()
                for _ in range(cfg.repetitions):
                    btd.forward(x)
                wall = (time.perf_counter_ns() - start) / cfg.repetitions
                dims_str = "x".join(str(v) for v in idims)
                odims_str = "x".join(str(v) for v in jdims)
                rows.append((d, rank, n, dims_str, odims_str, reordered, naive))
                timing_rows.append((d, rank, n, wall))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(
            rows,
            out / "bench.csv",
            ["d", "rank", "n_blocks", "input_dims", "output_dims",
             "flops_reordered", "flops_naive"],
        )
        write_csv(
            timing_rows,
            out / "bench_timing.csv",
            ["d", "rank", "n_blocks", "wall_ns_mean"],
        )
        if notes:
            (out / "bench_notes.txt").write_text("\n".join(notes) + "\n")
    return rows, timing_rows, notes


# -- synthetic sequence classification ----------------------------------


@dataclass
class SequenceTaskConfig:
    """Noisy class-template sequences classified from the final hidden state."""

    task_name: str = "template"
    input_dim: int = 1024
    seq_len: int = 8
    class_count: int = 4
    train_size: int = 128
    test_size: int = 64
    seed: int = 0
    cell: str = "bt_lstm"
    d: int = 2
    R: int = 4
    N: int = 1
    hidden_size: int = 16
    epochs: int = 100
    learning_rate: float = 0.01
    batch_size: int = 32
    noise_std: float = 0.5
    scalar_width: str = "float64"

    def validate(self) -> None:
        from .io import ConfigError

        if self.task_name != "template":
            raise ConfigError(f"unknown task '{self.task_name}'")
        if min(self.input_dim, self.seq_len, self.class_count, self.train_size,
               self.test_size, self.hidden_size, self.epochs, self.batch_size) < 1:
            raise ConfigError("sizes must be >= 1")
        if self.cell not in ("dense_lstm", "bt_lstm", "bt_gru", "dense_gru"):
            raise ConfigError(f"unknown cell kind '{self.cell}'")
        if min(self.d, self.R, self.N) < 1:
            raise ConfigError("d, R, N must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.scalar_width not in ("float64", "float32"):
            raise ConfigError("scalar_width must be 'float64' or 'float32'")


@dataclass
class SequenceReport:
    final_accuracy: float
    input_map_params: int
    dense_input_map_params: int
    total_params: int
    losses: list[float]
    accuracies: list[float]
    warnings: list[str]


def make_template_dataset(cfg: SequenceTaskConfig):
    """Seeded dataset: one random template per class, samples are templates
    plus i.i.d. Gaussian noise.  Labels cycle through classes before
    shuffling, so sizes divisible by the class count give exactly balanced
    splits."""
    dtype = np.float64 if cfg.scalar_width == "float64" else np.float32
    template_rng = _stream(cfg.seed, 11)
    train_rng = _stream(cfg.seed, 12)
    test_rng = _stream(cfg.seed, 13)
    templates = template_rng.normal(
        size=(cfg.class_count, cfg.seq_len, cfg.input_dim)
    ).astype(dtype)

    def draw(count, rng):
        labels = np.arange(count) % cfg.class_count
        noise = rng.normal(0.0, cfg.noise_std, size=(count, cfg.seq_len, cfg.input_dim))
        data = templates[labels] + noise.astype(dtype)
        order = rng.permutation(count)
        return data[order], labels[order]

    train_x, train_y = draw(cfg.train_size, train_rng)
    test_x, test_y = draw(cfg.test_size, test_rng)
    return train_x, train_y, test_x, test_y


def _build_cell(cfg: SequenceTaskConfig, rng):
    dtype = np.float64 if cfg.scalar_width == "float64" else np.float32
    warnings: list[str] = []
    if cfg.cell in ("bt_lstm", "bt_gru"):
        gates = 4 if cfg.cell == "bt_lstm" else 3
        if cfg.d == 1:
            idims = (cfg.input_dim,)
            jdims = (gates * cfg.hidden_size,)
        else:
            idims = balanced_factorization(cfg.input_dim, cfg.d)
            jdims = balanced_factorization(gates * cfg.hidden_size, cfg.d)
        warnings = validate_ranks(FactorizedShape(idims, jdims), cfg.R)
        if cfg.cell == "bt_lstm":
            cell = init_bt_lstm(idims, jdims, cfg.hidden_size, cfg.N, cfg.R, rng, dtype)
        else:
            cell = init_bt_gru(idims, jdims, cfg.hidden_size, cfg.N, cfg.R, rng, dtype)
    elif cfg.cell == "dense_lstm":
        cell = init_dense_lstm(cfg.input_dim, cfg.hidden_size, rng, dtype)
    else:
        cell = init_dense_gru(cfg.input_dim, cfg.hidden_size, rng, dtype)
    return cell, warnings


def run_sequence_task(cfg: SequenceTaskConfig, out_dir: str | Path | None = None) -> SequenceReport:
    """Train a cell plus softmax read-out on the template task.

    Reports test accuracy and the input-to-hidden parameter budget against
    the dense baseline of the same cell type.
    """
    train_x, train_y, test_x, test_y = make_template_dataset(cfg)
    cell, warnings = _build_cell(cfg, _stream(cfg.seed, 21))
    model = SequenceClassifier.init(cell, cfg.class_count, seed=_stream(cfg.seed, 22))
    shuffle_rng = _stream(cfg.seed, 23)

    train_cfg = TrainingConfig(
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        scalar_width=cfg.scalar_width,
    )
    params = model.parameters()
    state = adam_init(params)
    losses, accuracies, wall_ms = [], [], []
    for _ in range(cfg.epochs):
        start = time.perf_counter()
        order = shuffle_rng.permutation(cfg.train_size)
        for lo in range(0, cfg.train_size, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            _, grads = model.loss_and_gradients((train_x[idx], train_y[idx]), loss="xent")
            if train_cfg.clip_norm is not None:
                grads = clip_gradients(grads, train_cfg.clip_norm)
            new_values, state = adam_step(params, grads, state, train_cfg)
            apply_update(params, new_values)
        losses.append(model.loss_value((train_x, train_y), loss="xent"))
        accuracies.append(
            float(np.mean(model.predict_labels(test_x) == test_y))
        )
        wall_ms.append((time.perf_counter() - start) * 1e3)

    gates = cell.u.shape[0] // cfg.hidden_size
    dense_input_params = cfg.input_dim * gates * cfg.hidden_size
    input_map_params = (
        cell.input_map.weight.param_count
        if cell.input_map.is_compressed
        else cell.input_map.weight.size
    )
    report = SequenceReport(
        final_accuracy=accuracies[-1],
        input_map_params=input_map_params,
        dense_input_map_params=dense_input_params,
        total_params=sum(p.size for p in params.values()),
        losses=losses,
        accuracies=accuracies,
        warnings=warnings,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(e + 1, losses[e], accuracies[e]) for e in range(cfg.epochs)]
        write_csv(rows, out / "train_metrics.csv", ["epoch", "train_loss", "eval_metric"])
        write_csv(
            [(e + 1, wall_ms[e]) for e in range(cfg.epochs)],
            out / "train_timing.csv",
            ["epoch", "wall_ms"],
        )
    return report


# -- gradient check harness ----------------------------------------------


@dataclass
class GradcheckConfig:
    """Finite-difference verification of BPTT gradients on a tiny model."""

    input_dim: int = 16
    hidden_size: int = 4
    seq_len: int = 3
    batch_size: int = 2
    class_count: int = 3
    cell: str = "bt_lstm"
    d: int = 2
    R: int = 2
    N: int = 2
    h: float = 1e-5
    threshold: float = 1e-5
    seed: int = 0

    def validate(self) -> None:
        from .io import ConfigError

        if self.cell not in ("dense_lstm", "bt_lstm", "bt_gru", "dense_gru"):
            raise ConfigError(f"unknown cell kind '{self.cell}'")
        if self.h <= 0 or self.threshold <= 0:
            raise ConfigError("h and threshold must be positive")
        if min(self.input_dim, self.hidden_size, self.seq_len, self.batch_size,
               self.class_count, self.d, self.R, self.N) < 1:
            raise ConfigError("sizes must be >= 1")


def run_gradcheck(cfg: GradcheckConfig) -> float:
    """Returns the max relative error of analytic vs numeric gradients."""
    from .training import grad_check

    task = SequenceTaskConfig(
        input_dim=cfg.input_dim,
        seq_len=cfg.seq_len,
        class_count=cfg.class_count,
        hidden_size=cfg.hidden_size,
        cell=cfg.cell,
        d=cfg.d,
        R=cfg.R,
        N=cfg.N,
        seed=cfg.seed,
    )
    cell, _ = _build_cell(task, _stream(cfg.seed, 31))
    model = SequenceClassifier.init(cell, cfg.class_count, seed=_stream(cfg.seed, 32))
    rng = _stream(cfg.seed, 33)
    xs = rng.normal(size=(cfg.batch_size, cfg.seq_len, cfg.input_dim))
    ys = rng.integers(0, cfg.class_count, size=cfg.batch_size)
    return grad_check(model, (xs, ys), loss="xent", h=cfg.h)
