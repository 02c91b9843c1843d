"""Optimization and gradient machinery: Adam, losses, backpropagation
through time, and a finite-difference gradient checker.

Models expose a flat parameter tree (``OrderedDict[str, ndarray]``) plus
``loss_value`` / ``loss_and_gradients``; gradients mirror the tree key for
key, which keeps the optimizer and the checker generic.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .cells import BTLinear, GRUCell, LSTMCell

__all__ = [
    "TrainingConfig",
    "AdamState",
    "NonFiniteLossError",
    "adam_init",
    "adam_step",
    "loss_mse",
    "loss_mse_grad",
    "loss_xent",
    "loss_xent_batch",
    "softmax",
    "BTRegressor",
    "SequenceClassifier",
    "bptt",
    "grad_check",
    "clip_gradients",
]


class NonFiniteLossError(RuntimeError):
    """Raised when a training loss evaluates to NaN or infinity."""


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    scalar_width: str = "float64"
    clip_norm: float | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.scalar_width not in ("float64", "float32"):
            raise ValueError("scalar_width must be 'float64' or 'float32'")

    @property
    def dtype(self):
        return np.float64 if self.scalar_width == "float64" else np.float32


# -- Adam ----------------------------------------------------------------


@dataclass
class AdamState:
    step: int
    m: "OrderedDict[str, np.ndarray]"
    v: "OrderedDict[str, np.ndarray]"


def adam_init(params: "OrderedDict[str, np.ndarray]") -> AdamState:
    zeros = lambda: OrderedDict((k, np.zeros_like(p)) for k, p in params.items())
    return AdamState(step=0, m=zeros(), v=zeros())


def adam_step(
    params: "OrderedDict[str, np.ndarray]",
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainingConfig,
) -> tuple["OrderedDict[str, np.ndarray]", AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    t = state.step + 1
    new_params: OrderedDict[str, np.ndarray] = OrderedDict()
    new_m: OrderedDict[str, np.ndarray] = OrderedDict()
    new_v: OrderedDict[str, np.ndarray] = OrderedDict()
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {key}: {g.shape} vs {p.shape}")
        m = config.beta1 * state.m[key] + (1 - config.beta1) * g
        v = config.beta2 * state.v[key] + (1 - config.beta2) * g**2
        m_hat = m / (1 - config.beta1**t)
        v_hat = v / (1 - config.beta2**t)
        new_params[key] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        new_m[key] = m
        new_v[key] = v
    return new_params, AdamState(step=t, m=new_m, v=new_v)


def apply_update(params: "OrderedDict[str, np.ndarray]", new_values) -> None:
    """Write updated values into live parameter arrays in place."""
    for key, p in params.items():
        p[...] = new_values[key]


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale the whole gradient tree so its global L2 norm is <= max_norm."""
    total = math.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


# -- losses ----------------------------------------------------------------


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared difference over all elements."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def loss_mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return 2.0 * (pred - target) / pred.size


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def loss_xent(logits: np.ndarray, label: int) -> float:
    """Cross-entropy of a single logit vector, log-sum-exp stabilized."""
    logits = np.asarray(logits)
    if logits.ndim != 1:
        raise ValueError(f"expected a logit vector, got shape {logits.shape}")
    if not 0 <= label < logits.size:
        raise ValueError(f"label {label} out of range for {logits.size} classes")
    m = float(np.max(logits))
    lse = m + math.log(float(np.sum(np.exp(logits - m))))
    return lse - float(logits[label])


def loss_xent_batch(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    batch = logits.shape[0]
    m = np.max(logits, axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(logits - m), axis=1))
    value = float(np.mean(lse - logits[np.arange(batch), labels]))
    grad = softmax(logits)
    grad[np.arange(batch), labels] -= 1.0
    return value, grad / batch


# -- models ----------------------------------------------------------------


class BTRegressor:
    """Linear regression model: a single (BT or dense) affine map under MSE.

    ``batch`` is a pair ``(xs, ys)`` with shapes (B, I) and (B, J).
    """

    def __init__(self, layer: BTLinear) -> None:
        self.layer = layer

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        return self.layer.parameters()

    def predict_batch(self, xs: np.ndarray) -> np.ndarray:
        return self.layer.apply_batch(xs)

    def loss_value(self, batch, loss: str = "mse") -> float:
        xs, ys = batch
        if loss != "mse":
            raise ValueError("BTRegressor supports only MSE loss")
        value = loss_mse(self.predict_batch(xs), ys)
        if not math.isfinite(value):
            raise NonFiniteLossError(f"loss is {value}")
        return value

    def loss_and_gradients(self, batch, loss: str = "mse"):
        xs, ys = batch
        value = self.loss_value(batch, loss)
        d_out = loss_mse_grad(self.predict_batch(xs), ys)
        grads = self.layer.grad_batch(xs, d_out)
        return value, grads


class SequenceClassifier:
    """Recurrent cell plus a dense read-out of the final hidden state.

    Under ``loss="xent"`` targets are integer class labels and the read-out
    produces logits; under ``loss="mse"`` targets are vectors matched
    against the read-out directly.
    """

    def __init__(self, cell: LSTMCell | GRUCell, head_w: np.ndarray, head_b: np.ndarray):
        self.cell = cell
        self.head_w = np.asarray(head_w)
        self.head_b = np.asarray(head_b)
        if self.head_w.shape[1] != cell.hidden_size:
            raise ValueError(
                f"read-out expects {self.head_w.shape[1]} features, "
                f"cell provides {cell.hidden_size}"
            )

    @classmethod
    def init(cls, cell, output_size: int, seed) -> "SequenceClassifier":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        std = math.sqrt(2.0 / (cell.hidden_size + output_size))
        head_w = rng.normal(0.0, std, size=(output_size, cell.hidden_size))
        return cls(cell, head_w, np.zeros(output_size))

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        params = self.cell.parameters(prefix="cell.")
        params["head_w"] = self.head_w
        params["head_b"] = self.head_b
        return params

    def astype(self, dtype) -> None:
        for p in self.parameters().values():
            p_cast = p.astype(dtype)
            if p_cast.dtype != p.dtype:
                raise ValueError("in-place dtype change unsupported; rebuild the model")

    def _run(self, sequences: np.ndarray):
        batch, steps, _ = sequences.shape
        h = np.zeros((batch, self.cell.hidden_size))
        c = np.zeros_like(h) if isinstance(self.cell, LSTMCell) else None
        caches = []
        for t in range(steps):
            h, c, cache = self.cell.step_batch(sequences[:, t, :], h, c)
            caches.append(cache)
        return h, c, caches

    def forward_batch(self, sequences: np.ndarray) -> np.ndarray:
        h, _, _ = self._run(np.asarray(sequences))
        return h @ self.head_w.T + self.head_b

    def predict_labels(self, sequences: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward_batch(sequences), axis=1)

    def loss_value(self, batch, loss: str = "xent") -> float:
        value, _, _ = self._loss_full(batch, loss)
        return value

    def _loss_full(self, batch, loss: str):
        sequences, targets = batch
        sequences = np.asarray(sequences)
        if sequences.ndim != 3 or sequences.shape[2] != self.cell.input_size:
            raise ValueError(
                f"sequences must be (B, T, {self.cell.input_size}), "
                f"got {sequences.shape}"
            )
        out = self.forward_batch(sequences)
        if loss == "xent":
            value, d_out = loss_xent_batch(out, targets)
        elif loss == "mse":
            value = loss_mse(out, np.asarray(targets))
            d_out = loss_mse_grad(out, np.asarray(targets))
        else:
            raise ValueError(f"unknown loss '{loss}'")
        if not math.isfinite(value):
            raise NonFiniteLossError(f"loss is {value}")
        return value, out, d_out

    def loss_and_gradients(self, batch, loss: str = "xent"):
        return bptt(self, batch, loss)


def bptt(model: SequenceClassifier, batch, loss: str = "xent"):
    """Backpropagation through time over a batch of equal-length sequences.

    Returns the mean loss and its gradient for every parameter; batch
    gradients are the mean of per-sequence gradients because the loss is
    normalized before the backward sweep.
    """
    sequences, targets = batch
    sequences = np.asarray(sequences)
    value, _, d_out = model._loss_full(batch, loss)
    h, c, caches = model._run(sequences)

    grads: dict[str, np.ndarray] = {
        k: np.zeros_like(p) for k, p in model.parameters().items()
    }
    grads["head_w"] += d_out.T @ h
    grads["head_b"] += d_out.sum(axis=0)
    dh = d_out @ model.head_w
    dc = np.zeros_like(dh)
    for cache in reversed(caches):
        dh, dc = model.cell.backward_step(cache, dh, dc, grads, prefix="cell.")
        if dc is None:
            dc = np.zeros_like(dh)
    return value, grads


# -- gradient checking -------------------------------------------------------


def grad_check(
    model,
    batch,
    loss: str = "xent",
    h: float = 1e-5,
    max_coords: int = 10_000,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Walks every parameter coordinate (or a seeded random subset when the
    model exceeds ``max_coords`` of them).  The relative error denominator
    is floored at 1e-8.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    params = model.parameters()
    _, analytic = model.loss_and_gradients(batch, loss)

    coords = [(key, idx) for key, p in params.items() for idx in np.ndindex(p.shape)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[int(i)] for i in chosen]

    worst = 0.0
    for key, idx in coords:
        p = params[key]
        orig = p[idx]
        p[idx] = orig + h
        hi = model.loss_value(batch, loss)
        p[idx] = orig - h
        lo = model.loss_value(batch, loss)
        p[idx] = orig
        numeric = (hi - lo) / (2 * h)
        exact = float(analytic[key][idx])
        denom = max(abs(exact), abs(numeric), 1e-8)
        worst = max(worst, abs(exact - numeric) / denom)
    return worst
