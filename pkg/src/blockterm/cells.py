"""LSTM and GRU cells whose input-to-hidden map may be block-term compressed.

Only the input-to-hidden transform ``W @ x_t`` is compressed; the
hidden-to-hidden matrix ``U`` and the bias stay dense.  Gates are evaluated
in concatenated form: one fused pre-activation of size ``4H`` (LSTM, gate
order f, i, candidate, o) or ``3H`` (GRU, gate order z, r, candidate).

Batched variants (leading batch axis, with caches for backpropagation
through time) power the training loop; the single-vector entry points are
thin wrappers over batch size one.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .layer import BTDecomposition, FactorizedShape, init_btd

__all__ = [
    "BTLinear",
    "CellState",
    "LSTMCell",
    "GRUCell",
    "lstm_step",
    "gru_step",
    "unroll",
    "init_bt_lstm",
    "init_dense_lstm",
    "init_bt_gru",
    "init_dense_gru",
]


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class CellState:
    """Recurrent state: hidden vector ``h`` and, for LSTM, cell vector ``c``."""

    h: np.ndarray
    c: np.ndarray | None = None


class BTLinear:
    """Affine map whose weight is either a block-term decomposition or a
    dense (J, I) matrix (baseline mode)."""

    def __init__(self, weight: BTDecomposition | np.ndarray, bias: np.ndarray) -> None:
        self.weight = weight
        self.bias = np.asarray(bias)
        if self.bias.shape != (self.output_size,):
            raise ValueError(
                f"bias must have length {self.output_size}, got {self.bias.shape}"
            )

    @property
    def is_compressed(self) -> bool:
        return isinstance(self.weight, BTDecomposition)

    @property
    def input_size(self) -> int:
        if self.is_compressed:
            return self.weight.shape.input_size
        return self.weight.shape[1]

    @property
    def output_size(self) -> int:
        if self.is_compressed:
            return self.weight.shape.output_size
        return self.weight.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.apply_batch(np.asarray(x)[np.newaxis, :])[0]

    def apply_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs)
        if xs.ndim != 2 or xs.shape[1] != self.input_size:
            raise ValueError(
                f"input batch must be (B, {self.input_size}), got {xs.shape}"
            )
        if self.is_compressed:
            return self.weight.forward_batch(xs) + self.bias
        return xs @ self.weight.T + self.bias

    def dense_weight(self) -> np.ndarray:
        return self.weight.reconstruct_dense() if self.is_compressed else self.weight

    def parameters(self, prefix: str = "") -> "OrderedDict[str, np.ndarray]":
        params: OrderedDict[str, np.ndarray] = OrderedDict()
        if self.is_compressed:
            for n, core in enumerate(self.weight.cores):
                params[f"{prefix}core_{n}"] = core
            for n, facs in enumerate(self.weight.factors):
                for k, fac in enumerate(facs):
                    params[f"{prefix}factor_{n}_{k}"] = fac
        else:
            params[f"{prefix}weight"] = self.weight
        params[f"{prefix}bias"] = self.bias
        return params

    def grad_batch(
        self, xs: np.ndarray, d_out: np.ndarray, prefix: str = ""
    ) -> dict[str, np.ndarray]:
        """Parameter gradients (summed over batch) for upstream ``d_out``."""
        grads: dict[str, np.ndarray] = {}
        if self.is_compressed:
            d_cores, d_factors, _ = self.weight.backward_batch(xs, d_out, with_dx=False)
            for n, g in enumerate(d_cores):
                grads[f"{prefix}core_{n}"] = g
            for n, facs in enumerate(d_factors):
                for k, g in enumerate(facs):
                    grads[f"{prefix}factor_{n}_{k}"] = g
        else:
            grads[f"{prefix}weight"] = d_out.T @ xs
        grads[f"{prefix}bias"] = d_out.sum(axis=0)
        return grads


class LSTMCell:
    """Single LSTM cell with fused gate order (f, i, candidate, o)."""

    def __init__(self, input_map: BTLinear, recurrent: np.ndarray, hidden_size: int):
        self.input_map = input_map
        self.u = np.asarray(recurrent)
        self.hidden_size = int(hidden_size)
        if input_map.output_size != 4 * self.hidden_size:
            raise ValueError(
                f"input map produces {input_map.output_size} values, "
                f"need 4*H = {4 * self.hidden_size}"
            )
        if self.u.shape != (4 * self.hidden_size, self.hidden_size):
            raise ValueError(
                f"recurrent matrix must be (4H, H) = "
                f"{(4 * self.hidden_size, self.hidden_size)}, got {self.u.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.input_map.input_size

    def zero_state(self, batch: int | None = None) -> CellState:
        shape = (self.hidden_size,) if batch is None else (batch, self.hidden_size)
        return CellState(h=np.zeros(shape), c=np.zeros(shape))

    def parameters(self, prefix: str = "") -> "OrderedDict[str, np.ndarray]":
        params = self.input_map.parameters(prefix=f"{prefix}wx.")
        params[f"{prefix}u"] = self.u
        return params

    def step_batch(self, xs, h_prev, c_prev):
        hsz = self.hidden_size
        pre = self.input_map.apply_batch(xs) + h_prev @ self.u.T
        f = sigmoid(pre[:, :hsz])
        i = sigmoid(pre[:, hsz : 2 * hsz])
        g = np.tanh(pre[:, 2 * hsz : 3 * hsz])
        o = sigmoid(pre[:, 3 * hsz :])
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        cache = (xs, h_prev, c_prev, f, i, g, o, tanh_c)
        return h, c, cache

    def backward_step(self, cache, dh, dc, grads, prefix: str = ""):
        """Propagate (dh, dc) through one step; accumulates into ``grads``.

        Returns (dh_prev, dc_prev).  Gradients w.r.t. the step's input are
        not formed: inside BPTT the inputs are data.
        """
        xs, h_prev, c_prev, f, i, g, o, tanh_c = cache
        dc_total = dc + dh * o * (1.0 - tanh_c**2)
        d_o = dh * tanh_c * o * (1.0 - o)
        d_f = dc_total * c_prev * f * (1.0 - f)
        d_i = dc_total * g * i * (1.0 - i)
        d_g = dc_total * i * (1.0 - g**2)
        d_pre = np.concatenate([d_f, d_i, d_g, d_o], axis=1)
        for name, value in self.input_map.grad_batch(xs, d_pre, f"{prefix}wx.").items():
            grads[name] += value
        grads[f"{prefix}u"] += d_pre.T @ h_prev
        return d_pre @ self.u, dc_total * f


class GRUCell:
    """Single GRU cell with fused gate order (z, r, candidate).

    Update rule: ``h_t = z * h_prev + (1 - z) * candidate`` with the
    candidate computed from the reset-gated previous state.
    """

    def __init__(self, input_map: BTLinear, recurrent: np.ndarray, hidden_size: int):
        self.input_map = input_map
        self.u = np.asarray(recurrent)
        self.hidden_size = int(hidden_size)
        if input_map.output_size != 3 * self.hidden_size:
            raise ValueError(
                f"input map produces {input_map.output_size} values, "
                f"need 3*H = {3 * self.hidden_size}"
            )
        if self.u.shape != (3 * self.hidden_size, self.hidden_size):
            raise ValueError(
                f"recurrent matrix must be (3H, H) = "
                f"{(3 * self.hidden_size, self.hidden_size)}, got {self.u.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.input_map.input_size

    def zero_state(self, batch: int | None = None) -> CellState:
        shape = (self.hidden_size,) if batch is None else (batch, self.hidden_size)
        return CellState(h=np.zeros(shape), c=None)

    def parameters(self, prefix: str = "") -> "OrderedDict[str, np.ndarray]":
        params = self.input_map.parameters(prefix=f"{prefix}wx.")
        params[f"{prefix}u"] = self.u
        return params

    def step_batch(self, xs, h_prev, c_prev=None):
        hsz = self.hidden_size
        u_z, u_r, u_g = self.u[:hsz], self.u[hsz : 2 * hsz], self.u[2 * hsz :]
        wx = self.input_map.apply_batch(xs)
        z = sigmoid(wx[:, :hsz] + h_prev @ u_z.T)
        r = sigmoid(wx[:, hsz : 2 * hsz] + h_prev @ u_r.T)
        rh = r * h_prev
        g = np.tanh(wx[:, 2 * hsz :] + rh @ u_g.T)
        h = z * h_prev + (1.0 - z) * g
        cache = (xs, h_prev, z, r, g, rh)
        return h, None, cache

    def backward_step(self, cache, dh, dc, grads, prefix: str = ""):
        xs, h_prev, z, r, g, rh = cache
        hsz = self.hidden_size
        u_z, u_r, u_g = self.u[:hsz], self.u[hsz : 2 * hsz], self.u[2 * hsz :]
        d_z = dh * (h_prev - g) * z * (1.0 - z)
        d_g = dh * (1.0 - z) * (1.0 - g**2)
        d_rh = d_g @ u_g
        d_r = d_rh * h_prev * r * (1.0 - r)
        d_pre = np.concatenate([d_z, d_r, d_g], axis=1)
        for name, value in self.input_map.grad_batch(xs, d_pre, f"{prefix}wx.").items():
            grads[name] += value
        grads[f"{prefix}u"][:hsz] += d_z.T @ h_prev
        grads[f"{prefix}u"][hsz : 2 * hsz] += d_r.T @ h_prev
        grads[f"{prefix}u"][2 * hsz :] += d_g.T @ rh
        dh_prev = dh * z + d_z @ u_z + d_r @ u_r + d_rh * r
        return dh_prev, None


def _step_single(cell, x, state):
    x = np.asarray(x)
    if x.ndim != 1 or x.size != cell.input_size:
        raise ValueError(
            f"input length mismatch: expected {cell.input_size}, got {x.shape}"
        )
    if state is None:
        state = cell.zero_state()
    h_prev = state.h[np.newaxis, :]
    c_prev = None if state.c is None else state.c[np.newaxis, :]
    h, c, _ = cell.step_batch(x[np.newaxis, :], h_prev, c_prev)
    return CellState(h=h[0], c=None if c is None else c[0])


def lstm_step(cell: LSTMCell, x: np.ndarray, state: CellState | None = None) -> CellState:
    """One LSTM update; ``state=None`` starts from zeros."""
    return _step_single(cell, x, state)


def gru_step(cell: GRUCell, x: np.ndarray, state: CellState | None = None) -> CellState:
    """One GRU update; ``state=None`` starts from zeros."""
    return _step_single(cell, x, state)


def unroll(cell, sequence, initial: CellState | None = None) -> list[CellState]:
    """Apply the cell along a sequence of input vectors; returns all T states."""
    state = cell.zero_state() if initial is None else initial
    states = []
    for x in sequence:
        state = _step_single(cell, x, state)
        states.append(state)
    return states


def _init_input_map(
    input_dims, output_dims, n_blocks, rank, rng, dtype
) -> BTLinear:
    shape = FactorizedShape(tuple(input_dims), tuple(output_dims))
    weight = init_btd(shape, n_blocks, rank, seed=rng, dtype=dtype)
    return BTLinear(weight, np.zeros(shape.output_size, dtype=dtype))


def _init_dense_map(input_size, output_size, rng, dtype) -> BTLinear:
    std = math.sqrt(2.0 / (input_size + output_size))
    weight = rng.normal(0.0, std, size=(output_size, input_size)).astype(dtype, copy=False)
    return BTLinear(weight, np.zeros(output_size, dtype=dtype))


def _recurrent_matrix(gates, hidden_size, rng, dtype):
    std = 1.0 / math.sqrt(hidden_size)
    return rng.normal(0.0, std, size=(gates * hidden_size, hidden_size)).astype(
        dtype, copy=False
    )


def init_bt_lstm(
    input_dims, output_dims, hidden_size, n_blocks, rank, seed, dtype=np.float64
) -> LSTMCell:
    """BT-compressed LSTM; ``prod(output_dims)`` must equal ``4 * hidden_size``."""
    if math.prod(output_dims) != 4 * hidden_size:
        raise ValueError(
            f"prod{tuple(output_dims)} = {math.prod(output_dims)} != 4*H ="
            f" {4 * hidden_size}"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    input_map = _init_input_map(input_dims, output_dims, n_blocks, rank, rng, dtype)
    return LSTMCell(input_map, _recurrent_matrix(4, hidden_size, rng, dtype), hidden_size)


def init_dense_lstm(input_size, hidden_size, seed, dtype=np.float64) -> LSTMCell:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    input_map = _init_dense_map(input_size, 4 * hidden_size, rng, dtype)
    return LSTMCell(input_map, _recurrent_matrix(4, hidden_size, rng, dtype), hidden_size)


def init_bt_gru(
    input_dims, output_dims, hidden_size, n_blocks, rank, seed, dtype=np.float64
) -> GRUCell:
    """BT-compressed GRU; ``prod(output_dims)`` must equal ``3 * hidden_size``."""
    if math.prod(output_dims) != 3 * hidden_size:
        raise ValueError(
            f"prod{tuple(output_dims)} = {math.prod(output_dims)} != 3*H ="
            f" {3 * hidden_size}"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    input_map = _init_input_map(input_dims, output_dims, n_blocks, rank, rng, dtype)
    return GRUCell(input_map, _recurrent_matrix(3, hidden_size, rng, dtype), hidden_size)


def init_dense_gru(input_size, hidden_size, seed, dtype=np.float64) -> GRUCell:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    input_map = _init_dense_map(input_size, 3 * hidden_size, rng, dtype)
    return GRUCell(input_map, _recurrent_matrix(3, hidden_size, rng, dtype), hidden_size)
