"""Block-term decomposed linear maps.

A weight matrix ``W`` of shape (J, I) is represented as a sum of ``N``
Tucker terms over a factorized index space: ``I = I_1 * ... * I_d`` and
``J = J_1 * ... * J_d``.  Term ``n`` has one order-d core of shape
``(R, ..., R)`` and one factor tensor of shape ``(I_k, J_k, R)`` per mode.
Element-wise,

    W[j, i] = sum_n sum_{r_1..r_d} core_n[r_1..r_d]
              * prod_k factor_{n,k}[i_k, j_k, r_k]

where ``i -> (i_1..i_d)`` and ``j -> (j_1..j_d)`` are the row-major digit
decompositions of the flat indices.  Matrix-vector products against this
representation never materialize the dense ``W``; they run a reordered
contraction schedule that stays low-rank throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import contract, flatten, tensorize

__all__ = [
    "FactorizedShape",
    "BTDecomposition",
    "BTGradients",
    "param_count",
    "validate_ranks",
    "init_btd",
    "flops_forward",
    "flops_naive",
]


@dataclass(frozen=True)
class FactorizedShape:
    """Paired factorizations of the input size I and output size J."""

    input_dims: tuple[int, ...]
    output_dims: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_dims", tuple(int(v) for v in self.input_dims))
        object.__setattr__(self, "output_dims", tuple(int(v) for v in self.output_dims))
        if len(self.input_dims) != len(self.output_dims):
            raise ValueError(
                f"input and output factorizations differ in depth: "
                f"{self.input_dims} vs {self.output_dims}"
            )
        if len(self.input_dims) < 1:
            raise ValueError("factorized shape needs at least one mode")
        if any(v < 1 for v in self.input_dims + self.output_dims):
            raise ValueError("all mode sizes must be >= 1")

    @property
    def order(self) -> int:
        return len(self.input_dims)

    @property
    def input_size(self) -> int:
        return math.prod(self.input_dims)

    @property
    def output_size(self) -> int:
        return math.prod(self.output_dims)


def param_count(shape: FactorizedShape, n_blocks: int, rank: int) -> int:
    """Number of stored scalars: ``N * (sum_k I_k*J_k*R + R^d)``."""
    if n_blocks < 1 or rank < 1:
        raise ValueError("n_blocks and rank must be >= 1")
    factor_sum = sum(
        ik * jk * rank for ik, jk in zip(shape.input_dims, shape.output_dims)
    )
    return n_blocks * (factor_sum + rank**shape.order)


def validate_ranks(shape: FactorizedShape, rank: int) -> list[str]:
    """Warn (do not fail) for modes where the rank exceeds min(I_k, J_k).

    Such ranks are representable but buy no extra expressive power, so they
    waste parameters; callers decide whether to surface the warnings.
    """
    warnings = []
    for k, (ik, jk) in enumerate(zip(shape.input_dims, shape.output_dims), start=1):
        if rank > min(ik, jk):
            warnings.append(
                f"mode {k}: rank {rank} exceeds min(I_{k}={ik}, J_{k}={jk}); "
                f"no expressive power is gained beyond min(I_k, J_k)"
            )
    return warnings


@dataclass
class BTGradients:
    """Gradients of a scalar loss w.r.t. a decomposition's parameters and input.

    Shape-congruent with the decomposition that produced them; ``d_input``
    is flat of length I.
    """

    d_cores: list[np.ndarray]
    d_factors: list[list[np.ndarray]]
    d_input: np.ndarray


class BTDecomposition:
    """Sum of ``n_blocks`` Tucker terms with a shared Tucker-rank per mode.

    Parameters are owned as ``cores[n]`` of shape ``(R,)*d`` and
    ``factors[n][k]`` of shape ``(I_k, J_k, R)``.  The object is treated as
    immutable during :meth:`forward`/:meth:`backward`; parameter updates
    require exclusive access.
    """

    def __init__(
        self,
        shape: FactorizedShape,
        cores: list[np.ndarray],
        factors: list[list[np.ndarray]],
    ) -> None:
        self.shape = shape
        self.n_blocks = len(cores)
        if self.n_blocks < 1:
            raise ValueError("need at least one block term")
        if len(factors) != self.n_blocks:
            raise ValueError("one factor list per block term required")
        rank = cores[0].shape[0] if cores[0].ndim else 1
        d = shape.order
        for n, core in enumerate(cores):
            if core.shape != (rank,) * d:
                raise ValueError(
                    f"core {n} has shape {core.shape}, expected {(rank,) * d}"
                )
        for n, facs in enumerate(factors):
            if len(facs) != d:
                raise ValueError(f"block {n} has {len(facs)} factors, expected {d}")
            for k, fac in enumerate(facs):
                want = (shape.input_dims[k], shape.output_dims[k], rank)
                if fac.shape != want:
                    raise ValueError(
                        f"factor ({n},{k + 1}) has shape {fac.shape}, expected {want}"
                    )
        self.rank = rank
        self.cores = cores
        self.factors = factors

    @property
    def param_count(self) -> int:
        """Stored scalar count; matches :func:`param_count` by construction."""
        stored = sum(c.size for c in self.cores)
        stored += sum(f.size for facs in self.factors for f in facs)
        return stored

    def copy(self) -> "BTDecomposition":
        return BTDecomposition(
            self.shape,
            [c.copy() for c in self.cores],
            [[f.copy() for f in facs] for facs in self.factors],
        )

    def astype(self, dtype) -> "BTDecomposition":
        return BTDecomposition(
            self.shape,
            [c.astype(dtype) for c in self.cores],
            [[f.astype(dtype) for f in facs] for facs in self.factors],
        )

    # -- dense reconstruction -------------------------------------------------

    def reconstruct_dense(self) -> np.ndarray:
        """Materialize the dense (J, I) matrix this decomposition represents.

        Intended for analysis and testing; the production matvec path is
        :meth:`forward`, which never builds this matrix.
        """
        d = self.shape.order
        out = None
        for n in range(self.n_blocks):
            t = self.cores[n]
            for k in range(d):
                # Eats the leading core mode, appends (I_k, J_k).
                t = contract(t, self.factors[n][k], (1,), (3,))
            # t has modes (I_1, J_1, ..., I_d, J_d); sort J's first, then I's.
            perm = tuple(range(1, 2 * d, 2)) + tuple(range(0, 2 * d, 2))
            block = t.transpose(perm).reshape(
                self.shape.output_size, self.shape.input_size
            )
            out = block if out is None else out + block
        return out

    # -- forward --------------------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Apply the represented matrix to a flat vector: returns ``W @ x``.

        Uses the reordered schedule: tensorize ``x``, contract with each
        factor along its input mode in sequence, contract the accumulated
        rank modes with the core, sum the block terms, flatten.
        """
        x = np.asarray(x)
        if x.ndim != 1 or x.size != self.shape.input_size:
            raise ValueError(
                f"input length mismatch: expected {self.shape.input_size}, "
                f"got array of shape {x.shape}"
            )
        return self.forward_batch(x[np.newaxis, :])[0]

    def forward_batch(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`forward` over the leading batch axis of ``xs``."""
        xs = np.asarray(xs)
        if xs.ndim != 2 or xs.shape[1] != self.shape.input_size:
            raise ValueError(
                f"input batch must be (B, {self.shape.input_size}), got {xs.shape}"
            )
        d = self.shape.order
        xt = xs.reshape((xs.shape[0],) + self.shape.input_dims)
        out = None
        for n in range(self.n_blocks):
            t = xt
            for k in range(d):
                # Mode 2 always holds the next input mode: (B, I_k.., pairs..).
                t = contract(t, self.factors[n][k], (2,), (1,))
            # t modes: (B, J_1, R, J_2, R, ..., J_d, R); rank modes sit at
            # positions 3, 5, ..., 2d+1.
            rank_modes = tuple(3 + 2 * m for m in range(d))
            t = contract(t, self.cores[n], rank_modes, tuple(range(1, d + 1)))
            out = t if out is None else out + t
        return out.reshape(xs.shape[0], self.shape.output_size)

    def forward_naive(self, x: np.ndarray) -> np.ndarray:
        """Reference matvec that materializes each block term left to right.

        Same result as :meth:`forward` but at the cost accounted by
        :func:`flops_naive`; exists for benchmarking and as an independent
        route in tests.
        """
        x = np.asarray(x)
        if x.ndim != 1 or x.size != self.shape.input_size:
            raise ValueError(
                f"input length mismatch: expected {self.shape.input_size}, "
                f"got array of shape {x.shape}"
            )
        d = self.shape.order
        xt = tensorize(x, self.shape.input_dims)
        out = None
        for n in range(self.n_blocks):
            t = self.cores[n]
            for k in range(d):
                t = contract(t, self.factors[n][k], (1,), (3,))
            # t modes: (I_1, J_1, ..., I_d, J_d); contract all input modes.
            input_modes = tuple(range(1, 2 * d, 2))
            t = contract(t, xt, input_modes, tuple(range(1, d + 1)))
            out = t if out is None else out + t
        return flatten(out)

    # -- backward -------------------------------------------------------------

    def backward(self, x: np.ndarray, d_out: np.ndarray) -> BTGradients:
        """Gradients of ``L`` given ``dL/d(forward(x))``.

        Returns gradients for every core and factor plus ``dL/dx``; all are
        linear in ``d_out``.  ``dL/dx`` is the transpose map ``W^T @ d_out``
        evaluated through the same contraction machinery, not through a
        dense reconstruction.
        """
        x = np.asarray(x)
        d_out = np.asarray(d_out)
        if x.ndim != 1 or x.size != self.shape.input_size:
            raise ValueError(
                f"input length mismatch: expected {self.shape.input_size}, "
                f"got array of shape {x.shape}"
            )
        if d_out.ndim != 1 or d_out.size != self.shape.output_size:
            raise ValueError(
                f"output-gradient length mismatch: expected "
                f"{self.shape.output_size}, got array of shape {d_out.shape}"
            )
        d_cores, d_factors, d_xs = self.backward_batch(
            x[np.newaxis, :], d_out[np.newaxis, :], with_dx=True
        )
        return BTGradients(d_cores, d_factors, d_xs[0])

    def backward_batch(
        self, xs: np.ndarray, d_outs: np.ndarray, with_dx: bool = True
    ) -> tuple[list[np.ndarray], list[list[np.ndarray]], np.ndarray | None]:
        """Batched gradients, summed over the batch axis.

        ``d_xs`` (per-sample, not summed) is skipped when ``with_dx`` is
        False, which saves work inside BPTT where inputs are data.
        """
        xs = np.asarray(xs)
        d_outs = np.asarray(d_outs)
        d = self.shape.order
        batch = xs.shape[0]
        xt = xs.reshape((batch,) + self.shape.input_dims)
        dt = d_outs.reshape((batch,) + self.shape.output_dims)

        d_cores: list[np.ndarray] = []
        d_factors: list[list[np.ndarray]] = []
        d_xs = np.zeros_like(xt) if with_dx else None
        for n in range(self.n_blocks):
            # Core gradient: input side fully contracted with factors, then
            # matched against the output gradient over batch and all J modes.
            t = xt
            for k in range(d):
                t = contract(t, self.factors[n][k], (2,), (1,))
            # t: (B, J_1, R, ..., J_d, R) with J_k at position 2k.
            t_modes = (1,) + tuple(2 * m + 2 for m in range(d))
            dt_modes = (1,) + tuple(range(2, d + 2))
            d_cores.append(contract(t, dt, t_modes, dt_modes))

            # Factor gradients: leave mode k of the input side open, close
            # the other rank modes with the core, then match the output
            # gradient everywhere except J_k.
            block_factors: list[np.ndarray] = []
            for k in range(d):
                v = xt
                for kp in range(d):
                    if kp == k:
                        continue
                    pos = 3 if kp > k else 2
                    v = contract(v, self.factors[n][kp], (pos,), (1,))
                # v: (B, I_k, J_a1, R, J_a2, R, ...) for a = modes != k.
                rank_pos = tuple(4 + 2 * m for m in range(d - 1))
                other = tuple(kp + 1 for kp in range(d) if kp != k)
                v = contract(v, self.cores[n], rank_pos, other)
                # v: (B, I_k, J_a1.., R); match (batch, other J's) against dt.
                v_modes = (1,) + tuple(range(3, 3 + (d - 1)))
                dt_other = (1,) + tuple(a + 1 for a in other)
                g = contract(v, dt, v_modes, dt_other)
                # g: (I_k, R, J_k) -> (I_k, J_k, R).
                block_factors.append(np.ascontiguousarray(g.transpose(0, 2, 1)))
            d_factors.append(block_factors)

            if with_dx:
                u = dt
                for k in range(d):
                    u = contract(u, self.factors[n][k], (2,), (2,))
                # u: (B, I_1, R, ..., I_d, R).
                rank_modes = tuple(3 + 2 * m for m in range(d))
                u = contract(u, self.cores[n], rank_modes, tuple(range(1, d + 1)))
                d_xs = d_xs + u
        if with_dx:
            d_xs = d_xs.reshape(batch, self.shape.input_size)
        return d_cores, d_factors, d_xs


def init_btd(
    shape: FactorizedShape,
    n_blocks: int,
    rank: int,
    seed: int | np.random.Generator,
    dtype=np.float64,
) -> BTDecomposition:
    """Random decomposition with Glorot-style reconstruction variance.

    All cores and factors are i.i.d. zero-mean Gaussian with a shared
    standard deviation chosen so the entries of the reconstructed dense
    matrix have variance ~ 2 / (I + J).  A reconstructed entry sums
    ``N * R^d`` uncorrelated products of d+1 parameters, so each parameter
    tensor gets variance ``(target / (N * R^d)) ** (1 / (d + 1))``.
    """
    if n_blocks < 1 or rank < 1:
        raise ValueError("n_blocks and rank must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = shape.order
    target = 2.0 / (shape.input_size + shape.output_size)
    sigma = (target / (n_blocks * rank**d)) ** (1.0 / (2.0 * (d + 1)))
    cores = [
        rng.normal(0.0, sigma, size=(rank,) * d).astype(dtype, copy=False)
        for _ in range(n_blocks)
    ]
    factors = [
        [
            rng.normal(0.0, sigma, size=(ik, jk, rank)).astype(dtype, copy=False)
            for ik, jk in zip(shape.input_dims, shape.output_dims)
        ]
        for _ in range(n_blocks)
    ]
    return BTDecomposition(shape, cores, factors)


def flops_forward(shape: FactorizedShape, n_blocks: int, rank: int) -> int:
    """Exact multiply-add count of the reordered forward schedule.

    Step k contracts the partially processed input (still carrying modes
    I_k..I_d and the accumulated (J, R) pairs) with factor k over I_k; the
    final step closes all rank modes with the core.  Asymptotically
    O(N * d * I * J_max * R^d).
    """
    d = shape.order
    idims, jdims = shape.input_dims, shape.output_dims
    per_block = 0
    for k in range(1, d + 1):
        out_elems = (
            math.prod(idims[k:]) * math.prod(jdims[:k]) * rank**k
        )
        per_block += out_elems * idims[k - 1]
    per_block += shape.output_size * rank**d
    return n_blocks * per_block


def flops_naive(shape: FactorizedShape, n_blocks: int, rank: int) -> int:
    """Multiply-add count of the left-to-right schedule.

    Each block term materializes its dense (I_1, J_1, ..., I_d, J_d) tensor
    from the core outwards (step k costs prod_{m<=k} I_m*J_m * R^(d-k+1))
    and only then contracts the tensorized input, costing I*J.
    """
    d = shape.order
    idims, jdims = shape.input_dims, shape.output_dims
    per_block = 0
    for k in range(1, d + 1):
        per_block += math.prod(idims[:k]) * math.prod(jdims[:k]) * rank ** (d - k + 1)
    per_block += shape.input_size * shape.output_size
    return n_blocks * per_block
