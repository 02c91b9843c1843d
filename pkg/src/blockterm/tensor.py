"""Dense multiway arrays and the two contraction primitives everything else
is built on.

Tensors are plain :class:`numpy.ndarray` values in row-major (C) layout; a
d-order tensor is an array with ``ndim == d``.  Modes are numbered 1..d
throughout, following the usual tensor-analysis convention rather than
numpy's 0-based axes.
"""

from __future__ import annotations

import contextvars
import math
from typing import Sequence

import numpy as np

__all__ = [
    "FlopCounter",
    "tensorize",
    "flatten",
    "mode_product",
    "contract",
]

_active_counter: contextvars.ContextVar["FlopCounter | None"] = contextvars.ContextVar(
    "blockterm_flop_counter", default=None
)


class FlopCounter:
    """Context manager that tallies multiply-adds of contractions in its scope.

    A contraction producing ``E`` output elements, each a sum over ``S``
    index combinations, contributes ``E * S`` multiply-adds.  Reshapes and
    element-wise additions are free.

    >>> with FlopCounter() as fc:
    ...     _ = mode_product(np.ones((2, 3)), np.ones((3, 4)), 2, 1)
    >>> fc.multiply_adds
    24
    """

    def __init__(self) -> None:
        self.multiply_adds = 0
        self._token: contextvars.Token | None = None

    def __enter__(self) -> "FlopCounter":
        self._token = _active_counter.set(self)
        return self

    def __exit__(self, *exc) -> bool:
        assert self._token is not None
        _active_counter.reset(self._token)
        self._token = None
        return False


def _record(multiply_adds: int) -> None:
    counter = _active_counter.get()
    if counter is not None:
        counter.multiply_adds += multiply_adds


def tensorize(v: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Reshape a flat vector into a tensor with the given mode sizes.

    The reshape is row-major (last index fastest) and never copies or
    duplicates data beyond the reshape itself.

    Raises
    ------
    ValueError
        If ``v`` is not 1-D, a mode size is < 1, or ``prod(dims)`` does not
        equal ``len(v)``.
    """
    v = np.asarray(v)
    dims = tuple(int(d) for d in dims)
    if v.ndim != 1:
        raise ValueError(f"tensorize expects a flat vector, got ndim={v.ndim}")
    if any(d < 1 for d in dims):
        raise ValueError(f"mode sizes must be >= 1, got {dims}")
    if math.prod(dims) != v.size:
        raise ValueError(
            f"shape mismatch: prod{dims} = {math.prod(dims)} != vector length {v.size}"
        )
    return v.reshape(dims)


def flatten(t: np.ndarray) -> np.ndarray:
    """Inverse of :func:`tensorize`: row-major flattening to a 1-D array."""
    return np.asarray(t).reshape(-1)


def _check_modes(a: np.ndarray, modes: Sequence[int], name: str) -> tuple[int, ...]:
    modes = tuple(int(m) for m in modes)
    for m in modes:
        if not 1 <= m <= a.ndim:
            raise ValueError(f"{name}: mode {m} out of range for order-{a.ndim} tensor")
    if len(set(modes)) != len(modes):
        raise ValueError(f"{name}: duplicate modes in {modes}")
    return modes


def contract(
    a: np.ndarray,
    b: np.ndarray,
    modes_a: Sequence[int],
    modes_b: Sequence[int],
) -> np.ndarray:
    """Contract two tensors over one or more pairs of modes simultaneously.

    Each listed mode of ``a`` is summed against the paired mode of ``b``.
    The output carries the surviving modes of ``a`` in their original order,
    followed by the surviving modes of ``b`` in their original order:

    ``out[i_k-, i_k+, j_k-, j_k+] = sum_p a[i_k-, p, i_k+] * b[j_k-, p, j_k+]``

    Parameters
    ----------
    a, b:
        Input tensors.
    modes_a, modes_b:
        Equal-length, duplicate-free lists of 1-based mode positions; paired
        modes must have equal sizes.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    modes_a = _check_modes(a, modes_a, "modes_a")
    modes_b = _check_modes(b, modes_b, "modes_b")
    if len(modes_a) != len(modes_b):
        raise ValueError(
            f"mode lists differ in length: {len(modes_a)} vs {len(modes_b)}"
        )
    for ma, mb in zip(modes_a, modes_b):
        if a.shape[ma - 1] != b.shape[mb - 1]:
            raise ValueError(
                f"dimension mismatch: a mode {ma} has size {a.shape[ma - 1]}, "
                f"b mode {mb} has size {b.shape[mb - 1]}"
            )
    axes_a = [m - 1 for m in modes_a]
    axes_b = [m - 1 for m in modes_b]
    summed = math.prod(a.shape[ax] for ax in axes_a)
    _record((a.size // summed) * (b.size // summed) * summed)
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def mode_product(a: np.ndarray, b: np.ndarray, mode_a: int, mode_b: int) -> np.ndarray:
    """Tensor product of ``a`` and ``b`` over a single matched mode.

    Specialization of :func:`contract` to one mode pair; kept as its own
    entry point because most layer algebra is phrased in terms of it.
    """
    return contract(a, b, (mode_a,), (mode_b,))
