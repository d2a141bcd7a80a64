"""Dense float64 tensor helpers.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The helpers here
add the shape and finiteness checks that the layers rely on; layers write their
own backward passes, there is no autodiff.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

DTYPE = np.float64

_REDUCERS = {
    "min": np.min,
    "max": np.max,
    "sum": np.sum,
    "mean": np.mean,
}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
}


class ShapeError(ValueError):
    """Raised when tensor extents are incompatible with an operation."""


class NonFiniteError(ValueError):
    """Raised when a NaN or Inf shows up where finite values are required."""


def tensor(data, shape: Iterable[int] | None = None) -> np.ndarray:
    """Build a float64 tensor, optionally reshaping flat row-major data."""
    arr = np.array(data, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"extents must be positive, got {shape}")
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"cannot view {arr.size} values as {shape}")
        arr = arr.reshape(shape)
    return arr


def check_finite(t: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        bad = int(np.count_nonzero(~np.isfinite(t)))
        raise NonFiniteError(f"{what} has {bad} non-finite value(s)")
    return t


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def map(t: np.ndarray, f: Callable) -> np.ndarray:  # noqa: A001 - mirrors the op name
    """Apply ``f`` elementwise. ``f`` may be a ufunc or a plain scalar callable."""
    t = np.asarray(t, dtype=DTYPE)
    if isinstance(f, np.ufunc):
        out = f(t)
    else:
        try:
            out = np.asarray(f(t), dtype=DTYPE)
            if out.shape != t.shape:
                raise TypeError
        except (TypeError, ValueError):
            out = np.vectorize(f, otypes=[DTYPE])(t)
    return np.asarray(out, dtype=DTYPE).reshape(t.shape)


def reduce(t: np.ndarray, op: str, axes: int | Iterable[int] | None = None) -> np.ndarray:
    """Reduce over ``axes`` (all axes when None), keeping the rest in order."""
    if op not in _REDUCERS:
        raise ValueError(f"unknown reduction {op!r}")
    t = np.asarray(t, dtype=DTYPE)
    if axes is None:
        axes = tuple(range(t.ndim))
    elif isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    else:
        axes = tuple(int(a) for a in axes)
    for a in axes:
        if not -t.ndim <= a < t.ndim:
            raise ShapeError(f"axis {a} out of range for shape {t.shape}")
    axes = tuple(sorted({a % t.ndim for a in axes})) if t.ndim else ()
    if t.size == 0 or any(t.shape[a] == 0 for a in axes):
        raise ShapeError("empty reduction domain")
    return np.asarray(_REDUCERS[op](t, axis=axes), dtype=DTYPE)


def broadcast_shape(sa: tuple[int, ...], sb: tuple[int, ...]) -> tuple[int, ...]:
    n = max(len(sa), len(sb))
    sa = (1,) * (n - len(sa)) + tuple(sa)
    sb = (1,) * (n - len(sb)) + tuple(sb)
    out = []
    for x, y in zip(sa, sb):
        if x != y and x != 1 and y != 1:
            raise ShapeError(f"shapes {sa} and {sb} do not broadcast")
        out.append(max(x, y))
    return tuple(out)


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Binary op with size-1 axis broadcasting; division by zero is an error."""
    if op not in _BINARY:
        raise ValueError(f"unknown elementwise op {op!r}")
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    broadcast_shape(a.shape, b.shape)
    if op == "/" and np.any(b == 0):
        raise ZeroDivisionError("elementwise division by zero")
    return _BINARY[op](a, b)
