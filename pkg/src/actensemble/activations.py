"""Scalar activation functions and the three built-in ensemble sets.

Every function is vectorised over numpy arrays and carries its exact
derivative. The order of members within a set is significant: column ``j`` of
an ensemble layer's alpha matrix refers to ``members[j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class ActivationFn:
    id: str
    f: Callable[[Array], Array]
    df: Callable[[Array], Array]
    # +1 nondecreasing, -1 nonincreasing
    monotone: int = 1
    # inputs where the derivative jumps
    kinks: tuple[float, ...] = ()

    def __call__(self, z):
        return self.f(np.asarray(z, dtype=np.float64))


@dataclass(frozen=True)
class ActivationSet:
    id: str
    members: tuple[ActivationFn, ...]

    @property
    def m(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> list[str]:
        return [fn.id for fn in self.members]

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _dsigmoid(z):
    s = _sigmoid(z)
    return s * (1.0 - s)


def _tanh(z):
    return np.tanh(z)


def _dtanh(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _softplus(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.log1p(np.exp(np.clip(z, -30.0, 30.0)))
    out = np.where(z > 30.0, z, out)
    return np.where(z < -30.0, np.exp(np.minimum(z, -30.0)), out)


def _relu(z):
    return np.maximum(0.0, z)


def _drelu(z):
    return (np.asarray(z) > 0).astype(np.float64)


def _invabs(z):
    return z / (1.0 + np.abs(z))


def _dinvabs(z):
    d = 1.0 + np.abs(z)
    return 1.0 / (d * d)


def _explin(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, z, np.expm1(np.minimum(z, 0.0)))


def _dexplin(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1.0, np.exp(np.minimum(z, 0.0)))


def _mirror_neg(z):
    return np.maximum(0.0, -np.asarray(z, dtype=np.float64))


def _dmirror_neg(z):
    return -(np.asarray(z) < 0).astype(np.float64)


def shifted_relu(b: float) -> ActivationFn:
    """``max(0, z + b)``; derivative 0 at the kink ``z == -b``."""
    b = float(b)
    name = "relu_b0.0" if b == 0 else f"relu_b{b:+.1f}"
    return ActivationFn(
        id=name,
        f=lambda z: np.maximum(0.0, np.asarray(z, dtype=np.float64) + b),
        df=lambda z: (np.asarray(z, dtype=np.float64) + b > 0).astype(np.float64),
        kinks=(-b,),
    )


SIGMOID = ActivationFn("sigmoid", _sigmoid, _dsigmoid)
TANH = ActivationFn("tanh", _tanh, _dtanh)
SOFTPLUS = ActivationFn("softplus", _softplus, _sigmoid)
RELU = ActivationFn("relu", _relu, _drelu, kinks=(0.0,))
INVABS = ActivationFn("invabs", _invabs, _dinvabs)
EXPLIN = ActivationFn("explin", _explin, _dexplin)
MIRROR_NEG = ActivationFn("mirror_neg", _mirror_neg, _dmirror_neg, monotone=-1, kinks=(0.0,))
MIRROR_POS = ActivationFn("mirror_pos", _relu, _drelu, kinks=(0.0,))

RELU_SHIFTS = (-1.0, -0.5, 0.0, 0.5, 1.0)

_SETS = {
    "set1": (SIGMOID, TANH, SOFTPLUS, RELU, INVABS, EXPLIN),
    "set2": tuple(shifted_relu(b) for b in RELU_SHIFTS),
    "set3": (MIRROR_NEG, MIRROR_POS),
}

REGISTRY: dict[str, ActivationFn] = {
    fn.id: fn for members in _SETS.values() for fn in members
}


def builtin_set(set_id: str) -> ActivationSet:
    try:
        return ActivationSet(set_id, _SETS[set_id])
    except KeyError:
        raise ValueError(f"unknown activation set {set_id!r}; expected one of {sorted(_SETS)}") from None


def get(fn_id: str) -> ActivationFn:
    try:
        return REGISTRY[fn_id]
    except KeyError:
        raise ValueError(f"unknown activation {fn_id!r}") from None
