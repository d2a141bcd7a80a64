"""Activation-ensemble layer.

For every unit ``i`` (a neuron, or a channel of a conv feature map) and every
member function ``f_j`` of the activation set, the layer computes

    h_ij = (f_j(z) - min_k f_j(z_ki)) / (max_k f_j(z_ki) - min_k f_j(z_ki) + eps)
    y_i  = sum_j alpha_ij * (eta_ij * h_ij + delta_ij)

where ``k`` runs over the minibatch (and over spatial positions for conv
inputs). Rows of ``alpha`` live on the probability simplex; the optimizer
re-projects them after every update. At evaluation time the batch extrema are
replaced by exponentially averaged running extrema.

Batch min/max are treated as constants in the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import ActivationSet
from .tensor import ShapeError, check_finite

EPS = 1e-5
MOMENTUM = 0.1


@dataclass
class EnsembleParams:
    alpha: np.ndarray
    eta: np.ndarray
    delta: np.ndarray
    grad_alpha: np.ndarray = field(init=False)
    grad_eta: np.ndarray = field(init=False)
    grad_delta: np.ndarray = field(init=False)

    def __post_init__(self):
        self.zero_grad()

    @classmethod
    def init(cls, units: int, m: int, mode: str = "swapped") -> "EnsembleParams":
        """alpha = 1/m. ``swapped`` starts at eta=1, delta=0; ``paper`` at eta=0, delta=1.

        With eta=0 no gradient reaches the layer input, so ``paper`` mode
        cannot train the layers below an ensemble.
        """
        if mode == "swapped":
            eta, delta = 1.0, 0.0
        elif mode == "paper":
            eta, delta = 0.0, 1.0
        else:
            raise ValueError(f"eta_delta_init must be 'paper' or 'swapped', got {mode!r}")
        return cls(
            alpha=np.full((units, m), 1.0 / m),
            eta=np.full((units, m), eta),
            delta=np.full((units, m), delta),
        )

    def zero_grad(self) -> None:
        self.grad_alpha = np.zeros_like(self.alpha)
        self.grad_eta = np.zeros_like(self.eta)
        self.grad_delta = np.zeros_like(self.delta)


@dataclass
class RunningRange:
    min_run: np.ndarray
    max_run: np.ndarray
    initialized: bool = False
    momentum: float = MOMENTUM

    @classmethod
    def empty(cls, units: int, m: int, momentum: float = MOMENTUM) -> "RunningRange":
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")
        return cls(np.zeros((units, m)), np.zeros((units, m)), False, momentum)

    def update(self, batch_min: np.ndarray, batch_max: np.ndarray) -> None:
        if not self.initialized:
            self.min_run = batch_min.copy()
            self.max_run = batch_max.copy()
            self.initialized = True
            return
        mom = self.momentum
        self.min_run = (1.0 - mom) * self.min_run + mom * batch_min
        self.max_run = (1.0 - mom) * self.max_run + mom * batch_max


@dataclass
class EnsembleCache:
    z_shape: tuple[int, ...]
    z: np.ndarray          # [n, units], channel-last view of the input
    h: np.ndarray          # [n, units, m]
    batch_min: np.ndarray  # [units, m]
    batch_max: np.ndarray  # [units, m]


def _to_rows(z: np.ndarray) -> np.ndarray:
    """[B, U] stays as is; [B, C, H, W] becomes [B*H*W, C]."""
    if z.ndim == 2:
        return z
    if z.ndim == 4:
        b, c, hgt, wid = z.shape
        return z.transpose(0, 2, 3, 1).reshape(b * hgt * wid, c)
    raise ShapeError(f"ensemble input must be 2-D or 4-D, got shape {z.shape}")


def _from_rows(rows: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if len(shape) == 2:
        return rows
    b, c, hgt, wid = shape
    return rows.reshape(b, hgt, wid, c).transpose(0, 3, 1, 2)


class EnsembleLayer:
    """Ensemble activation over ``units`` neurons or conv channels."""

    def __init__(self, units: int, act_set: ActivationSet, eps: float = EPS,
                 momentum: float = MOMENTUM, eta_delta_init: str = "swapped"):
        self.units = int(units)
        self.act_set = act_set
        self.eps = float(eps)
        self.params = EnsembleParams.init(self.units, act_set.m, eta_delta_init)
        self.ranges = RunningRange.empty(self.units, act_set.m, momentum)
        self.cache: EnsembleCache | None = None

    @property
    def m(self) -> int:
        return self.act_set.m

    def _members(self, rows: np.ndarray) -> np.ndarray:
        return np.stack([fn.f(rows) for fn in self.act_set.members], axis=-1)

    def _check_input(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        check_finite(z, "ensemble input")
        rows = _to_rows(z)
        if rows.shape[1] != self.units:
            raise ShapeError(f"expected {self.units} units/channels, got {rows.shape[1]}")
        if rows.shape[0] < 1:
            raise ShapeError("empty batch")
        return rows

    def _combine(self, h: np.ndarray) -> np.ndarray:
        p = self.params
        return np.einsum("num,um->nu", h, p.alpha * p.eta) + (p.alpha * p.delta).sum(axis=1)

    def forward_train(self, z: np.ndarray) -> tuple[np.ndarray, EnsembleCache]:
        rows = self._check_input(z)
        f = self._members(rows)
        lo = f.min(axis=0)
        hi = f.max(axis=0)
        h = (f - lo) / (hi - lo + self.eps)
        y = self._combine(h)
        self.ranges.update(lo, hi)
        cache = EnsembleCache(tuple(z.shape), rows, h, lo, hi)
        self.cache = cache
        return _from_rows(y, z.shape), cache

    def forward_eval(self, z: np.ndarray) -> np.ndarray:
        if not self.ranges.initialized:
            raise RuntimeError("running ranges are uninitialised; train before evaluating")
        rows = self._check_input(z)
        lo, hi = self.ranges.min_run, self.ranges.max_run
        h = (self._members(rows) - lo) / (hi - lo + self.eps)
        return _from_rows(self._combine(h), z.shape)

    def forward(self, z: np.ndarray, train: bool = True) -> np.ndarray:
        if train:
            return self.forward_train(z)[0]
        return self.forward_eval(z)

    def backward(self, dy: np.ndarray, cache: EnsembleCache | None = None):
        """Return ``(dz, grad_alpha, grad_eta, grad_delta)``; also accumulates into params."""
        cache = cache if cache is not None else self.cache
        if cache is None:
            raise RuntimeError("backward called before forward_train")
        dy = np.asarray(dy, dtype=np.float64)
        if dy.shape != cache.z_shape:
            raise ShapeError(f"dy shape {dy.shape} does not match forward input {cache.z_shape}")
        p = self.params
        dy_rows = _to_rows(dy)
        dy_h = np.einsum("nu,num->um", dy_rows, cache.h)
        dy_sum = dy_rows.sum(axis=0)[:, None]
        g_alpha = dy_h * p.eta + dy_sum * p.delta
        g_eta = dy_h * p.alpha
        g_delta = dy_sum * p.alpha
        scale = p.alpha * p.eta / (cache.batch_max - cache.batch_min + self.eps)
        dfz = np.stack([fn.df(cache.z) for fn in self.act_set.members], axis=-1)
        dz_rows = dy_rows * np.einsum("num,um->nu", dfz, scale)
        p.grad_alpha += g_alpha
        p.grad_eta += g_eta
        p.grad_delta += g_delta
        return _from_rows(dz_rows, cache.z_shape), g_alpha, g_eta, g_delta

    # layer protocol shared with layers.Layer

    def trainables(self):
        p = self.params
        yield "alpha", p.alpha, p.grad_alpha
        yield "eta", p.eta, p.grad_eta
        yield "delta", p.delta, p.grad_delta

    def zero_grad(self) -> None:
        self.params.grad_alpha[...] = 0.0
        self.params.grad_eta[...] = 0.0
        self.params.grad_delta[...] = 0.0

    def state(self) -> dict[str, np.ndarray]:
        r = self.ranges
        return {
            "min_run": r.min_run,
            "max_run": r.max_run,
            "initialized": np.array([1.0 if r.initialized else 0.0]),
        }

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.ranges.min_run = arrays["min_run"].copy()
        self.ranges.max_run = arrays["max_run"].copy()
        self.ranges.initialized = bool(arrays["initialized"][0])
