"""AdaDelta, plus the simplex-projected variant used for ensemble alpha rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import project_rows

RHO = 0.95
EPS = 1e-6
LR = 1.0


@dataclass
class AdaDeltaState:
    sq_grad: np.ndarray    # E[g^2]
    sq_delta: np.ndarray   # E[dx^2]
    rho: float = RHO
    eps: float = EPS
    lr: float = LR

    @classmethod
    def zeros_like(cls, param: np.ndarray, rho: float = RHO, eps: float = EPS,
                   lr: float = LR) -> "AdaDeltaState":
        return cls(np.zeros_like(param), np.zeros_like(param), rho, eps, lr)


def step(param: np.ndarray, grad: np.ndarray, state: AdaDeltaState) -> np.ndarray:
    """One in-place AdaDelta update of ``param``; returns ``param``."""
    if param.shape != grad.shape or param.shape != state.sq_grad.shape:
        raise ValueError(f"shape mismatch: param {param.shape}, grad {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    rho, eps = state.rho, state.eps
    state.sq_grad *= rho
    state.sq_grad += (1.0 - rho) * grad * grad
    delta = -state.lr * np.sqrt(state.sq_delta + eps) / np.sqrt(state.sq_grad + eps) * grad
    state.sq_delta *= rho
    state.sq_delta += (1.0 - rho) * delta * delta
    param += delta
    return param


def step_alpha(alpha: np.ndarray, grad: np.ndarray, state: AdaDeltaState) -> np.ndarray:
    """AdaDelta on a 1-D alpha row or a [units, m] alpha matrix, then project each row."""
    step(alpha, grad, state)
    if alpha.ndim == 1:
        alpha[...] = project_rows(alpha[None, :])[0]
    else:
        alpha[...] = project_rows(alpha)
    return alpha


class AdaDelta:
    """Owns one :class:`AdaDeltaState` per named parameter."""

    def __init__(self, rho: float = RHO, eps: float = EPS, lr: float = LR):
        if not 0.0 < rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if eps <= 0 or lr <= 0:
            raise ValueError("eps and lr must be positive")
        self.rho, self.eps, self.lr = float(rho), float(eps), float(lr)
        self.states: dict[str, AdaDeltaState] = {}

    def _state(self, name: str, param: np.ndarray) -> AdaDeltaState:
        st = self.states.get(name)
        if st is None:
            st = AdaDeltaState.zeros_like(param, self.rho, self.eps, self.lr)
            self.states[name] = st
        return st

    def update(self, name: str, param: np.ndarray, grad: np.ndarray, simplex: bool = False) -> None:
        st = self._state(name, param)
        if simplex:
            step_alpha(param, grad, st)
        else:
            step(param, grad, st)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in sorted(self.states):
            out[f"{name}/sq_grad"] = self.states[name].sq_grad
            out[f"{name}/sq_delta"] = self.states[name].sq_delta
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.states = {}
        for key, arr in arrays.items():
            name, kind = key.rsplit("/", 1)
            st = self.states.setdefault(
                name, AdaDeltaState(None, None, self.rho, self.eps, self.lr))
            setattr(st, kind, arr.copy())
