"""Standard network layers with hand-written backward passes.

All layers share a small protocol:

* ``forward(x, train)`` returns the output and caches what backward needs,
* ``backward(dy)`` returns ``dx`` and *accumulates* parameter gradients
  (summed over the batch) into ``grads``,
* ``params`` / ``grads`` are dicts of same-shaped float64 arrays.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, matmul


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}

    def zero_grad(self) -> None:
        for k, v in self.params.items():
            if k in self.grads:
                self.grads[k][...] = 0.0
            else:
                self.grads[k] = np.zeros_like(v)

    def trainables(self):
        """Yield ``(name, value, grad)`` for every trainable array."""
        for k, v in self.params.items():
            yield k, v, self.grads[k]

    def state(self) -> dict[str, np.ndarray]:
        """Non-trainable arrays that belong in a checkpoint."""
        return {}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        pass


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.n_in, self.n_out = int(n_in), int(n_out)
        if rng is None:
            w = np.zeros((self.n_in, self.n_out))
        else:
            w = glorot_uniform(rng, (self.n_in, self.n_out), self.n_in, self.n_out)
        self.params = {"W": w, "b": np.zeros(self.n_out)}
        self.zero_grad()
        self._x = None

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"dense expects [batch, {self.n_in}], got {x.shape}")
        self._x = x
        return matmul(x, self.params["W"]) + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.grads["W"] += matmul(self._x.T, dy)
        self.grads["b"] += dy.sum(axis=0)
        return matmul(dy, self.params["W"].T)


def im2col(x: np.ndarray, k: int, pad: int) -> tuple[np.ndarray, int, int]:
    """[B, C, H, W] -> patch matrix [B*oh*ow, C*k*k] (stride 1)."""
    b, c, hgt, wid = x.shape
    oh, ow = hgt + 2 * pad - k + 1, wid + 2 * pad - k + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"kernel {k} larger than padded input {x.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((b, c, k, k, oh, ow))
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + oh, j:j + ow]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(b * oh * ow, c * k * k), oh, ow


def col2im(cols: np.ndarray, shape, k: int, pad: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: overlapping patch entries are summed."""
    b, c, hgt, wid = shape
    oh, ow = hgt + 2 * pad - k + 1, wid + 2 * pad - k + 1
    cols = cols.reshape(b, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    xp = np.zeros((b, c, hgt + 2 * pad, wid + 2 * pad))
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + oh, j:j + ow] += cols[:, :, i, j]
    return xp[:, :, pad:pad + hgt, pad:pad + wid] if pad else xp


class Conv2D(Layer):
    """Stride-1 convolution; ``padding`` is ``"same"`` (odd k) or ``"valid"``."""

    def __init__(self, in_ch: int, out_ch: int, k: int, padding: str = "same",
                 rng: np.random.Generator | None = None):
        super().__init__()
        if padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
        if padding == "same" and k % 2 == 0:
            raise ValueError("same padding needs an odd kernel size")
        self.in_ch, self.out_ch, self.k = int(in_ch), int(out_ch), int(k)
        self.padding = padding
        self.pad = self.k // 2 if padding == "same" else 0
        shape = (self.out_ch, self.in_ch, self.k, self.k)
        if rng is None:
            w = np.zeros(shape)
        else:
            w = glorot_uniform(rng, shape, self.in_ch * self.k ** 2, self.out_ch * self.k ** 2)
        self.params = {"W": w, "b": np.zeros(self.out_ch)}
        self.zero_grad()
        self._cols = None
        self._shape = None

    def output_hw(self, hgt: int, wid: int) -> tuple[int, int]:
        return hgt + 2 * self.pad - self.k + 1, wid + 2 * self.pad - self.k + 1

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"conv expects [batch, {self.in_ch}, H, W], got {x.shape}")
        cols, oh, ow = im2col(x, self.k, self.pad)
        self._cols, self._shape = cols, x.shape
        wmat = self.params["W"].reshape(self.out_ch, -1)
        out = matmul(cols, wmat.T) + self.params["b"]
        return out.reshape(x.shape[0], oh, ow, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        drows = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        self.grads["W"] += matmul(drows.T, self._cols).reshape(self.params["W"].shape)
        self.grads["b"] += drows.sum(axis=0)
        dcols = matmul(drows, self.params["W"].reshape(self.out_ch, -1))
        return col2im(dcols, self._shape, self.k, self.pad)


class MaxPool2D(Layer):
    """Non-overlapping ``size`` x ``size`` max pooling; ties go to the first
    position in row-major order. Trailing rows/cols that do not fill a window
    are dropped."""

    def __init__(self, size: int = 2):
        super().__init__()
        self.size = int(size)
        self._arg = None
        self._shape = None

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 4:
            raise ShapeError(f"pool expects [batch, C, H, W], got {x.shape}")
        s = self.size
        b, c, hgt, wid = x.shape
        oh, ow = hgt // s, wid // s
        if oh == 0 or ow == 0:
            raise ShapeError(f"pool window {s} larger than input {x.shape}")
        win = x[:, :, :oh * s, :ow * s].reshape(b, c, oh, s, ow, s)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, s * s)
        self._arg = win.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(win, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        s = self.size
        b, c, hgt, wid = self._shape
        oh, ow = hgt // s, wid // s
        win = np.zeros((b, c, oh, ow, s * s))
        np.put_along_axis(win, self._arg[..., None], dy[..., None], axis=-1)
        win = win.reshape(b, c, oh, ow, s, s).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros(self._shape)
        dx[:, :, :oh * s, :ow * s] = win.reshape(b, c, oh * s, ow * s)
        return dx


class Flatten(Layer):
    def __init__(self):
        super().__init__()
        self._shape = None

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._shape)


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0.0)


class BatchNorm(Layer):
    """Batch normalisation per unit (2-D input) or per channel (4-D input).

    Running statistics are exponential averages of the batch mean and the
    biased batch variance.
    """

    def __init__(self, n: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.n = int(n)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.params = {"gamma": np.ones(self.n), "beta": np.zeros(self.n)}
        self.running_mean = np.zeros(self.n)
        self.running_var = np.ones(self.n)
        self.zero_grad()
        self._cache = None

    @staticmethod
    def _rows(x):
        if x.ndim == 2:
            return x
        return x.transpose(0, 2, 3, 1).reshape(-1, x.shape[1])

    @staticmethod
    def _unrows(r, shape):
        if len(shape) == 2:
            return r
        b, c, hgt, wid = shape
        return r.reshape(b, hgt, wid, c).transpose(0, 3, 1, 2)

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim not in (2, 4) or x.shape[1] != self.n:
            raise ShapeError(f"batchnorm over {self.n} features got {x.shape}")
        r = self._rows(x)
        if train:
            mean = r.mean(axis=0)
            var = r.var(axis=0)
            mom = self.momentum
            self.running_mean = (1.0 - mom) * self.running_mean + mom * mean
            self.running_var = (1.0 - mom) * self.running_var + mom * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (r - mean) * inv
        if train:
            self._cache = (xhat, inv, x.shape)
        return self._unrows(xhat * self.params["gamma"] + self.params["beta"], x.shape)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv, shape = self._cache
        d = self._rows(dy)
        n = d.shape[0]
        self.grads["gamma"] += (d * xhat).sum(axis=0)
        self.grads["beta"] += d.sum(axis=0)
        dxhat = d * self.params["gamma"]
        dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return self._unrows(dx, shape)

    def state(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.running_mean = arrays["running_mean"].copy()
        self.running_var = arrays["running_var"].copy()


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} disagree")
    n, classes = logits.shape
    if np.any(labels < 0) or np.any(labels >= classes):
        raise ValueError(f"labels must lie in [0, {classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    grad = np.exp(shifted - log_z[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n
