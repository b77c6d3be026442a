"""Hot numeric kernels for the regression heads.

One source of truth per kernel: plain functions written in nopython-safe
numpy, compiled with numba when available. The pure-numpy path is selected
with NEWSSIM_BACKEND=numpy (or automatically when numba is absent); both
paths execute the identical operation sequence, so they agree to the last
ulp everywhere except the scalar exp, where libm and numpy's SIMD exp can
differ by one ulp.
"""

from __future__ import annotations

import os

import numpy as np

ENV_BACKEND = "NEWSSIM_BACKEND"


def _forward_core(W1, b1, W2, b2, W3, b3, x):
    a1 = W1 @ x + b1
    h1 = np.maximum(a1, 0.0)
    a2 = W2 @ h1 + b2
    h2 = np.maximum(a2, 0.0)
    z = (W3 @ h2)[0] + b3[0]
    return 1.0 / (1.0 + np.exp(-z))


def _backward_core(W1, b1, W2, b2, W3, b3, x, target):
    a1 = W1 @ x + b1
    h1 = np.maximum(a1, 0.0)
    a2 = W2 @ h1 + b2
    h2 = np.maximum(a2, 0.0)
    z = (W3 @ h2)[0] + b3[0]
    y = 1.0 / (1.0 + np.exp(-z))

    # d/dz of (sigmoid(z) - target)^2; relu subgradient at 0 is 0.
    dz = 2.0 * (y - target) * y * (1.0 - y)
    gb3 = np.empty(1)
    gb3[0] = dz
    gW3 = dz * h2.reshape(1, h2.shape[0])
    dh2 = dz * W3[0]
    da2 = np.where(a2 > 0.0, dh2, 0.0)
    gW2 = np.outer(da2, h1)
    dh1 = W2.T @ da2
    da1 = np.where(a1 > 0.0, dh1, 0.0)
    gW1 = np.outer(da1, x)
    return gW1, da1, gW2, da2, gW3, gb3


def _train_epochs_core(W1, b1, W2, b2, W3, b3, X, Y, order, lr, momentum):
    """Per-example SGD+momentum over pre-shuffled epoch orders.

    order is (epochs, n) int64; parameters update in place. Returns the
    per-epoch mean of the pre-update squared errors.
    """
    vW1 = np.zeros_like(W1)
    vb1 = np.zeros_like(b1)
    vW2 = np.zeros_like(W2)
    vb2 = np.zeros_like(b2)
    vW3 = np.zeros_like(W3)
    vb3 = np.zeros_like(b3)

    epochs = order.shape[0]
    n = order.shape[1]
    history = np.zeros(epochs)
    for e in range(epochs):
        sq_sum = 0.0
        for k in range(n):
            i = order[e, k]
            x = X[i]
            a1 = W1 @ x + b1
            h1 = np.maximum(a1, 0.0)
            a2 = W2 @ h1 + b2
            h2 = np.maximum(a2, 0.0)
            z = (W3 @ h2)[0] + b3[0]
            y = 1.0 / (1.0 + np.exp(-z))
            residual = y - Y[i]
            sq_sum += residual * residual

            dz = 2.0 * residual * y * (1.0 - y)
            gb3 = np.empty(1)
            gb3[0] = dz
            gW3 = dz * h2.reshape(1, h2.shape[0])
            dh2 = dz * W3[0]
            da2 = np.where(a2 > 0.0, dh2, 0.0)
            gW2 = np.outer(da2, h1)
            dh1 = W2.T @ da2
            da1 = np.where(a1 > 0.0, dh1, 0.0)
            gW1 = np.outer(da1, x)

            vW1 *= momentum
            vW1 += gW1
            W1 -= lr * vW1
            vb1 *= momentum
            vb1 += da1
            b1 -= lr * vb1
            vW2 *= momentum
            vW2 += gW2
            W2 -= lr * vW2
            vb2 *= momentum
            vb2 += da2
            b2 -= lr * vb2
            vW3 *= momentum
            vW3 += gW3
            W3 -= lr * vW3
            vb3 *= momentum
            vb3 += gb3
            b3 -= lr * vb3
        history[e] = sq_sum / n
    return history


_NUMPY_KERNELS = {
    "forward": _forward_core,
    "backward": _backward_core,
    "train_epochs": _train_epochs_core,
}


def _compile_numba():
    from numba import njit

    return {
        "forward": njit(cache=True)(_forward_core),
        "backward": njit(cache=True)(_backward_core),
        "train_epochs": njit(cache=True)(_train_epochs_core),
    }


def _select_backend() -> tuple[str, dict]:
    requested = os.environ.get(ENV_BACKEND, "auto").lower()
    if requested not in ("auto", "numba", "numpy"):
        raise ValueError(f"{ENV_BACKEND} must be auto, numba, or numpy; got {requested!r}")
    if requested == "numpy":
        return "numpy", _NUMPY_KERNELS
    try:
        return "numba", _compile_numba()
    except ImportError:
        if requested == "numba":
            raise
        return "numpy", _NUMPY_KERNELS


_BACKEND_NAME, _KERNELS = _select_backend()


def backend_name() -> str:
    return _BACKEND_NAME


def get_kernels(backend: str | None = None) -> dict:
    """Kernels for an explicit backend, or the environment-selected one."""
    if backend is None:
        return _KERNELS
    if backend == "numpy":
        return _NUMPY_KERNELS
    if backend == "numba":
        return _compile_numba()
    raise ValueError(f"unknown backend {backend!r}")
