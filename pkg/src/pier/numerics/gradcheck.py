"""Central finite-difference verification of backward rules."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, get_tape, no_grad

FD_STEP = 1e-4


def numerical_gradient(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], index: int,
                       step: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``fn`` w.r.t. ``inputs[index]``, at 64-bit."""
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    target = arrays[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn(*[Tensor(a, dtype=np.float64) for a in arrays]).item()
            flat[i] = orig - step
            down = fn(*[Tensor(a, dtype=np.float64) for a in arrays]).item()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
    return grad


def analytic_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], dtype=np.float64,
                       wrt: Sequence[int] | None = None) -> list[np.ndarray]:
    wrt = range(len(inputs)) if wrt is None else wrt
    tensors = [Tensor(a, requires_grad=(i in wrt), dtype=dtype) for i, a in enumerate(inputs)]
    get_tape().clear()
    loss = fn(*tensors)
    backward(loss)
    return [tensors[i].grad if tensors[i].grad is not None else np.zeros_like(tensors[i].data)
            for i in wrt]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 0.0) -> float:
    """Max absolute deviation scaled by the larger gradient magnitude.

    Elementwise ratios blow up on entries whose true gradient is ~0, so the
    deviation is normalised by the infinity norm of the gradient instead
    (never by less than ``floor``).
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], dtype=np.float64,
                    wrt: Sequence[int] | None = None, step: float = FD_STEP) -> float:
    """Worst relative error over ``wrt`` inputs between backward and central differences.

    The finite-difference side always runs at 64-bit on the same input values,
    so a 32-bit check measures the 32-bit backward against an exact-enough
    reference rather than against float32 cancellation noise.
    """
    wrt = list(range(len(inputs)) if wrt is None else wrt)
    inputs = [np.asarray(a, dtype=dtype) for a in inputs]
    grads = analytic_gradients(fn, inputs, dtype=dtype, wrt=wrt)
    numeric = [numerical_gradient(fn, inputs, i, step=step) for i in wrt]
    # an input whose true gradient vanishes (e.g. a key bias under softmax) is
    # judged against the overall gradient scale rather than its own ~0 norm
    overall = max(np.abs(n).max(initial=0.0) for n in numeric)
    floor = 1e-3 * overall
    return max(relative_error(g, n, floor) for g, n in zip(grads, numeric))
