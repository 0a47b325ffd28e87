"""Dense numeric primitives: real FFT pair, brute-force DFT oracle, Adam,
similarity/softmax helpers, and a central-difference gradient oracle.

Everything here is double precision and pure (no hidden state except the
caller-owned :class:`AdamState`), so the functions are safe to call
concurrently. Sequence lengths in this project never exceed a few dozen,
which is why the O(s^2) oracle is practical as a test companion for the
FFT-backed transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "rfft",
    "irfft",
    "naive_dft",
    "AdamState",
    "adam_step",
    "cosine_similarity",
    "softmax",
    "softmax_vjp",
    "finite_diff_grad",
]


def rfft(signal: np.ndarray) -> np.ndarray:
    """Forward real FFT keeping only the non-redundant half-spectrum.

    For a real input of length ``s`` the transform is conjugate symmetric,
    so the ``s//2 + 1`` leading bins (DC through Nyquist for even ``s``)
    carry the full information. Bin ``k`` equals
    ``sum_i signal[i] * exp(-2j*pi*i*k/s)``.

    Parameters
    ----------
    signal : array of shape (s,)
        Real input, ``s >= 1``.

    Returns
    -------
    complex array of shape (s//2 + 1,)
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size == 0:
        raise ValueError("rfft expects a non-empty 1-D signal")
    return np.fft.rfft(signal)


def irfft(spectrum: np.ndarray, length: int) -> np.ndarray:
    """Inverse of :func:`rfft`, reconstructing a real signal of ``length``.

    The hermitian half-spectrum must have exactly ``length//2 + 1`` bins;
    imaginary round-off is discarded after the reconstruction.
    """
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    if length < 1:
        raise ValueError("irfft output length must be >= 1")
    expected = length // 2 + 1
    if spectrum.ndim != 1 or spectrum.size != expected:
        raise ValueError(
            f"spectrum has {spectrum.size} bins, expected {expected} for length {length}"
        )
    return np.fft.irfft(spectrum, n=length)


def naive_dft(signal: np.ndarray) -> np.ndarray:
    """Full-length DFT by direct double-sum evaluation.

    This is the brute-force oracle the FFT path is tested against; it is
    intentionally independent of any FFT routine. Entry ``k`` is
    ``sum_i signal[i] * exp(-2j*pi*i*k/s)`` for ``k = 0..s-1``.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size == 0:
        raise ValueError("naive_dft expects a non-empty 1-D signal")
    s = signal.size
    i = np.arange(s)
    # W[k, i] = exp(-2j*pi*i*k/s); the matvec below is exactly the double sum.
    w = np.exp(-2j * np.pi * np.outer(i, i) / s)
    return w @ signal.astype(np.complex128)


@dataclass
class AdamState:
    """First/second-moment accumulators and step counter for one parameter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "AdamState":
        param = np.asarray(param, dtype=np.float64)
        return cls(m=np.zeros_like(param), v=np.zeros_like(param))


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state`` and returns the new
    parameter value.

    ``param`` and ``grad`` must share a shape with the state accumulators.
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError("beta1 and beta2 must lie in [0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")

    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, with sim(x, 0) defined as 0.

    The zero-vector convention keeps degenerate reasoning traces from
    dividing by zero without ever signalling termination on its own.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over a 1-D vector (max-subtraction)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


def softmax_vjp(probs: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax: given y = softmax(x) and dL/dy,
    returns dL/dx = y * (dL/dy - <y, dL/dy>)."""
    inner = np.dot(probs, grad_out)
    return probs * (grad_out - inner)


def finite_diff_grad(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    Probes ``(f(x + h*e_i) - f(x - h*e_i)) / 2h`` coordinate by coordinate
    on a copy of ``x``. Used as the independent oracle for the analytic
    gradients of the training loss.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        f_plus = f(x)
        flat_x[i] = orig - h
        f_minus = f(x)
        flat_x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise FloatingPointError(
                f"non-finite objective at probe coordinate {i}"
            )
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
