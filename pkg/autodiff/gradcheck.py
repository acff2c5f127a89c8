from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from autodiff.tensor import Tensor, backward, no_grad
from utils.errors import NonFiniteError, ShapeError

ScalarFn = Callable[[Tensor], Union[Tensor, float]]

REL_ERROR_FLOOR = 1e-3


@dataclass
class GradCheckResult:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_error: float

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def _scalar(value) -> float:
    if isinstance(value, Tensor):
        if value.size != 1:
            raise ShapeError("finite_diff_grad", [value.shape], "f debe devolver un escalar")
        return value.item()
    return float(value)


def finite_diff_grad(f: ScalarFn, point: Tensor, h: float = 1e-5) -> np.ndarray:
    """
    Gradiente por diferencias centrales: (f(x+h·e_i) − f(x−h·e_i)) / 2h.

    Devuelve un np.ndarray float64 con la forma de `point`, igual que
    Tensor.grad y analytic_grad, para compararlos sin desenvolver.
    """
    if h <= 0:
        raise ValueError("h debe ser > 0")

    x = np.array(point.data, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)

    with no_grad():
        for i in range(flat.size):
            orig = flat[i]

            flat[i] = orig + h
            f_plus = _scalar(f(Tensor(x.copy())))
            flat[i] = orig - h
            f_minus = _scalar(f(Tensor(x.copy())))
            flat[i] = orig

            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError(f"f(x[{i}] ± h)")
            gflat[i] = (f_plus - f_minus) / (2.0 * h)

    return grad


def analytic_grad(f: ScalarFn, point: Tensor) -> np.ndarray:
    leaf = Tensor(np.array(point.data, dtype=np.float64, copy=True), requires_grad=True)
    loss = f(leaf)
    if not isinstance(loss, Tensor):
        return np.zeros_like(leaf.data)
    backward(loss)
    return leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)


def relative_error(a: np.ndarray, n: np.ndarray, floor: float = REL_ERROR_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return np.abs(a - n) / denom


def check_gradient(f: ScalarFn, point: Tensor, h: float = 1e-5) -> GradCheckResult:
    """
    Compara backward contra diferencias centrales en float64.
    """
    a = analytic_grad(f, point)
    n = finite_diff_grad(f, point, h)
    err = relative_error(a, n)
    return GradCheckResult(a, n, float(err.max()) if err.size else 0.0)
