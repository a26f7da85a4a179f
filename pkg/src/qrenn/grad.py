"""Reference derivatives of a scalar loss over a :class:`ParameterVector`.

Indices run over the flat vector ``[theta, phi]``.  Rotation angles use the
two-point shift rule for ``exp(-i theta P / 2)``; data weights use central
differences because their generator has more than two distinct gaps.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .model import ParameterVector

FD_STEP = 1e-5

LossFn = Callable[[ParameterVector], float]


def _shifted(params: ParameterVector, index: int, delta: float) -> ParameterVector:
    nt = params.theta.size
    if index < nt:
        th = params.theta.copy()
        th[index] += delta
        return ParameterVector(th, params.phi)
    ph = params.phi.copy()
    ph[index - nt] += delta
    return ParameterVector(params.theta, ph)


def _check_index(params: ParameterVector, index: int) -> None:
    size = params.theta.size + (0 if params.phi is None else params.phi.size)
    if not 0 <= index < size:
        raise IndexError(f"parameter index {index} outside [0, {size})")


def param_shift(lossfn: LossFn, params: ParameterVector, index: int) -> float:
    _check_index(params, index)
    if index >= params.theta.size:
        raise ValueError("parameter-shift applies to rotation angles only; use central_diff for phi")
    plus = lossfn(_shifted(params, index, np.pi / 2))
    minus = lossfn(_shifted(params, index, -np.pi / 2))
    return 0.5 * (plus - minus)


def central_diff(lossfn: LossFn, params: ParameterVector, index: int, step: float = FD_STEP) -> float:
    if step <= 0:
        raise ValueError("step must be positive")
    _check_index(params, index)
    plus = lossfn(_shifted(params, index, step))
    minus = lossfn(_shifted(params, index, -step))
    return (plus - minus) / (2 * step)


def full_gradient(lossfn: LossFn, params: ParameterVector) -> np.ndarray:
    nt = params.theta.size
    n_phi = 0 if params.phi is None else params.phi.size
    g = np.empty(nt + n_phi)
    for i in range(nt):
        g[i] = param_shift(lossfn, params, i)
    for j in range(n_phi):
        g[nt + j] = central_diff(lossfn, params, nt + j)
    return g
