"""Joint eigenspace overlap ``R^2_S(O) = sum_lambda tr(Pi_lambda O)^2``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dla import JointEigenstructure, joint_eigenspaces
from .numerics import check_hermitian
from .qstate import QuantumState, mixed_probe


@dataclass(frozen=True)
class OverlapReport:
    value: float
    per_tuple: dict
    included_zero_tuple: bool


def _as_matrix(o) -> np.ndarray:
    if isinstance(o, QuantumState):
        return o.density_matrix()
    o = np.asarray(o, dtype=complex)
    if o.ndim == 1:
        return np.outer(o, o.conj())
    return check_hermitian(o)


def joint_overlap(eig: JointEigenstructure, o, include_zero_tuple: bool = True,
                  zero_tol: float = 1e-12) -> OverlapReport:
    o = _as_matrix(o)
    if o.shape != (eig.dim, eig.dim):
        raise ValueError(f"operator shape {o.shape} does not match eigenstructure dimension {eig.dim}")
    w = eig.weights(o)
    per = {}
    for t, val in zip(eig.tuples, w):
        key = tuple(float(x) for x in t)
        if not include_zero_tuple and np.all(np.abs(t) <= zero_tol):
            continue
        per[key] = float(val**2)
    return OverlapReport(float(sum(per.values())), per, include_zero_tuple)


def involutory_eigenstructure(p) -> JointEigenstructure:
    """Eigenstructure of an involution from ``Pi_pm = (I +- P)/2`` without diagonalising."""
    p = _check_involutory(p)
    d = p.shape[0]
    vectors, tuples = [], []
    for sign in (1.0, -1.0):
        proj = 0.5 * (np.eye(d) + sign * p)
        rank = int(round(np.real(np.trace(proj))))
        if rank == 0:
            continue
        # orthonormal range of the projector
        u, s, _ = np.linalg.svd(proj)
        vectors.append(u[:, :rank])
        tuples.append([sign])
    return JointEigenstructure(np.array(tuples), tuple(vectors))


def involutory_overlap_direct(p, rho) -> float:
    """``tr(Pi_+ rho)^2 + tr(Pi_- rho)^2`` straight from the two projectors."""
    p = _check_involutory(p)
    rho = _as_matrix(rho)
    tp = float(np.real(np.trace(p @ rho)))
    tr = float(np.real(np.trace(rho)))
    return ((tr + tp) / 2) ** 2 + ((tr - tp) / 2) ** 2


def _check_involutory(p) -> np.ndarray:
    p = check_hermitian(p)
    if np.linalg.norm(p @ p - np.eye(p.shape[0])) > 1e-8:
        raise ValueError("operator is not involutory (P^2 != I)")
    return p


def involutory_overlap_analytic(p, rho) -> float:
    """Closed form ``(1 + tr(P rho)^2) / 2`` for a unit-trace state."""
    p = _check_involutory(p)
    rho = _as_matrix(rho)
    tp = float(np.real(np.trace(p @ rho)))
    return 0.5 * (1.0 + tp**2)


def diagonal_probe_overlap_bound(eig: JointEigenstructure, p_mix: float) -> float:
    """Exact overlap of ``p |+><+| + (1 - p) I / 2^n`` with the given eigenspaces."""
    n = eig.dim.bit_length() - 1
    return joint_overlap(eig, mixed_probe(p_mix, n)).value


def overlap_of(h, rho, include_zero_tuple: bool = True) -> float:
    """Convenience: overlap of ``rho`` against the eigenspaces of a single Hermitian ``h``."""
    return joint_overlap(joint_eigenspaces([h]), rho, include_zero_tuple).value
