"""Dense complex linear algebra used throughout the package.

Operators are plain ``numpy`` arrays.  Validation helpers raise
``ValueError`` when a matrix violates the Hermitian or unitary tolerance.
"""

from __future__ import annotations

from functools import reduce
from itertools import product
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _square(a, name="matrix") -> np.ndarray:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def _same_square(a, b):
    a, b = _square(a), _square(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def check_hermitian(h, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``h`` as a complex array, raising if it is not Hermitian."""
    h = _square(h, "Hermitian operator")
    dev = np.max(np.abs(h - h.conj().T))
    scale = max(1.0, float(np.max(np.abs(h))))
    if dev > tol * scale:
        raise ValueError(f"operator is not Hermitian (max |A - A^dag| = {dev:.3e})")
    return h


def check_unitary(u, tol: float = UNITARY_TOL) -> np.ndarray:
    u = _square(u, "unitary")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if dev > tol:
        raise ValueError(f"operator is not unitary (max |U^dag U - I| = {dev:.3e})")
    return u


def hermitize(h) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    return 0.5 * (h + h.conj().T)


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(mats: Sequence) -> np.ndarray:
    return reduce(np.kron, [as_matrix(m) for m in mats])


def commutator(a, b) -> np.ndarray:
    a, b = _same_square(a, b)
    return a @ b - b @ a


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product ``tr(a^dag b)``."""
    a, b = _same_square(a, b)
    return complex(np.vdot(a, b))


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(as_matrix(a)))


def eigh(h):
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises ``np.linalg.LinAlgError`` if the LAPACK driver fails or the
    reconstruction residual exceeds the unitary tolerance.
    """
    h = check_hermitian(h)
    w, v = np.linalg.eigh(h)
    scale = max(1.0, float(np.max(np.abs(h))))
    err = np.max(np.abs((v * w) @ v.conj().T - h))
    if not np.all(np.isfinite(w)) or err > UNITARY_TOL * scale:
        raise np.linalg.LinAlgError(f"eigendecomposition inaccurate (residual {err:.3e})")
    return w, v


def expm_i(h, scale: float = 1.0) -> np.ndarray:
    """``exp(i * scale * h)`` for Hermitian ``h``."""
    w, v = eigh(h)
    return (v * np.exp(1j * scale * w)) @ v.conj().T


def logm_unitary(u) -> np.ndarray:
    """Principal Hermitian logarithm: ``u = exp(iH)`` with eigenphases in (-pi, pi]."""
    import scipy.linalg

    u = check_unitary(u, tol=1e-8)
    t, zv = scipy.linalg.schur(u, output="complex")
    phases = np.angle(np.diag(t))
    # branch cut: -pi is folded onto +pi
    phases = np.where(phases <= -np.pi + 1e-12, np.pi, phases)
    h = hermitize((zv * phases) @ zv.conj().T)
    return h


def gram_schmidt_extend(basis, candidate, tol: float):
    """HS-normalised residual of ``candidate`` against an orthonormal ``basis``.

    Returns ``None`` when the residual norm is at most ``tol``.  The
    projection is applied twice (classical Gram-Schmidt with
    re-orthogonalisation) to keep the extended basis orthonormal.
    """
    c = as_matrix(candidate).copy()
    if len(basis):
        stack = np.asarray(basis, dtype=complex).reshape(len(basis), -1)
        v = c.ravel()
        for _ in range(2):
            v = v - stack.T @ (stack.conj() @ v)
        c = v.reshape(c.shape)
    norm = np.linalg.norm(c)
    if norm <= tol:
        return None
    return c / norm


def pauli_word(word: str) -> np.ndarray:
    """Matrix of a Pauli string such as ``"XZ"`` (leftmost = most significant qubit)."""
    try:
        return kron_all([PAULIS[ch] for ch in word.upper()])
    except KeyError as exc:
        raise ValueError(f"invalid Pauli word {word!r}") from exc


def pauli_words(m: int, include_identity: bool = False) -> list[str]:
    words = ["".join(w) for w in product("IXYZ", repeat=m)]
    if not include_identity:
        words = words[1:]
    return words


def normalized_paulis(m: int) -> np.ndarray:
    """The ``4**m - 1`` non-identity Pauli words scaled to unit HS norm."""
    d = 2**m
    return np.array([pauli_word(w) / np.sqrt(d) for w in pauli_words(m)])


def operator_on(op, position: int, qubits: int) -> np.ndarray:
    """Embed a single-qubit operator on ``position`` of a ``qubits`` register."""
    mats = [I2] * qubits
    mats[position] = op
    return kron_all(mats)


def spectral_norm(a) -> float:
    return float(np.linalg.norm(as_matrix(a), 2))
