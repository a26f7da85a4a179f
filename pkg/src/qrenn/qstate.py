"""Pure and mixed states of a qubit register.

Qubits are big-endian: the leftmost bit of a bitstring indexes the most
significant amplitude, and the first tensor factor is the top register.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import check_hermitian, check_unitary

NORM_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class QuantumState:
    """A validated statevector (1-D) or density matrix (2-D)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=complex)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)
        d = a.shape[0] if a.ndim else 0
        if d < 2 or d & (d - 1):
            raise ValueError(f"state dimension must be a power of two >= 2, got {d}")
        if a.ndim == 1:
            norm = float(np.vdot(a, a).real)
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"statevector not normalised (|psi|^2 = {norm:.12g})")
        elif a.ndim == 2:
            if a.shape != (d, d):
                raise ValueError(f"density matrix must be square, got {a.shape}")
            check_hermitian(a)
            tr = np.trace(a).real
            if abs(tr - 1.0) > NORM_TOL:
                raise ValueError(f"density matrix trace {tr:.12g} != 1")
            wmin = np.linalg.eigvalsh(a)[0]
            if wmin < -PSD_TOL:
                raise ValueError(f"density matrix not PSD (min eigenvalue {wmin:.3e})")
        else:
            raise ValueError("state must be a vector or a square matrix")

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def qubits(self) -> int:
        return self.dim.bit_length() - 1

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)


def from_density(rho) -> QuantumState:
    return QuantumState(np.asarray(rho, dtype=complex))


def basis_state(qubits: int, bitstring: str) -> QuantumState:
    if len(bitstring) != qubits:
        raise ValueError(f"bitstring {bitstring!r} does not have {qubits} bits")
    if set(bitstring) - {"0", "1"}:
        raise ValueError(f"bitstring {bitstring!r} contains non-binary characters")
    psi = np.zeros(2**qubits, dtype=complex)
    psi[int(bitstring, 2)] = 1.0
    return QuantumState(psi)


def plus_state(qubits: int) -> QuantumState:
    if qubits < 1:
        raise ValueError("qubits must be >= 1")
    d = 2**qubits
    return QuantumState(np.full(d, d**-0.5, dtype=complex))


def minus_state(qubits: int) -> QuantumState:
    """``|->^{(x) qubits}``."""
    if qubits < 1:
        raise ValueError("qubits must be >= 1")
    d = 2**qubits
    signs = np.array([(-1) ** bin(k).count("1") for k in range(d)], dtype=complex)
    return QuantumState(signs / np.sqrt(d))


def mixed_probe(p: float, qubits: int) -> QuantumState:
    """``p |+><+| + (1 - p) I / 2^qubits``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing weight p={p} outside [0, 1]")
    d = 2**qubits
    rho = p * np.full((d, d), 1.0 / d, dtype=complex) + (1 - p) * np.eye(d) / d
    return QuantumState(rho)


def tensor(a: QuantumState, b: QuantumState) -> QuantumState:
    if a.is_pure and b.is_pure:
        return QuantumState(np.kron(a.data, b.data))
    return QuantumState(np.kron(a.density_matrix(), b.density_matrix()))


def _check_dim(state: QuantumState, op: np.ndarray):
    if op.shape != (state.dim, state.dim):
        raise ValueError(f"operator shape {op.shape} does not match state dimension {state.dim}")


def apply_unitary(state: QuantumState, u) -> QuantumState:
    u = check_unitary(u)
    _check_dim(state, u)
    if state.is_pure:
        return QuantumState(u @ state.data)
    return QuantumState(u @ state.data @ u.conj().T)


def expectation(state: QuantumState, o) -> float:
    """``tr(rho o)`` for Hermitian ``o``."""
    o = check_hermitian(o)
    _check_dim(state, o)
    if state.is_pure:
        val = np.vdot(state.data, o @ state.data)
    else:
        val = np.einsum("ij,ji->", state.data, o)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has imaginary residue {val.imag:.3e}")
    return float(val.real)


def parse_probe(spec: str, qubits: int) -> QuantumState:
    """Probe-state shorthand used by configs.

    ``plus``, ``minus``, ``zero``, ``mixed:<p>`` or a literal bitstring.
    """
    spec = spec.strip()
    if spec == "plus":
        return plus_state(qubits)
    if spec == "minus":
        return minus_state(qubits)
    if spec == "zero":
        return basis_state(qubits, "0" * qubits)
    if spec == "maxmixed":
        return mixed_probe(0.0, qubits)
    if spec.startswith("mixed:"):
        return mixed_probe(float(spec.split(":", 1)[1]), qubits)
    if spec and set(spec) <= {"0", "1"}:
        return basis_state(qubits, spec)
    raise ValueError(f"unknown probe specification {spec!r}")
