"""Circuit assembly, loss, prediction and accuracy for the recurrent embedding network.

A ``T``-slot network on ``m`` processing qubits and ``n`` embedding qubits
applies, for each slot, a trainable block ``W(theta_t) (x) I`` followed by the
controlled data evolution ``exp(i phi_t |c><c| (x) H_t)``, and finishes with
a trailing block ``W(theta_{T+1}) (x) I``.

Rotations follow the hardware convention ``R_P(theta) = exp(-i theta P / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .numerics import check_hermitian, frobenius_norm, kron
from .qstate import QuantumState, expectation

COMMUTE_TOL = 1e-9


@dataclass(frozen=True)
class QrennArchitecture:
    m: int
    n: int
    T: int
    L: int = 3
    control: Optional[str] = None

    def __post_init__(self):
        for name in ("m", "n", "T", "L"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        c = "1" * self.m if self.control is None else str(self.control)
        if len(c) != self.m or set(c) - {"0", "1"}:
            raise ValueError(f"control {c!r} must be a bitstring of length m={self.m}")
        object.__setattr__(self, "control", c)

    @property
    def block_size(self) -> int:
        return 2 * self.m * self.L

    @property
    def n_theta(self) -> int:
        return (self.T + 1) * self.block_size

    @property
    def control_index(self) -> int:
        return int(self.control, 2)

    def theta_index(self, slot: int, mu: int) -> int:
        """Flat index of rotation ``mu`` (0-based) inside block ``slot`` (1-based)."""
        if not 1 <= slot <= self.T + 1 or not 0 <= mu < self.block_size:
            raise IndexError(f"no rotation ({slot}, {mu}) in this architecture")
        return (slot - 1) * self.block_size + mu


@dataclass(frozen=True)
class ParameterVector:
    theta: np.ndarray
    phi: Optional[np.ndarray] = None

    def __post_init__(self):
        th = np.array(self.theta, dtype=float).ravel()
        object.__setattr__(self, "theta", th)
        if self.phi is not None:
            object.__setattr__(self, "phi", np.array(self.phi, dtype=float).ravel())

    def validate(self, arch: QrennArchitecture) -> "ParameterVector":
        if self.theta.size != arch.n_theta:
            raise ValueError(f"theta has length {self.theta.size}, expected {arch.n_theta}")
        if self.phi is not None and self.phi.size != arch.T:
            raise ValueError(f"phi has length {self.phi.size}, expected {arch.T}")
        return self

    def phi_or_default(self, arch: QrennArchitecture) -> np.ndarray:
        return np.ones(arch.T) if self.phi is None else self.phi

    def as_flat(self) -> np.ndarray:
        if self.phi is None:
            return self.theta.copy()
        return np.concatenate([self.theta, self.phi])

    @classmethod
    def from_flat(cls, arch: QrennArchitecture, flat, with_phi: bool) -> "ParameterVector":
        flat = np.asarray(flat, dtype=float)
        if with_phi:
            return cls(flat[: arch.n_theta], flat[arch.n_theta :]).validate(arch)
        return cls(flat).validate(arch)

    @classmethod
    def random(cls, arch: QrennArchitecture, rng: np.random.Generator, with_phi: bool = False):
        theta = rng.uniform(0.0, 2 * np.pi, arch.n_theta)
        phi = rng.uniform(0.0, 2 * np.pi, arch.T) if with_phi else None
        return cls(theta, phi)


@dataclass(frozen=True)
class EmbeddedData:
    generators: Sequence[np.ndarray]
    _n: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        gens = tuple(check_hermitian(h) for h in self.generators)
        if not gens:
            raise ValueError("embedded data needs at least one generator")
        d = gens[0].shape[0]
        if d < 2 or d & (d - 1) or any(h.shape != (d, d) for h in gens):
            raise ValueError("all generators must share one power-of-two dimension")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "_n", d.bit_length() - 1)

    @property
    def n(self) -> int:
        return self._n

    @property
    def T(self) -> int:
        return len(self.generators)

    @classmethod
    def repeated(cls, h, T: int) -> "EmbeddedData":
        return cls([h] * T)

    def check_commuting(self, tol: float = COMMUTE_TOL) -> "EmbeddedData":
        gens = self.generators
        for s in range(len(gens)):
            for t in range(s + 1, len(gens)):
                a, b = gens[s], gens[t]
                if a is b:
                    continue
                c = frobenius_norm(a @ b - b @ a)
                if c > tol * frobenius_norm(a) * frobenius_norm(b):
                    raise ValueError(f"generators {s} and {t} do not commute (|[H_s,H_t]| = {c:.3e})")
        return self

    def is_commuting(self, tol: float = COMMUTE_TOL) -> bool:
        try:
            self.check_commuting(tol)
        except ValueError:
            return False
        return True


# -- gates ------------------------------------------------------------------

def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def cz_chain_diag(m: int) -> np.ndarray:
    """Diagonal of CZ on pairs (1,2), ..., (m-1, m)."""
    idx = np.arange(2**m)
    bits = (idx[:, None] >> (m - 1 - np.arange(m))) & 1
    parity = np.sum(bits[:, :-1] & bits[:, 1:], axis=1) if m > 1 else np.zeros(2**m, int)
    return (-1.0) ** parity


def _batched_kron(mats: np.ndarray) -> np.ndarray:
    """Kronecker product along axis 1 of an array shaped ``(S, m, 2, 2)``."""
    out = mats[:, 0]
    for q in range(1, mats.shape[1]):
        s = out.shape[0]
        out = np.einsum("sab,scd->sacbd", out, mats[:, q]).reshape(s, out.shape[1] * 2, -1)
    return out


def processing_blocks(m: int, L: int, theta_blocks) -> np.ndarray:
    """Vectorised :func:`processing_block` over leading axis: ``(S, 2mL) -> (S, 2^m, 2^m)``."""
    th = np.asarray(theta_blocks, dtype=float)
    if th.ndim != 2 or th.shape[1] != 2 * m * L:
        raise ValueError(f"theta blocks must have shape (S, {2 * m * L}), got {th.shape}")
    s = th.shape[0]
    d = 2**m
    cz = cz_chain_diag(m)
    idx = np.arange(d)
    # bit of qubit q in basis index: 0 -> phase e^{-i theta/2}, 1 -> e^{+i theta/2}
    zsign = 1 - 2 * ((idx[:, None] >> (m - 1 - np.arange(m))) & 1)  # (d, m)
    u = np.broadcast_to(np.eye(d, dtype=complex), (s, d, d)).copy()
    for layer in range(L):
        a = th[:, layer * 2 * m : layer * 2 * m + m]
        b = th[:, layer * 2 * m + m : (layer + 1) * 2 * m]
        c, sn = np.cos(a / 2), np.sin(a / 2)
        ys = np.empty((s, m, 2, 2), dtype=complex)
        ys[..., 0, 0] = c
        ys[..., 0, 1] = -sn
        ys[..., 1, 0] = sn
        ys[..., 1, 1] = c
        zdiag = np.exp(-0.5j * (b @ zsign.T))  # (s, d)
        u = _batched_kron(ys) @ u
        u = (zdiag * cz)[:, :, None] * u
    return u


def processing_block(m: int, L: int, theta_block) -> np.ndarray:
    """``W(theta)`` on the processing register: ``L`` layers of R_Y, R_Z and a CZ chain."""
    th = np.asarray(theta_block, dtype=float).ravel()
    if th.size != 2 * m * L:
        raise ValueError(f"theta block has length {th.size}, expected {2 * m * L}")
    return processing_blocks(m, L, th[None, :])[0]


def control_projector(m: int, control: str) -> np.ndarray:
    if len(control) != m:
        raise ValueError(f"control {control!r} must have length m={m}")
    p = np.zeros((2**m, 2**m), dtype=complex)
    k = int(control, 2)
    p[k, k] = 1.0
    return p


def control_embed_generator(h, m: int, control: Optional[str] = None) -> np.ndarray:
    """``|c><c| (x) h``; its exponential is the controlled data evolution."""
    control = "1" * m if control is None else control
    return kron(control_projector(m, control), check_hermitian(h))


def embedding_unitary(h, m: int, control: str, phi: float = 1.0) -> np.ndarray:
    """Dense ``exp(i phi |c><c| (x) h)``."""
    from .numerics import expm_i

    dn = h.shape[0]
    u = np.eye(2**m * dn, dtype=complex)
    k = int(control, 2)
    u[k * dn : (k + 1) * dn, k * dn : (k + 1) * dn] = expm_i(h, phi)
    return u


# -- dense forward ----------------------------------------------------------

def _apply_processing(rho: np.ndarray, w: np.ndarray, m: int, pure: bool) -> np.ndarray:
    dm = 2**m
    if pure:
        return (w @ rho.reshape(dm, -1)).reshape(-1)
    d = rho.shape[0]
    dn = d // dm
    r = rho.reshape(dm, dn, dm, dn)
    r = np.einsum("ab,bjcl->ajcl", w, r)
    r = np.einsum("ajcl,dc->ajdl", r, w.conj())
    return r.reshape(d, d)


def _apply_controlled(rho, v: np.ndarray, k: int, dn: int, pure: bool):
    """Apply ``I + |k><k| (x) (v - I)`` to a state."""
    sl = slice(k * dn, (k + 1) * dn)
    out = rho.copy()
    if pure:
        out[sl] = v @ rho[sl]
        return out
    out[sl, :] = v @ out[sl, :]
    out[:, sl] = out[:, sl] @ v.conj().T
    return out


def forward(
    arch: QrennArchitecture,
    params: ParameterVector,
    data: EmbeddedData,
    rho0: QuantumState,
    embedding_gates: Optional[Sequence[np.ndarray]] = None,
) -> QuantumState:
    """Output state of the network.

    ``embedding_gates`` optionally replaces each slot's controlled evolution
    with an explicit ``(m+n)``-qubit unitary (used for crosstalk noise).
    """
    from .numerics import expm_i

    params.validate(arch)
    if data.T != arch.T:
        raise ValueError(f"data has {data.T} generators, architecture expects T={arch.T}")
    if data.n != arch.n:
        raise ValueError(f"data acts on {data.n} qubits, architecture expects n={arch.n}")
    if rho0.qubits != arch.m + arch.n:
        raise ValueError(f"initial state has {rho0.qubits} qubits, expected {arch.m + arch.n}")
    if embedding_gates is not None and len(embedding_gates) != arch.T:
        raise ValueError("embedding_gates must provide one unitary per slot")

    blocks = processing_blocks(arch.m, arch.L, params.theta.reshape(arch.T + 1, -1))
    phi = params.phi_or_default(arch)
    pure = rho0.is_pure
    rho = np.array(rho0.data)
    dn = 2**arch.n
    cache = {}
    for t in range(arch.T):
        rho = _apply_processing(rho, blocks[t], arch.m, pure)
        if embedding_gates is not None:
            g = embedding_gates[t]
            rho = g @ rho if pure else g @ rho @ g.conj().T
            continue
        h = data.generators[t]
        key = (id(h), phi[t])
        if key not in cache:
            cache[key] = expm_i(h, phi[t])
        rho = _apply_controlled(rho, cache[key], arch.control_index, dn, pure)
    rho = _apply_processing(rho, blocks[arch.T], arch.m, pure)
    if not pure:
        rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(rho)


# -- losses and prediction --------------------------------------------------

def parity_observable(m: int) -> np.ndarray:
    """Diagonal of ``Z^{(x) m}``."""
    idx = np.arange(2**m)
    ones = np.array([bin(k).count("1") for k in idx])
    return (1.0 - 2.0 * (ones % 2)).astype(float)


def trace_loss(state: QuantumState, povm_element) -> float:
    val = expectation(state, povm_element)
    if val < -1e-10 or val > 1 + 1e-10:
        raise ValueError(f"POVM expectation {val} outside [0, 1]")
    return min(1.0, max(0.0, val))


def total_loss(arch, params, batch, rho0, forward_fn=forward) -> float:
    """``1 - mean_q tr(U rho0 U^dag M_{y_q})`` over ``(data, label, M)`` triples."""
    batch = list(batch)
    if not batch:
        raise ValueError("total_loss needs a non-empty batch")
    scores = [trace_loss(forward_fn(arch, params, d, rho0), mop) for d, _, mop in batch]
    return 1.0 - float(np.mean(scores))


def decision(fhat: float) -> int:
    return 0 if fhat < 0 else 1


def predict(arch, params, data: EmbeddedData, rho0: QuantumState) -> int:
    out = forward(arch, params, data, rho0)
    z = np.kron(np.diag(parity_observable(arch.m)), np.eye(2**arch.n))
    return decision(expectation(out, z))


def accuracy(predicted, truth) -> float:
    p = np.asarray(predicted).ravel()
    t = np.asarray(truth).ravel()
    if p.size == 0 or p.size != t.size:
        raise ValueError("accuracy needs two equal-length non-empty label sequences")
    return float(1.0 - np.mean(np.abs(p - t)))
