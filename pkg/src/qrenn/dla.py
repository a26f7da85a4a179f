"""Dynamical Lie algebra analysis for commuting data generators.

Builds the Lie closure of the circuit generators, splits it into a center and
one ``su(2^m)`` ideal per joint eigenspace of the data, and evaluates the
closed-form gradient variances that follow from that split.

Rotation-angle variances are expressed in terms of the generator ``Omega``
of ``exp(i theta Omega)``.  Under the hardware convention
``R_P(theta) = exp(-i theta P / 2)`` one has ``Omega = -P / 2``, which is a
factor ``1/4`` in ``||Omega||_F^2`` compared with ``Omega = P``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .numerics import (
    check_hermitian,
    commutator,
    frobenius_norm,
    gram_schmidt_extend,
    normalized_paulis,
    operator_on,
    pauli_word,
)
from .qstate import QuantumState

CLOSURE_TOL = 1e-7
SPAN_TOL = 1e-8
GROUP_TOL = 1e-8


# -- data structures --------------------------------------------------------

@dataclass(frozen=True)
class LieBasis:
    dim_ambient: int
    elements: np.ndarray  # (k, d, d), HS-orthonormal, skew-Hermitian

    @property
    def dim(self) -> int:
        return len(self.elements)

    def flat(self) -> np.ndarray:
        return self.elements.reshape(self.dim, -1)

    def coefficients(self, a) -> np.ndarray:
        return self.flat().conj() @ np.asarray(a, dtype=complex).ravel()

    def residual(self, a) -> float:
        a = np.asarray(a, dtype=complex)
        if self.dim == 0:
            return frobenius_norm(a)
        r = a.ravel() - self.flat().T @ self.coefficients(a)
        return float(np.linalg.norm(r))

    def validate(self, tol: float = 1e-9) -> "LieBasis":
        e = self.elements
        if self.dim:
            skew = np.max(np.abs(e + np.conj(np.swapaxes(e, 1, 2))))
            if skew > 1e-10:
                raise ValueError(f"basis element not skew-Hermitian ({skew:.3e})")
            g = self.flat().conj() @ self.flat().T
            if np.max(np.abs(g - np.eye(self.dim))) > tol:
                raise ValueError("basis is not HS-orthonormal")
        return self


@dataclass(frozen=True)
class JointEigenstructure:
    """Joint eigenspaces of a commuting Hermitian set.

    ``vectors[j]`` holds an orthonormal basis (as columns) of the ``j``-th
    joint eigenspace, labelled by ``tuples[j]``.  Projectors are formed on
    demand to keep memory at ``O(4^n)``.
    """

    tuples: np.ndarray  # (r, T)
    vectors: tuple  # r arrays of shape (2^n, chi_j)

    @property
    def r(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors[0].shape[0]

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([v.shape[1] for v in self.vectors])

    def projection(self, j: int) -> np.ndarray:
        v = self.vectors[j]
        return v @ v.conj().T

    @property
    def projections(self) -> list:
        return [self.projection(j) for j in range(self.r)]

    def weights(self, rho) -> np.ndarray:
        """``tr(Pi_j rho)`` for every eigenspace; ``rho`` is a state, vector or matrix."""
        rho = rho.data if isinstance(rho, QuantumState) else np.asarray(rho, dtype=complex)
        v = np.concatenate(self.vectors, axis=1)
        if rho.ndim == 1:
            col = np.abs(v.conj().T @ rho) ** 2
        else:
            col = np.real(np.einsum("ik,ik->k", v.conj(), rho @ v))
        starts = np.cumsum([0] + [b.shape[1] for b in self.vectors[:-1]])
        out = np.add.reduceat(col, starts)
        return out


@dataclass(frozen=True)
class DlaDecomposition:
    closure: LieBasis
    center: LieBasis
    ideals: tuple
    center_claim: str = "other"
    eig: Optional[JointEigenstructure] = field(default=None, repr=False)

    @property
    def r(self) -> int:
        return len(self.ideals)

    @property
    def ideal_dims(self) -> list:
        return [i.dim for i in self.ideals]

    @property
    def ideal_dim_total(self) -> int:
        return int(sum(self.ideal_dims))


# -- closure ----------------------------------------------------------------

def _check_skew(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("generators must be square matrices")
    if np.max(np.abs(a + a.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(a))):
        raise ValueError("generator is not skew-Hermitian")
    return a


def lie_closure(generators, tol: float = CLOSURE_TOL, max_dim: Optional[int] = None) -> LieBasis:
    """Orthonormal basis of the real Lie algebra generated by skew-Hermitian matrices."""
    gens = [_check_skew(g) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    d = gens[0].shape[0]
    if any(g.shape != (d, d) for g in gens):
        raise ValueError("generators must share one dimension")
    if max_dim is None:
        max_dim = d * d

    basis: list = []

    def add(candidate, scale: float = 1.0) -> bool:
        nrm = frobenius_norm(candidate)
        # round-off commutators must not be rescaled into spurious directions
        if nrm <= tol * scale:
            return False
        new = gram_schmidt_extend(basis, candidate / nrm, tol)
        if new is None:
            return False
        # skew-Hermitian elements of the real span stay skew after projection
        new = 0.5 * (new - new.conj().T)
        new = new / frobenius_norm(new)
        if len(basis) >= max_dim:
            raise RuntimeError(
                f"Lie closure exceeded max_dim={max_dim}; inputs are likely mis-modelled"
            )
        basis.append(new)
        return True

    norms = [frobenius_norm(g) for g in gens]
    for g in gens:
        add(g, 0.0)
    frontier = 0
    while frontier < len(basis):
        b = basis[frontier]
        frontier += 1
        for g, gn in zip(gens, norms):
            add(commutator(b, g), gn)
    return LieBasis(d, np.array(basis)).validate()


def processing_generators(m: int) -> list:
    """Hermitian generators of the trainable template: Y_q, Z_q and Z_q Z_{q+1}."""
    out = []
    for q in range(m):
        out.append(operator_on(pauli_word("Y"), q, m))
        out.append(operator_on(pauli_word("Z"), q, m))
    for q in range(m - 1):
        out.append(operator_on(pauli_word("Z"), q, m) @ operator_on(pauli_word("Z"), q + 1, m))
    return out


def qrenn_generators(m: int, data_generators: Sequence, control: Optional[str] = None,
                     processing: Optional[Sequence] = None) -> list:
    """Skew-Hermitian circuit generators ``i P (x) I`` and ``i |c><c| (x) H_t``."""
    from .model import control_embed_generator

    hs = [check_hermitian(h) for h in data_generators]
    dn = hs[0].shape[0]
    procs = processing_generators(m) if processing is None else processing
    out = [1j * np.kron(p, np.eye(dn)) for p in procs]
    seen = []
    for h in hs:
        if any(h is s or np.array_equal(h, s) for s in seen):
            continue
        seen.append(h)
        out.append(1j * control_embed_generator(h, m, control))
    return out


# -- joint eigenspaces ------------------------------------------------------

def joint_eigenspaces(ops: Sequence, tol: float = GROUP_TOL, rng=None, attempts: int = 5,
                      commute_tol: float = 1e-9) -> JointEigenstructure:
    """Simultaneous eigenspaces of commuting Hermitian matrices.

    Diagonalises a random ``N(0,1)`` combination, reads each operator's
    eigenvalue as a Rayleigh quotient, and groups eigenvectors whose tuples
    agree within ``tol``.  The draw is repeated up to ``attempts`` times if
    some operator is not scalar on a resulting block.
    """
    ops = [check_hermitian(h) for h in ops]
    if not ops:
        raise ValueError("need at least one operator")
    d = ops[0].shape[0]
    if any(h.shape != (d, d) for h in ops):
        raise ValueError("operators must share one dimension")
    uniq = []
    for h in ops:
        if not any(h is u or np.array_equal(h, u) for u in uniq):
            uniq.append(h)
    for s in range(len(uniq)):
        for t in range(s + 1, len(uniq)):
            a, b = uniq[s], uniq[t]
            c = frobenius_norm(a @ b - b @ a)
            if c > commute_tol * max(frobenius_norm(a) * frobenius_norm(b), 1e-300):
                raise ValueError(f"operators {s} and {t} do not commute (|[A,B]| = {c:.3e})")
    index = [next(i for i, u in enumerate(uniq) if h is u or np.array_equal(h, u)) for h in ops]

    if rng is None:
        rng = np.random.default_rng(0x5EED)
    elif not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    scale = max(1.0, max(np.max(np.abs(h)) for h in uniq))
    last_err = None
    for _ in range(attempts):
        if len(uniq) == 1:
            combo = uniq[0]
        else:
            coeffs = rng.standard_normal(len(uniq))
            combo = sum(c * h for c, h in zip(coeffs, uniq))
        _, vecs = np.linalg.eigh(combo)
        # Rayleigh-quotient polish of every operator's eigenvalue
        lam = np.stack(
            [np.real(np.sum(vecs.conj() * (h @ vecs), axis=0)) for h in uniq], axis=1
        )
        groups = _group_tuples(lam, tol)
        col_val = np.empty_like(lam)
        for members in groups:
            col_val[members] = lam[members].mean(axis=0)
        resid = max(np.max(np.abs(h @ vecs - vecs * col_val[:, i])) for i, h in enumerate(uniq))
        if resid > 1e-7 * scale:
            last_err = ValueError(f"operator not scalar on a joint block (residual {resid:.2e})")
            continue
        vectors = [vecs[:, members] for members in groups]
        tuples = np.array([col_val[members[0]][index] for members in groups])
        order = sorted(range(len(tuples)), key=lambda j: tuple(-tuples[j]))
        return JointEigenstructure(tuples[order], tuple(vectors[j] for j in order))
    raise ValueError(f"joint eigenspace validation failed after {attempts} draws: {last_err}")


def _group_tuples(lam: np.ndarray, tol: float, idx=None, col: int = 0) -> list:
    """Cluster rows of ``lam`` column by column; gaps larger than ``tol`` split clusters."""
    if idx is None:
        idx = np.arange(lam.shape[0])
    if col == lam.shape[1]:
        return [list(idx)]
    vals = lam[idx, col]
    order = np.argsort(vals, kind="stable")
    idx, vals = idx[order], vals[order]
    cuts = np.nonzero(np.diff(vals) > tol)[0] + 1
    groups = []
    for part in np.split(idx, cuts):
        groups.extend(_group_tuples(lam, tol, part, col + 1))
    return groups


# -- decomposition ----------------------------------------------------------

def ideal_basis(m: int, projector) -> LieBasis:
    """``i P_q (x) Pi / sqrt(chi)`` over unit-norm Pauli words ``P_q``."""
    pi = np.asarray(projector, dtype=complex)
    chi = np.real(np.trace(pi))
    els = np.array([1j * np.kron(p, pi) / np.sqrt(chi) for p in normalized_paulis(m)])
    return LieBasis(els.shape[1], els)


def decompose(closure: LieBasis, m: int, eig: JointEigenstructure,
              data_generators: Optional[Sequence] = None) -> DlaDecomposition:
    """Split a closure into explicit ``su(2^m)`` ideals and the remaining center."""
    if closure.dim_ambient != 2**m * eig.dim:
        raise ValueError("closure dimension does not match m and the eigenstructure")
    ideals = []
    for j in range(eig.r):
        ib = ideal_basis(m, eig.projection(j))
        for k, e in enumerate(ib.elements):
            res = closure.residual(e)
            if res > SPAN_TOL:
                raise ValueError(
                    f"ideal element {k} of eigenspace {j} is outside the closure (residual {res:.3e})"
                )
        ideals.append(ib)

    ideal_stack = np.concatenate([i.elements for i in ideals]) if ideals else np.zeros((0,))
    center_basis: list = list(ideal_stack)
    n_ideal = len(center_basis)
    for e in closure.elements:
        new = gram_schmidt_extend(center_basis, e, CLOSURE_TOL)
        if new is not None:
            new = 0.5 * (new - new.conj().T)
            center_basis.append(new / frobenius_norm(new))
    center = LieBasis(closure.dim_ambient, np.array(center_basis[n_ideal:]).reshape(
        -1, closure.dim_ambient, closure.dim_ambient))
    for c in center.elements:
        for e in closure.elements:
            if frobenius_norm(commutator(c, e)) > SPAN_TOL * 10:
                raise ValueError("extracted center does not commute with the closure")
    claim = _center_claim(center, m, eig, data_generators)
    return DlaDecomposition(closure, center, tuple(ideals), claim, eig)


def _center_claim(center: LieBasis, m: int, eig: JointEigenstructure, data_generators) -> str:
    dm = 2**m
    if data_generators is not None:
        hs = []
        for h in data_generators:
            if not any(np.array_equal(h, s) for s in hs):
                hs.append(np.asarray(h))
        cands = [1j * np.kron(np.eye(dm), h) for h in hs]
        cands = [c for c in cands if frobenius_norm(c) > 0]
        if center.dim == len(cands) and all(center.residual(c / frobenius_norm(c)) < 1e-6 for c in cands):
            return "span{iI(x)H}"
    projs = [1j * np.kron(np.eye(dm), eig.projection(j)) for j in range(eig.r)]
    if center.dim == eig.r and all(center.residual(p / frobenius_norm(p)) < 1e-6 for p in projs):
        return "span{iI(x)Pi}"
    return "other"


def analyze(m: int, data_generators: Sequence, control: Optional[str] = None,
            tol: float = CLOSURE_TOL) -> DlaDecomposition:
    """Closure plus decomposition for the network generators of a commuting data set."""
    eig = joint_eigenspaces(data_generators)
    max_dim = eig.r * 4**m + 4**m
    closure = lie_closure(qrenn_generators(m, data_generators, control), tol=tol, max_dim=max_dim)
    return decompose(closure, m, eig, data_generators)


# -- projections and norms --------------------------------------------------

def project_onto_ideal(op, ideal: LieBasis):
    """Projection of ``i op`` onto an ideal, returned in Hermitian form with its squared norm."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (ideal.dim_ambient, ideal.dim_ambient):
        raise ValueError(f"operator shape {op.shape} does not match ideal dimension {ideal.dim_ambient}")
    coeffs = ideal.coefficients(1j * op)
    proj = -1j * np.tensordot(coeffs, ideal.elements, axes=1)
    return proj, float(np.sum(np.abs(coeffs) ** 2))


def killing_norm_sq(omega) -> float:
    """``2^{m+1} ||Omega||_F^2`` for the traceless part of an ``m``-qubit ``Omega``."""
    omega = check_hermitian(omega)
    d = omega.shape[0]
    om = omega - np.trace(omega) / d * np.eye(d)
    return float(2 * d * frobenius_norm(om) ** 2)


def killing_norm_sq_bruteforce(omega) -> float:
    """``sum_k ||[Omega, E_k]||_F^2`` over an HS-orthonormal basis of ``su(d)``."""
    omega = check_hermitian(omega)
    m = omega.shape[0].bit_length() - 1
    return float(sum(frobenius_norm(commutator(omega, p)) ** 2 for p in normalized_paulis(m)))


def _traceless_sq(o) -> float:
    o = check_hermitian(o)
    d = o.shape[0]
    return frobenius_norm(o - np.trace(o) / d * np.eye(d)) ** 2


def _rho_n_matrix(rho_n) -> np.ndarray:
    if isinstance(rho_n, QuantumState):
        return rho_n.density_matrix()
    r = np.asarray(rho_n, dtype=complex)
    return np.outer(r, r.conj()) if r.ndim == 1 else r


def predicted_variance_theta(m: int, eig: JointEigenstructure, rho_n, o_m, omega,
                             o_n=None, form: str = "exact") -> float:
    """Deep-circuit variance of a processing-register derivative.

    ``form="exact"`` evaluates the per-ideal sum with the projection norms
    worked out in full, ``sum_j tr(Pi_j O_n)^2 tr(Pi_j rho_n)^2 / chi_j^2``.
    ``form="chi_weighted"`` evaluates ``sum_j chi_j^2 tr(Pi_j rho_n)^2`` instead.
    The two agree when every ``chi_j = 1`` and ``O_n = I``.
    """
    pref = (2 ** (m + 1) * (1 - 2.0**-m) * frobenius_norm(omega) ** 2 * _traceless_sq(o_m)
            / (4**m - 1) ** 2)
    w = eig.weights(_rho_n_matrix(rho_n))
    chi = eig.multiplicities.astype(float)
    if form == "chi_weighted":
        return float(pref * np.sum(chi**2 * w**2))
    if form != "exact":
        raise ValueError(f"unknown form {form!r}")
    if o_n is None:
        on = chi
    else:
        o_n = np.asarray(o_n, dtype=complex)
        on = np.array([np.real(np.trace(eig.projection(j) @ o_n)) for j in range(eig.r)])
    return float(pref * np.sum(on**2 * w**2 / chi**2))


def predicted_variance_phi(m: int, eig: JointEigenstructure, rho_n, o_m, form: str = "exact") -> float:
    """Deep-circuit variance of the derivative with respect to one data weight."""
    if eig.tuples.shape[1] != 1 and not np.allclose(eig.tuples, eig.tuples[:, :1]):
        raise ValueError("phi variance needs a single fixed data generator")
    lam = eig.tuples[:, 0]
    pref = 2 * (2**m - 1) * (1 - 2.0**-m) * _traceless_sq(o_m) / (4**m - 1) ** 2
    w = eig.weights(_rho_n_matrix(rho_n))
    chi = eig.multiplicities.astype(float)
    if form == "chi_weighted":
        return float(pref * np.sum(lam**2 * chi**2 * w**2))
    if form != "exact":
        raise ValueError(f"unknown form {form!r}")
    return float(pref * np.sum(lam**2 * w**2))


def total_loss_variance_lower_bound(m: int, eigs: Sequence[JointEigenstructure], rho_n,
                                    povm_m: Sequence, omega, form: str = "exact") -> float:
    """Sum of per-sample ideal contributions to the total-loss gradient variance.

    ``form="exact"`` uses the traceless part of each ``M^{(m)}`` and the
    ``(1 - 2^{-m})`` state factor; ``form="full_norm"`` uses the full
    ``||M^{(m)}||_F^2`` and omits the state factor.
    """
    from .overlap import joint_overlap

    q = len(eigs)
    if q == 0 or len(povm_m) != q:
        raise ValueError("need one POVM element per eigenstructure")
    rho = _rho_n_matrix(rho_n)
    pref = 2 ** (m + 1) * frobenius_norm(omega) ** 2 / (4**m - 1) ** 2
    total = 0.0
    for e, mop in zip(eigs, povm_m):
        r2 = joint_overlap(e, rho).value
        if form == "full_norm":
            total += frobenius_norm(mop) ** 2 * r2
        elif form == "exact":
            total += (1 - 2.0**-m) * _traceless_sq(mop) * r2
        else:
            raise ValueError(f"unknown form {form!r}")
    return float(pref * total / q**2)


def bp_upper_bound_check(m: int, eig: JointEigenstructure, rho_n, chi_max: Optional[int] = None,
                         omega=None, o_m=None) -> float:
    """``prefactor * chi_max^2 * R_H^2(rho_n)``; Pauli ``Z`` defaults for ``Omega`` and ``O_m``."""
    from .overlap import joint_overlap

    z = operator_on(pauli_word("Z"), 0, m)
    omega = z if omega is None else omega
    o_m = z if o_m is None else o_m
    if chi_max is None:
        chi_max = int(eig.multiplicities.max())
    pref = (2 ** (m + 1) * (1 - 2.0**-m) * frobenius_norm(omega) ** 2 * frobenius_norm(o_m) ** 2
            / (4**m - 1) ** 2)
    return float(pref * chi_max**2 * joint_overlap(eig, _rho_n_matrix(rho_n)).value)


__all__ = [
    "LieBasis", "JointEigenstructure", "DlaDecomposition", "lie_closure", "processing_generators",
    "qrenn_generators", "joint_eigenspaces", "ideal_basis", "decompose", "analyze",
    "project_onto_ideal", "killing_norm_sq", "killing_norm_sq_bruteforce",
    "predicted_variance_theta", "predicted_variance_phi", "total_loss_variance_lower_bound",
    "bp_upper_bound_check",
]
