import numpy as np
import pytest
from hypothesis import given, strategies as st

from qrenn.data import gen_fixed_spectrum
from qrenn.dla import (
    analyze, bp_upper_bound_check, decompose, ideal_basis, joint_eigenspaces, killing_norm_sq,
    killing_norm_sq_bruteforce, lie_closure, predicted_variance_phi, predicted_variance_theta,
    project_onto_ideal, qrenn_generators, total_loss_variance_lower_bound,
)
from qrenn.numerics import I2, X, Y, Z, commutator, frobenius_norm, kron
from qrenn.qstate import basis_state, mixed_probe, plus_state
from conftest import random_hermitian

P0 = np.diag([1, 0]).astype(complex)
P1 = np.diag([0, 1]).astype(complex)


def _brute_closure_dim(gens, tol=1e-7):
    """Independent oracle: rank of repeatedly commuted real-vectorised span."""
    span = [g for g in gens]
    while True:
        vecs = np.array([np.concatenate([s.real.ravel(), s.imag.ravel()]) for s in span])
        rank = np.linalg.matrix_rank(vecs, tol=tol)
        new = span + [commutator(a, b) for a in span for b in gens]
        nv = np.array([np.concatenate([s.real.ravel(), s.imag.ravel()]) for s in new])
        if np.linalg.matrix_rank(nv, tol=tol) == rank:
            return rank
        # keep an independent subset to bound growth
        _, _, vh = np.linalg.svd(nv, full_matrices=False)
        keep = vh[: np.linalg.matrix_rank(nv, tol=tol)]
        d = gens[0].shape[0]
        span = [(k[: d * d] + 1j * k[d * d :]).reshape(d, d) for k in keep]


@pytest.mark.parametrize("gens, dim", [
    ([1j * Z], 1),
    ([1j * X, 1j * Z], 3),
    ([1j * kron(X, I2), 1j * kron(Z, I2), 1j * kron(P1, Z)], 7),
])
def test_lie_closure_examples(gens, dim):
    b = lie_closure(gens)
    assert b.dim == dim == _brute_closure_dim(gens)


def test_lie_closure_basis_invariants():
    b = lie_closure(qrenn_generators(1, [Z]))
    els = b.elements
    np.testing.assert_allclose(els + np.conj(np.transpose(els, (0, 2, 1))), 0, atol=1e-10)
    gram = np.einsum("aij,bij->ab", els.conj(), els)
    np.testing.assert_allclose(gram, np.eye(b.dim), atol=1e-9)


def test_lie_closure_max_dim_and_input_errors():
    with pytest.raises(RuntimeError):
        lie_closure([1j * X, 1j * Z], max_dim=2)
    with pytest.raises(ValueError):
        lie_closure([X])
    with pytest.raises(ValueError):
        lie_closure([])


def test_joint_eigenspaces_examples():
    e = joint_eigenspaces([Z])
    np.testing.assert_allclose(e.tuples, [[1], [-1]])
    np.testing.assert_allclose(e.projection(0), P0, atol=1e-14)
    np.testing.assert_allclose(e.projection(1), P1, atol=1e-14)
    e = joint_eigenspaces([kron(Z, I2), kron(I2, Z)])
    assert e.r == 4 and set(map(tuple, e.tuples)) == {(1, 1), (1, -1), (-1, 1), (-1, -1)}
    assert all(e.multiplicities == 1)
    e = joint_eigenspaces([np.eye(4)])
    assert e.r == 1 and e.multiplicities[0] == 4
    np.testing.assert_allclose(e.projection(0), np.eye(4), atol=1e-14)


def test_joint_eigenspaces_rejects_non_commuting():
    with pytest.raises(ValueError):
        joint_eigenspaces([X, Z])


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_joint_eigenspaces_invariants(seed, n, k):
    rng = np.random.default_rng(seed)
    d = 2**n
    from qrenn.data import haar_unitary

    v = haar_unitary(d, rng)
    ops = [(v * rng.choice([-1.0, 0.5, 2.0], d)) @ v.conj().T for _ in range(k)]
    ops = [0.5 * (o + o.conj().T) for o in ops]
    e = joint_eigenspaces(ops)
    projs = e.projections
    np.testing.assert_allclose(sum(projs), np.eye(d), atol=1e-9)
    for i, p in enumerate(projs):
        np.testing.assert_allclose(p @ p, p, atol=1e-9)
        for j, q in enumerate(projs):
            if i != j:
                np.testing.assert_allclose(p @ q, 0, atol=1e-9)
        for t, h in enumerate(ops):
            np.testing.assert_allclose(h @ p, e.tuples[i, t] * p, atol=1e-8)


def test_decompose_examples():
    dec = analyze(1, [Z])
    assert (dec.r, dec.ideal_dims, dec.center.dim, dec.closure.dim) == (2, [3, 3], 1, 7)
    assert dec.center_claim == "span{iI(x)H}"
    dec = analyze(1, [np.eye(2)])
    assert (dec.r, dec.ideal_dims, dec.center.dim) == (1, [3], 1)
    h = gen_fixed_spectrum(1, 2, np.random.default_rng(3))
    assert analyze(2, [h]).ideal_dim_total == 30


def test_decompose_structure():
    dec = analyze(1, [gen_fixed_spectrum(2, 3, np.random.default_rng(7))])
    rng = np.random.default_rng(0)
    for c in dec.center.elements:
        for e in dec.closure.elements:
            assert frobenius_norm(commutator(c, e)) < 1e-8
    for i, a in enumerate(dec.ideals):
        x = np.tensordot(rng.standard_normal(a.dim), a.elements, axes=1)
        y = np.tensordot(rng.standard_normal(a.dim), a.elements, axes=1)
        assert a.residual(commutator(x, y)) < 1e-8
        for b in dec.ideals[i + 1:]:
            z = np.tensordot(rng.standard_normal(b.dim), b.elements, axes=1)
            assert frobenius_norm(commutator(x, z)) < 1e-8
            assert np.max(np.abs(np.einsum("aij,bij->ab", a.elements.conj(), b.elements))) < 1e-8


def test_decompose_dimension_mismatch():
    closure = lie_closure(qrenn_generators(1, [Z]))
    with pytest.raises(ValueError):
        decompose(closure, 1, joint_eigenspaces([np.eye(4)]))


def test_projection_examples():
    e = joint_eigenspaces([Z])
    ideal = ideal_basis(1, e.projection(0))
    proj, nrm = project_onto_ideal(kron(Z, I2), ideal)
    np.testing.assert_allclose(proj, kron(Z, P0), atol=1e-14)
    assert nrm == pytest.approx(2)
    _, nrm = project_onto_ideal(np.eye(4), ideal)
    assert nrm == pytest.approx(0, abs=1e-15)
    rho = np.kron(P0, plus_state(1).density_matrix())
    _, nrm = project_onto_ideal(rho, ideal)
    assert nrm == pytest.approx(0.125)
    with pytest.raises(ValueError):
        project_onto_ideal(np.eye(2), ideal)


def test_projection_completeness():
    dec = analyze(1, [Z])
    rng = np.random.default_rng(1)
    coeffs = rng.standard_normal(dec.closure.dim)
    op = -1j * np.tensordot(coeffs, dec.closure.elements, axes=1)  # Hermitian, inside the closure
    parts = [project_onto_ideal(op, i)[1] for i in dec.ideals]
    center = project_onto_ideal(op, dec.center)[1]
    assert frobenius_norm(op) ** 2 == pytest.approx(center + sum(parts), abs=1e-10)


@pytest.mark.parametrize("omega, expected", [(Z, 8.0), (np.zeros((2, 2)), 0.0), (2.5 * Z, 50.0),
                                             (kron(X, Y), 32.0)])
def test_killing_norm(omega, expected):
    assert killing_norm_sq(omega) == pytest.approx(expected)
    assert killing_norm_sq_bruteforce(omega) == pytest.approx(expected)


def test_predicted_variance_theta_examples():
    e = joint_eigenspaces([Z])
    assert predicted_variance_theta(1, e, plus_state(1), Z, Z) == pytest.approx(4 / 9)
    assert predicted_variance_theta(1, e, plus_state(1), Z, Z, form="chi_weighted") == pytest.approx(4 / 9)
    assert predicted_variance_theta(1, e, plus_state(1), Z, 0.5 * Z) == pytest.approx(1 / 9)
    with pytest.raises(ValueError):
        predicted_variance_theta(1, e, plus_state(1), Z, Z, form="bogus")


def test_predicted_variance_theta_zero_overlap():
    e = joint_eigenspaces([Z])
    # O_n supported on the block the probe misses
    assert predicted_variance_theta(1, e, basis_state(1, "0"), Z, Z, o_n=P1) == pytest.approx(0)


def test_predicted_variance_theta_exact_differs_for_degenerate_blocks():
    e = joint_eigenspaces([kron(Z, I2)])
    exact = predicted_variance_theta(1, e, plus_state(2), Z, Z)
    weighted = predicted_variance_theta(1, e, plus_state(2), Z, Z, form="chi_weighted")
    assert exact == pytest.approx(4 / 9) and weighted == pytest.approx(16 / 9)


def test_predicted_variance_phi_examples():
    assert predicted_variance_phi(1, joint_eigenspaces([Z]), plus_state(1), Z) == pytest.approx(1 / 9)
    assert predicted_variance_phi(1, joint_eigenspaces([np.zeros((2, 2))]), plus_state(1), Z) == 0
    base = predicted_variance_phi(1, joint_eigenspaces([Z + 0.3 * X]), plus_state(1), Z)
    scaled = predicted_variance_phi(1, joint_eigenspaces([3 * (Z + 0.3 * X)]), plus_state(1), Z)
    assert scaled == pytest.approx(9 * base)
    with pytest.raises(ValueError):
        predicted_variance_phi(1, joint_eigenspaces([kron(Z, I2), kron(I2, Z)]), plus_state(2), Z)


def test_total_loss_bound():
    e = joint_eigenspaces([Z])
    m1 = np.diag([1.0, 0.0])
    single = total_loss_variance_lower_bound(1, [e], plus_state(1), [m1], Z, form="full_norm")
    assert single == pytest.approx((4 * 2 / 9) * 1 * 0.5)
    exact = total_loss_variance_lower_bound(1, [e], plus_state(1), [m1], Z)
    assert exact == pytest.approx((4 * 2 / 9) * 0.5 * 0.5 * 0.5)
    zero = total_loss_variance_lower_bound(1, [e], plus_state(1), [np.zeros((2, 2))], Z)
    assert zero == 0
    with pytest.raises(ValueError):
        total_loss_variance_lower_bound(1, [e], plus_state(1), [], Z)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_bp_upper_bound_maximally_mixed(n):
    h = np.diag(np.arange(2**n, dtype=float))
    e = joint_eigenspaces([h])
    val = bp_upper_bound_check(1, e, mixed_probe(0, n))
    assert val == pytest.approx((8 / 9) * 2.0**-n)
    assert bp_upper_bound_check(1, e, basis_state(n, "0" * n)) == pytest.approx(8 / 9)
