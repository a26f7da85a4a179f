import numpy as np
import pytest
from hypothesis import given, strategies as st

from qrenn.data import haar_unitary
from qrenn.numerics import X, Z
from qrenn.qstate import (
    QuantumState, apply_unitary, basis_state, expectation, minus_state, mixed_probe,
    parse_probe, plus_state, tensor,
)
from conftest import random_density, random_hermitian

seeds = st.integers(0, 2**32 - 1)


@pytest.mark.parametrize("q, bits, index", [(1, "0", 0), (2, "10", 2), (3, "111", 7)])
def test_basis_state_big_endian(q, bits, index):
    s = basis_state(q, bits)
    assert s.data[index] == 1 and np.sum(np.abs(s.data)) == 1


def test_basis_state_length_mismatch():
    with pytest.raises(ValueError):
        basis_state(2, "1")


def test_plus_state():
    np.testing.assert_allclose(plus_state(1).data, [2**-0.5] * 2)
    np.testing.assert_allclose(plus_state(2).data, [0.5] * 4)
    assert expectation(plus_state(1), X) == pytest.approx(1)


def test_minus_state():
    assert expectation(minus_state(1), X) == pytest.approx(-1)


def test_mixed_probe():
    np.testing.assert_allclose(mixed_probe(1, 2).data, plus_state(2).density_matrix(), atol=1e-15)
    np.testing.assert_allclose(mixed_probe(0, 2).data, np.eye(4) / 4)
    assert np.trace(mixed_probe(0.5, 3).data) == pytest.approx(1)
    with pytest.raises(ValueError):
        mixed_probe(1.5, 1)


def test_tensor():
    np.testing.assert_allclose(tensor(basis_state(1, "0"), plus_state(1)).data, [2**-0.5, 2**-0.5, 0, 0])
    t = tensor(plus_state(1), mixed_probe(0, 1))
    assert not t.is_pure and np.trace(t.data) == pytest.approx(1)
    assert tensor(plus_state(2), plus_state(3)).qubits == 5


def test_apply_unitary(rng):
    s = plus_state(2)
    np.testing.assert_allclose(apply_unitary(s, np.eye(4)).data, s.data)
    np.testing.assert_allclose(apply_unitary(basis_state(1, "0"), X).data, basis_state(1, "1").data)
    out = apply_unitary(s, haar_unitary(4, rng))
    assert np.linalg.norm(out.data) == pytest.approx(1, abs=1e-10)
    with pytest.raises(ValueError):
        apply_unitary(s, np.eye(2))


def test_expectation_examples():
    assert expectation(basis_state(1, "0"), Z) == 1
    assert expectation(plus_state(1), Z) == pytest.approx(0)
    assert expectation(mixed_probe(0, 1), Z) == pytest.approx(0)
    with pytest.raises(ValueError):
        expectation(plus_state(1), np.eye(4))


@pytest.mark.parametrize("data", [
    np.array([1.0, 1.0]),
    np.array([[1.0, 0], [0, 0.5]]),
    np.array([[0.5, 0.6], [0.6, 0.5]]),
    np.ones(3) / np.sqrt(3),
])
def test_invalid_states_rejected(data):
    with pytest.raises(ValueError):
        QuantumState(data)


@given(seeds)
def test_expectation_linearity(seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_density(4, rng), random_density(4, rng)
    a, b = random_hermitian(4, rng), random_hermitian(4, rng)
    s, t = rng.uniform(-2, 2, 2)
    st_ = QuantumState(r1)
    assert expectation(st_, s * a + t * b) == pytest.approx(s * expectation(st_, a) + t * expectation(st_, b), abs=1e-10)
    mix = QuantumState(0.3 * r1 + 0.7 * r2)
    assert expectation(mix, a) == pytest.approx(0.3 * expectation(QuantumState(r1), a) + 0.7 * expectation(QuantumState(r2), a), abs=1e-10)


@given(seeds)
def test_heisenberg_picture(seed):
    rng = np.random.default_rng(seed)
    u = haar_unitary(4, rng)
    o = random_hermitian(4, rng)
    s = QuantumState(random_density(4, rng))
    assert expectation(apply_unitary(s, u), o) == pytest.approx(expectation(s, u.conj().T @ o @ u), abs=1e-9)


@given(seeds)
def test_pure_and_density_paths_agree(seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    v /= np.linalg.norm(v)
    o = random_hermitian(8, rng)
    pure = QuantumState(v)
    dense = QuantumState(pure.density_matrix())
    assert expectation(pure, o) == pytest.approx(expectation(dense, o), abs=1e-10)


@pytest.mark.parametrize("spec, expected", [
    ("plus", plus_state(2)), ("minus", minus_state(2)), ("zero", basis_state(2, "00")),
    ("01", basis_state(2, "01")), ("maxmixed", mixed_probe(0, 2)), ("mixed:0.5", mixed_probe(0.5, 2)),
])
def test_parse_probe(spec, expected):
    np.testing.assert_allclose(parse_probe(spec, 2).density_matrix(), expected.density_matrix())


def test_parse_probe_rejects_unknown():
    with pytest.raises(ValueError):
        parse_probe("bogus", 2)
