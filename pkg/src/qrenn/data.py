"""Labelled Hamiltonian datasets, embedding generators and the binary POVM."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .numerics import I2, X, Y, Z, check_hermitian, kron_all, logm_unitary, operator_on, pauli_word
from .model import parity_observable

FEATURES = ("pauli", "involutory", "diagonal", "haar", "cluster_ising", "random_ising")
SPT_EXCLUSION = 1e-6


@dataclass(frozen=True)
class LabeledHamiltonian:
    operator: np.ndarray
    label: int
    feature_tag: str
    meta: Optional[float] = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.feature_tag not in FEATURES:
            raise ValueError(f"unknown feature tag {self.feature_tag!r}")
        object.__setattr__(self, "operator", check_hermitian(self.operator))


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    test: tuple
    seed: Optional[int] = None
    feature_tag: str = ""
    n: int = 0

    @property
    def train_labels(self) -> np.ndarray:
        return np.array([s.label for s in self.train], dtype=int)

    @property
    def test_labels(self) -> np.ndarray:
        return np.array([s.label for s in self.test], dtype=int)


# -- generators -------------------------------------------------------------

def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ``U(d)`` element: QR of a Ginibre matrix with phase-corrected ``R``."""
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def gen_pauli(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    k = int(rng.integers(1, 4**n))
    word = "".join("IXYZ"[(k >> (2 * (n - 1 - q))) & 3] for q in range(n))
    return pauli_word(word)


def gen_involutory(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    d = 2**n
    while True:
        signs = rng.choice([-1.0, 1.0], size=d)
        if abs(signs.sum()) < d:
            break
    v = haar_unitary(d, rng)
    h = (v * signs) @ v.conj().T
    return 0.5 * (h + h.conj().T)


def gen_diagonal(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.diag(rng.uniform(0.0, np.pi, 2**n)).astype(complex)


def gen_haar_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return logm_unitary(haar_unitary(2**n, rng))


def gen_fixed_spectrum(n: int, r: int, rng: np.random.Generator, min_gap: float = 0.1) -> np.ndarray:
    """Haar-basis Hermitian with exactly ``r`` distinct eigenvalues, each used at least once."""
    d = 2**n
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= {d}, got r={r}")
    while True:
        vals = np.sort(rng.uniform(-np.pi, np.pi, r))
        if r == 1 or np.min(np.diff(vals)) > min_gap:
            break
    spectrum = np.concatenate([vals, rng.choice(vals, d - r)])
    v = haar_unitary(d, rng)
    h = (v * spectrum) @ v.conj().T
    return 0.5 * (h + h.conj().T)


def _site_product(ops: dict, n: int) -> np.ndarray:
    mats = [I2] * n
    for site, op in ops.items():
        mats[site % n] = op
    return kron_all(mats)


@lru_cache(maxsize=8)
def _cluster_terms(n: int):
    d = 2**n
    a = np.zeros((d, d), dtype=complex)
    b = np.zeros((d, d), dtype=complex)
    for j in range(n):
        a -= _site_product({j - 1: X, j: Z, j + 1: X}, n)
        b += _site_product({j: Y, j + 1: Y}, n)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def gen_cluster_ising(n: int, lam: float) -> np.ndarray:
    """``-sum_j X_{j-1} Z_j X_{j+1} + lam sum_j Y_j Y_{j+1}`` with periodic boundaries."""
    if n < 3:
        raise ValueError("cluster-Ising chain needs n >= 3")
    a, b = _cluster_terms(n)
    return a + lam * b


def gen_random_ising(n: int, rng: np.random.Generator) -> np.ndarray:
    """Open chain ``sum_k J_k Z_k Z_{k+1} + sum_k h_k X_k`` with ``J, h ~ U[-1, 1]``."""
    if n < 2:
        raise ValueError("random Ising chain needs n >= 2")
    j = rng.uniform(-1, 1, n - 1)
    hx = rng.uniform(-1, 1, n)
    h = np.zeros((2**n, 2**n), dtype=complex)
    for k in range(n - 1):
        h += j[k] * _site_product({k: Z, k + 1: Z}, n)
    for k in range(n):
        h += hx[k] * operator_on(X, k, n)
    return h


def embedding_generator(feature_tag: str, x) -> np.ndarray:
    """``(pi/2)(I - x)`` for reflection features, ``x`` otherwise."""
    x = check_hermitian(x)
    if feature_tag in ("pauli", "involutory"):
        return 0.5 * np.pi * (np.eye(x.shape[0]) - x)
    if feature_tag in FEATURES:
        return x
    raise ValueError(f"unknown feature tag {feature_tag!r}")


def povm_binary(m: int):
    """``M0 = (I - Z^m)/2`` and ``M1 = (I + Z^m)/2`` on the processing register."""
    if m < 1:
        raise ValueError("m must be >= 1")
    z = np.diag(parity_observable(m)).astype(complex)
    eye = np.eye(2**m)
    return 0.5 * (eye - z), 0.5 * (eye + z)


# -- datasets ---------------------------------------------------------------

_FEATURE_GEN = {
    "pauli": gen_pauli,
    "involutory": gen_involutory,
    "diagonal": gen_diagonal,
    "haar": gen_haar_hermitian,
    "random_ising": gen_random_ising,
}


def _child_rngs(rng, count: int):
    """Independent per-sample generators spawned from one master generator."""
    ss = np.random.SeedSequence(int(rng.integers(0, 2**63)))
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def build_dataset(feature_tag: str, n: int, total: int, train_size: int, rng,
                  lambda_range=(0.0, 2.0)) -> DatasetSplit:
    """Balanced raw pool split uniformly into train and test.

    Feature datasets pair ``total/2`` feature samples (label 1) with
    ``total/2`` Haar-generated samples (label 0).  ``cluster_ising`` draws
    ``lam ~ U[lambda_range]`` with label 0 iff ``lam < 1``.
    """
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    if total < 2 or total % 2 or not 0 < train_size < total:
        raise ValueError(f"invalid sizes total={total}, train_size={train_size}")
    if feature_tag not in FEATURES or feature_tag == "haar":
        raise ValueError(f"cannot build a binary dataset for feature {feature_tag!r}")
    pool = []
    children = _child_rngs(rng, total)
    if feature_tag == "cluster_ising":
        for child in children:
            lam = float(child.uniform(*lambda_range))
            while abs(lam - 1.0) < SPT_EXCLUSION:
                lam = float(child.uniform(*lambda_range))
            pool.append(LabeledHamiltonian(gen_cluster_ising(n, lam), 0 if lam < 1 else 1,
                                           feature_tag, lam))
    else:
        gen = _FEATURE_GEN[feature_tag]
        half = total // 2
        for i, child in enumerate(children):
            if i < half:
                pool.append(LabeledHamiltonian(gen(n, child), 1, feature_tag))
            else:
                pool.append(LabeledHamiltonian(gen_haar_hermitian(n, child), 0, "haar"))
    perm = rng.permutation(total)
    train = tuple(pool[i] for i in perm[:train_size])
    test = tuple(pool[i] for i in perm[train_size:])
    return DatasetSplit(train, test, seed, feature_tag, n)


# -- serialisation ----------------------------------------------------------

def save_dataset(split: DatasetSplit, path) -> dict:
    """Write ``<path>.json`` (manifest) and ``<path>.bin`` (matrices).

    The binary file concatenates every operator, train samples first,
    row-major, as little-endian float64 ``(re, im)`` pairs.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples = list(split.train) + list(split.test)
    arr = np.stack([s.operator for s in samples]) if samples else np.zeros((0,))
    raw = np.ascontiguousarray(arr).astype("<c16").view("<f8").tobytes()
    bin_path = path.with_suffix(".bin")
    bin_path.write_bytes(raw)
    manifest = {
        "format": "qrenn-dataset/1",
        "feature_tag": split.feature_tag,
        "n": split.n,
        "seed": split.seed,
        "dim": 2**split.n,
        "train_size": len(split.train),
        "test_size": len(split.test),
        "labels": [s.label for s in samples],
        "tags": [s.feature_tag for s in samples],
        "meta": [s.meta for s in samples],
        "matrix_file": bin_path.name,
        "sha256": hashlib.sha256(raw).hexdigest(),
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_dataset(path) -> DatasetSplit:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    raw = (path.parent / manifest["matrix_file"]).read_bytes()
    if hashlib.sha256(raw).hexdigest() != manifest["sha256"]:
        raise ValueError("dataset matrix file does not match its manifest hash")
    d = manifest["dim"]
    mats = np.frombuffer(raw, dtype="<f8").view("<c16").reshape(-1, d, d)
    samples = [LabeledHamiltonian(np.array(a), lab, tag, meta)
               for a, lab, tag, meta in zip(mats, manifest["labels"], manifest["tags"], manifest["meta"])]
    k = manifest["train_size"]
    return DatasetSplit(tuple(samples[:k]), tuple(samples[k:]), manifest["seed"],
                        manifest["feature_tag"], manifest["n"])
