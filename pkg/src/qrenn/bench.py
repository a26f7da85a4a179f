"""Experiment harnesses: gradient statistics, classifier training, SPT detection, overlap scans."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import data as ds
from .dla import joint_eigenspaces, predicted_variance_phi, predicted_variance_theta
from .engine import DenseBatch, SpectralBatch, SpectralSample, loss_and_gradient
from .model import QrennArchitecture, EmbeddedData, accuracy, control_embed_generator, parity_observable
from .numerics import check_hermitian, expm_i, operator_on, pauli_word, spectral_norm
from .overlap import joint_overlap
from .qstate import parse_probe

DEFAULT_PROBES = {
    "pauli": "plus",
    "involutory": "plus",
    "diagonal": "mixed:0.5",
    "haar": "plus",
    "random_ising": "plus",
    "fixed": "plus",
    "cluster_ising": "plus",
}


@dataclass
class GradStatConfig:
    feature_tag: str = "haar"
    n_list: list = field(default_factory=lambda: [2])
    m: int = 1
    T: int = 16
    T_list: Optional[list] = None
    L: int = 3
    samples: int = 500
    target: str = "theta:1:0"
    probe: Optional[str] = None
    per_slot: Optional[bool] = None
    hamiltonian: Optional[str] = None
    convention: str = "hardware"
    seed: Optional[int] = None

    def validate(self) -> "GradStatConfig":
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        if self.feature_tag not in DEFAULT_PROBES or self.feature_tag == "cluster_ising":
            raise ValueError(f"unsupported gradstats feature {self.feature_tag!r}")
        if self.feature_tag == "fixed" and not self.hamiltonian:
            raise ValueError("feature 'fixed' needs a Pauli-word 'hamiltonian'")
        if self.convention not in ("hardware", "pauli"):
            raise ValueError("convention must be 'hardware' or 'pauli'")
        if not self.n_list:
            raise ValueError("n_list must not be empty")
        parse_target(self.target, QrennArchitecture(self.m, 1, max(self.T_list or [self.T]), self.L))
        return self


@dataclass
class TrainConfig:
    feature_tag: str = "pauli"
    n: int = 3
    m: int = 2
    T: int = 4
    L: int = 3
    total: int = 600
    train_size: int = 100
    optimizer: str = "adam"
    learning_rate: float = 0.1
    epochs: int = 200
    noise: str = "none"
    flip_rate: float = 0.05
    crosstalk_delta: float = 0.01
    probe: Optional[str] = None
    embed_scale: float = 1.0
    train_phi: bool = False
    lambda_min: float = 0.0
    lambda_max: float = 2.0
    seed: Optional[int] = None

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError("optimizer must be 'adam' or 'gd'")
        if self.noise not in ("none", "label_flip", "crosstalk"):
            raise ValueError("noise must be one of none, label_flip, crosstalk")
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ValueError("flip_rate must lie in [0, 1]")
        QrennArchitecture(self.m, self.n, self.T, self.L)
        return self


@dataclass
class RunResult:
    config: dict
    metrics: dict
    wall_time: float
    seed: Optional[int]


# -- helpers ----------------------------------------------------------------

def parse_target(target: str, arch: QrennArchitecture):
    """``theta:<slot>:<mu>`` (slot 1-based, mu 0-based) or ``phi:<slot>``."""
    parts = target.split(":")
    if parts[0] == "theta" and len(parts) == 3:
        slot, mu = int(parts[1]), int(parts[2])
        return "theta", arch.theta_index(slot, mu), mu
    if parts[0] == "phi" and len(parts) == 2:
        t = int(parts[1])
        if not 1 <= t <= arch.T:
            raise IndexError(f"no data weight phi_{t} in a {arch.T}-slot network")
        return "phi", t - 1, None
    raise ValueError(f"malformed target {target!r}")


def rotation_generator(m: int, L: int, mu: int) -> np.ndarray:
    """Hermitian ``Omega`` of ``exp(i theta Omega)`` realised by rotation ``mu`` (``-P/2``)."""
    q = mu % (2 * m)
    pauli = "Y" if q < m else "Z"
    return -0.5 * operator_on(pauli_word(pauli), q % m, m)


def _sample_generators(tag: str, n: int, T: int, per_slot: bool, rng, hamiltonian=None):
    if tag == "fixed":
        h = pauli_word(hamiltonian)
        if h.shape[0] != 2**n:
            raise ValueError(f"hamiltonian {hamiltonian!r} does not act on n={n} qubits")
        return [h] * T
    gen = {
        "pauli": ds.gen_pauli,
        "involutory": ds.gen_involutory,
        "diagonal": ds.gen_diagonal,
        "haar": ds.gen_haar_hermitian,
        "random_ising": ds.gen_random_ising,
    }[tag]
    if per_slot:
        return [ds.embedding_generator(tag, gen(n, rng)) for _ in range(T)]
    return [ds.embedding_generator(tag, gen(n, rng))] * T


def _stats(g: np.ndarray):
    n = g.size
    var = float(np.var(g, ddof=1))
    return float(np.mean(g)), var, float(np.sqrt(var / n))


# -- gradient statistics ----------------------------------------------------

def gradient_samples(cfg: GradStatConfig, n: int, T: int):
    """Per-network derivatives and per-network predictions for one ``(n, T)`` point."""
    arch = QrennArchitecture(cfg.m, n, T, cfg.L)
    kind, idx, mu = parse_target(cfg.target, arch)
    tag = cfg.feature_tag
    per_slot = (tag == "diagonal") if cfg.per_slot is None else bool(cfg.per_slot)
    rho_n = parse_probe(cfg.probe or DEFAULT_PROBES[tag], n)
    obs = parity_observable(cfg.m)
    seed = 0 if cfg.seed is None else int(cfg.seed)
    grads = np.empty(cfg.samples)
    preds = np.full(cfg.samples, np.nan)
    omega = None
    if kind == "theta":
        omega = rotation_generator(cfg.m, cfg.L, mu)
    scale = 1.0
    if cfg.convention == "pauli" and kind == "theta":
        # exp(i a P) = R_P(-2a): d/da = -2 d/dtheta, and Omega = P
        scale, omega = -2.0, -2.0 * omega
    chunk = 64
    for start in range(0, cfg.samples, chunk):
        stop = min(cfg.samples, start + chunk)
        samples, thetas, phis = [], [], []
        for i in range(start, stop):
            rng = np.random.default_rng([seed, n, T, i])
            gens = _sample_generators(tag, n, T, per_slot, rng, cfg.hamiltonian)
            samples.append(SpectralSample.from_data(EmbeddedData(gens), rho_n))
            thetas.append(rng.uniform(0, 2 * np.pi, arch.n_theta))
            phis.append(np.ones(T) if kind == "theta" else rng.uniform(0, 2 * np.pi, T))
            if not per_slot or kind == "theta":
                try:
                    eig = joint_eigenspaces(gens)
                    if kind == "theta":
                        preds[i] = predicted_variance_theta(cfg.m, eig, rho_n, np.diag(obs), omega)
                    elif not per_slot:
                        preds[i] = predicted_variance_phi(cfg.m, eig, rho_n, np.diag(obs))
                except ValueError:
                    pass
        batch = SpectralBatch(arch, samples, [obs] * len(samples))
        th = np.array(thetas)
        ph = np.array(phis)
        if kind == "theta":
            plus, minus = th.copy(), th.copy()
            plus[:, idx] += np.pi / 2
            minus[:, idx] -= np.pi / 2
            g = 0.5 * (batch.paired_scores(plus, ph) - batch.paired_scores(minus, ph))
        else:
            step = 1e-5
            plus, minus = ph.copy(), ph.copy()
            plus[:, idx] += step
            minus[:, idx] -= step
            g = (batch.paired_scores(th, plus) - batch.paired_scores(th, minus)) / (2 * step)
        grads[start:stop] = scale * g
    pred = float(np.mean(preds)) if np.all(np.isfinite(preds)) else float("nan")
    return grads, pred


def gradient_statistics(cfg: GradStatConfig) -> RunResult:
    cfg.validate()
    t0 = time.perf_counter()
    rows = []
    for n in cfg.n_list:
        for T in (cfg.T_list or [cfg.T]):
            g, pred = gradient_samples(cfg, int(n), int(T))
            mean, var, se = _stats(g)
            rows.append({"n": int(n), "T": int(T), "samples": cfg.samples, "mean": mean,
                         "variance": var, "stderr": se, "predicted_variance": pred})
    return RunResult(asdict(cfg), {"rows": rows}, time.perf_counter() - t0, cfg.seed)


def sanity_statistics(samples: int = 500, seed: int = 0):
    """Single-qubit check: ``l = cos(theta)`` so ``dl/dtheta = -sin(theta)``, variance 1/2."""
    rng = np.random.default_rng(seed)
    th = rng.uniform(0, 2 * np.pi, samples)
    g = 0.5 * (np.cos(th + np.pi / 2) - np.cos(th - np.pi / 2))
    return _stats(g)


# -- noise ------------------------------------------------------------------

def label_flip(split: ds.DatasetSplit, rate: float, rng) -> ds.DatasetSplit:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("flip rate must lie in [0, 1]")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    flips = rng.random(len(split.train)) < rate
    train = tuple(replace(s, label=1 - s.label) if f else s for s, f in zip(split.train, flips))
    return replace(split, train=train)


def random_crosstalk_h0(dim: int, rng) -> np.ndarray:
    """Haar-basis Hermitian with ``U[-1, 1]`` spectrum rescaled to unit spectral norm."""
    v = ds.haar_unitary(dim, rng)
    w = rng.uniform(-1, 1, dim)
    w = w / np.max(np.abs(w))
    h = (v * w) @ v.conj().T
    return 0.5 * (h + h.conj().T)


def crosstalk_embed(h_embedded, delta: float, h0) -> np.ndarray:
    """``exp(i (|c><c| (x) H + delta H_0))``."""
    h_embedded = check_hermitian(h_embedded)
    h0 = check_hermitian(h0)
    if h0.shape != h_embedded.shape:
        raise ValueError("H_0 must match the embedded generator dimension")
    if spectral_norm(h0) > 1 + 1e-9:
        raise ValueError("crosstalk H_0 must satisfy ||H_0||_inf <= 1")
    return expm_i(h_embedded + delta * h0, 1.0)


# -- training ---------------------------------------------------------------

def _adam(grad_fn, x0, lr, epochs, betas=(0.9, 0.999), eps=1e-8):
    x = np.array(x0, dtype=float)
    m1 = np.zeros_like(x)
    m2 = np.zeros_like(x)
    curve = []
    for k in range(1, epochs + 1):
        loss, g = grad_fn(x)
        curve.append(loss)
        m1 = betas[0] * m1 + (1 - betas[0]) * g
        m2 = betas[1] * m2 + (1 - betas[1]) * g * g
        x = x - lr * (m1 / (1 - betas[0] ** k)) / (np.sqrt(m2 / (1 - betas[1] ** k)) + eps)
    return x, curve


def _gd(grad_fn, x0, lr, epochs):
    x = np.array(x0, dtype=float)
    curve = []
    for _ in range(epochs):
        loss, g = grad_fn(x)
        curve.append(loss)
        x = x - lr * g
    return x, curve


def optimize(grad_fn, x0, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return _adam(grad_fn, x0, cfg.learning_rate, cfg.epochs)
    return _gd(grad_fn, x0, cfg.learning_rate, cfg.epochs)


def _make_batch(arch, samples, observables, rho_n, gates=None):
    if gates is None:
        spec = [SpectralSample.from_data(EmbeddedData.repeated(h, arch.T), rho_n) for h in samples]
        return SpectralBatch(arch, spec, observables)
    return DenseBatch(arch, gates, observables, rho_n)


def train_on_split(cfg: TrainConfig, split: ds.DatasetSplit, rng) -> dict:
    """Train on ``split.train`` and score ``split.test``; returns the metrics dict."""
    arch = QrennArchitecture(cfg.m, cfg.n, cfg.T, cfg.L)
    tag = split.feature_tag
    rho_n = parse_probe(cfg.probe or DEFAULT_PROBES.get(tag, "plus"), cfg.n)
    theta0 = rng.uniform(0, 2 * np.pi, arch.n_theta)
    x0 = np.concatenate([theta0, np.ones(arch.T)]) if cfg.train_phi else theta0

    def gens(samples):
        # one embedding rule per dataset so the label cannot leak through the encoding
        return [cfg.embed_scale * ds.embedding_generator(tag, s.operator) for s in samples]

    gates_train = gates_test = None
    if cfg.noise == "crosstalk":
        if cfg.train_phi:
            raise ValueError("crosstalk noise does not support trained data weights")
        h0 = random_crosstalk_h0(2 ** (cfg.m + cfg.n), rng)
        def noisy(hs):
            return [crosstalk_embed(control_embed_generator(h, cfg.m, arch.control), cfg.crosstalk_delta, h0)
                    for h in hs]
        gates_train, gates_test = noisy(gens(split.train)), noisy(gens(split.test))

    m0, m1 = ds.povm_binary(cfg.m)
    povm = [np.diag(m1 if s.label == 1 else m0).real for s in split.train]
    train_batch = _make_batch(arch, gens(split.train), povm, rho_n, gates_train)
    nt = arch.n_theta

    def grad_fn(x):
        theta = x[:nt]
        phi = x[nt:] if cfg.train_phi else None
        loss, g = loss_and_gradient(train_batch, theta, phi, train_phi=cfg.train_phi)
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite loss or gradient (loss={loss}, theta={theta.tolist()})")
        return loss, g

    x, curve = optimize(grad_fn, x0, cfg)
    theta = x[:nt]
    phi = x[nt:] if cfg.train_phi else None
    final_loss = float(1.0 - np.mean(train_batch.scores(theta[None, :], None if phi is None else phi[None, :])))
    z = parity_observable(cfg.m)

    def fhat(samples, gates):
        b = _make_batch(arch, gens(samples), [z] * len(samples), rho_n, gates)
        return b.scores(theta[None, :], None if phi is None else phi[None, :])[0]

    f_test = fhat(split.test, gates_test)
    f_train = fhat(split.train, gates_train)
    pred_test = np.where(f_test < 0, 0, 1)
    pred_train = np.where(f_train < 0, 0, 1)
    return {
        "loss_curve": [float(v) for v in curve] + [final_loss],
        "final_loss": final_loss,
        "train_accuracy": accuracy(pred_train, split.train_labels),
        "test_accuracy": accuracy(pred_test, split.test_labels),
        "test_fhat": f_test.tolist(),
        "test_predictions": pred_test.tolist(),
        "test_labels": split.test_labels.tolist(),
        "test_meta": [s.meta for s in split.test],
        "theta": theta.tolist(),
        "phi": None if phi is None else phi.tolist(),
    }


def _run_rngs(seed):
    ss = np.random.SeedSequence(0 if seed is None else int(seed))
    data_ss, flip_ss, train_ss = ss.spawn(3)
    return (np.random.default_rng(data_ss), np.random.default_rng(flip_ss),
            np.random.default_rng(train_ss))


def build_split(cfg: TrainConfig, rng) -> ds.DatasetSplit:
    kw = {}
    if cfg.feature_tag == "cluster_ising":
        kw["lambda_range"] = (cfg.lambda_min, cfg.lambda_max)
    split = ds.build_dataset(cfg.feature_tag, cfg.n, cfg.total, cfg.train_size, rng, **kw)
    return replace(split, seed=cfg.seed)


def train_classifier(cfg: TrainConfig) -> RunResult:
    cfg.validate()
    t0 = time.perf_counter()
    data_rng, flip_rng, train_rng = _run_rngs(cfg.seed)
    split = build_split(cfg, data_rng)
    clean_labels = split.train_labels
    if cfg.noise == "label_flip":
        split = label_flip(split, cfg.flip_rate, flip_rng)
    metrics = train_on_split(cfg, split, train_rng)
    metrics["flipped_train_labels"] = int(np.sum(clean_labels != split.train_labels))
    return RunResult(asdict(cfg), metrics, time.perf_counter() - t0, cfg.seed)


# -- SPT ----------------------------------------------------------------------

def spt_config(**overrides) -> TrainConfig:
    base = dict(feature_tag="cluster_ising", n=8, m=1, T=10, L=3, total=600, train_size=40,
                probe="plus")
    base.update(overrides)
    return TrainConfig(**base)


def spt_experiment(cfg: TrainConfig, training_sizes=None, repeats: int = 0) -> RunResult:
    """Cluster-Ising phase detection; optionally sweeps the training-set size.

    The sweep draws ``repeats`` random training subsets of each size from the
    same raw pool and scores on the remaining samples.
    """
    if cfg.feature_tag != "cluster_ising":
        raise ValueError("spt_experiment needs the cluster_ising feature")
    cfg.validate()
    t0 = time.perf_counter()
    data_rng, _, train_rng = _run_rngs(cfg.seed)
    split = build_split(cfg, data_rng)
    metrics = train_on_split(cfg, split, train_rng)
    metrics["per_lambda"] = sorted(zip(metrics["test_meta"], metrics["test_predictions"],
                                       metrics["test_labels"]))
    sweep = []
    if training_sizes:
        pool = list(split.train) + list(split.test)
        for size in training_sizes:
            accs = []
            for r in range(repeats):
                rng = np.random.default_rng([0 if cfg.seed is None else int(cfg.seed), int(size), r])
                perm = rng.permutation(len(pool))
                sub = replace(split, train=tuple(pool[i] for i in perm[:size]),
                              test=tuple(pool[i] for i in perm[size:]))
                sub_cfg = replace(cfg, train_size=int(size))
                accs.append(train_on_split(sub_cfg, sub, rng)["test_accuracy"])
            sweep.append({"train_size": int(size), "repeats": repeats,
                          "mean_accuracy": float(np.mean(accs)), "std_accuracy": float(np.std(accs))})
    metrics["size_sweep"] = sweep
    return RunResult(asdict(cfg), metrics, time.perf_counter() - t0, cfg.seed)


# -- overlap scan -------------------------------------------------------------

def overlap_scan(n_list, lambda_grid, probes=("zero", "minus", "plus")) -> list:
    """``R^2_{H(lam)}(rho_n)`` rows for the cluster-Ising family."""
    rows = []
    for n in n_list:
        states = {p: parse_probe(p, n) for p in probes}
        for lam in lambda_grid:
            eig = joint_eigenspaces([ds.gen_cluster_ising(n, float(lam))])
            for p, st in states.items():
                rows.append({"n": int(n), "lambda": float(lam), "probe": p,
                             "overlap": joint_overlap(eig, st).value})
    return rows
