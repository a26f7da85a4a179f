"""Batched evaluation of network losses and gradients.

Two interchangeable back ends produce the per-sample score
``tr(U rho0 U^dag (O_m (x) I))`` for a stack of parameter settings:

* :class:`SpectralBatch` for commuting data generators.  The network is
  block diagonal in a joint eigenbasis ``{v_k}`` of the generators, so with
  ``rho0 = |psi_m><psi_m| (x) rho_n`` the score is
  ``sum_k <v_k|rho_n|v_k> <psi_k|O_m|psi_k>`` where each ``psi_k`` lives on
  the ``m``-qubit register and sees the data only as the phase
  ``exp(i phi_t lambda_{k,t})`` on the control component.
* :class:`DenseBatch` for arbitrary per-slot ``(m+n)``-qubit embedding
  unitaries, with mixed ``rho_n`` handled as an eigen-ensemble.

Observables must be diagonal on the processing register (POVM elements and
``Z`` strings are).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dla import joint_eigenspaces
from .model import EmbeddedData, QrennArchitecture, processing_blocks
from .qstate import QuantumState

FD_STEP = 1e-5
_CHUNK_ELEMS = 1 << 22


def _rho_matrix(rho_n) -> np.ndarray:
    if isinstance(rho_n, QuantumState):
        return rho_n.density_matrix()
    r = np.asarray(rho_n, dtype=complex)
    return np.outer(r, r.conj()) if r.ndim == 1 else r


def _pure_m(psi_m, m: int) -> np.ndarray:
    if psi_m is None:
        v = np.zeros(2**m, dtype=complex)
        v[0] = 1.0
        return v
    if isinstance(psi_m, QuantumState):
        if not psi_m.is_pure:
            raise ValueError("the processing register must start in a pure state")
        psi_m = psi_m.data
    v = np.asarray(psi_m, dtype=complex).ravel()
    if v.size != 2**m:
        raise ValueError(f"processing state must have {2**m} amplitudes")
    return v


def _diag_obs(obs, m: int) -> np.ndarray:
    o = np.asarray(obs)
    if o.ndim == 2:
        if np.max(np.abs(o - np.diag(np.diag(o)))) > 1e-12:
            raise ValueError("engine observables must be diagonal on the processing register")
        o = np.diag(o)
    o = np.real(o).astype(float)
    if o.shape != (2**m,):
        raise ValueError(f"observable diagonal must have length {2**m}")
    return o


@dataclass(frozen=True)
class SpectralSample:
    """Per-sample reduction: joint eigenvalues ``(K, T)`` and weights ``(K,)``."""

    eigvals: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_data(cls, data: EmbeddedData, rho_n, drop_tol: float = 1e-14) -> "SpectralSample":
        gens = data.generators
        rho = _rho_matrix(rho_n)
        if all(np.count_nonzero(h - np.diag(np.diag(h))) == 0 for h in gens):
            lam = np.stack([np.real(np.diag(h)) for h in gens], axis=1)
            w = np.real(np.diag(rho))
            lam, inv = np.unique(lam, axis=0, return_inverse=True)
            w = np.bincount(inv.ravel(), weights=w, minlength=len(lam))
        else:
            data.check_commuting()
            eig = joint_eigenspaces(gens)
            lam = eig.tuples
            w = eig.weights(rho)
        keep = w > drop_tol
        return cls(lam[keep], w[keep])


class SpectralBatch:
    """Scores for a batch of commuting-data samples."""

    def __init__(self, arch: QrennArchitecture, samples: Sequence[SpectralSample],
                 observables: Sequence, psi_m=None):
        self.arch = arch
        m = arch.m
        if len(samples) != len(observables):
            raise ValueError("one observable per sample is required")
        if not samples:
            raise ValueError("empty batch")
        for s in samples:
            if s.eigvals.shape[1] != arch.T:
                raise ValueError(f"sample has {s.eigvals.shape[1]} slots, expected T={arch.T}")
        self.lam = np.concatenate([s.eigvals for s in samples])
        self.w = np.concatenate([s.weights for s in samples])
        self.owner = np.concatenate([np.full(len(s.weights), i) for i, s in enumerate(samples)])
        obs = np.array([_diag_obs(o, m) for o in observables])
        self.obs = obs[self.owner]
        self.n_samples = len(samples)
        self.psi0 = _pure_m(psi_m, m)

    @property
    def n_blocks(self) -> int:
        return len(self.w)

    def scores(self, thetas, phis=None) -> np.ndarray:
        """``(S, B)`` per-sample scores for ``S`` parameter settings."""
        arch = self.arch
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        s_count = thetas.shape[0]
        if phis is None:
            phis = np.ones((s_count, arch.T))
        phis = np.broadcast_to(np.atleast_2d(np.asarray(phis, dtype=float)), (s_count, arch.T))
        d = 2**arch.m
        per = max(1, _CHUNK_ELEMS // max(1, self.n_blocks * d))
        out = np.empty((s_count, self.n_samples))
        for a in range(0, s_count, per):
            out[a : a + per] = self._scores(thetas[a : a + per], phis[a : a + per])
        return out

    def shift_gradients(self, theta, phi=None, with_phi: bool = False, step: float = FD_STEP):
        """Scores and all shift-rule derivatives at one setting.

        Every shifted circuit differs from the base one in a single block, so
        the states entering each block and the observables propagated back to
        its output are computed once and reused.  The returned derivatives
        equal the shift-rule differences of :meth:`scores` up to round-off.

        Returns ``(scores (B,), d_theta (n_theta, B), d_phi (T, B) or None)``.
        """
        arch = self.arch
        d = 2**arch.m
        c = arch.control_index
        bs = arch.block_size
        theta = np.asarray(theta, dtype=float)
        phi = np.ones(arch.T) if phi is None else np.asarray(phi, dtype=float)
        tb = theta.reshape(arch.T + 1, bs)
        blocks = processing_blocks(arch.m, arch.L, tb)
        phases = np.exp(1j * phi[None, :] * self.lam)  # (K, T)

        # states entering each block
        enter = np.empty((arch.T + 1, self.n_blocks, d), dtype=complex)
        psi = np.broadcast_to(self.psi0, (self.n_blocks, d)).copy()
        for t in range(arch.T + 1):
            enter[t] = psi
            psi = psi @ blocks[t].T
            if t < arch.T:
                psi[:, c] *= phases[:, t]
        # observables seen at the output of each block, (K, d, d)
        q = np.empty((arch.T + 1, self.n_blocks, d, d), dtype=complex)
        cur = np.zeros((self.n_blocks, d, d), dtype=complex)
        cur[:, np.arange(d), np.arange(d)] = self.obs
        q[arch.T] = cur
        for t in range(arch.T - 1, -1, -1):
            w = blocks[t + 1]
            cur = np.einsum("ji,kjl,lm->kim", w.conj(), cur, w)
            # conjugate by the diagonal embedding phase on component c
            cur[:, c, :] *= phases[:, t, None].conj()
            cur[:, :, c] *= phases[:, t, None]
            q[t] = cur

        def expect(states, ops):
            return np.real(np.einsum("...ki,kij,...kj->...k", states.conj(), ops, states))

        base = expect(enter[0] @ blocks[0].T, q[0])
        scores = np.bincount(self.owner, weights=base * self.w, minlength=self.n_samples)

        d_theta = np.empty((arch.n_theta, self.n_samples))
        for t in range(arch.T + 1):
            shifted = theta_shift_settings(tb[t])
            wsh = processing_blocks(arch.m, arch.L, shifted)  # (2 bs, d, d)
            out = np.einsum("kj,sij->ski", enter[t], wsh)
            vals = expect(out, q[t]) * self.w  # (2 bs, K)
            diff = 0.5 * (vals[0::2] - vals[1::2])
            for j in range(bs):
                d_theta[t * bs + j] = np.bincount(self.owner, weights=diff[j], minlength=self.n_samples)

        d_phi = None
        if with_phi:
            d_phi = np.empty((arch.T, self.n_samples))
            for t in range(arch.T):
                g = enter[t] @ blocks[t].T
                vals = []
                for sgn in (1.0, -1.0):
                    v = g.copy()
                    v[:, c] *= np.exp(1j * (phi[t] + sgn * step) * self.lam[:, t])
                    # the observable after the slot is q[t] rotated back through the phase
                    ops = q[t].copy()
                    ops[:, c, :] *= phases[:, t, None]
                    ops[:, :, c] *= phases[:, t, None].conj()
                    vals.append(expect(v, ops))
                diff = (vals[0] - vals[1]) / (2 * step) * self.w
                d_phi[t] = np.bincount(self.owner, weights=diff, minlength=self.n_samples)
        return scores, d_theta, d_phi

    def paired_scores(self, thetas, phis=None) -> np.ndarray:
        """Score of sample ``b`` under its own setting ``thetas[b]``: shape ``(B,)``."""
        arch = self.arch
        thetas = np.asarray(thetas, dtype=float)
        if thetas.shape != (self.n_samples, arch.n_theta):
            raise ValueError(f"expected thetas of shape {(self.n_samples, arch.n_theta)}")
        if phis is None:
            phis = np.ones((self.n_samples, arch.T))
        phis = np.asarray(phis, dtype=float)
        d = 2**arch.m
        c = arch.control_index
        blocks = processing_blocks(arch.m, arch.L, thetas.reshape(-1, arch.block_size))
        blocks = blocks.reshape(self.n_samples, arch.T + 1, d, d)[self.owner]
        ph = phis[self.owner]
        psi = np.broadcast_to(self.psi0, (self.n_blocks, d)).copy()[:, :, None]
        for t in range(arch.T):
            psi = blocks[:, t] @ psi
            psi[:, c, 0] *= np.exp(1j * ph[:, t] * self.lam[:, t])
        psi = (blocks[:, arch.T] @ psi)[:, :, 0]
        vals = np.sum(np.abs(psi) ** 2 * self.obs, axis=1) * self.w
        return np.bincount(self.owner, weights=vals, minlength=self.n_samples)

    def _scores(self, thetas, phis) -> np.ndarray:
        arch = self.arch
        s_count = thetas.shape[0]
        d = 2**arch.m
        c = arch.control_index
        blocks = processing_blocks(arch.m, arch.L, thetas.reshape(-1, arch.block_size))
        blocks = blocks.reshape(s_count, arch.T + 1, d, d)
        psi = np.broadcast_to(self.psi0, (s_count, self.n_blocks, d)).copy()
        for t in range(arch.T):
            psi = psi @ np.swapaxes(blocks[:, t], 1, 2)
            psi[:, :, c] *= np.exp(1j * phis[:, t, None] * self.lam[None, :, t])
        psi = psi @ np.swapaxes(blocks[:, arch.T], 1, 2)
        vals = np.einsum("skd,kd->sk", np.abs(psi) ** 2, self.obs) * self.w
        out = np.zeros((s_count, self.n_samples))
        for s in range(s_count):
            out[s] = np.bincount(self.owner, weights=vals[s], minlength=self.n_samples)
        return out


class DenseBatch:
    """Scores with explicit per-sample, per-slot embedding unitaries.

    ``gates[b]`` is a ``(T, D, D)`` stack (or a single ``(D, D)`` unitary
    reused at every slot) acting on the full register.  The data weights
    ``phi`` are not used by this back end.
    """

    def __init__(self, arch: QrennArchitecture, gates: Sequence, observables: Sequence,
                 rho_n, psi_m=None):
        self.arch = arch
        m, n = arch.m, arch.n
        dm, dn = 2**m, 2**n
        g = []
        for gb in gates:
            gb = np.asarray(gb, dtype=complex)
            if gb.ndim == 2:
                gb = np.broadcast_to(gb, (arch.T,) + gb.shape)
            if gb.shape != (arch.T, dm * dn, dm * dn):
                raise ValueError(f"gate stack has shape {gb.shape}")
            g.append(gb)
        self.gates = np.array(g)  # (B, T, D, D)
        self.obs = np.array([_diag_obs(o, m) for o in observables])
        if len(self.obs) != len(g):
            raise ValueError("one observable per sample is required")
        rho = _rho_matrix(rho_n)
        pw, pv = np.linalg.eigh(rho)
        keep = pw > 1e-14
        self.ens_w = pw[keep]
        psi0 = _pure_m(psi_m, m)
        self.ens = np.array([np.kron(psi0, pv[:, i]) for i in np.nonzero(keep)[0]])  # (E, D)
        self.n_samples = len(g)

    def scores(self, thetas, phis=None) -> np.ndarray:
        arch = self.arch
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        s_count = thetas.shape[0]
        dm, dn = 2**arch.m, 2**arch.n
        e_count = len(self.ens_w)
        blocks = processing_blocks(arch.m, arch.L, thetas.reshape(-1, arch.block_size))
        blocks = blocks.reshape(s_count, arch.T + 1, dm, dm)
        out = np.empty((s_count, self.n_samples))
        for b in range(self.n_samples):
            psi = np.broadcast_to(self.ens, (s_count, e_count, dm * dn)).copy()
            for t in range(arch.T + 1):
                psi = psi.reshape(s_count, e_count, dm, dn)
                psi = np.einsum("sij,sejn->sein", blocks[:, t], psi).reshape(s_count, e_count, -1)
                if t < arch.T:
                    psi = psi @ self.gates[b, t].T
            prob = (np.abs(psi) ** 2).reshape(s_count, e_count, dm, dn).sum(axis=3)
            out[:, b] = np.einsum("sed,d,e->s", prob, self.obs[b], self.ens_w)
        return out


# -- losses and gradients on top of a batch ---------------------------------

def mean_loss(batch, theta, phi=None, sample_weights=None) -> float:
    """``1 - mean_b score_b``."""
    sc = batch.scores(np.asarray(theta)[None, :], None if phi is None else np.asarray(phi)[None, :])
    return float(1.0 - _avg(sc, sample_weights)[0])


def _avg(scores, sample_weights):
    if sample_weights is None:
        return scores.mean(axis=1)
    w = np.asarray(sample_weights, dtype=float)
    return scores @ (w / w.sum())


def theta_shift_settings(theta, indices=None) -> np.ndarray:
    """``(2k, n_theta)`` settings: rows ``2j`` / ``2j+1`` shift index ``j`` by ``+-pi/2``."""
    theta = np.asarray(theta, dtype=float)
    idx = np.arange(theta.size) if indices is None else np.asarray(indices)
    settings = np.repeat(theta[None, :], 2 * idx.size, axis=0)
    settings[2 * np.arange(idx.size), idx] += np.pi / 2
    settings[2 * np.arange(idx.size) + 1, idx] -= np.pi / 2
    return settings


def score_gradients(batch, theta, phi=None, indices=None, phi_indices=None, step: float = FD_STEP):
    """Per-sample score derivatives.

    Returns ``(d_theta, d_phi)`` with shapes ``(k, B)`` and ``(j, B)``.
    Rotation angles use the two-point shift rule; data weights use central
    differences.
    """
    theta = np.asarray(theta, dtype=float)
    idx = np.arange(theta.size) if indices is None else np.asarray(indices, dtype=int)
    phi_arr = None if phi is None else np.asarray(phi, dtype=float)
    settings = theta_shift_settings(theta, idx)
    sc = batch.scores(settings, phi_arr)
    d_theta = 0.5 * (sc[0::2] - sc[1::2])
    d_phi = np.zeros((0, sc.shape[1]))
    if phi_indices is not None and len(phi_indices):
        base = np.ones(batch.arch.T) if phi_arr is None else phi_arr
        pidx = np.asarray(phi_indices, dtype=int)
        ph = np.repeat(base[None, :], 2 * pidx.size, axis=0)
        ph[2 * np.arange(pidx.size), pidx] += step
        ph[2 * np.arange(pidx.size) + 1, pidx] -= step
        sp = batch.scores(np.repeat(theta[None, :], len(ph), axis=0), ph)
        d_phi = (sp[0::2] - sp[1::2]) / (2 * step)
    return d_theta, d_phi


def loss_and_gradient(batch, theta, phi=None, train_phi: bool = False, sample_weights=None):
    """Mean loss and its gradient over ``theta`` (and ``phi`` when trained)."""
    if hasattr(batch, "shift_gradients"):
        base, d_theta, d_phi = batch.shift_gradients(theta, phi, with_phi=train_phi)
        base = base[None, :]
    else:
        base = batch.scores(np.asarray(theta)[None, :], None if phi is None else np.asarray(phi)[None, :])
        pidx = np.arange(batch.arch.T) if train_phi else None
        d_theta, d_phi = score_gradients(batch, theta, phi, phi_indices=pidx)
    loss = float(1.0 - _avg(base, sample_weights)[0])
    g = -_avg(d_theta, sample_weights)
    if train_phi:
        g = np.concatenate([g, -_avg(d_phi, sample_weights)])
    return loss, g
