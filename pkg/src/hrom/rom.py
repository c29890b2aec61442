"""Structure-preserving Galerkin reduction with tensorial quadratic terms.

The reduced model keeps the skew-gradient form

    dq_r/dt = S_hat (L_hat q_r + sum_t W_t (q_r[a_t] kron q_r[b_t]))

with ``S_hat = V^T S V`` and ``L_hat = V^T L V``.  Each reduced matricized
tensor ``W_t = (V_out^T K_t) C_t`` is built offline from a row-wise outer
product ``C_t`` so the online cost never touches the full dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pod import Basis, _block_rows


def reduced_quadratic_tensor(Va: np.ndarray, Vb: np.ndarray) -> np.ndarray:
    """``C`` with ``C[i] = vec(Vb[i]^T Va[i])``, i.e. ``C (x kron y) = (Va x) * (Vb y)``.

    One batched outer product over all rows; shape ``(N, n_a * n_b)``.
    """
    Va, Vb = np.asarray(Va), np.asarray(Vb)
    if Va.shape[0] != Vb.shape[0]:
        raise ValueError(f"row-count mismatch: {Va.shape[0]} vs {Vb.shape[0]}")
    N = Va.shape[0]
    return np.einsum("ij,ik->ijk", Va, Vb).reshape(N, Va.shape[1] * Vb.shape[1])


@dataclass(frozen=True, eq=False)
class ReducedTerm:
    W: np.ndarray  # n_out x (n_a * n_b)
    a: slice
    b: slice
    out: slice

    @property
    def tensor(self) -> np.ndarray:
        n_a = self.a.stop - self.a.start
        n_b = self.b.stop - self.b.start
        return self.W.reshape(self.W.shape[0], n_a, n_b)


class ReducedModel:
    """Reduced skew-gradient system; same interface as the full model."""

    def __init__(self, model, basis: Basis, S_hat, L_hat, terms):
        self.model = model
        self.basis = basis
        self.S_hat = S_hat
        self.L_hat = L_hat
        self.terms = tuple(terms)
        self._tensors = [t.tensor for t in self.terms]
        self.dim = S_hat.shape[0]
        self.weight = model.weight
        self.V = basis.dense(model.fields)

    def __repr__(self):
        return f"ReducedModel(kind={self.model.kind!r}, n={self.dim}, blocks={self.basis.sizes})"

    def _check(self, q_r):
        q_r = np.asarray(q_r, dtype=float)
        if q_r.shape != (self.dim,):
            raise ValueError(f"reduced state has shape {q_r.shape}, expected ({self.dim},)")
        return q_r

    def gradient(self, q_r):
        q_r = self._check(q_r)
        g = self.L_hat @ q_r
        for t, T in zip(self.terms, self._tensors):
            # contract n_b then n_a: O(n_out n_a n_b), no Kronecker vector
            g[t.out] += (T @ q_r[t.b]) @ q_r[t.a]
        return g

    def energy_gradient(self, q_r):
        return self.weight * self.gradient(q_r)

    def rhs(self, q_r):
        return self.S_hat @ self.gradient(q_r)

    def gradient_jacobian(self, q_r):
        q_r = self._check(q_r)
        G = self.L_hat.copy()
        for t, T in zip(self.terms, self._tensors):
            G[t.out, t.a] += T @ q_r[t.b]
            G[t.out, t.b] += np.einsum("ijk,j->ik", T, q_r[t.a])
        return G

    def jacobian(self, q_r):
        return self.S_hat @ self.gradient_jacobian(q_r)

    def step_matrix(self, q_r, dt):
        return np.eye(self.dim) - 0.5 * dt * self.jacobian(q_r)

    def lift(self, q_r):
        return lift(self.basis, q_r, self.model.fields)

    def project(self, q):
        return project(self.basis, q, self.model.fields)

    def hamiltonian(self, q_r):
        return self.model.hamiltonian(self.lift(q_r))

    def invariants(self, q_r):
        return self.model.invariants(self.lift(q_r))


class LiftedReducedModel(ReducedModel):
    """Same reduced system, but nonlinear terms are evaluated in full space.

    Every call lifts to dimension N, so cost grows as O(nN) (rhs) and
    O(n^2 N) (Jacobian).  Used as the POD baseline.
    """

    def __init__(self, rmodel: ReducedModel):
        super().__init__(rmodel.model, rmodel.basis, rmodel.S_hat, rmodel.L_hat, rmodel.terms)
        fields = self.model.fields
        self._lifted_terms = []
        for t, rt in zip(self.model.grad.terms, self.terms):
            Va, _ = self.basis.locate(t.a, fields)
            Vb, _ = self.basis.locate(t.b, fields)
            Vo, _ = self.basis.locate(t.out, fields)
            KtV = np.asarray(t.K.T @ Vo)
            self._lifted_terms.append((fields[t.a], fields[t.b], Va, Vb, KtV, rt))

    def gradient(self, q_r):
        q_r = self._check(q_r)
        return self.V.T @ self.model.gradient(self.V @ q_r)

    def gradient_jacobian(self, q_r):
        q = self.V @ self._check(q_r)
        G = self.L_hat.copy()
        for sa, sb, Va, Vb, KtV, rt in self._lifted_terms:
            G[rt.out, rt.a] += KtV.T @ (q[sb][:, None] * Va)
            G[rt.out, rt.b] += KtV.T @ (q[sa][:, None] * Vb)
        return G


def reduce(model, basis: Basis) -> ReducedModel:
    """Galerkin-project ``model`` onto ``basis`` keeping the skew-gradient form."""
    fields = model.fields
    covered = [f for b in basis.blocks for f in b.fields]
    if sorted(covered) != sorted(fields):
        raise ValueError(f"basis covers fields {covered}, model has {list(fields)}")
    for blk in basis.blocks:
        rows = _block_rows(blk, fields)
        if blk.V.shape[0] != rows.stop - rows.start:
            raise ValueError(f"basis block {blk.fields} has {blk.V.shape[0]} rows, expected {rows.stop - rows.start}")
        if np.linalg.matrix_rank(blk.V) < blk.V.shape[1]:
            raise ValueError(f"basis block {blk.fields} is rank deficient")
    V = basis.dense(fields)
    A = V.T @ (model.S.matrix @ V)
    # V^T S V is skew in exact arithmetic; (A - A^T)/2 makes it skew bitwise
    S_hat = 0.5 * (A - A.T)
    L_hat = V.T @ (model.grad.L @ V)
    terms = []
    for t in model.grad.terms:
        Va, ra = basis.locate(t.a, fields)
        Vb, rb = basis.locate(t.b, fields)
        Vo, ro = basis.locate(t.out, fields)
        C = reduced_quadratic_tensor(Va, Vb)
        W = np.asarray(t.K.T @ Vo).T @ C
        terms.append(ReducedTerm(W, ra, rb, ro))
    return ReducedModel(model, basis, S_hat, L_hat, terms)


def rom_rhs_tensorial(rmodel: ReducedModel, q_r) -> np.ndarray:
    """``S_hat (L_hat q_r + sum_t W_t (q_a kron q_b))``, cost independent of N."""
    return rmodel.S_hat @ ReducedModel.gradient(rmodel, q_r)


def rom_rhs_lifted(rmodel: ReducedModel, q_r) -> np.ndarray:
    """``S_hat V^T grad H(V q_r)``: lift, evaluate the full gradient, project."""
    V = rmodel.V
    q_r = np.asarray(q_r, dtype=float)
    return rmodel.S_hat @ (V.T @ rmodel.model.gradient(V @ q_r))


def lift(basis: Basis, q_r, fields) -> np.ndarray:
    """Block-wise ``V q_r``; a 2D ``q_r`` lifts column by column."""
    q_r = np.asarray(q_r, dtype=float)
    if q_r.shape[0] != basis.n:
        raise ValueError(f"reduced state has length {q_r.shape[0]}, basis has {basis.n}")
    N = max(s.stop for s in fields.values())
    out = np.zeros((N,) + q_r.shape[1:])
    for blk, rs in zip(basis.blocks, basis.reduced_slices()):
        out[_block_rows(blk, fields)] = blk.V @ q_r[rs]
    return out


def project(basis: Basis, q, fields) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    parts = [blk.V.T @ q[_block_rows(blk, fields)] for blk in basis.blocks]
    return np.concatenate(parts, axis=0)
