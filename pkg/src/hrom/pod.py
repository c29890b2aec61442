"""Snapshot sets, randomized SVD and POD basis construction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class RankError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Dense N x m matrix of states; column k is the state at ``times[k]``."""

    data: np.ndarray
    fields: dict[str, slice]
    times: np.ndarray | None = None

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] == 0:
            raise ValueError("snapshot matrix must be 2D and nonempty")
        if self.times is not None:
            t = np.asarray(self.times)
            if t.size != self.data.shape[1]:
                raise ValueError("times do not match snapshot count")
            if np.any(np.diff(t) <= 0):
                raise ValueError("snapshot times must be strictly increasing")

    @classmethod
    def from_trajectory(cls, traj, fields, include_initial: bool = False) -> "SnapshotSet":
        k0 = 0 if include_initial else 1
        return cls(traj.states[:, k0:], dict(fields), traj.times[k0:])

    def field(self, name: str) -> np.ndarray:
        return self.data[self.fields[name]]


@dataclass(frozen=True)
class SpectrumReport:
    singular_values: np.ndarray
    total_energy: float  # sum of all sigma_k^2 (= squared Frobenius norm)

    @property
    def ric(self) -> np.ndarray:
        return ric_curve(self.singular_values, self.total_energy)


def randomized_svd(M, k: int, oversample: int = 10, power_iters: int = 2, seed: int = 0):
    """Rank-``k`` factorisation ``M ~ V diag(s) U^T`` by a Gaussian range finder.

    Returns ``(V, s, U)`` with orthonormal columns in ``V`` (N x k) and
    ``U`` (m x k).  Power iterations are re-orthonormalised with QR.
    """
    M = np.asarray(M)
    N, m = M.shape
    ell = k + oversample
    if k < 1 or ell > min(N, m):
        raise RankError(f"k + oversample = {ell} exceeds min dimension {min(N, m)}")
    rng = np.random.default_rng(seed)
    Y = M @ rng.standard_normal((m, ell))
    Qm, _ = np.linalg.qr(Y)
    for _ in range(power_iters):
        Z, _ = np.linalg.qr(M.T @ Qm)
        Qm, _ = np.linalg.qr(M @ Z)
    B = Qm.T @ M
    Ub, s, Wt = np.linalg.svd(B, full_matrices=False)
    return Qm @ Ub[:, :k], s[:k], Wt[:k].T


def ric_curve(sigma, total_energy: float | None = None) -> np.ndarray:
    """Percentage of squared singular-value mass captured by the first n modes."""
    s2 = np.asarray(sigma, dtype=float) ** 2
    if s2.size == 0:
        raise ValueError("empty spectrum")
    total = s2.sum() if total_energy is None else float(total_energy)
    if total <= 0:
        raise ValueError("spectrum is identically zero")
    return 100.0 * np.cumsum(s2) / total


def ric_select(sigma, threshold: float = 99.99, total_energy: float | None = None) -> int:
    """Smallest n with RIC(n) >= threshold.

    ``total_energy`` supplies the full denominator when ``sigma`` is a
    truncated (e.g. randomized) spectrum.
    """
    curve = ric_curve(sigma, total_energy)
    hit = np.nonzero(curve >= threshold)[0]
    if hit.size == 0:
        raise RankError(f"RIC reaches only {curve[-1]:.6f}% < {threshold}% with {curve.size} values")
    return int(hit[0]) + 1


@dataclass(frozen=True, eq=False)
class BasisBlock:
    fields: tuple[str, ...]
    V: np.ndarray  # rows: the stacked fields, columns: reduced coordinates


@dataclass(frozen=True, eq=False)
class Basis:
    """Orthonormal reduction basis made of one or more diagonal blocks."""

    blocks: tuple[BasisBlock, ...]
    spectra: dict[str, SpectrumReport] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return sum(b.V.shape[1] for b in self.blocks)

    @property
    def sizes(self) -> list[int]:
        return [b.V.shape[1] for b in self.blocks]

    def reduced_slices(self) -> list[slice]:
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b.V.shape[1]))
            start += b.V.shape[1]
        return out

    def locate(self, field_name: str, fields: dict[str, slice]):
        """Rows of ``field_name`` within its block's V, and the block's reduced slice."""
        for blk, rs in zip(self.blocks, self.reduced_slices()):
            if field_name in blk.fields:
                offset = 0
                for f in blk.fields:
                    sl = fields[f]
                    size = sl.stop - sl.start
                    if f == field_name:
                        return blk.V[offset:offset + size], rs
                    offset += size
        raise KeyError(f"field {field_name!r} is not covered by the basis")

    def dense(self, fields: dict[str, slice]) -> np.ndarray:
        """Full N x n matrix (zeros outside the diagonal blocks)."""
        N = max(s.stop for s in fields.values())
        out = np.zeros((N, self.n))
        for blk, rs in zip(self.blocks, self.reduced_slices()):
            rows = _block_rows(blk, fields)
            out[rows, rs] = blk.V
        return out

    def orthonormality_error(self) -> float:
        return max(np.abs(b.V.T @ b.V - np.eye(b.V.shape[1])).max() for b in self.blocks)


def _block_rows(blk: BasisBlock, fields: dict[str, slice]) -> slice:
    sl = [fields[f] for f in blk.fields]
    for s0, s1 in zip(sl, sl[1:]):
        if s0.stop != s1.start:
            raise ValueError(f"fields {blk.fields} are not contiguous")
    return slice(sl[0].start, sl[-1].stop)


def _left_vectors(M, n, threshold, method, rank, oversample, power_iters, seed):
    total = float(np.einsum("ij,ij->", M, M))
    if method == "svd":
        V, s, _ = np.linalg.svd(M, full_matrices=False)
        spec = SpectrumReport(s, total)
    elif method == "rsvd":
        kmax = min(M.shape) - oversample
        k = min(rank, kmax)
        # grow the sketch until it holds the requested modes
        while True:
            V, s, _ = randomized_svd(M, k, oversample, power_iters, seed)
            spec = SpectrumReport(s, total)
            enough = n <= k if n is not None else spec.ric[-1] >= threshold
            if enough or k >= kmax:
                break
            k = min(2 * k, kmax)
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    if n is None:
        n = ric_select(spec.singular_values, threshold, total)
    if n > V.shape[1] or (n > 0 and spec.singular_values[n - 1] <= 1e-14 * spec.singular_values[0]):
        raise RankError(f"requested {n} modes but the snapshots have numerical rank below that")
    return V[:, :n].copy(), spec


def build_basis(snapshots: SnapshotSet, mode: str = "monolithic", n=None,
                threshold: float = 99.99, method: str = "svd", rank: int = 100,
                oversample: int = 10, power_iters: int = 2, seed: int = 0) -> Basis:
    """POD basis from left singular vectors of the snapshot matrix.

    ``mode="per_field"`` takes an independent SVD per field and assembles the
    blocks diagonally; ``n`` may then be a dict keyed by field.
    ``mode="shared"`` computes one basis from the field blocks placed side by
    side (all fields must have equal length) and uses it for every block.
    When ``n`` is None the mode count is chosen by RIC >= ``threshold``.
    """
    if mode == "monolithic":
        names = tuple(snapshots.fields)
        if isinstance(n, dict):
            raise ValueError("monolithic basis takes a single mode count")
        V, spec = _left_vectors(snapshots.data, n, threshold, method, rank, oversample,
                                power_iters, seed)
        return Basis((BasisBlock(names, V),), {"+".join(names): spec})
    if mode == "per_field":
        blocks, spectra = [], {}
        for name in snapshots.fields:
            nf = n.get(name) if isinstance(n, dict) else n
            V, spec = _left_vectors(snapshots.field(name), nf, threshold, method, rank,
                                    oversample, power_iters, seed)
            blocks.append(BasisBlock((name,), V))
            spectra[name] = spec
        return Basis(tuple(blocks), spectra)
    if mode == "shared":
        names = tuple(snapshots.fields)
        if isinstance(n, dict):
            raise ValueError("shared basis takes a single mode count")
        parts = [snapshots.field(name) for name in names]
        if len({p.shape[0] for p in parts}) != 1:
            raise ValueError("shared basis needs fields of equal length")
        V, spec = _left_vectors(np.hstack(parts), n, threshold, method, rank, oversample,
                                power_iters, seed)
        return Basis(tuple(BasisBlock((name,), V) for name in names), {"shared": spec})
    raise ValueError(f"unknown basis mode {mode!r}")
