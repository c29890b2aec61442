"""Periodic centred finite-difference operators on uniform 1D and 2D grids.

All operators are circulant (1D) or Kronecker products of circulants (2D) and
are stored as CSR matrices.  Entries are integer multiples of a single scaled
value, so skew-/symmetry and zero row sums hold exactly in floating point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class InvalidGridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    N: int
    a: float
    b: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise InvalidGridError(f"N must be an integer >= 3, got {self.N}")
        if not self.b > self.a:
            raise InvalidGridError(f"need a < b, got a={self.a}, b={self.b}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.N

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def x(self) -> np.ndarray:
        # x_{N+1} = b is identified with x_1 and not stored
        return self.a + self.h * np.arange(self.N)

    @classmethod
    def from_spacing(cls, a: float, b: float, h: float) -> "Grid1D":
        N = int(round((b - a) / h))
        if not np.isclose(N * h, b - a, rtol=1e-9, atol=0.0):
            raise InvalidGridError(f"spacing {h} does not divide [{a}, {b}]")
        return cls(N, a, b)


@dataclass(frozen=True)
class Grid2D:
    """Rectangle [a, b] x [c, d].  States are x-major: u[i, j] -> i*Ny + j."""

    Nx: int
    Ny: int
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        Grid1D(self.Nx, self.a, self.b)
        Grid1D(self.Ny, self.c, self.d)

    @property
    def gx(self) -> Grid1D:
        return Grid1D(self.Nx, self.a, self.b)

    @property
    def gy(self) -> Grid1D:
        return Grid1D(self.Ny, self.c, self.d)

    @property
    def hx(self) -> float:
        return (self.b - self.a) / self.Nx

    @property
    def hy(self) -> float:
        return (self.d - self.c) / self.Ny

    @property
    def size(self) -> int:
        return self.Nx * self.Ny

    def index(self, i: int, j: int) -> int:
        """Linear index of node (i, j), both zero-based."""
        if not (0 <= i < self.Nx and 0 <= j < self.Ny):
            raise IndexError((i, j))
        return i * self.Ny + j

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as (Nx, Ny) arrays; ravel() gives state ordering."""
        return np.meshgrid(self.gx.x, self.gy.x, indexing="ij")


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Immutable sparse matrix tagged with its exact symmetry class."""

    matrix: sp.csr_matrix
    structure: str = "general"  # "skew" | "symmetric" | "general"
    name: str = field(default="", compare=False)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)
        if self.structure == "skew" and _residual(m, -1.0) != 0.0:
            raise ValueError(f"{self.name or 'operator'} is not exactly skew-symmetric")
        if self.structure == "symmetric" and _residual(m, 1.0) != 0.0:
            raise ValueError(f"{self.name or 'operator'} is not exactly symmetric")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            return self.matrix @ other.matrix
        return self.matrix @ other

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _residual(m: sp.csr_matrix, sign: float) -> float:
    """max |A - sign*A^T| computed on the sparse structure."""
    r = (m - sign * m.T).tocsr()
    r.eliminate_zeros()
    return float(abs(r).max()) if r.nnz else 0.0


def _circulant(N: int, offsets, values) -> sp.csr_matrix:
    rows = np.tile(np.arange(N), len(offsets))
    cols = np.concatenate([(np.arange(N) + k) % N for k in offsets])
    data = np.concatenate([np.full(N, v, dtype=float) for v in values])
    return sp.csr_matrix((data, (rows, cols)), shape=(N, N))


def _check(grid):
    if not isinstance(grid, Grid1D):
        raise InvalidGridError(f"expected Grid1D, got {type(grid).__name__}")


def periodic_d1(grid: Grid1D) -> SparseOperator:
    """Centred first derivative, ``(u[i+1] - u[i-1]) / 2h`` with wrap-around."""
    _check(grid)
    c = 1.0 / (2.0 * grid.h)
    return SparseOperator(_circulant(grid.N, (1, -1), (c, -c)), "skew", "D1")


def periodic_d2(grid: Grid1D) -> SparseOperator:
    """Centred second derivative, ``(u[i+1] - 2u[i] + u[i-1]) / h^2``."""
    _check(grid)
    d = 1.0 / grid.h**2
    return SparseOperator(_circulant(grid.N, (0, 1, -1), (-2.0 * d, d, d)), "symmetric", "D2")


def d3_product(d1: SparseOperator, d2: SparseOperator) -> SparseOperator:
    """Third-derivative operator as the explicit product D1 @ D2."""
    if d1.shape[1] != d2.shape[0]:
        raise ValueError(f"dimension mismatch: {d1.shape} @ {d2.shape}")
    return SparseOperator(d1.matrix @ d2.matrix, "skew", "D3")


def kron_2d(grid: Grid2D) -> dict[str, SparseOperator]:
    """Return Dx, Dxx, Dyy, Dxxx, Dxyy for the x-major 2D ordering."""
    if not isinstance(grid, Grid2D):
        raise InvalidGridError(f"expected Grid2D, got {type(grid).__name__}")
    Ix = sp.identity(grid.Nx, format="csr")
    Iy = sp.identity(grid.Ny, format="csr")
    D1x = periodic_d1(grid.gx).matrix
    D2x = periodic_d2(grid.gx).matrix
    D2y = periodic_d2(grid.gy).matrix
    Dx = SparseOperator(sp.kron(D1x, Iy, format="csr"), "skew", "Dx")
    Dxx = SparseOperator(sp.kron(D2x, Iy, format="csr"), "symmetric", "Dxx")
    Dyy = SparseOperator(sp.kron(Ix, D2y, format="csr"), "symmetric", "Dyy")
    return {
        "Dx": Dx,
        "Dxx": Dxx,
        "Dyy": Dyy,
        "Dxxx": SparseOperator(Dx.matrix @ Dxx.matrix, "skew", "Dxxx"),
        "Dxyy": SparseOperator(Dx.matrix @ Dyy.matrix, "skew", "Dxyy"),
    }
