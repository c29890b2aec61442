import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hrom.operators import (
    Grid1D,
    Grid2D,
    InvalidGridError,
    SparseOperator,
    d3_product,
    kron_2d,
    periodic_d1,
    periodic_d2,
)


def dense_d1(N, h):
    D = np.zeros((N, N))
    for i in range(N):
        D[i, (i + 1) % N] += 1.0 / (2 * h)
        D[i, (i - 1) % N] -= 1.0 / (2 * h)
    return D


def dense_d2(N, h):
    D = np.zeros((N, N))
    for i in range(N):
        D[i, i] = -2.0 / h**2
        D[i, (i + 1) % N] += 1.0 / h**2
        D[i, (i - 1) % N] += 1.0 / h**2
    return D


def test_grid_nodes_and_spacing():
    g = Grid1D(4, 0.0, 4.0)
    assert g.h == 1.0
    np.testing.assert_array_equal(g.x, [0.0, 1.0, 2.0, 3.0])


@pytest.mark.parametrize("N", [0, 2, 2.5])
def test_grid_rejects_small_or_fractional_N(N):
    with pytest.raises(InvalidGridError):
        Grid1D(N, 0.0, 1.0)


def test_grid_rejects_empty_interval():
    with pytest.raises(InvalidGridError):
        Grid1D(8, 1.0, 1.0)


def test_from_spacing():
    g = Grid1D.from_spacing(-10, 10, 0.002)
    assert g.N == 10000
    with pytest.raises(InvalidGridError):
        Grid1D.from_spacing(0, 1, 0.3)


def test_d1_small_matrix():
    D = periodic_d1(Grid1D(4, 0.0, 4.0)).toarray()
    expected = 0.5 * np.array([[0, 1, 0, -1], [-1, 0, 1, 0], [0, -1, 0, 1], [1, 0, -1, 0]])
    np.testing.assert_array_equal(D, expected)


def test_d2_small_matrix():
    D = periodic_d2(Grid1D(3, 0.0, 3.0)).toarray()
    np.testing.assert_array_equal(D, [[-2, 1, 1], [1, -2, 1], [1, 1, -2]])


def test_d1_sine_second_order():
    # N=8, h=0.5 and a halved spacing: error ratio ~4
    errs = []
    for N in (8, 16):
        g = Grid1D(N, 0.0, 4.0)
        u = np.sin(2 * np.pi * g.x / g.length)
        du = 2 * np.pi / g.length * np.cos(2 * np.pi * g.x / g.length)
        D = periodic_d1(g)
        np.testing.assert_array_equal(D @ u, dense_d1(N, g.h) @ u)
        errs.append(np.abs(D @ u - du).max())
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_d2_eigenvalues_nonpositive():
    g = Grid1D(16, 0.0, 2.0)
    ev = np.linalg.eigvalsh(periodic_d2(g).toarray())
    assert ev.max() <= 1e-10
    # dense eigen oracle: 2(cos(2 pi k/N) - 1)/h^2
    k = np.arange(16)
    np.testing.assert_allclose(np.sort(ev), np.sort(2 * (np.cos(2 * np.pi * k / 16) - 1) / g.h**2),
                               atol=1e-10)


def test_d3_is_dense_product():
    g = Grid1D(6, 0.0, 6.0)
    D3 = d3_product(periodic_d1(g), periodic_d2(g)).toarray()
    np.testing.assert_array_equal(D3, dense_d1(6, 1.0) @ dense_d2(6, 1.0))


def test_d3_skew_and_constant_kernel():
    g = Grid1D(16, 0.0, 4.0)
    D3 = d3_product(periodic_d1(g), periodic_d2(g))
    assert np.abs(D3.toarray() + D3.toarray().T).max() == 0.0
    np.testing.assert_array_equal(D3 @ np.full(16, 3.7), 0.0)


def test_d3_dimension_mismatch():
    with pytest.raises(ValueError):
        d3_product(periodic_d1(Grid1D(5, 0, 1)), periodic_d2(Grid1D(6, 0, 1)))


def test_sparse_operator_rejects_wrong_tag():
    with pytest.raises(ValueError):
        SparseOperator(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])), "skew")
    with pytest.raises(ValueError):
        SparseOperator(sp.csr_matrix(np.array([[0.0, 1.0], [-1.0, 0.0]])), "symmetric")


def test_kron_matches_dense_kronecker():
    grid = Grid2D(3, 3, 0.0, 3.0, 0.0, 1.5)
    ops = kron_2d(grid)
    D1x, D2x = dense_d1(3, grid.hx), dense_d2(3, grid.hx)
    D2y = dense_d2(3, grid.hy)
    I = np.eye(3)
    np.testing.assert_array_equal(ops["Dx"].toarray(), np.kron(D1x, I))
    np.testing.assert_array_equal(ops["Dxx"].toarray(), np.kron(D2x, I))
    np.testing.assert_array_equal(ops["Dyy"].toarray(), np.kron(I, D2y))
    np.testing.assert_allclose(ops["Dxxx"].toarray(), np.kron(D1x, I) @ np.kron(D2x, I), rtol=0, atol=0)
    np.testing.assert_allclose(ops["Dxyy"].toarray(), np.kron(D1x, I) @ np.kron(I, D2y), rtol=0, atol=0)
    for op in ops.values():
        assert op.shape == (9, 9)


def test_kron_dx_kills_x_constant_fields():
    grid = Grid2D(6, 5, 0.0, 1.0, 0.0, 2.0)
    X, Y = grid.mesh()
    u = np.sin(Y).ravel()
    np.testing.assert_array_equal(kron_2d(grid)["Dx"] @ u, 0.0)


def test_grid2d_index_is_x_major():
    grid = Grid2D(4, 3, 0.0, 1.0, 0.0, 1.0)
    X, Y = grid.mesh()
    assert grid.index(2, 1) == 7
    assert X.ravel()[grid.index(2, 1)] == grid.gx.x[2]
    assert Y.ravel()[grid.index(2, 1)] == grid.gy.x[1]
    with pytest.raises(IndexError):
        grid.index(4, 0)


def test_kron_rejects_1d_grid():
    with pytest.raises(InvalidGridError):
        kron_2d(Grid1D(4, 0, 1))


@settings(max_examples=30, deadline=None)
@given(N=st.integers(3, 64), L=st.floats(0.5, 100.0))
def test_exact_structure_and_zero_row_sums(N, L):
    g = Grid1D(N, -L / 2, L / 2)
    D1, D2 = periodic_d1(g), periodic_d2(g)
    ops = [(D1, -1), (D2, 1), (d3_product(D1, D2), -1)]
    one = np.ones(N)
    for op, sign in ops:
        A = op.toarray()
        assert np.abs(A - sign * A.T).max() == 0.0
        # integer multiples of one scaled value: sums cancel exactly
        assert np.abs(op @ one).max() <= 1e-12 * np.abs(A).max()
        assert np.abs(one @ A).max() <= 1e-12 * np.abs(A).max()


def ordered_dense_matvec(A, u):
    # dense oracle summing A[i, j] u[j] in increasing j; zero entries add exact zeros
    acc = np.zeros(A.shape[0])
    for j in range(A.shape[1]):
        acc += A[:, j] * u[j]
    return acc


@settings(max_examples=30, deadline=None)
@given(N=st.integers(3, 64), seed=st.integers(0, 2**32 - 1))
def test_matvec_matches_dense_oracle_exactly(N, seed):
    g = Grid1D(N, 0.0, 1.0)
    u = np.random.default_rng(seed).standard_normal(N)
    for A, dense in ((periodic_d1(g), dense_d1(N, g.h)), (periodic_d2(g), dense_d2(N, g.h))):
        np.testing.assert_array_equal(A @ u, ordered_dense_matvec(dense, u))


@settings(max_examples=15, deadline=None)
@given(Nx=st.integers(3, 8), Ny=st.integers(3, 8))
def test_2d_structure(Nx, Ny):
    ops = kron_2d(Grid2D(Nx, Ny, 0.0, 1.0, -1.0, 1.0))
    one = np.ones(Nx * Ny)
    for name, sign in [("Dx", -1), ("Dxxx", -1), ("Dxyy", -1), ("Dxx", 1), ("Dyy", 1)]:
        A = ops[name].toarray()
        assert np.abs(A - sign * A.T).max() == 0.0
        assert np.abs(A @ one).max() <= 1e-12 * np.abs(A).max()
