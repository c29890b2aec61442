"""KdV-type PDEs as linear-quadratic skew-gradient ODE systems.

Every model is written as ``dq/dt = S grad H(q)`` with a constant skew matrix
``S`` and a gradient of the form

    grad H(q) = L q + sum_t K_t (q[a_t] * q[b_t])

where ``L`` is symmetric and each quadratic term multiplies two field blocks
elementwise.  The gradient is taken in the mesh-weighted inner product, so the
Euclidean gradient of the discrete Hamiltonian is ``weight * grad H``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.sparse as sp

from .operators import (
    Grid1D,
    Grid2D,
    SparseOperator,
    d3_product,
    kron_2d,
    periodic_d1,
    periodic_d2,
)

KINDS = ("single_kdv", "coupled_kdv", "zakharov_kuznetsov")


class ConfigError(ValueError):
    """Invalid or incomplete model configuration."""


@dataclass(frozen=True, eq=False)
class QuadGradTerm:
    K: sp.csr_matrix
    a: str
    b: str
    out: str


@dataclass(frozen=True, eq=False)
class GradientForm:
    L: sp.csr_matrix
    terms: tuple[QuadGradTerm, ...]


@dataclass(frozen=True)
class InvariantSet:
    H: float | np.ndarray
    I1: float | np.ndarray
    I2: float | np.ndarray
    I3: float | np.ndarray | None = None

    def as_dict(self) -> dict:
        d = {"H": self.H, "I1": self.I1, "I2": self.I2}
        if self.I3 is not None:
            d["I3"] = self.I3
        return d


class _JacobianAssembler:
    """Assemble ``f'(q)`` (and ``I - c f'(q)``) on a fixed CSC pattern.

    The pattern is the union of ``S L``, the identity and every
    ``S[:, out] K diag(q[.])`` block; per call only the diag-scaled values
    are refreshed through one weighted bincount.
    """

    def __init__(self, N: int, S: sp.csr_matrix, B_l: sp.csr_matrix,
                 terms: Sequence[QuadGradTerm], fields: Mapping[str, slice]):
        self.N = N
        S = sp.csc_matrix(S)
        base = sp.coo_matrix(B_l)
        rows, cols, vals, scale = [], [], [], []
        for t in terms:
            so, sa, sb = fields[t.out], fields[t.a], fields[t.b]
            M = sp.coo_matrix(S[:, so] @ t.K)
            # d/dq_a of K(q_a*q_b) -> columns of block a scaled by q_b, and vice versa
            for col_block, src_block in ((sa, sb), (sb, sa)):
                rows.append(M.row)
                cols.append(M.col + col_block.start)
                vals.append(M.data)
                scale.append(M.col + src_block.start)
        diag = np.arange(N)
        all_rows = np.concatenate([base.row, diag, *rows])
        all_cols = np.concatenate([base.col, diag, *cols])
        keys = np.unique(all_cols.astype(np.int64) * N + all_rows)
        self.indices = (keys % N).astype(np.int32)
        self.indptr = np.searchsorted(keys // N, np.arange(N + 1)).astype(np.int32)
        nnz = keys.size

        def pos(r, c):
            return np.searchsorted(keys, c.astype(np.int64) * N + r)

        self.nnz = nnz
        self.base = np.bincount(pos(base.row, base.col), weights=base.data, minlength=nnz)
        self.eye = np.zeros(nnz)
        self.eye[pos(diag, diag)] = 1.0
        if rows:
            self.q_pos = pos(np.concatenate(rows), np.concatenate(cols))
            self.q_vals = np.concatenate(vals)
            self.q_src = np.concatenate(scale)
        else:
            self.q_pos = np.zeros(0, dtype=np.int64)
            self.q_vals = np.zeros(0)
            self.q_src = np.zeros(0, dtype=np.int64)

    def values(self, q: np.ndarray) -> np.ndarray:
        w = self.q_vals * q[self.q_src]
        return self.base + np.bincount(self.q_pos, weights=w, minlength=self.nnz)

    def matrix(self, data: np.ndarray) -> sp.csc_matrix:
        return sp.csc_matrix((data, self.indices, self.indptr), shape=(self.N, self.N))


class SkewGradientModel:
    """Semi-discrete skew-gradient system ``dq/dt = S (L q + sum_t K_t(q_a*q_b))``."""

    def __init__(self, kind: str, params: dict, grid, fields: dict[str, slice],
                 S: SparseOperator, grad: GradientForm, weight: float,
                 energy: Callable, ops: dict[str, SparseOperator] | None = None):
        if S.structure != "skew":
            raise ValueError("S must be tagged skew-symmetric")
        if abs(grad.L - grad.L.T).max() != 0.0:
            raise ValueError("L must be exactly symmetric")
        self.kind = kind
        self.params = dict(params)
        self.grid = grid
        self.fields = dict(fields)
        self.S = S
        self.grad = grad
        self.weight = float(weight)
        self.ops = ops or {}
        self._energy = energy
        self.dim = S.shape[0]
        # a single periodic 1D band factors best in natural order; coupled 1D
        # blocks need column reordering (minimum degree on A^T + A fills in
        # badly there), while 2D grids favour minimum degree on A^T + A
        if isinstance(grid, Grid1D):
            self.lu_ordering = "NATURAL" if len(fields) == 1 else "COLAMD"
        else:
            self.lu_ordering = "MMD_AT_PLUS_A"
        self.B_l = sp.csr_matrix(S.matrix @ grad.L)
        self._jac = _JacobianAssembler(self.dim, S.matrix, self.B_l, grad.terms, self.fields)

    def __repr__(self):
        return f"SkewGradientModel(kind={self.kind!r}, dim={self.dim}, params={self.params})"

    def _check(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[0] != self.dim:
            raise ValueError(f"state has length {q.shape[0]}, model expects {self.dim}")
        return q

    def quadratic_gradient(self, q: np.ndarray) -> np.ndarray:
        g = np.zeros_like(q, dtype=float)
        for t in self.grad.terms:
            g[self.fields[t.out]] += t.K @ (q[self.fields[t.a]] * q[self.fields[t.b]])
        return g

    def gradient(self, q: np.ndarray) -> np.ndarray:
        """Mesh-weighted gradient of the discrete Hamiltonian."""
        q = self._check(q)
        return self.grad.L @ q + self.quadratic_gradient(q)

    def energy_gradient(self, q: np.ndarray) -> np.ndarray:
        """Euclidean gradient of H, i.e. ``weight * gradient(q)``."""
        return self.weight * self.gradient(q)

    def rhs(self, q: np.ndarray) -> np.ndarray:
        q = self._check(q)
        return self.B_l @ q + self.S.matrix @ self.quadratic_gradient(q)

    def jacobian(self, q: np.ndarray) -> sp.csc_matrix:
        q = self._check(q)
        return self._jac.matrix(self._jac.values(q))

    def step_matrix(self, q: np.ndarray, dt: float) -> sp.csc_matrix:
        """``I - dt/2 f'(q)``, the Kahan system matrix."""
        q = self._check(q)
        return self._jac.matrix(self._jac.eye - 0.5 * dt * self._jac.values(q))

    def hamiltonian(self, q: np.ndarray):
        return self._energy(self, self._check(q))[0]

    def invariants(self, q: np.ndarray) -> InvariantSet:
        """Discrete H, I1, I2 (and I3); columns of a 2D ``q`` are evaluated separately."""
        return self._energy(self, self._check(q))[1]


# --- discrete Hamiltonians -----------------------------------------------------

def _single_energy(model, u):
    h = model.grid.h
    al, mu = model.params["alpha"], model.params["mu"]
    du = (np.roll(u, -1, axis=0) - u) / h
    H = np.sum(-al / 6.0 * u**3 + 0.5 * mu * du**2, axis=0) * h
    return H, InvariantSet(H, np.sum(u**2, axis=0) * h, np.sum(u, axis=0) * h)


def _coupled_energy(model, q):
    h = model.grid.h
    N = model.grid.N
    u, v = q[:N], q[N:]
    d2v = model.ops["D2"].matrix @ v
    H = np.sum(-u * v - 0.25 * u * v**2 - 0.25 * u**3 - u * d2v / 6.0, axis=0) * h
    I1 = np.sum(u**2 + v**2, axis=0) * h
    return H, InvariantSet(H, I1, np.sum(u, axis=0) * h, np.sum(v, axis=0) * h)


def _zk_energy(model, q):
    g = model.grid
    al, mu = model.params["alpha"], model.params["mu"]
    U = q.reshape((g.Nx, g.Ny) + q.shape[1:])
    dx = (np.roll(U, -1, axis=0) - U) / g.hx
    dy = (np.roll(U, -1, axis=1) - U) / g.hy
    w = g.hx * g.hy
    H = np.sum(-al / 6.0 * U**3 + 0.5 * mu * (dx**2 + dy**2), axis=(0, 1)) * w
    return H, InvariantSet(H, 0.5 * np.sum(U**2, axis=(0, 1)) * w, np.sum(U, axis=(0, 1)) * w)


# --- assembly -------------------------------------------------------------------

def _param(params, key, default=None):
    v = params.get(key, default)
    if v is None:
        raise ConfigError(f"missing parameter {key!r}")
    v = float(v)
    if not np.isfinite(v):
        raise ConfigError(f"parameter {key!r} must be finite")
    return v


def assemble(kind: str, params: Mapping | None, grid) -> SkewGradientModel:
    """Build the semi-discrete model ``kind`` on ``grid``.

    single_kdv:          u' = -mu D3 u - alpha/2 D1(u*u)
    coupled_kdv:         u' = -(D1 + D3/6) v - 3/4 D1(u*u) - 1/4 D1(v*v)
                         v' = -(D1 + D3/6) u - 1/2 D1(u*v)
    zakharov_kuznetsov:  u' = -mu (Dxxx + Dxyy) u - alpha/2 Dx(u*u)
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {KINDS}")

    if kind == "zakharov_kuznetsov":
        if not isinstance(grid, Grid2D):
            raise ConfigError("zakharov_kuznetsov needs a Grid2D")
        alpha = _param(params, "alpha", 6.0)
        mu = _param(params, "mu", 1.0)
        ops = kron_2d(grid)
        n = grid.size
        I = sp.identity(n, format="csr")
        L = -mu * (ops["Dxx"].matrix + ops["Dyy"].matrix)
        terms = (QuadGradTerm(-0.5 * alpha * I, "u", "u", "u"),)
        return SkewGradientModel(kind, {"alpha": alpha, "mu": mu}, grid, {"u": slice(0, n)},
                                 ops["Dx"], GradientForm(sp.csr_matrix(L), terms),
                                 grid.hx * grid.hy, _zk_energy, ops)

    if not isinstance(grid, Grid1D):
        raise ConfigError(f"{kind} needs a Grid1D")
    D1, D2 = periodic_d1(grid), periodic_d2(grid)
    ops = {"D1": D1, "D2": D2, "D3": d3_product(D1, D2)}
    N = grid.N
    I = sp.identity(N, format="csr")

    if kind == "single_kdv":
        alpha = _param(params, "alpha", 6.0)
        mu = _param(params, "mu", 1.0)
        L = -mu * D2.matrix
        terms = (QuadGradTerm(-0.5 * alpha * I, "u", "u", "u"),)
        return SkewGradientModel(kind, {"alpha": alpha, "mu": mu}, grid, {"u": slice(0, N)},
                                 D1, GradientForm(sp.csr_matrix(L), terms), grid.h,
                                 _single_energy, ops)

    # coupled KdV-KdV: coefficients are fixed by the system
    for key in ("alpha", "mu"):
        if key in params:
            raise ConfigError(f"coupled_kdv has fixed coefficients; {key!r} is not accepted")
    off = -(I + D2.matrix / 6.0)
    L = sp.bmat([[None, off], [off, None]], format="csr")
    S = SparseOperator(sp.block_diag([D1.matrix, D1.matrix], format="csr"), "skew", "S")
    terms = (
        QuadGradTerm(-0.75 * I, "u", "u", "u"),
        QuadGradTerm(-0.25 * I, "v", "v", "u"),
        QuadGradTerm(-0.5 * I, "u", "v", "v"),
    )
    return SkewGradientModel(kind, {}, grid, {"u": slice(0, N), "v": slice(N, 2 * N)},
                             S, GradientForm(L, terms), grid.h, _coupled_energy, ops)


# --- initial conditions -----------------------------------------------------------

def exact_two_soliton(x, t, k1: float = 0.4, k2: float = 0.6, rho: float | None = None,
                      phases: tuple[float, float] = (4.0, 15.0),
                      alpha: float = 1.0, mu: float = 1.0):
    """Hirota two-soliton of ``u_t + alpha u u_x + mu u_xxx = 0``.

    u = (12 mu/alpha) [k1^2 e1 + k2^2 e2 + 2(k2-k1)^2 e12 + rho^2 (k2^2 e1 + k1^2 e2) e12]
        / (1 + e1 + e2 + rho^2 e12)^2

    with e_i = exp(k_i x - mu k_i^3 t + phase_i), e12 = e1 e2 and
    rho = (k1-k2)/(k1+k2).  Exponentials are shifted by their maximum.
    """
    if k1 == -k2:
        raise ValueError("k1 = -k2 is degenerate")
    if rho is None:
        rho = (k1 - k2) / (k1 + k2)
    x = np.asarray(x, dtype=float)
    xi1 = k1 * x - mu * k1**3 * t + phases[0]
    xi2 = k2 * x - mu * k2**3 * t + phases[1]
    s = np.maximum.reduce([np.zeros_like(xi1), xi1, xi2, xi1 + xi2])
    e0, e1, e2, e12 = np.exp(-s), np.exp(xi1 - s), np.exp(xi2 - s), np.exp(xi1 + xi2 - s)
    r2 = rho**2
    # numerator and F^2 both scaled by exp(-2s)
    num = (k1**2 * e1 * e0 + k2**2 * e2 * e0 + 2.0 * (k2 - k1) ** 2 * e12 * e0
           + r2 * (k2**2 * e1 + k1**2 * e2) * e12)
    den = (e0 + e1 + e2 + r2 * e12) ** 2
    return 12.0 * mu / alpha * num / den


def zk_pulse_profile(rho, coefficients: Sequence[float]):
    """Normalised bell profile ``sum_m a_2m (cos(2m arccot(rho/2)) - 1)``."""
    theta = np.arctan2(1.0, np.asarray(rho, dtype=float) / 2.0)  # arccot for rho >= 0
    out = np.zeros_like(theta)
    for m, a in enumerate(coefficients, start=1):
        out += a * (np.cos(2 * m * theta) - 1.0)
    return out


def zk_pulse_coefficients(n_terms: int = 10, rmax: float = 30.0) -> np.ndarray:
    """Fit a_2m to the radial ground state of ``w'' + w'/r = w - w^2``.

    Not used implicitly: ZK initial conditions always take an explicit list.
    """

    def shoot(w0):
        def f(r, y):
            w, dw = y
            return [dw, w - w * w - (dw / r if r > 0 else 0.0)]

        def neg(r, y):
            return y[0]

        def rising(r, y):
            return y[1]

        neg.terminal = True
        rising.terminal = True
        rising.direction = 1
        r0 = 1e-6
        # series start: w'' (0) = (w0 - w0^2)/2
        y0 = [w0 + 0.25 * (w0 - w0**2) * r0**2, 0.5 * (w0 - w0**2) * r0]
        return scipy.integrate.solve_ivp(f, (r0, rmax), y0, events=(neg, rising),
                                         rtol=1e-12, atol=1e-14, dense_output=True)

    def miss(w0):
        sol = shoot(w0)
        if sol.t_events[0].size:  # undershoots zero: w0 too large
            return 1.0
        return -1.0

    lo, hi = 2.0, 8.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if miss(mid) > 0:
            hi = mid
        else:
            lo = mid
    sol = shoot(lo)
    r_end = sol.t[-1]
    r = np.linspace(0.0, rmax, 3000)
    w = np.where(r <= r_end, sol.sol(np.clip(r, sol.t[0], r_end))[0], 0.0)
    theta = np.arctan2(1.0, r / 2.0)
    A = np.stack([np.cos(2 * m * theta) - 1.0 for m in range(1, n_terms + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(A, w, rcond=None)
    return coef


def initial_condition(kind: str, params: Mapping, grid) -> np.ndarray:
    """Sample an initial state on ``grid``.

    kinds: ``one_soliton`` (beta, x0), ``two_soliton`` (k1, k2, phases, t0),
    ``coupled_gaussian`` (amplitude, center, width), ``zk_pulses``
    (c, centers, a2m).
    """
    params = dict(params or {})
    if kind == "one_soliton":
        beta = _param(params, "beta")
        x0 = float(params.get("x0", 0.0))
        return beta / np.cosh(np.sqrt(beta) * (grid.x - x0) / 2.0) ** 2
    if kind == "two_soliton":
        kw = {k: params[k] for k in ("k1", "k2", "rho", "alpha", "mu") if k in params}
        if "phases" in params:
            kw["phases"] = tuple(params["phases"])
        return exact_two_soliton(grid.x, float(params.get("t0", 0.0)), **kw)
    if kind == "coupled_gaussian":
        amp = float(params.get("amplitude", 0.3))
        x0 = float(params.get("center", -100.0))
        width = float(params.get("width", 25.0))
        v = amp * np.exp(-((grid.x - x0) ** 2) / width)
        return np.concatenate([np.zeros(grid.N), v])
    if kind == "zk_pulses":
        if not params.get("a2m"):
            raise ConfigError("zk_pulses needs an explicit 'a2m' coefficient list")
        for key in ("c", "centers"):
            if key not in params:
                raise ConfigError(f"zk_pulses needs {key!r}")
        cs, centers = list(params["c"]), [tuple(p) for p in params["centers"]]
        if len(cs) != len(centers):
            raise ConfigError("'c' and 'centers' must have equal length")
        a2m = [float(a) for a in params["a2m"]]
        X, Y = grid.mesh()
        u = np.zeros_like(X)
        for c, (xj, yj) in zip(cs, centers):
            r = np.hypot(X - xj, Y - yj)
            u += c / 3.0 * zk_pulse_profile(np.sqrt(c) * r, a2m)
        return u.ravel()
    raise ConfigError(f"unknown initial condition kind {kind!r}")
