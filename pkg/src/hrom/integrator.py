"""Kahan's linearly implicit method for linear-quadratic vector fields.

A *system* is any object with ``rhs(q)`` and ``jacobian(q)``; sparse
Jacobians are factorised with SuperLU, dense ones with LAPACK.  Systems may
also provide ``step_matrix(q, dt)`` returning ``I - dt/2 f'(q)`` directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

COND_LIMIT = 1e12


class StepFailure(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


@dataclass(frozen=True)
class TimeMesh:
    T: float
    Nt: int

    def __post_init__(self):
        if self.Nt < 0 or int(self.Nt) != self.Nt:
            raise ValueError(f"Nt must be a non-negative integer, got {self.Nt}")
        if self.Nt > 0 and not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.Nt if self.Nt else 0.0

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.Nt + 1)

    @classmethod
    def from_dt(cls, T: float, dt: float) -> "TimeMesh":
        Nt = int(round(T / dt))
        if Nt < 1 or not math.isclose(Nt * dt, T, rel_tol=1e-9):
            raise ValueError(f"dt={dt} does not divide T={T}")
        return cls(T, Nt)


@dataclass
class Trajectory:
    """States ``q^k`` sampled every ``stride`` steps, including ``q^0``."""

    states: np.ndarray  # dim x count, Fortran ordered
    times: np.ndarray
    mesh: TimeMesh
    stride: int = 1
    invariants: dict[str, np.ndarray] | None = None

    @property
    def count(self) -> int:
        return self.states.shape[1]

    def snapshots(self, include_initial: bool = False) -> np.ndarray:
        return self.states if include_initial else self.states[:, 1:]


def _solve(A, b, step=None, cond_limit=COND_LIMIT, ordering="COLAMD"):
    if sp.issparse(A):
        try:
            lu = spla.splu(sp.csc_matrix(A), permc_spec=ordering)
        except RuntimeError as exc:  # "Factor is exactly singular"
            raise StepFailure(f"singular Kahan matrix ({exc})", step) from exc
        d = np.abs(lu.U.diagonal())
        # pivot ratio: cheap lower bound on the condition number
        if d.min() == 0.0 or d.max() / d.min() > cond_limit:
            raise StepFailure(f"ill-conditioned Kahan matrix (pivot ratio {d.max() / max(d.min(), 1e-300):.3e})", step)
        return lu.solve(b)
    A = np.asarray(A)
    with np.errstate(all="ignore"):
        lu, piv, info = scipy.linalg.lapack.dgetrf(A)
    if info > 0:
        raise StepFailure("singular Kahan matrix", step)
    anorm = np.abs(A).sum(axis=0).max()
    rcond, _ = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if rcond == 0.0 or 1.0 / rcond > cond_limit:
        raise StepFailure(f"ill-conditioned Kahan matrix (cond ~ {1.0 / max(rcond, 1e-300):.3e})", step)
    x, info = scipy.linalg.lapack.dgetrs(lu, piv, b)
    return x


def _step_matrix(system, q, dt):
    if hasattr(system, "step_matrix"):
        return system.step_matrix(q, dt)
    J = system.jacobian(q)
    if sp.issparse(J):
        return sp.identity(J.shape[0], format="csc") - 0.5 * dt * J
    J = np.atleast_2d(np.asarray(J, dtype=float))
    return np.eye(J.shape[0]) - 0.5 * dt * J


def kahan_step(system, q, dt: float, *, step: int | None = None,
               cond_limit: float = COND_LIMIT) -> np.ndarray:
    """One Kahan step: solve ``(I - dt/2 f'(q)) du = dt f(q)``, return ``q + du``."""
    q = np.asarray(q, dtype=float)
    rhs = dt * np.atleast_1d(system.rhs(q))
    du = _solve(_step_matrix(system, q, dt), rhs, step, cond_limit,
                getattr(system, "lu_ordering", "COLAMD"))
    return q + du.reshape(q.shape)


def _split(system, x):
    """Linear and quadratic parts of f at x: f(x) = lin + quad, f(-x) = -lin + quad."""
    fp, fm = np.atleast_1d(system.rhs(x)), np.atleast_1d(system.rhs(-x))
    return 0.5 * (fp - fm), 0.5 * (fp + fm)


def polarized_residual(system, q, p, dt):
    """``(p - q)/dt - [B_q Qtilde(q, p) + B_l (q + p)/2]`` using only ``rhs``."""
    lin_s, quad_s = _split(system, q + p)
    lin_q, quad_q = _split(system, q)
    lin_p, quad_p = _split(system, p)
    polar = 0.5 * (quad_s - quad_q - quad_p)
    return (p - q) / dt - polar - 0.5 * (lin_q + lin_p)


def rk_residual(system, q, p, dt):
    """Residual of the three-stage Runge-Kutta form of Kahan's method."""
    f = system.rhs
    return (p - q) / dt - (-0.5 * f(q) + 2.0 * f(0.5 * (p + q)) - 0.5 * f(p))


def kahan_step_polarized(system, q, dt: float, tol: float = 1e-13, max_iter: int = 20) -> np.ndarray:
    """Kahan step from its polarised definition, solved by Newton iteration.

    Independent of ``jacobian``: the Newton matrix is built column by column
    from the (affine in ``p``) residual.  Meant as a test oracle; cost is
    ``dim + 1`` residual evaluations plus a dense solve.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = q.size
    r0 = polarized_residual(system, q, q, dt)
    J = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        J[:, j] = polarized_residual(system, q, q + e, dt) - r0
        e[j] = 0.0
    lu = scipy.linalg.lu_factor(J)
    p = q.copy()
    r = r0
    scale = max(np.linalg.norm(q / dt), 1.0)
    for _ in range(max_iter):
        p = p - scipy.linalg.lu_solve(lu, r)
        r = polarized_residual(system, q, p, dt)
        if np.linalg.norm(r) <= tol * scale:
            return p
    raise StepFailure(f"polarized Kahan iteration did not converge (|R| = {np.linalg.norm(r):.3e})")


def integrate(system, q0, mesh: TimeMesh, stride: int = 1, *,
              record_invariants: bool = False) -> Trajectory:
    """Advance ``q0`` over ``mesh`` with Kahan steps, sampling every ``stride`` steps.

    With ``record_invariants`` the system's ``invariants(q)`` are evaluated at
    every step (not only at samples).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    q = np.array(q0, dtype=float)
    count = mesh.Nt // stride + 1
    states = np.empty((q.size, count), order="F")
    states[:, 0] = q
    inv = None
    if record_invariants:
        first = system.invariants(q).as_dict()
        inv = {k: np.empty(mesh.Nt + 1) for k in first}
        for k, v in first.items():
            inv[k][0] = v
    dt = mesh.dt
    for k in range(1, mesh.Nt + 1):
        q = kahan_step(system, q, dt, step=k)
        if not np.all(np.isfinite(q)):
            raise StepFailure("non-finite state", k)
        if k % stride == 0:
            states[:, k // stride] = q
        if inv is not None:
            for name, v in system.invariants(q).as_dict().items():
                inv[name][k] = v
    times = mesh.dt * stride * np.arange(count)
    return Trajectory(states, times, mesh, stride, inv)


def modified_hamiltonian(system, q, dt: float) -> float:
    """Kahan's conserved energy for cubic H and constant skew S.

    ``H + dt/3 grad H^T (I - dt/2 f'(q))^{-1} f(q)`` with the Euclidean
    gradient of H.  The prefactor must be 1/3: with 1/2 the quantity drifts
    at O(dt^2) along Kahan trajectories.
    """
    q = np.asarray(q, dtype=float)
    f = np.atleast_1d(system.rhs(q))
    y = _solve(_step_matrix(system, q, dt), f, ordering=getattr(system, "lu_ordering", "COLAMD"))
    g = np.atleast_1d(system.energy_gradient(q))
    return float(system.hamiltonian(q) + dt / 3.0 * g @ y)
