"""Error metrics, convergence orders and offline/online timings."""
from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .integrator import TimeMesh, integrate
from .models import assemble, exact_two_soliton
from .operators import Grid1D
from .pod import SnapshotSet, build_basis
from .rom import LiftedReducedModel, lift, reduce


@dataclass
class ErrorReport:
    """Per-sample errors between a reference and an approximate trajectory.

    ``relative`` holds weighted relative L2 errors, ``invariants`` absolute
    errors per invariant name; the ``*_mean`` values are their time averages.
    """

    times: np.ndarray
    relative: np.ndarray
    invariants: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def relative_mean(self) -> float:
        return float(np.mean(self.relative))

    @property
    def invariant_means(self) -> dict[str, float]:
        return {k: float(np.mean(v)) for k, v in self.invariants.items()}

    def summary(self) -> dict:
        return {"relative_l2": self.relative_mean, **{f"abs_{k}": v for k, v in self.invariant_means.items()}}


@dataclass
class TimingReport:
    """Median wall times in seconds; ``online`` is keyed by ROM path."""

    fom: float
    offline: float
    online: dict[str, float]
    repeats: int = 3
    steps: int = 0

    def __post_init__(self):
        for name, t in [("fom", self.fom), ("offline", self.offline), *self.online.items()]:
            if not t > 0:
                raise ValueError(f"timing {name!r} must be positive, got {t}")

    @property
    def speedup(self) -> dict[str, float]:
        return {k: self.fom / v for k, v in self.online.items()}

    def summary(self) -> dict:
        return {"fom": self.fom, "offline": self.offline, "online": dict(self.online),
                "speedup": self.speedup, "repeats": self.repeats, "steps": self.steps}


def _norms(Q, weight):
    return np.sqrt(weight * np.einsum("ij,ij->j", Q, Q))


def relative_l2(full, approx, weight: float = 1.0) -> ErrorReport:
    """``||q^k - qhat^k|| / ||q^k||`` per column in the ``weight``-scaled L2 norm."""
    full = np.asarray(full, dtype=float)
    approx = np.asarray(approx, dtype=float)
    if full.shape != approx.shape:
        raise ValueError(f"shape mismatch: {full.shape} vs {approx.shape}")
    if full.ndim == 1:
        full, approx = full[:, None], approx[:, None]
    ref = _norms(full, weight)
    if np.any(ref == 0.0):
        raise ValueError(f"reference state has zero norm at sample {int(np.argmin(ref))}")
    return ErrorReport(np.arange(full.shape[1], dtype=float), _norms(full - approx, weight) / ref)


def conservation_error(model, full, approx, invariant: str = "H") -> np.ndarray:
    """``|E(q^k) - E(qhat^k)|`` per column for an invariant name (H, I1, I2, I3)."""
    a = model.invariants(np.asarray(full, dtype=float)).as_dict()
    if invariant not in a:
        raise KeyError(f"unknown invariant {invariant!r}; model has {sorted(a)}")
    b = model.invariants(np.asarray(approx, dtype=float)).as_dict()
    return np.abs(np.atleast_1d(a[invariant] - b[invariant]))


def compare(model, full_traj, rmodel, rom_traj, invariants=("H", "I1"),
            include_initial: bool = False, chunk: int = 512) -> ErrorReport:
    """FOM vs lifted ROM errors over matching samples, lifting ``chunk`` columns at a time.

    The averages run over samples 1..Nt unless ``include_initial``.
    """
    if full_traj.states.shape[1] != rom_traj.states.shape[1] or not np.allclose(
            full_traj.times, rom_traj.times, rtol=1e-12, atol=0.0):
        raise ValueError("trajectories are not sampled at the same times")
    k0 = 0 if include_initial else 1
    count = full_traj.states.shape[1]
    rel, inv = [], {name: [] for name in invariants}
    for start in range(k0, count, chunk):
        cols = slice(start, min(start + chunk, count))
        Q = full_traj.states[:, cols]
        Qh = lift(rmodel.basis, rom_traj.states[:, cols], model.fields)
        rel.append(relative_l2(Q, Qh, model.weight).relative)
        for name in invariants:
            inv[name].append(conservation_error(model, Q, Qh, name))
    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0)
    return ErrorReport(np.asarray(full_traj.times[k0:]), cat(rel), {k: cat(v) for k, v in inv.items()})


def eoc(pairs) -> list[float]:
    """Orders ``log2(e(h) / e(h/2))`` for consecutive ``(h, error)`` levels."""
    pairs = [(float(h), float(e)) for h, e in pairs]
    if len(pairs) < 2:
        raise ValueError("need at least two refinement levels")
    for h, e in pairs:
        if not e > 0:
            raise ValueError(f"errors must be positive, got {e} at h={h}")
    out = []
    for (h0, e0), (h1, e1) in zip(pairs, pairs[1:]):
        if not math.isclose(h0 / h1, 2.0, rel_tol=1e-6):
            raise ValueError(f"mesh ratio {h0 / h1} is not 2")
        out.append(math.log2(e0 / e1))
    return out


@dataclass(frozen=True)
class SolitonError:
    dx: float
    dt: float
    times: np.ndarray
    errors: np.ndarray  # relative L2 against the exact solution per sample
    absolute: np.ndarray  # same, without dividing by the exact norm

    @property
    def final(self) -> float:
        return float(self.errors[-1])

    @property
    def final_absolute(self) -> float:
        return float(self.absolute[-1])

    @property
    def max_at_final(self) -> bool:
        return bool(np.argmax(self.errors) == self.errors.size - 1)


def two_soliton_error(dx: float, dt: float, T: float = 120.0, domain=(-40.0, 40.0),
                      stride: int | None = None, exact: dict | None = None) -> SolitonError:
    """Integrate the two-soliton FOM and measure it against the exact solution."""
    exact = dict(exact or {})
    grid = Grid1D.from_spacing(domain[0], domain[1], dx)
    al, mu = float(exact.pop("alpha", 1.0)), float(exact.pop("mu", 1.0))
    model = assemble("single_kdv", {"alpha": al, "mu": mu}, grid)
    mesh = TimeMesh.from_dt(T, dt)
    stride = stride or mesh.Nt
    if mesh.Nt % stride:
        raise ValueError(f"stride {stride} does not divide {mesh.Nt} steps")
    q0 = exact_two_soliton(grid.x, 0.0, alpha=al, mu=mu, **exact)
    traj = integrate(model, q0, mesh, stride)
    ue = np.stack([exact_two_soliton(grid.x, t, alpha=al, mu=mu, **exact) for t in traj.times], axis=1)
    rep = relative_l2(ue[:, 1:], traj.states[:, 1:], grid.h)
    absolute = rep.relative * _norms(ue[:, 1:], grid.h)
    return SolitonError(dx, dt, traj.times[1:], rep.relative, absolute)


def _ladder_job(args):
    return two_soliton_error(*args[:2], **args[2])


def two_soliton_ladder(dxs, dts, workers: int = 1, **kw) -> list[SolitonError]:
    """Independent refinement levels, optionally in parallel worker processes."""
    jobs = [(dx, dt, kw) for dx, dt in zip(dxs, dts, strict=True)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_ladder_job, jobs))
    return [_ladder_job(j) for j in jobs]


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def benchmark(model, q0, mesh: TimeMesh, n: int, *, paths=("tensorial", "lifted"),
              online_steps: int | None = None, repeats: int = 3, fom_repeats: int = 1,
              method: str = "rsvd", seed: int = 0, basis_mode: str = "monolithic") -> TimingReport:
    """Time FOM, offline (POD + reduction) and online phases.

    Online runs integrate ``online_steps`` reduced Kahan steps (default: the
    whole mesh) pinned to one BLAS thread; each phase reports the median of
    its repetitions.
    """
    if repeats < 1 or fom_repeats < 1:
        raise ValueError("repeats must be >= 1")
    box = {}

    def fom():
        box["traj"] = integrate(model, q0, mesh)

    def offline():
        snaps = SnapshotSet.from_trajectory(box["traj"], model.fields)
        basis = build_basis(snaps, basis_mode, n=n, method=method, seed=seed)
        box["rmodel"] = reduce(model, basis)

    t_fom = _median_time(fom, fom_repeats)
    t_off = _median_time(offline, repeats)
    rmodel = box["rmodel"]
    systems = {"tensorial": rmodel, "lifted": LiftedReducedModel(rmodel)}
    steps = online_steps or mesh.Nt
    on_mesh = TimeMesh(mesh.dt * steps, steps)
    qr0 = rmodel.project(np.asarray(q0, dtype=float))
    online = {}
    with threadpool_limits(limits=1):
        for p in paths:
            sysm = systems[p]
            integrate(sysm, qr0, TimeMesh(mesh.dt, 1))  # warm-up
            online[p] = _median_time(lambda: integrate(sysm, qr0, on_mesh), repeats)
    if steps != mesh.Nt:
        # report the FOM time for the same number of steps as the online runs
        t_fom *= steps / mesh.Nt
    return TimingReport(t_fom, t_off, online, repeats, steps)
