"""Command-line driver: ``hrom {fom,basis,rom,compare,eoc,bench} --config cfg.json``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 missing or unreadable input.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as cfgmod
from . import io
from .diagnostics import benchmark, compare, eoc, relative_l2, two_soliton_ladder
from .integrator import StepFailure, TimeMesh, Trajectory, integrate
from .models import ConfigError
from .operators import InvalidGridError
from .pod import Basis, BasisBlock, RankError, SnapshotSet, build_basis
from .rom import LiftedReducedModel, reduce

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4

log = logging.getLogger("hrom")


class HashMismatch(ValueError):
    pass


def _out_dir(args) -> Path:
    out = Path(os.environ.get("HROM_OUT") or args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing input {path}; run the preceding subcommand first")
    return path


def _check_hash(meta: dict, expected: str, what: str):
    got = meta.get("config_hash")
    if got != expected:
        raise HashMismatch(f"{what} was produced by config {got}, current config is {expected}")


def _load_trajectory(path: Path, expected_hash: str, what: str) -> Trajectory:
    data, hdr, meta = io.read_snapshots(_need(path))
    _check_hash(meta, expected_hash, what)
    times = hdr["dt"] * hdr["stride"] * np.arange(hdr["count"])
    Nt = (hdr["count"] - 1) * hdr["stride"]
    return Trajectory(data, times, TimeMesh(times[-1] if Nt else 0.0, Nt), hdr["stride"])


def _load_basis(out: Path, expected_hash: str) -> tuple[Basis, dict]:
    meta = io.read_json(_need(out / "basis.json"))
    _check_hash(meta, expected_hash, "basis")
    blocks = []
    for b in meta["blocks"]:
        V, _, _ = io.read_snapshots(_need(out / b["file"]))
        blocks.append(BasisBlock(tuple(b["fields"]), np.ascontiguousarray(V)))
    return Basis(tuple(blocks)), meta


def _paths(args, cfg):
    p = args.path or cfg["rom"]["path"]
    return ["tensorial", "lifted"] if p == "both" else [p]


def cmd_fom(args, cfg, out):
    model = cfgmod.build_model(cfg)
    q0 = cfgmod.build_initial_state(cfg, model.grid)
    mesh = cfgmod.build_mesh(cfg)
    stride = cfg["snapshots"]["stride"]
    if mesh.Nt % stride:
        raise cfgmod.ConfigValidationError("snapshots/stride", f"{stride} does not divide Nt={mesh.Nt}")
    log.info("fom: %s, dim %d, %d steps", model.kind, model.dim, mesh.Nt)
    traj = integrate(model, q0, mesh, stride, record_invariants=True)
    h = cfgmod.config_hash(cfg)
    io.write_snapshots(out / "snapshots.bin", traj.states, mesh.dt, stride,
                       {"config_hash": h, "fields": model.fields, "kind": model.kind})
    names = sorted(traj.invariants)
    io.write_csv(out / "invariants.csv", ["t", *names],
                 [mesh.times, *(traj.invariants[k] for k in names)])
    drift = {k: float(np.max(np.abs(v - v[0]))) for k, v in traj.invariants.items()}
    summary = {"config_hash": h, "kind": model.kind, "dim": model.dim, "steps": mesh.Nt,
               "dt": mesh.dt, "stride": stride, "samples": traj.count, "max_invariant_drift": drift}
    io.write_json(out / "summary_fom.json", summary)
    return summary


def cmd_basis(args, cfg, out):
    h = cfgmod.config_hash(cfg)
    traj = _load_trajectory(out / "snapshots.bin", h, "snapshots.bin")
    model = cfgmod.build_model(cfg)
    snaps = SnapshotSet.from_trajectory(traj, model.fields, cfg["snapshots"]["include_initial"])
    b = cfg["basis"]
    with threadpool_limits(limits=args.threads):
        basis = build_basis(snaps, b["mode"], n=b["n"], threshold=b["threshold"], method=b["method"],
                            rank=b["rank"], oversample=b["oversample"],
                            power_iters=b["power_iters"], seed=b["seed"])
    blocks = []
    for i, blk in enumerate(basis.blocks):
        name = f"basis_{i}.bin"
        io.write_snapshots(out / name, blk.V, 0.0, 0, {"config_hash": h, "fields": list(blk.fields)})
        blocks.append({"fields": list(blk.fields), "file": name, "n": blk.V.shape[1]})
    for key, spec in basis.spectra.items():
        k = np.arange(1, spec.singular_values.size + 1)
        io.write_csv(out / f"spectrum_{key}.csv", ["k", "sigma", "ric"], [k, spec.singular_values, spec.ric])
    summary = {"config_hash": h, "blocks": blocks, "n": basis.n, "mode": b["mode"],
               "method": b["method"], "seed": b["seed"],
               "orthonormality_error": basis.orthonormality_error()}
    io.write_json(out / "basis.json", summary)
    return summary


def cmd_rom(args, cfg, out):
    h = cfgmod.config_hash(cfg)
    basis, bmeta = _load_basis(out, h)
    model = cfgmod.build_model(cfg)
    with threadpool_limits(limits=args.threads):
        t0 = time.perf_counter()
        rmodel = reduce(model, basis)
        t_reduce = time.perf_counter() - t0
    np.savez(out / "reduced_operators.npz", S_hat=rmodel.S_hat, L_hat=rmodel.L_hat,
             **{f"W_{i}": t.W for i, t in enumerate(rmodel.terms)})
    q0 = cfgmod.build_initial_state(cfg, model.grid)
    mesh = cfgmod.build_mesh(cfg)
    stride = cfg["snapshots"]["stride"]
    qr0 = rmodel.project(q0)
    systems = {"tensorial": rmodel, "lifted": LiftedReducedModel(rmodel)}
    nS = np.abs(rmodel.S_hat).max()
    summary = {"config_hash": h, "n": basis.n, "seed": bmeta.get("seed"),
               "skew_residual": float(np.abs(rmodel.S_hat + rmodel.S_hat.T).max() / nS) if nS else 0.0,
               "paths": {}}
    timings = {"reduce": t_reduce}
    for p in _paths(args, cfg):
        log.info("rom: %s path, n=%d, %d steps", p, basis.n, mesh.Nt)
        with threadpool_limits(limits=1):
            t0 = time.perf_counter()
            traj = integrate(systems[p], qr0, mesh, stride)
            timings[p] = time.perf_counter() - t0
        io.write_snapshots(out / f"rom_{p}.bin", traj.states, mesh.dt, stride,
                           {"config_hash": h, "path": p, "n": basis.n})
        mass = model.invariants(rmodel.lift(traj.states)).I2
        summary["paths"][p] = {"samples": traj.count,
                               "max_mass_drift": float(np.max(np.abs(mass - mass[0])))}
    io.write_json(out / "summary_rom.json", summary)
    io.write_json(out / "timings_rom.json", timings)
    return summary


def cmd_compare(args, cfg, out):
    h = cfgmod.config_hash(cfg)
    model = cfgmod.build_model(cfg)
    full = _load_trajectory(out / "snapshots.bin", h, "snapshots.bin")
    summary = {"config_hash": h, "errors": {}}
    if args.candidate:
        # full-dimension candidate trajectory, compared without lifting
        cand = _load_trajectory(Path(args.candidate), h, args.candidate)
        if cand.states.shape != full.states.shape:
            raise ValueError(f"candidate shape {cand.states.shape} != reference {full.states.shape}")
        rep = relative_l2(full.states[:, 1:], cand.states[:, 1:], model.weight)
        inv = {k: np.abs(model.invariants(full.states[:, 1:]).as_dict()[k]
                         - model.invariants(cand.states[:, 1:]).as_dict()[k]) for k in ("H", "I1")}
        rep.invariants.update(inv)
        rep.times = full.times[1:]
        reports = {"candidate": rep}
    else:
        basis, _ = _load_basis(out, h)
        rmodel = reduce(model, basis)
        reports = {}
        for p in _paths(args, cfg):
            rtraj = _load_trajectory(out / f"rom_{p}.bin", h, f"rom_{p}.bin")
            reports[p] = compare(model, full, rmodel, rtraj)
    for name, rep in reports.items():
        keys = sorted(rep.invariants)
        io.write_csv(out / f"errors_{name}.csv", ["t", "relative_l2", *(f"abs_{k}" for k in keys)],
                     [rep.times, rep.relative, *(rep.invariants[k] for k in keys)])
        summary["errors"][name] = rep.summary()
    io.write_json(out / "summary_compare.json", summary)
    return summary


def cmd_eoc(args, cfg, out):
    if "eoc" not in cfg:
        raise cfgmod.ConfigValidationError("eoc", "section required for the eoc subcommand")
    e = cfg["eoc"]
    if len(e["dx"]) != len(e["dt"]):
        raise cfgmod.ConfigValidationError("eoc", "dx and dt ladders differ in length")
    ic = cfg["initial_condition"]
    exact = dict(ic.get("params", {})) if ic["kind"] == "two_soliton" else {}
    exact.pop("t0", None)
    if "phases" in exact:
        exact["phases"] = tuple(exact["phases"])
    exact.update(cfg["model"].get("params", {}))
    res = two_soliton_ladder(e["dx"], e["dt"], workers=e.get("workers", 1), T=e.get("T", cfg["time"]["T"]),
                             domain=tuple(e.get("domain", (cfg["model"]["grid"]["a"], cfg["model"]["grid"]["b"]))),
                             exact=exact)
    orders = eoc([(r.dx, r.final) for r in res])
    io.write_csv(out / "eoc.csv", ["dx", "dt", "relative_error", "absolute_error", "order"],
                 [[r.dx for r in res], [r.dt for r in res], [r.final for r in res],
                  [r.final_absolute for r in res], [float("nan"), *orders]])
    summary = {"levels": [{"dx": r.dx, "dt": r.dt, "relative_error": r.final,
                           "absolute_error": r.final_absolute} for r in res],
               "orders": orders}
    io.write_json(out / "summary_eoc.json", summary)
    return summary


def cmd_bench(args, cfg, out):
    model = cfgmod.build_model(cfg)
    q0 = cfgmod.build_initial_state(cfg, model.grid)
    mesh = cfgmod.build_mesh(cfg)
    b = cfg.get("bench", {})
    n = b.get("n") or cfg["basis"]["n"]
    if not isinstance(n, int):
        raise cfgmod.ConfigValidationError("bench/n", "bench needs a fixed integer mode count")
    paths = _paths(args, cfg)
    with threadpool_limits(limits=args.threads):
        rep = benchmark(model, q0, mesh, n, paths=tuple(paths), online_steps=b.get("online_steps"),
                        repeats=b.get("repeats", 3), method=cfg["basis"]["method"],
                        seed=cfg["basis"]["seed"], basis_mode=cfg["basis"]["mode"])
    summary = {"config_hash": cfgmod.config_hash(cfg), "n": n, **rep.summary()}
    io.write_json(out / "bench.json", summary)
    return summary


COMMANDS = {"fom": cmd_fom, "basis": cmd_basis, "rom": cmd_rom, "compare": cmd_compare,
            "eoc": cmd_eoc, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hrom", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="overrides basis.seed (non-negative)")
    p.add_argument("--out", help="output directory (HROM_OUT takes precedence)")
    p.add_argument("--threads", type=int, default=None, help="BLAS threads for offline phases")
    p.add_argument("--path", choices=["tensorial", "lifted", "both"])
    p.add_argument("--candidate", help="compare: full-dimension snapshot file to compare instead of ROMs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load(_need(Path(args.config)))
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise cfgmod.ConfigValidationError("--seed", "must be a u64")
            cfg["basis"]["seed"] = args.seed
        out = _out_dir(args)
        COMMANDS[args.command](args, cfg, out)
    except (FileNotFoundError, io.FormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (cfgmod.ConfigValidationError, ConfigError, InvalidGridError, HashMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepFailure, RankError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
