"""End-to-end experiment driver: simulate, reconstruct, write traces and a summary."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig
from .errors import ConfigurationError, SolverError
from .model import (DataTerm, KSpaceData, SensitivityMaps, SystemOperator, coil_combine,
                    sense_block_solve)
from .phantom import make_mask, make_phantom, simulate, synthetic_smaps
from .proximal import CompositeCost, fista, ista, pogm, select_majorizer
from .regularizers import Potential, make_transform
from .smooth import SmoothCost, cg_quadratic, gradient_descent, ncg, ogm
from .splitting import admm_analysis, admm_structured, primal_dual
from .trace import SolverTrace, nrmse

log = logging.getLogger("mrirecon")

GAP_TOL = 1e-6


@dataclass
class Setup:
    """Simulated problem shared by every solver in one experiment."""

    truth: np.ndarray
    op: SystemOperator
    y: KSpaceData
    lam: float
    x0: np.ndarray


def build_smaps(cfg: ExperimentConfig) -> SensitivityMaps:
    if cfg.ncoils == 1:
        return SensitivityMaps.ones(cfg.grid, 1)
    return synthetic_smaps(cfg.grid, cfg.ncoils, seed=cfg.seed)


def lambda_heuristic(op: SystemOperator, y: KSpaceData, scale: float = 0.01) -> float:
    """``scale * max |A'y|``."""
    return float(scale * np.abs(op.adjoint(y)).max())


def setup(cfg: ExperimentConfig) -> Setup:
    truth = make_phantom(cfg.phantom, cfg.grid, phase=cfg.phase)
    mask = make_mask(cfg.mask_spec, cfg.grid)
    smaps = build_smaps(cfg)
    y = simulate(truth, mask, smaps, cfg.snr_db, seed=cfg.seed)
    op = SystemOperator(mask, smaps)
    lam = cfg.lam if cfg.lam is not None else lambda_heuristic(op, y, cfg.lam_scale)
    return Setup(truth, op, y, lam, op.adjoint_zerofill(y))


def _transform(cfg, shape):
    kw = {"levels": cfg.levels} if cfg.transform in ("haar", "odwt") else {}
    return make_transform(cfg.transform, shape, **kw)


def _potential(cfg) -> Potential:
    name = cfg.potential
    if name in ("quadratic", "abs"):
        return getattr(Potential, name)()
    if name in ("fair", "hyperbola", "huber"):
        return getattr(Potential, name)(cfg.param)
    raise ConfigurationError(f"unknown potential {name!r}")


def run_solver(name: str, cfg: ExperimentConfig, s: Setup):
    """Run one named solver; returns ``(image, trace)``."""
    n = cfg.iterations(name)
    op, y, ref = s.op, s.y, s.truth
    tol = cfg.tol or None
    if cfg.problem == "closed_form":
        if name == "coil_combine":
            x = coil_combine(y, op.smaps)
        else:
            x = sense_block_solve(y, op.smaps, cfg.every)
        tr = SolverTrace(ref)
        tr.record(0, DataTerm(op, y).value(x), x)
        return x, tr
    if cfg.problem in ("quadratic", "edge_preserving"):
        psi = Potential.quadratic() if cfg.problem == "quadratic" else _potential(cfg)
        cost = SmoothCost(op, y, s.lam, _transform(cfg, op.shape), psi)
        if name in ("cg", "pcg"):
            return cg_quadratic(cost, s.x0, n, precond="circulant" if name == "pcg" else None,
                                tol=cfg.tol, reference=ref)
        if name == "ncg":
            return ncg(cost, s.x0, n, reference=ref, tol=tol)
        if name == "ogm":
            return ogm(cost, s.x0, n, reference=ref)
        return gradient_descent(cost, s.x0, n, reference=ref, tol=tol)
    if cfg.problem == "synthesis":
        B = _transform(cfg, op.shape)
        cost = CompositeCost(op, y, s.lam, basis=B)
        z0 = B.forward(s.x0)
        if name in ("ista", "fista"):
            D = select_majorizer(op, B)
            z, tr = (ista if name == "ista" else fista)(cost, z0, n, D, reference=ref, tol=tol)
        else:
            z, tr = pogm(cost, z0, n, restart="gradient" if name == "pogm_restart" else False,
                         reference=ref, tol=tol)
        return B.adjoint(z), tr
    T = _transform(cfg, op.shape)
    if name == "admm":
        return admm_analysis(op, y, T, s.lam, mu=cfg.mu, x0=s.x0, iters=n, reference=ref)
    if name == "admm_structured":
        return admm_structured(op, y, T, s.lam, x0=s.x0, iters=n, reference=ref)
    return primal_dual(op, y, T, s.lam, x0=s.x0, iters=n, reference=ref)


def _write_image(out: Path, stem: str, x):
    io.write_cplx(out / f"{stem}.cplx", x)
    io.write_pgm(out / f"{stem}.pgm", x)


def summarize(traces: dict) -> dict:
    """Final values plus iterations to reach ``cost* + GAP_TOL (cost_0 - cost*)``.

    ``cost*`` is the lowest cost seen by any solver.
    """
    res = {}
    best = min(min(t.cost) for t in traces.values())
    for name, tr in traces.items():
        gap0 = tr.cost[0] - best
        res[name] = {
            "iterations": tr.iters[-1],
            "final_cost": tr.final_cost,
            "final_nrmse": tr.nrmse[-1],
            "iterations_to_gap": tr.iterations_to(best + GAP_TOL * gap0) if gap0 > 0 else 0,
            "events": len(tr.events),
        }
    return {"cost_star": best, "gap_tol": GAP_TOL, "solvers": res}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Simulate data, run every configured solver and write outputs.

    Files in ``out_dir`` (default ``cfg.out_dir``): ``config.txt``,
    ``truth``/``init`` images, ``<solver>.csv`` traces, ``<solver>``
    images (CPLX1 + PGM) and ``summary.json``. If a solver fails, the
    outputs of the solvers that finished and a summary marked ``failed``
    are kept and the error is re-raised.
    """
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    s = setup(cfg)
    _write_image(out, "truth", s.truth)
    _write_image(out, "init", s.x0)
    io.write_kspace(out / "kspace", s.y)

    summary = {
        "status": "ok",
        "lambda": s.lam,
        "sampling_fraction": s.op.mask.fraction,
        "grid": list(cfg.grid),
        "ncoils": cfg.ncoils,
        "init_nrmse": nrmse(s.x0, s.truth),
    }
    traces = {}
    try:
        for name in cfg.solvers:
            log.info("running %s (%d iterations)", name, cfg.iterations(name))
            x, tr = run_solver(name, cfg, s)
            traces[name] = tr
            tr.to_csv(out / f"{name}.csv", timing=cfg.timing)
            _write_image(out, name, x)
    except SolverError as e:
        summary.update(status="failed", error=str(e), failed_solver=name)
        raise
    finally:
        if traces:
            summary.update(summarize(traces))
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    return summary
