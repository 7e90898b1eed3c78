"""``recon`` command line: simulate data, run experiments and presets, inspect files.

Exit status: 0 on success, 2 for configuration errors, 3 for solver failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, io
from .config import PRESETS, ExperimentConfig, load_preset
from .errors import ConfigurationError, DimensionError, SolverError, UnsupportedOperationError
from .experiments import run_experiment, setup

log = logging.getLogger("mrirecon")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _add_overrides(p):
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--iters", type=int, help="override solver.iters (all solvers)")
    p.add_argument("--lambda", dest="lam", type=float, help="override model.lambda")
    p.add_argument("--out", help="output directory (overrides output.dir)")


def _apply(cfg: ExperimentConfig, args) -> ExperimentConfig:
    kw = {"seed": args.seed, "lam": args.lam, "out_dir": args.out}
    if args.iters is not None:
        kw.update(iters=args.iters, solver_iters={})
    return cfg.override(**kw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recon", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="write phantom, mask and k-space data for a config")
    p.add_argument("--config", required=True)
    _add_overrides(p)

    p = sub.add_parser("run", help="run the experiment described by a config file")
    p.add_argument("--config", required=True)
    _add_overrides(p)

    p = sub.add_parser("preset", help="run a built-in experiment")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--show", action="store_true", help="print the preset config and exit")
    _add_overrides(p)

    p = sub.add_parser("info", help="describe a CPLX1, MASK1 or PGM file")
    p.add_argument("file")
    return ap


def _simulate(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = setup(cfg)
    io.write_cplx(out / "truth.cplx", s.truth)
    io.write_pgm(out / "truth.pgm", s.truth)
    io.write_cplx(out / "smaps.cplx", s.op.smaps.maps)
    io.write_kspace(out / "kspace", s.y)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    return {"out": str(out), "samples": s.y.samples.shape[0], "ncoils": s.y.ncoils,
            "sampling_fraction": s.op.mask.fraction, "lambda": s.lam}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "info":
            print(json.dumps(io.describe(args.file), indent=2))
            return EXIT_OK
        if args.cmd == "preset":
            cfg = load_preset(args.name)
            if args.show:
                print(cfg.to_text(), end="")
                return EXIT_OK
        else:
            cfg = ExperimentConfig.load(args.config)
        cfg = _apply(cfg, args)
        if args.cmd == "simulate":
            res = _simulate(cfg)
        else:
            res = run_experiment(cfg)
        print(json.dumps(res, indent=2, sort_keys=True))
        return EXIT_OK
    except (ConfigurationError, DimensionError, UnsupportedOperationError, FileNotFoundError) as e:
        print(f"recon: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        print(f"recon: solver failed: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
