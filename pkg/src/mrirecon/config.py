"""Experiment configuration: flat ``key = value`` text or JSON.

Keys are dotted (``solver.names = ista, fista``); ``#`` starts a comment.
The JSON form may be flat (dotted keys) or nested objects. Per-solver
iteration counts use ``solver.iters.<name>``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from .errors import ConfigurationError
from .phantom import MASKS, PHANTOMS, MaskSpec

PROBLEMS = ("closed_form", "quadratic", "edge_preserving", "synthesis", "analysis")

SOLVERS = {
    "closed_form": ("coil_combine", "sense"),
    "quadratic": ("cg", "pcg", "gd"),
    "edge_preserving": ("ncg", "ogm", "gd"),
    "synthesis": ("ista", "fista", "pogm", "pogm_restart"),
    "analysis": ("admm", "admm_structured", "primal_dual"),
}


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _float_or_auto(v):
    if v is None or str(v).strip().lower() in ("auto", "none", ""):
        return None
    return float(v)


def _int_or_none(v):
    if v is None or str(v).strip().lower() in ("auto", "none", ""):
        return None
    return int(v)


def _names(v):
    if isinstance(v, (list, tuple)):
        items = v
    else:
        items = str(v).split(",")
    return tuple(s.strip() for s in items if str(s).strip())


def _snr(v):
    s = str(v).strip().lower()
    return math.inf if s in ("inf", "infinity", "none") else float(v)


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: str = field(default="shepp_logan", metadata={"key": "phantom.kind", "conv": str})
    size: int = field(default=64, metadata={"key": "phantom.size", "conv": int})
    phase: bool = field(default=False, metadata={"key": "phantom.phase", "conv": _bool})
    mask_kind: str = field(default="variable_density_lines", metadata={"key": "mask.kind", "conv": str})
    fraction: float = field(default=0.34, metadata={"key": "mask.fraction", "conv": float})
    every: int = field(default=2, metadata={"key": "mask.n", "conv": int})
    center: int | None = field(default=None, metadata={"key": "mask.center", "conv": _int_or_none})
    ncoils: int = field(default=1, metadata={"key": "smaps.ncoils", "conv": int})
    snr_db: float = field(default=40.0, metadata={"key": "noise.snr_db", "conv": _snr})
    problem: str = field(default="edge_preserving", metadata={"key": "model.problem", "conv": str})
    lam: float | None = field(default=None, metadata={"key": "model.lambda", "conv": _float_or_auto})
    lam_scale: float = field(default=0.01, metadata={"key": "model.lambda_scale", "conv": float})
    potential: str = field(default="fair", metadata={"key": "model.potential", "conv": str})
    param: float = field(default=0.1, metadata={"key": "model.param", "conv": float})
    transform: str = field(default="fd", metadata={"key": "model.transform", "conv": str})
    levels: int = field(default=3, metadata={"key": "model.levels", "conv": int})
    solvers: tuple = field(default=("ncg", "ogm"), metadata={"key": "solver.names", "conv": _names})
    iters: int = field(default=100, metadata={"key": "solver.iters", "conv": int})
    tol: float = field(default=0.0, metadata={"key": "solver.tol", "conv": float})
    mu: float | None = field(default=None, metadata={"key": "solver.mu", "conv": _float_or_auto})
    out_dir: str = field(default="out", metadata={"key": "output.dir", "conv": str})
    timing: bool = field(default=False, metadata={"key": "output.timing", "conv": _bool})
    seed: int = field(default=0, metadata={"key": "seed", "conv": int})
    solver_iters: dict = field(default_factory=dict, metadata={"key": "solver.iters.*"})

    def __post_init__(self):
        if self.phantom not in PHANTOMS:
            raise ConfigurationError(f"phantom.kind must be one of {PHANTOMS}")
        if self.mask_kind not in MASKS:
            raise ConfigurationError(f"mask.kind must be one of {MASKS}")
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"model.problem must be one of {PROBLEMS}")
        if not self.solvers:
            raise ConfigurationError("solver.names is empty")
        bad = [s for s in self.solvers if s not in SOLVERS[self.problem]]
        if bad:
            raise ConfigurationError(
                f"solvers {bad} do not apply to {self.problem}; choose from {SOLVERS[self.problem]}")
        for name, n in self.solver_iters.items():
            if name not in SOLVERS[self.problem] or int(n) < 0:
                raise ConfigurationError(f"bad per-solver iteration count solver.iters.{name} = {n}")
        if self.size < 8 or self.ncoils < 1 or self.iters < 0:
            raise ConfigurationError("need phantom.size >= 8, smaps.ncoils >= 1, solver.iters >= 0")
        if self.lam is not None and self.lam < 0:
            raise ConfigurationError("model.lambda must be nonnegative")

    # --- construction -------------------------------------------------
    @classmethod
    def from_flat(cls, flat: dict) -> "ExperimentConfig":
        by_key = {f.metadata["key"]: f for f in fields(cls)}
        kw, per = {}, {}
        for key, val in flat.items():
            if key.startswith("solver.iters."):
                try:
                    per[key.split(".", 2)[2]] = int(val)
                except ValueError as e:
                    raise ConfigurationError(f"{key}: {e}") from None
                continue
            f = by_key.get(key)
            if f is None or key == "solver.iters.*":
                raise ConfigurationError(f"unknown configuration key {key!r}")
            try:
                kw[f.name] = f.metadata["conv"](val)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"{key}: {e}") from None
        if per:
            kw["solver_iters"] = per
        return cls(**kw)

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        """Parse either format; JSON is recognized by a leading ``{``."""
        if text.lstrip().startswith("{"):
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"invalid JSON: {e}") from None
            return cls.from_flat(_flatten(data))
        flat = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {n}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key in flat:
                raise ConfigurationError(f"line {n}: duplicate key {key!r}")
            flat[key] = val
        return cls.from_flat(flat)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read config {path}: {e}") from None
        return cls.parse(text)

    def override(self, **kw) -> "ExperimentConfig":
        """Replace fields, skipping ``None`` values (unset CLI options)."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # --- serialization ------------------------------------------------
    def to_flat(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "solver_iters":
                for name in sorted(v):
                    out[f"solver.iters.{name}"] = int(v[name])
                continue
            if isinstance(v, tuple):
                v = ", ".join(v)
            elif v is None:
                v = "auto"
            elif isinstance(v, float) and math.isinf(v):
                v = "inf"
            out[f.metadata["key"]] = v
        return out

    def to_text(self) -> str:
        def fmt(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            return repr(v) if isinstance(v, float) else str(v)
        return "".join(f"{k} = {fmt(v)}\n" for k, v in self.to_flat().items())

    def to_json(self) -> str:
        return json.dumps(self.to_flat(), indent=2, sort_keys=True)

    # --- derived --------------------------------------------------------
    @property
    def grid(self) -> tuple[int, int]:
        return (self.size, self.size)

    @property
    def mask_spec(self) -> MaskSpec:
        return MaskSpec(self.mask_kind, self.fraction, self.every, self.center, self.seed)

    def iterations(self, solver: str) -> int:
        return int(self.solver_iters.get(solver, self.iters))


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


PRESETS = ("fig-ep", "fig-odwt", "quadratic", "full")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {PRESETS}")
    return resources.files("mrirecon").joinpath("presets", f"{name}.conf").read_text(encoding="utf-8")


def load_preset(name: str) -> ExperimentConfig:
    return ExperimentConfig.parse(preset_text(name))
