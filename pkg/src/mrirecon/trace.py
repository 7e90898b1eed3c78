"""Per-iteration solver traces and small numerical helpers shared by solvers."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError

log = logging.getLogger("mrirecon")

TRACE_HEADER = ("iter", "cost", "nrmse", "seconds")


def nrmse(x, ref) -> float:
    """``||x - ref|| / ||ref||`` over complex values."""
    ref = np.asarray(ref)
    den = np.linalg.norm(ref)
    if den == 0:
        raise ValueError("nrmse: reference image is zero")
    return float(np.linalg.norm(np.asarray(x) - ref) / den)


@dataclass
class SolverTrace:
    """Append-only record of ``(k, cost, nrmse, seconds)`` per iteration.

    ``nrmse`` is NaN when no reference image was given. ``extra`` holds
    solver-specific series (residual norms, constraint residuals, ...) and
    ``events`` collects notable occurrences such as restarts.
    """

    reference: np.ndarray | None = None
    iters: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    nrmse: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def __post_init__(self):
        self._t0 = time.perf_counter()

    def record(self, k: int, cost: float, x=None, **extra):
        if self.iters and k <= self.iters[-1]:
            raise ValueError(f"trace iterations must increase (got {k} after {self.iters[-1]})")
        if not np.isfinite(cost):
            raise SolverError(f"non-finite cost {cost} at iteration {k}")
        self.iters.append(int(k))
        self.cost.append(float(cost))
        if self.reference is not None and x is not None:
            self.nrmse.append(nrmse(x, self.reference))
        else:
            self.nrmse.append(float("nan"))
        self.seconds.append(time.perf_counter() - self._t0)
        for key, val in extra.items():
            self.extra.setdefault(key, []).append(val)

    def event(self, k: int, msg: str):
        self.events.append((int(k), msg))
        log.info("iter %d: %s", k, msg)

    def __len__(self):
        return len(self.iters)

    @property
    def final_cost(self) -> float:
        return self.cost[-1]

    def iterations_to(self, target: float) -> int | None:
        """First recorded iteration whose cost is ``<= target``."""
        for k, c in zip(self.iters, self.cost):
            if c <= target:
                return k
        return None

    def to_csv(self, path=None, timing: bool = True) -> str:
        """Write ``iter,cost,nrmse,seconds`` rows.

        With ``timing=False`` the seconds column holds ``nan`` so that the
        file only depends on the computation, not on wall time.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for k, c, e, s in zip(self.iters, self.cost, self.nrmse, self.seconds):
            w.writerow([k, repr(c), repr(e), repr(s) if timing else "nan"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        return text

    @classmethod
    def read_csv(cls, path) -> "SolverTrace":
        tr = cls()
        with open(path, encoding="utf-8") as f:
            rows = list(csv.reader(f))
        if tuple(rows[0]) != TRACE_HEADER:
            raise ValueError(f"bad trace header {rows[0]}")
        for k, c, e, s in rows[1:]:
            tr.iters.append(int(k))
            tr.cost.append(float(c))
            tr.nrmse.append(float(e))
            tr.seconds.append(float(s))
        return tr


def check_finite(x, k: int, name: str = "iterate"):
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite {name} at iteration {k}")


def power_iteration(apply, shape, iters: int = 50, tol: float = 1e-6, seed: int = 0,
                    dtype=np.complex128):
    """Largest eigenvalue of a Hermitian PSD operator ``apply``.

    Returns ``(estimate, converged)``. The estimate is a Rayleigh quotient,
    so it never exceeds the true value (up to roundoff).
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v = (v / np.linalg.norm(v)).astype(dtype)
    est = 0.0
    for _ in range(iters):
        w = apply(v)
        new = float(np.vdot(v, w).real)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, True
        v = w / nw
        if abs(new - est) <= tol * abs(new):
            return new, True
        est = new
    return est, False
