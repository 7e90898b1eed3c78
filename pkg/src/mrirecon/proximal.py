"""Proximal gradient solvers for ``f(z) + g(z)``: ISTA/PGM, FISTA/FPGM, POGM.

The main use is the synthesis problem

    min_z 1/2 ||A B z - y||^2 + lam ||z||_1 ,   x = B z,

with ``B = T'`` for an orthogonal wavelet ``T``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvariantError, UnsupportedOperationError
from .model import DataTerm, KSpaceData, SystemOperator
from .regularizers import Potential, Transform
from .trace import SolverTrace, check_finite, power_iteration

log = logging.getLogger("mrirecon")

RESTART_RULES = ("none", "function", "gradient")


class CompositeCost:
    """``f(z) + g(z)`` with ``f = 1/2 ||A B z - y||^2`` and ``g = lam sum_k w_k psi(z_k)``.

    Parameters
    ----------
    op, y : SystemOperator, KSpaceData
    lam : float
        Regularization weight (``>= 0``).
    basis : Transform, optional
        Synthesis is ``x = basis.adjoint(z)``; ``None`` means ``z`` is the image.
    penalty : Potential, optional
        ``abs`` (default), ``huber`` or ``quadratic`` -- anything with a prox.
    weights : array, optional
        Per-coefficient weights; defaults to the basis weights or ones.
    """

    def __init__(self, op: SystemOperator, y: KSpaceData, lam: float,
                 basis: Transform | None = None, penalty: Potential | None = None,
                 weights=None):
        if lam < 0:
            raise ConfigurationError("lam must be nonnegative")
        self.op = op
        self.y = y
        self.lam = float(lam)
        self.basis = basis
        self.penalty = penalty or Potential.abs()
        if self.penalty.kind not in ("abs", "huber", "quadratic"):
            raise UnsupportedOperationError(f"no closed-form prox for {self.penalty.kind!r}")
        if weights is None and basis is not None:
            weights = basis.weights
        self.weights = 1.0 if weights is None else np.asarray(weights, dtype=float)
        self.data = DataTerm(op, y)

    @property
    def var_shape(self):
        return self.op.shape if self.basis is None else self.basis.coef_shape

    def image(self, z) -> np.ndarray:
        return z if self.basis is None else self.basis.adjoint(z)

    def coefs(self, x) -> np.ndarray:
        """Analysis coefficients ``B' x`` (a left inverse when ``B`` is orthogonal)."""
        return x if self.basis is None else self.basis.forward(x)

    def smooth_value_and_grad(self, z):
        f, gx = self.data.value_and_grad(self.image(z))
        return f, self.coefs(gx)

    def smooth_grad(self, z):
        return self.coefs(self.data.grad(self.image(z)))

    def smooth_value(self, z) -> float:
        return self.data.value(self.image(z))

    def nonsmooth_value(self, z) -> float:
        if self.lam == 0:
            return 0.0
        return self.lam * float(np.sum(self.weights * self.penalty.elementwise(z)))

    def value(self, z) -> float:
        return self.smooth_value(z) + self.nonsmooth_value(z)

    def prox(self, v, step):
        """``prox_{step * g}(v)``; ``step`` may be per-coefficient."""
        if self.lam == 0:
            return np.array(v, copy=True)
        return self.penalty.prox(v, step * self.lam * self.weights)

    def lipschitz(self) -> float:
        """Cartesian bound ``N max_j sum_l |c_l(j)|^2 ||B||^2`` on ``||A B||^2``."""
        nb = 1.0 if self.basis is None else self.basis.norm_sq
        return self.op.lipschitz_bound * nb

    def prox_residual(self, z, L: float) -> float:
        """``||z - prox_{g/L}(z - grad f(z) / L)||``; zero exactly at minimizers."""
        return float(np.linalg.norm(z - self.prox(z - self.smooth_grad(z) / L, 1.0 / L)))


@dataclass(frozen=True)
class Majorizer:
    """Diagonal ``D`` with ``D - B'A'AB`` positive semidefinite."""

    diag: np.ndarray | float

    @property
    def is_scalar(self) -> bool:
        return np.ndim(self.diag) == 0

    @property
    def scalar(self) -> float:
        return float(np.max(self.diag))

    def dense(self, n: int) -> np.ndarray:
        return np.diag(np.broadcast_to(np.asarray(self.diag, dtype=float).ravel(), (n,)))


def select_majorizer(op: SystemOperator, B: Transform | None = None, *,
                     iters: int = 50, tol: float = 1e-6, inflate: float = 1.01,
                     seed: int = 0) -> Majorizer:
    """Choose ``D`` for ISTA-type steps on ``1/2 ||A B z - y||^2``.

    Cartesian sampling gives ``F'F <= N I``; with normalized maps
    (``C'C = I``) and an orthogonal ``B`` this makes ``D = N I`` valid.
    Otherwise ``||A B||^2`` is estimated by power iteration and inflated
    by ``inflate``.
    """
    N = op.npixels
    if op.smaps.normalized and (B is None or B.orthogonal):
        return Majorizer(float(N))

    if B is None:
        shape = op.shape
        gram = op.gram
    else:
        shape = B.coef_shape
        gram = lambda z: B.forward(op.gram(B.adjoint(z)))  # noqa: E731
    est, ok = power_iteration(gram, shape, iters=iters, tol=tol, seed=seed)
    if not ok:
        log.warning("power iteration did not reach tol %g in %d iterations", tol, iters)
    return Majorizer(inflate * est)


def _steps(D, cost: CompositeCost):
    if D is None:
        D = Majorizer(cost.lipschitz())
    if isinstance(D, (int, float)):
        D = Majorizer(float(D))
    d = np.asarray(D.diag, dtype=float)
    if np.any(d <= 0):
        raise ConfigurationError("majorizer must be positive definite")
    return 1.0 / d


def ista(cost: CompositeCost, z0, iters: int, D: Majorizer | float | None = None,
         reference=None, tol: float | None = None, check_monotone: bool = True):
    """ISTA / PGM: ``z <- prox_{g D^-1}(z - D^-1 grad f(z))``.

    With the 1-norm this is ``soft(z - D^-1 B'A'(A B z - y), lam / d)``.
    The cost is checked to be nonincreasing (relative slack 1e-12).

    Returns
    -------
    z : ndarray
        Final coefficients.
    trace : SolverTrace
    """
    step = _steps(D, cost)
    z = np.array(z0, dtype=complex, copy=True)
    trace = SolverTrace(reference)
    prev = cost.value(z)
    trace.record(0, prev, cost.image(z))
    for k in range(1, iters + 1):
        z = cost.prox(z - step * cost.smooth_grad(z), step)
        check_finite(z, k)
        val = cost.value(z)
        trace.record(k, val, cost.image(z))
        if check_monotone and val > prev + 1e-12 * abs(prev):
            raise InvariantError(f"ISTA cost increased at iteration {k}: {prev!r} -> {val!r}")
        if tol is not None and abs(prev - val) <= tol * abs(val):
            break
        prev = val
    return z, trace


def pgm_general(cost: CompositeCost, x0, iters: int, L: float | None = None,
                reference=None, tol: float | None = None):
    """Proximal gradient with scalar step ``1/L`` for any prox-able penalty."""
    return ista(cost, x0, iters, D=Majorizer(float(L or cost.lipschitz())),
                reference=reference, tol=tol)


def fista(cost: CompositeCost, z0, iters: int, D: Majorizer | float | None = None,
          reference=None, tol: float | None = None):
    """FISTA / FPGM (Beck-Teboulle momentum, no final-iterate change).

    ``t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`` and the extrapolated point
    ``y = z_k + (t_k - 1)/t_{k+1} (z_k - z_{k-1})``.
    """
    step = _steps(D, cost)
    z = np.array(z0, dtype=complex, copy=True)
    v = z.copy()
    t = 1.0
    trace = SolverTrace(reference)
    prev = cost.value(z)
    trace.record(0, prev, cost.image(z))
    for k in range(1, iters + 1):
        znew = cost.prox(v - step * cost.smooth_grad(v), step)
        check_finite(znew, k)
        tnew = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        v = znew + ((t - 1) / tnew) * (znew - z)
        z, t = znew, tnew
        val = cost.value(z)
        trace.record(k, val, cost.image(z))
        if tol is not None and abs(prev - val) <= tol * abs(val):
            break
        prev = val
    return z, trace


def pogm_theta(theta_prev: float, final: bool) -> float:
    """POGM momentum update; ``final`` selects the last-iteration rule."""
    c = 8.0 if final else 4.0
    return 0.5 * (1 + np.sqrt(c * theta_prev**2 + 1))


def pogm_iterate(grad, prox, x0, niter: int, L: float, *, cost=None, trace=None,
                 image=None, restart: str = "none", tol: float | None = None):
    """Core POGM loop for ``f + g`` with ``grad = grad f`` and ``prox(v, t) = prox_{t g}(v)``.

    Follows the published pseudo-code with ``w_0 = x_0``, ``theta_0 = 1``::

        theta_k = (1 + sqrt(4 theta_{k-1}^2 + 1)) / 2      (k < N)
                  (1 + sqrt(8 theta_{k-1}^2 + 1)) / 2      (k = N)
        gamma_k = (2 theta_{k-1} + theta_k - 1) / (L theta_k)
        w_k = x_{k-1} - grad f(x_{k-1}) / L
        z_k = w_k + (theta_{k-1} - 1)/theta_k (w_k - w_{k-1})
                  + theta_{k-1}/theta_k (w_k - x_{k-1})
                  + (theta_{k-1} - 1)/(L gamma_{k-1} theta_k) (z_{k-1} - x_{k-1})
        x_k = prox_{gamma_k g}(z_k)

    A restart resets ``theta`` to 1, which removes every momentum term
    except the ``w_k - x_{k-1}`` over-relaxation, as in a fresh start.
    ``cost`` is needed for ``restart='function'`` and for ``tol``.
    """
    if restart not in RESTART_RULES:
        raise ConfigurationError(f"unknown restart rule {restart!r}")
    if L <= 0:
        raise ConfigurationError("Lipschitz constant must be positive")
    if niter < 0:
        raise ConfigurationError("iteration count must be nonnegative")
    if cost is None and (restart == "function" or tol is not None or trace is not None):
        raise ConfigurationError("function restart, tol and tracing need a cost function")
    image = image or (lambda v: v)
    x = np.array(x0, dtype=complex, copy=True)
    x_prev = x
    w_old = x.copy()
    z_old = x.copy()
    theta_old = 1.0
    gamma_old = 1.0 / L  # never used: its coefficient is zero while theta = 1
    sub = None  # element of the subdifferential of g at x, from the last prox
    prev = cost(x) if cost is not None else None
    if trace is not None:
        trace.record(0, prev, image(x))
    for k in range(1, niter + 1):
        g = grad(x)
        if restart == "gradient" and sub is not None and theta_old != 1:
            # overshoot test: the composite gradient at the new point still
            # has a positive component along the last step
            if float(np.vdot(g + sub, x - x_prev).real) > 0:
                theta_old = 1.0
                if trace is not None:
                    trace.event(k, "momentum restart")
        theta = pogm_theta(theta_old, final=(k == niter))
        gamma = (2 * theta_old + theta - 1) / (L * theta)
        w = x - g / L
        z = (w + ((theta_old - 1) / theta) * (w - w_old)
             + (theta_old / theta) * (w - x))
        if theta_old != 1:
            z = z + ((theta_old - 1) / (L * gamma_old * theta)) * (z_old - x)
        xnew = prox(z, gamma)
        check_finite(xnew, k)
        sub = (z - xnew) / gamma

        val = cost(xnew) if cost is not None else None
        restarted = restart == "function" and val > prev
        if trace is not None:
            trace.record(k, val, image(xnew))
            if restarted:
                trace.event(k, "momentum restart")

        done = tol is not None and val is not None and abs(prev - val) <= tol * abs(val)
        w_old, z_old, x_prev, x = w, z, x, xnew
        theta_old, gamma_old = (1.0 if restarted else theta), gamma
        prev = val
        if done:
            if k < niter and trace is not None:
                trace.event(k, "tolerance reached; final-theta step skipped")
            break
    return x


def pogm(cost: CompositeCost, x0, iters: int, L: float | None = None,
         restart: bool | str = False, reference=None, tol: float | None = None):
    """Proximal optimized gradient method with optional adaptive restart.

    Parameters
    ----------
    cost : CompositeCost
    x0 : ndarray
        Initial variable (coefficients for synthesis costs).
    iters : int
        Total iterations ``N``; the final-iteration momentum rule needs it.
    L : float, optional
        Lipschitz constant of ``grad f``; defaults to ``cost.lipschitz()``.
    restart : bool or {'none', 'function', 'gradient'}
        ``True`` means function-value restart.

    Returns
    -------
    x : ndarray
    trace : SolverTrace
    """
    if restart is True:
        restart = "function"
    elif restart is False or restart is None:
        restart = "none"
    L = float(L or cost.lipschitz())
    trace = SolverTrace(reference)
    x = pogm_iterate(cost.smooth_grad, cost.prox, x0, iters, L, cost=cost.value,
                     trace=trace, image=cost.image, restart=restart, tol=tol)
    return x, trace

