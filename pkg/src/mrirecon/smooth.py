"""Solvers for smooth regularized least squares.

    Psi(x) = 1/2 ||A x - y||^2 + lam sum_k psi([T x]_k)

covers the quadratic case (``psi = |z|^2 / 2``, solved by (P)CG) and the
edge-preserving case (Fair, hyperbola, Huber; solved by NCG or OGM).
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import ConfigurationError, InvariantError, SolverError
from .model import DataTerm, KSpaceData, SystemOperator
from .proximal import pogm_iterate
from .regularizers import FiniteDifference2D, Potential, Transform
from .trace import SolverTrace, check_finite

log = logging.getLogger("mrirecon")


def _inner(a, b) -> float:
    return float(np.vdot(a, b).real)


class SmoothCost:
    """Edge-preserving (or quadratic) regularized least-squares cost.

    Parameters
    ----------
    op : SystemOperator
    y : KSpaceData
    lam : float
        Regularization weight, ``>= 0``.
    T : Transform, optional
        Defaults to periodic 2D finite differences.
    psi : Potential, optional
        Must be smooth; defaults to the quadratic potential.
    """

    def __init__(self, op: SystemOperator, y: KSpaceData, lam: float = 0.0,
                 T: Transform | None = None, psi: Potential | None = None):
        if lam < 0:
            raise ConfigurationError("lam must be nonnegative")
        self.op = op
        self.y = y
        self.lam = float(lam)
        self.T = T if T is not None else FiniteDifference2D(op.shape)
        self.psi = psi if psi is not None else Potential.quadratic()
        if not self.psi.smooth:
            raise ConfigurationError("SmoothCost needs a differentiable potential")
        self.data = DataTerm(op, y)

    @property
    def quadratic(self) -> bool:
        return self.psi.kind == "quadratic"

    def regularizer(self, x) -> float:
        return self.lam * self.psi.value(self.T.forward(x)) if self.lam else 0.0

    def value(self, x) -> float:
        return self.data.value(x) + self.regularizer(x)

    def grad(self, x) -> np.ndarray:
        return self.value_and_grad(x)[1]

    def value_and_grad(self, x):
        f, g = self.data.value_and_grad(x)
        if self.lam:
            t = self.T.forward(x)
            f += self.lam * self.psi.value(t)
            g = g + self.lam * self.T.adjoint(self.psi.grad(t))
        return f, g

    def hessian(self, x) -> np.ndarray:
        """``(A'A + lam T'T) x``; exact Hessian only for the quadratic potential."""
        out = self.op.gram(x)
        if self.lam:
            out = out + self.lam * self.T.adjoint(self.T.forward(x))
        return out

    def lipschitz(self) -> float:
        """``N max sum_l |c_l|^2 + lam ||T||^2 sup psi''``."""
        return self.op.lipschitz_bound + self.lam * self.T.norm_sq * self.psi.max_curvature

    def curvature_along(self, x, d) -> float:
        """Half-quadratic curvature ``||A d||^2 + lam sum_k w_k |[T d]_k|^2``.

        ``w_k = psi'(|t|)/|t|`` at ``t = T x`` gives a quadratic majorizer of
        ``Psi`` along ``d`` (exact for the quadratic potential).
        """
        Ad = self.op.forward(d).samples
        c = _inner(Ad, Ad)
        if self.lam:
            Td = self.T.forward(d)
            c += self.lam * float(np.sum(self.psi.weight(self.T.forward(x)) * np.abs(Td) ** 2))
        return c


def cg_solve(apply, b, x0, iters: int, precond=None):
    """Plain (P)CG for a Hermitian PSD ``apply``; no tracing, for inner solves."""
    x = np.array(x0, dtype=complex, copy=True)
    r = b - apply(x)
    if not np.any(r):
        return x
    z = precond(r) if precond else r
    p = z.copy()
    rz = _inner(r, z)
    for _ in range(iters):
        Ap = apply(p)
        pAp = _inner(p, Ap)
        if pAp <= 0:
            break
        a = rz / pAp
        x = x + a * p
        r = r - a * Ap
        z = precond(r) if precond else r
        rz_new = _inner(r, z)
        if rz_new == 0:
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def circulant_preconditioner(apply_hessian, shape, floor: float = 1e-8):
    """Circulant approximation of a Hessian from its response to a centered impulse.

    Returns a function applying the inverse of that circulant matrix.
    """
    nx, ny = shape
    e = np.zeros(shape, dtype=complex)
    e[nx // 2, ny // 2] = 1
    h = np.roll(apply_hessian(e), (-(nx // 2), -(ny // 2)), axis=(0, 1))
    eig = np.fft.fft2(h).real
    eig = np.maximum(eig, floor * eig.max())
    return lambda r: np.fft.ifft2(np.fft.fft2(r) / eig)


def cg_quadratic(cost: SmoothCost, x0, iters: int, precond=None, tol: float = 0.0,
                 reference=None):
    """(Preconditioned) conjugate gradient for ``(A'A + lam T'T) x = A'y``.

    Parameters
    ----------
    cost : SmoothCost
        Must use the quadratic potential.
    x0 : ndarray
    iters : int
        Maximum number of CG iterations.
    precond : None, ``"circulant"`` or callable
        Callable preconditioners apply ``M^{-1}`` to a residual.
    tol : float
        Stop once ``||b - H x|| <= tol ||b||``; the residual norms are
        stored in ``trace.extra["residual"]`` (relative).
    reference : ndarray, optional
        Image used for the NRMSE column.
    """
    if not cost.quadratic:
        raise ConfigurationError("cg_quadratic needs the quadratic potential")
    if precond == "circulant":
        precond = circulant_preconditioner(cost.hessian, cost.op.shape)
    elif precond is not None and not callable(precond):
        raise ConfigurationError(f"unknown preconditioner {precond!r}")

    x = np.array(x0, dtype=complex, copy=True)
    b = cost.data.Aty
    bnorm = np.linalg.norm(b) or 1.0
    r = b - cost.hessian(x)
    trace = SolverTrace(reference)
    trace.record(0, cost.value(x), x, residual=np.linalg.norm(r) / bnorm)
    if np.linalg.norm(r) <= tol * bnorm or not np.any(r):
        return x, trace
    z = precond(r) if precond else r
    p = z.copy()
    rz = _inner(r, z)
    for k in range(1, iters + 1):
        Hp = cost.hessian(p)
        pHp = _inner(p, Hp)
        if not np.isfinite(pHp):
            raise SolverError(f"CG diverged at iteration {k} (p'Hp = {pHp})")
        if pHp <= 0:
            trace.event(k, "zero curvature direction; stopping")
            break
        a = rz / pHp
        x = x + a * p
        r = r - a * Hp
        check_finite(x, k)
        rel = np.linalg.norm(r) / bnorm
        trace.record(k, cost.value(x), x, residual=rel)
        if rel <= tol or rel == 0:
            break
        z = precond(r) if precond else r
        rz_new = _inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, trace


def gradient_descent(cost: SmoothCost, x0, iters: int, L: float | None = None,
                     reference=None, tol: float | None = None):
    """Fixed-step gradient descent ``x <- x - grad Psi(x) / L``.

    A nonincreasing cost is guaranteed for a valid ``L``; an increase
    raises :class:`InvariantError`.
    """
    L = float(L or cost.lipschitz())
    x = np.array(x0, dtype=complex, copy=True)
    trace = SolverTrace(reference)
    prev, g = cost.value_and_grad(x)
    trace.record(0, prev, x)
    for k in range(1, iters + 1):
        x = x - g / L
        check_finite(x, k)
        val, g = cost.value_and_grad(x)
        trace.record(k, val, x)
        if val > prev + 1e-12 * abs(prev):
            raise InvariantError(f"gradient descent cost increased at iteration {k}")
        if tol is not None and abs(prev - val) <= tol * abs(val):
            break
        prev = val
    return x, trace


def ncg(cost: SmoothCost, x0, iters: int, reference=None, tol: float | None = None,
        armijo: float = 1e-4, max_backtrack: int = 30):
    """Nonlinear CG with Polak-Ribiere+ directions.

    The line search starts from the minimizer of a half-quadratic majorizer
    along the search direction (the exact line search for quadratic
    potentials), then halves the step until the Armijo condition holds.
    If that fails the iteration falls back to a ``1/L`` gradient step, and
    stops when even that does not decrease the cost (roundoff level).
    """
    x = np.array(x0, dtype=complex, copy=True)
    trace = SolverTrace(reference)
    val, g = cost.value_and_grad(x)
    trace.record(0, val, x)
    d = -g
    g_old = None
    for k in range(1, iters + 1):
        gg = _inner(g, g)
        if gg == 0:
            break
        if g_old is not None:
            beta = max(0.0, _inner(g, g - g_old) / _inner(g_old, g_old))
            d = -g + beta * d
            if _inner(d, -g) <= 0:
                trace.event(k, "non-descent direction; restarting with -grad")
                d = -g
        slope = _inner(g, d)  # < 0
        curv = cost.curvature_along(x, d)
        step = -slope / curv if curv > 0 else 1.0 / cost.lipschitz()
        for _ in range(max_backtrack):
            xt = x + step * d
            vt = cost.value(xt)
            if vt <= val + armijo * step * slope:
                break
            step *= 0.5
        else:
            xt = x - g / cost.lipschitz()
            vt = cost.value(xt)
            if vt > val:
                trace.event(k, "no decrease along -grad either; converged to roundoff")
                break
            trace.event(k, "line search failed; gradient step")
            d = -g
        check_finite(xt, k)
        prev = val
        x = xt
        g_old = g
        val, g = cost.value_and_grad(x)
        trace.record(k, val, x)
        if tol is not None and abs(prev - val) <= tol * abs(val):
            break
    return x, trace


def ogm(cost: SmoothCost, x0, iters: int, L: float | None = None, reference=None):
    """Optimized gradient method: POGM with ``g = 0`` (identity prox)."""
    L = float(L or cost.lipschitz())
    trace = SolverTrace(reference)
    x = pogm_iterate(cost.grad, lambda v, t: v, x0, iters, L, cost=cost.value, trace=trace)
    return x, trace
