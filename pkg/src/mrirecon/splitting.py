"""Variable-splitting and primal-dual solvers for the analysis problem

    min_x 1/2 ||A x - y||^2 + lam ||T x||_1 .

``admm_analysis`` splits ``z = T x``; ``admm_structured`` uses the split
``u = C x, z = T v, v = x`` so that every subproblem is diagonal in the
image or k-space domain; ``primal_dual`` handles the data term by explicit
gradient steps and ``||T x||_1`` through its dual unit ball.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import ConfigurationError, UnsupportedOperationError
from .model import DataTerm, KSpaceData, SystemOperator
from .regularizers import Transform, soft_threshold
from .smooth import cg_solve
from .trace import SolverTrace, check_finite

log = logging.getLogger("mrirecon")


class AnalysisCost:
    """``1/2 ||A x - y||^2 + lam sum_k w_k |[T x]_k|``."""

    def __init__(self, op: SystemOperator, y: KSpaceData, T: Transform, lam: float):
        if lam < 0:
            raise ConfigurationError("lam must be nonnegative")
        self.op, self.y, self.T, self.lam = op, y, T, float(lam)
        self.data = DataTerm(op, y)

    def value(self, x) -> float:
        v = self.data.value(x)
        if self.lam:
            v += self.lam * self.T.l1(x)
        return v


def _start(op, x0):
    if x0 is None:
        return np.zeros(op.shape, dtype=complex)
    return np.array(x0, dtype=complex, copy=True)


def admm_analysis(op: SystemOperator, y: KSpaceData, T: Transform, lam: float,
                  mu: float | None = None, x0=None, iters: int = 100, inner_cg: int = 3,
                  reference=None):
    """ADMM with the split ``z = T x`` and scaled dual ``eta``.

    Each outer iteration performs::

        z   <- soft(T x + eta, lam w / mu)
        x   <- argmin 1/2||A x - y||^2 + mu/2 ||T x - z + eta||^2   (inner CG)
        eta <- eta + T x - z

    The x-update solves ``(A'A + mu T'T) x = A'y + mu T'(z - eta)`` with
    ``inner_cg`` warm-started CG iterations. ``mu`` defaults to ``lam``
    (or 1 when ``lam = 0``). ``trace.extra["constraint"]`` holds
    ``||T x - z||``.
    """
    if mu is None:
        mu = lam if lam > 0 else 1.0
    if mu <= 0:
        raise ConfigurationError("ADMM penalty mu must be positive")
    if inner_cg < 1:
        raise ConfigurationError("inner_cg must be at least 1")
    cost = AnalysisCost(op, y, T, lam)
    thresh = lam * T.weight_array / mu
    x = _start(op, x0)
    z = T.forward(x)
    eta = np.zeros_like(z)
    H = lambda v: op.gram(v) + mu * T.adjoint(T.forward(v))  # noqa: E731

    trace = SolverTrace(reference)
    trace.record(0, cost.value(x), x, constraint=0.0)
    worst = np.inf
    for k in range(1, iters + 1):
        z = soft_threshold(T.forward(x) + eta, thresh)
        x = cg_solve(H, cost.data.Aty + mu * T.adjoint(z - eta), x, inner_cg)
        check_finite(x, k)
        r = T.forward(x) - z
        eta = eta + r
        res = float(np.linalg.norm(r))
        trace.record(k, cost.value(x), x, constraint=res)
        if k % 100 == 0:
            # ignore growth at roundoff level
            if res > worst and res > 1e-10 * max(1.0, float(np.linalg.norm(z))):
                log.warning("ADMM constraint residual grew over the last 100 iterations")
            worst = res
    return x, trace


def condition_penalties(op: SystemOperator, T: Transform, kappa: float = 20.0):
    """AL penalties for :func:`admm_structured` from condition-number targets.

    Subproblem matrices and the rule used for each:

    * u: ``F'MF + mu1 I`` has spectrum in ``[mu1, N + mu1]`` so
      ``mu1 = N / (kappa - 1)``;
    * x: ``mu1 C'C + mu3 I``; ``mu3 = mu1`` unless the map dynamic range
      needs a larger ``mu3`` to keep the condition number at ``kappa``;
    * v: ``mu2 T'T + mu3 I`` with ``T'T`` in ``[0, ||T||^2]``, so
      ``mu2 = mu3 (kappa - 1) / ||T||^2`` (``mu2 = mu3`` when ``T`` is
      orthogonal).
    """
    if kappa <= 1:
        raise ConfigurationError("target condition number must exceed 1")
    N = op.npixels
    mu1 = N / (kappa - 1)
    ssq = op.smaps.sum_of_squares()
    smax, smin = float(ssq.max()), float(ssq.min())
    mu3 = max(mu1, mu1 * (smax - kappa * smin) / (kappa - 1))
    if T.orthogonal:
        mu2 = mu3
    else:
        mu2 = mu3 * (kappa - 1) / T.norm_sq
    return mu1, mu2, mu3


class StructuredSplit:
    """Closed-form subproblem solvers for the ``u = Cx, z = Tv, v = x`` split."""

    def __init__(self, op: SystemOperator, y: KSpaceData, T: Transform, mu1, mu2, mu3):
        if not T.circulant:
            raise UnsupportedOperationError(
                f"structured ADMM needs a circulant T'T (periodic differences or "
                f"orthogonal wavelets), got {T.kind}")
        if min(mu1, mu2, mu3) <= 0:
            raise ConfigurationError("penalties must be positive")
        self.op, self.T = op, T
        self.mu1, self.mu2, self.mu3 = float(mu1), float(mu2), float(mu3)
        self.maps = op.smaps.maps.astype(complex)
        self.ssq = op.smaps.sum_of_squares()
        self.Fty = np.fft.ifft2(y.zerofill(), norm="forward")  # F' y_l per coil
        self.u_spec = op.npixels * op.mask.keep + self.mu1
        self.v_spec = self.mu2 * T.gram_spectrum() + self.mu3

    def solve_u(self, x, eta_u):
        """``(F'MF + mu1 I) u_l = F'y_l + mu1 (c_l x + eta_l)``."""
        b = self.Fty + self.mu1 * (self.maps * x + eta_u)
        return np.fft.ifft2(np.fft.fft2(b) / self.u_spec)

    def solve_v(self, x, z, eta_z, eta_v):
        """``(mu2 T'T + mu3 I) v = mu2 T'(z - eta_z) + mu3 (x + eta_v)``."""
        b = self.mu2 * self.T.adjoint(z - eta_z) + self.mu3 * (x + eta_v)
        return np.fft.ifft2(np.fft.fft2(b) / self.v_spec)

    def solve_x(self, u, v, eta_u, eta_v):
        """``(mu1 C'C + mu3 I) x = mu1 C'(u - eta_u) + mu3 (v - eta_v)``."""
        b = self.mu1 * np.sum(np.conj(self.maps) * (u - eta_u), axis=0) + self.mu3 * (v - eta_v)
        return b / (self.mu1 * self.ssq + self.mu3)

    def solve_z(self, v, eta_z, lam):
        return soft_threshold(self.T.forward(v) + eta_z, lam * self.T.weight_array / self.mu2)


def admm_structured(op: SystemOperator, y: KSpaceData, T: Transform, lam: float,
                    mu1: float | None = None, mu2: float | None = None,
                    mu3: float | None = None, x0=None, iters: int = 100, reference=None):
    """ADMM on ``min 1/2||F_L u - y||^2 + lam||z||_1`` s.t. ``u = Cx, z = Tv, v = x``.

    The variables form two blocks, ``(u, v)`` and ``(x, z)``, each of which
    separates into exact closed-form solves: FFT-diagonal for ``u`` and
    ``v``, pixelwise for ``x``, soft thresholding for ``z``. Penalties
    default to :func:`condition_penalties`. ``trace.extra`` records the
    three constraint residual norms.
    """
    d1, d2, d3 = condition_penalties(op, T)
    split = StructuredSplit(op, y, T, mu1 or d1, mu2 or d2, mu3 or d3)
    cost = AnalysisCost(op, y, T, lam)

    x = _start(op, x0)
    v = x.copy()
    u = split.maps * x
    z = T.forward(v)
    eta_u = np.zeros_like(u)
    eta_z = np.zeros_like(z)
    eta_v = np.zeros_like(x)

    trace = SolverTrace(reference)
    trace.record(0, cost.value(x), x, r_u=0.0, r_z=0.0, r_v=0.0)
    for k in range(1, iters + 1):
        u = split.solve_u(x, eta_u)
        v = split.solve_v(x, z, eta_z, eta_v)
        x = split.solve_x(u, v, eta_u, eta_v)
        z = split.solve_z(v, eta_z, lam)
        check_finite(x, k)
        ru = split.maps * x - u
        rz = T.forward(v) - z
        rv = x - v
        eta_u, eta_z, eta_v = eta_u + ru, eta_z + rz, eta_v + rv
        trace.record(k, cost.value(x), x, r_u=float(np.linalg.norm(ru)),
                     r_z=float(np.linalg.norm(rz)), r_v=float(np.linalg.norm(rv)))
    return x, trace


def project_unit_ball(z):
    """Elementwise projection onto ``{|z_k| <= 1}``: ``z / max(1, |z|)``."""
    return z / np.maximum(1.0, np.abs(z))


def primal_dual(op: SystemOperator, y: KSpaceData, T: Transform, lam: float,
                tau: float | None = None, sigma: float | None = None, x0=None,
                iters: int = 100, reference=None):
    """Primal-dual iteration for ``min_x max_{|z|<=1} f(x) + lam Re<z, W T x>``.

    With ``K = lam W T`` (``W`` the 1-norm weights)::

        x+ = x - tau (A'(A x - y) + K' z)
        z  = proj(z + sigma K (2 x+ - x))

    Step sizes must satisfy ``tau (L_A / 2 + sigma ||K||^2) <= 1`` with
    ``L_A = N max sum|c_l|^2``. Defaults: ``sigma = 5 L_A / ||K||^2`` and
    ``tau`` at 0.99 of the stability limit for that ``sigma`` (``1 / L_A``
    when ``lam = 0``). Returns ``(x, trace)``; the final dual
    iterate is stored in ``trace.extra["dual"]``.
    """
    LA = op.lipschitz_bound
    wmax = float(np.max(T.weight_array))
    Knorm = lam**2 * wmax**2 * T.norm_sq
    if sigma is None:
        sigma = 5 * LA / Knorm if Knorm > 0 else 1.0
    if tau is None:
        # strictly inside the stability region; plain 1/L steps when K = 0
        tau = 0.99 / (LA / 2 + sigma * Knorm) if Knorm > 0 else 1.0 / LA
    if tau <= 0 or sigma <= 0:
        raise ConfigurationError("step sizes must be positive")
    if tau * (LA / 2 + sigma * Knorm) > 1 + 1e-12:
        raise ConfigurationError(
            f"unstable steps: tau (L/2 + sigma ||K||^2) = {tau * (LA / 2 + sigma * Knorm):.4g} > 1")
    cost = AnalysisCost(op, y, T, lam)
    Kw = lam * T.weight_array
    x = _start(op, x0)
    z = np.zeros(T.coef_shape, dtype=complex)
    trace = SolverTrace(reference)
    trace.record(0, cost.value(x), x)
    for k in range(1, iters + 1):
        g = cost.data.grad(x)
        if lam:
            g = g + T.adjoint(Kw * z)
        xnew = x - tau * g
        check_finite(xnew, k)
        if lam:
            z = project_unit_ball(z + sigma * Kw * T.forward(2 * xnew - x))
        x = xnew
        trace.record(k, cost.value(x), x)
    trace.extra["dual"] = z
    return x, trace
