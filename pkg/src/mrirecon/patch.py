"""Patch-based synthesis/analysis regularizers and adaptive (learned) variants.

Joint objectives use the half-squared fit throughout::

    analysis / TLMRI:  1/2||A x - y||^2 + lam sum_p [1/2||Omega P_p x - z_p||^2 + alpha||z_p||_1]
    synthesis / DLMRI: 1/2||A x - y||^2 + lam sum_p [1/2||P_p x - D z_p||^2 + alpha||z_p||_1]

so that the code update is exactly ``soft(., alpha)`` for a unitary
transform. Patches are periodic; images are ``(nx, ny)`` arrays and patch
matrices are ``d x P``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ConfigurationError, InvariantError
from .model import DataTerm, KSpaceData, SystemOperator
from .regularizers import PatchConfig, PatchOperator, soft_threshold
from .smooth import cg_solve
from .trace import SolverTrace, check_finite

log = logging.getLogger("mrirecon")


@dataclass(frozen=True, eq=False)
class Dictionary:
    """``d x J`` synthesis dictionary; columns are unit norm when ``unit_norm``."""

    atoms: np.ndarray
    unit_norm: bool = True

    def __post_init__(self):
        a = np.asarray(self.atoms)
        if a.ndim != 2:
            raise ConfigurationError("dictionary atoms must be a d x J matrix")
        if self.unit_norm and not np.allclose(np.linalg.norm(a, axis=0), 1, atol=1e-10, rtol=0):
            raise ConfigurationError("dictionary columns are not unit norm")
        object.__setattr__(self, "atoms", a)

    @property
    def shape(self):
        return self.atoms.shape


@dataclass(frozen=True, eq=False)
class TransformModel:
    """Square patch transform ``Omega`` (``d x d``), unitary by construction."""

    omega: np.ndarray
    constraint: str = "unitary"

    def __post_init__(self):
        w = np.asarray(self.omega)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ConfigurationError("Omega must be square")
        if self.constraint != "unitary":
            raise ConfigurationError(f"unsupported constraint {self.constraint!r}")
        if not np.allclose(w.conj().T @ w, np.eye(w.shape[0]), atol=1e-10, rtol=0):
            raise ConfigurationError("Omega is not unitary")
        object.__setattr__(self, "omega", w)


@dataclass
class SparseCodes:
    z: np.ndarray

    @property
    def density(self) -> float:
        """Fraction of nonzero coefficients."""
        return float(np.count_nonzero(self.z)) / self.z.size


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; rows are basis functions."""
    return scipy.fft.dct(np.eye(n), norm="ortho", axis=0)


def dct_transform(patch_size) -> TransformModel:
    """Separable 2D DCT acting on row-major vectorized ``h x w`` patches."""
    h, w = patch_size
    return TransformModel(np.kron(dct_matrix(h), dct_matrix(w)))


def overcomplete_dct(patch_size, J: int) -> Dictionary:
    """Separable overcomplete DCT dictionary with ``J = k_h k_w`` atoms.

    ``J = d`` gives the orthonormal 2D DCT basis.
    """
    h, w = patch_size
    if J == h * w:
        return Dictionary(dct_transform(patch_size).omega.conj().T.astype(complex))
    k = int(round(np.sqrt(J)))
    if k * k != J or k < max(h, w):
        raise ConfigurationError(f"J={J} must be a square >= the patch side lengths squared")

    def one_d(n):
        D = np.cos(np.pi * np.outer(np.arange(n), np.arange(k)) / k)
        D[:, 1:] -= D[:, 1:].mean(axis=0)
        return D / np.linalg.norm(D, axis=0)

    D = np.kron(one_d(h), one_d(w))
    return Dictionary((D / np.linalg.norm(D, axis=0)).astype(complex))


def _pogm_lasso(D, X, alpha, Z0, iters, tol):
    """Column-separable POGM for ``min_Z 1/2||D Z - X||^2 + alpha||Z||_1``.

    Each column carries its own momentum and gradient-restart state, so the
    result for a patch does not depend on which other patches are batched.
    """
    L = float(np.linalg.norm(D, 2) ** 2)
    DH = D.conj().T
    DHX = DH @ X
    G = DH @ D
    x = np.array(Z0, dtype=complex, copy=True)
    ncol = x.shape[1]
    x_prev = x
    w_old = x.copy()
    z_old = x.copy()
    th_old = np.ones(ncol)
    ga_old = np.full(ncol, 1.0 / L)
    sub = None
    for k in range(1, iters + 1):
        g = G @ x - DHX
        if sub is not None:
            over = np.einsum("ij,ij->j", (g + sub).conj(), x - x_prev).real > 0
            th_old = np.where(over, 1.0, th_old)
        if k % 10 == 0:
            res = np.linalg.norm(x - soft_threshold(x - g / L, alpha / L), axis=0)
            if res.max() <= tol:
                break
        th = 0.5 * (1 + np.sqrt((8.0 if k == iters else 4.0) * th_old**2 + 1))
        ga = (2 * th_old + th - 1) / (L * th)
        w = x - g / L
        z = (w + ((th_old - 1) / th) * (w - w_old) + (th_old / th) * (w - x)
             + ((th_old - 1) / (L * ga_old * th)) * (z_old - x))
        xnew = soft_threshold(z, ga * alpha)
        sub = (z - xnew) / ga
        w_old, z_old, x_prev, x = w, z, x, xnew
        th_old, ga_old = th, ga
    return x


def sparse_code_synthesis(D: Dictionary, patches, alpha: float, inner_iters: int = 2000,
                          tol: float = 1e-7, z0=None) -> SparseCodes:
    """Per-patch LASSO ``min_z 1/2||p - D z||^2 + alpha ||z||_1`` by POGM.

    Iterates until the prox fixed-point residual of every patch is below
    ``tol`` or ``inner_iters`` is reached.
    """
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    X = np.asarray(patches)
    if X.ndim == 1:
        X = X[:, None]
    Dm = D.atoms
    if X.shape[0] != Dm.shape[0]:
        raise ConfigurationError(f"patch length {X.shape[0]} != dictionary rows {Dm.shape[0]}")
    Z0 = np.zeros((Dm.shape[1], X.shape[1]), dtype=complex) if z0 is None else z0
    return SparseCodes(_pogm_lasso(Dm, X, alpha, Z0, inner_iters, tol))


def sparse_code_analysis(omega: TransformModel, patches, alpha: float) -> SparseCodes:
    """Exact minimizer ``z_p = soft(Omega p, alpha)`` of ``1/2||Omega p - z||^2 + alpha||z||_1``."""
    if alpha < 0:
        raise ConfigurationError("alpha must be nonnegative")
    return SparseCodes(soft_threshold(omega.omega @ np.asarray(patches), alpha))


def procrustes(X, Z) -> np.ndarray:
    """Unitary ``Omega`` minimizing ``||Omega X - Z||_F``: ``V U'`` from ``X Z' = U S V'``."""
    U, _, Vh = np.linalg.svd(np.asarray(X) @ np.asarray(Z).conj().T)
    return Vh.conj().T @ U.conj().T


def canonical_phase(omega) -> np.ndarray:
    """Rotate each row so its first nonzero entry is real and nonnegative.

    Only for comparing transforms: row phases are not identifiable from the
    fit alone when codes are re-estimated.
    """
    w = np.array(omega, dtype=complex, copy=True)
    for row in w:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size:
            row *= np.conj(row[nz[0]]) / abs(row[nz[0]])
    return w


def _data(op, y):
    if op is None:
        return None
    return DataTerm(op, y)


def _init_image(op, y, x0, shape):
    if x0 is not None:
        return np.array(x0, dtype=complex, copy=True)
    if op is None:
        raise ConfigurationError("x0 is required when there is no data term")
    return op.adjoint_zerofill(y)


def _check_monotone(trace, k, prev, val, slack, what):
    if val > prev + slack * abs(prev):
        raise InvariantError(f"{what} objective increased at iteration {k}: {prev!r} -> {val!r}")


def analysis_objective(data, patches: PatchOperator, omega, x, lam, alpha) -> float:
    """``1/2||A x - y||^2 + lam min_Z sum_p [1/2||Omega P_p x - z_p||^2 + alpha||z_p||_1]``."""
    V = omega.omega @ patches.extract(x)
    Z = soft_threshold(V, alpha)
    reg = 0.5 * np.linalg.norm(V - Z) ** 2 + alpha * np.abs(Z).sum()
    return (data.value(x) if data else 0.0) + lam * float(reg)


def analysis_alternate(op: SystemOperator | None, y: KSpaceData | None, omega: TransformModel,
                       lam: float, alpha: float, outer_iters: int,
                       cfg: PatchConfig | None = None, x0=None, reference=None,
                       majorizer: float | None = None):
    """Alternate patch-transform denoising and a majorized gradient step.

    Per iteration, with ``c = sum_p P_p' P_p`` (``= d I`` for stride 1)::

        x_tilde = sum_p P_p' Omega' soft(Omega P_p x, alpha)
        x <- x - (A'(A x - y) + lam (c x - x_tilde)) / (D_A + lam c)

    where ``D_A >= ||A||^2`` (``N`` for normalized Cartesian SENSE). Both
    steps minimize a majorizer of the joint objective, so the objective is
    nonincreasing; this is checked every iteration (slack 1e-10).
    ``op=None`` drops the data term.
    """
    if lam < 0 or alpha < 0:
        raise ConfigurationError("lam and alpha must be nonnegative")
    if op is None and x0 is None:
        raise ConfigurationError("x0 is required when there is no data term")
    shape = op.shape if op is not None else np.shape(x0)
    d = omega.omega.shape[0]
    cfg = cfg or _square_patch(d)
    if cfg.dim != d:
        raise ConfigurationError(f"patch size {cfg.patch_size} does not match Omega ({d})")
    P = PatchOperator(cfg, shape)
    data = _data(op, y)
    DA = 0.0 if op is None else float(majorizer or op.lipschitz_bound)
    denom = DA + lam * P.coverage
    if np.any(denom <= 0):
        raise ConfigurationError("degenerate step: no data term and lam = 0")
    Wh = omega.omega.conj().T
    x = _init_image(op, y, x0, shape)

    trace = SolverTrace(reference)
    prev = analysis_objective(data, P, omega, x, lam, alpha)
    trace.record(0, prev, x)
    for k in range(1, outer_iters + 1):
        g = data.grad(x) if data else 0.0
        if lam:
            x_tilde = P.aggregate(Wh @ soft_threshold(omega.omega @ P.extract(x), alpha))
            g = g + lam * (P.coverage * x - x_tilde)
        x = x - g / denom
        check_finite(x, k)
        val = analysis_objective(data, P, omega, x, lam, alpha)
        trace.record(k, val, x)
        _check_monotone(trace, k, prev, val, 1e-10, "analysis_alternate")
        prev = val
    return x, trace


def _square_patch(d):
    h = int(round(np.sqrt(d)))
    if h * h != d:
        raise ConfigurationError("pass a PatchConfig for non-square patches")
    return PatchConfig((h, h))


def _x_update(data, P, lam, rhs_patches, x, inner_cg):
    """CG on ``(A'A + lam sum P_p'P_p) x = A'y + lam sum P_p' rhs_p`` from ``x``."""
    cov = P.coverage
    b = lam * P.aggregate(rhs_patches)
    if data is not None:
        b = b + data.Aty
        H = lambda v: data.op.gram(v) + lam * cov * v  # noqa: E731
    else:
        return b / (lam * cov)
    return cg_solve(H, b, x, inner_cg)


def tlmri(op: SystemOperator, y: KSpaceData, cfg: PatchConfig, alpha: float, lam: float,
          gamma: float = 0.0, outer_iters: int = 10, x0=None, omega0: TransformModel | None = None,
          inner_cg: int = 5, update_transform: bool = True, reference=None):
    """Transform-learning reconstruction with a unitary patch transform.

    Block coordinate descent over codes (soft thresholding), the transform
    (orthogonal Procrustes) and the image (warm-started CG on the normal
    equations). All three blocks are exact or descent steps, so the joint
    objective is checked to be nonincreasing (slack 1e-10).

    ``gamma`` weights the orthogonality penalty ``r(Omega)``; the unitary
    constraint is enforced exactly here, the penalty is zero on the
    feasible set and ``gamma`` only has to be nonnegative.

    Returns ``(x, TransformModel, trace)``.
    """
    if lam <= 0 or alpha <= 0:
        raise ConfigurationError("tlmri needs lam > 0 and alpha > 0")
    if gamma < 0:
        raise ConfigurationError("gamma must be nonnegative")
    P = PatchOperator(cfg, op.shape)
    omega = omega0 or dct_transform(cfg.patch_size)
    if omega.omega.shape[0] != cfg.dim:
        raise ConfigurationError("Omega size does not match the patch size")
    data = _data(op, y)
    x = _init_image(op, y, x0, op.shape)

    trace = SolverTrace(reference)
    prev = analysis_objective(data, P, omega, x, lam, alpha)
    trace.record(0, prev, x)
    for k in range(1, outer_iters + 1):
        X = P.extract(x)
        Z = sparse_code_analysis(omega, X, alpha).z
        if update_transform:
            omega = TransformModel(procrustes(X, Z))
            Z = sparse_code_analysis(omega, X, alpha).z
        x = _x_update(data, P, lam, omega.omega.conj().T @ Z, x, inner_cg)
        check_finite(x, k)
        val = analysis_objective(data, P, omega, x, lam, alpha)
        trace.record(k, val, x)
        _check_monotone(trace, k, prev, val, 1e-10, "tlmri")
        prev = val
    return x, omega, trace


def dlmri_objective(data, P: PatchOperator, D: Dictionary, Z, x, lam, alpha) -> float:
    R = P.extract(x) - D.atoms @ Z
    reg = 0.5 * np.linalg.norm(R) ** 2 + alpha * np.abs(Z).sum()
    return (data.value(x) if data else 0.0) + lam * float(reg)


def update_atoms(D: np.ndarray, X, Z) -> np.ndarray:
    """Sequential single-atom updates of ``D`` with the codes ``Z`` fixed.

    Atom ``j`` becomes the unit vector maximizing the fit to the residual
    without atom ``j``: ``E_j z_j' / ||E_j z_j'||``. Unused atoms are
    re-seeded from the worst-represented patch.
    """
    D = np.array(D, dtype=complex, copy=True)
    E = X - D @ Z
    for j in range(D.shape[1]):
        zj = Z[j]
        if not np.any(zj):
            errs = np.linalg.norm(E, axis=0)
            p = int(np.argmax(errs))
            if errs[p] > 0:
                D[:, j] = E[:, p] / errs[p]
            continue
        Ej = E + np.outer(D[:, j], zj)
        v = Ej @ zj.conj()
        nv = np.linalg.norm(v)
        if nv > 0:
            D[:, j] = v / nv
        E = Ej - np.outer(D[:, j], zj)
    return D


def dlmri(op: SystemOperator, y: KSpaceData, cfg: PatchConfig, J: int, alpha: float,
          lam: float, outer_iters: int, x0=None, D0: Dictionary | None = None,
          inner_cg: int = 5, code_iters: int = 500, reference=None):
    """Dictionary-learning reconstruction by block coordinate descent.

    Blocks: sparse codes (POGM LASSO, warm started), dictionary atoms
    (one at a time, unit norm), image (warm-started CG). Codes start at
    zero, so iteration 0 of the trace is the objective at ``(x0, D0, 0)``.
    The objective is monitored; increases above 1e-8 relative (possible
    only through the inexact code step) are logged as trace events.

    Returns ``(x, Dictionary, trace)``.
    """
    if lam <= 0 or alpha <= 0:
        raise ConfigurationError("dlmri needs lam > 0 and alpha > 0")
    P = PatchOperator(cfg, op.shape)
    D = D0 or overcomplete_dct(cfg.patch_size, J)
    if D.atoms.shape != (cfg.dim, J):
        raise ConfigurationError(f"dictionary shape {D.atoms.shape} != ({cfg.dim}, {J})")
    data = _data(op, y)
    x = _init_image(op, y, x0, op.shape)
    Z = np.zeros((J, P.npatches), dtype=complex)

    trace = SolverTrace(reference)
    prev = dlmri_objective(data, P, D, Z, x, lam, alpha)
    trace.record(0, prev, x)
    for k in range(1, outer_iters + 1):
        X = P.extract(x)
        Z = sparse_code_synthesis(D, X, alpha, inner_iters=code_iters, z0=Z).z
        D = Dictionary(update_atoms(D.atoms, X, Z))
        x = _x_update(data, P, lam, D.atoms @ Z, x, inner_cg)
        check_finite(x, k)
        val = dlmri_objective(data, P, D, Z, x, lam, alpha)
        trace.record(k, val, x)
        if val > prev + 1e-8 * abs(prev):
            trace.event(k, f"objective increased {prev!r} -> {val!r} (inexact code step)")
            log.warning("dlmri objective increased at iteration %d", k)
        prev = val
    return x, D, trace
