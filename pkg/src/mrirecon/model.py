"""Cartesian SENSE forward model ``A = (I_L kron F) C`` and closed-form solutions.

Conventions (fixed project-wide):

* ``F`` is the *unnormalized* 2D DFT (``numpy.fft.fft2``), so ``F'F = N I``
  on a full Cartesian grid and ``F' = N * ifft2``.
* k-space samples of one coil are ordered row-major over the true entries
  of the sampling mask, i.e. ``kspace[mask]``.
* Sensitivity maps are stored as an ``(L, nx, ny)`` array, images as
  ``(nx, ny)`` arrays and k-space data as an ``(M, L)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DimensionError,
    UnsupportedOperationError,
)

FFT_NORM = "backward"  # unnormalized forward DFT; asserted in tests


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Boolean k-space sampling pattern shared by all coils.

    The layout is the unshifted FFT layout: index ``(0, 0)`` is DC.
    """

    keep: np.ndarray

    def __post_init__(self):
        keep = np.asarray(self.keep, dtype=bool)
        if keep.ndim != 2:
            raise DimensionError(f"mask must be 2D, got shape {keep.shape}")
        if not keep.any():
            raise ConfigurationError("mask keeps no samples")
        object.__setattr__(self, "keep", _frozen(keep))

    @classmethod
    def full(cls, shape) -> "SamplingMask":
        return cls(np.ones(shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.keep.shape

    @property
    def nsamples(self) -> int:
        return int(self.keep.sum())

    @property
    def is_full(self) -> bool:
        return bool(self.keep.all())

    @property
    def fraction(self) -> float:
        return self.nsamples / self.keep.size

    def __eq__(self, other):
        if other is self:
            return True
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.all(self.keep == other.keep))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SensitivityMaps:
    """Coil sensitivity maps ``c_l``, stacked as ``(L, nx, ny)``."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps)
        if maps.ndim == 2:
            maps = maps[None]
        if maps.ndim != 3 or maps.shape[0] < 1:
            raise DimensionError(f"maps must be (L, nx, ny), got {maps.shape}")
        if not np.all(np.isfinite(maps)):
            raise ConfigurationError("sensitivity maps contain non-finite values")
        object.__setattr__(self, "maps", _frozen(maps.astype(np.result_type(maps, np.complex64))))

    @classmethod
    def ones(cls, shape, ncoils: int = 1) -> "SensitivityMaps":
        """Unit maps; normalized only when ``ncoils == 1``."""
        return cls(np.ones((ncoils,) + tuple(shape), dtype=complex))

    @property
    def ncoils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]

    def sum_of_squares(self) -> np.ndarray:
        """Pixelwise ``sum_l |c_l|^2``, i.e. the diagonal of ``C'C``."""
        return np.sum(np.abs(self.maps) ** 2, axis=0)

    @property
    def normalized(self) -> bool:
        return bool(np.all(np.abs(self.sum_of_squares() - 1) <= 1e-6))

    def normalize(self) -> "SensitivityMaps":
        """Scale pixelwise so that ``C'C = I`` (zero pixels stay zero)."""
        ssq = np.sqrt(self.sum_of_squares())
        scale = np.divide(1.0, ssq, out=np.zeros_like(ssq), where=ssq > 0)
        return SensitivityMaps(self.maps * scale)


@dataclass(frozen=True, eq=False)
class KSpaceData:
    """Measured samples, one column per coil, row order = ``kspace[mask]``."""

    samples: np.ndarray
    mask: SamplingMask

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] != self.mask.nsamples:
            raise DimensionError(
                f"samples shape {s.shape} incompatible with mask of {self.mask.nsamples} samples"
            )
        object.__setattr__(self, "samples", _frozen(s))

    @property
    def ncoils(self) -> int:
        return self.samples.shape[1]

    def zerofill(self) -> np.ndarray:
        """Return the ``(L, nx, ny)`` zero-filled k-space."""
        out = np.zeros((self.ncoils,) + self.mask.shape, dtype=self.samples.dtype)
        out[:, self.mask.keep] = self.samples.T
        return out

    @classmethod
    def from_grid(cls, kspace: np.ndarray, mask: SamplingMask) -> "KSpaceData":
        """Pick the sampled entries of an ``(L, nx, ny)`` k-space array."""
        kspace = np.asarray(kspace)
        if kspace.ndim == 2:
            kspace = kspace[None]
        return cls(kspace[:, mask.keep].T, mask)

    def __sub__(self, other: "KSpaceData") -> "KSpaceData":
        return KSpaceData(self.samples - other.samples, self.mask)


@dataclass(frozen=True, eq=False)
class SystemOperator:
    """MRI system matrix ``A``: coil weighting, 2D DFT and sampling.

    The operator is immutable and holds no scratch state, so one instance
    can be shared between threads.

    Parameters
    ----------
    mask : SamplingMask
    smaps : SensitivityMaps
    dtype : numpy dtype, optional
        ``complex128`` (default) or ``complex64`` for single precision.
    """

    mask: SamplingMask
    smaps: SensitivityMaps
    dtype: type = np.complex128
    fft_norm: str = field(default=FFT_NORM, init=False)

    def __post_init__(self):
        if self.mask.shape != self.smaps.shape:
            raise DimensionError(
                f"mask grid {self.mask.shape} != sensitivity grid {self.smaps.shape}"
            )
        dtype = np.dtype(self.dtype)
        if dtype not in (np.complex64, np.complex128):
            raise ConfigurationError(f"unsupported dtype {dtype}")
        object.__setattr__(self, "dtype", dtype.type)

    @classmethod
    def single_coil(cls, mask: SamplingMask, **kw) -> "SystemOperator":
        return cls(mask, SensitivityMaps.ones(mask.shape), **kw)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def npixels(self) -> int:
        return self.mask.keep.size

    @property
    def ncoils(self) -> int:
        return self.smaps.ncoils

    def _check_image(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != self.shape:
            raise DimensionError(f"image shape {x.shape} != operator grid {self.shape}")
        return x.astype(self.dtype, copy=False)

    def _check_data(self, y: KSpaceData):
        if y.mask != self.mask:
            raise ConfigurationError("k-space data was acquired with a different mask")
        if y.ncoils != self.ncoils:
            raise ConfigurationError(f"data has {y.ncoils} coils, operator has {self.ncoils}")

    def forward(self, x) -> KSpaceData:
        """``y_l = subsample(F (c_l * x))`` for every coil."""
        x = self._check_image(x)
        k = np.fft.fft2(self.smaps.maps.astype(self.dtype) * x, norm=self.fft_norm)
        return KSpaceData(k[:, self.mask.keep].T, self.mask)

    def adjoint(self, y: KSpaceData) -> np.ndarray:
        """``sum_l conj(c_l) * F' zerofill(y_l)``."""
        self._check_data(y)
        grid = y.zerofill().astype(self.dtype, copy=False)
        img = np.fft.ifft2(grid, norm="forward")  # == N * ifft2 == F'
        return np.sum(np.conj(self.smaps.maps.astype(self.dtype)) * img, axis=0)

    def gram(self, x) -> np.ndarray:
        """``A'A x`` with the mask applied as k-space weights."""
        x = self._check_image(x)
        c = self.smaps.maps.astype(self.dtype)
        k = np.fft.fft2(c * x, norm=self.fft_norm) * self.mask.keep
        return np.sum(np.conj(c) * np.fft.ifft2(k, norm="forward"), axis=0)

    __call__ = forward

    def adjoint_zerofill(self, y: KSpaceData) -> np.ndarray:
        """Zero-filled initial image ``A'y / N``."""
        return self.adjoint(y) / self.npixels

    def dense(self) -> np.ndarray:
        """Explicit ``(M L, N)`` matrix; only for small grids in tests."""
        nx, ny = self.shape
        cols = []
        for j in range(nx * ny):
            e = np.zeros(nx * ny, dtype=self.dtype)
            e[j] = 1
            cols.append(self.forward(e.reshape(nx, ny)).samples.T.ravel())
        return np.stack(cols, axis=1)

    @property
    def lipschitz_bound(self) -> float:
        """``N * max_j sum_l |c_l(j)|^2`` bounds ``||A||^2`` for Cartesian sampling."""
        return float(self.npixels * self.smaps.sum_of_squares().max())


class DataTerm:
    """``f(x) = 1/2 ||A x - y||^2`` with value and gradient from one FFT pair."""

    def __init__(self, op: SystemOperator, y: KSpaceData):
        op._check_data(y)
        self.op = op
        self.y = y
        self._ygrid = y.zerofill().astype(op.dtype)
        self._maps = op.smaps.maps.astype(op.dtype)
        self.Aty = op.adjoint(y)

    def residual_grid(self, x) -> np.ndarray:
        k = np.fft.fft2(self._maps * x)
        return (k - self._ygrid) * self.op.mask.keep

    def value(self, x) -> float:
        r = self.residual_grid(x)
        return 0.5 * float(np.vdot(r, r).real)

    def grad(self, x) -> np.ndarray:
        return self.op.gram(x) - self.Aty

    def value_and_grad(self, x) -> tuple[float, np.ndarray]:
        r = self.residual_grid(x)
        g = np.sum(np.conj(self._maps) * np.fft.ifft2(r, norm="forward"), axis=0)
        return 0.5 * float(np.vdot(r, r).real), g


def coil_combine(y: KSpaceData, smaps: SensitivityMaps) -> np.ndarray:
    """Optimal coil combination for fully sampled Cartesian data.

    Returns ``(sum_l C_l'C_l)^{-1} sum_l C_l' F^{-1} y_l``. Pixels with no
    coil sensitivity are set to zero.
    """
    if not y.mask.is_full:
        raise UnsupportedOperationError(
            "coil_combine needs fully sampled k-space; use an iterative solver "
            "(e.g. smooth.cg_quadratic) for undersampled data"
        )
    if y.ncoils != smaps.ncoils or y.mask.shape != smaps.shape:
        raise ConfigurationError("data and sensitivity maps disagree in coils or grid")
    coil_images = np.fft.ifft2(y.zerofill())
    num = np.sum(np.conj(smaps.maps) * coil_images, axis=0)
    den = smaps.sum_of_squares()
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def regular_row_offset(mask: SamplingMask, accel: int) -> int:
    """Return ``r0`` if the mask keeps exactly rows ``r0, r0+n, ...``."""
    nx = mask.shape[0]
    if accel < 1 or nx % accel:
        raise ConfigurationError(f"acceleration {accel} must divide {nx} rows")
    rows = mask.keep.any(axis=1)
    if not np.all(mask.keep[rows]):
        raise ConfigurationError("mask rows are only partially sampled")
    kept = np.flatnonzero(rows)
    r0 = int(kept[0])
    if r0 >= accel or not np.array_equal(kept, np.arange(r0, nx, accel)):
        raise ConfigurationError(f"mask does not keep every {accel}th row")
    return r0


def sense_block_solve(y: KSpaceData, smaps: SensitivityMaps, accel: int) -> np.ndarray:
    """Non-iterative SENSE unfolding for every-``accel``-th-row sampling.

    Keeping rows ``r0 + k n`` folds pixel ``p`` onto pixels ``p + j nx/n``;
    the aliased coil images then give an ``L x n`` least-squares problem
    per pixel group that is solved independently. Singular groups get a
    ridge of ``1e-8 * trace(E'E) / n``.
    """
    if y.ncoils != smaps.ncoils or y.mask.shape != smaps.shape:
        raise ConfigurationError("data and sensitivity maps disagree in coils or grid")
    n = int(accel)
    r0 = regular_row_offset(y.mask, n)
    L = smaps.ncoils
    if L < n:
        raise ConfigurationError(f"need at least {n} coils for acceleration {n}, got {L}")
    nx, ny = y.mask.shape
    S = nx // n

    aliased = np.fft.ifft2(y.zerofill())[:, :S, :]  # (L, S, ny)
    w = np.exp(-2j * np.pi * np.arange(n) * r0 / n)
    # E[s, c, l, j] = w_j c_l[s + j S, c] / n
    c = smaps.maps.reshape(L, n, S, ny)
    E = np.einsum("j,ljsc->sclj", w, c) / n
    a = np.transpose(aliased, (1, 2, 0))  # (S, ny, L)

    G = np.conj(np.swapaxes(E, -1, -2)) @ E  # (S, ny, n, n)
    rhs = np.einsum("sclj,scl->scj", np.conj(E), a)
    rank = np.linalg.matrix_rank(G, hermitian=True)
    singular = rank < n
    if np.any(singular):
        tr = np.real(np.trace(G, axis1=-2, axis2=-1))
        # all-zero blocks (no coil sees these pixels) have a zero rhs too
        ridge = np.where(tr[singular] > 0, 1e-8 * tr[singular] / n, 1.0)
        G = G.copy()
        G[singular] += ridge[:, None, None] * np.eye(n)
    v = np.linalg.solve(G, rhs[..., None])[..., 0]  # (S, ny, n)
    return np.transpose(v, (2, 0, 1)).reshape(nx, ny)
