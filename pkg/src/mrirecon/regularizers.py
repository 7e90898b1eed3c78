"""Potential functions, sparsifying transforms, proximal maps and patches.

All potentials act on complex values through their magnitude,
``psi(z) = phi(|z|)``; the gradient is taken with respect to the real and
imaginary parts jointly, ``grad psi(z) = phi'(|z|) z / |z|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DimensionError, UnsupportedOperationError

POTENTIAL_KINDS = ("quadratic", "fair", "hyperbola", "huber", "abs")


def complex_sign(z):
    """``z / |z|`` with ``sign(0) = 0``."""
    z = np.asarray(z)
    mag = np.abs(z)
    return np.divide(z, mag, out=np.zeros(z.shape, dtype=np.result_type(z, float)), where=mag > 0)


def soft_threshold(z, c):
    """Complex soft thresholding ``sign(z) max(|z| - c, 0)``.

    ``c`` may be a scalar or an array broadcastable against ``z``
    (per-coefficient thresholds).
    """
    z = np.asarray(z)
    c = np.asarray(c)
    if np.any(c < 0):
        raise ValueError("threshold must be nonnegative")
    mag = np.abs(z)
    shrink = np.maximum(mag - c, 0)
    return complex_sign(z) * shrink


@dataclass(frozen=True)
class Potential:
    """Scalar potential ``psi`` applied elementwise and summed.

    ``param`` is delta for ``fair``, epsilon for ``hyperbola`` and alpha
    for ``huber``; it is ignored for ``quadratic`` and ``abs``.
    """

    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ConfigurationError(f"unknown potential {self.kind!r}")
        if not self.param > 0:
            raise ConfigurationError(f"potential parameter must be positive, got {self.param}")

    @classmethod
    def quadratic(cls):
        return cls("quadratic")

    @classmethod
    def fair(cls, delta):
        return cls("fair", delta)

    @classmethod
    def hyperbola(cls, eps):
        return cls("hyperbola", eps)

    @classmethod
    def huber(cls, alpha):
        return cls("huber", alpha)

    @classmethod
    def abs(cls):
        return cls("abs")

    @property
    def smooth(self) -> bool:
        return self.kind != "abs"

    def elementwise(self, z) -> np.ndarray:
        r = np.abs(np.asarray(z))
        p = self.param
        if self.kind == "quadratic":
            return 0.5 * r**2
        if self.kind == "fair":
            t = r / p
            return p**2 * (t - np.log1p(t))
        if self.kind == "hyperbola":
            return np.sqrt(r**2 + p) - np.sqrt(p)
        if self.kind == "huber":
            return np.where(r <= p, 0.5 * r**2, p * r - 0.5 * p**2)
        return r

    def value(self, z) -> float:
        return float(np.sum(self.elementwise(z)))

    def weight(self, z) -> np.ndarray:
        """Half-quadratic curvature ``phi'(|z|) / |z|`` (1 at the origin)."""
        r = np.abs(np.asarray(z))
        p = self.param
        if self.kind == "quadratic":
            return np.ones_like(r)
        if self.kind == "fair":
            return 1.0 / (1.0 + r / p)
        if self.kind == "hyperbola":
            return 1.0 / np.sqrt(r**2 + p)
        if self.kind == "huber":
            return np.where(r <= p, 1.0, p / np.maximum(r, p))
        raise UnsupportedOperationError("abs potential is not differentiable; use prox")

    def grad(self, z) -> np.ndarray:
        return self.weight(z) * np.asarray(z)

    @property
    def max_curvature(self) -> float:
        """``sup psi''``, the Lipschitz constant of the gradient."""
        if self.kind == "hyperbola":
            return 1.0 / np.sqrt(self.param)
        if self.kind == "abs":
            return np.inf
        return 1.0

    def prox(self, z, t) -> np.ndarray:
        """``argmin_x 1/2 |x - z|^2 + t psi(x)``, elementwise."""
        z = np.asarray(z)
        t = np.asarray(t)
        if np.any(t < 0):
            raise ValueError("prox step must be nonnegative")
        if self.kind == "abs":
            return soft_threshold(z, t)
        if self.kind == "quadratic":
            return z / (1 + t)
        if self.kind == "huber":
            a = self.param
            inner = np.abs(z) <= a * (1 + t)
            return np.where(inner, z / (1 + t), z - t * a * complex_sign(z))
        raise UnsupportedOperationError(f"no closed-form prox for {self.kind!r} potential")


def potential_value(psi: Potential, z) -> float:
    return psi.value(z)


def potential_grad(psi: Potential, z) -> np.ndarray:
    if not psi.smooth:
        raise UnsupportedOperationError("abs potential has no gradient; use prox")
    return psi.grad(z)


def prox(psi: Potential, z, t) -> np.ndarray:
    return psi.prox(z, t)


# --------------------------------------------------------------------------
# transforms


class Transform:
    """Linear sparsifying transform ``T`` acting on ``(nx, ny)`` images.

    Subclasses implement ``_forward``/``_adjoint``; ``weights`` (default
    all ones) weight the 1-norm ``sum_k w_k |(T x)_k|``.
    """

    kind = "transform"
    #: upper bound on ||T||^2
    norm_sq = 1.0
    orthogonal = False
    circulant = False

    def __init__(self, shape, weights=None):
        self.shape = tuple(int(s) for s in shape)
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise DimensionError(f"image shape must be 2D, got {shape}")
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != self.coef_shape:
                raise DimensionError(f"weights shape {weights.shape} != {self.coef_shape}")
            if np.any(weights < 0):
                raise ConfigurationError("weights must be nonnegative")
        self.weights = weights

    @property
    def coef_shape(self) -> tuple:
        return self.shape

    @property
    def weight_array(self):
        return 1.0 if self.weights is None else self.weights

    def _check(self, x, shape):
        x = np.asarray(x)
        if x.shape != shape:
            raise DimensionError(f"{self.kind}: expected shape {shape}, got {x.shape}")
        return x

    def forward(self, x) -> np.ndarray:
        return self._forward(self._check(x, self.shape))

    def adjoint(self, c) -> np.ndarray:
        return self._adjoint(self._check(c, self.coef_shape))

    __call__ = forward

    def gram_spectrum(self) -> np.ndarray:
        """Eigenvalues of ``T'T`` in the 2D DFT basis (circulant transforms only)."""
        if self.orthogonal:
            return np.ones(self.shape)
        raise UnsupportedOperationError(f"{self.kind}: T'T is not circulant")

    def l1(self, x) -> float:
        return float(np.sum(self.weight_array * np.abs(self.forward(x))))


class Identity(Transform):
    kind = "identity"
    orthogonal = True
    circulant = True

    def _forward(self, x):
        return np.array(x, copy=True)

    def _adjoint(self, c):
        return np.array(c, copy=True)


class FiniteDifference2D(Transform):
    """Periodic first differences along both axes, stacked as ``(2, nx, ny)``."""

    kind = "finite_diff_2d"
    norm_sq = 8.0
    circulant = True

    @property
    def coef_shape(self):
        return (2,) + self.shape

    def _forward(self, x):
        return np.stack([np.roll(x, -1, axis=0) - x, np.roll(x, -1, axis=1) - x])

    def _adjoint(self, c):
        return (np.roll(c[0], 1, axis=0) - c[0]) + (np.roll(c[1], 1, axis=1) - c[1])

    def gram_spectrum(self):
        nx, ny = self.shape
        sx = 4 * np.sin(np.pi * np.arange(nx) / nx) ** 2
        sy = 4 * np.sin(np.pi * np.arange(ny) / ny) ** 2
        return sx[:, None] + sy[None, :]


class HaarWavelet(Transform):
    """Orthonormal 2D Haar transform with ``levels`` dyadic levels.

    Coefficients use the usual nested layout: the coarse band sits in the
    top-left corner of an ``(nx, ny)`` array.
    """

    kind = "odwt"
    orthogonal = True
    circulant = True

    def __init__(self, shape, levels: int = 3, weights=None):
        levels = int(levels)
        nx, ny = (int(s) for s in shape)
        if levels < 1:
            raise ConfigurationError("need at least one wavelet level")
        if nx % 2**levels or ny % 2**levels:
            raise DimensionError(f"grid {shape} not divisible by 2**{levels}")
        self.levels = levels
        super().__init__(shape, weights)

    @staticmethod
    def _analysis(x):
        """One level on a 2D block: rows then columns, lowpass first."""
        r2 = np.sqrt(0.5)
        t = np.concatenate([x[0::2] + x[1::2], x[0::2] - x[1::2]], axis=0)
        return r2 * r2 * np.concatenate([t[:, 0::2] + t[:, 1::2], t[:, 0::2] - t[:, 1::2]], axis=1)

    @staticmethod
    def _synthesis(c):
        h, w = c.shape[0] // 2, c.shape[1] // 2
        t = np.empty_like(c)
        t[:, 0::2] = c[:, :w] + c[:, w:]
        t[:, 1::2] = c[:, :w] - c[:, w:]
        out = np.empty_like(c)
        out[0::2] = t[:h] + t[h:]
        out[1::2] = t[:h] - t[h:]
        return 0.5 * out

    def _forward(self, x):
        c = np.array(x, dtype=np.result_type(x, float), copy=True)
        nx, ny = self.shape
        for _ in range(self.levels):
            c[:nx, :ny] = self._analysis(c[:nx, :ny])
            nx, ny = nx // 2, ny // 2
        return c

    def _adjoint(self, c):
        x = np.array(c, dtype=np.result_type(c, float), copy=True)
        for j in reversed(range(self.levels)):
            nx, ny = self.shape[0] >> j, self.shape[1] >> j
            x[:nx, :ny] = self._synthesis(x[:nx, :ny])
        return x


class Stacked(Transform):
    """Vertical concatenation ``[T_1; T_2; ...]`` with a flat coefficient vector."""

    kind = "stacked"

    def __init__(self, transforms, weights=None):
        transforms = list(transforms)
        if not transforms:
            raise ConfigurationError("stacked transform needs at least one member")
        shape = transforms[0].shape
        if any(t.shape != shape for t in transforms):
            raise DimensionError("stacked transforms must share the image grid")
        self.members = transforms
        self._sizes = [int(np.prod(t.coef_shape)) for t in transforms]
        self.norm_sq = float(sum(t.norm_sq for t in transforms))
        super().__init__(shape, weights)
        if self.weights is None and any(t.weights is not None for t in transforms):
            self.weights = np.concatenate([np.broadcast_to(t.weight_array, t.coef_shape).ravel()
                                           for t in transforms])

    @property
    def coef_shape(self):
        return (sum(self._sizes),)

    def _forward(self, x):
        return np.concatenate([t.forward(x).ravel() for t in self.members])

    def _adjoint(self, c):
        out = 0
        for t, part in zip(self.members, np.split(c, np.cumsum(self._sizes)[:-1])):
            out = out + t.adjoint(part.reshape(t.coef_shape))
        return out


def make_transform(kind: str, shape, **kw) -> Transform:
    kinds = {"fd": FiniteDifference2D, "finite_diff_2d": FiniteDifference2D, "finite_diff": FiniteDifference2D,
             "tv": FiniteDifference2D, "odwt": HaarWavelet, "haar": HaarWavelet,
             "identity": Identity}
    try:
        return kinds[kind](shape, **kw)
    except KeyError:
        raise ConfigurationError(f"unknown transform {kind!r}") from None


def apply_transform(T: Transform, x) -> np.ndarray:
    return T.forward(x)


def apply_transform_adjoint(T: Transform, c) -> np.ndarray:
    return T.adjoint(c)


def huber_split_value(T: Transform, x, alpha: float) -> float:
    """``min_z 1/2 ||T x - z||^2 + alpha ||z||_1``, evaluated in closed form.

    The inner minimizer is ``soft_threshold(T x, alpha)`` and the value is
    the Huber potential with parameter ``alpha`` summed over ``T x``.
    """
    return Potential.huber(alpha).value(T.forward(x))


def huber_split_minimizer(T: Transform, x, alpha: float) -> np.ndarray:
    return soft_threshold(T.forward(x), alpha)


# --------------------------------------------------------------------------
# patches


@dataclass(frozen=True)
class PatchConfig:
    """Periodic ``h x w`` patches taken every ``stride`` pixels."""

    patch_size: tuple = (4, 4)
    stride: int = 1

    def __post_init__(self):
        h, w = (int(s) for s in self.patch_size)
        if h < 1 or w < 1 or int(self.stride) < 1:
            raise ConfigurationError("patch size and stride must be positive")
        object.__setattr__(self, "patch_size", (h, w))
        object.__setattr__(self, "stride", int(self.stride))

    @property
    def dim(self) -> int:
        return self.patch_size[0] * self.patch_size[1]


class PatchOperator:
    """Stack of patch extractors ``P_p`` for one image grid.

    ``extract`` returns a ``d x P`` matrix (pixels row-major within a patch,
    patches row-major over their top-left corners); ``aggregate`` is its
    adjoint ``sum_p P_p' z_p``.
    """

    def __init__(self, cfg: PatchConfig, shape):
        nx, ny = (int(s) for s in shape)
        h, w = cfg.patch_size
        if h > nx or w > ny:
            raise DimensionError(f"patch {cfg.patch_size} larger than grid {shape}")
        self.cfg = cfg
        self.shape = (nx, ny)
        r0 = np.arange(0, nx, cfg.stride)
        c0 = np.arange(0, ny, cfg.stride)
        rows = (r0[None, :, None] + np.arange(h)[:, None, None]) % nx  # (h, R, 1)
        cols = (c0[None, None, :] + np.arange(w)[:, None, None]) % ny  # (w, 1, C)
        idx = rows[:, None, :, :] * ny + cols[None, :, :, :]  # (h, w, R, C)
        self.index = idx.reshape(h * w, -1)

    @property
    def npatches(self) -> int:
        return self.index.shape[1]

    @property
    def dim(self) -> int:
        return self.index.shape[0]

    @cached_property
    def coverage(self) -> np.ndarray:
        """Diagonal of ``sum_p P_p' P_p`` (``d`` everywhere for stride 1)."""
        return np.bincount(self.index.ravel(), minlength=self.shape[0] * self.shape[1]
                           ).reshape(self.shape).astype(float)

    def extract(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != self.shape:
            raise DimensionError(f"image shape {x.shape} != patch grid {self.shape}")
        return x.ravel()[self.index]

    def aggregate(self, patches) -> np.ndarray:
        patches = np.asarray(patches)
        if patches.shape != self.index.shape:
            raise DimensionError(f"patch matrix shape {patches.shape} != {self.index.shape}")
        n = self.shape[0] * self.shape[1]
        flat = self.index.ravel()
        out = np.bincount(flat, weights=patches.real.ravel(), minlength=n).astype(complex)
        if np.iscomplexobj(patches):
            out += 1j * np.bincount(flat, weights=patches.imag.ravel(), minlength=n)
        else:
            out = out.real
        return out.reshape(self.shape)


def extract_patches(cfg: PatchConfig, x) -> np.ndarray:
    return PatchOperator(cfg, np.shape(x)).extract(x)


def aggregate_patches(cfg: PatchConfig, patches, shape) -> np.ndarray:
    return PatchOperator(cfg, shape).aggregate(patches)
