"""Test images, sampling patterns, synthetic coil maps and simulated data."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import KSpaceData, SamplingMask, SensitivityMaps, SystemOperator

log = logging.getLogger("mrirecon")

# modified Shepp-Logan: (intensity, semi-axis a, semi-axis b, x0, y0, angle in degrees)
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0),
)

PHANTOMS = ("shepp_logan", "blocks")


def _grid(shape):
    nx, ny = shape
    # pixel centers in [-1, 1]; row index runs top to bottom
    yy = 1 - (np.arange(nx) + 0.5) * 2 / nx
    xx = (np.arange(ny) + 0.5) * 2 / ny - 1
    return np.meshgrid(xx, yy)


def shepp_logan(shape) -> np.ndarray:
    X, Y = _grid(shape)
    img = np.zeros(shape)
    for rho, a, b, x0, y0, deg in _SHEPP_LOGAN:
        t = np.deg2rad(deg)
        u = (X - x0) * np.cos(t) + (Y - y0) * np.sin(t)
        v = -(X - x0) * np.sin(t) + (Y - y0) * np.cos(t)
        img[(u / a) ** 2 + (v / b) ** 2 <= 1] += rho
    # overlapping ellipses can leave -1e-17 where the exact value is 0
    return np.clip(img, 0.0, 1.0)


def blocks(shape) -> np.ndarray:
    """Two constant squares (sides n/4 and n/16) on a zero background."""
    nx, ny = shape
    n = min(nx, ny)
    img = np.zeros(shape)
    a = max(1, n // 4)
    img[nx // 4:nx // 4 + a, ny // 4:ny // 4 + a] = 1.0
    b = max(1, n // 16)
    img[(5 * nx) // 8:(5 * nx) // 8 + b, (5 * ny) // 8:(5 * ny) // 8 + b] = 0.5
    return img


def make_phantom(kind: str, grid, phase: bool = False) -> np.ndarray:
    """Deterministic test image with magnitude in ``[0, 1]``.

    ``phase=True`` multiplies by a smooth (linear plus quadratic) phase.
    """
    grid = tuple(int(g) for g in grid)
    if len(grid) != 2 or min(grid) < 8:
        raise ConfigurationError(f"phantom grid must be at least 8x8, got {grid}")
    if kind == "shepp_logan":
        img = shepp_logan(grid)
    elif kind == "blocks":
        img = blocks(grid)
    else:
        raise ConfigurationError(f"unknown phantom {kind!r}; choose from {PHANTOMS}")
    img = img.astype(complex)
    if phase:
        X, Y = _grid(grid)
        img *= np.exp(1j * np.pi * (0.3 * X - 0.2 * Y + 0.25 * (X**2 + Y**2)))
    return img


@dataclass(frozen=True)
class MaskSpec:
    """Sampling pattern description.

    kind: ``full``, ``every_nth``, ``variable_density_lines`` or
    ``poisson_disc``. ``center`` is the width (rows, or radius in samples
    for ``poisson_disc``) of the always-sampled central region.
    """

    kind: str = "variable_density_lines"
    fraction: float = 0.34
    n: int = 2
    center: int | None = None
    seed: int = 0


MASKS = ("full", "every_nth", "variable_density_lines", "poisson_disc")


def _default_center(nx):
    return max(2, nx // 8)


def variable_density_lines(shape, fraction: float, seed: int = 0, center: int | None = None):
    """Random phase-encode rows with density decaying away from DC.

    Exactly ``round(fraction * nx)`` rows are kept, including a central
    band of ``center`` rows. Returns the keep array in the unshifted layout.
    """
    nx, ny = shape
    nlines = int(round(fraction * nx))
    center = _default_center(nx) if center is None else int(center)
    if nlines < center or nlines < 1:
        raise ConfigurationError(
            f"fraction {fraction} gives {nlines} lines, fewer than the {center}-line center band")
    rows = np.arange(nx)
    c0 = nx // 2 - center // 2
    band = (rows >= c0) & (rows < c0 + center)
    rest = rows[~band]
    dist = np.abs(rest - nx // 2) / (nx / 2)
    p = (1 - dist) ** 2 + 1e-3
    rng = np.random.default_rng(seed)
    pick = rng.choice(rest, size=nlines - center, replace=False, p=p / p.sum())
    keep_rows = band.copy()
    keep_rows[pick] = True
    keep = np.repeat(keep_rows[:, None], ny, axis=1)
    return np.fft.ifftshift(keep, axes=0)


def poisson_disc(shape, fraction: float, seed: int = 0, center: int | None = None):
    """Variable-density dart throwing with exactly ``round(fraction * N)`` samples.

    The exclusion radius grows linearly with distance from the k-space
    center; its scale is bisected until enough samples are accepted, and
    the acceptance order then truncates to the exact count.
    """
    nx, ny = shape
    target = int(round(fraction * nx * ny))
    center = _default_center(min(nx, ny)) if center is None else int(center)
    ky, kx = np.meshgrid(np.arange(ny) - ny // 2, np.arange(nx) - nx // 2)
    pts = np.stack([kx.ravel(), ky.ravel()], axis=1).astype(float)
    r = np.hypot(pts[:, 0] / (nx / 2), pts[:, 1] / (ny / 2))
    core = np.flatnonzero(np.hypot(pts[:, 0], pts[:, 1]) <= center / 2)
    if target < core.size or target < 1:
        raise ConfigurationError(f"fraction {fraction} is too small for the center region")
    rng = np.random.default_rng(seed)
    order = np.concatenate([core, rng.permutation(np.setdiff1d(np.arange(len(pts)), core))])

    def throw(scale):
        acc = []
        for i in order:
            if acc:
                rad = scale * (0.5 + r[i])
                d = np.hypot(*(pts[acc] - pts[i]).T)
                if i not in core and np.any(d < rad):
                    continue
            acc.append(i)
        return acc

    lo, hi = 0.0, float(max(nx, ny))
    best = throw(lo)
    for _ in range(25):
        mid = 0.5 * (lo + hi)
        acc = throw(mid)
        if len(acc) >= target:
            lo, best = mid, acc
        else:
            hi = mid
    keep = np.zeros(nx * ny, bool)
    keep[best[:target]] = True
    return np.fft.ifftshift(keep.reshape(nx, ny))


def make_mask(spec: MaskSpec, grid) -> SamplingMask:
    """Build a mask in the unshifted (DC at ``[0, 0]``) layout."""
    grid = tuple(int(g) for g in grid)
    if spec.kind != "full" and not 0 < spec.fraction <= 1:
        raise ConfigurationError(f"sampling fraction must be in (0, 1], got {spec.fraction}")
    if spec.kind == "full":
        m = SamplingMask.full(grid)
    elif spec.kind == "every_nth":
        if spec.n < 1:
            raise ConfigurationError("every_nth needs n >= 1")
        keep = np.zeros(grid, bool)
        keep[::spec.n] = True
        m = SamplingMask(keep)
    elif spec.kind == "variable_density_lines":
        m = SamplingMask(variable_density_lines(grid, spec.fraction, spec.seed, spec.center))
    elif spec.kind == "poisson_disc":
        m = SamplingMask(poisson_disc(grid, spec.fraction, spec.seed, spec.center))
    else:
        raise ConfigurationError(f"unknown mask kind {spec.kind!r}; choose from {MASKS}")
    log.info("mask %s: realized sampling fraction %.4f", spec.kind, m.fraction)
    return m


def synthetic_smaps(shape, ncoils: int, seed: int = 0, normalize: bool = True) -> SensitivityMaps:
    """Smooth Gaussian coil profiles around the field of view.

    Coil ``l`` sits on a circle of radius 1.5 (image half-widths) at angle
    ``2 pi l / L`` with a seeded constant phase offset and a gentle linear
    phase. With ``normalize`` the maps are scaled pixelwise so that
    ``sum_l |c_l|^2 = 1``.
    """
    if ncoils < 1:
        raise ConfigurationError("need at least one coil")
    X, Y = _grid(shape)
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-np.pi, np.pi, ncoils)
    maps = np.empty((ncoils, *shape), dtype=complex)
    for l in range(ncoils):
        if ncoils == 1:
            mag = np.exp(-(X**2 + Y**2) / 4)
            ang = 0.0
        else:
            ang = 2 * np.pi * l / ncoils
            cx, cy = 1.5 * np.cos(ang), 1.5 * np.sin(ang)
            mag = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / 2)
        maps[l] = mag * np.exp(1j * (offsets[l] + 0.3 * (np.cos(ang) * Y - np.sin(ang) * X)))
    s = SensitivityMaps(maps)
    return s.normalize() if normalize else s


def simulate(x_true, mask: SamplingMask, smaps: SensitivityMaps, snr_db: float = np.inf,
             seed: int = 0) -> KSpaceData:
    """``y = A x_true + noise``, circular complex white Gaussian noise.

    The noise variance is set so that ``||A x||^2 / (M L sigma^2)`` equals
    the requested SNR; ``snr_db = inf`` returns noiseless data.
    """
    op = SystemOperator(mask, smaps)
    clean = op.forward(x_true)
    if np.isinf(snr_db) and snr_db > 0:
        return clean
    s = clean.samples
    sigma2 = np.linalg.norm(s) ** 2 / (s.size * 10 ** (snr_db / 10))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape)
    return KSpaceData(s + np.sqrt(sigma2 / 2) * noise, mask)


def measured_snr_db(clean: KSpaceData, noisy: KSpaceData) -> float:
    e = noisy.samples - clean.samples
    return float(10 * np.log10(np.linalg.norm(clean.samples) ** 2 / np.linalg.norm(e) ** 2))
