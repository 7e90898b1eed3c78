"""Binary array formats and image export.

CPLX1: ``b"CPLX1\\0"``, u32 ndim, u32 dims[ndim], then float64 (re, im)
pairs in row-major order, all little endian. MASK1: ``b"MASK1\\0"``, u32
ndim, u32 dims, then one byte (0/1) per entry. k-space data is stored as a
MASK1 file plus a CPLX1 file of shape ``(M, L)``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError
from .model import KSpaceData, SamplingMask

CPLX_MAGIC = b"CPLX1\0"
MASK_MAGIC = b"MASK1\0"


def _header(magic, shape) -> bytes:
    return magic + struct.pack(f"<I{len(shape)}I", len(shape), *shape)


def _read_header(buf: bytes, magic: bytes, path):
    if buf[:len(magic)] != magic:
        raise ConfigurationError(f"{path}: not a {magic[:-1].decode()} file")
    off = len(magic)
    (ndim,) = struct.unpack_from("<I", buf, off)
    off += 4
    shape = struct.unpack_from(f"<{ndim}I", buf, off)
    return tuple(shape), off + 4 * ndim


def write_cplx(path, arr) -> None:
    a = np.ascontiguousarray(arr, dtype="<c16")
    with open(path, "wb") as f:
        f.write(_header(CPLX_MAGIC, a.shape))
        f.write(a.view("<f8").tobytes())


def read_cplx(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    shape, off = _read_header(buf, CPLX_MAGIC, path)
    n = int(np.prod(shape, dtype=np.int64))
    if len(buf) - off != 16 * n:
        raise DimensionError(f"{path}: expected {16 * n} data bytes, found {len(buf) - off}")
    return np.frombuffer(buf, dtype="<c16", offset=off).reshape(shape).astype(complex)


def write_mask(path, mask: SamplingMask) -> None:
    with open(path, "wb") as f:
        f.write(_header(MASK_MAGIC, mask.shape))
        f.write(mask.keep.astype(np.uint8).tobytes())


def read_mask(path) -> SamplingMask:
    buf = Path(path).read_bytes()
    shape, off = _read_header(buf, MASK_MAGIC, path)
    raw = np.frombuffer(buf, dtype=np.uint8, offset=off)
    if raw.size != int(np.prod(shape)) or np.any(raw > 1):
        raise DimensionError(f"{path}: bad mask payload")
    return SamplingMask(raw.reshape(shape).astype(bool))


def write_kspace(prefix, y: KSpaceData) -> tuple[Path, Path]:
    """Write ``<prefix>.mask`` and ``<prefix>.cplx``; returns both paths."""
    prefix = Path(prefix)
    mpath, dpath = prefix.with_suffix(".mask"), prefix.with_suffix(".cplx")
    write_mask(mpath, y.mask)
    write_cplx(dpath, y.samples)
    return mpath, dpath


def read_kspace(prefix) -> KSpaceData:
    prefix = Path(prefix)
    mask = read_mask(prefix.with_suffix(".mask"))
    return KSpaceData(read_cplx(prefix.with_suffix(".cplx")), mask)


def write_pgm(path, img) -> None:
    """8-bit binary PGM of ``|img|``, linearly scaled so the maximum maps to 255."""
    mag = np.abs(np.asarray(img))
    if mag.ndim != 2:
        raise DimensionError("PGM export needs a 2D image")
    top = mag.max()
    u8 = np.zeros(mag.shape, np.uint8) if top == 0 else np.round(255 * mag / top).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{mag.shape[1]} {mag.shape[0]}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    parts = buf.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ConfigurationError(f"{path}: not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], np.uint8).reshape(h, w)


def describe(path) -> dict:
    """Header summary of a CPLX1, MASK1 or PGM file."""
    buf = Path(path).read_bytes()
    if buf.startswith(CPLX_MAGIC):
        a = read_cplx(path)
        return {"format": "CPLX1", "shape": list(a.shape), "max_abs": float(np.abs(a).max(initial=0)),
                "l2": float(np.linalg.norm(a))}
    if buf.startswith(MASK_MAGIC):
        m = read_mask(path)
        return {"format": "MASK1", "shape": list(m.shape), "samples": m.nsamples,
                "fraction": m.fraction}
    if buf.startswith(b"P5"):
        img = read_pgm(path)
        return {"format": "PGM", "shape": list(img.shape)}
    raise ConfigurationError(f"{path}: unrecognized file format")
