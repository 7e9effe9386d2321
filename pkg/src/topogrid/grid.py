"""Lattice-shaped data (label grids, likelihood grids, binary masks) and their
portable on-disk formats.

The canonical container is SEGV, a small little-endian binary format holding
labels, masks, or per-class likelihood values together with voxel spacing.
Binary P5 PGM is accepted as a convenience ingestion path for 2D label images.
All types are immutable after construction; the backing numpy arrays are
copied in and marked read-only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SEGV_MAGIC = b"SEGV"
SEGV_VERSION = 1

KIND_LABELS = 0
KIND_MASK = 1
KIND_LIKELIHOOD = 2

_KIND_NAMES = {KIND_LABELS: "labels", KIND_MASK: "mask", KIND_LIKELIHOOD: "likelihood"}


class SegvError(ValueError):
    """Malformed SEGV or PGM content; messages carry the offending byte offset."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_dims(shape: tuple[int, ...]) -> None:
    if len(shape) not in (2, 3):
        raise ValueError(f"grids must be 2D or 3D, got {len(shape)} axes")
    if any(n < 1 for n in shape):
        raise ValueError(f"every extent must be >= 1, got {shape}")


def _check_spacing(spacing: tuple[float, ...], ndim: int) -> tuple[float, ...]:
    if not spacing:
        return (1.0,) * ndim
    if len(spacing) != ndim:
        raise ValueError(f"spacing has {len(spacing)} entries for a {ndim}D grid")
    if any(not (s > 0) for s in spacing):
        raise ValueError(f"spacing entries must be strictly positive, got {spacing}")
    return tuple(float(s) for s in spacing)


@dataclass(frozen=True)
class LabelGrid:
    """Discrete multi-class segmentation map over a 2D/3D lattice.

    ``labels`` holds one class id per site (uint8, so at most 256 classes);
    ids run 0..num_classes-1 with 0 reserved for background. ``spacing`` is
    the per-axis physical site size, defaulting to 1.0.
    """

    labels: np.ndarray
    num_classes: int
    spacing: tuple[float, ...] = ()

    def __post_init__(self):
        a = np.asarray(self.labels)
        _check_dims(a.shape)
        if not (1 <= self.num_classes <= 256):
            raise ValueError(f"num_classes must be in 1..256, got {self.num_classes}")
        if a.size and int(a.max()) >= self.num_classes:
            bad = int(a.max())
            raise ValueError(f"label {bad} out of range for num_classes={self.num_classes}")
        object.__setattr__(self, "labels", _frozen(a.astype(np.uint8, copy=True)))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing, a.ndim))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.labels.shape

    @property
    def ndim(self) -> int:
        return self.labels.ndim

    @property
    def n_sites(self) -> int:
        return self.labels.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LabelGrid)
            and self.num_classes == other.num_classes
            and self.spacing == other.spacing
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True)
class LikelihoodGrid:
    """Per-class real-valued prediction map: one channel per class.

    ``values`` is laid out class-major, shape (num_classes, *dims), held as
    float64 in memory (the on-disk payload is float32). The ``normalized``
    flag records the caller's claim that per-site channel sums equal 1; it is
    verified (to 1e-5) when the flag is set.
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        if a.ndim not in (3, 4):
            raise ValueError("values must be shaped (num_classes, *dims) with 2 or 3 spatial axes")
        _check_dims(a.shape[1:])
        if a.shape[0] < 1 or a.shape[0] > 256:
            raise ValueError(f"num_classes must be in 1..256, got {a.shape[0]}")
        if not np.isfinite(a).all():
            raise ValueError("likelihood values must all be finite")
        if self.normalized:
            sums = a.sum(axis=0)
            err = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
            if err > 1e-5:
                raise ValueError(
                    f"normalized flag set but per-site channel sums deviate by {err:.2e} (> 1e-5)"
                )
        object.__setattr__(self, "values", _frozen(a.copy() if a is self.values else a))

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def __eq__(self, other) -> bool:
        return isinstance(other, LikelihoodGrid) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None


@dataclass(frozen=True)
class BinaryMask:
    """One boolean per lattice site."""

    bits: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.bits)
        _check_dims(a.shape)
        object.__setattr__(self, "bits", _frozen(a.astype(bool, copy=True)))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.bits.shape

    @property
    def ndim(self) -> int:
        return self.bits.ndim

    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True)
class CountGrid:
    """Non-negative neighbor counts per site, bounded by the kernel popcount."""

    counts: np.ndarray
    max_count: int

    def __post_init__(self):
        a = np.asarray(self.counts)
        _check_dims(a.shape)
        if a.size:
            lo, hi = int(a.min()), int(a.max())
            if lo < 0:
                raise ValueError(f"counts must be non-negative, found {lo}")
            if hi > self.max_count:
                raise ValueError(f"count {hi} exceeds kernel popcount {self.max_count}")
        object.__setattr__(self, "counts", _frozen(a.astype(np.int32, copy=True)))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.counts.shape


# ---------------------------------------------------------------------------
# Derived views
# ---------------------------------------------------------------------------

def class_mask(g: LabelGrid, ids) -> BinaryMask:
    """Binary mask of the sites whose label belongs to ``ids``."""
    ids = frozenset(int(i) for i in ids)
    for i in ids:
        if not (0 <= i < g.num_classes):
            raise ValueError(f"class id {i} out of range for num_classes={g.num_classes}")
    lut = np.zeros(256, dtype=bool)
    lut[list(ids)] = True
    return BinaryMask(lut[g.labels])


def argmax_labels(f: LikelihoodGrid) -> LabelGrid:
    """Discretize a likelihood map: per site, the index of the maximal channel.

    Ties break toward the smallest class index.
    """
    labels = np.argmax(f.values, axis=0).astype(np.uint8)
    return LabelGrid(labels, f.num_classes)


def one_hot(g: LabelGrid, normalized: bool = True) -> LikelihoodGrid:
    """Likelihood map that puts probability 1 on each site's label."""
    vals = np.zeros((g.num_classes,) + g.dims, dtype=np.float64)
    idx = np.indices(g.dims)
    vals[(g.labels.astype(np.intp),) + tuple(idx)] = 1.0
    return LikelihoodGrid(vals, normalized=normalized)


# ---------------------------------------------------------------------------
# SEGV container
# ---------------------------------------------------------------------------
# Layout (little-endian):
#   magic "SEGV" | version u16 | kind u8 | ndim u8 | dims ndim*u32
#   | num_classes u16 | spacing ndim*f32 | payload
# Payload: labels/mask one u8 per site; likelihood f32 per (class, site),
# class-major. Row-major site order with the last axis fastest.


def _header_bytes(kind: int, dims: tuple[int, ...], num_classes: int,
                  spacing: tuple[float, ...]) -> bytes:
    ndim = len(dims)
    return (
        SEGV_MAGIC
        + struct.pack("<HBB", SEGV_VERSION, kind, ndim)
        + struct.pack(f"<{ndim}I", *dims)
        + struct.pack("<H", num_classes)
        + struct.pack(f"<{ndim}f", *spacing)
    )


class _Cursor:
    """Sequential reader that reports byte offsets in its error messages."""

    def __init__(self, buf: bytes, source: str):
        self.buf = buf
        self.off = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.buf):
            raise SegvError(
                f"{self.source}: truncated while reading {what} at offset {self.off} "
                f"(need {n} bytes, have {len(self.buf) - self.off})"
            )
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str, what: str):
        n = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(n, what))

    def fail(self, msg: str, at: int | None = None):
        raise SegvError(f"{self.source}: {msg} at offset {self.off if at is None else at}")


def _read_segv(path, expect_kind: int):
    data = Path(path).read_bytes()
    cur = _Cursor(data, str(path))
    magic = cur.take(4, "magic")
    if magic != SEGV_MAGIC:
        cur.fail(f"bad magic {magic!r}, expected {SEGV_MAGIC!r}", at=0)
    (version,) = cur.unpack("<H", "version")
    if version != SEGV_VERSION:
        cur.fail(f"unsupported version {version}", at=4)
    kind, ndim = cur.unpack("<BB", "kind/ndim")
    if kind not in _KIND_NAMES:
        cur.fail(f"unknown kind byte {kind}", at=6)
    if kind != expect_kind:
        cur.fail(
            f"kind is {_KIND_NAMES[kind]}, expected {_KIND_NAMES[expect_kind]}", at=6
        )
    if ndim not in (2, 3):
        cur.fail(f"ndim must be 2 or 3, got {ndim}", at=7)
    dims = cur.unpack(f"<{ndim}I", "dims")
    if any(n < 1 for n in dims):
        cur.fail(f"zero extent in dims {dims}")
    (num_classes,) = cur.unpack("<H", "num_classes")
    spacing = cur.unpack(f"<{ndim}f", "spacing")
    if any(not (s > 0) for s in spacing):
        cur.fail(f"non-positive spacing {spacing}")
    return cur, dims, num_classes, spacing


def _expect_end(cur: _Cursor):
    if cur.off != len(cur.buf):
        cur.fail(f"{len(cur.buf) - cur.off} trailing bytes")


def write_label_grid(g: LabelGrid, path) -> None:
    Path(path).write_bytes(
        _header_bytes(KIND_LABELS, g.dims, g.num_classes, g.spacing)
        + g.labels.tobytes()
    )


def read_label_grid(path, num_classes: int | None = None) -> LabelGrid:
    """Read a label grid from SEGV, or from binary P5 PGM (2D only).

    For PGM, ``num_classes`` declares the class count (default: max gray
    value + 1) and spacing falls back to 1.0 per axis.
    """
    head = Path(path).read_bytes()[:2]
    if head == b"P5":
        return _read_pgm(path, num_classes)
    cur, dims, c, spacing = _read_segv(path, KIND_LABELS)
    n = int(np.prod(dims))
    payload_at = cur.off
    raw = cur.take(n, "label payload")
    _expect_end(cur)
    labels = np.frombuffer(raw, dtype=np.uint8).reshape(dims)
    if labels.size and int(labels.max()) >= c:
        idx = int(np.argmax(labels.reshape(-1) >= c))
        cur.fail(
            f"label {int(labels.reshape(-1)[idx])} out of range for num_classes={c}",
            at=payload_at + idx,
        )
    return LabelGrid(labels, c, tuple(spacing))


def write_mask(m: BinaryMask, path) -> None:
    Path(path).write_bytes(
        _header_bytes(KIND_MASK, m.dims, 2, (1.0,) * m.ndim)
        + m.bits.astype(np.uint8).tobytes()
    )


def read_mask(path) -> BinaryMask:
    cur, dims, _, _ = _read_segv(path, KIND_MASK)
    n = int(np.prod(dims))
    payload_at = cur.off
    raw = cur.take(n, "mask payload")
    _expect_end(cur)
    bits = np.frombuffer(raw, dtype=np.uint8)
    if bits.size and int(bits.max()) > 1:
        idx = int(np.argmax(bits > 1))
        cur.fail(f"mask byte {int(bits[idx])} is not 0/1", at=payload_at + idx)
    return BinaryMask(bits.reshape(dims).astype(bool))


def write_likelihood_grid(f: LikelihoodGrid, path) -> None:
    Path(path).write_bytes(
        _header_bytes(KIND_LIKELIHOOD, f.dims, f.num_classes, (1.0,) * f.ndim)
        + f.values.astype("<f4").tobytes()
    )


def read_likelihood_grid(path) -> LikelihoodGrid:
    cur, dims, c, _ = _read_segv(path, KIND_LIKELIHOOD)
    n = int(np.prod(dims)) * c
    payload_at = cur.off
    raw = cur.take(4 * n, "likelihood payload")
    _expect_end(cur)
    vals = np.frombuffer(raw, dtype="<f4").reshape((c,) + tuple(dims))
    finite = np.isfinite(vals.reshape(-1))
    if not finite.all():
        idx = int(np.argmax(~finite))
        cur.fail("non-finite likelihood value", at=payload_at + 4 * idx)
    return LikelihoodGrid(vals.astype(np.float64))


# ---------------------------------------------------------------------------
# PGM (binary P5, 2D ingestion only)
# ---------------------------------------------------------------------------

def _read_pgm(path, num_classes: int | None) -> LabelGrid:
    data = Path(path).read_bytes()
    cur = _Cursor(data, str(path))

    def token() -> bytes:
        # skip whitespace and '#' comment lines between header fields
        while cur.off < len(cur.buf):
            b = cur.buf[cur.off]
            if b in b"#":
                while cur.off < len(cur.buf) and cur.buf[cur.off] not in b"\n":
                    cur.off += 1
            elif b in b" \t\r\n":
                cur.off += 1
            else:
                break
        start = cur.off
        while cur.off < len(cur.buf) and cur.buf[cur.off] not in b" \t\r\n":
            cur.off += 1
        if start == cur.off:
            cur.fail("truncated PGM header")
        return cur.buf[start:cur.off]

    if token() != b"P5":
        cur.fail("not a binary P5 PGM", at=0)
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError:
        cur.fail("non-numeric PGM header field")
    if maxval > 255:
        cur.fail(f"PGM maxval {maxval} exceeds 255 (one byte per pixel required)")
    cur.take(1, "header/raster separator")
    raw = cur.take(width * height, "PGM raster")
    labels = np.frombuffer(raw, dtype=np.uint8).reshape((height, width))
    c = num_classes if num_classes is not None else int(labels.max()) + 1 if labels.size else 1
    if labels.size and int(labels.max()) >= c:
        idx = int(np.argmax(labels.reshape(-1) >= c))
        cur.fail(
            f"label {int(labels.reshape(-1)[idx])} out of range for num_classes={c}",
            at=cur.off - width * height + idx,
        )
    return LabelGrid(labels, c, (1.0, 1.0))


def write_pgm(g: LabelGrid, path) -> None:
    """Write a 2D label grid as binary P5 PGM (labels become gray values)."""
    if g.ndim != 2:
        raise ValueError("PGM supports 2D grids only")
    h, w = g.dims
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + g.labels.tobytes())
