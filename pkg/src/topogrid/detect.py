"""Critical-pixel detection: find every site that participates in a forbidden
label pair.

Three interchangeable algorithms compute the same mask V and must agree
bit-for-bit:

* ``detect_naive``   - scan each site's kernel neighborhood in a plain loop;
* ``detect_shifted`` - materialize one shifted label map per kernel offset and
  accumulate mask products over directions;
* ``detect_conv``    - dilate each class mask by the connectivity kernel
  (direct or FFT convolution) and intersect with the opposite mask.

Boundary handling is zero padding throughout: space outside the grid carries
no label and can never be a forbidden neighbor, so a region touching the
border is only flagged against labels inside the grid.
"""

from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.fft import irfftn, next_fast_len, rfftn

from .constraints import ConstraintSet, PairTask, reduce
from .grid import BinaryMask, CountGrid, LabelGrid

ALGORITHMS = ("auto", "naive", "shifted", "conv_direct", "conv_fft")

# auto-dispatch thresholds, calibrated from this package's own benchmark runs;
# configuration, not contract
_FFT_KERNEL_EXTENT = 7
_FFT_SITES = 1 << 20


@dataclass(frozen=True)
class DetectionResult:
    """Critical mask V plus the per-task A-side and C-side masks."""

    mask: BinaryMask
    per_task: tuple[tuple[PairTask, BinaryMask, BinaryMask], ...]
    violation_count: int
    foreground_count: int


def _id_lut(ids) -> np.ndarray:
    lut = np.zeros(256, dtype=bool)
    lut[list(ids)] = True
    return lut


def _check_tasks(g: LabelGrid, tasks) -> None:
    for t in tasks:
        if t.kernel.ndim != g.ndim:
            raise ValueError(
                f"task kernel is {t.kernel.ndim}D but grid is {g.ndim}D"
            )
        for cid in t.ids_a | t.ids_c:
            if cid >= g.num_classes:
                raise ValueError(
                    f"task references class {cid}, grid has num_classes={g.num_classes}"
                )


def _assemble(g: LabelGrid, tasks, task_masks) -> DetectionResult:
    v = np.zeros(g.dims, dtype=bool)
    per_task = []
    for task, (va, vc) in zip(tasks, task_masks):
        v |= va
        v |= vc
        per_task.append((task, BinaryMask(va), BinaryMask(vc)))
    return DetectionResult(
        mask=BinaryMask(v),
        per_task=tuple(per_task),
        violation_count=int(np.count_nonzero(v)),
        foreground_count=int(np.count_nonzero(g.labels)),
    )


# ---------------------------------------------------------------------------
# naive: per-site neighborhood scan
# ---------------------------------------------------------------------------

def detect_naive(g: LabelGrid, tasks) -> DetectionResult:
    """Loop over every site and scan its kernel-support neighbors, flagging
    both members of any forbidden pair. Deliberately literal and slow."""
    _check_tasks(g, tasks)
    return _assemble(g, tasks, [_naive_task(g, t) for t in tasks])


def _naive_task(g: LabelGrid, task: PairTask):
    rad = task.kernel.radius
    # pad with a sentinel label so neighbor offsets never leave the buffer
    padded = np.pad(g.labels, rad, mode="constant", constant_values=255)
    pshape = padded.shape
    flat = padded.reshape(-1).tolist()
    strides = [1] * len(pshape)
    for ax in range(len(pshape) - 2, -1, -1):
        strides[ax] = strides[ax + 1] * pshape[ax + 1]
    offs = [sum(o * s for o, s in zip(off, strides)) for off in task.kernel.offsets()]

    in_a = bytearray(256)
    in_c = bytearray(256)
    for i in task.ids_a:
        in_a[i] = 1
    for i in task.ids_c:
        in_c[i] = 1

    va = bytearray(len(flat))
    vc = bytearray(len(flat))
    dims = g.dims
    if g.ndim == 2:
        h, w = dims
        w2 = pshape[1]
        for i in range(h):
            base = (i + rad) * w2 + rad
            for j in range(w):
                p = base + j
                lab = flat[p]
                if in_a[lab]:
                    for o in offs:
                        if in_c[flat[p + o]]:
                            va[p] = 1
                            vc[p + o] = 1
                elif in_c[lab]:
                    for o in offs:
                        if in_a[flat[p + o]]:
                            vc[p] = 1
                            va[p + o] = 1
    else:
        d0, d1, d2 = dims
        s0, s1 = strides[0], strides[1]
        for i in range(d0):
            for j in range(d1):
                base = (i + rad) * s0 + (j + rad) * s1 + rad
                for k in range(d2):
                    p = base + k
                    lab = flat[p]
                    if in_a[lab]:
                        for o in offs:
                            if in_c[flat[p + o]]:
                                va[p] = 1
                                vc[p + o] = 1
                    elif in_c[lab]:
                        for o in offs:
                            if in_a[flat[p + o]]:
                                vc[p] = 1
                                va[p + o] = 1

    trim = tuple(slice(rad, rad + n) for n in dims)
    va_arr = np.frombuffer(bytes(va), dtype=np.uint8).reshape(pshape)[trim].astype(bool)
    vc_arr = np.frombuffer(bytes(vc), dtype=np.uint8).reshape(pshape)[trim].astype(bool)
    return va_arr, vc_arr


# ---------------------------------------------------------------------------
# shifted: one shifted label map per kernel offset
# ---------------------------------------------------------------------------

def detect_shifted(g: LabelGrid, tasks) -> DetectionResult:
    """Materialize a shifted copy of the label map for every nonzero kernel
    offset and accumulate the union of mask products over directions."""
    _check_tasks(g, tasks)
    labels = g.labels
    task_masks = []
    for task in tasks:
        lut_a = _id_lut(task.ids_a)
        lut_c = _id_lut(task.ids_c)
        m_a = lut_a[labels]
        m_c = lut_c[labels]
        va = np.zeros(g.dims, dtype=bool)
        vc = np.zeros(g.dims, dtype=bool)
        for off in task.kernel.offsets():
            shifted = _shifted_labels(labels, off)
            va |= m_a & lut_c[shifted]
            vc |= m_c & lut_a[shifted]
        task_masks.append((va, vc))
    return _assemble(g, tasks, task_masks)


def _shifted_labels(labels: np.ndarray, off) -> np.ndarray:
    """Label map translated by ``off``; vacated sites get the 255 sentinel,
    which belongs to no class."""
    out = np.full(labels.shape, 255, dtype=np.uint8)
    src = []
    dst = []
    for n, o in zip(labels.shape, off):
        if abs(o) >= n:
            return out
        src.append(slice(max(0, -o), n - max(0, o)))
        dst.append(slice(max(0, o), n - max(0, -o)))
    out[tuple(dst)] = labels[tuple(src)]
    return out


# ---------------------------------------------------------------------------
# convolution: dilate class masks, intersect with the opposite mask
# ---------------------------------------------------------------------------

def detect_conv(g: LabelGrid, tasks, backend: str = "direct") -> DetectionResult:
    """Per task, count forbidden neighbors by convolving each class mask with
    the connectivity kernel, then flag sites of the opposite mask where the
    count is positive. The FFT backend rounds to the nearest integer before
    the positivity test (values below 0.5 count as zero), which makes it
    bit-identical to direct integer convolution."""
    if backend not in ("direct", "fft"):
        raise ValueError(f"unknown convolution backend {backend!r}")
    _check_tasks(g, tasks)
    task_masks = []
    for task in tasks:
        m_a = _id_lut(task.ids_a)[g.labels]
        m_c = _id_lut(task.ids_c)[g.labels]
        if backend == "direct":
            n_a, n_c = neighbor_counts(m_a, m_c, task.kernel, backend)
            va = m_a & (n_c.counts > 0)
            vc = m_c & (n_a.counts > 0)
        else:
            # counts are integers and the FFT error is far below 0.5, so
            # "round to nearest, then test > 0" collapses to one threshold
            raw_a, raw_c = _fft_raw(m_a, m_c, task.kernel)
            va = m_a & (raw_c > 0.5)
            vc = m_c & (raw_a > 0.5)
        task_masks.append((va, vc))
    return _assemble(g, tasks, task_masks)


def neighbor_counts(m_a: np.ndarray, m_c: np.ndarray, kernel, backend: str):
    """Neighbor counts (N_A, N_C) of two boolean masks under one kernel."""
    if backend == "direct":
        kw = kernel.weights.astype(np.int32)
        n_a = ndimage.convolve(m_a.astype(np.int32), kw, mode="constant", cval=0)
        n_c = ndimage.convolve(m_c.astype(np.int32), kw, mode="constant", cval=0)
    else:
        raw_a, raw_c = _fft_raw(m_a, m_c, kernel)
        n_a = np.maximum(np.rint(raw_a), 0).astype(np.int32)
        n_c = np.maximum(np.rint(raw_c), 0).astype(np.int32)
    pop = kernel.popcount
    return CountGrid(n_a, pop), CountGrid(n_c, pop)


# Single precision keeps the transforms roughly twice as fast and is safe up
# to very wide kernels: the convolution error grows with the kernel popcount
# (measured ~4e-7 per tap, e.g. 3.9e-3 for a 101x101 kernel on a 2048^2 grid),
# so the 0.5 rounding margin holds with more than a 30x cushion below this cap.
_F32_POPCOUNT_LIMIT = 1 << 15


@functools.lru_cache(maxsize=64)
def _kernel_fft(kernel_bytes: bytes, kshape: tuple[int, ...], padded: tuple[int, ...],
                dtype_name: str):
    kw = np.frombuffer(kernel_bytes, dtype=np.uint8).reshape(kshape)
    buf = np.zeros(padded, dtype=np.dtype(dtype_name))
    buf[tuple(slice(0, n) for n in kshape)] = kw
    return rfftn(buf)


def _fft_raw(m_a: np.ndarray, m_c: np.ndarray, kernel):
    """Zero-padded linear convolution of both masks with the kernel, via one
    batched real FFT; returns the raw (float) neighbor counts."""
    ext = kernel.extent
    dims = m_a.shape
    dtype = np.float32 if kernel.popcount <= _F32_POPCOUNT_LIMIT else np.float64
    padded = tuple(next_fast_len(n + ext - 1, real=True) for n in dims)
    buf = np.zeros((2,) + padded, dtype=dtype)
    buf[(0,) + tuple(slice(0, n) for n in dims)] = m_a
    buf[(1,) + tuple(slice(0, n) for n in dims)] = m_c
    spec = rfftn(buf, axes=tuple(range(1, len(dims) + 1)))
    spec *= _kernel_fft(kernel.weights.tobytes(), kernel.weights.shape, padded,
                        dtype.__name__)
    full = irfftn(spec, s=padded, axes=tuple(range(1, len(dims) + 1)))
    rad = kernel.radius
    same = tuple(slice(rad, rad + n) for n in dims)
    return full[(0,) + same], full[(1,) + same]


# ---------------------------------------------------------------------------
# dispatcher
# ---------------------------------------------------------------------------

def choose_algorithm(max_kernel_extent: int, n_sites: int) -> str:
    """auto rule: FFT pays off for wide kernels or large lattices."""
    if max_kernel_extent >= _FFT_KERNEL_EXTENT or n_sites >= _FFT_SITES:
        return "conv_fft"
    return "conv_direct"


def _run_algorithm(g: LabelGrid, tasks, algorithm: str) -> DetectionResult:
    if algorithm == "naive":
        return detect_naive(g, tasks)
    if algorithm == "shifted":
        return detect_shifted(g, tasks)
    if algorithm == "conv_direct":
        return detect_conv(g, tasks, backend="direct")
    if algorithm == "conv_fft":
        return detect_conv(g, tasks, backend="fft")
    raise ValueError(f"unknown algorithm {algorithm!r}")


def detect(g: LabelGrid, cs: ConstraintSet, conn, algorithm: str = "auto",
           threads: int = 1) -> DetectionResult:
    """Detect all critical sites of ``g`` under a constraint set.

    ``algorithm`` picks one of naive/shifted/conv_direct/conv_fft, or "auto"
    to choose by kernel extent and lattice size; every choice yields the same
    result. ``threads`` > 1 splits the lattice into slabs with a read-only
    halo of the maximal kernel radius; detection is local, so the stitched
    result is independent of the tiling.
    """
    if cs.num_classes != g.num_classes:
        raise ValueError(
            f"constraint set is for {cs.num_classes} classes, grid has {g.num_classes}"
        )
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    tasks = reduce(cs, conn, g.ndim)
    if algorithm == "auto":
        max_ext = max((t.kernel.extent for t in tasks), default=3)
        algorithm = choose_algorithm(max_ext, g.n_sites)
    if not tasks:
        return _assemble(g, (), ())
    if threads > 1 and g.dims[0] >= 2 * threads:
        return _detect_tiled(g, tasks, algorithm, threads)
    return _run_algorithm(g, tasks, algorithm)


def _detect_tiled(g: LabelGrid, tasks, algorithm: str, threads: int) -> DetectionResult:
    halo = max(t.kernel.radius for t in tasks)
    n0 = g.dims[0]
    bounds = np.linspace(0, n0, threads + 1).astype(int)

    def run_slab(i):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        a, b = max(0, lo - halo), min(n0, hi + halo)
        sub = LabelGrid(g.labels[a:b], g.num_classes, g.spacing)
        res = _run_algorithm(sub, tasks, algorithm)
        interior = slice(lo - a, lo - a + (hi - lo))
        return [
            (va.bits[interior], vc.bits[interior]) for _, va, vc in res.per_task
        ]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        slabs = list(pool.map(run_slab, range(threads)))

    task_masks = []
    for ti in range(len(tasks)):
        va = np.concatenate([s[ti][0] for s in slabs], axis=0)
        vc = np.concatenate([s[ti][1] for s in slabs], axis=0)
        task_masks.append((va, vc))
    return _assemble(g, tasks, task_masks)
