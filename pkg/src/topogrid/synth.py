"""Synthetic label grids with known constraint status, and the scaling
benchmark comparing the detection algorithms.

Two scenarios: ``nested_rings`` builds an inner block of class 1 wrapped in a
wall of class 2 (containment, wall thickness = the constraint width) and
``exclusion_blobs`` lays out mutually exclusive class bands separated by a
background gap. Requested violations are planted as wall holes or gap
intruders, and their coordinates are returned so tests can assert each one is
flagged.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass

import numpy as np

from .constraints import CONTAINMENT, EXCLUSION, Constraint, ConstraintSet
from .detect import detect
from .grid import LabelGrid

SCENARIOS = ("nested_rings", "exclusion_blobs")


@dataclass(frozen=True)
class SynthSpec:
    ndim: int
    dims: tuple[int, ...]
    num_classes: int = 3
    scenario: str = "nested_rings"
    violation_count: int = 0
    wall_thickness: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        if self.ndim not in (2, 3) or len(self.dims) != self.ndim:
            raise ValueError(f"need {self.ndim} extents, got {self.dims}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.violation_count < 0:
            raise ValueError("violation_count must be >= 0")
        if self.wall_thickness < 1:
            raise ValueError("wall_thickness must be >= 1")
        if self.num_classes < 3:
            raise ValueError("scenarios need at least 3 classes (background + two)")


class GeometryError(ValueError):
    pass


def generate(spec: SynthSpec):
    """Build (LabelGrid, ConstraintSet, planted coordinates), deterministic in
    the seed. With violation_count=0 the grid satisfies every constraint."""
    rng = np.random.default_rng(spec.seed)
    if spec.scenario == "nested_rings":
        return _nested_rings(spec, rng)
    return _exclusion_blobs(spec, rng)


def _nested_rings(spec: SynthSpec, rng):
    t = spec.wall_thickness
    margin = t + 1  # background must reach around the wall
    inner = [n - 2 * (t + margin) for n in spec.dims]
    if any(n < 1 for n in inner):
        raise GeometryError(
            f"dims {spec.dims} too small for wall thickness {t} (needs {2 * (t + margin) + 1})"
        )
    labels = np.zeros(spec.dims, dtype=np.uint8)
    lo = []
    for ax, n in enumerate(spec.dims):
        slack = n - inner[ax] - 2 * (t + margin)
        jitter = int(rng.integers(0, slack + 1)) if slack > 0 else 0
        lo.append(margin + t + jitter)
    hi = [l + w for l, w in zip(lo, inner)]

    wall = tuple(slice(l - t, h + t) for l, h in zip(lo, hi))
    core = tuple(slice(l, h) for l, h in zip(lo, hi))
    labels[wall] = 2
    labels[core] = 1

    planted = _punch_wall_holes(labels, lo, hi, spec, rng)
    cs = ConstraintSet((Constraint(CONTAINMENT, 1, outer=2, d=t),), spec.num_classes)
    return LabelGrid(labels, spec.num_classes), cs, planted


def _punch_wall_holes(labels, lo, hi, spec, rng):
    """Turn wall sites face-adjacent to the core into background holes."""
    if spec.violation_count == 0:
        return []
    candidates = []
    ndim = len(lo)
    for ax in range(ndim):
        other = [range(lo[a], hi[a]) for a in range(ndim) if a != ax]
        for rest in np.ndindex(*[len(list(r)) for r in other]):
            coord_lo = []
            coord_hi = []
            k = 0
            for a in range(ndim):
                if a == ax:
                    coord_lo.append(lo[ax] - 1)
                    coord_hi.append(hi[ax])
                else:
                    coord_lo.append(lo[a] + rest[k])
                    coord_hi.append(lo[a] + rest[k])
                    k += 1
            candidates.append(tuple(coord_lo))
            candidates.append(tuple(coord_hi))
    if spec.violation_count > len(candidates):
        raise GeometryError(
            f"cannot plant {spec.violation_count} holes, wall has only "
            f"{len(candidates)} core-adjacent sites"
        )
    picks = rng.choice(len(candidates), size=spec.violation_count, replace=False)
    planted = [candidates[i] for i in sorted(int(p) for p in picks)]
    for coord in planted:
        labels[coord] = 0
    return planted


def _exclusion_blobs(spec: SynthSpec, rng):
    t = spec.wall_thickness
    n_blobs = spec.num_classes - 1
    n0 = spec.dims[0]
    band = (n0 - (n_blobs - 1) * t) // n_blobs
    if band < 1:
        raise GeometryError(
            f"axis 0 extent {n0} too small for {n_blobs} bands with gap {t}"
        )
    labels = np.zeros(spec.dims, dtype=np.uint8)
    cross = tuple(slice(1, max(2, n - 1)) for n in spec.dims[1:])
    starts = []
    for b in range(n_blobs):
        a = b * (band + t)
        starts.append(a)
        labels[(slice(a, a + band),) + cross] = b + 1

    planted = []
    if spec.violation_count:
        # intruders: relabel a gap site adjacent to band b+1 with band b's class
        candidates = []
        free = [range(s.start, s.stop) for s in cross]
        cols = [tuple(c) for c in np.ndindex(*[len(list(f)) for f in free])]
        for b in range(n_blobs - 1):
            gap_row = starts[b + 1] - 1
            for col in cols:
                coord = (gap_row,) + tuple(f.start + c for f, c in zip(
                    [slice(r.start, r.stop) for r in free], col))
                candidates.append((coord, b + 1))
        if spec.violation_count > len(candidates):
            raise GeometryError(
                f"cannot plant {spec.violation_count} intruders, gaps offer "
                f"{len(candidates)} sites"
            )
        picks = rng.choice(len(candidates), size=spec.violation_count, replace=False)
        for i in sorted(int(p) for p in picks):
            coord, cls = candidates[i]
            labels[coord] = cls
            planted.append(coord)

    cons = tuple(
        Constraint(EXCLUSION, i, other=j, d=t)
        for i in range(1, spec.num_classes)
        for j in range(i + 1, spec.num_classes)
    )
    return LabelGrid(labels, spec.num_classes), ConstraintSet(cons, spec.num_classes), planted


# ---------------------------------------------------------------------------
# scaling benchmark
# ---------------------------------------------------------------------------

BENCH_CSV_HEADER = "algorithm,ndim,N,k,repeat,seconds,violations"


class ClockResolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchCell:
    algorithm: str
    ndim: int
    n: int
    k: int
    seconds: tuple[float, ...]  # one entry per repeat, warm-up discarded
    violations: int

    @property
    def median_seconds(self) -> float:
        return float(np.median(self.seconds))


@dataclass(frozen=True)
class BenchReport:
    cells: tuple[BenchCell, ...]
    slopes: dict  # (algorithm, N) -> log-log slope of median time vs k

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(BENCH_CSV_HEADER + "\n")
        for c in self.cells:
            for r, s in enumerate(c.seconds):
                buf.write(f"{c.algorithm},{c.ndim},{c.n},{c.k},{r},{s:.9f},{c.violations}\n")
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"{'algorithm':<12} {'N':>6} {'k':>4} {'median_s':>12} {'violations':>10}"]
        for c in self.cells:
            lines.append(
                f"{c.algorithm:<12} {c.n:>6} {c.k:>4} {c.median_seconds:>12.6f} "
                f"{c.violations:>10}"
            )
        for (algo, n), slope in sorted(self.slopes.items()):
            lines.append(f"slope(time vs k) {algo} at N={n}: {slope:+.3f}")
        return "\n".join(lines)

    def median(self, algorithm: str, n: int, k: int) -> float:
        for c in self.cells:
            if (c.algorithm, c.n, c.k) == (algorithm, n, k):
                return c.median_seconds
        raise KeyError((algorithm, n, k))


def bench(algorithms, n_list, k_list, repeats: int = 3, ndim: int = 2,
          seed: int = 2023, threads: int = 1) -> BenchReport:
    """Time each algorithm on nested-ring grids over all (N, k) cells.

    Per cell the wall time of the full detection call is measured ``repeats``
    times after one discarded warm-up; the median is the cell's value. The
    violation count must agree across algorithms in every cell, which doubles
    as a large-instance correctness probe. Slopes of log median time against
    log k are fitted per (algorithm, N).
    """
    algorithms = list(algorithms)
    n_list = list(n_list)
    k_list = list(k_list)
    if not algorithms or not n_list or not k_list:
        raise ValueError("algorithms, n_list and k_list must be non-empty")
    for k in k_list:
        if k < 3 or k % 2 == 0:
            raise ValueError(f"kernel extents must be odd and >= 3, got {k}")

    cells = []
    for n in n_list:
        for k in k_list:
            d = (k - 1) // 2
            spec = SynthSpec(ndim=ndim, dims=(n,) * ndim, num_classes=3,
                             scenario="nested_rings", violation_count=3,
                             wall_thickness=d, seed=seed + 1000 * n + k)
            grid, cs, _ = generate(spec)
            # discarded warm-up pass, which also cross-checks the counts
            counts = {
                algo: detect(grid, cs, "box", algorithm=algo, threads=threads
                             ).violation_count
                for algo in algorithms
            }
            if len(set(counts.values())) > 1:
                raise AssertionError(
                    f"algorithms disagree on violations at N={n}, k={k}: {counts}"
                )
            # interleave the algorithms round-robin so drifting machine state
            # (frequency scaling, migrations) biases no one
            times = {algo: [] for algo in algorithms}
            for _ in range(repeats):
                for algo in algorithms:
                    t0 = time.perf_counter()
                    detect(grid, cs, "box", algorithm=algo, threads=threads)
                    times[algo].append(time.perf_counter() - t0)
            for algo in algorithms:
                med = float(np.median(times[algo]))
                if med < 1e-5:
                    raise ClockResolutionError(
                        f"median {med:.2e}s for {algo} at N={n}, k={k} is below "
                        f"timer resolution; increase the problem size"
                    )
                cells.append(BenchCell(algo, ndim, n, k, tuple(times[algo]),
                                       counts[algo]))

    slopes = {}
    if len(k_list) >= 2:
        for algo in algorithms:
            for n in n_list:
                ks = np.log([k for k in k_list])
                ts = np.log([
                    next(c for c in cells if (c.algorithm, c.n, c.k) == (algo, n, k)).median_seconds
                    for k in k_list
                ])
                slopes[(algo, n)] = float(np.polyfit(ks, ts, 1)[0])
    return BenchReport(tuple(cells), slopes)
