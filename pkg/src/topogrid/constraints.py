"""Topological interaction constraints and their reduction to label-pair tasks.

A containment constraint ("beta contains alpha") forbids alpha sites from
neighboring anything other than alpha or beta; an exclusion constraint
forbids two classes from neighboring each other. Both reduce to the same
primitive: a pair of disjoint class-id sets (A, C) that must never occur on
sites within the reach of a connectivity kernel. Widened variants use a
(2d+1)-wide all-ones box kernel so the forbidden pair may not occur within
Chebyshev distance d.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONTAINMENT = "containment"
EXCLUSION = "exclusion"

_NAMED_CONNS = {4: 2, 8: 2, 6: 3, 26: 3}  # name -> required ndim


@dataclass(frozen=True)
class ConnectivityKernel:
    """0/1 stencil defining a site's neighborhood.

    Must be symmetric under coordinate negation and have at least one nonzero
    off-center entry. The center entry is irrelevant to detection (a site
    holds a single label, so it can never be its own forbidden neighbor).
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim not in (2, 3):
            raise ValueError("kernel must be 2D or 3D")
        if any(n % 2 == 0 or n < 3 for n in w.shape):
            raise ValueError(f"kernel extents must be odd and >= 3, got {w.shape}")
        if len(set(w.shape)) != 1:
            raise ValueError(f"kernel extents must be equal per axis, got {w.shape}")
        if not np.isin(w, (0, 1)).all():
            raise ValueError("kernel entries must be 0 or 1")
        if not np.array_equal(w, w[tuple(slice(None, None, -1) for _ in w.shape)]):
            raise ValueError("kernel must equal its reflection")
        off_center = int(w.sum()) - int(w[tuple(n // 2 for n in w.shape)])
        if off_center < 1:
            raise ValueError("kernel needs at least one nonzero off-center entry")
        w = w.astype(np.uint8, copy=True)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def ndim(self) -> int:
        return self.weights.ndim

    @property
    def extent(self) -> int:
        return self.weights.shape[0]

    @property
    def radius(self) -> int:
        return (self.extent - 1) // 2

    @property
    def popcount(self) -> int:
        return int(self.weights.sum())

    def offsets(self) -> list[tuple[int, ...]]:
        """Nonzero off-center offsets relative to the kernel center."""
        r = self.radius
        out = []
        for idx in np.argwhere(self.weights):
            off = tuple(int(i) - r for i in idx)
            if any(off):
                out.append(off)
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, ConnectivityKernel) and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = None


def build_kernel(ndim: int, conn, d: int = 1) -> ConnectivityKernel:
    """Connectivity kernel for a named connectivity or a width-d box.

    2D: conn 4 is the 3x3 face cross, conn 8 the 3x3 all-ones. 3D: conn 6 is
    the 3x3x3 face cross, conn 26 the 3x3x3 all-ones. ``conn="box"`` yields
    the (2d+1)^ndim all-ones kernel; named connectivities require d=1.
    """
    if ndim not in (2, 3):
        raise ValueError(f"ndim must be 2 or 3, got {ndim}")
    if d < 1:
        raise ValueError(f"width d must be >= 1, got {d}")
    if conn == "box":
        k = 2 * d + 1
        return ConnectivityKernel(np.ones((k,) * ndim, dtype=np.uint8))
    conn = int(conn)
    if conn not in _NAMED_CONNS:
        raise ValueError(f"unknown connectivity {conn!r}")
    if _NAMED_CONNS[conn] != ndim:
        raise ValueError(f"connectivity {conn} is a {_NAMED_CONNS[conn]}D notion, grid is {ndim}D")
    if d != 1:
        raise ValueError(f"named connectivity {conn} requires d=1 (use 'box' for d={d})")
    if conn in (8, 26):
        return ConnectivityKernel(np.ones((3,) * ndim, dtype=np.uint8))
    w = np.zeros((3,) * ndim, dtype=np.uint8)
    center = (1,) * ndim
    for ax in range(ndim):
        for step in (-1, 1):
            idx = list(center)
            idx[ax] += step
            w[tuple(idx)] = 1
    return ConnectivityKernel(w)


@dataclass(frozen=True)
class Constraint:
    """One declared interaction: Containment(inner in outer, d) or
    Exclusion(inner, other, d)."""

    kind: str
    inner: int
    outer: int | None = None  # containment only
    other: int | None = None  # exclusion only
    d: int = 1

    def __post_init__(self):
        if self.kind not in (CONTAINMENT, EXCLUSION):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.d < 1:
            raise ValueError(f"width d must be >= 1, got {self.d}")
        partner = self.outer if self.kind == CONTAINMENT else self.other
        if partner is None:
            raise ValueError(f"{self.kind} needs two class ids")
        if partner == self.inner:
            raise ValueError("constraint must reference two distinct class ids")

    def referenced_ids(self) -> tuple[int, int]:
        return (self.inner, self.outer if self.kind == CONTAINMENT else self.other)

    def describe(self) -> str:
        a, b = self.referenced_ids()
        if self.kind == CONTAINMENT:
            return f"contain {a} in {b} (d={self.d})"
        return f"exclude {a} {b} (d={self.d})"


@dataclass(frozen=True)
class PairTask:
    """Forbidden label-pair primitive: no site with a label in ids_a may have a
    site with a label in ids_c within the kernel's reach (and vice versa)."""

    ids_a: frozenset[int]
    ids_c: frozenset[int]
    d: int
    kernel: ConnectivityKernel

    def __post_init__(self):
        object.__setattr__(self, "ids_a", frozenset(self.ids_a))
        object.__setattr__(self, "ids_c", frozenset(self.ids_c))
        if not self.ids_a or not self.ids_c:
            raise ValueError("ids_a and ids_c must be non-empty")
        if self.ids_a & self.ids_c:
            raise ValueError(f"ids_a and ids_c overlap: {sorted(self.ids_a & self.ids_c)}")


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[Constraint, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        for con in self.constraints:
            for cid in con.referenced_ids():
                if not (0 <= cid < self.num_classes):
                    raise ValueError(
                        f"constraint references class {cid}, but num_classes={self.num_classes}"
                    )
        # Per-pair consistency: a pair that containment treats as permitted
        # neighbors (inner, outer) must not be declared mutually exclusive.
        permitted: set[frozenset[int]] = set()
        excluded: set[frozenset[int]] = set()
        for con in self.constraints:
            pair = frozenset(con.referenced_ids())
            (permitted if con.kind == CONTAINMENT else excluded).add(pair)
        clash = permitted & excluded
        if clash:
            pair = sorted(next(iter(clash)))
            raise ValueError(
                f"contradictory constraints: classes {pair} appear both as a "
                f"containment pair and as an exclusion pair"
            )


def reduce(cs: ConstraintSet, conn, ndim: int) -> list[PairTask]:
    """Reduce a constraint set to forbidden label-pair tasks.

    Containment(a in b, d) forbids a against everything except a and b
    (background included); Exclusion(a, g, d) forbids a against g. Each task
    carries its connectivity kernel: the named kernel for d=1, the width-d
    all-ones box otherwise. A containment with no remaining forbidden class
    (num_classes == 2) produces no task.
    """
    if conn != "box" and _NAMED_CONNS.get(int(conn)) != ndim:
        raise ValueError(f"connectivity {conn!r} is not valid for a {ndim}D grid")
    tasks = []
    for con in cs.constraints:
        kernel = build_kernel(ndim, conn if con.d == 1 else "box", con.d)
        if con.kind == CONTAINMENT:
            ids_c = frozenset(range(cs.num_classes)) - {con.inner, con.outer}
            if not ids_c:
                continue
            tasks.append(PairTask(frozenset({con.inner}), ids_c, con.d, kernel))
        else:
            tasks.append(PairTask(frozenset({con.inner}), frozenset({con.other}), con.d, kernel))
    return tasks


# ---------------------------------------------------------------------------
# Constraint config files
# ---------------------------------------------------------------------------
# UTF-8 text, one directive per line:
#   classes <c>
#   contain <alpha> in <beta> [d=<n>]
#   exclude <alpha> <gamma> [d=<n>]
#   conn <4|8|6|26|box>
#   # comment


class ConfigError(ValueError):
    pass


def _parse_d(tokens: list[str], lineno: int) -> int:
    if not tokens:
        return 1
    if len(tokens) > 1 or not tokens[0].startswith("d="):
        raise ConfigError(f"line {lineno}: expected optional 'd=<n>', got {' '.join(tokens)!r}")
    try:
        d = int(tokens[0][2:])
    except ValueError:
        raise ConfigError(f"line {lineno}: bad width {tokens[0]!r}") from None
    return d


def parse_constraint_config(text: str):
    """Parse config text into (ConstraintSet, conn), conn being None when the
    file does not pick one."""
    num_classes = None
    conn = None
    constraints: list[Constraint] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        try:
            if toks[0] == "classes":
                if len(toks) != 2:
                    raise ConfigError(f"line {lineno}: usage 'classes <c>'")
                num_classes = int(toks[1])
            elif toks[0] == "contain":
                if len(toks) < 4 or toks[2] != "in":
                    raise ConfigError(f"line {lineno}: usage 'contain <alpha> in <beta> [d=<n>]'")
                constraints.append(
                    Constraint(CONTAINMENT, int(toks[1]), outer=int(toks[3]),
                               d=_parse_d(toks[4:], lineno))
                )
            elif toks[0] == "exclude":
                if len(toks) < 3:
                    raise ConfigError(f"line {lineno}: usage 'exclude <alpha> <gamma> [d=<n>]'")
                constraints.append(
                    Constraint(EXCLUSION, int(toks[1]), other=int(toks[2]),
                               d=_parse_d(toks[3:], lineno))
                )
            elif toks[0] == "conn":
                if len(toks) != 2 or toks[1] not in ("4", "8", "6", "26", "box"):
                    raise ConfigError(f"line {lineno}: usage 'conn <4|8|6|26|box>'")
                conn = toks[1] if toks[1] == "box" else int(toks[1])
            else:
                raise ConfigError(f"line {lineno}: unknown directive {toks[0]!r}")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: {e}") from None
    if num_classes is None:
        raise ConfigError("config must declare 'classes <c>'")
    return ConstraintSet(tuple(constraints), num_classes), conn


def read_constraint_config(path):
    from pathlib import Path

    return parse_constraint_config(Path(path).read_text(encoding="utf-8"))


def format_constraint_config(cs: ConstraintSet, conn=None) -> str:
    """Render a constraint set back to config text (inverse of the parser)."""
    lines = [f"classes {cs.num_classes}"]
    if conn is not None:
        lines.append(f"conn {conn}")
    for con in cs.constraints:
        a, b = con.referenced_ids()
        verb = f"contain {a} in {b}" if con.kind == CONTAINMENT else f"exclude {a} {b}"
        lines.append(verb + (f" d={con.d}" if con.d != 1 else ""))
    return "\n".join(lines) + "\n"
