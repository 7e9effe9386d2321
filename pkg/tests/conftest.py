import numpy as np
import pytest

from topogrid import (
    CONTAINMENT,
    EXCLUSION,
    Constraint,
    ConstraintSet,
    LabelGrid,
    LikelihoodGrid,
)


def random_label_grid(rng, ndim=None, max_extent=12, max_classes=5, spacing=False):
    ndim = ndim or int(rng.choice([2, 3]))
    hi = max_extent if ndim == 2 else min(max_extent, 8)
    dims = tuple(int(x) for x in rng.integers(2, hi + 1, ndim))
    c = int(rng.integers(2, max_classes + 1))
    labels = rng.integers(0, c, dims).astype(np.uint8)
    sp = tuple(float(x) for x in rng.uniform(0.5, 3.0, ndim)) if spacing else ()
    return LabelGrid(labels, c, sp)


def random_constraint_set(rng, num_classes, max_d=3):
    """One to three random constraints that cannot contradict each other."""
    n = int(rng.integers(1, 4))
    cons = []
    permitted = set()
    excluded = set()
    for _ in range(n):
        d = int(rng.choice([1, 1, 1, 2, 3])) if max_d > 1 else 1
        d = min(d, max_d)
        if rng.random() < 0.5 and num_classes >= 3:
            a, b = (int(x) for x in rng.choice(num_classes, 2, replace=False))
            if frozenset((a, b)) in excluded:
                continue
            permitted.add(frozenset((a, b)))
            cons.append(Constraint(CONTAINMENT, a, outer=b, d=d))
        else:
            if num_classes < 3:
                a, b = 0, 1
            else:
                a, b = (int(x) for x in rng.choice(np.arange(1, num_classes), 2,
                                                   replace=False))
            if frozenset((a, b)) in permitted:
                continue
            excluded.add(frozenset((a, b)))
            cons.append(Constraint(EXCLUSION, a, other=b, d=d))
    if not cons:
        cons.append(Constraint(EXCLUSION, 0, other=1, d=1))
    return ConstraintSet(tuple(cons), num_classes)


def random_conn(rng, ndim, tasks_d):
    if any(d > 1 for d in tasks_d):
        return "box"
    choices = [4, 8, "box"] if ndim == 2 else [6, 26, "box"]
    return choices[int(rng.integers(0, 3))]


def random_likelihood(rng, grid: LabelGrid, margin=0.25):
    """Normalized likelihood whose argmax equals the grid's labels with a
    comfortable per-site margin (keeps finite differences well-posed)."""
    c = grid.num_classes
    noise = rng.uniform(0.05, 0.95, (c,) + grid.dims)
    noise /= noise.sum(axis=0)
    vals = (1 - margin - 0.35) * noise
    idx = np.indices(grid.dims)
    vals[(grid.labels.astype(np.intp),) + tuple(idx)] += margin + 0.35
    vals /= vals.sum(axis=0)
    return LikelihoodGrid(vals, normalized=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20230817)
