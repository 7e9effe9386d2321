import numpy as np
import pytest

from topogrid import (
    CONTAINMENT,
    EXCLUSION,
    Constraint,
    ConstraintSet,
    LabelGrid,
    argmax_labels,
    choose_algorithm,
    class_mask,
    detect,
    detect_conv,
    detect_naive,
    one_hot,
    reduce,
)
from topogrid.constraints import ConnectivityKernel

import oracles
from conftest import random_conn, random_constraint_set, random_label_grid

ALL = ("naive", "shifted", "conv_direct", "conv_fft")


def run(g, cs, conn, algorithm):
    return detect(g, cs, conn, algorithm=algorithm)


def ring_grid():
    """Beta ring around a single alpha site, with one wall hole."""
    labels = np.zeros((5, 5), dtype=np.uint8)
    labels[1:4, 1:4] = 2
    labels[2, 2] = 1
    labels[2, 3] = 0
    return LabelGrid(labels, 3)


CONTAIN_1_IN_2 = ConstraintSet((Constraint(CONTAINMENT, 1, outer=2),), 3)


# --- worked examples ---------------------------------------------------------

@pytest.mark.parametrize("algorithm", ALL)
def test_ring_hole_flags_alpha_and_hole(algorithm):
    res = run(ring_grid(), CONTAIN_1_IN_2, 4, algorithm)
    flagged = sorted(map(tuple, np.argwhere(res.mask.bits)))
    assert flagged == [(2, 2), (2, 3)]
    assert res.violation_count == 2
    assert res.foreground_count == 8
    (task, va, vc) = res.per_task[0]
    assert sorted(map(tuple, np.argwhere(va.bits))) == [(2, 2)]
    assert sorted(map(tuple, np.argwhere(vc.bits))) == [(2, 3)]


@pytest.mark.parametrize("algorithm", ALL)
def test_uniform_grid_is_clean(algorithm):
    g = LabelGrid(np.full((6, 6), 2, dtype=np.uint8), 3)
    res = run(g, CONTAIN_1_IN_2, 8, algorithm)
    assert res.violation_count == 0
    assert not res.mask.bits.any()
    assert res.foreground_count == 36


@pytest.mark.parametrize("algorithm", ALL)
def test_thick_wall_satisfies_wide_containment(algorithm):
    d = 2
    labels = np.zeros((11, 11), dtype=np.uint8)
    labels[2:9, 2:9] = 2
    labels[4:7, 4:7] = 1
    g = LabelGrid(labels, 3)
    cs = ConstraintSet((Constraint(CONTAINMENT, 1, outer=2, d=d),), 3)
    res = run(g, cs, "box", algorithm)
    assert res.violation_count == 0


def test_single_row_exclusion_flags_both():
    labels = np.array([[1, 2]], dtype=np.uint8)
    # 1-row grids are below the 2D minimum of the lattice types, so embed it
    grid = np.zeros((3, 4), dtype=np.uint8)
    grid[1, 1:3] = labels
    g = LabelGrid(grid, 3)
    cs = ConstraintSet((Constraint(EXCLUSION, 1, other=2),), 3)
    res = detect_naive(g, reduce(cs, 4, 2))
    assert sorted(map(tuple, np.argwhere(res.mask.bits))) == [(1, 1), (1, 2)]


def test_empty_task_list_yields_empty_mask():
    g = ring_grid()
    res = detect_naive(g, [])
    assert not res.mask.bits.any()
    assert res.per_task == ()
    assert res.violation_count == 0


# --- oracle and cross-algorithm equality -------------------------------------

def test_matches_independent_scan_oracle(rng):
    for _ in range(40):
        g = random_label_grid(rng, max_extent=9)
        cs = random_constraint_set(rng, g.num_classes)
        conn = random_conn(rng, g.ndim, [c.d for c in cs.constraints])
        tasks = reduce(cs, conn, g.ndim)
        res = detect_naive(g, tasks)
        expected = np.zeros(g.dims, dtype=bool)
        for task, va, vc in res.per_task:
            offs = oracles.kernel_offsets(task.kernel.weights)
            oa, oc = oracles.critical_sides(g.labels, task.ids_a, task.ids_c, offs)
            assert np.array_equal(va.bits, oa)
            assert np.array_equal(vc.bits, oc)
            expected |= oa | oc
        assert np.array_equal(res.mask.bits, expected)


def test_all_algorithms_agree_bitwise(rng):
    for _ in range(60):
        g = random_label_grid(rng)
        cs = random_constraint_set(rng, g.num_classes)
        conn = random_conn(rng, g.ndim, [c.d for c in cs.constraints])
        results = [run(g, cs, conn, a) for a in ALL]
        base = results[0]
        for other in results[1:]:
            assert other.mask == base.mask
            assert other.violation_count == base.violation_count
            for (t1, va1, vc1), (t2, va2, vc2) in zip(base.per_task, other.per_task):
                assert va1 == va2
                assert vc1 == vc2


# --- spec properties ----------------------------------------------------------

def test_flags_only_a_or_c_sites(rng):
    for _ in range(20):
        g = random_label_grid(rng)
        cs = random_constraint_set(rng, g.num_classes)
        conn = random_conn(rng, g.ndim, [c.d for c in cs.constraints])
        res = detect(g, cs, conn)
        for task, va, vc in res.per_task:
            assert not (va.bits & ~class_mask(g, task.ids_a).bits).any()
            assert not (vc.bits & ~class_mask(g, task.ids_c).bits).any()


def test_kernel_center_weight_is_irrelevant(rng):
    for _ in range(15):
        g = random_label_grid(rng, ndim=2)
        cs = random_constraint_set(rng, g.num_classes, max_d=1)
        tasks = reduce(cs, 8, 2)
        flipped = []
        for t in tasks:
            w = t.kernel.weights.copy()
            center = tuple(n // 2 for n in w.shape)
            w[center] ^= 1
            flipped.append(type(t)(t.ids_a, t.ids_c, t.d, ConnectivityKernel(w)))
        res_a = detect_naive(g, tasks)
        res_b = detect_naive(g, flipped)
        assert res_a.mask == res_b.mask
        res_c = detect_conv(g, flipped, backend="direct")
        assert res_c.mask == res_a.mask


def test_flagging_is_symmetric(rng):
    # every flagged A site must lie within kernel reach of a flagged C site
    from scipy import ndimage

    for _ in range(20):
        g = random_label_grid(rng)
        cs = random_constraint_set(rng, g.num_classes)
        conn = random_conn(rng, g.ndim, [c.d for c in cs.constraints])
        res = detect(g, cs, conn)
        for task, va, vc in res.per_task:
            k = task.kernel.weights.astype(np.int32)
            reach_c = ndimage.convolve(vc.bits.astype(np.int32), k,
                                       mode="constant", cval=0) > 0
            reach_a = ndimage.convolve(va.bits.astype(np.int32), k,
                                       mode="constant", cval=0) > 0
            assert not (va.bits & ~reach_c).any()
            assert not (vc.bits & ~reach_a).any()


def test_monotone_in_width(rng):
    for _ in range(15):
        g = random_label_grid(rng, max_extent=10)
        a, b = (int(x) for x in rng.choice(np.arange(1, g.num_classes), 2, replace=False)) \
            if g.num_classes >= 3 else (0, 1)
        prev = None
        for d in (1, 2, 3):
            cs = ConstraintSet((Constraint(EXCLUSION, a, other=b, d=d),), g.num_classes)
            v = detect(g, cs, "box").mask.bits
            if prev is not None:
                assert not (prev & ~v).any()  # widening never unflags
            prev = v


def test_locality_of_relabeling(rng):
    for _ in range(15):
        g = random_label_grid(rng, ndim=2, max_extent=10)
        cs = random_constraint_set(rng, g.num_classes)
        conn = random_conn(rng, g.ndim, [c.d for c in cs.constraints])
        d_max = max((c.d for c in cs.constraints), default=1)
        before = detect(g, cs, conn).mask.bits

        site = tuple(int(rng.integers(0, n)) for n in g.dims)
        labels = g.labels.copy()
        labels[site] = (int(labels[site]) + 1) % g.num_classes
        after = detect(LabelGrid(labels, g.num_classes), cs, conn).mask.bits

        far = np.ones(g.dims, dtype=bool)
        ball = tuple(
            slice(max(0, s - d_max), min(n, s + d_max + 1))
            for s, n in zip(site, g.dims)
        )
        far[ball] = False
        assert np.array_equal(before & far, after & far)


def test_detect_on_argmax_matches_labels(rng):
    for _ in range(10):
        g = random_label_grid(rng)
        cs = random_constraint_set(rng, g.num_classes)
        conn = random_conn(rng, g.ndim, [c.d for c in cs.constraints])
        direct = detect(g, cs, conn)
        via_argmax = detect(argmax_labels(one_hot(g)), cs, conn)
        assert direct.mask == via_argmax.mask


def test_tiling_independence(rng):
    for threads in (2, 3, 5):
        g = random_label_grid(rng, ndim=2, max_extent=12)
        cs = random_constraint_set(rng, g.num_classes)
        conn = random_conn(rng, g.ndim, [c.d for c in cs.constraints])
        base = detect(g, cs, conn, threads=1)
        tiled = detect(g, cs, conn, threads=threads)
        assert base.mask == tiled.mask
        assert base.violation_count == tiled.violation_count


def test_neighbor_counts_backends_agree(rng):
    from topogrid.constraints import build_kernel
    from topogrid.detect import neighbor_counts

    for _ in range(12):
        ndim = int(rng.choice([2, 3]))
        dims = tuple(rng.integers(3, 12 if ndim == 2 else 7, ndim))
        m_a = rng.random(dims) < 0.4
        m_c = rng.random(dims) < 0.4
        conn, d = [(4, 1), (8, 1), ("box", 2)][int(rng.integers(0, 3))] if ndim == 2 \
            else [(6, 1), (26, 1), ("box", 2)][int(rng.integers(0, 3))]
        kernel = build_kernel(ndim, conn, d)
        na_d, nc_d = neighbor_counts(m_a, m_c, kernel, "direct")
        na_f, nc_f = neighbor_counts(m_a, m_c, kernel, "fft")
        assert np.array_equal(na_d.counts, na_f.counts)
        assert np.array_equal(nc_d.counts, nc_f.counts)
        assert na_d.max_count == kernel.popcount
        assert int(na_d.counts.max(initial=0)) <= kernel.popcount


# --- dispatcher ---------------------------------------------------------------

def test_auto_rule():
    assert choose_algorithm(11, 512 * 512) == "conv_fft"   # wide kernel
    assert choose_algorithm(3, 16 * 16) == "conv_direct"   # small everything
    assert choose_algorithm(3, 1 << 21) == "conv_fft"      # huge lattice


def test_detect_rejects_mismatched_classes():
    g = LabelGrid(np.zeros((3, 3), dtype=np.uint8), 4)
    with pytest.raises(ValueError, match="classes"):
        detect(g, CONTAIN_1_IN_2, 8)


def test_detect_rejects_unknown_algorithm():
    with pytest.raises(ValueError, match="algorithm"):
        detect(ring_grid(), CONTAIN_1_IN_2, 8, algorithm="quantum")


def test_task_ndim_mismatch():
    tasks = reduce(CONTAIN_1_IN_2, 26, 3)
    with pytest.raises(ValueError, match="3D"):
        detect_naive(ring_grid(), tasks)
