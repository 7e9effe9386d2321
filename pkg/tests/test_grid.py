import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topogrid import (
    BinaryMask,
    LabelGrid,
    LikelihoodGrid,
    SegvError,
    argmax_labels,
    class_mask,
    one_hot,
    read_label_grid,
    read_likelihood_grid,
    read_mask,
    write_label_grid,
    write_likelihood_grid,
    write_mask,
    write_pgm,
)

import oracles


# --- type invariants --------------------------------------------------------

def test_label_grid_rejects_out_of_range_labels():
    with pytest.raises(ValueError, match="out of range"):
        LabelGrid(np.array([[0, 7]], dtype=np.uint8), 2)


def test_label_grid_rejects_bad_spacing():
    with pytest.raises(ValueError, match="positive"):
        LabelGrid(np.zeros((2, 2), dtype=np.uint8), 2, (1.0, 0.0))
    with pytest.raises(ValueError, match="entries"):
        LabelGrid(np.zeros((2, 2), dtype=np.uint8), 2, (1.0,))


def test_label_grid_default_spacing_and_immutability():
    g = LabelGrid(np.zeros((3, 4), dtype=np.uint8), 2)
    assert g.spacing == (1.0, 1.0)
    with pytest.raises(ValueError):
        g.labels[0, 0] = 1


def test_likelihood_requires_finite_values():
    bad = np.ones((2, 2, 2))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        LikelihoodGrid(bad)


def test_likelihood_normalized_flag_is_verified():
    vals = np.full((2, 2, 2), 0.5)
    LikelihoodGrid(vals, normalized=True)
    with pytest.raises(ValueError, match="normalized"):
        LikelihoodGrid(vals * 1.1, normalized=True)


# --- class_mask / argmax ----------------------------------------------------

def test_class_mask_examples():
    g = LabelGrid(np.zeros((4, 4), dtype=np.uint8), 3)
    assert not class_mask(g, {1}).bits.any()
    assert class_mask(g, {0, 1, 2}).bits.all()

    labels = np.zeros((3, 3), dtype=np.uint8)
    labels[1, 1] = 2
    g = LabelGrid(labels, 3)
    m = class_mask(g, {2})
    assert m.popcount() == 1 and m.bits[1, 1]


def test_class_mask_rejects_unknown_id():
    g = LabelGrid(np.zeros((2, 2), dtype=np.uint8), 2)
    with pytest.raises(ValueError, match="out of range"):
        class_mask(g, {2})


def test_class_mask_union_is_or(rng):
    from conftest import random_label_grid

    for _ in range(20):
        g = random_label_grid(rng)
        ids = list(range(g.num_classes))
        rng.shuffle(ids)
        cut = int(rng.integers(1, len(ids))) if len(ids) > 1 else 1
        s1, s2 = set(ids[:cut]), set(ids[cut:])
        if not s1 or not s2:
            continue
        lhs = class_mask(g, s1 | s2).bits
        rhs = class_mask(g, s1).bits | class_mask(g, s2).bits
        assert np.array_equal(lhs, rhs)


def test_argmax_inverts_one_hot(rng):
    from conftest import random_label_grid

    for _ in range(20):
        g = random_label_grid(rng)
        got = argmax_labels(one_hot(g))
        assert np.array_equal(got.labels, g.labels)
        assert got.num_classes == g.num_classes


def test_argmax_tie_breaks_to_lowest_index():
    vals = np.full((3, 2, 2), 0.25)
    got = argmax_labels(LikelihoodGrid(vals))
    assert (got.labels == 0).all()


def test_argmax_matches_scalar_loop(rng):
    vals = rng.uniform(0, 1, (2, 4, 4))
    got = argmax_labels(LikelihoodGrid(vals))
    assert np.array_equal(got.labels, oracles.argmax_labels(vals))


# --- SEGV round trips -------------------------------------------------------

def test_segv_label_round_trip(tmp_path, rng):
    from conftest import random_label_grid

    for i in range(25):
        g = random_label_grid(rng, spacing=True)
        path = tmp_path / f"g{i}.segv"
        write_label_grid(g, path)
        back = read_label_grid(path)
        assert np.array_equal(back.labels, g.labels)
        assert back.num_classes == g.num_classes
        # spacing survives the f32 narrowing written to disk
        assert np.allclose(back.spacing, g.spacing, rtol=1e-6)


def test_segv_mask_round_trip(tmp_path, rng):
    for i in range(10):
        bits = rng.random((5, 7)) < 0.4
        m = BinaryMask(bits)
        path = tmp_path / f"m{i}.segv"
        write_mask(m, path)
        assert read_mask(path) == m


def test_segv_likelihood_round_trip_bit_exact(tmp_path, rng):
    for i in range(10):
        vals = rng.uniform(-2, 2, (3, 4, 5)).astype(np.float32)
        f = LikelihoodGrid(vals)
        path = tmp_path / f"f{i}.segv"
        write_likelihood_grid(f, path)
        back = read_likelihood_grid(path)
        assert np.array_equal(
            back.values.astype(np.float32).view(np.uint32),
            vals.view(np.uint32),
        )


def test_segv_write_read_is_byte_stable(tmp_path, rng):
    g = LabelGrid(rng.integers(0, 4, (6, 5)).astype(np.uint8), 4, (0.5, 2.0))
    p1, p2 = tmp_path / "a.segv", tmp_path / "b.segv"
    write_label_grid(g, p1)
    write_label_grid(read_label_grid(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


# --- SEGV error reporting ---------------------------------------------------

def _valid_label_bytes(tmp_path):
    g = LabelGrid(np.array([[0, 1], [1, 0]], dtype=np.uint8), 2)
    path = tmp_path / "ok.segv"
    write_label_grid(g, path)
    return bytearray(path.read_bytes())


def test_segv_bad_magic(tmp_path):
    raw = _valid_label_bytes(tmp_path)
    raw[0:4] = b"NOPE"
    p = tmp_path / "bad.segv"
    p.write_bytes(bytes(raw))
    with pytest.raises(SegvError, match="magic.*offset 0"):
        read_label_grid(p)


def test_segv_label_out_of_range_reports_offset(tmp_path):
    raw = _valid_label_bytes(tmp_path)
    payload_at = len(raw) - 4
    raw[payload_at + 2] = 7
    p = tmp_path / "bad.segv"
    p.write_bytes(bytes(raw))
    with pytest.raises(SegvError, match=f"label 7 out of range.*offset {payload_at + 2}"):
        read_label_grid(p)


def test_segv_truncated_payload_reports_offset(tmp_path):
    raw = _valid_label_bytes(tmp_path)
    p = tmp_path / "bad.segv"
    p.write_bytes(bytes(raw[:-2]))
    with pytest.raises(SegvError, match="truncated"):
        read_label_grid(p)


def test_segv_trailing_bytes_rejected(tmp_path):
    raw = _valid_label_bytes(tmp_path)
    p = tmp_path / "bad.segv"
    p.write_bytes(bytes(raw) + b"x")
    with pytest.raises(SegvError, match="trailing"):
        read_label_grid(p)


def test_segv_kind_mismatch(tmp_path):
    g = LabelGrid(np.zeros((2, 2), dtype=np.uint8), 2)
    p = tmp_path / "labels.segv"
    write_label_grid(g, p)
    with pytest.raises(SegvError, match="kind is labels, expected mask"):
        read_mask(p)


# --- PGM --------------------------------------------------------------------

def test_pgm_reads_declared_classes(tmp_path):
    p = tmp_path / "img.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 1, 1, 0]))
    g = read_label_grid(p, num_classes=2)
    assert g.num_classes == 2
    assert g.spacing == (1.0, 1.0)
    assert np.array_equal(g.labels, np.array([[0, 1], [1, 0]]))


def test_pgm_round_trip(tmp_path, rng):
    for i in range(10):
        g = LabelGrid(rng.integers(0, 5, (4, 6)).astype(np.uint8), 5)
        p = tmp_path / f"rt{i}.pgm"
        write_pgm(g, p)
        back = read_label_grid(p, num_classes=5)
        assert np.array_equal(back.labels, g.labels)


def test_pgm_label_out_of_declared_range(tmp_path):
    p = tmp_path / "img.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 1, 7, 0]))
    with pytest.raises(SegvError, match="label 7 out of range"):
        read_label_grid(p, num_classes=2)


# --- hypothesis round-trip property ----------------------------------------

@st.composite
def label_grids(draw):
    ndim = draw(st.sampled_from([2, 3]))
    dims = tuple(draw(st.integers(1, 9)) for _ in range(ndim))
    c = draw(st.integers(1, 8))
    flat = draw(
        st.lists(st.integers(0, c - 1), min_size=int(np.prod(dims)),
                 max_size=int(np.prod(dims)))
    )
    return LabelGrid(np.array(flat, dtype=np.uint8).reshape(dims), c)


@settings(max_examples=40, deadline=None)
@given(label_grids())
def test_round_trip_property(tmp_path_factory, g):
    path = tmp_path_factory.mktemp("rt") / "g.segv"
    write_label_grid(g, path)
    assert read_label_grid(path) == g
