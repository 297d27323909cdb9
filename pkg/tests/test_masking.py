import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsifn.masking import (
    INTER_ALL,
    INTRA,
    STRUCTURES,
    BlockMask,
    SegLengths,
    all_visible,
    block_pattern,
    gen_interlaced_mask,
    gen_structure_mask,
    mask_from_pattern,
    transcribed_mask,
)
from gsifn.tensor import NEG_INF

# Independent transcription of the block matrices, one row per target modality
# (t, v, a); "O" marks a visible block and "J" a hidden one.
GRIDS = {
    ("original", "forward"): "JOJ JJO OJJ",
    ("original", "backward"): "JJO OJJ JOJ",
    ("structure1", "forward"): "JJO JJO OJJ",
    ("structure1", "backward"): "JOJ OJJ OJJ",
    ("structure2", "forward"): "JOJ OJJ JOJ",
    ("structure2", "backward"): "JJO JJO OJJ",
    ("structure3", "forward"): "JOJ JJO JOJ",
    ("structure3", "backward"): "JJO OJJ OJJ",
    ("self_only", "forward"): "JOO OJO OOJ",
    ("self_only", "backward"): "JOO OJO OOJ",
}


def grid(text: str) -> np.ndarray:
    return np.array([[c == "O" for c in row] for row in text.split()])


def visible(mask: BlockMask) -> set:
    return mask.visible_blocks()


seg_strategy = st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))


def test_ifm_forward_example():
    assert visible(gen_interlaced_mask((2, 1, 1), "inter", "forward")) == {("t", "v"), ("v", "a"), ("a", "t")}


def test_ifm_backward_example():
    assert visible(gen_interlaced_mask((2, 1, 1), "inter", "backward")) == {("t", "a"), ("v", "t"), ("a", "v")}


def test_iem_example():
    assert visible(gen_interlaced_mask((3, 2, 2), "intra")) == {("t", "t"), ("v", "v"), ("a", "a")}


def test_intra_ignores_direction():
    assert gen_interlaced_mask((3, 2, 2), "intra", "forward") == gen_interlaced_mask((3, 2, 2), "intra", "backward")


def test_dense_layout_by_hand():
    m = gen_interlaced_mask((2, 1, 1), "inter", "forward").matrix
    h = NEG_INF
    expected = np.array([
        [h, h, 0, h],
        [h, h, 0, h],
        [h, h, h, 0],
        [0, 0, h, h],
    ], dtype=np.float32)
    assert np.array_equal(m, expected)


@pytest.mark.parametrize("key", sorted(GRIDS))
def test_structure_grids_match_transcription(key):
    structure, direction = key
    mask = gen_structure_mask((1, 1, 1), structure, direction)
    assert np.array_equal(mask.pattern, grid(GRIDS[key]))
    assert np.array_equal(block_pattern(mask.matrix, (1, 1, 1)), grid(GRIDS[key]))


def test_self_only_sees_every_other_modality():
    mask = gen_structure_mask((1, 1, 1), "self_only")
    assert visible(mask) == {(i, j) for i in "tva" for j in "tva" if i != j}


def test_original_structure_equals_interlaced():
    for direction in ("forward", "backward"):
        assert gen_structure_mask((1, 1, 1), "original", direction) == gen_interlaced_mask((1, 1, 1), "inter", direction)


def test_structure_list_is_closed():
    assert set(STRUCTURES) == {k[0] for k in GRIDS}
    with pytest.raises(ValueError, match="unknown structure"):
        gen_structure_mask((1, 1, 1), "structure4")


@pytest.mark.parametrize("seg", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (-1, 2, 2)])
def test_zero_length_rejected(seg):
    with pytest.raises(ValueError):
        gen_interlaced_mask(seg)


def test_bad_mode_rejected():
    with pytest.raises(ValueError):
        gen_interlaced_mask((1, 1, 1), "cross")
    with pytest.raises(ValueError):
        gen_interlaced_mask((1, 1, 1), "inter", "sideways")


def test_block_pattern_probes():
    assert np.array_equal(block_pattern(gen_interlaced_mask((2, 2, 2), "intra")), np.eye(3, dtype=bool))
    assert block_pattern(all_visible((2, 3, 1))).all()


def test_non_uniform_block_rejected():
    m = all_visible((2, 2, 2)).matrix.copy()
    m[0, 3] = NEG_INF
    with pytest.raises(ValueError, match="non-uniform block"):
        block_pattern(m, (2, 2, 2))


def test_mask_shape_must_match_seg():
    with pytest.raises(ValueError):
        block_pattern(np.zeros((4, 4)), (2, 2, 1))
    with pytest.raises(ValueError):
        mask_from_pattern((1, 1, 1), np.ones((2, 2)))


@settings(max_examples=60, deadline=None)
@given(seg_strategy)
def test_ifm_properties(seg):
    fwd = gen_interlaced_mask(seg, "inter", "forward")
    bwd = gen_interlaced_mask(seg, "inter", "backward")
    intra = gen_interlaced_mask(seg, "intra")
    for m in (fwd, bwd):
        p = m.pattern
        assert p.sum(axis=0).tolist() == [1, 1, 1]
        assert p.sum(axis=1).tolist() == [1, 1, 1]
        assert not p.diagonal().any()
    assert np.array_equal(fwd.pattern, bwd.pattern.T)
    cover = fwd.pattern.astype(int) + bwd.pattern.astype(int) + intra.pattern.astype(int)
    assert np.array_equal(cover, np.ones((3, 3), dtype=int))
    assert m.matrix.shape == (sum(seg), sum(seg))
    assert set(np.unique(fwd.matrix)) <= {0.0, np.float32(NEG_INF)}


@settings(max_examples=40, deadline=None)
@given(seg_strategy)
def test_row_construction_matches_block_transcription(seg):
    for mode, direction in (("inter", "forward"), ("inter", "backward"), ("intra", "forward")):
        assert gen_interlaced_mask(seg, mode, direction) == transcribed_mask(seg, mode, direction)


def test_intra_and_inter_partition_blocks():
    assert not (INTRA & INTER_ALL).any()
    assert (INTRA | INTER_ALL).all()


def test_generation_is_pure():
    a = gen_structure_mask((3, 4, 5), "structure3", "backward")
    b = gen_structure_mask((3, 4, 5), "structure3", "backward")
    assert a.matrix.tobytes() == b.matrix.tobytes()


def test_seg_lengths_total_and_bounds():
    s = SegLengths.of((2, 3, 4))
    assert s.total == 9
    assert s.bounds() == [(0, 2), (2, 5), (5, 9)]
