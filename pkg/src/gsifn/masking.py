"""Interlaced block masks over the concatenated (text, vision, audio) sequence.

A mask is additive: visible entries are 0 and hidden entries are
:data:`~gsifn.tensor.NEG_INF`. Every mask is constant on each of the 3x3
modality blocks, so it is fully described by a boolean block pattern where
``pattern[i, j]`` means rows of modality ``i`` may attend to (aggregate from)
columns of modality ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .tensor import NEG_INF

MODALITIES = ("t", "v", "a")
STRUCTURES = ("original", "structure1", "structure2", "structure3", "self_only")

Mode = Literal["inter", "intra"]
Direction = Literal["forward", "backward"]


@dataclass(frozen=True)
class SegLengths:
    t: int
    v: int
    a: int

    def __post_init__(self):
        for name in MODALITIES:
            n = getattr(self, name)
            if int(n) != n or n < 1:
                raise ValueError(f"segment length for '{name}' must be a positive integer, got {n}")

    @classmethod
    def of(cls, seg) -> "SegLengths":
        if isinstance(seg, SegLengths):
            return seg
        t, v, a = seg
        return cls(int(t), int(v), int(a))

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.t, self.v, self.a)

    @property
    def total(self) -> int:
        return self.t + self.v + self.a

    def bounds(self) -> list[tuple[int, int]]:
        t, v, a = self.as_tuple()
        return [(0, t), (t, t + v), (t + v, t + v + a)]


@dataclass(frozen=True, eq=False)
class BlockMask:
    matrix: np.ndarray  # (total, total) additive mask
    pattern: np.ndarray  # (3, 3) bool, True = visible
    seg: SegLengths

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BlockMask)
            and self.seg == other.seg
            and np.array_equal(self.pattern, other.pattern)
            and np.array_equal(self.matrix, other.matrix)
        )

    def visible_blocks(self) -> set[tuple[str, str]]:
        return {(MODALITIES[i], MODALITIES[j]) for i, j in zip(*np.nonzero(self.pattern))}


def mask_from_pattern(seg, pattern, dtype=np.float32) -> BlockMask:
    """Expand a 3x3 visibility grid into a dense additive mask."""
    seg = SegLengths.of(seg)
    pattern = np.asarray(pattern, dtype=bool)
    if pattern.shape != (3, 3):
        raise ValueError(f"block pattern must be 3x3, got {pattern.shape}")
    lengths = seg.as_tuple()
    visible = np.repeat(np.repeat(pattern, lengths, axis=0), lengths, axis=1)
    matrix = np.where(visible, 0.0, NEG_INF).astype(dtype)
    return BlockMask(matrix, pattern.copy(), seg)


def block_pattern(mask: BlockMask | np.ndarray, seg=None) -> np.ndarray:
    """Recover the 3x3 visibility grid of a dense mask, checking block uniformity."""
    if isinstance(mask, BlockMask):
        matrix, seg = mask.matrix, mask.seg
    else:
        matrix = np.asarray(mask)
        if seg is None:
            raise ValueError("seg lengths are required for a bare mask matrix")
    seg = SegLengths.of(seg)
    if matrix.shape != (seg.total, seg.total):
        raise ValueError(f"mask shape {matrix.shape} does not match total length {seg.total}")
    visible = matrix > NEG_INF / 2
    grid = np.zeros((3, 3), dtype=bool)
    for i, (r0, r1) in enumerate(seg.bounds()):
        for j, (c0, c1) in enumerate(seg.bounds()):
            block = visible[r0:r1, c0:c1]
            if block.all():
                grid[i, j] = True
            elif block.any():
                raise ValueError(f"non-uniform block ({MODALITIES[i]},{MODALITIES[j]})")
    return grid


def _interlaced_rows(seg: SegLengths, mode: Mode, direction: Direction) -> np.ndarray:
    """Row-by-row construction: ones mark hidden columns, zeros visible ones (inter mode)."""
    l_t, l_v, l_a = seg.as_tuple()
    s1, s2, s3 = (0, l_t), (l_t, l_t + l_v), (l_t + l_v, l_t + l_v + l_a)
    l_sum = seg.total
    rows = []
    for i, n in enumerate(seg.as_tuple()):
        for _ in range(n):
            m_row = np.ones(l_sum)
            if i == 0:
                m_row[0:s1[1]] = 0
                if mode == "inter":
                    if direction == "forward":
                        m_row[s3[0]:] = 0
                    else:
                        m_row[s2[0]:s2[1]] = 0
            elif i == 1:
                m_row[s2[0]:s2[1]] = 0
                if mode == "inter":
                    if direction == "forward":
                        m_row[0:s1[1]] = 0
                    else:
                        m_row[s3[0]:] = 0
            else:
                m_row[s3[0]:s3[1]] = 0
                if mode == "inter":
                    if direction == "forward":
                        m_row[s2[0]:s2[1]] = 0
                    else:
                        m_row[0:s1[1]] = 0
            rows.append(m_row)
    return np.stack(rows)


def _encode(ones_zeros: np.ndarray, dtype) -> np.ndarray:
    # ones -> visible (0), zeros -> hidden (NEG_INF)
    return np.where(ones_zeros == 1, 0.0, NEG_INF).astype(dtype)


def _check_mode(mode: str, direction: str) -> None:
    if mode not in ("inter", "intra"):
        raise ValueError(f"unknown mask mode '{mode}'")
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction '{direction}'")


def gen_interlaced_mask(seg, mode: Mode = "inter", direction: Direction = "forward", dtype=np.float32) -> BlockMask:
    """Interlaced mask built row by row: IFM for ``inter``, IEM for ``intra``.

    ``direction`` is ignored in ``intra`` mode.
    """
    seg = SegLengths.of(seg)
    _check_mode(mode, direction)
    m = _interlaced_rows(seg, mode, direction)
    if mode == "intra":
        m = np.abs(m - 1)
    matrix = _encode(m, dtype)
    return BlockMask(matrix, block_pattern(matrix, seg), seg)


# Visibility grids transcribed from the block matrices; rows/cols in (t, v, a) order.
_O, _J = True, False
_GRIDS: dict[str, dict[str, tuple]] = {
    "original": {
        "forward": ((_J, _O, _J), (_J, _J, _O), (_O, _J, _J)),
        "backward": ((_J, _J, _O), (_O, _J, _J), (_J, _O, _J)),
    },
    "structure1": {
        "forward": ((_J, _J, _O), (_J, _J, _O), (_O, _J, _J)),
        "backward": ((_J, _O, _J), (_O, _J, _J), (_O, _J, _J)),
    },
    "structure2": {
        "forward": ((_J, _O, _J), (_O, _J, _J), (_J, _O, _J)),
        "backward": ((_J, _J, _O), (_J, _J, _O), (_O, _J, _J)),
    },
    "structure3": {
        "forward": ((_J, _O, _J), (_J, _J, _O), (_J, _O, _J)),
        "backward": ((_J, _J, _O), (_O, _J, _J), (_O, _J, _J)),
    },
    "self_only": {
        "forward": ((_J, _O, _O), (_O, _J, _O), (_O, _O, _J)),
        "backward": ((_J, _O, _O), (_O, _J, _O), (_O, _O, _J)),
    },
}
INTER_ALL = np.array(_GRIDS["self_only"]["forward"], dtype=bool)  # every off-diagonal block
INTRA = ~INTER_ALL


def structure_pattern(structure: str, direction: Direction = "forward") -> np.ndarray:
    if structure not in _GRIDS:
        raise ValueError(f"unknown structure id '{structure}'; expected one of {STRUCTURES}")
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction '{direction}'")
    return np.array(_GRIDS[structure][direction], dtype=bool)


def gen_structure_mask(seg, structure: str = "original", direction: Direction = "forward", dtype=np.float32) -> BlockMask:
    """Inter-fusion mask for one of the graph-structure variants."""
    return mask_from_pattern(seg, structure_pattern(structure, direction), dtype)


def transcribed_mask(seg, mode: Mode, direction: Direction = "forward", dtype=np.float32) -> BlockMask:
    """Same masks as :func:`gen_interlaced_mask`, expanded from the block grids directly."""
    _check_mode(mode, direction)
    grid = INTRA if mode == "intra" else structure_pattern("original", direction)
    return mask_from_pattern(seg, grid, dtype)


def all_visible(seg, dtype=np.float32) -> BlockMask:
    return mask_from_pattern(seg, np.ones((3, 3), dtype=bool), dtype)
