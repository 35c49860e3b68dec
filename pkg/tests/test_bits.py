"""Bit-level plumbing: masks, scatter/gather, coalition canonicalization."""
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coalflip.bits import (
    BitVector,
    as_coalition,
    coords_of,
    gather,
    iter_submasks,
    mask_of,
    scatter,
)

coord_sets = st.frozensets(st.integers(0, 15), max_size=16)


@given(coord_sets)
def test_mask_coords_roundtrip(coords):
    assert coords_of(mask_of(coords)) == tuple(sorted(coords))


@given(st.integers(0, (1 << 12) - 1))
def test_submasks_enumerate_exactly_the_subsets(mask):
    subs = list(iter_submasks(mask))
    assert len(subs) == 1 << bin(mask).count("1")
    assert len(set(subs)) == len(subs)
    assert all(sub & ~mask == 0 for sub in subs)
    assert subs == sorted(subs)


@given(coord_sets.map(lambda s: tuple(sorted(s))), st.integers(0, 2**16 - 1))
def test_gather_inverts_scatter(positions, value):
    value &= (1 << len(positions)) - 1
    placed = scatter(value, positions)
    assert gather(placed, positions) == value
    assert placed & ~mask_of(positions) == 0


def test_scatter_places_bits_at_positions():
    assert scatter(0b101, (1, 3, 6)) == (1 << 1) | (1 << 6)


def test_as_coalition_sorts_and_validates():
    assert as_coalition([3, 1], 5) == (1, 3)
    assert as_coalition((), 5) == ()
    with pytest.raises(ValueError):
        as_coalition([5], 5)
    with pytest.raises(ValueError):
        as_coalition([-1], 5)
    with pytest.raises(ValueError):
        as_coalition([2, 2], 5)


@given(st.text(alphabet="01", max_size=20))
def test_bitvector_string_roundtrip(s):
    v = BitVector.from_string(s)
    assert v.to_string() == s
    assert v.weight() == s.count("1")


def test_bitvector_bit_ops():
    v = BitVector.from_string("0110")
    assert [v[i] for i in range(4)] == [0, 1, 1, 0]
    assert v.with_bit(0, 1).to_string() == "1110"
    assert v.with_bit(2, 0).to_string() == "0100"
    with pytest.raises(ValueError):
        BitVector(2, 4)
    with pytest.raises(IndexError):
        v[4]
