import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pxpsim.basis import (
    OBC,
    PBC,
    Basis,
    bipartition,
    enumerate_basis,
    expected_dimension,
    fibonacci,
    lucas,
    neel_config,
)


def brute_force_configs(n, boundary):
    """Independent oracle: filter bitstrings by scanning their characters."""
    kept = []
    for value in range(2**n):
        bits = [(value >> j) & 1 for j in range(n)]
        ok = all(not (bits[j] and bits[j + 1]) for j in range(n - 1))
        if boundary == PBC and bits[0] and bits[n - 1]:
            ok = False
        if ok:
            kept.append(value)
    return kept


@pytest.mark.parametrize("boundary", [OBC, PBC])
def test_enumeration_matches_brute_force(boundary):
    start = 1 if boundary == OBC else 3
    for n in range(start, 13):
        basis = enumerate_basis(n, boundary)
        assert list(basis.configs) == brute_force_configs(n, boundary)


def test_dimensions_follow_recurrences():
    fib = [1, 1]
    while len(fib) < 32:
        fib.append(fib[-1] + fib[-2])
    luc = [1, 3]
    while len(luc) < 30:
        luc.append(luc[-1] + luc[-2])
    for n in range(1, 29):
        assert expected_dimension(n, OBC) == fib[n + 1]  # F_{n+2}, F_1 at index 0
        assert fibonacci(n) == fib[n - 1]
        if n >= 3:
            assert expected_dimension(n, PBC) == luc[n - 1]
            assert lucas(n) == luc[n - 1]
    for n in (1, 4, 9, 14):
        assert enumerate_basis(n, OBC).dim == expected_dimension(n, OBC)
    for n in (3, 7, 12):
        assert enumerate_basis(n, PBC).dim == expected_dimension(n, PBC)


def test_examples_n4():
    basis = enumerate_basis(4, OBC)
    assert basis.dim == 8
    assert sorted(basis.config_string(c) for c in basis.configs) == sorted(
        ["0000", "1000", "0100", "0010", "1010", "0001", "1001", "0101"]
    )
    pbc = enumerate_basis(4, PBC)
    assert pbc.dim == 7
    # the wrap-adjacent configuration is the one dropped
    assert set(basis.configs) - set(pbc.configs) == {0b1001}
    single = enumerate_basis(1, OBC)
    assert list(single.configs) == [0, 1]


def test_rank_examples():
    basis = enumerate_basis(4, OBC)
    assert basis.rank(0b0000) == 0
    assert basis.rank(0b1010) == 7  # largest allowed bitmask comes last
    with pytest.raises(ValueError):
        basis.rank(0b0011)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(min_value=1, max_value=14), data=st.data())
def test_rank_unrank_roundtrip(n, data):
    basis = enumerate_basis(n, OBC)
    i = data.draw(st.integers(min_value=0, max_value=basis.dim - 1))
    assert basis.rank(basis.configs[i]) == i


def test_neel_config():
    assert neel_config(4) == 0b0101  # sites 0 and 2 excited
    assert neel_config(6) == 0b010101
    with pytest.raises(ValueError):
        neel_config(5)


def test_size_validation():
    with pytest.raises(ValueError):
        enumerate_basis(0, OBC)
    with pytest.raises(ValueError):
        enumerate_basis(2, PBC)
    with pytest.raises(ValueError):
        enumerate_basis(4, "ring")


def test_bipartition_examples():
    bmap = bipartition(enumerate_basis(4, OBC), 2)
    assert bmap.left.dim == 3 and bmap.right.dim == 3
    assert bmap.pair_count == 8
    pairs = set(zip(bmap.left_index, bmap.right_index))
    # the excluded pair is left=01 (site 1 up) against right=10 (site 2 up)
    assert (bmap.left.rank(0b10), bmap.right.rank(0b01)) not in pairs

    bmap2 = bipartition(enumerate_basis(2, OBC), 1)
    assert sorted(zip(bmap2.left_index, bmap2.right_index)) == [(0, 0), (0, 1), (1, 0)]

    assert bipartition(enumerate_basis(4, PBC), 2).pair_count == 7


@pytest.mark.parametrize("boundary", [OBC, PBC])
def test_bipartition_pair_count_and_reassembly(boundary):
    start = 2 if boundary == OBC else 4
    for n in range(start, 11):
        basis = enumerate_basis(n, boundary)
        for cut in range(1, n):
            bmap = bipartition(basis, cut)
            assert bmap.pair_count == basis.dim
            rebuilt = bmap.left.configs[bmap.left_index] | (
                bmap.right.configs[bmap.right_index] << cut
            )
            assert np.array_equal(rebuilt, basis.configs)
            # seam rule: touching bits never both set; wrap rule for rings
            left_last = (bmap.left.configs[bmap.left_index] >> (cut - 1)) & 1
            right_first = bmap.right.configs[bmap.right_index] & 1
            assert not np.any(left_last & right_first)
            if boundary == PBC:
                left_first = bmap.left.configs[bmap.left_index] & 1
                right_last = (bmap.right.configs[bmap.right_index] >> (n - cut - 1)) & 1
                assert not np.any(left_first & right_last)


def test_bipartition_cut_validation():
    basis = enumerate_basis(6, OBC)
    for cut in (0, 6, -1):
        with pytest.raises(ValueError):
            bipartition(basis, cut)


def test_site_mask_and_strings():
    basis = enumerate_basis(5, OBC)
    for site in range(5):
        mask = basis.site_mask(site)
        assert np.array_equal(mask, ((basis.configs >> site) & 1).astype(bool))
    assert basis.config_string(0b00101) == "10100"  # site 0 leftmost
