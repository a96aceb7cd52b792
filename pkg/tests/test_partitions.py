"""Exact combinatorics tests."""

import math

import pytest

from sinebeta.partitions import (
    MAX_ENUM_K,
    SetPartition,
    bell,
    enumerate_partitions,
    mobius_truncation_weights,
    ordered_bell,
    partitions_of,
    stirling2,
)

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975]
FUBINI = [1, 1, 3, 13, 75, 541, 4683, 47293, 545835, 7087261, 102247563]


def test_set_partition_canonical_form():
    p = SetPartition([[2, 0], [1]])
    assert p.blocks == ((0, 2), (1,))
    assert p.k == 3
    assert p.n_blocks == 2
    # same content in any order hashes and compares equal
    assert p == SetPartition([(1,), (0, 2)])


def test_set_partition_validation():
    with pytest.raises(ValueError):
        SetPartition([])
    with pytest.raises(ValueError):
        SetPartition([[0], []])
    with pytest.raises(ValueError):
        SetPartition([[0, 0], [1]])
    with pytest.raises(ValueError):
        SetPartition([[0], [2]])  # gap


def test_enumerate_counts_match_bell():
    for k in range(1, 9):
        parts = enumerate_partitions(k)
        assert len(parts) == BELL[k]
        assert len(set(parts)) == len(parts)
        assert all(p.k == k for p in parts)


def test_enumerate_first_and_order():
    parts = enumerate_partitions(3)
    # restricted-growth order starts with the one-block partition
    assert parts[0] == SetPartition([[0, 1, 2]])
    assert parts[-1] == SetPartition([[0], [1], [2]])


def test_enumerate_partitions_range():
    with pytest.raises(ValueError):
        enumerate_partitions(0)
    with pytest.raises(ValueError):
        enumerate_partitions(MAX_ENUM_K + 1)


def test_partitions_of_arbitrary_labels():
    got = list(partitions_of((4, 7)))
    assert got == [((4, 7),), ((4,), (7,))]
    assert list(partitions_of(())) == []
    # non-integer labels work too; blocks are plain tuples
    labelled = list(partitions_of(("a", "b")))
    assert labelled[1] == (("a",), ("b",))


def test_stirling_values():
    assert stirling2(3, 2) == 3
    assert stirling2(4, 2) == 7
    assert stirling2(5, 3) == 25
    assert stirling2(0, 0) == 1
    assert stirling2(6, 0) == 0
    # column sums reproduce Bell numbers
    for k in range(11):
        assert bell(k) == BELL[k]


def test_stirling_range_checks():
    with pytest.raises(OverflowError):
        stirling2(21, 3)
    with pytest.raises(ValueError):
        stirling2(4, 5)
    with pytest.raises(OverflowError):
        bell(21)


def test_ordered_bell_values_and_identity():
    for k in range(len(FUBINI)):
        assert ordered_bell(k) == FUBINI[k]
    # a(k) = sum_{i} C(k,i) a(k-i) recursion spot check
    k = 6
    rec = sum(math.comb(k, i) * ordered_bell(k - i) for i in range(1, k + 1))
    assert rec == ordered_bell(k)


def test_mobius_weights_structure():
    for k in range(1, 7):
        weights = dict(mobius_truncation_weights(k))
        assert len(weights) == BELL[k]
        # the one-block partition always carries weight (-1)^0 0! = 1
        one_block = SetPartition([list(range(k))])
        assert weights[one_block] == 1
        # total absolute weight identity: sum_j S(k,j) (j-1)!
        total = sum(abs(w) for w in weights.values())
        if k == 1:
            assert total == 1
        else:
            assert total == 2 * ordered_bell(k - 1)


def test_mobius_weights_sum_to_delta():
    # sum over partitions of prod over blocks of 1 gives:
    # sum_j S(k,j) (-1)^(j-1) (j-1)!  which is 1 for k = 1 and 0 for k >= 2
    # (truncation of a constant field); frozen expected values below.
    for k, expect in [(1, 1), (2, 0), (3, 0), (4, 0), (5, 0), (6, 0)]:
        total = sum(w for _, w in mobius_truncation_weights(k))
        assert total == expect


def test_mobius_weights_range():
    with pytest.raises(ValueError):
        mobius_truncation_weights(0)
    with pytest.raises(ValueError):
        mobius_truncation_weights(11)


def test_ordered_bell_asymptotic():
    # ordered_bell(k) ~ k! / (2 (ln 2)^{k+1})
    k = 15
    approx = math.factorial(k) / (2.0 * math.log(2.0) ** (k + 1))
    assert abs(ordered_bell(k) / approx - 1.0) < 0.05
