"""Set partitions and the truncation weights built on them.

Truncated correlation functions are alternating sums over set partitions:
the k-point truncation carries weight (-1)^(j-1) (j-1)! on every partition
with j blocks, and recomposition sums plain products over all partitions.
Everything here is exact integer / tuple arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

__all__ = [
    "SetPartition",
    "enumerate_partitions",
    "partitions_of",
    "stirling2",
    "bell",
    "ordered_bell",
    "mobius_truncation_weights",
]

#: Enumeration beyond this size is refused rather than attempted.
MAX_ENUM_K = 12

#: Exact-integer helpers are range-checked to keep misuse loud.
MAX_EXACT_K = 20


@dataclass(frozen=True)
class SetPartition:
    """Partition of {0, .., k-1} into disjoint blocks.

    Canonical form: elements ascending inside each block, blocks ordered by
    their least element.  The constructor normalises and validates.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __init__(self, blocks) -> None:
        inner = [tuple(sorted(b)) for b in blocks]
        if not inner or any(len(b) == 0 for b in inner):
            raise ValueError("blocks must be non-empty")
        norm = tuple(sorted(inner, key=lambda b: b[0]))
        seen = [e for b in norm for e in b]
        if sorted(seen) != list(range(len(seen))):
            raise ValueError("blocks must partition {0..k-1} exactly")
        object.__setattr__(self, "blocks", norm)

    @property
    def k(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


def partitions_of(items):
    """Yield partitions of an arbitrary item tuple in restricted-growth order.

    Blocks are plain tuples of the given items (which need not be integers);
    use :func:`enumerate_partitions` for the canonical {0..k-1} form.
    """
    items = tuple(items)
    k = len(items)
    if k == 0:
        return
    # restricted growth strings: a[i] <= 1 + max(a[:i])
    a = [0] * k
    while True:
        n_blocks = max(a) + 1
        blocks = [[] for _ in range(n_blocks)]
        for idx, lab in zip(items, a):
            blocks[lab].append(idx)
        yield tuple(tuple(b) for b in blocks)
        i = k - 1
        while i > 0:
            if a[i] <= max(a[:i]):
                a[i] += 1
                for j in range(i + 1, k):
                    a[j] = 0
                break
            i -= 1
        else:
            return


def enumerate_partitions(k: int) -> list[SetPartition]:
    """All partitions of {0..k-1}, canonically ordered; len equals Bell(k)."""
    if not 1 <= k <= MAX_ENUM_K:
        raise ValueError(f"k must be in [1, {MAX_ENUM_K}], got {k}")
    return [SetPartition(blocks) for blocks in partitions_of(range(k))]


def _check_range(k: int, j: int | None = None) -> None:
    if not 0 <= k <= MAX_EXACT_K:
        raise OverflowError(f"k out of supported range [0, {MAX_EXACT_K}]")
    if j is not None and not 0 <= j <= k:
        raise ValueError(f"need 0 <= j <= k, got j={j}, k={k}")


@lru_cache(maxsize=None)
def stirling2(k: int, j: int) -> int:
    """Stirling number of the second kind, S(k, j), exact."""
    _check_range(k, j)
    if k == 0:
        return 1 if j == 0 else 0
    if j == 0:
        return 0
    if j == k:
        return 1
    return j * stirling2(k - 1, j) + stirling2(k - 1, j - 1)


def bell(k: int) -> int:
    """Bell number: count of set partitions of a k-element set."""
    _check_range(k)
    return sum(stirling2(k, j) for j in range(k + 1))


def ordered_bell(k: int) -> int:
    """Fubini number: partitions with ordered blocks, sum_j S(k,j) j!."""
    _check_range(k)
    return sum(stirling2(k, j) * math.factorial(j) for j in range(k + 1))


def mobius_truncation_weights(k: int) -> list[tuple[SetPartition, int]]:
    """Partitions of {0..k-1} with truncation weight (-1)^(j-1) (j-1)!.

    These are the coefficients expressing the k-point truncated correlation
    through plain moments; the total absolute weight is 2 * ordered_bell(k-1).
    """
    if not 1 <= k <= 10:
        raise ValueError(f"k must be in [1, 10], got {k}")
    out = []
    for p in enumerate_partitions(k):
        j = p.n_blocks
        out.append((p, (-1) ** (j - 1) * math.factorial(j - 1)))
    return out
