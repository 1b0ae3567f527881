"""Index combinatorics: shuffles, {1,2}-compositions, and valley interleavings.

The valley region for (n, j) is the set of n-tuples (u_1, ..., u_n) in which
u_j is the minimum, u_1 > ... > u_{j-1} descend to its left and
u_{j+1} < ... < u_n ascend to its right.  Up to ties it is tiled by the
C(n-1, j-1) ascending simplices obtained by interleaving the reversed left
chain with the right chain; those interleavings drive the simplex evaluator.
"""
from __future__ import annotations

import itertools
from math import comb

__all__ = [
    "shuffles",
    "compositions",
    "composition_prefix_sums",
    "valley_interleavings",
]


def shuffles(i_tuple, j_tuple) -> list[tuple]:
    """All position-interleavings of two index tuples, multiplicities kept.

    Repeated values yield repeated output tuples: the shuffle set is a set of
    position permutations, so Sh((1),(1)) = [(1,1), (1,1)] with count 2.
    """
    a, b = tuple(i_tuple), tuple(j_tuple)
    n, m = len(a), len(b)
    if n < 1 or m < 1:
        raise ValueError("both tuples must be nonempty")
    out = []
    for pos in itertools.combinations(range(n + m), n):
        pos = set(pos)
        word, ia, ib = [], 0, 0
        for p in range(n + m):
            if p in pos:
                word.append(a[ia])
                ia += 1
            else:
                word.append(b[ib])
                ib += 1
        out.append(tuple(word))
    return out


def compositions(n: int, k: int) -> list[tuple[int, ...]]:
    """Tuples (n_1, ..., n_k) with parts in {1, 2} summing to n.

    Nonempty exactly for ceil(n/2) <= k <= n, with C(k, n-k) elements; outside
    that range the list is empty (callers iterate k over the full range).
    """
    if k < 1 or n < 1:
        return []
    twos = n - k
    if twos < 0 or twos > k:
        return []
    out = []
    for two_pos in itertools.combinations(range(k), twos):
        parts = [1] * k
        for p in two_pos:
            parts[p] = 2
        out.append(tuple(parts))
    assert len(out) == comb(k, twos)
    return out


def composition_prefix_sums(nu: tuple[int, ...]) -> list[int]:
    """Prefix sums m(j) = n_1 + ... + n_j of a composition."""
    out, s = [], 0
    for p in nu:
        s += p
        out.append(s)
    return out


def valley_interleavings(n: int, j: int) -> list[tuple[int, ...]]:
    """Ascending-order coordinate labels for each simplex tiling the valley region.

    Each returned tuple sigma lists the original coordinate labels (1-based)
    in increasing time order: sigma[0] == j (the minimum), the left chain
    appears as j-1, ..., 1 and the right chain as j+1, ..., n, each in that
    relative order.  There are C(n-1, j-1) interleavings.
    """
    if not (1 <= j <= n):
        raise ValueError(f"need 1 <= j <= n, got j={j}, n={n}")
    left = tuple(range(j - 1, 0, -1))   # ascending time = descending label
    right = tuple(range(j + 1, n + 1))
    slots = n - 1
    out = []
    for pos in itertools.combinations(range(slots), len(left)):
        pos = set(pos)
        word, il, ir = [j], 0, 0
        for p in range(slots):
            if p in pos:
                word.append(left[il])
                il += 1
            else:
                word.append(right[ir])
                ir += 1
        out.append(tuple(word))
    assert len(out) == comb(n - 1, j - 1)
    return out
