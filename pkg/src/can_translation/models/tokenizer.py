"""
Token preprocessing.
Classifies each payload bit of an AID trace as constant-0, constant-1 or used,
and enumerates every contiguous run of used bits as a candidate token.
"""

from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, NamedTuple

import numpy as np

from ..data.traces import AidTrace

PAYLOAD_BITS = 64


class TokenBoundary(NamedTuple):
    """Inclusive bit interval [j_s, j_e]; j_s == j_e is a 1-bit token."""
    j_s: int
    j_e: int

    @property
    def length(self) -> int:
        return self.j_e - self.j_s + 1

    def overlaps(self, other: "TokenBoundary") -> bool:
        return self.j_s <= other.j_e and other.j_s <= self.j_e

    def bits(self) -> range:
        return range(self.j_s, self.j_e + 1)


def make_boundary(j_s: int, j_e: int) -> TokenBoundary:
    if not 0 <= j_s <= j_e < PAYLOAD_BITS:
        raise ValueError(f"invalid token boundary [{j_s}, {j_e}]")
    return TokenBoundary(j_s, j_e)


@dataclass(frozen=True)
class BitClassification:
    """Partition of the 64 bit positions."""
    b0: FrozenSet[int]
    b1: FrozenSet[int]
    b_used: FrozenSet[int]

    def __post_init__(self):
        union = self.b0 | self.b1 | self.b_used
        if union != frozenset(range(PAYLOAD_BITS)) or \
                len(self.b0) + len(self.b1) + len(self.b_used) != PAYLOAD_BITS:
            raise ValueError("bit classes must partition 0..63")

    @property
    def constant(self) -> FrozenSet[int]:
        return self.b0 | self.b1

    def layout(self) -> str:
        """One character per bit: '0', '1' or '.' for used."""
        return ''.join('0' if j in self.b0 else '1' if j in self.b1 else '.'
                       for j in range(PAYLOAD_BITS))

    def as_dict(self) -> dict:
        return {"b0": sorted(self.b0), "b1": sorted(self.b1),
                "b_used": sorted(self.b_used), "layout": self.layout()}


def categorize_bits(trace: AidTrace) -> BitClassification:
    """Split bit positions into constant-0, constant-1 and used."""
    column_any = trace.bits.any(axis=0)
    column_all = trace.bits.all(axis=0)
    b0 = frozenset(int(j) for j in np.flatnonzero(~column_any))
    b1 = frozenset(int(j) for j in np.flatnonzero(column_all))
    used = frozenset(range(PAYLOAD_BITS)) - b0 - b1
    return BitClassification(b0=b0, b1=b1, b_used=used)


def used_runs(used: Iterable[int]) -> List[TokenBoundary]:
    """Maximal runs of consecutive used bits, in bit order."""
    runs = []
    start = None
    previous = None
    for j in sorted(used):
        if start is None:
            start = j
        elif j != previous + 1:
            runs.append(TokenBoundary(start, previous))
            start = j
        previous = j
    if start is not None:
        runs.append(TokenBoundary(start, previous))
    return runs


def valid_token_boundaries(cls: BitClassification) -> List[TokenBoundary]:
    """
    Every interval that contains no constant bit.

    The result is sorted by (j_s, j_e); its size is the sum of L(L+1)/2
    over the maximal used runs of length L.
    """
    boundaries = []
    for run in used_runs(cls.b_used):
        for j_s in range(run.j_s, run.j_e + 1):
            for j_e in range(j_s, run.j_e + 1):
                boundaries.append(TokenBoundary(j_s, j_e))
    return boundaries


def unmatched_tokens(cls: BitClassification,
                     selected: Iterable[TokenBoundary]) -> List[TokenBoundary]:
    """Maximal runs of used bits not covered by any selected token."""
    covered = set()
    for boundary in selected:
        covered.update(boundary.bits())
    return used_runs(set(cls.b_used) - covered)
