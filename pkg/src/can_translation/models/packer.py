"""
Message packing.
Chooses the best non-overlapping set of matched tokens for one AID as a
weighted interval scheduling problem and reports the message packing score.
"""

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..data.traces import AidKey
from ..errors import TooManyCandidates
from .matcher import TokenMatch
from .tokenizer import PAYLOAD_BITS, TokenBoundary

BRUTE_FORCE_LIMIT = 20


@dataclass(frozen=True)
class PackingCandidate:
    """Best match for one interval, weighted by R² times token length."""
    boundary: TokenBoundary
    weight: float
    match: TokenMatch

    @classmethod
    def from_match(cls, match: TokenMatch) -> "PackingCandidate":
        return cls(boundary=match.boundary, weight=match.r2 * match.boundary.length, match=match)


@dataclass
class PayloadMap:
    """Selected tokens for one AID and their packing score."""
    aid: Optional[AidKey]
    selected: List[TokenMatch] = field(default_factory=list)
    score: float = 0.0
    classification: Optional[dict] = None

    @property
    def covered_bits(self) -> int:
        return sum(match.boundary.length for match in self.selected)


def _match_preference(match: TokenMatch) -> tuple:
    # max r2, then lower DID, then little before big
    return (-match.r2, match.did, match.endianness.rank)


def reduce_to_candidates(matches: Iterable[TokenMatch]) -> List[PackingCandidate]:
    """Keep the single best match per distinct boundary, sorted by boundary."""
    best: Dict[TokenBoundary, TokenMatch] = {}
    aids = set()
    for match in matches:
        aids.add(match.aid)
        current = best.get(match.boundary)
        if current is None or _match_preference(match) < _match_preference(current):
            best[match.boundary] = match
    if len(aids) > 1:
        raise ValueError("reduce_to_candidates expects matches from a single AID")
    return [PackingCandidate.from_match(best[boundary]) for boundary in sorted(best)]


def _selection_key(total: Fraction, bits: int, intervals: Tuple[TokenBoundary, ...]) -> tuple:
    """Smaller is better: heavier, then more bits, then lexicographically smallest."""
    return (-total, -bits, intervals)


def _single_aid(candidates: Sequence[PackingCandidate]) -> Optional[AidKey]:
    aids = {candidate.match.aid for candidate in candidates}
    if len(aids) > 1:
        raise ValueError("packing expects candidates from a single AID")
    return next(iter(aids)) if aids else None


def _payload_map(aid: Optional[AidKey], chosen: Sequence[PackingCandidate]) -> PayloadMap:
    chosen = sorted(chosen, key=lambda candidate: candidate.boundary)
    total = sum((Fraction(candidate.weight) for candidate in chosen), Fraction(0))
    return PayloadMap(aid=aid, selected=[candidate.match for candidate in chosen],
                      score=float(total / PAYLOAD_BITS))


def find_optimal_payload(candidates: Iterable[PackingCandidate]) -> PayloadMap:
    """
    Weighted interval scheduling over inclusive bit intervals.

    Candidates are sorted by start bit and solved right to left:
    best(k) = better of best(k + 1) and candidate k followed by best(next(k)),
    where next(k) is the first candidate starting after candidate k ends.
    Weights are summed exactly as fractions so ties are real ties.
    Ties prefer more covered bits, then the lexicographically smallest
    sequence of (j_s, j_e).

    Returns:
        PayloadMap with score = sum(weight) / 64
    """
    ordered = sorted(candidates, key=lambda candidate: candidate.boundary)
    aid = _single_aid(ordered)
    if not ordered:
        return PayloadMap(aid=aid)
    starts = [candidate.boundary.j_s for candidate in ordered]
    count = len(ordered)

    # best[k] = (key, chosen indices) over candidates k..count-1
    best: List[Tuple[tuple, Tuple[int, ...]]] = [None] * (count + 1)
    best[count] = (_selection_key(Fraction(0), 0, ()), ())
    for k in range(count - 1, -1, -1):
        candidate = ordered[k]
        following = bisect.bisect_right(starts, candidate.boundary.j_e)
        tail_key, tail = best[following]
        total = -tail_key[0] + Fraction(candidate.weight)
        bits = -tail_key[1] + candidate.boundary.length
        take = (_selection_key(total, bits, (candidate.boundary,) + tail_key[2]), (k,) + tail)
        best[k] = min(take, best[k + 1], key=lambda option: option[0])

    return _payload_map(aid, [ordered[k] for k in best[0][1]])


def brute_force_payload(candidates: Iterable[PackingCandidate]) -> PayloadMap:
    """
    Exhaustive search with the same objective and tie-breaks; test oracle.

    Every pairwise-disjoint subset is visited. Subsets with an overlap can
    never be selected, so they are not generated.
    """
    ordered = sorted(candidates, key=lambda candidate: candidate.boundary)
    if len(ordered) > BRUTE_FORCE_LIMIT:
        raise TooManyCandidates(f"{len(ordered)} candidates exceed {BRUTE_FORCE_LIMIT}")
    aid = _single_aid(ordered)

    best = [_selection_key(Fraction(0), 0, ()), ()]

    def visit(first: int, chosen: Tuple[int, ...], total: Fraction, bits: int, last_end: int):
        for index in range(first, len(ordered)):
            candidate = ordered[index]
            if candidate.boundary.j_s <= last_end:
                continue
            subset = chosen + (index,)
            subset_total = total + Fraction(candidate.weight)
            subset_bits = bits + candidate.boundary.length
            key = _selection_key(subset_total, subset_bits,
                                 tuple(ordered[i].boundary for i in subset))
            if key < best[0]:
                best[0], best[1] = key, subset
            visit(index + 1, subset, subset_total, subset_bits, candidate.boundary.j_e)

    visit(0, (), Fraction(0), 0, -1)
    return _payload_map(aid, [ordered[i] for i in best[1]])
