"""
Tests for candidate reduction and optimal message packing.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from can_translation.data.traces import AidKey
from can_translation.errors import TooManyCandidates
from can_translation.models.matcher import Endianness, TokenMatch
from can_translation.models.packer import (PackingCandidate, brute_force_payload,
                                           find_optimal_payload, reduce_to_candidates)
from can_translation.models.tokenizer import TokenBoundary

AID = AidKey(0x0C5)


def match(j_s, j_e, r2=1.0, did=12, endianness=Endianness.BIG):
    return TokenMatch(aid=AID, boundary=TokenBoundary(j_s, j_e), endianness=endianness,
                      did=did, r2=r2, a=1.0, b=0.0, n_points=100)


def candidate(j_s, j_e, r2=1.0):
    return PackingCandidate.from_match(match(j_s, j_e, r2))


def bounds(payload):
    return [(m.boundary.j_s, m.boundary.j_e) for m in payload.selected]


def test_reduce_keeps_best_match_per_interval():
    candidates = reduce_to_candidates([match(8, 15, 0.7), match(8, 15, 0.9, did=13)])
    assert len(candidates) == 1
    assert candidates[0].match.r2 == 0.9


def test_reduce_tie_breaks():
    candidates = reduce_to_candidates([match(8, 15, 0.8, did=13), match(8, 15, 0.8, did=12)])
    assert candidates[0].match.did == 12
    candidates = reduce_to_candidates([match(3, 3, 0.6, endianness=Endianness.BIG),
                                       match(3, 3, 0.6, endianness=Endianness.LITTLE)])
    assert candidates[0].match.endianness is Endianness.LITTLE
    assert reduce_to_candidates([]) == []


def test_documented_three_candidate_example():
    candidates = [candidate(0, 7), candidate(4, 11), candidate(8, 15, 0.5)]
    for solve in (find_optimal_payload, brute_force_payload):
        payload = solve(candidates)
        assert bounds(payload) == [(0, 7), (8, 15)]
        assert payload.score == 0.1875
        assert payload.covered_bits == 16


def test_full_coverage_and_empty():
    assert find_optimal_payload([candidate(0, 63)]).score == 1.0
    empty = find_optimal_payload([])
    assert empty.score == 0.0 and empty.selected == []
    assert brute_force_payload([]).score == 0.0


def test_inclusive_endpoints_conflict():
    payload = find_optimal_payload([candidate(0, 7), candidate(7, 7), candidate(8, 8)])
    assert bounds(payload) == [(0, 7), (8, 8)]


def test_tie_prefers_more_bits_then_lexicographic():
    payload = find_optimal_payload([candidate(0, 3, 1.0), candidate(0, 7, 0.5)])
    assert bounds(payload) == [(0, 7)]
    payload = find_optimal_payload([candidate(0, 3), candidate(4, 7), candidate(0, 7)])
    assert bounds(payload) == [(0, 3), (4, 7)]
    payload = find_optimal_payload([candidate(0, 7, 0.5), candidate(2, 5, 1.0)])
    assert bounds(payload) == [(0, 7)]
    payload = find_optimal_payload([candidate(0, 3, 1.0), candidate(1, 4, 1.0)])
    assert bounds(payload) == [(0, 3)]


def test_brute_force_limit():
    with pytest.raises(TooManyCandidates):
        brute_force_payload([candidate(j, j) for j in range(21)])


def test_mixed_aids_rejected():
    other = TokenMatch(aid=AidKey(0x1A0), boundary=TokenBoundary(0, 3), endianness=Endianness.BIG,
                       did=12, r2=0.9, a=1.0, b=0.0, n_points=10)
    with pytest.raises(ValueError):
        find_optimal_payload([candidate(8, 9), PackingCandidate.from_match(other)])


def random_candidates(rng):
    count = int(rng.integers(0, 16))
    seen = {}
    while len(seen) < count:
        j_s = int(rng.integers(0, 64))
        j_e = min(63, j_s + int(rng.integers(0, 16)))
        if rng.random() < 0.5:
            r2 = float(rng.choice([0.25, 0.5, 0.75, 1.0]))
        else:
            r2 = float(rng.uniform(0.5, 1.0))
        seen[(j_s, j_e)] = candidate(j_s, j_e, r2)
    return list(seen.values())


def test_dp_equals_brute_force_on_random_sets():
    rng = np.random.default_rng(99)
    started = time.perf_counter()
    for _ in range(500):
        candidates = random_candidates(rng)
        dp = find_optimal_payload(candidates)
        oracle = brute_force_payload(candidates)
        assert dp.score == oracle.score
        assert bounds(dp) == bounds(oracle)

        chosen = [m.boundary for m in dp.selected]
        assert all(not a.overlaps(b) for i, a in enumerate(chosen) for b in chosen[i + 1:])
        expected = sum((Fraction(m.r2 * m.boundary.length) for m in dp.selected), Fraction(0)) / 64
        assert dp.score == float(expected)
        assert 0.0 <= dp.score <= 1.0
    assert time.perf_counter() - started < 10.0


def test_adding_candidates_never_lowers_score():
    rng = np.random.default_rng(5)
    for _ in range(100):
        candidates = random_candidates(rng)
        extra = candidate(int(rng.integers(0, 64)), 63, float(rng.uniform(0.5, 1.0)))
        assert find_optimal_payload(candidates + [extra]).score >= find_optimal_payload(candidates).score


def test_dp_scales_near_linearly():
    rng = np.random.default_rng(1)

    def timed(count):
        candidates = []
        for k in range(count):
            start = int(rng.integers(0, 64))
            candidates.append(PackingCandidate(boundary=TokenBoundary(start, min(63, start + 3)),
                                               weight=float(rng.uniform(0.5, 4.0)),
                                               match=match(start, min(63, start + 3))))
        started = time.perf_counter()
        find_optimal_payload(candidates)
        return time.perf_counter() - started

    timed(200)
    small = min(timed(1000) for _ in range(3))
    large = min(timed(10000) for _ in range(3))
    assert large < 30 * small
