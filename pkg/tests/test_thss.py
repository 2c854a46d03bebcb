"""Unit tests for TH-SS patterns and overlap combinatorics."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from thss_backcom.errors import DomainError
from thss_backcom.thss import (
    CONSECUTIVE_SCENARIOS,
    DISJUNCT_SCENARIOS,
    ThssPattern,
    all_patterns_disjoint_prob,
    async_scenario_of,
    async_scenario_probs,
    async_scenario_probs_exact,
    classify_overlap,
    dominant_single_overlap_prob,
    generate_pattern,
    generate_patterns,
    klink_overlap_probs,
    klink_overlap_probs_exact,
    overlap_probs,
    overlap_probs_exact,
)


def _pairs(N: int) -> list[ThssPattern]:
    return [ThssPattern(a, b) for a, b in itertools.combinations(range(N), 2)]


# --- patterns ---


def test_pattern_needs_distinct_chips():
    with pytest.raises(DomainError):
        ThssPattern(3, 3)


def test_transmit_selects_chip_by_bit():
    pattern = ThssPattern(4, 9)
    assert pattern.transmit(0).chip == 4
    assert pattern.transmit(1).chip == 9


def test_generate_pattern_in_range():
    rng = np.random.default_rng(0)
    for _ in range(50):
        pattern = generate_pattern(8, rng)
        assert 0 <= pattern.s0 < 8 and 0 <= pattern.s1 < 8


def test_generate_patterns_uniform_over_ordered_pairs():
    N, n = 6, 300_000
    draws = generate_patterns(N, np.random.default_rng(1), n)
    assert np.all(draws[:, 0] != draws[:, 1])
    counts = Counter(map(tuple, draws.tolist()))
    assert len(counts) == N * (N - 1)
    expected = n / (N * (N - 1))
    sigma = math.sqrt(expected)
    assert all(abs(c - expected) < 5 * sigma for c in counts.values())


def test_generate_patterns_rejects_short_sequence():
    with pytest.raises(DomainError):
        generate_patterns(3, np.random.default_rng(0), 1)


def test_sampled_overlap_frequencies():
    N, n = 8, 200_000
    rng = np.random.default_rng(2)
    a = generate_patterns(N, rng, n)
    b = generate_patterns(N, rng, n)
    shared = (
        (a[:, 0] == b[:, 0]).astype(int)
        + (a[:, 0] == b[:, 1])
        + (a[:, 1] == b[:, 0])
        + (a[:, 1] == b[:, 1])
    )
    probs = overlap_probs(N)
    for k, p in enumerate((probs.p0, probs.p1, probs.p2)):
        freq = np.mean(shared == k)
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / n)


# --- synchronous overlap probabilities ---


@pytest.mark.parametrize("N", range(4, 11))
def test_overlap_probs_match_enumeration(N):
    pairs = _pairs(N)
    counts = Counter(classify_overlap(a, b) for a in pairs for b in pairs)
    total = len(pairs) ** 2
    assert overlap_probs_exact(N) == tuple(Fraction(counts[k], total) for k in range(3))


def test_overlap_probs_float_view():
    probs = overlap_probs(1000)
    assert probs.p0 + probs.p1 + probs.p2 == pytest.approx(1.0)
    assert probs.p2 == pytest.approx(2 / (1000 * 999))


# --- asynchronous sub-scenarios ---


@pytest.mark.parametrize("N", range(6, 11))
def test_async_probs_match_enumeration(N):
    pairs = _pairs(N)
    counts = Counter(async_scenario_of(a, b, N) for a in pairs for b in pairs)
    total = len(pairs) ** 2
    exact = async_scenario_probs_exact(N)
    for label in DISJUNCT_SCENARIOS + CONSECUTIVE_SCENARIOS:
        assert exact[label] == Fraction(counts[label], total), label
    disjunct = sum(1 for a in pairs if (a.s1 - a.s0) % N not in (1, N - 1))
    assert exact["p_dis"] == Fraction(disjunct, len(pairs))


def _chip_overlap(start: Fraction, chip: int, N: int) -> Fraction:
    """Length of [start, start + 1) ∩ [chip, chip + 1) on a circle of N chips."""
    total = Fraction(0)
    for shift in (-N, 0, N):
        lo = max(start, chip + shift)
        hi = min(start + 1, chip + 1 + shift)
        total += max(Fraction(0), hi - lo)
    return total


def _label_from_overlaps(
    pattern1: ThssPattern, pattern2: ThssPattern, N: int, beta: Fraction
) -> str:
    """Sub-scenario label from the overlap lengths of link 2's shifted chips with link 1's."""
    a, b = pattern1.s0, pattern1.s1
    consecutive = (b - a) % N in (1, N - 1)
    if consecutive:
        first = a if (a + 1) % N == b else b
        chips = (first, (first + 1) % N)
    else:
        chips = (a, b)
    long, short = 1 - beta, beta
    hits = set()
    for j in (pattern2.s0, pattern2.s1):
        lengths = tuple(_chip_overlap((j + beta) % N, chip, N) for chip in chips)
        if any(lengths):
            hits.add(lengths)

    if consecutive:
        lead, lag, straddle = (0, long), (short, 0), (long, short)
        return {
            frozenset(): "c0",
            frozenset({lead}): "c1-1",
            frozenset({lag}): "c1-2",
            frozenset({straddle}): "c1-3",
            frozenset({lag, straddle}): "c2-1",
            frozenset({straddle, lead}): "c2-2",
            frozenset({lag, lead}): "c2-3",
        }[frozenset(hits)]

    touches = sorted((max(lengths), lengths.index(max(lengths))) for lengths in hits)
    if not touches:
        return "d0"
    if len(touches) == 1:
        return "d1-1" if touches[0][0] == long else "d1-2"
    (len_x, chip_x), (len_y, chip_y) = touches
    if len_x == len_y:
        return "d2-1" if len_x == long else "d2-2"
    return "d2-4" if chip_x == chip_y else "d2-3"


@pytest.mark.parametrize("N", range(6, 11))
def test_async_probs_match_overlap_geometry(N):
    beta = Fraction(1, 3)
    pairs = _pairs(N)
    counts = Counter(_label_from_overlaps(a, b, N, beta) for a in pairs for b in pairs)
    total = len(pairs) ** 2
    exact = async_scenario_probs_exact(N)
    for label in DISJUNCT_SCENARIOS + CONSECUTIVE_SCENARIOS:
        assert exact[label] == Fraction(counts[label], total), label
    assert sum(counts.values()) == total


def test_overlap_geometry_does_not_depend_on_offset():
    N = 8
    pairs = _pairs(N)
    for p1, p2 in itertools.product(pairs, repeat=2):
        assert _label_from_overlaps(p1, p2, N, Fraction(1, 4)) == _label_from_overlaps(
            p1, p2, N, Fraction(3, 5)
        )


def test_async_probs_sum_to_one():
    probs = async_scenario_probs(12)
    assert probs.p_dis + probs.p_con == pytest.approx(1.0)
    assert sum(probs.table.values()) == pytest.approx(1.0)


def test_async_probs_need_six_chips():
    with pytest.raises(DomainError):
        async_scenario_probs_exact(5)


def test_async_scenario_labels():
    N = 10
    s1 = ThssPattern(2, 6)
    assert async_scenario_of(s1, ThssPattern(8, 9), N) == "d0"
    assert async_scenario_of(s1, ThssPattern(2, 9), N) == "d1-1"
    assert async_scenario_of(s1, ThssPattern(1, 9), N) == "d1-2"
    assert async_scenario_of(s1, ThssPattern(6, 2), N) == "d2-1"
    assert async_scenario_of(s1, ThssPattern(1, 5), N) == "d2-2"
    assert async_scenario_of(s1, ThssPattern(2, 5), N) == "d2-3"
    assert async_scenario_of(s1, ThssPattern(1, 2), N) == "d2-4"
    consecutive = ThssPattern(9, 0)
    assert async_scenario_of(consecutive, ThssPattern(0, 5), N) == "c1-1"
    assert async_scenario_of(consecutive, ThssPattern(8, 5), N) == "c1-2"
    assert async_scenario_of(consecutive, ThssPattern(9, 5), N) == "c1-3"
    assert async_scenario_of(consecutive, ThssPattern(8, 0), N) == "c2-3"


# --- K-link overlap ---


@pytest.mark.parametrize("N,K", [(4, 2), (6, 3), (7, 3), (8, 4), (6, 4)])
def test_klink_probs_match_enumeration(N, K):
    pairs = _pairs(N)
    own = ThssPattern(0, 1).chips
    counts: Counter[int] = Counter()
    for others in itertools.product(pairs, repeat=K - 1):
        union = frozenset().union(*(p.chips for p in others))
        counts[len(own & union)] += 1
    total = len(pairs) ** (K - 1)
    assert klink_overlap_probs_exact(N, K) == tuple(Fraction(counts[k], total) for k in range(3))


def test_klink_reduces_to_two_links():
    probs = klink_overlap_probs(50, 2)
    two = overlap_probs(50)
    assert probs.rho0 == pytest.approx(two.p0)
    assert probs.rho1 == pytest.approx(two.p1)
    assert probs.rho2 == pytest.approx(two.p2)


def test_klink_needs_two_links():
    with pytest.raises(DomainError):
        klink_overlap_probs_exact(10, 1)


def test_dominant_single_overlap_two_links():
    assert dominant_single_overlap_prob(100, 2) == pytest.approx(overlap_probs(100).p1)


def test_all_patterns_disjoint_matches_enumeration():
    N, K = 7, 3
    pairs = _pairs(N)
    hits = sum(
        1
        for combo in itertools.product(pairs, repeat=K)
        if len(frozenset().union(*(p.chips for p in combo))) == 2 * K
    )
    assert all_patterns_disjoint_prob(N, K) == pytest.approx(hits / len(pairs) ** K)


def test_all_patterns_disjoint_impossible_when_too_few_chips():
    assert all_patterns_disjoint_prob(5, 3) == 0.0
