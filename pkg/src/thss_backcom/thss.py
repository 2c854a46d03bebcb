"""TH-SS patterns, sequence-switch bookkeeping and overlap combinatorics.

A link's pattern is a pair of distinct on-chip positions out of N; the bit
selects which of the two carries the carrier burst. Every probability here
is exact and is computed in rational arithmetic before conversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np
from numpy.random import Generator

from thss_backcom.errors import DomainError

DISJUNCT_SCENARIOS = ("d0", "d1-1", "d1-2", "d2-1", "d2-2", "d2-3", "d2-4")
CONSECUTIVE_SCENARIOS = ("c0", "c1-1", "c1-2", "c1-3", "c2-1", "c2-2", "c2-3")


@dataclass(frozen=True)
class ThssPattern:
    """One link's pair of on-chip indices; ``s0`` carries bit 0."""

    s0: int
    s1: int

    def __post_init__(self) -> None:
        if self.s0 == self.s1:
            raise DomainError(f"pattern needs two distinct chips, got {self.s0} twice")

    @property
    def chips(self) -> frozenset[int]:
        return frozenset((self.s0, self.s1))

    def transmit(self, bit: int) -> TransmittedChip:
        return TransmittedChip(chip=self.s1 if bit else self.s0, bit=bit)


@dataclass(frozen=True)
class TransmittedChip:
    chip: int
    bit: int


@dataclass(frozen=True)
class OverlapProbs:
    p0: float
    p1: float
    p2: float


@dataclass(frozen=True)
class AsyncScenarioProbs:
    p_dis: float
    p_con: float
    table: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class KLinkOverlapProbs:
    rho0: float
    rho1: float
    rho2: float


def _check_n(N: int, minimum: int = 4) -> None:
    if int(N) != N or N < minimum:
        raise DomainError(f"sequence length N must be an integer >= {minimum}, got {N}")


def _check_k(K: int) -> None:
    if int(K) != K or K < 2:
        raise DomainError(f"link count K must be an integer >= 2, got {K}")


# --- pattern generation ---


def generate_pattern(N: int, rng: Generator) -> ThssPattern:
    """Uniform unordered pair of distinct chips, uniformly oriented."""
    s0, s1 = generate_patterns(N, rng, size=1)[0]
    return ThssPattern(int(s0), int(s1))


def generate_patterns(N: int, rng: Generator, size) -> np.ndarray:
    """Array of patterns with shape ``size + (2,)``.

    The second chip is an offset of 1..N-1 from the first, which makes the
    ordered pair uniform over all N(N-1) choices.
    """
    _check_n(N)
    s0 = rng.integers(0, N, size=size)
    s1 = (s0 + rng.integers(1, N, size=size)) % N
    return np.stack([s0, s1], axis=-1)


def classify_overlap(a: ThssPattern, b: ThssPattern) -> int:
    """Number of shared on-chips (0, 1 or 2)."""
    return len(a.chips & b.chips)


# --- synchronous two-link probabilities ---


def overlap_probs_exact(N: int) -> tuple[Fraction, Fraction, Fraction]:
    _check_n(N)
    total = N * (N - 1)
    return (
        Fraction((N - 2) * (N - 3), total),
        Fraction(4 * (N - 2), total),
        Fraction(2, total),
    )


def overlap_probs(N: int) -> OverlapProbs:
    return OverlapProbs(*(float(p) for p in overlap_probs_exact(N)))


# --- asynchronous two-link probabilities ---


def async_scenario_probs_exact(N: int) -> dict[str, Fraction]:
    """Joint probabilities of link 1's pair type and the overlap sub-scenario.

    Link 2's chip j covers [j + beta, j + 1 + beta) on link 1's grid, so a
    disjunct pair {a, b} is touched by link-2 chips {a-1, a, b-1, b} and a
    consecutive pair {a, a+1} by {a-1, a, a+1}.
    """
    _check_n(N, minimum=6)
    total = N * (N - 1)
    p_dis = Fraction(N - 3, N - 1)
    p_con = Fraction(2, N - 1)
    table = {
        "d0": p_dis * Fraction((N - 4) * (N - 5), total),
        "d1-1": p_dis * Fraction(4 * (N - 4), total),
        "d1-2": p_dis * Fraction(4 * (N - 4), total),
        "d2-1": p_dis * Fraction(2, total),
        "d2-2": p_dis * Fraction(2, total),
        "d2-3": p_dis * Fraction(4, total),
        "d2-4": p_dis * Fraction(4, total),
        "c0": p_con * Fraction((N - 3) * (N - 4), total),
        "c1-1": p_con * Fraction(2 * (N - 3), total),
        "c1-2": p_con * Fraction(2 * (N - 3), total),
        "c1-3": p_con * Fraction(2 * (N - 3), total),
        "c2-1": p_con * Fraction(2, total),
        "c2-2": p_con * Fraction(2, total),
        "c2-3": p_con * Fraction(2, total),
    }
    return {"p_dis": p_dis, "p_con": p_con, **table}


def async_scenario_probs(N: int) -> AsyncScenarioProbs:
    exact = async_scenario_probs_exact(N)
    p_dis = float(exact.pop("p_dis"))
    p_con = float(exact.pop("p_con"))
    return AsyncScenarioProbs(p_dis=p_dis, p_con=p_con, table={k: float(v) for k, v in exact.items()})


def async_scenario_of(pattern1: ThssPattern, pattern2: ThssPattern, N: int) -> str:
    """Label the sub-scenario an (ordered) pattern pair falls in when link 2 lags."""
    a, b = sorted(pattern1.chips)
    hits = pattern2.chips
    if (b - a) % N == 1 or (a - b) % N == 1:
        lo = a if (a + 1) % N == b else b
        before, middle, after = (lo - 1) % N, lo, (lo + 1) % N
        touched = hits & {before, middle, after}
        labels = {
            frozenset(): "c0",
            frozenset({after}): "c1-1",
            frozenset({before}): "c1-2",
            frozenset({middle}): "c1-3",
            frozenset({before, middle}): "c2-1",
            frozenset({middle, after}): "c2-2",
            frozenset({before, after}): "c2-3",
        }
        return labels[frozenset(touched)]

    a_prev, b_prev = (a - 1) % N, (b - 1) % N
    touched = frozenset(hits & {a, b, a_prev, b_prev})
    if not touched:
        return "d0"
    if len(touched) == 1:
        return "d1-1" if touched <= {a, b} else "d1-2"
    if touched == {a, b}:
        return "d2-1"
    if touched == {a_prev, b_prev}:
        return "d2-2"
    if touched in ({a, b_prev}, {a_prev, b}):
        return "d2-3"
    return "d2-4"


# --- K-link probabilities ---


def klink_overlap_probs_exact(N: int, K: int) -> tuple[Fraction, Fraction, Fraction]:
    """Probabilities that 0, 1 or 2 of link 1's chips are hit by the union of the others."""
    _check_k(K)
    p0, p1, _ = overlap_probs_exact(N)
    rho0 = p0 ** (K - 1)
    rho1 = 2 * ((p0 + p1 / 2) ** (K - 1) - rho0)
    return rho0, rho1, 1 - rho0 - rho1


def klink_overlap_probs(N: int, K: int) -> KLinkOverlapProbs:
    return KLinkOverlapProbs(*(float(p) for p in klink_overlap_probs_exact(N, K)))


def dominant_single_overlap_prob(N: int, K: int) -> float:
    """Exactly one other link hits exactly one of link 1's chips; the rest miss it."""
    _check_k(K)
    p0, p1, _ = overlap_probs_exact(N)
    return float((K - 1) * p1 * p0 ** (K - 2))


def all_patterns_disjoint_prob(N: int, K: int) -> float:
    """Probability that all K patterns are pairwise disjoint."""
    _check_k(K)
    _check_n(N)
    if N < 2 * K:
        return 0.0
    pairs = comb(N, 2)
    prob = Fraction(1)
    for i in range(1, K):
        prob *= Fraction(comb(N - 2 * i, 2), pairs)
    return float(prob)
