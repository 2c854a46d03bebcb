"""Chip-level Monte Carlo engine for the K-link TH-SS backscatter network.

Only link 1 is measured; every other link acts as an interferer and as an
energy source for tag 1. Trials are simulated in fixed-size blocks and each
block draws from its own substream of the run seed, so the counts do not
depend on how blocks are scheduled across workers.
"""

from __future__ import annotations

import math
import os
from collections.abc import Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from fastmcp.utilities.logging import get_logger
from numpy.random import Generator, SeedSequence
from pydantic import BaseModel, ConfigDict

from thss_backcom.errors import ConfigError, DomainError
from thss_backcom.thss import generate_patterns
from thss_backcom.topology import ChannelRealization, SystemConfig, config_digest, sample_channels

logger = get_logger(__name__)

_BLOCK_SIZE = 65536


class SimulationMode(StrEnum):
    SYNC = "sync"
    ASYNC = "async"


@dataclass(frozen=True)
class SymbolTrial:
    """Outcome of one symbol for link 1."""

    reader_bit_ok: bool
    tag_bit_ok: bool
    energy_harvested: float
    outage: bool


class Estimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    stderr: float


class MetricsReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_trials: int
    reader_ber: Estimate
    tag_ber: Estimate
    outage_prob: Estimate
    etr_mean: Estimate
    seed: int
    config_digest: str
    mode: SimulationMode


@dataclass(frozen=True)
class _Draws:
    channels: ChannelRealization
    patterns: np.ndarray  # (n, K, 2)
    bits: np.ndarray  # (n, K)
    q: np.ndarray  # (n, K), +-1
    tag_noise: np.ndarray  # (n, 2)
    tag_tie: np.ndarray
    reader_noise: np.ndarray
    reader_tie: np.ndarray

    @property
    def on_chips(self) -> np.ndarray:
        """C_k: the pattern chip each link actually transmits in, shape (n, K)."""
        return np.take_along_axis(self.patterns, self.bits[..., None], axis=-1)[..., 0]


@dataclass
class _BlockTally:
    n: int
    reader_errors: int
    tag_errors: int
    outages: int
    energy_mean: float
    energy_m2: float

    def merge(self, other: _BlockTally) -> _BlockTally:
        n = self.n + other.n
        delta = other.energy_mean - self.energy_mean
        return _BlockTally(
            n=n,
            reader_errors=self.reader_errors + other.reader_errors,
            tag_errors=self.tag_errors + other.tag_errors,
            outages=self.outages + other.outages,
            energy_mean=self.energy_mean + delta * other.n / n,
            energy_m2=self.energy_m2 + other.energy_m2 + delta * delta * self.n * other.n / n,
        )


def block_rng(seed: int, block: int) -> Generator:
    """Generator for trial block ``block`` of a run seeded with ``seed``."""
    return np.random.default_rng(SeedSequence(seed, spawn_key=(block,)))


def _complex_noise(rng: Generator, variance: float, shape) -> np.ndarray:
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _draw(cfg: SystemConfig, rng: Generator, n: int) -> _Draws:
    channels = sample_channels(cfg, rng, size=n)
    patterns = generate_patterns(cfg.N, rng, (n, cfg.K))
    bits = rng.integers(0, 2, size=(n, cfg.K))
    q = 1 - 2 * rng.integers(0, 2, size=(n, cfg.K))
    tag_noise = _complex_noise(rng, cfg.sigma2_tag, (n, 2))
    tag_tie = rng.integers(0, 2, size=n)
    reader_noise = _complex_noise(rng, cfg.sigma2_reader, n)
    reader_tie = rng.integers(0, 2, size=n)
    return _Draws(channels, patterns, bits, q, tag_noise, tag_tie, reader_noise, reader_tie)


def _link_offsets(cfg: SystemConfig, mode: SimulationMode) -> np.ndarray:
    """Chip-grid offset of each link relative to link 1, in chips."""
    if mode is SimulationMode.SYNC:
        return np.zeros(cfg.K)
    if cfg.K != 2:
        raise ConfigError("K", f"asynchronous mode is defined for K = 2 only, got K = {cfg.K}")
    if cfg.N < 6:
        raise ConfigError("N", f"asynchronous mode needs N >= 6, got N = {cfg.N}")
    return np.array([0.0, cfg.beta])


def _segments(offsets: np.ndarray) -> Iterator[tuple[np.ndarray, float]]:
    """Split a link-1 chip into spans where every link sits in one chip.

    Yields the per-link chip shift valid on each span and the span's
    duration as a fraction of the chip.
    """
    cuts = sorted({0.0, 1.0, *(float(d) for d in offsets if d > 0.0)})
    for lo, hi in zip(cuts, cuts[1:]):
        mid = 0.5 * (lo + hi)
        yield np.floor(mid - offsets).astype(int), hi - lo


def _amplitudes(
    cfg: SystemConfig,
    draws: _Draws,
    chip: np.ndarray,
    shifts: np.ndarray,
    tag1_chip: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit-power baseband amplitudes during link-1 chip ``chip``.

    Returns the amplitude at tag 1, the amplitude at reader 1 and whether
    tag 1 is reflecting. Reader k contributes only when it transmits; tag j
    re-radiates it with sqrt(rho) q_j while inside one of its pattern chips.
    """
    f, g, h = draws.channels.f, draws.channels.g, draws.channels.h
    link_chip = (chip[:, None] + shifts[None, :]) % cfg.N
    transmitting = link_chip == draws.on_chips
    reflecting = (link_chip == draws.patterns[..., 0]) | (link_chip == draws.patterns[..., 1])
    if tag1_chip is not None:
        reflecting[:, 0] = link_chip[:, 0] == tag1_chip
    weight = reflecting * math.sqrt(cfg.rho) * draws.q
    via_tags = f * weight[:, None, :]
    to_tag = f[:, :, 0] + np.einsum("nkj,nj->nk", via_tags, g[:, :, 0])
    to_reader = h[:, :, 0] + np.einsum("nkj,nj->nk", via_tags, np.conj(f[:, 0, :]))
    return (
        np.sum(transmitting * to_tag, axis=1),
        np.sum(transmitting * to_reader, axis=1),
        reflecting[:, 0],
    )


def _decide(first: np.ndarray, second: np.ndarray, tie: np.ndarray) -> np.ndarray:
    return np.where(first > second, 0, np.where(first < second, 1, tie))


def _simulate_arrays(
    cfg: SystemConfig, rng: Generator, n: int, mode: SimulationMode
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    offsets = _link_offsets(cfg, mode)
    segments = list(_segments(offsets))
    draws = _draw(cfg, rng, n)
    power = cfg.transmit_power
    own = draws.patterns[:, 0, :]
    on_chips = draws.on_chips
    rows = np.arange(n)

    # forward link: energy detector over tag 1's two pattern chips
    signal = np.zeros((n, 2))
    for col in (0, 1):
        for shifts, frac in segments:
            to_tag, _, _ = _amplitudes(cfg, draws, own[:, col], shifts, None)
            signal[:, col] += frac * np.abs(to_tag) ** 2
    signal *= cfg.eta * (1.0 - cfg.rho) * power
    observed = np.abs(np.sqrt(signal) + draws.tag_noise) ** 2
    decided = _decide(observed[:, 0], observed[:, 1], draws.tag_tie)
    tag_ok = decided == draws.bits[:, 0]
    tag1_chip = own[rows, decided] if cfg.couple_tag_detection else None

    # backward link: coherent BPSK at reader 1 during C1
    received = np.zeros(n, dtype=complex)
    for shifts, frac in segments:
        _, to_reader, _ = _amplitudes(cfg, draws, on_chips[:, 0], shifts, tag1_chip)
        received += frac * to_reader
    received = math.sqrt(power) * received + draws.reader_noise
    q_hat = 1 - 2 * _decide(received.real, -received.real, draws.reader_tie)
    reader_ok = q_hat == draws.q[:, 0]

    # harvesting over every link-1 chip that carries a carrier burst
    columns = [own[:, 0], own[:, 1]]
    for k in range(1, cfg.K):
        columns.append(on_chips[:, k])
        if offsets[k] > 0.0:
            columns.append((on_chips[:, k] + 1) % cfg.N)
    candidates = np.stack(columns, axis=1)
    harvest = np.zeros(n)
    on_factor, off_factor = cfg.eta * (1.0 - cfg.rho), cfg.eta
    for m in range(candidates.shape[1]):
        chip = candidates[:, m]
        fresh = ~np.any(candidates[:, :m] == chip[:, None], axis=1)
        for shifts, frac in segments:
            to_tag, _, reflecting = _amplitudes(cfg, draws, chip, shifts, tag1_chip)
            factor = np.where(reflecting, on_factor, off_factor)
            harvest += fresh * frac * factor * np.abs(to_tag) ** 2
    energy = power * cfg.T / cfg.N * harvest
    return reader_ok, tag_ok, energy


def simulate_symbol(
    cfg: SystemConfig, rng: Generator, mode: SimulationMode | str = SimulationMode.SYNC
) -> SymbolTrial:
    """Simulate one symbol of every link and report link 1's outcome."""
    reader_ok, tag_ok, energy = _simulate_arrays(cfg, rng, 1, SimulationMode(mode))
    harvested = float(energy[0])
    return SymbolTrial(
        reader_bit_ok=bool(reader_ok[0]),
        tag_bit_ok=bool(tag_ok[0]),
        energy_harvested=harvested,
        outage=harvested < cfg.E0,
    )


def _run_block(job: tuple[SystemConfig, int, int, int, SimulationMode]) -> _BlockTally:
    cfg, seed, block, size, mode = job
    reader_ok, tag_ok, energy = _simulate_arrays(cfg, block_rng(seed, block), size, mode)
    mean = float(np.mean(energy))
    return _BlockTally(
        n=size,
        reader_errors=int(size - np.count_nonzero(reader_ok)),
        tag_errors=int(size - np.count_nonzero(tag_ok)),
        outages=int(np.count_nonzero(energy < cfg.E0)),
        energy_mean=mean,
        energy_m2=float(np.sum((energy - mean) ** 2)),
    )


def _proportion(count: int, n: int) -> Estimate:
    p = count / n
    return Estimate(mean=p, stderr=math.sqrt(p * (1.0 - p) / n))


def default_workers() -> int:
    return os.cpu_count() or 1


def run_trials(
    cfg: SystemConfig,
    n_trials: int,
    seed: int = 0,
    mode: SimulationMode | str = SimulationMode.SYNC,
    workers: int | None = None,
) -> MetricsReport:
    """Aggregate ``n_trials`` simulated symbols into proportion and mean estimates.

    The result is a function of (cfg, n_trials, seed, mode) only; ``workers``
    changes scheduling, never the numbers.
    """
    if n_trials < 1:
        raise DomainError(f"n_trials must be >= 1, got {n_trials}")
    mode = SimulationMode(mode)
    _link_offsets(cfg, mode)
    jobs = [
        (cfg, seed, block, min(_BLOCK_SIZE, n_trials - start), mode)
        for block, start in enumerate(range(0, n_trials, _BLOCK_SIZE))
    ]
    workers = min(workers or default_workers(), len(jobs))
    logger.info(
        "simulating %d trials (%s) in %d blocks on %d workers", n_trials, mode, len(jobs), workers
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            tallies = list(pool.map(_run_block, jobs))
    else:
        tallies = [_run_block(job) for job in jobs]

    total = tallies[0]
    for tally in tallies[1:]:
        total = total.merge(tally)

    n = total.n
    spread = math.sqrt(total.energy_m2 / (n - 1) / n) if n > 1 else 0.0
    return MetricsReport(
        n_trials=n,
        reader_ber=_proportion(total.reader_errors, n),
        tag_ber=_proportion(total.tag_errors, n),
        outage_prob=_proportion(total.outages, n),
        etr_mean=Estimate(mean=total.energy_mean, stderr=spread),
        seed=seed,
        config_digest=config_digest(cfg),
        mode=mode,
    )
