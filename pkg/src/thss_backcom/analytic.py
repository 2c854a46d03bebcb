"""Closed-form link metrics: reader BER, tag BER, ETR and energy outage.

Chip scenarios seen by tag 1 in a two-link symbol (C_k is link k's
transmitted on-chip, S_k its pattern) and their probabilities:

=====================================  =================  ===========
scenario                               probability        chip powers
=====================================  =================  ===========
C2 outside S1, C1 outside S2           (N-2)^2/(N(N-1))   P0 + Peh
C2 outside S1, C1 in S2                (N-2)/(N(N-1))     P3 + Peh
C2 = C1                                1/N                P1
C2 = other chip of S1, C1 outside S2   (N-2)/(N(N-1))     P0 + P2
C2 = other chip of S1, S2 = S1         1/(N(N-1))         P3 + P2
=====================================  =================  ===========

Fading expectations condition on the tag-tag gain |g21|^2 = d_t^{-lambda} x
with x ~ Exp(1); given x every received power is exponential, so each
metric reduces to a one-dimensional integral against e^{-x}.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from fastmcp.utilities.logging import get_logger
from scipy import special

from thss_backcom.errors import ConfigError, DomainError
from thss_backcom.numerics import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    g_detect,
    g_indicator,
    gamma_e1_scaled,
    hypoexponential_cdf,
    integrate_semi_infinite,
    m_outage,
    m_tilde_outage,
    q_function,
)
from thss_backcom.thss import all_patterns_disjoint_prob, overlap_probs
from thss_backcom.topology import ChannelModel, ChannelRealization, SystemConfig

logger = get_logger(__name__)

KLINK_LAGUERRE_NODES = 48
KLINK_MC_DRAWS = 20_000
KLINK_MC_SEED = 0


@dataclass(frozen=True)
class ChipPowerSet:
    """Received chip powers at tag 1, in watts."""

    P0: float
    P1: float
    P2: float
    P3: float
    Peh: float


@dataclass(frozen=True)
class EtrCoefficients:
    """ETR = eta*P*T/N * (nu1 rho^2 + nu2 rho + nu3) under Rayleigh fading."""

    nu1: float
    nu2: float
    nu3: float

    def evaluate(self, rho: float) -> float:
        return self.nu1 * rho * rho + self.nu2 * rho + self.nu3


@dataclass(frozen=True)
class OutageScale:
    xi: float

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> OutageScale:
        return cls(xi=cfg.xi)


class KLinkEnergy(NamedTuple):
    etr: float
    outage: float


class _Gains(NamedTuple):
    A11: float
    A21: float
    A12: float
    A22: float
    B12: float  # (d12 d_t)^{-lambda}
    B22: float  # (d22 d_t)^{-lambda}


def _gains(cfg: SystemConfig) -> _Gains:
    g_t = cfg.tag_gain(1, 0)
    A12, A22 = cfg.gain(0, 1), cfg.gain(1, 1)
    return _Gains(cfg.gain(0, 0), cfg.gain(1, 0), A12, A22, A12 * g_t, A22 * g_t)


def _is_static(cfg: SystemConfig, channels: ChannelRealization | None) -> bool:
    return channels is not None or cfg.channel_model is ChannelModel.STATIC


def _static_channels(
    cfg: SystemConfig, channels: ChannelRealization | None
) -> ChannelRealization:
    channels = channels if channels is not None else cfg.static_coeffs
    if channels is None:
        raise ConfigError("static_coeffs", "static-channel metric needs static coefficients")
    return channels


def _q_mean(fn: Callable[[int], float]) -> float:
    """Exact two-point mean over an equiprobable BPSK symbol."""
    return 0.5 * (fn(+1) + fn(-1))


def _scenario_weights(N: int) -> tuple[float, float, float, float, float]:
    """(P0+Peh, P3+Peh, P1, P0+P2, P3+P2) scenario probabilities."""
    nn = N * (N - 1)
    return ((N - 2) ** 2 / nn, (N - 2) / nn, 1.0 / N, (N - 2) / nn, 1.0 / nn)


def chip_powers(cfg: SystemConfig, channels: ChannelRealization, q2: int) -> ChipPowerSet:
    """Chip powers for one channel realization and interferer symbol ``q2``."""
    f, g = channels.f, channels.g
    f11, f12, f21, f22 = f[0, 0], f[0, 1], f[1, 0], f[1, 1]
    regen = math.sqrt(cfg.rho) * g[1, 0] * q2
    on_chip = cfg.eta * cfg.transmit_power * (1.0 - cfg.rho)
    return ChipPowerSet(
        P0=on_chip * abs(f11) ** 2,
        P1=on_chip * abs(f11 + f21 + regen * (f12 + f22)) ** 2,
        P2=on_chip * abs(f21 + f22 * regen) ** 2,
        P3=on_chip * abs(f11 + f12 * regen) ** 2,
        Peh=cfg.eta * cfg.transmit_power * abs(f21 + f22 * regen) ** 2,
    )


def expected_chip_powers(cfg: SystemConfig) -> ChipPowerSet:
    """Rayleigh-fading means of the chip powers (cross terms average to zero)."""
    a = _gains(cfg)
    rho = cfg.rho
    scale = cfg.eta * cfg.transmit_power
    return ChipPowerSet(
        P0=scale * (1 - rho) * a.A11,
        P1=scale * (1 - rho) * (a.A11 + a.A21 + rho * (a.B12 + a.B22)),
        P2=scale * (1 - rho) * (a.A21 + rho * a.B22),
        P3=scale * (1 - rho) * (a.A11 + rho * a.B12),
        Peh=scale * (a.A21 + rho * a.B22),
    )


# --- backward IT: reader BER ---


def p_bpsk(cfg: SystemConfig, channel: ChannelRealization | None = None) -> float:
    """BER of the interference-free coherent BPSK backscatter link."""
    if _is_static(cfg, channel):
        f11 = _static_channels(cfg, channel).f[0, 0]
        if cfg.sigma2_reader == 0.0:
            return 0.5 if f11 == 0 else 0.0
        snr = 2.0 * cfg.transmit_power * cfg.rho * abs(f11) ** 4 / cfg.sigma2_reader
        return q_function(math.sqrt(snr))
    if cfg.sigma2_reader == 0.0:
        return 0.0
    z = math.sqrt(cfg.sigma2_reader / (cfg.transmit_power * cfg.rho)) / (2.0 * cfg.gain(0, 0))
    return 0.5 * (1.0 - float(special.erfcx(z)))


def reader_ber_sync(cfg: SystemConfig, channel: ChannelRealization | None = None) -> float:
    """((N-2)/N) P_BPSK + 1/N: any chip collision is scored at chance level."""
    N = cfg.N
    return (N - 2) / N * p_bpsk(cfg, channel) + 1.0 / N


def reader_ber_async(cfg: SystemConfig, channel: ChannelRealization | None = None) -> float:
    """Asynchronous two-link reader BER; independent of beta.

    At P_BPSK = 1/2 this is exactly 1/2 since 0.5(N-2)(N-3) + 2N - 3 = 0.5 N(N-1).
    """
    N = cfg.N
    nn = N * (N - 1)
    return p_bpsk(cfg, channel) * (N - 3) * (N - 2) / nn + (2 * N - 3) / nn


def reader_ber_klink(cfg: SystemConfig, channel: ChannelRealization | None = None) -> float:
    clean = ((cfg.N - 2) / cfg.N) ** (cfg.K - 1)
    return p_bpsk(cfg, channel) * clean + 0.5 * (1.0 - clean)


# --- forward IT: tag BER ---


def tag_ber_static(
    cfg: SystemConfig,
    channels: ChannelRealization | None = None,
    high_snr: bool = True,
) -> float:
    """Static-channel tag BER averaged over the interferer symbol.

    ``high_snr`` replaces G by the indicator 1{a > b} (1/2 on ties) and keeps
    only the two interference scenarios that can flip the decision. With it
    off every scenario is scored through the energy-detector function G at
    non-centrality 2 P / sigma2_tag.
    """
    channels = _static_channels(cfg, channels)
    N = cfg.N
    w_clean, w_reflected, w_same, w_cross, w_full = _scenario_weights(N)

    if high_snr or cfg.sigma2_tag == 0.0:

        def error(q2: int) -> float:
            s = chip_powers(cfg, channels, q2)
            return w_cross * (1.0 - g_indicator(s.P0, s.P2)) + w_full * (
                1.0 - g_indicator(s.P3, s.P2)
            )

        return _q_mean(error)

    scale = 2.0 / cfg.sigma2_tag

    def noisy_error(q2: int) -> float:
        s = chip_powers(cfg, channels, q2)
        p0, p1, p2, p3 = (scale * v for v in (s.P0, s.P1, s.P2, s.P3))
        return (
            w_clean * (1.0 - g_detect(p0, 0.0))
            + w_reflected * (1.0 - g_detect(p3, 0.0))
            + w_same * (1.0 - g_detect(p1, 0.0))
            + w_cross * (1.0 - g_detect(p0, p2))
            + w_full * (1.0 - g_detect(p3, p2))
        )

    return _q_mean(noisy_error)


def tag_ber_fading(cfg: SystemConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Rayleigh tag BER, p_a P[P2 > P0] + p_b P[P2 > P3], noise-free.

    Given x the three powers are independent exponentials with means
    m0 = A11, m2 = A21 + rho B22 x and m3 = A11 + rho B12 x, so each
    probability is a ratio of means integrated against e^{-x}.
    """
    a = _gains(cfg)
    rho, N = cfg.rho, cfg.N
    pa, pb = (N - 2) / (N * (N - 1)), 1.0 / (N * (N - 1))

    def beats_clean(x: float) -> float:
        m2 = a.A21 + rho * a.B22 * x
        return math.exp(-x) * m2 / (a.A11 + m2)

    def beats_reflected(x: float) -> float:
        m2 = a.A21 + rho * a.B22 * x
        m3 = a.A11 + rho * a.B12 * x
        return math.exp(-x) * m2 / (m2 + m3)

    return pa * integrate_semi_infinite(beats_clean, spec) + pb * integrate_semi_infinite(
        beats_reflected, spec
    )


def tag_ber_fading_closed(cfg: SystemConfig) -> float:
    """Same quantity as ``tag_ber_fading`` through E[1/(c + x)] = e^c Γ(0, c)."""
    a = _gains(cfg)
    rho, N = cfg.rho, cfg.N
    pa, pb = (N - 2) / (N * (N - 1)), 1.0 / (N * (N - 1))
    c = (a.A11 + a.A21) / (rho * a.B22)
    first = 1.0 - a.A11 / (rho * a.B22) * gamma_e1_scaled(c)
    s = rho * (a.B12 + a.B22)
    c2 = (a.A11 + a.A21) / s
    second = rho * a.B22 / s + (a.A21 - rho * a.B22 * c2) / s * gamma_e1_scaled(c2)
    return pa * first + pb * second


def tag_ber_fading_printed(cfg: SystemConfig) -> float:
    """Closed form with the alternative grouping of the first Γ argument.

    Its first Γ term groups (d22/d11)^lambda outside the d_t^lambda/rho
    factor, unlike the matching exponential; ``tag_ber_fading`` is the
    reference value. Where the two arguments drift far apart the printed
    expression leaves floating-point range and a DomainError is raised.
    """
    a = _gains(cfg)
    rho, N = cfg.rho, cfg.N
    lam = cfg.path_loss_exponent
    d = cfg.reader_tag
    d11, d12, d21, d22 = d[0, 0], d[0, 1], d[1, 0], d[1, 1]
    dt = cfg.tag_tag[1, 0]
    exp_arg = dt**lam / rho * ((d22 / d21) ** lam + (d22 / d11) ** lam)
    gamma_arg = dt**lam / rho * (d22 / d21) ** lam + (d22 / d11) ** lam
    try:
        spread = math.exp(exp_arg - gamma_arg)
    except OverflowError:
        raise DomainError(
            f"printed tag-BER form overflows (exponent gap {exp_arg - gamma_arg:.1f})",
            code="overflow",
        ) from None
    first = (
        (N - 2) / (N * (N - 1)) / rho * (d22 * dt / d11) ** lam * spread * gamma_e1_scaled(gamma_arg)
    )
    c2 = dt**lam / rho * (a.A11 + a.A21) / (a.A12 + a.A22)
    second = (
        d22**lam / (d12**lam + d22**lam)
        + dt**lam / rho * (a.A11 * a.A22 - a.A21 * a.A12) / (a.A12 + a.A22) ** 2 * gamma_e1_scaled(c2)
    ) / (N * (N - 1))
    return 1.0 / N - first - second


def tag_ber_sync(cfg: SystemConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    if cfg.channel_model is ChannelModel.STATIC:
        return tag_ber_static(cfg)
    return tag_ber_fading(cfg, spec)


def _fractional_win(share: float, m0: float, m2: float) -> float:
    """P[X0 < share * X2] for independent exponentials with means m0, m2."""
    if share <= 0.0:
        return 0.0
    return share * m2 / (m0 + share * m2)


def tag_ber_async(
    cfg: SystemConfig,
    beta: float | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Large-N asynchronous tag BER (1/N)(P[P0 < (1-beta)P2] + P[P0 < beta P2]).

    The regenerated path into the competing chip is reader 2 -> tag 2 -> tag 1,
    so its mean carries d22 and d_t.
    """
    beta = cfg.beta if beta is None else beta
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta must lie in [0, 1), got {beta}")
    if cfg.channel_model is ChannelModel.STATIC:
        return tag_ber_async_static(cfg, beta=beta)
    a = _gains(cfg)

    def integrand(x: float) -> float:
        m2 = a.A21 + cfg.rho * a.B22 * x
        return math.exp(-x) * (
            _fractional_win(1.0 - beta, a.A11, m2) + _fractional_win(beta, a.A11, m2)
        )

    return integrate_semi_infinite(integrand, spec) / cfg.N


def tag_ber_async_static(
    cfg: SystemConfig,
    channels: ChannelRealization | None = None,
    beta: float | None = None,
) -> float:
    channels = _static_channels(cfg, channels)
    beta = cfg.beta if beta is None else beta

    def error(q2: int) -> float:
        s = chip_powers(cfg, channels, q2)
        return float(s.P0 < (1.0 - beta) * s.P2) + float(s.P0 < beta * s.P2)

    return _q_mean(error) / cfg.N


def tag_ber_klink(
    cfg: SystemConfig,
    channels: ChannelRealization | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Dominant-case K-link tag BER: one interferer lands on tag 1's idle chip."""
    N, K, rho = cfg.N, cfg.K, cfg.rho
    prefactor = (N - 2) / (N * (N - 1)) * overlap_probs(N).p0 ** (K - 2)
    if _is_static(cfg, channels):
        ch = _static_channels(cfg, channels)
        f, g = ch.f, ch.g
        p_on = cfg.eta * cfg.transmit_power * (1.0 - rho)
        clean = p_on * abs(f[0, 0]) ** 2
        total = 0.0
        for k in range(1, K):

            def error(q: int, k: int = k) -> float:
                rival = p_on * abs(f[k, 0] + f[k, k] * math.sqrt(rho) * g[k, 0] * q) ** 2
                return 1.0 - g_indicator(clean, rival)

            total += _q_mean(error)
        return prefactor * total

    A11 = cfg.gain(0, 0)
    total = 0.0
    for k in range(1, K):
        direct = cfg.gain(k, 0)
        regen = rho * cfg.gain(k, k) * cfg.tag_gain(k, 0)

        def integrand(x: float, direct: float = direct, regen: float = regen) -> float:
            m = direct + regen * x
            return math.exp(-x) * m / (A11 + m)

        total += integrate_semi_infinite(integrand, spec)
    return prefactor * total


# --- forward ET: ETR ---


def _etr_combination(cfg: SystemConfig, s: ChipPowerSet) -> float:
    N = cfg.N
    return cfg.T / N * ((N - 2) / N * (s.P0 + s.Peh) + (s.P1 + s.P2 + s.P3) / N)


def etr_static(cfg: SystemConfig, channels: ChannelRealization | None = None) -> float:
    channels = _static_channels(cfg, channels)
    return _q_mean(lambda q2: _etr_combination(cfg, chip_powers(cfg, channels, q2)))


def etr_fading(cfg: SystemConfig) -> float:
    return _etr_combination(cfg, expected_chip_powers(cfg))


def etr_coefficients(cfg: SystemConfig) -> EtrCoefficients:
    """Coefficients of rho in the fading ETR bracket."""
    a = _gains(cfg)
    N = cfg.N
    return EtrCoefficients(
        nu1=-2.0 / N * (a.B12 + a.B22),
        nu2=2.0 / N * (a.B12 - a.A21) + a.B22 - a.A11,
        nu3=a.A11 + a.A21,
    )


def etr_sync(cfg: SystemConfig) -> float:
    if cfg.channel_model is ChannelModel.STATIC:
        return etr_static(cfg)
    return etr_fading(cfg)


def etr_async(cfg: SystemConfig) -> float:
    """Chip misalignment only moves energy between chips; the mean is unchanged."""
    return etr_sync(cfg)


def etr_asymptote(cfg: SystemConfig) -> float:
    """Large-N ETR (T/N) E[P0 + Peh]; a constant in N under FCE."""
    if cfg.channel_model is ChannelModel.STATIC:
        channels = _static_channels(cfg, None)
        return _q_mean(
            lambda q2: cfg.T / cfg.N * (lambda s: s.P0 + s.Peh)(chip_powers(cfg, channels, q2))
        )
    s = expected_chip_powers(cfg)
    return cfg.T / cfg.N * (s.P0 + s.Peh)


# --- forward ET: energy outage ---


def outage_fading(cfg: SystemConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Rayleigh energy-outage probability over the five chip scenarios."""
    xi = cfg.xi
    if xi == 0.0:
        return 0.0
    a = _gains(cfg)
    rho = cfg.rho
    keep = 1.0 - rho
    w_clean, w_reflected, w_same, w_cross, w_full = _scenario_weights(cfg.N)
    value = (
        w_clean * m_outage(keep * a.A11, 0.0, a.A21, rho * a.B22, xi, spec)
        + w_reflected * m_outage(keep * a.A11, keep * rho * a.B12, a.A21, rho * a.B22, xi, spec)
        + w_same * m_tilde_outage(keep * (a.A11 + a.A21), keep * rho * (a.B12 + a.B22), xi, spec)
        + w_cross * m_outage(keep * a.A11, 0.0, keep * a.A21, keep * rho * a.B22, xi, spec)
        + w_full
        * m_outage(keep * a.A11, keep * rho * a.B12, keep * a.A21, keep * rho * a.B22, xi, spec)
    )
    return min(1.0, max(0.0, value))


def outage_static(cfg: SystemConfig, channels: ChannelRealization | None = None) -> float:
    """Zero-noise static outage: indicator per scenario, averaged over q2."""
    channels = _static_channels(cfg, channels)
    budget = cfg.E0 * cfg.N / cfg.T
    w_clean, w_reflected, w_same, w_cross, w_full = _scenario_weights(cfg.N)

    def short(q2: int) -> float:
        s = chip_powers(cfg, channels, q2)
        return (
            w_clean * (s.P0 + s.Peh < budget)
            + w_reflected * (s.P3 + s.Peh < budget)
            + w_same * (s.P1 < budget)
            + w_cross * (s.P0 + s.P2 < budget)
            + w_full * (s.P3 + s.P2 < budget)
        )

    return _q_mean(short)


def outage_sync(cfg: SystemConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    if cfg.channel_model is ChannelModel.STATIC:
        return outage_static(cfg)
    return outage_fading(cfg, spec)


def outage_asymptote(cfg: SystemConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Large-N outage P[(1-rho)|f11|^2 + |f21 + sqrt(rho) f22 g21 q2|^2 < xi].

    Under FCP xi grows with N and this tends to 1; under FCE it settles.
    """
    a = _gains(cfg)
    return m_outage((1.0 - cfg.rho) * a.A11, 0.0, a.A21, cfg.rho * a.B22, cfg.xi, spec)


# --- K-link forward ET ---


def _klink_outage_fading(cfg: SystemConfig) -> float:
    rho = cfg.rho
    base = (1.0 - rho) * cfg.gain(0, 0)
    direct = np.array([cfg.gain(k, 0) for k in range(1, cfg.K)])
    regen = np.array([rho * cfg.gain(k, k) * cfg.tag_gain(k, 0) for k in range(1, cfg.K)])
    xi = cfg.xi
    if xi == 0.0:
        return 0.0
    if cfg.K == 2:
        return m_outage(base, 0.0, float(direct[0]), float(regen[0]), xi)
    if cfg.K == 3:
        nodes, weights = np.polynomial.laguerre.laggauss(KLINK_LAGUERRE_NODES)
        total = 0.0
        for xi2, wi in zip(nodes, weights):
            for xi3, wj in zip(nodes, weights):
                means = (base, direct[0] + regen[0] * xi2, direct[1] + regen[1] * xi3)
                total += wi * wj * hypoexponential_cdf(means, xi)
        return min(1.0, max(0.0, total))
    logger.debug("K=%d outage: conditional Monte Carlo over %d draws", cfg.K, KLINK_MC_DRAWS)
    rng = np.random.default_rng(KLINK_MC_SEED)
    x = rng.exponential(size=(KLINK_MC_DRAWS, cfg.K - 1))
    cdf = [hypoexponential_cdf((base, *(direct + regen * row)), xi) for row in x]
    return float(np.mean(cdf))


def klink_et_asymptotics(
    cfg: SystemConfig,
    channels: ChannelRealization | None = None,
    include_disjoint_prefactor: bool = False,
) -> KLinkEnergy:
    """Large-N K-link (ETR, outage) with every interferer off tag 1's chips.

    Tag 1 harvests its own on-chip plus one off-chip burst per interferer,
    P_eh,k = eta P |f_k1 + f_kk sqrt(rho) g_k1 q_k|^2.
    """
    rho, K = cfg.rho, cfg.K
    scale = cfg.eta * cfg.transmit_power
    prefactor = all_patterns_disjoint_prob(cfg.N, K) if include_disjoint_prefactor else 1.0

    if _is_static(cfg, channels):
        ch = _static_channels(cfg, channels)
        f, g = ch.f, ch.g
        own = scale * (1.0 - rho) * abs(f[0, 0]) ** 2

        def harvest(k: int, q: int) -> float:
            return scale * abs(f[k, 0] + f[k, k] * math.sqrt(rho) * g[k, 0] * q) ** 2

        etr = cfg.T / cfg.N * (own + sum(_q_mean(lambda q, k=k: harvest(k, q)) for k in range(1, K)))
        budget = cfg.E0 * cfg.N / cfg.T
        combos = list(itertools.product((1, -1), repeat=K - 1))
        short = sum(
            own + sum(harvest(k, q) for k, q in zip(range(1, K), combo)) < budget
            for combo in combos
        )
        return KLinkEnergy(etr=etr, outage=prefactor * short / len(combos))

    mean = (1.0 - rho) * cfg.gain(0, 0) + sum(
        cfg.gain(k, 0) + rho * cfg.gain(k, k) * cfg.tag_gain(k, 0) for k in range(1, K)
    )
    etr = scale * cfg.T / cfg.N * mean
    return KLinkEnergy(etr=etr, outage=prefactor * _klink_outage_fading(cfg))
