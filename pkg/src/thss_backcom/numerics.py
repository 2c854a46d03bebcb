"""Special functions and semi-infinite quadrature behind the closed forms.

Every integral the analytic layer needs carries an ``e^{-x}`` envelope, so
the semi-infinite range is cut at a point where that envelope is already
below the absolute tolerance, and tail panels are added until they stop
contributing.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, linalg, special, stats

from thss_backcom.errors import DomainError, QuadratureError

logger = get_logger(__name__)

_QUAD_LIMIT = 200
_MAX_TAIL_PANELS = 8
# an estimate is rejected only when scipy flags it and its error is this far off
_STALL_FACTOR = 100.0
# above this the unscaled e^x * E1(x) product loses range
_E1_SCALED_SWITCH = 50.0


class QuadratureSpec(BaseModel):
    """Tolerances for ``integrate_semi_infinite``."""

    model_config = ConfigDict(frozen=True)

    abs_tol: float = Field(default=1e-9, ge=0.0)
    rel_tol: float = Field(default=1e-8, ge=0.0)
    truncation_cap: float = Field(default=50.0, gt=0.0)

    @model_validator(mode="after")
    def _one_tolerance_positive(self) -> QuadratureSpec:
        if self.abs_tol <= 0.0 and self.rel_tol <= 0.0:
            raise ValueError("at least one of abs_tol, rel_tol must be positive")
        return self

    @property
    def cap(self) -> float:
        """First panel end: the point where e^{-x} drops below abs_tol/10."""
        if self.abs_tol > 0.0:
            return math.log(10.0 / self.abs_tol)
        return self.truncation_cap


DEFAULT_QUADRATURE = QuadratureSpec()


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


# --- elementary special functions ---


def q_function(x):
    """Gaussian tail Q(x) = 0.5 erfc(x / sqrt(2)). Accepts scalars or arrays."""
    return _out(0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0)))


def marcum_q1(a: float, b: float) -> float:
    """First-order Marcum Q function Q1(a, b).

    Evaluated as the survival function of a non-central chi-square with two
    degrees of freedom, which stays finite for very large non-centralities.
    """
    if a < 0.0 or b < 0.0:
        raise DomainError(f"marcum_q1 needs non-negative arguments, got a={a}, b={b}")
    if a == 0.0:
        return math.exp(-0.5 * b * b)
    if b == 0.0:
        return 1.0
    return float(stats.ncx2.sf(b * b, 2, a * a))


def bessel_i0(x: float) -> float:
    """Modified Bessel function I0(x), rescaled from e^{-x} I0(x).

    Raises DomainError(code="overflow") once e^x leaves float range.
    """
    if x < 0.0:
        raise DomainError(f"bessel_i0 needs x >= 0, got {x}")
    try:
        value = math.exp(x) * float(special.i0e(x))
    except OverflowError as exc:
        raise DomainError(f"I0({x}) overflows; use bessel_i0e", code="overflow") from exc
    if not math.isfinite(value):
        raise DomainError(f"I0({x}) overflows; use bessel_i0e", code="overflow")
    return value


def bessel_i0e(x: float) -> float:
    """Exponentially scaled e^{-x} I0(x)."""
    if x < 0.0:
        raise DomainError(f"bessel_i0e needs x >= 0, got {x}")
    return float(special.i0e(x))


def gamma_e1(x: float) -> float:
    """Upper incomplete gamma Γ(0, x), i.e. the exponential integral E1(x)."""
    if x <= 0.0:
        raise DomainError(f"gamma_e1 needs x > 0, got {x}")
    return float(special.exp1(x))


def gamma_e1_scaled(x: float) -> float:
    """e^x Γ(0, x) = E[1 / (x + u)] for u ~ Exp(1)."""
    if x <= 0.0:
        raise DomainError(f"gamma_e1_scaled needs x > 0, got {x}")
    if x < _E1_SCALED_SWITCH:
        return math.exp(x) * float(special.exp1(x))
    return integrate_semi_infinite(lambda u: math.exp(-u) / (x + u))


# --- quadrature ---


def _quad_panel(
    f: Callable[[float], float], lo: float, hi: float, spec: QuadratureSpec
) -> float:
    out = integrate.quad(
        f,
        lo,
        hi,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=_QUAD_LIMIT,
        full_output=1,
    )
    value, abserr = float(out[0]), float(out[1])
    if len(out) > 3:
        tol = max(spec.abs_tol, spec.rel_tol * abs(value))
        if abserr > _STALL_FACTOR * tol:
            raise QuadratureError(
                f"quadrature on [{lo:g}, {hi:g}] stalled: {out[3]} (error estimate {abserr:.3e})"
            )
    return value


def integrate_semi_infinite(
    f: Callable[[float], float], spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Integrate ``f`` over [0, inf) for exponentially decaying integrands."""
    cap = spec.cap
    total = _quad_panel(f, 0.0, cap, spec)
    lo = cap
    for _ in range(_MAX_TAIL_PANELS):
        panel = _quad_panel(f, lo, lo + cap, spec)
        total += panel
        lo += cap
        if abs(panel) <= max(spec.abs_tol, spec.rel_tol * abs(total)) / 10.0:
            logger.debug("semi-infinite integral truncated at %.1f", lo)
            return total
    raise QuadratureError(f"integrand tail still significant beyond x={lo:g}")


# --- energy detector ---


def g_detect(a: float, b: float) -> float:
    """Probability that an energy detector prefers the chip with non-centrality ``a``.

    G(a, b) = P[E_A >= E_B] with E_A ~ chi'^2_2(a), E_B ~ chi'^2_2(b) and
    unit noise variance per real dimension. Uses the equal-variance
    two-Marcum closed form, exact in G(a, b) + G(b, a) = 1.
    """
    if a < 0.0 or b < 0.0:
        raise DomainError(f"g_detect needs non-negative arguments, got a={a}, b={b}")
    ra, rb = math.sqrt(a / 2.0), math.sqrt(b / 2.0)
    value = 0.5 * (1.0 + marcum_q1(ra, rb) - marcum_q1(rb, ra))
    return min(1.0, max(0.0, value))


def g_detect_quadrature(a: float, b: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """G(a, b) from its defining integral over the density of E_B.

    With E_B = 2u the density term becomes exp(-(sqrt(u) - c)^2) i0e(2 c sqrt(u)),
    c = sqrt(b/2), which peaks near u = c^2; the range is centred there.
    """
    if a < 0.0 or b < 0.0:
        raise DomainError(f"g_detect needs non-negative arguments, got a={a}, b={b}")
    c = math.sqrt(b / 2.0)
    sqrt_a = math.sqrt(a)
    half_width = math.sqrt(spec.cap) + 1.0

    def integrand(u: float) -> float:
        r = math.sqrt(u)
        return math.exp(-((r - c) ** 2)) * float(special.i0e(2.0 * c * r)) * marcum_q1(
            sqrt_a, math.sqrt(2.0 * u)
        )

    lo = max(0.0, c - half_width) ** 2
    hi = (c + half_width) ** 2
    return _quad_panel(integrand, lo, hi, spec)


def g_indicator(a: float, b: float) -> float:
    """Noise-free limit of G: 1{a > b}, with 1/2 on exact ties."""
    if a > b:
        return 1.0
    if a < b:
        return 0.0
    return 0.5


# --- energy outage ---


def _sum_of_exponentials_survival(mean_x: float, mean_y: float, xi: float) -> float:
    """P[X + Y > xi] for independent exponentials with the given means.

    Written around the larger mean so the coincident-mean limit
    e^{-u}(1 + u) comes out of exprel without a branch.
    """
    hi, lo = max(mean_x, mean_y), min(mean_x, mean_y)
    u = xi / hi
    if lo <= 0.0:
        return math.exp(-u)
    delta = xi * (hi - lo) / (hi * lo)
    return math.exp(-u) * (1.0 + u * float(special.exprel(-delta)))


def m_outage(
    a: float,
    b: float,
    c: float,
    d: float,
    xi: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """M(a, b, c, d): P[X + Y < xi] with X ~ Exp(a + b x), Y ~ Exp(c + d x), x ~ Exp(1)."""
    if a <= 0.0 or c <= 0.0 or b < 0.0 or d < 0.0:
        raise DomainError(f"m_outage needs a, c > 0 and b, d >= 0, got {(a, b, c, d)}")
    if xi < 0.0:
        raise DomainError(f"outage threshold must be >= 0, got {xi}")
    if xi == 0.0:
        return 0.0

    def integrand(x: float) -> float:
        return math.exp(-x) * _sum_of_exponentials_survival(a + b * x, c + d * x, xi)

    return min(1.0, max(0.0, 1.0 - integrate_semi_infinite(integrand, spec)))


def m_tilde_outage(
    a: float, b: float, xi: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """M~(a, b) = 1 - E_x[exp(-xi / (a + b x))], x ~ Exp(1)."""
    if a <= 0.0 or b < 0.0:
        raise DomainError(f"m_tilde_outage needs a > 0 and b >= 0, got {(a, b)}")
    if xi < 0.0:
        raise DomainError(f"outage threshold must be >= 0, got {xi}")
    if xi == 0.0:
        return 0.0

    def integrand(x: float) -> float:
        return math.exp(-x) * -math.expm1(-xi / (a + b * x))

    return min(1.0, max(0.0, integrate_semi_infinite(integrand, spec)))


def hypoexponential_cdf(means: Sequence[float], xi: float) -> float:
    """CDF at ``xi`` of a sum of independent exponentials with the given means.

    Evaluated as a phase-type distribution through a matrix exponential,
    which needs no distinct-rate condition.
    """
    rates = 1.0 / np.asarray(means, dtype=float)
    if rates.size == 0 or np.any(~np.isfinite(rates)) or np.any(rates <= 0.0):
        raise DomainError(f"hypoexponential_cdf needs positive finite means, got {list(means)}")
    if xi < 0.0:
        raise DomainError(f"outage threshold must be >= 0, got {xi}")
    generator = np.diag(-rates) + np.diag(rates[:-1], k=1)
    survival = float(linalg.expm(generator * xi)[0].sum())
    return min(1.0, max(0.0, 1.0 - survival))
