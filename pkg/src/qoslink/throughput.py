"""Maximum average arrival rate under a queue-decay constraint.

Given the effective capacity C_E of the link at exponent theta, these
solvers find the largest mean arrival rate a Markovian source can carry
while the queue-tail requirement still holds: the source's effective
bandwidth at theta must not exceed C_E.  Two-state ON/OFF sources have
closed forms; for general n-state sources the per-state rate scale is
found by bisection.  Asymptotic behavior at theta -> 0 (ergodic limit
and first derivative) and at high snr (rate prelog) is also exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSpec, ergodic_capacity, log_rate_cov_sum
from .errors import BracketFailure, InvalidRegime
from .sources import (
    DiscreteMarkovSource,
    FluidMarkovSource,
    MmppSource,
    OnOffContinuousParams,
    OnOffDiscreteParams,
    effective_bandwidth_discrete,
    effective_bandwidth_fluid,
    effective_bandwidth_mmpp,
    stationary_distribution_discrete,
    stationary_distribution_fluid,
)

LN2 = math.log(2.0)

_BRACKET_CAP_DOUBLINGS = 60
_LAMBDA_WIDTH_TOL = 1e-12
_RESIDUAL_REL_TOL = 1e-9


@dataclass(frozen=True)
class ThroughputResult:
    """Solution of the max-average-rate problem at one (theta, C_E)."""

    r_avg_star: float
    lambda_star: float
    theta: float
    effective_capacity: float
    method: str  # closed_form | root_find


@dataclass(frozen=True)
class AsymptoticSlopes:
    """theta -> 0 behavior of r*(theta) plus the high-snr rate prelog.

    ``high_snr_slope`` carries the theta -> 0 value of the prelog, which
    is 1 regardless of source burstiness; the theta-dependent slopes
    live in high_snr_slope() itself.
    """

    low_theta_limit: float
    low_theta_derivative: float
    high_snr_slope: float


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not math.isfinite(theta) or theta <= 0:
        raise ValueError(f"theta must be finite and > 0, got {theta}")
    return theta


def _check_ce(ce: float) -> float:
    ce = float(ce)
    if not math.isfinite(ce) or ce < 0:
        raise ValueError(f"effective capacity must be finite and >= 0, got {ce}")
    return ce


def max_avg_rate_onoff_discrete(
    ce: float, theta: float, p11: float, p22: float
) -> ThroughputResult:
    """Largest mean rate of a discrete ON/OFF source the link supports.

    The ON-state rate achieving it satisfies a*(theta; lambda*) = C_E,
    which solves in closed form; evaluated as
    lambda* = C_E + (1/theta) * [log(1 - p11 e^{-theta C_E})
              - log(p22 + (1-p11-p22) e^{-theta C_E})]
    which is exact and overflow-free for any theta*C_E.
    """
    ce = _check_ce(ce)
    theta = _check_theta(theta)
    params = OnOffDiscreteParams(p11, p22, 0.0)
    if params.p11 == 1.0:
        return ThroughputResult(0.0, 0.0, theta, ce, "closed_form")
    em = math.exp(-theta * ce)
    num = 1.0 - params.p11 * em
    den = params.p22 + (1.0 - params.p11 - params.p22) * em
    if num <= 0.0 or den <= 0.0:
        raise InvalidRegime(
            f"log argument collapsed (num {num}, den {den}); "
            "parameters are outside the supported regime"
        )
    lam = ce + (math.log(num) - math.log(den)) / theta
    return ThroughputResult(params.p_on * lam, lam, theta, ce, "closed_form")


def max_avg_rate_onoff_fluid(
    ce: float, theta: float, alpha: float, beta: float
) -> ThroughputResult:
    """Largest mean rate of an ON/OFF Markov fluid source."""
    ce = _check_ce(ce)
    theta = _check_theta(theta)
    params = OnOffContinuousParams(alpha, beta, 0.0)
    lam = (theta * ce + params.alpha + params.beta) / (theta * ce + params.alpha) * ce
    return ThroughputResult(params.p_on * lam, lam, theta, ce, "closed_form")


def max_avg_rate_onoff_mmpp(
    ce: float, theta: float, alpha: float, beta: float
) -> ThroughputResult:
    """Largest mean intensity of an ON/OFF MMPP source.

    Identical to the fluid solution scaled by theta/(e^theta - 1): the
    Poisson layer adds burstiness that costs exactly that factor.
    """
    fluid = max_avg_rate_onoff_fluid(ce, theta, alpha, beta)
    factor = fluid.theta / float(np.expm1(fluid.theta))
    return ThroughputResult(
        fluid.r_avg_star * factor,
        fluid.lambda_star * factor,
        fluid.theta,
        fluid.effective_capacity,
        "closed_form",
    )


def _scaled_bandwidth(src, theta: float):
    """(shape coefficients, stationary mean of shape, EB-at-scale callable)."""
    if isinstance(src, DiscreteMarkovSource):
        shape = src.rates
        pi = stationary_distribution_discrete(src)

        def eb(t):
            return effective_bandwidth_discrete(
                DiscreteMarkovSource(src.transition_probs, t * shape), theta
            )

    elif isinstance(src, FluidMarkovSource):
        shape = src.rates
        pi = stationary_distribution_fluid(src.generator)

        def eb(t):
            return effective_bandwidth_fluid(
                FluidMarkovSource(src.generator, t * shape), theta
            )

    elif isinstance(src, MmppSource):
        shape = src.intensities
        pi = stationary_distribution_fluid(src.generator)

        def eb(t):
            return effective_bandwidth_mmpp(
                MmppSource(src.generator, t * shape), theta
            )

    else:
        raise TypeError(f"unsupported source type: {type(src).__name__}")
    return shape, float(pi @ shape), eb


def max_avg_rate_nstate(src, theta: float, ce: float) -> ThroughputResult:
    """Bisection solver for sources whose rates are shape * scale.

    The rate vector of ``src`` is read as the shape coefficients c_i
    (build the source with unit rate scale); the solver finds the scale
    lambda* with a*(theta; lambda* c) = C_E, using that the effective
    bandwidth is monotone in the scale.  Stops when the bracket is
    narrower than 1e-12 or the residual is below 1e-9 relative.
    """
    ce = _check_ce(ce)
    theta = _check_theta(theta)
    shape, mean_shape, eb = _scaled_bandwidth(src, theta)
    if ce == 0.0:
        return ThroughputResult(0.0, 0.0, theta, ce, "root_find")
    hi = ce
    doublings = 0
    while eb(hi) < ce:
        hi *= 2.0
        doublings += 1
        if doublings > _BRACKET_CAP_DOUBLINGS:
            raise BracketFailure(
                "effective bandwidth never reaches the target capacity; "
                "the source has no usable rate states"
            )
    lo = 0.0
    lam = hi
    while hi - lo > _LAMBDA_WIDTH_TOL:
        lam = 0.5 * (lo + hi)
        resid = eb(lam) - ce
        if abs(resid) <= _RESIDUAL_REL_TOL * max(1.0, ce):
            break
        if resid < 0.0:
            lo = lam
        else:
            hi = lam
    return ThroughputResult(lam * mean_shape, lam, theta, ce, "root_find")


def low_theta_asymptotics(
    kind: str,
    spec: ChannelSpec,
    snr: float,
    *,
    p11: float | None = None,
    p22: float | None = None,
    alpha: float | None = None,
    beta: float | None = None,
    n_samples: int = 10 ** 6,
    seed: int = 0,
) -> AsymptoticSlopes:
    """Value and slope of r*(theta) at theta = 0.

    The limit is the ergodic capacity for every source family.  The
    derivative is -(1/2) var(nu) minus a source-burstiness penalty
    proportional to the squared ergodic capacity (eta for the discrete
    chain, zeta for the continuous ones); the MMPP loses an extra
    ergodic-capacity/2 on top from its Poisson layer.
    ``n_samples``/``seed`` only matter for 0 < rho < 1, where the
    variance of nu has no closed form and is estimated by Monte Carlo.
    """
    if kind == "discrete":
        if p11 is None or p22 is None:
            raise ValueError("discrete kind requires p11 and p22")
        params = OnOffDiscreteParams(p11, p22, 0.0)
        if params.p11 == 1.0:
            raise ValueError("p11 = 1 has no throughput to expand")
        coef = (
            (1.0 - params.p22)
            * (params.p11 + params.p22)
            / ((1.0 - params.p11) * (2.0 - params.p11 - params.p22))
        )
        extra = 0.0
    elif kind in ("fluid", "mmpp"):
        if alpha is None or beta is None:
            raise ValueError(f"{kind} kind requires alpha and beta")
        params = OnOffContinuousParams(alpha, beta, 0.0)
        coef = 2.0 * params.beta / (params.alpha * (params.alpha + params.beta))
        extra = 0.5 if kind == "mmpp" else 0.0
    else:
        raise ValueError(f"kind must be discrete, fluid or mmpp, got {kind!r}")
    erg = ergodic_capacity(spec, snr)
    var_nu = log_rate_cov_sum(spec, snr, n_samples=n_samples, seed=seed)
    derivative = -0.5 * var_nu - 0.5 * coef * erg * erg - extra * erg
    return AsymptoticSlopes(erg, derivative, 1.0)


def high_snr_slope(kind: str, theta: float, p_on: float) -> float:
    """Prelog of (1/m) r* versus log2(snr) as snr grows without bound.

    i.i.d. Rayleigh gains assumed.  Piecewise in theta with a continuous
    seam at theta = log_e2 and value 1 at theta = 0 for every kind.
    """
    if kind not in ("discrete", "fluid", "mmpp"):
        raise ValueError(f"kind must be discrete, fluid or mmpp, got {kind!r}")
    theta = float(theta)
    if not math.isfinite(theta) or theta < 0:
        raise ValueError(f"theta must be finite and >= 0, got {theta}")
    p_on = float(p_on)
    if not (0.0 < p_on <= 1.0):
        raise ValueError(f"p_on must lie in (0, 1], got {p_on}")
    if theta == 0.0:
        return 1.0
    if kind == "mmpp":
        em = float(np.expm1(theta))
        return p_on * LN2 / em if theta >= LN2 else p_on * theta / em
    return p_on * LN2 / theta if theta >= LN2 else p_on
