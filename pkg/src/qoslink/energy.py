"""Low-snr energy efficiency: minimum energy per bit and wideband slope.

Closed forms cover the constant, ON/OFF discrete, ON/OFF fluid and
ON/OFF MMPP sources; the minimum received energy per bit is log_e2 over
the mean channel gain for the first three regardless of burstiness and
QoS strictness, while the MMPP pays an (e^theta - 1)/theta penalty.
Burstiness and correlation instead show up in the wideband slope.  A
numeric route differentiates the r*(snr) curve at snr = 0 and must
reproduce the closed forms; it also serves the n-state sources that
have none.  Builders for the n-state reference models live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binom

from .channel import (
    ChannelSpec,
    effective_capacity_mc,
    effective_capacity_quadrature,
    fading_moments,
)
from .errors import IllConditioned
from .sources import (
    DiscreteMarkovSource,
    FluidMarkovSource,
    MmppSource,
    OnOffContinuousParams,
    OnOffDiscreteParams,
)
from .throughput import (
    max_avg_rate_nstate,
    max_avg_rate_onoff_discrete,
    max_avg_rate_onoff_fluid,
    max_avg_rate_onoff_mmpp,
)

LN2 = math.log(2.0)

_RICHARDSON_H = 1e-4
_RICHARDSON_REL_TOL = 1e-2
_RICHARDSON_RETRIES = 4

_KINDS = ("constant", "discrete", "fluid", "mmpp", "nstate")


@dataclass(frozen=True)
class EnergyMetrics:
    """Minimum energy per bit and wideband slope at one QoS exponent."""

    ebn0_min_linear: float
    ebn0_min_db: float
    wideband_slope: float
    theta: float


@dataclass(frozen=True)
class EbN0CurvePoint:
    """One sweep point: normalized rate against received E_b/N_0."""

    ebn0_db: float
    normalized_rate: float
    snr: float


def _check_theta_nonneg(theta: float) -> float:
    theta = float(theta)
    if not math.isfinite(theta) or theta < 0:
        raise ValueError(f"theta must be finite and >= 0, got {theta}")
    return theta


def _metrics_from_coef(spec: ChannelSpec, theta: float, coef: float) -> EnergyMetrics:
    """Shared Theorem 8/9/10 shape: only the burstiness coefficient varies."""
    mom = fading_moments(spec)
    ebn0 = LN2 / mom.mean_z
    den = (
        theta / (spec.m * LN2) * mom.cov_sum
        + mom.mean_z_sq
        + coef * (theta * spec.m / LN2) * mom.mean_z ** 2
    )
    slope = 2.0 * mom.mean_z ** 2 / den
    return EnergyMetrics(ebn0, 10.0 * math.log10(ebn0), slope, theta)


def energy_metrics_constant(spec: ChannelSpec, theta: float) -> EnergyMetrics:
    """Constant-rate arrivals: burstiness coefficient is zero."""
    return _metrics_from_coef(spec, _check_theta_nonneg(theta), 0.0)


def energy_metrics_onoff_discrete(
    spec: ChannelSpec, theta: float, p11: float, p22: float
) -> EnergyMetrics:
    theta = _check_theta_nonneg(theta)
    params = OnOffDiscreteParams(p11, p22, 0.0)
    if params.p11 == 1.0:
        raise ValueError("p11 = 1 carries no traffic; energy metrics are undefined")
    eta = (
        (1.0 - params.p22)
        * (params.p11 + params.p22)
        / ((1.0 - params.p11) * (2.0 - params.p11 - params.p22))
    )
    return _metrics_from_coef(spec, theta, eta)


def energy_metrics_onoff_fluid(
    spec: ChannelSpec, theta: float, alpha: float, beta: float
) -> EnergyMetrics:
    theta = _check_theta_nonneg(theta)
    params = OnOffContinuousParams(alpha, beta, 0.0)
    zeta = 2.0 * params.beta / (params.alpha * (params.alpha + params.beta))
    return _metrics_from_coef(spec, theta, zeta)


def energy_metrics_onoff_mmpp(
    spec: ChannelSpec, theta: float, alpha: float, beta: float
) -> EnergyMetrics:
    """MMPP pays (e^theta - 1)/theta on the bit energy; theta = 0 is fluid."""
    theta = _check_theta_nonneg(theta)
    base = energy_metrics_onoff_fluid(spec, theta, alpha, beta)
    if theta == 0.0:
        return base
    penalty = math.expm1(theta) / theta
    ebn0 = base.ebn0_min_linear * penalty
    return EnergyMetrics(
        ebn0, 10.0 * math.log10(ebn0), base.wideband_slope / penalty, theta
    )


def build_binomial_discrete_source(n: int, s: float, lam: float) -> DiscreteMarkovSource:
    """n-state discrete source of n-1 independent ON/OFF microsources.

    Each microsource is ON with probability s independently per block,
    so the state (number ON, plus one) is memoryless: every row of the
    transition matrix is the binomial law itself.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    s = float(s)
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"s must lie in [0, 1], got {s}")
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0:
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    pi = binom.pmf(np.arange(n), n - 1, s)
    return DiscreteMarkovSource(np.tile(pi, (n, 1)), lam * np.arange(n))


def build_birth_death_fluid(n: int, alpha: float, beta: float, lam: float) -> FluidMarkovSource:
    """n-state birth-death fluid source; state i sends at (i-1)*lam.

    Births (rate alpha) move one state up, deaths (rate beta) one down.
    alpha = beta is accepted: the stationary law is then uniform, the
    limit of the geometric law in xi = alpha/beta.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    alpha = float(alpha)
    beta = float(beta)
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValueError(f"alpha must be finite and > 0, got {alpha}")
    if not (math.isfinite(beta) and beta > 0):
        raise ValueError(f"beta must be finite and > 0, got {beta}")
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0:
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    G = np.zeros((n, n))
    G[0, 0], G[0, 1] = -alpha, alpha
    for i in range(1, n - 1):
        G[i, i - 1], G[i, i], G[i, i + 1] = beta, -(alpha + beta), alpha
    G[n - 1, n - 2], G[n - 1, n - 1] = beta, -beta
    return FluidMarkovSource(G, lam * np.arange(n))


def _reraise_at_snr(exc: Exception, snr: float):
    try:
        wrapped = type(exc)(f"at snr = {snr:g}: {exc}")
    except TypeError:
        raise exc
    raise wrapped from exc


def _capacity_at(spec, snr, theta, capacity, n_samples, seed):
    if capacity == "quadrature":
        return effective_capacity_quadrature(spec, snr, theta).value
    if capacity == "mc":
        if seed is None:
            raise ValueError("Monte Carlo capacity needs an explicit seed")
        return effective_capacity_mc(spec, snr, theta, n_samples=n_samples, seed=seed).value
    raise ValueError(f"capacity must be 'quadrature' or 'mc', got {capacity!r}")


def _rate_solver(kind, theta, p11, p22, alpha, beta, source):
    """Returns ce -> r_avg_star for the requested source kind."""
    if kind == "constant":
        return lambda ce: ce
    if kind == "discrete":
        if p11 is None or p22 is None:
            raise ValueError("discrete kind requires p11 and p22")
        return lambda ce: max_avg_rate_onoff_discrete(ce, theta, p11, p22).r_avg_star
    if kind == "fluid":
        if alpha is None or beta is None:
            raise ValueError("fluid kind requires alpha and beta")
        return lambda ce: max_avg_rate_onoff_fluid(ce, theta, alpha, beta).r_avg_star
    if kind == "mmpp":
        if alpha is None or beta is None:
            raise ValueError("mmpp kind requires alpha and beta")
        return lambda ce: max_avg_rate_onoff_mmpp(ce, theta, alpha, beta).r_avg_star
    if kind == "nstate":
        if source is None:
            raise ValueError("nstate kind requires a source object")
        return lambda ce: max_avg_rate_nstate(source, theta, ce).r_avg_star
    raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")


def ebn0_curve(
    kind: str,
    spec: ChannelSpec,
    theta: float,
    snr_grid: Sequence[float],
    *,
    p11: Optional[float] = None,
    p22: Optional[float] = None,
    alpha: Optional[float] = None,
    beta: Optional[float] = None,
    source=None,
    capacity: str = "quadrature",
    n_samples: int = 10 ** 6,
    seed: Optional[int] = None,
) -> list:
    """Sweep snr and report (E_b/N_0, rate/symbol) operating points.

    Points where the supportable rate is zero are dropped.  Capacity
    and solver failures are re-raised with the offending snr attached.
    """
    grid = [float(s) for s in snr_grid]
    if not grid:
        raise ValueError("snr_grid must not be empty")
    if any(s <= 0 or not math.isfinite(s) for s in grid):
        raise ValueError("snr_grid entries must be finite and > 0")
    if sorted(grid) != grid:
        raise ValueError("snr_grid must be sorted ascending")
    solver = _rate_solver(kind, theta, p11, p22, alpha, beta, source)
    points = []
    for snr in grid:
        try:
            ce = _capacity_at(spec, snr, theta, capacity, n_samples, seed)
            r_star = solver(ce)
        except (ValueError, TypeError):
            raise
        except Exception as exc:  # numeric failures gain sweep context
            _reraise_at_snr(exc, snr)
        if r_star == 0.0:
            continue
        rate = r_star / spec.m
        points.append(EbN0CurvePoint(10.0 * math.log10(snr / rate), rate, snr))
    return points


def numeric_energy_metrics(
    kind: str,
    spec: ChannelSpec,
    theta: float,
    *,
    p11: Optional[float] = None,
    p22: Optional[float] = None,
    alpha: Optional[float] = None,
    beta: Optional[float] = None,
    source=None,
    capacity: str = "quadrature",
    h: float = _RICHARDSON_H,
) -> EnergyMetrics:
    """Energy metrics from derivatives of r*(snr) at snr = 0.

    Richardson extrapolation of first differences built on r*(h), r*(2h)
    and r*(4h); r*(0) = 0 exactly.  When the extrapolant consistency
    check fails the step is halved and the stencil rebuilt (bursty
    sources carry large high-order snr-derivatives, so the initial h can
    be truncation-dominated); after _RICHARDSON_RETRIES halvings the
    failure is reported.  Only deterministic (quadrature) capacity is
    accepted: second differences amplify Monte Carlo noise far beyond
    usability.
    """
    if capacity != "quadrature":
        raise ValueError(
            "numeric energy metrics require deterministic capacity; "
            "Monte Carlo estimates are rejected here"
        )
    solver = _rate_solver(kind, theta, p11, p22, alpha, beta, source)
    h = float(h)
    if not (math.isfinite(h) and 0 < h < 0.01):
        raise ValueError(f"h must be a small positive step, got {h}")

    def r_of(snr):
        return solver(effective_capacity_quadrature(spec, snr, theta).value)

    for attempt in range(_RICHARDSON_RETRIES + 1):
        last = attempt == _RICHARDSON_RETRIES
        r1, r2, r4 = r_of(h), r_of(2 * h), r_of(4 * h)
        # first derivative: r(0) = 0 makes r(s)/s a one-sided difference
        d1, d2 = r1 / h, r2 / (2 * h)
        lvl1 = 2 * d1 - d2
        lvl2 = 2 * d2 - r4 / (4 * h)
        r_dot = (4 * lvl1 - lvl2) / 3.0
        if r_dot <= 0 or abs(lvl1 - lvl2) > _RICHARDSON_REL_TOL * abs(r_dot):
            if last:
                raise IllConditioned(
                    f"first-derivative extrapolants disagree ({lvl1:g} vs "
                    f"{lvl2:g}); the rate curve is too rough at this theta"
                )
            h *= 0.5
            continue
        q1 = (r2 - 2 * r1) / h ** 2
        q2 = (r4 - 2 * r2) / (2 * h) ** 2
        r_ddot = 2 * q1 - q2
        if r_ddot >= 0 or abs(q1 - q2) > _RICHARDSON_REL_TOL * abs(r_ddot):
            if last:
                raise IllConditioned(
                    f"second-derivative extrapolants disagree ({q1:g} vs "
                    f"{q2:g}); the rate curve is too rough at this theta"
                )
            h *= 0.5
            continue
        break
    rn_dot = r_dot / spec.m
    rn_ddot = r_ddot / spec.m
    ebn0 = 1.0 / rn_dot
    slope = -2.0 * rn_dot ** 2 * LN2 / rn_ddot
    return EnergyMetrics(ebn0, 10.0 * math.log10(ebn0), slope, float(theta))
