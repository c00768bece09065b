"""Max-average-rate solvers: frozen values, round trips, asymptotics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qoslink.channel import ChannelSpec, effective_capacity_rayleigh_iid, ergodic_capacity
from qoslink.errors import BracketFailure
from qoslink.sources import (
    DiscreteMarkovSource,
    FluidMarkovSource,
    MmppSource,
    OnOffContinuousParams,
    OnOffDiscreteParams,
    effective_bandwidth_onoff_discrete,
    effective_bandwidth_onoff_fluid,
    effective_bandwidth_onoff_mmpp,
)
from qoslink.throughput import (
    high_snr_slope,
    low_theta_asymptotics,
    max_avg_rate_nstate,
    max_avg_rate_onoff_discrete,
    max_avg_rate_onoff_fluid,
    max_avg_rate_onoff_mmpp,
)

LN2 = math.log(2.0)


# frozen solver outputs, computed with mpmath at 50 digits
def test_discrete_example_frozen():
    res = max_avg_rate_onoff_discrete(2.0, 1.0, 0.5, 0.5)
    assert res.r_avg_star == pytest.approx(1.3115406301998319, rel=1e-12)
    assert res.lambda_star == pytest.approx(2.6230812603996639, rel=1e-12)
    assert res.method == "closed_form"
    assert res.effective_capacity == 2.0 and res.theta == 1.0


def test_fluid_example_frozen():
    res = max_avg_rate_onoff_fluid(2.0, 1.0, 50.0, 50.0)
    assert res.r_avg_star == pytest.approx(1.9615384615384615, rel=1e-12)
    assert res.lambda_star == pytest.approx(3.9230769230769231, rel=1e-12)


def test_mmpp_example_frozen():
    res = max_avg_rate_onoff_mmpp(2.0, 1.0, 50.0, 50.0)
    assert res.r_avg_star == pytest.approx(1.1415696942436788, rel=1e-12)


def test_always_on_discrete_is_exactly_ce():
    res = max_avg_rate_onoff_discrete(1.7, 0.9, 0.4, 1.0)
    assert res.r_avg_star == 1.7
    assert res.lambda_star == 1.7


def test_always_on_fluid_is_exactly_ce():
    res = max_avg_rate_onoff_fluid(1.7, 0.9, 2.0, 0.0)
    assert res.r_avg_star == 1.7


def test_poisson_limit_mmpp():
    # beta = 0 leaves a plain Poisson stream: r* = ce * theta/(e^theta - 1)
    res = max_avg_rate_onoff_mmpp(1.7, 0.9, 2.0, 0.0)
    assert res.r_avg_star == pytest.approx(1.7 * 0.9 / math.expm1(0.9), rel=1e-14)


def test_absorbing_off_gives_zero():
    with pytest.warns(UserWarning, match="absorbing"):
        res = max_avg_rate_onoff_discrete(2.0, 1.0, 1.0, 0.3)
    assert res.r_avg_star == 0.0 and res.lambda_star == 0.0


@settings(max_examples=10, deadline=None)
@given(
    st.floats(min_value=0.0, max_value=0.98),
    st.floats(min_value=0.0, max_value=0.98),
    st.floats(min_value=0.01, max_value=20.0),
    st.floats(min_value=0.01, max_value=5.0),
)
def test_discrete_round_trip(p11, p22, ce, theta):
    res = max_avg_rate_onoff_discrete(ce, theta, p11, p22)
    back = effective_bandwidth_onoff_discrete(
        OnOffDiscreteParams(p11, p22, res.lambda_star), theta
    )
    assert back == pytest.approx(ce, rel=1e-9)
    # mean rate cannot beat the capacity it was matched to
    assert 0.0 <= res.r_avg_star <= ce * (1.0 + 1e-12)


@settings(max_examples=10, deadline=None)
@given(
    st.floats(min_value=0.05, max_value=60.0),
    st.floats(min_value=0.0, max_value=60.0),
    st.floats(min_value=0.01, max_value=20.0),
    st.floats(min_value=0.01, max_value=5.0),
)
def test_continuous_round_trips(alpha, beta, ce, theta):
    params_of = lambda lam: OnOffContinuousParams(alpha, beta, lam)
    res = max_avg_rate_onoff_fluid(ce, theta, alpha, beta)
    assert effective_bandwidth_onoff_fluid(params_of(res.lambda_star), theta) == pytest.approx(ce, rel=1e-9)
    resm = max_avg_rate_onoff_mmpp(ce, theta, alpha, beta)
    assert effective_bandwidth_onoff_mmpp(params_of(resm.lambda_star), theta) == pytest.approx(ce, rel=1e-9)
    assert resm.r_avg_star <= res.r_avg_star * (1.0 + 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(min_value=0.05, max_value=5.0), st.floats(min_value=0.05, max_value=5.0))
def test_r_star_increases_with_capacity(ce_lo, gap):
    lo = max_avg_rate_onoff_discrete(ce_lo, 0.7, 0.6, 0.8).r_avg_star
    hi = max_avg_rate_onoff_discrete(ce_lo + gap, 0.7, 0.6, 0.8).r_avg_star
    assert hi > lo


def test_nstate_matches_closed_form_discrete():
    J = np.array([[0.3, 0.7], [0.4, 0.6]])
    src = DiscreteMarkovSource(J, np.array([0.0, 1.0]))
    num = max_avg_rate_nstate(src, 0.8, 1.7)
    ref = max_avg_rate_onoff_discrete(1.7, 0.8, 0.3, 0.6)
    assert num.lambda_star == pytest.approx(ref.lambda_star, rel=1e-8)
    assert num.r_avg_star == pytest.approx(ref.r_avg_star, rel=1e-8)
    assert num.method == "root_find"


def test_nstate_matches_closed_form_fluid_and_mmpp():
    G = np.array([[-2.0, 2.0], [3.0, -3.0]])
    shape = np.array([0.0, 1.0])
    num_f = max_avg_rate_nstate(FluidMarkovSource(G, shape), 0.5, 1.2)
    ref_f = max_avg_rate_onoff_fluid(1.2, 0.5, 2.0, 3.0)
    assert num_f.lambda_star == pytest.approx(ref_f.lambda_star, rel=1e-8)
    num_m = max_avg_rate_nstate(MmppSource(G, shape), 0.5, 1.2)
    ref_m = max_avg_rate_onoff_mmpp(1.2, 0.5, 2.0, 3.0)
    assert num_m.lambda_star == pytest.approx(ref_m.lambda_star, rel=1e-8)


def test_nstate_degenerate_chain_acts_constant():
    # every row jumps straight to the top state: the source is constant
    # at the top rate, so r* equals the capacity target
    J = np.tile(np.eye(10)[-1], (10, 1))
    src = DiscreteMarkovSource(J, np.arange(10.0))
    res = max_avg_rate_nstate(src, 1.0, 3.0)
    assert res.r_avg_star == pytest.approx(3.0, rel=1e-8)
    assert res.lambda_star == pytest.approx(3.0 / 9.0, rel=1e-8)


def test_nstate_silent_source_has_no_bracket():
    J = np.array([[0.3, 0.7], [0.4, 0.6]])
    src = DiscreteMarkovSource(J, np.zeros(2))
    with pytest.raises(BracketFailure):
        max_avg_rate_nstate(src, 0.8, 1.7)


def test_nstate_zero_capacity():
    J = np.array([[0.3, 0.7], [0.4, 0.6]])
    src = DiscreteMarkovSource(J, np.array([0.0, 1.0]))
    res = max_avg_rate_nstate(src, 0.8, 0.0)
    assert res.r_avg_star == 0.0 and res.lambda_star == 0.0


def test_high_snr_slope_frozen():
    assert high_snr_slope("discrete", 2.0, 0.5) == pytest.approx(
        0.17328679513998633, rel=1e-14
    )
    # fluid shares the discrete branch structure
    assert high_snr_slope("fluid", 2.0, 0.5) == high_snr_slope("discrete", 2.0, 0.5)


def test_high_snr_slope_branches():
    # below the seam the discrete/fluid prelog is flat at p_on
    assert high_snr_slope("discrete", 0.3, 0.7) == 0.7
    assert high_snr_slope("fluid", 0.05, 0.25) == 0.25
    # theta = 0 is the unconstrained (ergodic) prelog for every family
    for kind in ("discrete", "fluid", "mmpp"):
        assert high_snr_slope(kind, 0.0, 0.4) == 1.0
    # seam continuity
    for kind in ("discrete", "fluid", "mmpp"):
        lo = high_snr_slope(kind, LN2 * (1 - 1e-12), 0.7)
        hi = high_snr_slope(kind, LN2 * (1 + 1e-12), 0.7)
        assert lo == pytest.approx(hi, rel=1e-9)


@settings(max_examples=10, deadline=None)
@given(
    st.sampled_from(["discrete", "fluid", "mmpp"]),
    st.floats(min_value=1e-3, max_value=10.0),
    st.floats(min_value=1e-3, max_value=10.0),
    st.floats(min_value=0.05, max_value=1.0),
)
def test_high_snr_slope_monotone_in_theta(kind, t1, t2, p_on):
    lo, hi = sorted((t1, t2))
    s_lo, s_hi = high_snr_slope(kind, lo, p_on), high_snr_slope(kind, hi, p_on)
    assert s_hi <= s_lo * (1.0 + 1e-12)
    assert 0.0 < s_hi and s_lo <= 1.0


def _r_star_of_theta(kind, snr, m, theta):
    ce = effective_capacity_rayleigh_iid(snr, theta, m).value
    if kind == "discrete":
        return max_avg_rate_onoff_discrete(ce, theta, 0.8, 0.7).r_avg_star
    if kind == "fluid":
        return max_avg_rate_onoff_fluid(ce, theta, 1.0, 2.0).r_avg_star
    return max_avg_rate_onoff_mmpp(ce, theta, 1.0, 2.0).r_avg_star


@pytest.mark.parametrize("kind", ["discrete", "fluid", "mmpp"])
def test_low_theta_derivative_matches_finite_difference(kind):
    spec = ChannelSpec(m=10, rho=0.0)
    snr = 1.0
    kw = dict(p11=0.8, p22=0.7) if kind == "discrete" else dict(alpha=1.0, beta=2.0)
    asym = low_theta_asymptotics(kind, spec, snr, **kw)
    assert asym.low_theta_limit == pytest.approx(ergodic_capacity(spec, snr), rel=1e-12)
    assert asym.high_snr_slope == 1.0
    erg = asym.low_theta_limit
    th = 1e-3
    s1 = (_r_star_of_theta(kind, snr, 10, th) - erg) / th
    s2 = (_r_star_of_theta(kind, snr, 10, 2 * th) - erg) / (2 * th)
    richardson = 2 * s1 - s2
    assert richardson == pytest.approx(asym.low_theta_derivative, rel=1e-2)


def test_mmpp_derivative_sits_below_fluid_by_half_ergodic():
    spec = ChannelSpec(m=10, rho=0.0)
    a_f = low_theta_asymptotics("fluid", spec, 1.0, alpha=1.0, beta=2.0)
    a_m = low_theta_asymptotics("mmpp", spec, 1.0, alpha=1.0, beta=2.0)
    gap = a_m.low_theta_derivative - a_f.low_theta_derivative
    assert gap == pytest.approx(-0.5 * a_f.low_theta_limit, rel=1e-12)


def test_low_theta_validation():
    spec = ChannelSpec(m=2, rho=0.0)
    with pytest.raises(ValueError, match="requires p11"):
        low_theta_asymptotics("discrete", spec, 1.0)
    with pytest.raises(ValueError, match="requires alpha"):
        low_theta_asymptotics("mmpp", spec, 1.0, p11=0.5, p22=0.5)
    with pytest.raises(ValueError, match="kind"):
        low_theta_asymptotics("poisson", spec, 1.0, alpha=1.0, beta=1.0)
    with pytest.warns(UserWarning, match="absorbing"):
        with pytest.raises(ValueError, match="p11"):
            low_theta_asymptotics("discrete", spec, 1.0, p11=1.0, p22=0.5)


def test_solver_input_validation():
    with pytest.raises(ValueError, match="theta"):
        max_avg_rate_onoff_discrete(1.0, 0.0, 0.5, 0.5)
    with pytest.raises(ValueError, match="capacity"):
        max_avg_rate_onoff_fluid(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="p_on"):
        high_snr_slope("fluid", 1.0, 0.0)
    with pytest.raises(TypeError, match="source type"):
        max_avg_rate_nstate(object(), 1.0, 1.0)


def test_overflow_free_at_extreme_theta_ce():
    # theta * ce = 5000 would overflow the naive closed form
    res = max_avg_rate_onoff_discrete(500.0, 10.0, 0.8, 0.7)
    assert math.isfinite(res.r_avg_star)
    # peak rate tends to ce + ln(1/p22)/theta when the exponential dies
    expect = 500.0 + math.log(1.0 / 0.7) / 10.0
    assert res.lambda_star == pytest.approx(expect, rel=1e-12)


def test_birth_death_nstate_golden():
    # 10-state birth-death fluid, xi = 0.5; the root is frozen and the
    # effective bandwidth at the root is re-derived through a finite
    # horizon log-MGF (matrix exponential with renormalized steps,
    # Richardson-extrapolated in the horizon) so the eigenvalue path is
    # checked by an independent route
    import scipy.linalg

    from qoslink.energy import build_birth_death_fluid
    from qoslink.sources import effective_bandwidth_fluid, stationary_distribution_fluid

    bd = build_birth_death_fluid(10, 1.0, 2.0, 1.5)
    theta, ce = 0.8, 5.0
    res = max_avg_rate_nstate(bd, theta, ce)
    assert res.lambda_star == pytest.approx(0.455225330661051, rel=1e-9)
    assert res.r_avg_star == pytest.approx(0.6761631377707392, rel=1e-9)

    scaled_rates = bd.rates * res.lambda_star
    eigen = effective_bandwidth_fluid(FluidMarkovSource(bd.generator, scaled_rates), theta)
    assert eigen == pytest.approx(ce, abs=5e-9)

    M = theta * np.diag(scaled_rates) + bd.generator
    pi = stationary_distribution_fluid(bd.generator)
    dt = 5.0
    E = scipy.linalg.expm(M * dt)

    def horizon(T):
        v = pi.copy()
        logz = 0.0
        for _ in range(int(round(T / dt))):
            v = v @ E
            s = v.sum()
            logz += math.log(s)
            v /= s
        return logz / (theta * T)

    # the horizon bias is O(1/T); two horizons extrapolate it away
    extrap = 2.0 * horizon(400.0) - horizon(200.0)
    assert extrap == pytest.approx(eigen, abs=1e-9)
