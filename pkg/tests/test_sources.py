import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qoslink.errors import NoUniqueStationary, ValidationError
from qoslink.sources import (
    DiscreteMarkovSource,
    FluidMarkovSource,
    MmppSource,
    OnOffContinuousParams,
    OnOffDiscreteParams,
    as_discrete_source,
    as_fluid_source,
    as_mmpp_source,
    average_rate,
    effective_bandwidth_discrete,
    effective_bandwidth_fluid,
    effective_bandwidth_mmpp,
    effective_bandwidth_onoff_discrete,
    effective_bandwidth_onoff_fluid,
    effective_bandwidth_onoff_mmpp,
    source_from_json,
    stationary_distribution_discrete,
    stationary_distribution_fluid,
)


def random_chain(rng, n):
    J = rng.random((n, n)) + 0.05
    J /= J.sum(axis=1, keepdims=True)
    return J


# ---------------------------------------------------------------------------
# frozen closed-form values (independently computed at 40-digit precision)
# ---------------------------------------------------------------------------


def test_onoff_discrete_frozen_values():
    p = OnOffDiscreteParams(0.8, 0.8, 2.0)
    assert effective_bandwidth_onoff_discrete(p, 0.5) == pytest.approx(
        1.6215329426932631, rel=1e-12
    )
    assert effective_bandwidth_onoff_discrete(p, 1.0) == pytest.approx(
        1.7864840699482065, rel=1e-12
    )


def test_onoff_discrete_matches_eigen_route():
    p = OnOffDiscreteParams(0.8, 0.8, 2.0)
    closed = effective_bandwidth_onoff_discrete(p, 1.0)
    eigen = effective_bandwidth_discrete(as_discrete_source(p), 1.0)
    assert eigen == pytest.approx(closed, rel=1e-9)


def test_onoff_fluid_frozen_value():
    p = OnOffContinuousParams(50.0, 50.0, 2.0)
    closed = effective_bandwidth_onoff_fluid(p, 1.0)
    assert closed == pytest.approx(1.0099990001999500, rel=1e-12)
    eigen = effective_bandwidth_fluid(as_fluid_source(p), 1.0)
    assert eigen == pytest.approx(closed, rel=1e-9)


def test_onoff_mmpp_frozen_value():
    p = OnOffContinuousParams(50.0, 50.0, 2.0)
    closed = effective_bandwidth_onoff_mmpp(p, 1.0)
    assert closed == pytest.approx(1.7477980408112546, rel=1e-12)
    eigen = effective_bandwidth_mmpp(as_mmpp_source(p), 1.0)
    assert eigen == pytest.approx(closed, rel=1e-9)


def test_five_state_stationary_frozen():
    rng = np.random.default_rng(20260819)
    src = DiscreteMarkovSource(random_chain(rng, 5), np.arange(5.0))
    pi = stationary_distribution_discrete(src)
    expected = [
        0.19276301480425845,
        0.17776759378768492,
        0.18201469652637375,
        0.27686258906938666,
        0.17059210581229828,
    ]
    np.testing.assert_allclose(pi, expected, rtol=1e-12)


# ---------------------------------------------------------------------------
# degenerate / boundary cases
# ---------------------------------------------------------------------------


def test_always_on_source_has_peak_bandwidth():
    # p11=0, p22=1: the chain enters ON and stays, so a* equals the peak
    src = DiscreteMarkovSource(
        np.array([[0.0, 1.0], [0.0, 1.0]]), np.array([0.0, 2.0])
    )
    for theta in (0.01, 1.0, 10.0):
        assert effective_bandwidth_discrete(src, theta) == pytest.approx(2.0)


def test_absorbing_off_is_zero_with_warning():
    with pytest.warns(UserWarning, match="absorbing"):
        p = OnOffDiscreteParams(1.0, 0.5, 3.0)
    assert effective_bandwidth_onoff_discrete(p, 2.0) == 0.0
    assert average_rate(p) == 0.0


def test_fluid_beta_zero_gives_peak():
    G = np.array([[-4.0, 4.0], [0.0, 0.0]])
    src = FluidMarkovSource(G, np.array([0.0, 1.5]))
    for theta in (0.1, 1.0, 25.0):
        assert effective_bandwidth_fluid(src, theta) == pytest.approx(1.5)


def test_silent_source_is_zero():
    assert effective_bandwidth_onoff_discrete(OnOffDiscreteParams(0.5, 0.5, 0.0), 1.0) == 0.0
    assert effective_bandwidth_onoff_fluid(OnOffContinuousParams(1.0, 1.0, 0.0), 1.0) == 0.0
    assert effective_bandwidth_onoff_mmpp(OnOffContinuousParams(1.0, 1.0, 0.0), 1.0) == 0.0


def test_constant_rate_single_state():
    src = DiscreteMarkovSource(np.array([[1.0]]), np.array([3.25]))
    assert effective_bandwidth_discrete(src, 0.7) == pytest.approx(3.25)
    fl = FluidMarkovSource(np.array([[0.0]]), np.array([3.25]))
    assert effective_bandwidth_fluid(fl, 0.7) == pytest.approx(3.25)


def test_theta_must_be_positive():
    p = OnOffDiscreteParams(0.5, 0.5, 1.0)
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            effective_bandwidth_onoff_discrete(p, bad)


def test_extreme_theta_lambda_product_stays_finite():
    """Scaled evaluation must survive lam*theta ~ 1e4 without overflow."""
    p = OnOffDiscreteParams(0.3, 0.7, 1000.0)
    a = effective_bandwidth_onoff_discrete(p, 10.0)
    # at this depth the root is p22*e^{lam*theta} to machine precision
    assert a == pytest.approx(1000.0 + math.log(0.7) / 10.0, rel=1e-12)
    eigen = effective_bandwidth_discrete(as_discrete_source(p), 10.0)
    assert eigen == pytest.approx(a, rel=1e-9)

    burst = OnOffDiscreteParams(0.3, 0.0, 1000.0)
    a2 = effective_bandwidth_onoff_discrete(burst, 10.0)
    assert a2 == pytest.approx(500.0 + math.log(0.7) / 20.0, rel=1e-12)


def test_branch_seam_is_continuous():
    # lam*theta = 300 is where the scaled evaluation takes over
    p = OnOffDiscreteParams(0.4, 0.6, 100.0)
    lo = effective_bandwidth_onoff_discrete(p, 2.99999)
    hi = effective_bandwidth_onoff_discrete(p, 3.00001)
    assert hi >= lo
    assert hi - lo < 1e-4


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(
    p11=st.floats(min_value=0.05, max_value=0.95),
    p22=st.floats(min_value=0.05, max_value=0.95),
    lam=st.floats(min_value=0.1, max_value=20.0),
    theta=st.floats(min_value=0.01, max_value=10.0),
)
def test_onoff_discrete_between_mean_and_peak(p11, p22, lam, theta):
    p = OnOffDiscreteParams(p11, p22, lam)
    a = effective_bandwidth_onoff_discrete(p, theta)
    assert average_rate(p) - 1e-9 <= a <= lam + 1e-9


@settings(max_examples=10, deadline=None)
@given(
    alpha=st.floats(min_value=0.05, max_value=60.0),
    beta=st.floats(min_value=0.05, max_value=60.0),
    lam=st.floats(min_value=0.1, max_value=20.0),
    theta=st.floats(min_value=0.01, max_value=10.0),
)
def test_onoff_continuous_bounds_and_ordering(alpha, beta, lam, theta):
    p = OnOffContinuousParams(alpha, beta, lam)
    af = effective_bandwidth_onoff_fluid(p, theta)
    am = effective_bandwidth_onoff_mmpp(p, theta)
    assert average_rate(p) - 1e-9 <= af <= lam + 1e-9
    # Poisson arrivals are burstier than fluid at the same mean profile
    assert am >= af - 1e-12


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_nstate_bandwidth_monotone_in_theta(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    src = DiscreteMarkovSource(random_chain(rng, n), rng.random(n) * 5.0)
    thetas = [0.01, 0.1, 1.0, 5.0, 20.0]
    vals = [effective_bandwidth_discrete(src, t) for t in thetas]
    mean = average_rate(src)
    peak = float(np.max(src.rates))
    for lo, hi in zip(vals, vals[1:]):
        assert hi >= lo - 1e-9
    assert vals[0] >= mean - 1e-6
    assert vals[-1] <= peak + 1e-9


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_small_theta_approaches_mean_rate(seed):
    rng = np.random.default_rng(seed)
    src = DiscreteMarkovSource(random_chain(rng, 4), rng.random(4) * 3.0)
    a = effective_bandwidth_discrete(src, 1e-6)
    assert a == pytest.approx(average_rate(src), rel=1e-3)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_stationary_properties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    J = random_chain(rng, n)
    src = DiscreteMarkovSource(J, np.zeros(n))
    pi = stationary_distribution_discrete(src)
    assert np.all(pi >= 0)
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(pi @ J, pi, atol=1e-12)


def test_fluid_stationary_accepts_raw_generator():
    G = np.array([[-2.0, 2.0], [3.0, -3.0]])
    pi = stationary_distribution_fluid(G)
    np.testing.assert_allclose(pi, [0.6, 0.4], rtol=1e-12)


def test_average_rate_routes_match():
    p = OnOffDiscreteParams(0.3, 0.6, 4.0)
    assert average_rate(as_discrete_source(p)) == pytest.approx(average_rate(p), rel=1e-12)
    q = OnOffContinuousParams(2.0, 6.0, 4.0)
    assert average_rate(as_fluid_source(q)) == pytest.approx(1.0, rel=1e-12)
    assert average_rate(as_mmpp_source(q)) == pytest.approx(1.0, rel=1e-12)


# ---------------------------------------------------------------------------
# construction failures
# ---------------------------------------------------------------------------


def test_disconnected_chain_rejected():
    J = np.array(
        [
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.5],
            [0.0, 0.0, 0.5, 0.5],
        ]
    )
    with pytest.raises(NoUniqueStationary):
        DiscreteMarkovSource(J, np.zeros(4))


def test_periodic_chain_rejected():
    J = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError, match="periodic"):
        DiscreteMarkovSource(J, np.zeros(2))


def test_bad_row_sum_rejected():
    with pytest.raises(ValueError, match="sum to 1"):
        DiscreteMarkovSource(np.array([[0.5, 0.4], [0.5, 0.5]]), np.zeros(2))
    with pytest.raises(ValueError, match="sum to 0"):
        FluidMarkovSource(np.array([[-1.0, 0.5], [1.0, -1.0]]), np.zeros(2))


def test_fluid_stationary_rejects_split_generator():
    G = np.zeros((2, 2))  # two absorbing states, no unique stationary law
    with pytest.raises(NoUniqueStationary):
        stationary_distribution_fluid(G)


def test_onoff_param_validation():
    with pytest.raises(ValueError):
        OnOffDiscreteParams(1.2, 0.5, 1.0)
    with pytest.raises(ValueError):
        OnOffDiscreteParams(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        OnOffDiscreteParams(0.5, 0.5, -1.0)
    with pytest.raises(ValueError):
        OnOffContinuousParams(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        OnOffContinuousParams(1.0, -0.5, 1.0)


def test_source_arrays_are_read_only():
    src = as_discrete_source(OnOffDiscreteParams(0.5, 0.5, 1.0))
    with pytest.raises(ValueError):
        src.transition_probs[0, 0] = 0.0


# ---------------------------------------------------------------------------
# JSON construction
# ---------------------------------------------------------------------------


def test_source_from_json_discrete_round_trip():
    doc = {
        "kind": "discrete",
        "transition": [[0.8, 0.2], [0.2, 0.8]],
        "rates": [0.0, 2.0],
    }
    src = source_from_json(doc)
    assert isinstance(src, DiscreteMarkovSource)
    assert effective_bandwidth_discrete(src, 1.0) == pytest.approx(
        1.7864840699482065, rel=1e-9
    )


def test_source_from_json_onoff_kinds():
    p = source_from_json({"kind": "onoff-discrete", "p11": 0.8, "p22": 0.8, "lambda": 2})
    assert isinstance(p, OnOffDiscreteParams)
    q = source_from_json({"kind": "onoff-fluid", "alpha": 50, "beta": 50, "lambda": 2})
    assert isinstance(q, OnOffContinuousParams)
    assert source_from_json('{"kind": "onoff-mmpp", "alpha": 1, "beta": 1, "lambda": 2}')


def test_source_from_json_reports_field_paths():
    with pytest.raises(ValidationError) as err:
        source_from_json({"kind": "discrete", "transition": [[0.5, 0.5], [1.0]], "rates": [0, 1]})
    assert err.value.field_path == "transition[1]"

    with pytest.raises(ValidationError) as err:
        source_from_json(
            {"kind": "discrete", "transition": [[0.5, 0.5], [0.5, "x"]], "rates": [0, 1]}
        )
    assert err.value.field_path == "transition[1][1]"

    with pytest.raises(ValidationError) as err:
        source_from_json({"kind": "onoff-discrete", "p11": 0.5, "p22": 0.5})
    assert err.value.field_path == "lambda"

    with pytest.raises(ValidationError) as err:
        source_from_json({"kind": "telepathy"})
    assert err.value.field_path == "kind"

    with pytest.raises(ValidationError):
        source_from_json("not json at all {")


def test_source_from_json_rejects_unstable_matrix():
    doc = {"kind": "discrete", "transition": [[0.7, 0.2], [0.5, 0.5]], "rates": [0, 1]}
    with pytest.raises(ValidationError) as err:
        source_from_json(doc)
    assert err.value.field_path == "transition"


def test_converters_shape():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        src = as_discrete_source(OnOffDiscreteParams(0.4, 0.7, 5.0))
    np.testing.assert_allclose(src.rates, [0.0, 5.0])
    fl = as_fluid_source(OnOffContinuousParams(2.0, 3.0, 5.0))
    np.testing.assert_allclose(fl.generator, [[-2.0, 2.0], [3.0, -3.0]])
