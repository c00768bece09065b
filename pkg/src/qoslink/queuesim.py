"""Monte Carlo queue simulator for checking the large-deviations slopes.

A FIFO queue is fed by a Markovian source trace and drained by the
instantaneous capacity of a sampled fading channel, one fading block at
a time.  The buffer-overflow tail should decay like e^{-theta q} and
the delay tail like e^{-theta a*(theta) d}; this module measures both
slopes so the analytical pair (theta, a*) can be validated end to end.

Block length is one unit of continuous time, matching the 1/block units
of the fluid and MMPP switching rates.  Those chains are sampled exactly
through their exponential holding times; fluid arrivals are the integral
of the rate over each block, MMPP arrivals a Poisson count of the
integrated intensity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .channel import ChannelSpec, _gain_blocks
from .errors import InsufficientTail, UnstableQueue
from .sources import (
    DiscreteMarkovSource,
    FluidMarkovSource,
    MmppSource,
    OnOffDiscreteParams,
    as_discrete_source,
    stationary_distribution_discrete,
    stationary_distribution_fluid,
)

_SERVICE_CHUNK = 1 << 15
_MIN_BLOCKS = 10 ** 4
_STABILITY_CHECK_AT = 10 ** 5
_STABILITY_MARGIN = 1.01
_MIN_EVENTS = 100
_AUTO_POINTS = 12


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell: source, channel, load point and seeds."""

    source: object
    channel: ChannelSpec
    snr: float
    n_blocks: int
    seed: int
    q_thresholds: Optional[Tuple[float, ...]] = None
    d_thresholds: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        snr = float(self.snr)
        if not math.isfinite(snr) or snr <= 0:
            raise ValueError(f"snr must be finite and > 0, got {self.snr}")
        object.__setattr__(self, "snr", snr)
        n = int(self.n_blocks)
        if n < _MIN_BLOCKS:
            raise ValueError(f"n_blocks must be >= {_MIN_BLOCKS}, got {n}")
        object.__setattr__(self, "n_blocks", n)
        seed = int(self.seed)
        if not (0 <= seed < 2 ** 64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", seed)
        if self.q_thresholds is not None:
            q = tuple(float(x) for x in self.q_thresholds)
            if any(x <= 0 for x in q) or any(b <= a for a, b in zip(q, q[1:])):
                raise ValueError("q_thresholds must be positive and strictly increasing")
            object.__setattr__(self, "q_thresholds", q)
        if self.d_thresholds is not None:
            d = tuple(int(x) for x in self.d_thresholds)
            if any(x < 1 for x in d) or any(b <= a for a, b in zip(d, d[1:])):
                raise ValueError("d_thresholds must be >= 1 and strictly increasing")
            object.__setattr__(self, "d_thresholds", d)


@dataclass(frozen=True)
class QueueSimReport:
    """Empirical tails plus the two fitted decay slopes.

    Slopes are NaN when the corresponding tail had too few usable
    points to fit (for example a queue that never builds up).
    """

    overflow_points: Tuple[Tuple[float, float], ...]
    delay_points: Tuple[Tuple[int, float], ...]
    theta_sim: float
    delay_slope_sim: float
    varsigma_hat: float
    varsigma_ratio: float


def _stream(seed: int, key: tuple) -> Generator:
    return Generator(Philox(SeedSequence(entropy=seed, spawn_key=key)))


def _lindley(arrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """Queue lengths after each block, starting from an empty buffer."""
    net = np.cumsum(arrivals - services)
    running_min = np.minimum.accumulate(np.concatenate(([0.0], net)))
    return net - running_min[1:]


def _delay_tail_mass(arrivals, cum_arrivals, departed, d, start, stop):
    """Bit mass arriving in blocks [start, stop] still queued d blocks on."""
    k = np.arange(start, stop + 1)
    undeparted = cum_arrivals[k] - departed[k + d - 1]
    return float(np.clip(undeparted, 0.0, arrivals[k]).sum())


def _discrete_state_path(src: DiscreteMarkovSource, n, s0, rng) -> np.ndarray:
    cdf_rows = [row.tolist() for row in np.cumsum(src.transition_probs, axis=1)]
    draws = rng.random(n).tolist()
    states = np.empty(n, dtype=np.intp)
    s = int(s0)
    for k, u in enumerate(draws):
        row = cdf_rows[s]
        s = 0
        while u > row[s]:
            s += 1
        states[k] = s
    return states


def _continuous_path(generator: np.ndarray, horizon, s0, rng):
    """(states, jump times) of the chain until the horizon is covered."""
    exit_rates = -np.diag(generator)
    n_states = generator.shape[0]
    jump_cdf = []
    for i in range(n_states):
        if exit_rates[i] > 0:
            # row/exit has -1 on the diagonal; the indicator lifts it to 0
            probs = generator[i] / exit_rates[i] + (np.arange(n_states) == i)
            jump_cdf.append(np.cumsum(probs).tolist())
        else:
            jump_cdf.append(None)  # absorbing
    states = [int(s0)]
    times = [0.0]
    t = 0.0
    s = int(s0)
    batch_e: list = []
    batch_u: list = []
    while t < horizon:
        if exit_rates[s] <= 0:
            break
        if not batch_e:
            batch_e = rng.exponential(size=4096).tolist()
            batch_u = rng.random(4096).tolist()
        t += batch_e.pop() / exit_rates[s]
        u = batch_u.pop()
        row = jump_cdf[s]
        s = 0
        while u > row[s]:
            s += 1
        states.append(s)
        times.append(t)
    times.append(max(t, horizon) + 1.0)  # close the last dwell
    return np.asarray(states), np.asarray(times)


def _blocked_integral(values_per_state, states, times, n):
    """Integral of the piecewise-constant state value over each unit block."""
    rate = values_per_state[states]
    cum = np.concatenate(([0.0], np.cumsum(rate * np.diff(times))))
    grid = np.interp(np.arange(n + 1, dtype=float), times, cum)
    return np.diff(grid)


def _arrival_trace(source, n, seed):
    rng = _stream(seed, (0,))
    rng_init = _stream(seed, (2,))
    if isinstance(source, OnOffDiscreteParams):
        source = as_discrete_source(source)
    if isinstance(source, DiscreteMarkovSource):
        pi = stationary_distribution_discrete(source)
        s0 = rng_init.choice(len(pi), p=pi)
        states = _discrete_state_path(source, n, s0, rng)
        return source.rates[states]
    if isinstance(source, (FluidMarkovSource, MmppSource)):
        pi = stationary_distribution_fluid(source.generator)
        s0 = rng_init.choice(len(pi), p=pi)
        states, times = _continuous_path(source.generator, float(n), s0, rng)
        if isinstance(source, FluidMarkovSource):
            return _blocked_integral(source.rates, states, times, n)
        mean_counts = _blocked_integral(source.intensities, states, times, n)
        return rng.poisson(mean_counts).astype(float)
    raise TypeError(
        f"unsupported source type {type(source).__name__}; two-state "
        "continuous parameters must be converted with as_fluid_source or "
        "as_mmpp_source first"
    )


def _service_trace(spec: ChannelSpec, snr, n, seed):
    out = np.empty(n)
    log2 = math.log(2.0)
    for chunk, start in enumerate(range(0, n, _SERVICE_CHUNK)):
        count = min(_SERVICE_CHUNK, n - start)
        rng = _stream(seed, (1, chunk))
        z = _gain_blocks(spec, count, rng)
        out[start : start + count] = np.log1p(snr * z).sum(axis=1) / log2
    return out


def _auto_q_thresholds(queue_tail: np.ndarray):
    lo, hi = np.percentile(queue_tail, [50.0, 99.99])
    grid = np.linspace(lo, hi, _AUTO_POINTS)
    return [float(q) for q in dict.fromkeys(grid) if q > 0]


def _auto_d_thresholds(arrivals, cum_arrivals, departed, start, stop_for):
    # double the lag until fewer than one bit in 1e4 is still waiting
    d = 1
    while d <= stop_for(d) - start:
        denom = float(arrivals[start : stop_for(d) + 1].sum())
        if denom == 0.0:
            return []
        mass = _delay_tail_mass(arrivals, cum_arrivals, departed, d, start, stop_for(d))
        if mass / denom < 1e-4 or d >= 4096:
            break
        d *= 2
    grid = np.unique(np.linspace(1, max(d, 2), _AUTO_POINTS).astype(int))
    return [int(x) for x in grid]


def fit_decay_slope(points, counts=None, *, min_count: int = _MIN_EVENTS) -> dict:
    """OLS fit of log probability against threshold.

    Returns the negated slope (the decay rate), the intercept and r
    squared.  Points with fewer than ``min_count`` observed events are
    dropped when ``counts`` is supplied; fewer than 4 surviving points
    raise InsufficientTail.  A flat tail fits slope 0 with r_squared 0.
    """
    usable = []
    for i, (x, p) in enumerate(points):
        if p <= 0:
            continue
        if counts is not None and counts[i] < min_count:
            continue
        usable.append((float(x), math.log(p)))
    if len(usable) < 4:
        raise InsufficientTail(
            f"need >= 4 usable tail points, have {len(usable)}"
        )
    xs = np.array([x for x, _ in usable])
    ys = np.array([y for _, y in usable])
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise InsufficientTail("tail thresholds are all identical")
    slope = float(xc @ yc) / sxx
    intercept = float(ys.mean() - slope * xs.mean())
    ss_tot = float(yc @ yc)
    if ss_tot == 0.0:
        r_squared = 0.0 if slope == 0.0 else 1.0
    else:
        resid = ys - (intercept + slope * xs)
        r_squared = 1.0 - float(resid @ resid) / ss_tot
    return {"slope": -slope, "intercept": intercept, "r_squared": r_squared}


def simulate_queue(cfg: SimConfig) -> QueueSimReport:
    """Run the queue over n_blocks fading blocks and fit both tails."""
    n = cfg.n_blocks
    arrivals = np.asarray(_arrival_trace(cfg.source, n, cfg.seed), dtype=float)
    services = _service_trace(cfg.channel, cfg.snr, n, cfg.seed)

    check_at = min(_STABILITY_CHECK_AT, n)
    mean_a = float(arrivals[:check_at].mean())
    mean_s = float(services[:check_at].mean())
    if mean_a > _STABILITY_MARGIN * mean_s:
        raise UnstableQueue(
            f"mean arrival rate {mean_a:.6g} exceeds mean service rate "
            f"{mean_s:.6g} by more than {100 * (_STABILITY_MARGIN - 1):.0f}%"
        )

    queue = _lindley(arrivals, services)
    warmup = min(max(n // 100, _MIN_BLOCKS), n // 2)
    tail = queue[warmup:]

    q_grid = (
        list(cfg.q_thresholds)
        if cfg.q_thresholds is not None
        else _auto_q_thresholds(tail)
    )
    n_tail = tail.shape[0]
    overflow_points = []
    overflow_counts = []
    for q in q_grid:
        count = int(np.count_nonzero(tail >= q))
        if count == 0:
            continue
        overflow_points.append((float(q), count / n_tail))
        overflow_counts.append(count)

    cum_arrivals = np.cumsum(arrivals)
    departed = cum_arrivals - queue
    stop_for = lambda d: n - d  # last block whose lag-d verdict is in horizon
    d_grid = (
        list(cfg.d_thresholds)
        if cfg.d_thresholds is not None
        else _auto_d_thresholds(arrivals, cum_arrivals, departed, warmup, stop_for)
    )
    delay_points = []
    delay_counts = []
    for d in d_grid:
        stop = stop_for(d)
        if stop < warmup:
            continue
        denom = float(arrivals[warmup : stop + 1].sum())
        if denom == 0.0:
            continue
        k = np.arange(warmup, stop + 1)
        late = np.clip(cum_arrivals[k] - departed[k + d - 1], 0.0, arrivals[k])
        mass = float(late.sum())
        if mass <= 0.0:
            continue
        delay_points.append((int(d), mass / denom))
        delay_counts.append(int(np.count_nonzero(late)))

    def _slope(points, counts):
        try:
            return fit_decay_slope(points, counts)["slope"]
        except InsufficientTail:
            return math.nan

    varsigma_hat = float(np.count_nonzero(tail > 0)) / n_tail
    mean_service = float(services[warmup:].mean())
    mean_arrival = float(arrivals[warmup:].mean())
    ratio = mean_arrival / mean_service if mean_service > 0 else 0.0

    return QueueSimReport(
        overflow_points=tuple(overflow_points),
        delay_points=tuple(delay_points),
        theta_sim=_slope(overflow_points, overflow_counts),
        delay_slope_sim=_slope(delay_points, delay_counts),
        varsigma_hat=varsigma_hat,
        varsigma_ratio=ratio,
    )


def varsigma_estimate(report: QueueSimReport) -> dict:
    """Both estimates of the non-empty probability prefactor."""
    return {
        "empirical": report.varsigma_hat,
        "ratio_approx": report.varsigma_ratio,
    }
