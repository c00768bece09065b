"""Markovian traffic-source models and their effective bandwidths.

Three matrix-based source families are supported: a discrete-time Markov
source (per-block state transitions, deterministic rate per state), a
continuous-time Markov fluid source, and a Markov-modulated Poisson
process (MMPP).  Two-state ON/OFF parameterizations of each family have
closed-form effective bandwidths; the general n-state forms go through a
spectral-radius / dominant-eigenvalue computation by power iteration.

The effective bandwidth a*(theta) of a source is the minimum constant
service rate (bits/block) that sustains the source under a queue-tail
decay requirement of exponent ``theta`` (1/bit).  a*(theta) increases
from the mean rate (theta -> 0) toward the peak rate (theta -> inf).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import singledispatch
from typing import Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import NonConvergence, NoUniqueStationary, ValidationError

# QoS exponent: plain positive float, 1/bit.  theta = 0 is accepted only
# by the limit operations that implement theta -> 0 results.
QosExponent = float

_ROW_SUM_TOL = 1e-12
_POWER_ITER_REL_TOL = 1e-13
_POWER_ITER_CAP = 10 ** 5


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not math.isfinite(theta) or theta <= 0.0:
        raise ValueError(f"theta must be a finite positive real, got {theta}")
    return theta


def _frozen_array(obj, value, field):
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    object.__setattr__(obj, field, arr)
    return arr


def _terminal_components(adjacency: np.ndarray):
    """Strongly connected components with no outgoing edges.

    A finite chain has a unique stationary distribution exactly when
    there is a single such terminal (recurrent) class.
    """
    n_comp, labels = connected_components(
        csr_matrix(adjacency), directed=True, connection="strong"
    )
    has_exit = np.zeros(n_comp, dtype=bool)
    rows, cols = np.nonzero(adjacency)
    for i, j in zip(rows, cols):
        if labels[i] != labels[j]:
            has_exit[labels[i]] = True
    terminal = [c for c in range(n_comp) if not has_exit[c]]
    return terminal, labels


def _component_period(adjacency: np.ndarray, members: np.ndarray) -> int:
    """Period (gcd of cycle lengths) of one strongly connected component."""
    index = {int(s): k for k, s in enumerate(members)}
    sub = adjacency[np.ix_(members, members)]
    n = len(members)
    depth = np.full(n, -1, dtype=int)
    depth[0] = 0
    frontier = [0]
    order = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(sub[u])[0]:
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    nxt.append(int(v))
                    order.append(int(v))
        frontier = nxt
    g = 0
    for u in range(n):
        for v in np.nonzero(sub[u])[0]:
            g = math.gcd(g, depth[u] + 1 - depth[int(v)])
    return max(g, 1)


@dataclass(frozen=True, eq=False)
class DiscreteMarkovSource:
    """Discrete-time Markov source: one state transition per block.

    ``transition_probs[i][j]`` is the probability of moving from state i
    to state j at a block boundary; ``rates[i]`` is the deterministic
    arrival volume (bits/block) while in state i.
    """

    transition_probs: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        J = _frozen_array(self, np.atleast_2d(self.transition_probs), "transition_probs")
        if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] < 1:
            raise ValueError("transition_probs must be a square matrix")
        if not np.all(np.isfinite(J)):
            raise ValueError("transition_probs entries must be finite")
        if np.any(J < -1e-15) or np.any(J > 1 + 1e-12):
            raise ValueError("transition_probs entries must lie in [0, 1]")
        row_err = np.max(np.abs(J.sum(axis=1) - 1.0))
        if row_err > _ROW_SUM_TOL:
            raise ValueError(
                f"transition_probs rows must sum to 1 within {_ROW_SUM_TOL:g} "
                f"(worst error {row_err:.3g})"
            )
        r = _frozen_array(self, self.rates, "rates")
        if r.ndim != 1 or r.shape[0] != J.shape[0]:
            raise ValueError("rates must be a vector matching the chain size")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("rates must be finite and >= 0")
        terminal, labels = _terminal_components(J > 0)
        if len(terminal) != 1:
            raise NoUniqueStationary(
                "chain has multiple recurrent classes; stationary law is not unique"
            )
        members = np.nonzero(labels == terminal[0])[0]
        if _component_period(J > 0, members) != 1:
            raise ValueError("periodic chains are not supported")

    @property
    def n_states(self) -> int:
        return self.transition_probs.shape[0]


@dataclass(frozen=True, eq=False)
class FluidMarkovSource:
    """Markov fluid source: continuous-time chain, linear arrivals.

    ``generator[i][j]`` (i != j) is the transition rate from state i to
    state j in 1/block; rows sum to zero.  While in state i, fluid
    arrives deterministically at ``rates[i]`` bits/block.
    """

    generator: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        G = _frozen_array(self, np.atleast_2d(self.generator), "generator")
        _validate_generator(G)
        r = _frozen_array(self, self.rates, "rates")
        if r.ndim != 1 or r.shape[0] != G.shape[0]:
            raise ValueError("rates must be a vector matching the chain size")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("rates must be finite and >= 0")

    @property
    def n_states(self) -> int:
        return self.generator.shape[0]


@dataclass(frozen=True, eq=False)
class MmppSource:
    """Markov-modulated Poisson process: Poisson arrivals whose intensity
    (bits/block) is selected by a continuous-time Markov chain."""

    generator: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        G = _frozen_array(self, np.atleast_2d(self.generator), "generator")
        _validate_generator(G)
        lam = _frozen_array(self, self.intensities, "intensities")
        if lam.ndim != 1 or lam.shape[0] != G.shape[0]:
            raise ValueError("intensities must be a vector matching the chain size")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ValueError("intensities must be finite and >= 0")

    @property
    def n_states(self) -> int:
        return self.generator.shape[0]


def _validate_generator(G: np.ndarray) -> None:
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] < 1:
        raise ValueError("generator must be a square matrix")
    if not np.all(np.isfinite(G)):
        raise ValueError("generator entries must be finite")
    off = G.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < -1e-15):
        raise ValueError("generator off-diagonal entries must be >= 0")
    row_err = np.max(np.abs(G.sum(axis=1)))
    if row_err > _ROW_SUM_TOL:
        raise ValueError(
            f"generator rows must sum to 0 within {_ROW_SUM_TOL:g} "
            f"(worst error {row_err:.3g})"
        )


@dataclass(frozen=True)
class OnOffDiscreteParams:
    """Two-state discrete source: OFF (silent) and ON at rate ``lam``.

    ``p11`` is the probability of staying OFF, ``p22`` of staying ON.
    """

    p11: float
    p22: float
    lam: float

    def __post_init__(self):
        for name in ("p11", "p22"):
            v = float(getattr(self, name))
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        if self.p11 == 1.0 and self.p22 == 1.0:
            raise ValueError("p11 = p22 = 1 gives a disconnected (reducible) chain")
        lam = float(self.lam)
        if not math.isfinite(lam) or lam < 0:
            raise ValueError(f"lam must be finite and >= 0, got {lam}")
        object.__setattr__(self, "lam", lam)
        if self.p11 == 1.0:
            warnings.warn(
                "p11 = 1 makes OFF absorbing: effective bandwidth and "
                "average rate are 0 by convention",
                stacklevel=2,
            )

    @property
    def p_on(self) -> float:
        """Steady-state probability of the ON state."""
        # grouped so p22 = 1 gives exactly 1.0 and p11 = 1 exactly 0.0
        return (1.0 - self.p11) / ((1.0 - self.p11) + (1.0 - self.p22))


@dataclass(frozen=True)
class OnOffContinuousParams:
    """Two-state continuous-time source shared by the fluid and MMPP
    models: ``alpha`` is the OFF->ON rate, ``beta`` the ON->OFF rate
    (both 1/block), ``lam`` the ON-state rate or Poisson intensity."""

    alpha: float
    beta: float
    lam: float

    def __post_init__(self):
        a, b, lam = float(self.alpha), float(self.beta), float(self.lam)
        if not math.isfinite(a) or a <= 0:
            raise ValueError(f"alpha must be finite and > 0, got {a}")
        if not math.isfinite(b) or b < 0:
            raise ValueError(f"beta must be finite and >= 0, got {b}")
        if not math.isfinite(lam) or lam < 0:
            raise ValueError(f"lam must be finite and >= 0, got {lam}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "lam", lam)

    @property
    def p_on(self) -> float:
        return self.alpha / (self.alpha + self.beta)


AnySource = Union[
    DiscreteMarkovSource,
    FluidMarkovSource,
    MmppSource,
    OnOffDiscreteParams,
    OnOffContinuousParams,
]


def as_discrete_source(params: OnOffDiscreteParams) -> DiscreteMarkovSource:
    """Embed ON/OFF discrete params as an explicit 2-state matrix source."""
    J = np.array(
        [[params.p11, 1.0 - params.p11], [1.0 - params.p22, params.p22]]
    )
    return DiscreteMarkovSource(J, np.array([0.0, params.lam]))


def as_fluid_source(params: OnOffContinuousParams) -> FluidMarkovSource:
    """Embed ON/OFF continuous params as a 2-state fluid matrix source."""
    G = _onoff_generator(params)
    return FluidMarkovSource(G, np.array([0.0, params.lam]))


def as_mmpp_source(params: OnOffContinuousParams) -> MmppSource:
    """Embed ON/OFF continuous params as a 2-state MMPP matrix source."""
    G = _onoff_generator(params)
    return MmppSource(G, np.array([0.0, params.lam]))


def _onoff_generator(params: OnOffContinuousParams) -> np.ndarray:
    a, b = params.alpha, params.beta
    return np.array([[-a, a], [b, -b]])


# ---------------------------------------------------------------------------
# Stationary distributions and mean rates
# ---------------------------------------------------------------------------


def stationary_distribution_discrete(src: DiscreteMarkovSource) -> np.ndarray:
    """Unique probability vector pi with pi @ J = pi."""
    J = src.transition_probs
    pi = _stationary_from(J.T - np.eye(J.shape[0]))
    if np.max(np.abs(pi @ J - pi)) > 1e-10:
        raise NoUniqueStationary("stationary equations are inconsistent")
    return pi


def stationary_distribution_fluid(generator) -> np.ndarray:
    """Unique probability vector pi with pi @ G = 0."""
    if isinstance(generator, (FluidMarkovSource, MmppSource)):
        G = generator.generator
    else:
        G = np.atleast_2d(np.asarray(generator, dtype=float))
        _validate_generator(G)
    off = G.copy()
    np.fill_diagonal(off, 0.0)
    terminal, _ = _terminal_components(off > 0)
    if len(terminal) != 1:
        raise NoUniqueStationary(
            "generator has multiple recurrent classes; stationary law is not unique"
        )
    pi = _stationary_from(G.T)
    if np.max(np.abs(pi @ G)) > 1e-10 * max(1.0, np.max(np.abs(G))):
        raise NoUniqueStationary("stationary equations are inconsistent")
    return pi


def _stationary_from(A: np.ndarray) -> np.ndarray:
    # A has one-dimensional null space and rows summing to the zero
    # vector, so any single row may carry the normalization instead.
    n = A.shape[0]
    M = A.copy()
    M[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise NoUniqueStationary(str(exc)) from exc
    if np.any(pi < -1e-9):
        raise NoUniqueStationary("stationary solve produced negative mass")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@singledispatch
def average_rate(src) -> float:
    """Long-run mean arrival rate of a source, bits/block."""
    raise TypeError(f"unsupported source type: {type(src).__name__}")


@average_rate.register
def _(src: DiscreteMarkovSource) -> float:
    return float(stationary_distribution_discrete(src) @ src.rates)


@average_rate.register
def _(src: FluidMarkovSource) -> float:
    return float(stationary_distribution_fluid(src.generator) @ src.rates)


@average_rate.register
def _(src: MmppSource) -> float:
    return float(stationary_distribution_fluid(src.generator) @ src.intensities)


@average_rate.register
def _(src: OnOffDiscreteParams) -> float:
    return src.lam * src.p_on


@average_rate.register
def _(src: OnOffContinuousParams) -> float:
    return src.lam * src.p_on


# ---------------------------------------------------------------------------
# Effective bandwidths
# ---------------------------------------------------------------------------


def _perron_root(B: np.ndarray) -> float:
    """Dominant eigenvalue of an entrywise-nonnegative matrix.

    Power iteration from a positive start vector; converges when
    successive Rayleigh-quotient estimates differ by less than
    ``_POWER_ITER_REL_TOL`` relative, capped at ``_POWER_ITER_CAP``
    iterations.
    """
    n = B.shape[0]
    x = np.full(n, 1.0 / math.sqrt(n))
    lam_prev = math.inf
    for _ in range(_POWER_ITER_CAP):
        y = B @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        lam = float(x @ y)
        x = y / norm
        if abs(lam - lam_prev) <= _POWER_ITER_REL_TOL * max(abs(lam), 1e-300):
            return lam
        lam_prev = lam
    raise NonConvergence(
        f"power iteration did not converge within {_POWER_ITER_CAP} iterations"
    )


def effective_bandwidth_discrete(
    src: DiscreteMarkovSource, theta: QosExponent
) -> float:
    """a*(theta) = (1/theta) ln sp(e^{theta*Lambda} J), bits/block.

    The spectral radius is taken after scaling out e^{theta*max(rates)}
    so the iteration never overflows for large theta*rate products.
    """
    theta = _check_theta(theta)
    rates = src.rates
    lam_max = float(np.max(rates))
    # row i of e^{theta*Lambda} J is e^{theta*rates[i]} * J[i, :]
    B = np.exp(theta * (rates - lam_max))[:, None] * src.transition_probs
    sp = _perron_root(B)
    if sp <= 0.0:
        raise NonConvergence("spectral radius collapsed to zero")
    return lam_max + math.log(sp) / theta


def effective_bandwidth_onoff_discrete(
    params: OnOffDiscreteParams, theta: QosExponent
) -> float:
    """Closed-form a*(theta) for the two-state discrete ON/OFF source."""
    theta = _check_theta(theta)
    p11, p22, lam = params.p11, params.p22, params.lam
    if lam == 0.0:
        return 0.0
    if p11 == 1.0:
        # OFF is absorbing: the long-run arrival stream is empty.
        return 0.0
    lt = lam * theta
    if lt <= 300.0:
        E = math.exp(lt)
        x = p11 + p22 * E
        disc = x * x - 4.0 * (p11 + p22 - 1.0) * E
        return math.log(0.5 * (x + math.sqrt(disc))) / theta
    if p22 > 0.0:
        # same root scaled by e^{-lam*theta}; exact, overflow-free
        iE = math.exp(-lt)
        x = p11 * iE + p22
        disc = x * x - 4.0 * (p11 + p22 - 1.0) * iE
        return lam + math.log(0.5 * (x + math.sqrt(disc))) / theta
    # p22 = 0 and lam*theta huge: root ~ sqrt(E (1-p11)) to machine precision
    return 0.5 * lam + 0.5 * math.log1p(-p11) / theta


def _max_real_eigen_metzler(M: np.ndarray) -> float:
    """Largest real eigenvalue of a Metzler matrix (off-diagonal >= 0):
    shift the diagonal to nonnegativity, take the Perron root, un-shift."""
    c = float(np.max(np.abs(np.diag(M)))) + 1.0
    sp = _perron_root(M + c * np.eye(M.shape[0]))
    return sp - c


def effective_bandwidth_fluid(src: FluidMarkovSource, theta: QosExponent) -> float:
    """a*(theta) = max real eigenvalue of (Lambda + G/theta), bits/block."""
    theta = _check_theta(theta)
    M = np.diag(src.rates) + src.generator / theta
    return _max_real_eigen_metzler(M)


def _stable_quadratic_root(x: float, y: float) -> float:
    """(x + sqrt(x^2 + y)) / 2 without cancellation for x < 0, y >= 0."""
    s = math.sqrt(x * x + y)
    if x >= 0.0:
        return 0.5 * (x + s)
    if s == -x:  # y underflowed relative to x^2
        return 0.0
    return 0.5 * y / (s - x)


def effective_bandwidth_onoff_fluid(
    params: OnOffContinuousParams, theta: QosExponent
) -> float:
    """Closed-form a*(theta) for the two-state fluid source."""
    theta = _check_theta(theta)
    a, b, lam = params.alpha, params.beta, params.lam
    if lam == 0.0:
        return 0.0
    x = theta * lam - (a + b)
    y = 4.0 * a * theta * lam
    return _stable_quadratic_root(x, y) / theta


def effective_bandwidth_mmpp(src: MmppSource, theta: QosExponent) -> float:
    """a*(theta) = (1/theta) * max real eigenvalue of ((e^theta - 1) Lambda + G)."""
    theta = _check_theta(theta)
    M = math.expm1(theta) * np.diag(src.intensities) + src.generator
    return _max_real_eigen_metzler(M) / theta


def effective_bandwidth_onoff_mmpp(
    params: OnOffContinuousParams, theta: QosExponent
) -> float:
    """Closed-form a*(theta) for the two-state MMPP source."""
    theta = _check_theta(theta)
    a, b, lam = params.alpha, params.beta, params.lam
    if lam == 0.0:
        return 0.0
    em = math.expm1(theta)
    x = em * lam - (a + b)
    y = 4.0 * a * em * lam
    return _stable_quadratic_root(x, y) / theta


# ---------------------------------------------------------------------------
# JSON construction
# ---------------------------------------------------------------------------

_SOURCE_KINDS = (
    "discrete",
    "fluid",
    "mmpp",
    "onoff-discrete",
    "onoff-fluid",
    "onoff-mmpp",
)


def source_from_json(doc) -> AnySource:
    """Build a source from a JSON document (dict or JSON string).

    Accepted shapes::

        {"kind": "discrete"|"fluid"|"mmpp", "transition": [[...]], "rates": [...]}
        {"kind": "onoff-discrete", "p11": ..., "p22": ..., "lambda": ...}
        {"kind": "onoff-fluid"|"onoff-mmpp", "alpha": ..., "beta": ..., "lambda": ...}

    Raises ValidationError with the offending field path.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ValidationError("$", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("$", "source document must be a JSON object")
    kind = doc.get("kind")
    if kind not in _SOURCE_KINDS:
        raise ValidationError(
            "kind", f"must be one of {', '.join(_SOURCE_KINDS)}; got {kind!r}"
        )
    if kind in ("discrete", "fluid", "mmpp"):
        mat = _field_matrix(doc, "transition")
        rates = _field_vector(doc, "rates", len(mat))
        try:
            if kind == "discrete":
                return DiscreteMarkovSource(mat, rates)
            if kind == "fluid":
                return FluidMarkovSource(mat, rates)
            return MmppSource(mat, rates)
        except (ValueError, NoUniqueStationary) as exc:
            raise ValidationError("transition", str(exc)) from exc
    if kind == "onoff-discrete":
        p11 = _field_number(doc, "p11")
        p22 = _field_number(doc, "p22")
        lam = _field_number(doc, "lambda")
        try:
            return OnOffDiscreteParams(p11, p22, lam)
        except ValueError as exc:
            raise ValidationError("p11", str(exc)) from exc
    alpha = _field_number(doc, "alpha")
    beta = _field_number(doc, "beta")
    lam = _field_number(doc, "lambda")
    try:
        params = OnOffContinuousParams(alpha, beta, lam)
    except ValueError as exc:
        raise ValidationError("alpha", str(exc)) from exc
    if kind == "onoff-fluid":
        return params
    return params  # onoff-mmpp shares the parameter type


def _field_number(doc: dict, name: str) -> float:
    if name not in doc:
        raise ValidationError(name, "missing required field")
    v = doc[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(name, f"must be a number, got {type(v).__name__}")
    if not math.isfinite(float(v)):
        raise ValidationError(name, "must be finite")
    return float(v)


def _field_vector(doc: dict, name: str, expect_len: int) -> np.ndarray:
    if name not in doc:
        raise ValidationError(name, "missing required field")
    v = doc[name]
    if not isinstance(v, list):
        raise ValidationError(name, "must be a list of numbers")
    if len(v) != expect_len:
        raise ValidationError(name, f"expected length {expect_len}, got {len(v)}")
    out = np.empty(len(v))
    for i, entry in enumerate(v):
        if isinstance(entry, bool) or not isinstance(entry, (int, float)):
            raise ValidationError(f"{name}[{i}]", "must be a number")
        if not math.isfinite(float(entry)):
            raise ValidationError(f"{name}[{i}]", "must be finite")
        out[i] = float(entry)
    return out


def _field_matrix(doc: dict, name: str) -> np.ndarray:
    if name not in doc:
        raise ValidationError(name, "missing required field")
    v = doc[name]
    if not isinstance(v, list) or not v:
        raise ValidationError(name, "must be a non-empty list of rows")
    n = len(v)
    out = np.empty((n, n))
    for i, row in enumerate(v):
        if not isinstance(row, list):
            raise ValidationError(f"{name}[{i}]", "must be a list of numbers")
        if len(row) != n:
            raise ValidationError(
                f"{name}[{i}]", f"expected {n} entries for a square matrix, got {len(row)}"
            )
        for j, entry in enumerate(row):
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise ValidationError(f"{name}[{i}][{j}]", "must be a number")
            if not math.isfinite(float(entry)):
                raise ValidationError(f"{name}[{i}][{j}]", "must be finite")
            out[i, j] = float(entry)
    return out
