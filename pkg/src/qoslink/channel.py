"""Block-fading channel model and effective capacity.

The channel gain seen by symbol i of a block follows the first-order
recursion h_i = rho*h_{i-1} + w_i with circularly symmetric complex
Gaussian innovations, so the power gains z_i = |h_i|^2 are exponential
marginally and correlated within a block (cov{z_i,z_j} =
sigma^4 rho^{2|i-j|}).  Blocks are independent of each other.

The effective capacity C_E(snr, theta) = -(1/theta) log_e E{e^{-theta*nu}}
of the per-block service nu = sum_i log2(1 + snr*z_i) is computed three
ways: a closed form for i.i.d. Rayleigh gains (rho = 0), seeded Monte
Carlo for any rho, and a deterministic quadrature route for any rho that
is smooth enough in snr to support numerical differentiation at snr -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.special import ive

from .errors import DegenerateEstimate, QuadratureFailure, ValidationError

LN2 = math.log(2.0)

# Monte Carlo runs are split into fixed-size chunks, each with its own
# counter-derived rng stream, so any parallel fan-out over chunks
# reproduces the serial result bit for bit.
_MC_CHUNK = 1 << 15

_QUAD_OPTS = dict(epsabs=1e-300, epsrel=1e-12, limit=300)

# Panel edges (units of sigma_h_sq) for the composite Gauss-Legendre
# rule over the gain axis.  The fine leading panels resolve the sharp
# variation of (1+snr*z)^{-a} near z=0 at large snr; the geometric tail
# reaches e^{-45} where the exponential marginal is negligible.
_PANEL_EDGES = np.array(
    [0.0, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 0.01, 0.02, 0.04, 0.07, 0.12]
    + [0.2, 0.3, 0.45, 0.65, 0.9, 1.2, 1.6, 2.1, 2.8, 3.6, 4.6, 6.0, 7.5,
       9.5, 12.0, 15.0, 19.0, 24.0, 30.0, 37.0, 45.0]
)
_PANEL_ORDER = 20
_KERNEL_DEFECT_TOL = 1e-9


@dataclass(frozen=True)
class ChannelSpec:
    """Static description of the block-fading channel."""

    m: int
    rho: float
    sigma_h_sq: float = 1.0
    distribution: str = "gauss-markov-rayleigh"

    def __post_init__(self):
        m = int(self.m)
        if m < 1 or m != self.m:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        object.__setattr__(self, "m", m)
        rho = float(self.rho)
        if not (0.0 <= rho <= 1.0):
            raise ValueError(f"rho must lie in [0, 1], got {rho}")
        object.__setattr__(self, "rho", rho)
        s2 = float(self.sigma_h_sq)
        if not math.isfinite(s2) or s2 <= 0:
            raise ValueError(f"sigma_h_sq must be finite and > 0, got {s2}")
        object.__setattr__(self, "sigma_h_sq", s2)
        if self.distribution.lower().replace("_", "-") not in (
            "gauss-markov-rayleigh",
            "gaussmarkovrayleigh",
        ):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        object.__setattr__(self, "distribution", "gauss-markov-rayleigh")


# A fading block is the plain vector of power gains z_i = |h_i|^2.
FadingBlock = np.ndarray


@dataclass(frozen=True)
class EffCapEstimate:
    """Effective capacity value with its provenance.

    ``std_error`` is 0 for the deterministic methods; ``n_samples`` is 0
    unless the value came from Monte Carlo.
    """

    value: float
    std_error: float
    method: str  # closed_form_iid_rayleigh | monte_carlo | quadrature
    n_samples: int
    theta: float
    snr: float


@dataclass(frozen=True)
class FadingMoments:
    mean_z: float
    mean_z_sq: float
    cov_sum: float


def _check_snr(snr: float) -> float:
    snr = float(snr)
    if not math.isfinite(snr) or snr <= 0:
        raise ValueError(f"snr must be finite and > 0 (linear), got {snr}")
    return snr


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not math.isfinite(theta) or theta <= 0:
        raise ValueError(f"theta must be finite and > 0, got {theta}")
    return theta


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _gain_blocks(spec: ChannelSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, m) matrix of power gains; rows are independent blocks."""
    m, rho = spec.m, spec.rho
    scale = math.sqrt(spec.sigma_h_sq / 2.0)
    re = rng.standard_normal((count, m))
    im = rng.standard_normal((count, m))
    w = scale * (re + 1j * im)
    h = np.empty((count, m), dtype=complex)
    h[:, 0] = w[:, 0]
    innov = math.sqrt(1.0 - rho * rho)
    for i in range(1, m):
        h[:, i] = rho * h[:, i - 1] + innov * w[:, i]
    return np.abs(h) ** 2


def sample_fading_block(spec: ChannelSpec, rng: np.random.Generator) -> FadingBlock:
    """One block of m power gains from the given generator state."""
    return _gain_blocks(spec, 1, rng)[0]


def service_rate(block: FadingBlock, snr: float) -> float:
    """nu = sum_i log2(1 + snr*z_i), bits/block."""
    snr = _check_snr(snr)
    gains = np.asarray(block, dtype=float)
    if gains.ndim != 1 or np.any(gains < 0):
        raise ValueError("block must be a vector of nonnegative gains")
    return float(np.sum(np.log2(1.0 + snr * gains)))


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(chunk,))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Effective capacity: Monte Carlo
# ---------------------------------------------------------------------------


def effective_capacity_mc(
    spec: ChannelSpec,
    snr: float,
    theta: float,
    n_samples: int = 10 ** 6,
    seed: int = 0,
) -> EffCapEstimate:
    """Monte Carlo estimate of C_E over n_samples independent blocks.

    The mean of e^{-theta*nu} is accumulated as a running log-sum-exp so
    deep tails (large theta*nu) cannot underflow, and the standard error
    of C_E follows from the sample variance by the delta method.
    """
    snr = _check_snr(snr)
    theta = _check_theta(theta)
    n = int(n_samples)
    if n < 1:
        raise ValueError("n_samples must be >= 1")
    peak = -math.inf  # running max of the exponents
    s1 = 0.0  # sum of e^{exponent - peak}
    s2 = 0.0  # sum of squares of the same
    done = 0
    chunk = 0
    while done < n:
        take = min(_MC_CHUNK, n - done)
        gains = _gain_blocks(spec, take, _chunk_rng(seed, chunk))
        nu = np.sum(np.log2(1.0 + snr * gains), axis=1)
        e = -theta * nu
        top = float(np.max(e))
        if top > peak:
            shift = math.exp(peak - top) if math.isfinite(peak) else 0.0
            s1 *= shift
            s2 *= shift * shift
            peak = top
        d = np.exp(e - peak)
        s1 += float(np.sum(d))
        s2 += float(np.sum(d * d))
        done += take
        chunk += 1
    log_mean = peak + math.log(s1 / n)
    if not math.isfinite(log_mean):
        raise DegenerateEstimate("sample mean of e^{-theta*nu} underflowed to 0")
    value = max(0.0, -log_mean / theta)
    if n >= 2:
        ratio = max(n * s2 / (s1 * s1) - 1.0, 0.0)
        std_error = math.sqrt(ratio / (n - 1)) / theta
    else:
        std_error = math.inf
    return EffCapEstimate(value, std_error, "monte_carlo", n, theta, snr)


# ---------------------------------------------------------------------------
# Effective capacity: deterministic routes
# ---------------------------------------------------------------------------


def _neg_moment_exponential(gamma: float, a: float) -> float:
    """E{(1 + gamma*t)^{-a}} for t ~ exponential(1), a > 0.

    Equals e^w w^a Gamma(1-a, w) with w = 1/gamma; evaluated as
    w * int_0^X exp((1-a)x - w(e^x - 1)) dx, which is smooth, finite and
    overflow-free for every a > 0, including a >= 1 where the incomplete
    gamma argument 1-a is nonpositive and library routines give up.
    """
    w = 1.0 / gamma
    s = 1.0 - a
    X = math.log1p(845.0 / w) + 1.0

    def integrand(x):
        return math.exp(s * x - w * math.expm1(x))

    pts = np.unique(
        np.clip(
            [math.log1p(k / w) for k in (1.0, 10.0, 100.0, 745.0)],
            1e-9 * X,
            (1.0 - 1e-9) * X,
        )
    )
    val, err = quad(integrand, 0.0, X, points=list(pts), **_QUAD_OPTS)
    if not math.isfinite(val) or val <= 0 or err > 1e-10 * val:
        raise QuadratureFailure(
            f"negative-moment integral did not converge (value {val}, err {err})"
        )
    return w * val


def effective_capacity_rayleigh_iid(snr: float, theta: float, m: int) -> EffCapEstimate:
    """Closed-form C_E for i.i.d. unit-variance Rayleigh gains (rho = 0).

    C_E = -(m/theta) log_e[snr^{-theta/log_e 2} e^{1/snr}
    Gamma(1 - theta/log_e 2, 1/snr)] bits/block.
    """
    snr = _check_snr(snr)
    theta = _check_theta(theta)
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    mean = _neg_moment_exponential(snr, theta / LN2)
    value = max(0.0, -(m / theta) * math.log(mean))
    return EffCapEstimate(value, 0.0, "closed_form_iid_rayleigh", 0, theta, snr)


def ergodic_capacity(spec: ChannelSpec, snr: float) -> float:
    """m * E{log2(1 + snr*z)} bits/block; depends on rho not at all."""
    snr = _check_snr(snr)
    gamma = snr * spec.sigma_h_sq

    def integrand(t):
        return math.log1p(gamma * t) * math.exp(-t)

    val, err = quad(integrand, 0.0, np.inf, **_QUAD_OPTS)
    if not math.isfinite(val) or err > 1e-10 * max(1.0, val):
        raise QuadratureFailure(
            f"ergodic-capacity integral did not converge (value {val}, err {err})"
        )
    return spec.m * val / LN2


def fading_moments(spec: ChannelSpec) -> FadingMoments:
    """Exact first/second gain moments and the intra-block covariance sum
    sum_{i,j} cov{z_i, z_j} = sigma^4 * sum_{i,j} rho^{2|i-j|}."""
    s2 = spec.sigma_h_sq
    q = spec.rho ** 2
    m = spec.m
    if m == 1:
        weight = 1.0
    else:
        d = np.arange(1, m)
        weight = m + 2.0 * float(np.sum((m - d) * q ** d))
    return FadingMoments(mean_z=s2, mean_z_sq=2.0 * s2 * s2, cov_sum=s2 * s2 * weight)


def _log_rate_moments(gamma: float):
    """E{L} and E{L^2} for L = log2(1 + gamma*t), t ~ exponential(1)."""

    def first(t):
        return math.log1p(gamma * t) * math.exp(-t)

    def second(t):
        return math.log1p(gamma * t) ** 2 * math.exp(-t)

    e1, err1 = quad(first, 0.0, np.inf, **_QUAD_OPTS)
    e2, err2 = quad(second, 0.0, np.inf, **_QUAD_OPTS)
    if err1 > 1e-10 * max(1.0, e1) or err2 > 1e-10 * max(1.0, e2):
        raise QuadratureFailure("log-rate moment integrals did not converge")
    return e1 / LN2, e2 / (LN2 * LN2)


def log_rate_cov_sum(
    spec: ChannelSpec,
    snr: float,
    *,
    n_samples: int = 10 ** 6,
    seed: int = 0,
) -> float:
    """sum_{i,j} cov{L_i, L_j} with L_i = log2(1 + snr*z_i), bits^2/block.

    Equals var(nu).  Exact quadrature at rho in {0, 1} (the sum is m,
    resp. m^2, times the per-symbol variance); seeded Monte Carlo in
    between, where no closed form is available.
    """
    snr = _check_snr(snr)
    gamma = snr * spec.sigma_h_sq
    if spec.rho == 0.0 or spec.rho == 1.0 or spec.m == 1:
        e1, e2 = _log_rate_moments(gamma)
        var_l = e2 - e1 * e1
        factor = spec.m if spec.rho != 1.0 else spec.m ** 2
        if spec.m == 1:
            factor = 1
        return factor * var_l
    n = int(n_samples)
    if n < 2:
        raise ValueError("n_samples must be >= 2")
    s1 = 0.0
    s2 = 0.0
    done = 0
    chunk = 0
    while done < n:
        take = min(_MC_CHUNK, n - done)
        gains = _gain_blocks(spec, take, _chunk_rng(seed, chunk))
        nu = np.sum(np.log2(1.0 + snr * gains), axis=1)
        s1 += float(np.sum(nu))
        s2 += float(np.sum(nu * nu))
        done += take
        chunk += 1
    return (s2 - s1 * s1 / n) / (n - 1)


# ---------------------------------------------------------------------------
# Effective capacity: quadrature over the gain chain
# ---------------------------------------------------------------------------

_kernel_cache: dict[tuple[float, float], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _gain_axis_rule(sigma_h_sq: float):
    """Nodes and weights of the composite rule for int_0^inf phi(z) dz."""
    xg, wg = leggauss(_PANEL_ORDER)
    edges = _PANEL_EDGES * sigma_h_sq
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * xg)
        weights.append(0.5 * (b - a) * wg)
    return np.concatenate(nodes), np.concatenate(weights)


def _gain_chain_rule(rho: float, sigma_h_sq: float):
    """Nodes z, weights W and one-step kernel matrix K for the gain chain.

    K[k, l] approximates the conditional density of the next gain z_l
    given the current gain z_k.  Validated on construction: kernel rows
    must integrate to 1 and the exponential marginal must be a fixed
    point, both in the marginal-weighted L1 sense (defects at gains the
    chain essentially never visits do not matter).
    """
    key = (rho, sigma_h_sq)
    if key in _kernel_cache:
        return _kernel_cache[key]
    z, W = _gain_axis_rule(sigma_h_sq)
    v = (1.0 - rho * rho) * sigma_h_sq
    sq = np.sqrt(z)
    # conditional density of z' given z: noncentral exponential, written
    # with the scaled Bessel function so nothing overflows
    pen = (sq[None, :] - rho * sq[:, None]) ** 2 / v
    bes = ive(0, 2.0 * rho * np.outer(sq, sq) / v)
    K = bes * np.exp(-pen) / v
    marginal = np.exp(-z / sigma_h_sq) / sigma_h_sq
    mass = W * marginal
    row_defect = float(np.sum(mass * np.abs(K @ W - 1.0)))
    fix_defect = float(np.sum(W * np.abs(mass @ K - marginal)))
    if max(row_defect, fix_defect) > _KERNEL_DEFECT_TOL:
        raise QuadratureFailure(
            "gain-chain kernel failed its mass checks "
            f"(row defect {row_defect:.3g}, fixed-point defect {fix_defect:.3g}); "
            "correlation too close to 1 for this rule"
        )
    _kernel_cache[key] = (z, W, K)
    return z, W, K


def effective_capacity_quadrature(
    spec: ChannelSpec, snr: float, theta: float
) -> EffCapEstimate:
    """Deterministic C_E for any rho, exact to roughly 1e-10 relative.

    rho = 0 factorizes over symbols and rho = 1 collapses to a single
    gain, both handled by one-dimensional integration; in between, the
    expectation runs over the Markov chain of within-block gains with a
    panel-quadrature discretization of the conditional kernel.  Unlike
    the Monte Carlo route the result is smooth in snr, so it is safe to
    difference numerically.
    """
    snr = _check_snr(snr)
    theta = _check_theta(theta)
    gamma = snr * spec.sigma_h_sq
    a = theta / LN2
    if spec.rho >= 1.0 - 1e-9:
        mean = _neg_moment_exponential(gamma, spec.m * a)
        value = max(0.0, -math.log(mean) / theta)
        return EffCapEstimate(value, 0.0, "quadrature", 0, theta, snr)
    if spec.rho <= 1e-12 or spec.m == 1:
        mean = _neg_moment_exponential(gamma, a)
        value = max(0.0, -(spec.m / theta) * math.log(mean))
        return EffCapEstimate(value, 0.0, "quadrature", 0, theta, snr)
    z, W, K = _gain_chain_rule(spec.rho, spec.sigma_h_sq)
    g = (1.0 + snr * z) ** (-a)
    marginal = np.exp(-z / spec.sigma_h_sq) / spec.sigma_h_sq
    vec = W * marginal * g
    step = K * (W * g)[None, :]
    for _ in range(spec.m - 1):
        vec = vec @ step
    mean = float(np.sum(vec))
    if not (0.0 < mean <= 1.0 + 1e-9):
        raise QuadratureFailure(f"chain quadrature left the unit interval ({mean})")
    value = max(0.0, -math.log(min(mean, 1.0)) / theta)
    return EffCapEstimate(value, 0.0, "quadrature", 0, theta, snr)


# ---------------------------------------------------------------------------
# JSON construction
# ---------------------------------------------------------------------------


def channel_spec_from_json(doc) -> ChannelSpec:
    """ChannelSpec from {"m": ..., "rho": ..., "sigma_h_sq": ...}."""
    if not isinstance(doc, dict):
        raise ValidationError("$", "channel document must be a JSON object")
    out = {}
    for name, required in (("m", True), ("rho", True), ("sigma_h_sq", False)):
        if name not in doc:
            if required:
                raise ValidationError(name, "missing required field")
            continue
        v = doc[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(name, f"must be a number, got {type(v).__name__}")
        out[name] = v
    if "distribution" in doc:
        out["distribution"] = doc["distribution"]
    try:
        return ChannelSpec(**out)
    except ValueError as exc:
        raise ValidationError("$", str(exc)) from exc
