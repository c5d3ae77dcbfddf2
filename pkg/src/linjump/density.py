"""Exact transition density of the linear jump model and derived quantities.

Over one step of width ``delta`` the increment decomposes, given ``m`` jumps,
into a Gaussian of mean ``m + (theta - lambda)*delta`` and variance
``sigma^2 * delta``, so the transition density is a Poisson(lambda*delta)
mixture of unit-spaced Gaussians.  Every conditional expectation given an
observed increment reduces to moments of the discrete posterior over the
jump count.  All mixture arithmetic happens in log space: at high frequency
the weights span hundreds of orders of magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ModelParams

__all__ = [
    "TruncationPolicy",
    "TruncationWindow",
    "JumpPosterior",
    "ScoreVector",
    "log_sum_exp",
    "truncation_window",
    "log_transition_density",
    "log_density_batch",
    "jump_posterior",
    "conditional_moment",
    "score_vector",
    "score_batch",
    "DEFAULT_POLICY",
]

_LOG_TWO_PI = math.log(2.0 * math.pi)

# Log-factorial table, grown on demand and shared by all callers.
_log_fact = np.zeros(1)


def _log_factorial_table(m_max: int) -> np.ndarray:
    global _log_fact
    if m_max >= _log_fact.size:
        _log_fact = np.array([math.lgamma(m + 1.0) for m in range(m_max + 65)])
    return _log_fact


@dataclass(frozen=True)
class TruncationPolicy:
    """Controls where the jump-count mixture sum is cut off.

    Terms whose log weight falls more than ``log_tol`` below the running
    per-observation maximum are dropped; ``m_cap`` is a hard upper bound on
    the jump count regardless of weight.
    """

    log_tol: float = 46.0
    m_cap: int = 512

    def __post_init__(self):
        if not self.log_tol > 0:
            raise ValueError(f"log_tol must be > 0, got {self.log_tol}")
        if self.m_cap < 1:
            raise ValueError(f"m_cap must be >= 1, got {self.m_cap}")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class TruncationWindow:
    m_lo: int
    m_hi: int
    capped: bool = False


@dataclass(frozen=True)
class JumpPosterior:
    """Discrete posterior of the jump count given one observed increment."""

    m_lo: int
    m_hi: int
    log_weights: np.ndarray
    probs: np.ndarray
    capped: bool = False

    @property
    def counts(self) -> np.ndarray:
        return np.arange(self.m_lo, self.m_hi + 1)


@dataclass(frozen=True)
class ScoreVector:
    """Partial derivatives of the log transition density."""

    d_theta: float
    d_sigma: float
    d_lambda: float

    def as_array(self) -> np.ndarray:
        return np.array([self.d_theta, self.d_sigma, self.d_lambda])


def log_sum_exp(values) -> float:
    """log(sum(exp(values))) with the usual max shift; exact on singletons."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("log_sum_exp of an empty array is undefined")
    if arr.size == 1:
        return float(arr[0])
    top = float(np.max(arr))
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(arr - top))))


@dataclass(frozen=True)
class MixtureMoments:
    """Log normalizer and posterior moments for a batch of increments.

    ``log_norm`` is log sum_m exp(lw_m) where lw_m is the unnormalized log
    weight of jump count m (Gaussian factor times Poisson factor without the
    e^{-lambda*delta} constant).  ``resid`` refers to the shifted increment
    dx - m - (theta - lambda)*delta, i.e. the Gaussian part sigma*dB given m.
    """

    log_norm: np.ndarray
    count_mean: np.ndarray | None
    resid_mean: np.ndarray | None
    resid_sq_mean: np.ndarray | None
    m_lo: int
    m_hi: int
    capped: bool


def _mixture_moments(
    params: ModelParams,
    delta: float,
    dx,
    policy: TruncationPolicy = DEFAULT_POLICY,
    need_count: bool = True,
    need_resid: bool = True,
) -> MixtureMoments:
    """Stream over jump counts accumulating the posterior moment sums.

    The window starts at the per-observation nearest-integer residual and
    expands on both sides until every observation's log weight is below its
    running maximum minus ``policy.log_tol`` (the weights are unimodal in m,
    so a one-pass expansion with a "still rising" guard is exact)."""
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    dx = np.atleast_1d(np.asarray(dx, dtype=float))
    if not np.all(np.isfinite(dx)):
        raise ValueError("increments must be finite")

    shift = (params.theta - params.lambda_) * delta
    inv_two_var = 1.0 / (2.0 * params.sigma**2 * delta)
    log_rate = math.log(params.lambda_ * delta)
    table = _log_factorial_table(policy.m_cap)

    center = np.rint(dx - shift)
    lo0 = int(np.clip(center.min(), 0, policy.m_cap))
    hi0 = int(np.clip(center.max(), 0, policy.m_cap))

    best = np.full(dx.shape, -np.inf)
    s0 = np.zeros_like(dx)
    s_count = np.zeros_like(dx) if need_count else None
    s_resid = np.zeros_like(dx) if need_resid else None
    s_resid_sq = np.zeros_like(dx) if need_resid else None

    def add_column(m: int) -> np.ndarray:
        nonlocal best, s0, s_count, s_resid, s_resid_sq
        resid = dx - m - shift
        lw = -(resid * resid) * inv_two_var + m * log_rate - table[m]
        new_best = np.maximum(best, lw)
        grew = new_best > best
        if grew.any():
            scale = np.ones_like(dx)
            scale[grew] = np.exp((best - new_best)[grew])
            s0 *= scale
            if need_count:
                s_count *= scale
            if need_resid:
                s_resid *= scale
                s_resid_sq *= scale
            best = new_best
        w = np.exp(lw - best)
        s0 += w
        if need_count:
            s_count += m * w
        if need_resid:
            rw = resid * w
            s_resid += rw
            s_resid_sq += resid * rw
        return lw

    for m in range(lo0, hi0 + 1):
        lw = add_column(m)
        if m == lo0:
            lw_lo = lw
    lw_hi = lw

    threshold = policy.log_tol
    capped = False
    m_hi = hi0
    prev = lw_hi
    while m_hi < policy.m_cap:
        lw = add_column(m_hi + 1)
        m_hi += 1
        if not ((lw >= best - threshold) | (lw > prev)).any():
            break
        prev = lw
    else:
        capped = bool((prev >= best - threshold).any())

    m_lo = lo0
    prev = lw_lo
    while m_lo > 0:
        lw = add_column(m_lo - 1)
        m_lo -= 1
        if not ((lw >= best - threshold) | (lw > prev)).any():
            break
        prev = lw

    if not np.all(np.isfinite(best)):
        raise ValueError("mixture weights are non-finite; inputs out of range")

    log_norm = best + np.log(s0)
    return MixtureMoments(
        log_norm=log_norm,
        count_mean=(s_count / s0) if need_count else None,
        resid_mean=(s_resid / s0) if need_resid else None,
        resid_sq_mean=(s_resid_sq / s0) if need_resid else None,
        m_lo=m_lo,
        m_hi=m_hi,
        capped=capped,
    )


def _log_density_from_norm(params: ModelParams, delta: float, log_norm):
    const = -params.lambda_ * delta - 0.5 * (
        _LOG_TWO_PI + math.log(params.sigma**2 * delta)
    )
    return log_norm + const


def log_density_batch(
    params: ModelParams,
    delta: float,
    dx,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> np.ndarray:
    """Log transition density evaluated at an array of increments."""
    mm = _mixture_moments(params, delta, dx, policy, need_count=False, need_resid=False)
    return _log_density_from_norm(params, delta, mm.log_norm)


def log_transition_density(
    params: ModelParams,
    delta: float,
    x: float,
    y: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> float:
    """Log density of X_{t+delta} = y given X_t = x."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"x and y must be finite, got x={x}, y={y}")
    return float(log_density_batch(params, delta, np.array([y - x]), policy)[0])


def truncation_window(
    params: ModelParams,
    delta: float,
    obs_increment: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> TruncationWindow:
    """Jump-count window retained for one observed increment.

    The window holds exactly the counts whose log weight is within
    ``policy.log_tol`` of the maximum; the expansion probes one column past
    each edge, which is trimmed off here.
    """
    mm = _mixture_moments(params, delta, np.array([obs_increment]), policy)
    counts = np.arange(mm.m_lo, mm.m_hi + 1)
    lw = _log_weights_scalar(params, delta, obs_increment, counts)
    keep = np.flatnonzero(lw >= lw.max() - policy.log_tol)
    return TruncationWindow(
        m_lo=int(counts[keep[0]]), m_hi=int(counts[keep[-1]]), capped=mm.capped
    )


def _log_weights_scalar(
    params: ModelParams, delta: float, obs_increment: float, counts: np.ndarray
) -> np.ndarray:
    shift = (params.theta - params.lambda_) * delta
    inv_two_var = 1.0 / (2.0 * params.sigma**2 * delta)
    log_rate = math.log(params.lambda_ * delta)
    table = _log_factorial_table(int(counts.max()))
    resid = obs_increment - counts - shift
    return -(resid * resid) * inv_two_var + counts * log_rate - table[counts]


def jump_posterior(
    params: ModelParams,
    delta: float,
    obs_increment: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> JumpPosterior:
    """Posterior distribution of the jump count given one increment."""
    if not math.isfinite(obs_increment):
        raise ValueError(f"obs_increment must be finite, got {obs_increment}")
    win = truncation_window(params, delta, obs_increment, policy)
    counts = np.arange(win.m_lo, win.m_hi + 1)
    lw = _log_weights_scalar(params, delta, obs_increment, counts)
    probs = np.exp(lw - np.max(lw))
    probs /= probs.sum()
    return JumpPosterior(
        m_lo=win.m_lo, m_hi=win.m_hi, log_weights=lw, probs=probs, capped=win.capped
    )


def conditional_moment(
    params: ModelParams,
    delta: float,
    obs_increment: float,
    g: Callable[[int], float],
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> float:
    """Posterior expectation of g(jump count) given the observed increment."""
    post = jump_posterior(params, delta, obs_increment, policy)
    total = 0.0
    for m, p in zip(post.counts, post.probs):
        val = float(g(int(m)))
        if not math.isfinite(val):
            raise ValueError(f"g({int(m)}) = {val!r} is not finite")
        total += p * val
    return total


def _scores_from_moments(params: ModelParams, delta: float, mm: MixtureMoments):
    s2 = params.sigma**2
    d_theta = mm.resid_mean / s2
    d_sigma = -1.0 / params.sigma + mm.resid_sq_mean / (params.sigma**3 * delta)
    d_lambda = mm.count_mean / params.lambda_ - delta - mm.resid_mean / s2
    return d_theta, d_sigma, d_lambda


def score_batch(
    params: ModelParams,
    delta: float,
    dx,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> np.ndarray:
    """Score vectors for an array of increments, shape (len(dx), 3)."""
    mm = _mixture_moments(params, delta, dx, policy)
    d_theta, d_sigma, d_lambda = _scores_from_moments(params, delta, mm)
    return np.column_stack([d_theta, d_sigma, d_lambda])


def score_vector(
    params: ModelParams,
    delta: float,
    obs_increment: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> ScoreVector:
    """Gradient of the log transition density in (theta, sigma, lambda).

    With posterior residual moments A1 = E[resid | dx], A2 = E[resid^2 | dx]
    and posterior count mean Mn, the components are A1/sigma^2,
    -1/sigma + A2/(sigma^3*delta), and Mn/lambda - delta - A1/sigma^2.
    """
    row = score_batch(params, delta, np.array([obs_increment]), policy)[0]
    return ScoreVector(d_theta=float(row[0]), d_sigma=float(row[1]), d_lambda=float(row[2]))
