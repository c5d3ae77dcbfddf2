"""Pathwise split sums of the jump-count mismatch ratio and their bounds.

For a step carrying j jumps under the data-generating parameters, the
posterior under a perturbed ("bar") parameter triple assigns mass to other
jump counts m != j.  The weighted mismatch sums, split by the Brownian
increment threshold |dB| <= delta^alpha and by m < j versus m > j, obey four
pathwise upper bounds once the perturbation is within C/sqrt(n*delta) and
delta is small; their expectations decay exponentially in
delta^-(1 - 2*alpha).  This module evaluates the splits in log space,
verifies the four inequalities draw by draw, and estimates the decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import poisson as poisson_dist

from .density import _log_factorial_table
from .model import ModelParams
from .simulate import poisson_counts, substream

__all__ = [
    "BoundsConfig",
    "STable",
    "MEstimate",
    "DecayFit",
    "BoundsCheckReport",
    "perturbed_pair",
    "s_jp",
    "lemma_bounds_check",
    "estimate_M",
    "decay_fit",
]

_TAG_BOUNDS_CHECK = 21
_TAG_BOUNDS_M = 22

# relative slack for the log-space inequality comparisons (pure float guard)
_LOG_SLACK = 1e-9


def perturbed_pair(params: ModelParams, n: int, delta: float, C: float = 1.0) -> ModelParams:
    """Bar parameters at the exact boundary of the perturbation hypothesis."""
    offset = C / math.sqrt(n * delta)
    return ModelParams(params.theta + offset, params.sigma, params.lambda_ + offset)


@dataclass(frozen=True)
class BoundsConfig:
    """Configuration of the mismatch-bound experiments.

    The construction enforces the hypothesis |theta - theta_bar| and
    |lambda - lambda_bar| <= C/sqrt(n*delta).
    """

    params: ModelParams
    bar_params: ModelParams
    alpha: float
    p: int
    j_max: int
    n: int
    delta: float
    replicates: int
    root_seed: int
    C: float = 1.0
    strict_delta: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if self.p < 0 or int(self.p) != self.p:
            raise ValueError(f"p must be a non-negative integer, got {self.p}")
        if self.j_max < 0:
            raise ValueError(f"j_max must be >= 0, got {self.j_max}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.C <= 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        budget = self.C / math.sqrt(self.n * self.delta) * (1.0 + 1e-12)
        if abs(self.params.theta - self.bar_params.theta) > budget:
            raise ValueError(
                f"|theta - theta_bar| = {abs(self.params.theta - self.bar_params.theta)} "
                f"exceeds C/sqrt(n*delta) = {budget}"
            )
        if abs(self.params.lambda_ - self.bar_params.lambda_) > budget:
            raise ValueError(
                f"|lambda - lambda_bar| = {abs(self.params.lambda_ - self.bar_params.lambda_)} "
                f"exceeds C/sqrt(n*delta) = {budget}"
            )

    @property
    def hypothesis_margin(self) -> float:
        """Worst-case center of the Gaussian factor on |dB| <= delta^alpha.

        The four pathwise bounds are derived from (j-m)^2 - 2*margin*(j-m)
        >= (j-m)^2/2, which needs this margin <= 1/4; that is the effective
        content of "for n large enough" at fixed alpha.
        """
        drift_gap = abs(self.params.theta - self.bar_params.theta)
        rate_gap = abs(self.params.lambda_ - self.bar_params.lambda_)
        return (
            self.params.sigma * self.delta**self.alpha
            + (drift_gap + rate_gap) * self.delta
        )

    @property
    def delta_strict(self) -> bool:
        if self.strict_delta is not None:
            return self.delta <= self.strict_delta
        return self.hypothesis_margin <= 0.25


def _weight_matrix(bar: ModelParams, delta: float, dx: np.ndarray, j: int, m_cap: int):
    """Log weights of all jump counts 0..M under the bar parameters.

    M is extended until the tail can no longer move any of the partial sums
    (overall, m < j, m > j) at the resolutions used here.
    """
    shift = (bar.theta - bar.lambda_) * delta
    inv_two_var = 1.0 / (2.0 * bar.sigma**2 * delta)
    log_rate = math.log(bar.lambda_ * delta)
    m_hi = max(j + 3, int(np.clip(np.rint((dx - shift).max()), 0, m_cap)) + 3)
    capped = False
    while True:
        m_hi = min(m_hi, m_cap)
        table = _log_factorial_table(m_hi)
        counts = np.arange(m_hi + 1)
        resid = dx[:, None] - counts[None, :] - shift
        lw = -(resid * resid) * inv_two_var + counts * log_rate - table[: m_hi + 1]
        if m_hi >= m_cap:
            capped = True
            break
        gt_max = lw[:, j + 1 :].max(axis=1)
        last, prev = lw[:, -1], lw[:, -2]
        if not ((last > prev).any() or (last >= gt_max - 60.0).any()):
            break
        m_hi += 4
    return lw, capped


def _power_weights(m_hi: int, p: int) -> np.ndarray:
    counts = np.arange(m_hi + 1, dtype=float)
    if p == 0:
        return np.zeros(m_hi + 1)
    with np.errstate(divide="ignore"):
        out = p * np.log(counts)
    return out


def _split_log_sums(bar: ModelParams, delta: float, dx: np.ndarray, j: int, p: int, m_cap: int = 512):
    """Per-draw log of the m<j and m>j partial sums and of the normalizer."""
    lw, capped = _weight_matrix(bar, delta, dx, j, m_cap)
    m_hi = lw.shape[1] - 1
    plog = _power_weights(m_hi, p)
    log_den = logsumexp(lw, axis=1)
    if j == 0:
        log_lt = np.full(dx.shape, -np.inf)
    else:
        log_lt = logsumexp(lw[:, :j] + plog[None, :j], axis=1)
    log_gt = logsumexp(lw[:, j + 1 :] + plog[None, j + 1 :], axis=1)
    return log_lt, log_gt, log_den, capped


def _log_rhs(config: BoundsConfig, j: int, p: int) -> tuple[float, float, float, float]:
    """Logs of the four bound right-hand sides (without the indicators)."""
    bar = config.bar_params
    rate = bar.lambda_ * config.delta
    log_rate = math.log(rate)
    quarter_var = 4.0 * bar.sigma**2 * config.delta

    if j == 0:
        log_rhs11 = -np.inf
    else:
        terms = []
        for m in range(j):
            if m == 0 and p > 0:
                continue
            plog = 0.0 if m == 0 else p * math.log(m)
            terms.append(
                plog - (j - m) ** 2 / quarter_var + m * log_rate - math.lgamma(m + 1)
            )
        base = math.lgamma(j + 1) - j * log_rate
        log_rhs11 = base + (logsumexp(terms) if terms else -np.inf)

    def _poisson_series(start: int, j_shift: int) -> float:
        # log sum_{l >= start} (l + j_shift)^p (rate)^l / l!
        total = -np.inf
        prev = -np.inf
        for ell in range(start, start + 200):
            val = ell * log_rate - math.lgamma(ell + 1)
            if ell + j_shift > 0:
                val += p * math.log(ell + j_shift)
            elif p > 0:
                val = -np.inf
            total = np.logaddexp(total, val)
            if val < total - 60.0 and val < prev:
                break
            prev = val
        return float(total)

    log_rhs12 = -1.0 / quarter_var + _poisson_series(1, j)
    if j > 0:
        log_rhs21 = p * math.log(j) if p > 0 else 0.0
    else:
        log_rhs21 = 0.0 if p == 0 else -np.inf
    log_rhs22 = _poisson_series(0, j + 1)
    return log_rhs11, log_rhs12, log_rhs21, log_rhs22


@dataclass(frozen=True)
class STable:
    """One evaluation of the mismatch sum, its four-way split, and bounds."""

    j: int
    p: int
    b_inc: float
    indicator: bool
    s: float
    s1: float
    s2: float
    s11: float
    s12: float
    s21: float
    s22: float
    rhs11: float
    rhs12: float
    rhs21: float
    rhs22: float
    capped: bool = False


def s_jp(config: BoundsConfig, j: int, b_inc: float, jump_count: int | None = None) -> STable:
    """Evaluate the mismatch sum for one draw.

    ``jump_count`` is the sampled jump count supplying the outer indicator;
    it defaults to ``j`` (indicator = 1).  When it differs from ``j`` every
    entry is zero.
    """
    if not 0 <= j <= config.j_max:
        raise ValueError(f"j must lie in [0, {config.j_max}], got {j}")
    if jump_count is None:
        jump_count = j
    indicator = jump_count == j
    if not indicator:
        zero = 0.0
        return STable(
            j=j, p=config.p, b_inc=b_inc, indicator=False,
            s=zero, s1=zero, s2=zero, s11=zero, s12=zero, s21=zero, s22=zero,
            rhs11=zero, rhs12=zero, rhs21=zero, rhs22=zero,
        )
    params, bar = config.params, config.bar_params
    delta = config.delta
    dx = np.array([params.theta * delta + params.sigma * b_inc + j - params.lambda_ * delta])
    log_lt, log_gt, log_den, capped = _split_log_sums(bar, delta, dx, j, config.p)
    s_lt = float(np.exp(log_lt[0] - log_den[0]))
    s_gt = float(np.exp(log_gt[0] - log_den[0]))
    small = abs(b_inc) <= delta**config.alpha
    lr11, lr12, lr21, lr22 = _log_rhs(config, j, config.p)
    rhs11 = math.exp(lr11) if math.isfinite(lr11) else 0.0
    rhs12 = math.exp(lr12) if math.isfinite(lr12) else 0.0
    # rhs21/rhs22 carry the |dB| > delta^alpha indicator like their splits
    if small:
        rhs21 = rhs22 = 0.0
    else:
        rhs21 = math.exp(lr21) if math.isfinite(lr21) else 0.0
        rhs22 = math.exp(lr22) if math.isfinite(lr22) else 0.0
    s11 = s_lt if small else 0.0
    s12 = s_gt if small else 0.0
    s21 = s_lt if not small else 0.0
    s22 = s_gt if not small else 0.0
    return STable(
        j=j, p=config.p, b_inc=b_inc, indicator=True,
        s=s_lt + s_gt, s1=s11 + s12, s2=s21 + s22,
        s11=s11, s12=s12, s21=s21, s22=s22,
        rhs11=rhs11, rhs12=rhs12, rhs21=rhs21, rhs22=rhs22,
        capped=capped,
    )


@dataclass(frozen=True)
class BoundsCheckReport:
    delta: float
    alpha: float
    p: int
    draws: int
    checked: int
    skipped_large_j: int
    violations: int
    violations_by_split: dict[str, int]
    witnesses: list[dict]
    delta_strict: bool

    @property
    def passed(self) -> bool:
        return self.violations == 0


def lemma_bounds_check(config: BoundsConfig, sample_size: int | None = None) -> BoundsCheckReport:
    """Draw (dB, jump count) pairs and verify the four split inequalities.

    Violations are data, not errors: they are counted and witnessed.  Below
    the strict delta threshold the suite is expected to hold on every draw;
    above it the small-delta hypothesis behind the bounds may genuinely fail
    near the |dB| = delta^alpha boundary.
    """
    draws = int(sample_size if sample_size is not None else config.replicates)
    params = config.params
    delta = config.delta
    gen = substream(config.root_seed, _TAG_BOUNDS_CHECK)
    b = gen.standard_normal(draws) * math.sqrt(delta)
    counts = poisson_counts(gen, params.lambda_ * delta, draws)

    threshold = delta**config.alpha
    total_viol = 0
    by_split = {"s11": 0, "s12": 0, "s21": 0, "s22": 0}
    witnesses: list[dict] = []
    checked = 0
    skipped = int(np.count_nonzero(counts > config.j_max))

    for j in range(config.j_max + 1):
        mask = counts == j
        if not mask.any():
            continue
        bj = b[mask]
        checked += bj.size
        dx = params.theta * delta + params.sigma * bj + j - params.lambda_ * delta
        log_lt, log_gt, log_den, _ = _split_log_sums(
            config.bar_params, delta, dx, j, config.p
        )
        log_s_lt = log_lt - log_den
        log_s_gt = log_gt - log_den
        lr11, lr12, lr21, lr22 = _log_rhs(config, j, config.p)
        small = np.abs(bj) <= threshold

        for name, log_s, log_rhs, sel in (
            ("s11", log_s_lt, lr11, small),
            ("s12", log_s_gt, lr12, small),
            ("s21", log_s_lt, lr21, ~small),
            ("s22", log_s_gt, lr22, ~small),
        ):
            slack = _LOG_SLACK * max(1.0, abs(log_rhs)) if math.isfinite(log_rhs) else 0.0
            bad = sel & (log_s > log_rhs + slack)
            n_bad = int(np.count_nonzero(bad))
            if n_bad:
                by_split[name] += n_bad
                total_viol += n_bad
                for idx in np.flatnonzero(bad)[: max(0, 20 - len(witnesses))]:
                    witnesses.append(
                        {
                            "split": name,
                            "j": j,
                            "p": config.p,
                            "b_inc": float(bj[idx]),
                            "log_s": float(log_s[idx]),
                            "log_rhs": float(log_rhs),
                        }
                    )
    return BoundsCheckReport(
        delta=delta,
        alpha=config.alpha,
        p=config.p,
        draws=draws,
        checked=checked,
        skipped_large_j=skipped,
        violations=total_viol,
        violations_by_split=by_split,
        witnesses=witnesses,
        delta_strict=config.delta_strict,
    )


@dataclass(frozen=True)
class MEstimate:
    """Monte Carlo estimates of the two mismatch expectations at one delta."""

    delta: float
    p: int
    m1_hat: float
    m1_se: float
    m2_hat: float
    m2_se: float
    draws: int
    excluded_large_j: int
    truncated_tail_mass: float

    def __post_init__(self):
        if self.m1_hat < 0 or self.m2_hat < 0:
            raise ValueError("mismatch expectations are non-negative by construction")


def estimate_M(config: BoundsConfig) -> MEstimate:
    """Estimate the two mismatch expectations by Monte Carlo.

    The outer expectation runs over draws under the data parameters; the
    inner conditional expectation is the log-space machinery under the bar
    parameters.  Jump counts beyond j_max are excluded and flagged through
    the Poisson tail mass.
    """
    params = config.params
    delta = config.delta
    draws = config.replicates
    gen = substream(config.root_seed, _TAG_BOUNDS_M)
    b = gen.standard_normal(draws) * math.sqrt(delta)
    counts = poisson_counts(gen, params.lambda_ * delta, draws)

    m1_vals = np.zeros(draws)
    m2_vals = np.zeros(draws)
    excluded = int(np.count_nonzero(counts > config.j_max))

    for j in range(config.j_max + 1):
        mask = counts == j
        if not mask.any():
            continue
        bj = b[mask]
        dx = params.theta * delta + params.sigma * bj + j - params.lambda_ * delta
        lt0, gt0, den, _ = _split_log_sums(config.bar_params, delta, dx, j, 0)
        s0 = np.exp(np.logaddexp(lt0, gt0) - den)
        if config.p == 0:
            sp = s0
        else:
            ltp, gtp, denp, _ = _split_log_sums(config.bar_params, delta, dx, j, config.p)
            sp = np.exp(np.logaddexp(ltp, gtp) - denp)
        m1_vals[mask] = float(j) ** config.p * s0  # 0**0 == 1 covers p == 0
        m2_vals[mask] = sp

    tail = float(poisson_dist.sf(config.j_max, params.lambda_ * delta))
    return MEstimate(
        delta=delta,
        p=config.p,
        m1_hat=float(m1_vals.mean()),
        m1_se=float(m1_vals.std(ddof=1) / math.sqrt(draws)),
        m2_hat=float(m2_vals.mean()),
        m2_se=float(m2_vals.std(ddof=1) / math.sqrt(draws)),
        draws=draws,
        excluded_large_j=excluded,
        truncated_tail_mass=tail,
    )


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log(m1+m2) against delta^-(1-2*alpha)."""

    slope: float
    intercept: float
    r_squared: float
    n_used: int
    n_excluded: int

    @property
    def lemma_consistent(self) -> bool:
        return self.slope < 0.0


def decay_fit(estimates, alpha: float) -> DecayFit:
    """Fit the exponential-decay prediction to a sweep of M estimates.

    Non-positive estimates are excluded (their log is undefined); at least
    four usable points are required.
    """
    xs, ys = [], []
    excluded = 0
    for est in estimates:
        total = est.m1_hat + est.m2_hat
        if total <= 0:
            excluded += 1
            continue
        xs.append(est.delta ** -(1.0 - 2.0 * alpha))
        ys.append(math.log(total))
    if len(xs) < 4:
        raise ValueError(
            f"need at least 4 usable estimates for the decay fit, got {len(xs)}"
        )
    x = np.array(xs)
    y = np.array(ys)
    x_c = x - x.mean()
    denom = float(np.dot(x_c, x_c))
    if denom == 0.0:
        raise ValueError("decay fit needs estimates at distinct step sizes")
    slope = float(np.dot(x_c, y) / denom)
    intercept = float(y.mean() - slope * x.mean())
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_sq = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_sq,
        n_used=len(xs),
        n_excluded=excluded,
    )
