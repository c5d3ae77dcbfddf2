"""Shared numerical helpers for the test suite."""

import math

import numpy as np
from scipy.stats import poisson

from linjump import log_density_batch


def density_integral(params, delta, spread=10.0, tail=1e-13):
    """Integrate the transition density over one step by composite quadrature.

    Panels of width sigma*sqrt(delta)/2 with 16-node Gauss-Legendre cover a
    merged union of intervals around each mixture component, so overlapping
    components are never double counted.  Truncation keeps the Poisson tail
    below ``tail``.
    """
    sd = params.sigma * math.sqrt(delta)
    shift = (params.theta - params.lambda_) * delta
    m = 0
    while poisson.sf(m, params.lambda_ * delta) > tail:
        m += 1
    intervals = [(k + shift - spread * sd, k + shift + spread * sd) for k in range(m + 1)]
    merged = [intervals[0]]
    for lo, hi in intervals[1:]:
        if lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    nodes, weights = np.polynomial.legendre.leggauss(16)
    total = 0.0
    for lo, hi in merged:
        panels = max(8, int(math.ceil((hi - lo) / (sd / 2.0))))
        edges = np.linspace(lo, hi, panels + 1)
        mid = (edges[1:] + edges[:-1]) / 2.0
        half = (edges[1] - edges[0]) / 2.0
        xs = (mid[:, None] + half * nodes[None, :]).ravel()
        ws = np.tile(weights * half, panels)
        total += float(np.sum(ws * np.exp(log_density_batch(params, delta, xs))))
    return total


def fd_score(params, delta, dx, rel_step=1e-5):
    """Central finite differences of the log density in each natural parameter."""
    from linjump import ModelParams, log_transition_density

    base = [params.theta, params.sigma, params.lambda_]
    out = []
    for i in range(3):
        h = rel_step * max(1.0, abs(base[i]))
        hi = base.copy()
        lo = base.copy()
        hi[i] += h
        lo[i] -= h
        f_hi = log_transition_density(ModelParams(*hi), delta, 0.0, dx)
        f_lo = log_transition_density(ModelParams(*lo), delta, 0.0, dx)
        out.append((f_hi - f_lo) / (2.0 * h))
    return np.array(out)


def random_params(rng, sigma_range=(0.3, 3.0), lambda_range=(0.1, 3.0), theta_range=(-2.0, 2.0)):
    from linjump import ModelParams

    return ModelParams(
        rng.uniform(*theta_range),
        math.exp(rng.uniform(math.log(sigma_range[0]), math.log(sigma_range[1]))),
        math.exp(rng.uniform(math.log(lambda_range[0]), math.log(lambda_range[1]))),
    )
