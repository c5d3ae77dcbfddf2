"""Model parameters, local perturbations, sampling grids, and exact moments.

The process is ``X_t = x0 + theta*t + sigma*B_t + N_t - lambda*t`` with a
standard Brownian motion ``B`` and an independent unit-jump Poisson process
``N`` of intensity ``lambda``.  Everything downstream (densities, scores,
likelihood-ratio harnesses) consumes the immutable value types defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "Perturbation",
    "SamplingGrid",
    "GridScheme",
    "LocalizedParams",
    "fisher_matrix",
    "rate_vector",
    "localize",
    "increment_moments",
    "grid_sequence",
]


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Parameter triple (drift, diffusion scale, jump intensity)."""

    theta: float
    sigma: float
    lambda_: float

    def __post_init__(self):
        object.__setattr__(self, "theta", _require_finite("theta", self.theta))
        object.__setattr__(self, "sigma", _require_finite("sigma", self.sigma))
        object.__setattr__(self, "lambda_", _require_finite("lambda_", self.lambda_))
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.lambda_ <= 0:
            raise ValueError(f"lambda_ must be > 0, got {self.lambda_}")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.sigma, self.lambda_])


@dataclass(frozen=True)
class Perturbation:
    """Local perturbation directions for (theta, sigma, lambda)."""

    u: float
    v: float
    w: float

    def __post_init__(self):
        object.__setattr__(self, "u", _require_finite("u", self.u))
        object.__setattr__(self, "v", _require_finite("v", self.v))
        object.__setattr__(self, "w", _require_finite("w", self.w))

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w])

    @property
    def is_zero(self) -> bool:
        return self.u == 0.0 and self.v == 0.0 and self.w == 0.0


@dataclass(frozen=True)
class SamplingGrid:
    """Equidistant observation grid: n increments of width delta from x0."""

    n: int
    delta: float
    x0: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", _require_finite("delta", self.delta))
        object.__setattr__(self, "x0", _require_finite("x0", self.x0))
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")

    @property
    def horizon(self) -> float:
        return self.n * self.delta

    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.delta


@dataclass(frozen=True)
class GridScheme:
    """Step-size scheme delta(n) = c * n**(-beta) with beta in (0, 1).

    Along n -> infinity the scheme satisfies the high-frequency, growing-
    horizon regime: delta(n) -> 0 while n * delta(n) -> infinity.
    """

    c: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "c", _require_finite("c", self.c))
        object.__setattr__(self, "beta", _require_finite("beta", self.beta))
        if self.c <= 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")

    def delta(self, n: int) -> float:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return self.c * float(n) ** (-self.beta)

    def grid(self, n: int, x0: float = 0.0) -> SamplingGrid:
        d = self.delta(n)
        if d > 1.0:
            raise ValueError(
                f"step delta = {d} exceeds 1 at n = {n}; the sampling regime "
                f"requires delta <= 1 (increase n or reduce c)"
            )
        return SamplingGrid(n=n, delta=d, x0=x0)


def grid_sequence(scheme: GridScheme, n_list, x0: float = 0.0) -> list[SamplingGrid]:
    """Grids for each n in ``n_list`` under ``scheme``, validated for delta <= 1."""
    grids = [scheme.grid(int(n), x0=x0) for n in n_list]
    return grids


@dataclass(frozen=True)
class LocalizedParams:
    """Localization of a base parameter triple along a perturbation.

    ``ell = 0`` is the base point, ``ell = 1`` the fully localized triple
    (theta + u/sqrt(n*delta), sigma + v/sqrt(n), lambda + w/sqrt(n*delta)).
    """

    base: ModelParams
    z: Perturbation
    n: int
    delta: float
    ell: float

    def __post_init__(self):
        if not 0.0 <= self.ell <= 1.0:
            raise ValueError(f"ell must lie in [0, 1], got {self.ell}")

    @property
    def params(self) -> ModelParams:
        return localize(self.base, self.z, self.n, self.delta, self.ell)


def localize(
    base: ModelParams, z: Perturbation, n: int, delta: float, ell: float
) -> ModelParams:
    """Localized parameter triple at interpolation point ``ell`` in [0, 1].

    Raises ValueError naming the offending coordinate if the localized sigma
    or lambda leaves the positive half-line.  No clamping is performed.
    """
    if not 0.0 <= ell <= 1.0:
        raise ValueError(f"ell must lie in [0, 1], got {ell}")
    if n < 1 or delta <= 0:
        raise ValueError(f"need n >= 1 and delta > 0, got n={n}, delta={delta}")
    root_nd = math.sqrt(n * delta)
    root_n = math.sqrt(n)
    theta = base.theta + ell * z.u / root_nd
    sigma = base.sigma + ell * z.v / root_n
    lam = base.lambda_ + ell * z.w / root_nd
    if sigma <= 0:
        raise ValueError(
            f"localized sigma = {sigma} is not positive (base {base.sigma}, "
            f"v = {z.v}, ell = {ell}, n = {n})"
        )
    if lam <= 0:
        raise ValueError(
            f"localized lambda = {lam} is not positive (base {base.lambda_}, "
            f"w = {z.w}, ell = {ell}, n = {n}, delta = {delta})"
        )
    return ModelParams(theta, sigma, lam)


def fisher_matrix(sigma: float, lambda_: float) -> np.ndarray:
    """Asymptotic information matrix for (theta, sigma, lambda).

    Returns (1/sigma^2) * [[1, 0, -1], [0, 2, 0], [-1, 0, 1 + sigma^2/lambda]],
    which is symmetric positive definite for all sigma, lambda > 0.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if lambda_ <= 0:
        raise ValueError(f"lambda_ must be > 0, got {lambda_}")
    s2 = sigma * sigma
    return (1.0 / s2) * np.array(
        [
            [1.0, 0.0, -1.0],
            [0.0, 2.0, 0.0],
            [-1.0, 0.0, 1.0 + s2 / lambda_],
        ]
    )


def rate_vector(n: int, delta: float) -> tuple[float, float, float]:
    """Convergence rates (sqrt(n*delta), sqrt(n), sqrt(n*delta))."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    root_nd = math.sqrt(n * delta)
    return (root_nd, math.sqrt(n), root_nd)


def increment_moments(params: ModelParams, delta: float) -> tuple[float, float]:
    """Exact mean and variance of one observed increment over a step delta.

    The compensated jump part has mean zero and variance lambda*delta, and is
    independent of the Brownian part, so mean = theta*delta and
    variance = (sigma^2 + lambda)*delta.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    mean = params.theta * delta
    variance = (params.sigma**2 + params.lambda_) * delta
    return (mean, variance)
