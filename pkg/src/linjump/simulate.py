"""Exact simulation of equidistant increments with latent components recorded.

Randomness comes from counter-based Philox streams keyed by (root_seed,
stream indices), so replicates are reproducible and independent of worker
count or production order.  Poisson counts are drawn by CDF inversion from a
single uniform per variate, which keeps streams stable across library
versions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .model import ModelParams, SamplingGrid

__all__ = [
    "SeedSpec",
    "PathRecord",
    "simulate_path",
    "simulate_batch",
    "write_path_csv",
    "read_path_csv",
]

_MASK64 = (1 << 64) - 1


def substream(root_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (root_seed, key...); same inputs, same stream."""
    seq = np.random.SeedSequence(int(root_seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class SeedSpec:
    """Reproducible stream id: (root_seed, stream_id) -> independent stream."""

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.stream_id < 0:
            raise ValueError(f"stream_id must be >= 0, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        return substream(self.root_seed, self.stream_id)


# CDF tables for Poisson inversion, keyed by the (exact float) rate.
_poisson_cdf_cache: dict[float, np.ndarray] = {}


def _poisson_cdf(rate: float) -> np.ndarray:
    cdf = _poisson_cdf_cache.get(rate)
    if cdf is None:
        terms = [math.exp(-rate)]
        k = 0
        # extend until the remaining tail is beyond double resolution
        while sum(terms) < 1.0 - 1e-18 and k < 16 + int(8 * rate):
            k += 1
            terms.append(terms[-1] * rate / k)
        cdf = np.cumsum(terms)
        _poisson_cdf_cache[rate] = cdf
    return cdf


def poisson_counts(gen: np.random.Generator, rate: float, size: int) -> np.ndarray:
    """Poisson draws by inversion (one uniform each) for the small rates used here."""
    if rate > 10.0:
        return gen.poisson(rate, size)
    cdf = _poisson_cdf(rate)
    u = gen.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def _simulate_with(
    params: ModelParams, grid: SamplingGrid, gen: np.random.Generator
) -> "PathRecord":
    d = grid.delta
    b_inc = gen.standard_normal(grid.n) * math.sqrt(d)
    n_inc = poisson_counts(gen, params.lambda_ * d, grid.n)
    steps = params.theta * d + params.sigma * b_inc + n_inc - params.lambda_ * d
    x_obs = np.empty(grid.n + 1)
    x_obs[0] = grid.x0
    x_obs[1:] = grid.x0 + np.cumsum(steps)
    return PathRecord(grid=grid, x_obs=x_obs, b_inc=b_inc, n_inc=n_inc)


@dataclass(frozen=True)
class PathRecord:
    """Observed path plus the latent Brownian and Poisson increments."""

    grid: SamplingGrid
    x_obs: np.ndarray
    b_inc: np.ndarray
    n_inc: np.ndarray

    def increments(self) -> np.ndarray:
        return np.diff(self.x_obs)


def simulate_path(params: ModelParams, grid: SamplingGrid, seed: SeedSpec) -> PathRecord:
    """One path of n increments; deterministic given the seed spec."""
    return _simulate_with(params, grid, seed.generator())


def simulate_batch(
    params: ModelParams, grid: SamplingGrid, root_seed: int, replicates: int
) -> Iterator[PathRecord]:
    """Stream of paths where replicate r uses SeedSpec(root_seed, r)."""
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    for r in range(replicates):
        yield simulate_path(params, grid, SeedSpec(root_seed, r))


def write_path_csv(path: PathRecord, fileobj) -> None:
    """Dump a path as CSV: columns k, t, x, b_inc, n_inc at 17 significant digits.

    Row k holds the state at t_k; the increment columns on row k >= 1 are the
    latent increments over (t_{k-1}, t_k], and are empty on row 0.
    """
    fileobj.write("k,t,x,b_inc,n_inc\n")
    d = path.grid.delta
    fileobj.write(f"0,{0.0:.17g},{path.x_obs[0]:.17g},,\n")
    for k in range(1, path.grid.n + 1):
        fileobj.write(
            f"{k},{k * d:.17g},{path.x_obs[k]:.17g},"
            f"{path.b_inc[k - 1]:.17g},{path.n_inc[k - 1]}\n"
        )


def read_path_csv(fileobj) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back (x_obs, b_inc, n_inc) from the CSV layout of write_path_csv."""
    header = fileobj.readline().strip()
    if header != "k,t,x,b_inc,n_inc":
        raise ValueError(f"unexpected path CSV header: {header!r}")
    xs, bs, ns = [], [], []
    for line in fileobj:
        parts = line.rstrip("\n").split(",")
        xs.append(float(parts[2]))
        if parts[3] != "":
            bs.append(float(parts[3]))
            ns.append(int(parts[4]))
    return np.array(xs), np.array(bs), np.array(ns, dtype=int)
