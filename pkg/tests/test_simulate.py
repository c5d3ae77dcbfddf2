"""Exact simulation: reconstruction, distributional laws, seed determinism."""

import io
import math

import numpy as np
import pytest
from scipy import stats

from linjump import (
    ModelParams,
    PathRecord,
    SamplingGrid,
    SeedSpec,
    increment_moments,
    read_path_csv,
    simulate_batch,
    simulate_path,
    write_path_csv,
)
from linjump.simulate import poisson_counts, substream

UNIT = ModelParams(1.0, 1.0, 1.0)


class TestReconstruction:
    def test_identity_holds_exactly(self):
        params = ModelParams(-0.7, 1.4, 2.3)
        grid = SamplingGrid(5000, 0.02, x0=3.0)
        path = simulate_path(params, grid, SeedSpec(13, 2))
        expected = (
            params.theta * grid.delta
            + params.sigma * path.b_inc
            + path.n_inc
            - params.lambda_ * grid.delta
        )
        scale = np.maximum(1.0, np.max(np.abs(path.x_obs)))
        np.testing.assert_allclose(
            np.diff(path.x_obs), expected, atol=1e-12 * scale, rtol=0
        )
        assert path.x_obs[0] == grid.x0


class TestDistributions:
    def test_increment_moments_match(self):
        grid = SamplingGrid(10**6, 0.1)
        path = simulate_path(UNIT, grid, SeedSpec(101, 0))
        dx = path.increments()
        mean, var = increment_moments(UNIT, grid.delta)
        se_mean = math.sqrt(var / dx.size)
        assert abs(dx.mean() - mean) < 4 * se_mean
        # SE of the sample variance via the fourth central moment
        centered = dx - dx.mean()
        se_var = math.sqrt(
            (np.mean(centered**4) - np.var(dx) ** 2) / dx.size
        )
        assert abs(dx.var() - var) < 4 * se_var

    def test_jump_fraction(self):
        params = ModelParams(0.0, 1.0, 1.0)
        grid = SamplingGrid(10**6, 0.01)  # lambda*delta = 0.01
        path = simulate_path(params, grid, SeedSpec(55, 0))
        frac = np.mean(path.n_inc >= 1)
        target = 1.0 - math.exp(-0.01)
        se = math.sqrt(target * (1 - target) / grid.n)
        assert abs(frac - target) < 4 * se

    def test_brownian_increments_normal(self):
        grid = SamplingGrid(10**5, 0.04)
        path = simulate_path(UNIT, grid, SeedSpec(77, 0))
        z = path.b_inc / math.sqrt(grid.delta)
        _, pvalue = stats.kstest(z, "norm")
        assert pvalue > 0.001

    def test_poisson_inversion_matches_pmf(self):
        gen = substream(2024, 0)
        rate = 0.5
        draws = poisson_counts(gen, rate, 10**5)
        kmax = int(draws.max())
        observed = np.bincount(draws, minlength=kmax + 1)
        expected = stats.poisson.pmf(np.arange(kmax + 1), rate) * draws.size
        # merge the tail so every chi-square cell has expected mass >= 5
        expected[-1] += stats.poisson.sf(kmax, rate) * draws.size
        cut = int(np.searchsorted(expected < 5.0, True))
        if cut < len(expected):
            observed = np.append(observed[:cut], observed[cut:].sum())
            expected = np.append(expected[:cut], expected[cut:].sum())
        chi2 = np.sum((observed - expected) ** 2 / expected)
        assert stats.chi2.sf(chi2, len(observed) - 1) > 0.001

    def test_poisson_large_rate_fallback(self):
        gen = substream(2024, 1)
        draws = poisson_counts(gen, 25.0, 1000)
        assert abs(draws.mean() - 25.0) < 4 * math.sqrt(25.0 / 1000)


class TestSeedDeterminism:
    def test_identical_seed_identical_path(self):
        grid = SamplingGrid(500, 0.05)
        a = simulate_path(UNIT, grid, SeedSpec(42, 3))
        b = simulate_path(UNIT, grid, SeedSpec(42, 3))
        assert np.array_equal(a.x_obs, b.x_obs)
        assert np.array_equal(a.b_inc, b.b_inc)
        assert np.array_equal(a.n_inc, b.n_inc)

    def test_csv_bytes_identical(self):
        grid = SamplingGrid(200, 0.05)
        bufs = []
        for _ in range(2):
            buf = io.StringIO()
            write_path_csv(simulate_path(UNIT, grid, SeedSpec(9, 0)), buf)
            bufs.append(buf.getvalue())
        assert bufs[0] == bufs[1]

    def test_batch_first_replicate_matches_stream_zero(self):
        grid = SamplingGrid(100, 0.05)
        batch = list(simulate_batch(UNIT, grid, 31, 1))
        single = simulate_path(UNIT, grid, SeedSpec(31, 0))
        assert np.array_equal(batch[0].x_obs, single.x_obs)

    def test_distinct_streams_independent(self):
        grid = SamplingGrid(10**4, 0.1)
        a = simulate_path(UNIT, grid, SeedSpec(88, 0)).b_inc
        b = simulate_path(UNIT, grid, SeedSpec(88, 1)).b_inc
        # chi-square independence on a 4x4 quantile grid
        qa = np.searchsorted(np.quantile(a, [0.25, 0.5, 0.75]), a)
        qb = np.searchsorted(np.quantile(b, [0.25, 0.5, 0.75]), b)
        table = np.zeros((4, 4))
        for i, j in zip(qa, qb):
            table[i, j] += 1
        _, pvalue, _, _ = stats.chi2_contingency(table)
        assert pvalue > 0.001


class TestPathCsv:
    def test_round_trip(self):
        grid = SamplingGrid(50, 0.1, x0=-1.0)
        path = simulate_path(UNIT, grid, SeedSpec(4, 0))
        buf = io.StringIO()
        write_path_csv(path, buf)
        buf.seek(0)
        xs, bs, ns = read_path_csv(buf)
        np.testing.assert_array_equal(xs, path.x_obs)
        np.testing.assert_array_equal(bs, path.b_inc)
        np.testing.assert_array_equal(ns, path.n_inc)

    def test_header_checked(self):
        with pytest.raises(ValueError, match="header"):
            read_path_csv(io.StringIO("a,b,c\n"))


class TestValidation:
    def test_batch_replicates(self):
        grid = SamplingGrid(10, 0.1)
        with pytest.raises(ValueError):
            list(simulate_batch(UNIT, grid, 1, 0))

    def test_seed_spec_stream_id(self):
        with pytest.raises(ValueError):
            SeedSpec(1, -1)

    def test_increments_view(self):
        grid = SamplingGrid(10, 0.1)
        path = simulate_path(UNIT, grid, SeedSpec(1, 0))
        assert path.increments().shape == (10,)
        assert isinstance(path, PathRecord)
