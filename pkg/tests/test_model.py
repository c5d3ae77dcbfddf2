"""Parameter types, information matrix, rates, localization, and grids."""

import math

import numpy as np
import pytest

from linjump import (
    GridScheme,
    LocalizedParams,
    ModelParams,
    Perturbation,
    SamplingGrid,
    fisher_matrix,
    grid_sequence,
    increment_moments,
    localize,
    rate_vector,
)


class TestFisherMatrix:
    def test_unit_parameters(self):
        expected = np.array([[1.0, 0.0, -1.0], [0.0, 2.0, 0.0], [-1.0, 0.0, 2.0]])
        np.testing.assert_allclose(fisher_matrix(1.0, 1.0), expected)

    def test_sigma_two(self):
        expected = 0.25 * np.array([[1.0, 0.0, -1.0], [0.0, 2.0, 0.0], [-1.0, 0.0, 5.0]])
        np.testing.assert_allclose(fisher_matrix(2.0, 1.0), expected)

    def test_symmetric_positive_definite(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            sigma = math.exp(rng.uniform(math.log(1e-3), math.log(1e6)))
            lam = math.exp(rng.uniform(math.log(1e-3), math.log(1e6)))
            gamma = fisher_matrix(sigma, lam)
            np.testing.assert_allclose(gamma, gamma.T)
            eigs = np.linalg.eigvalsh(gamma)
            assert np.all(eigs > 0)
            # closed-form determinant 2/(lambda*sigma^4)
            np.testing.assert_allclose(
                np.linalg.det(gamma), 2.0 / (lam * sigma**4), rtol=1e-6
            )

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            fisher_matrix(0.0, 1.0)
        with pytest.raises(ValueError):
            fisher_matrix(1.0, -2.0)


class TestRateVector:
    @pytest.mark.parametrize(
        "n,delta,expected",
        [
            (100, 0.01, (1.0, 10.0, 1.0)),
            (10000, 0.01, (10.0, 100.0, 10.0)),
            (1, 1.0, (1.0, 1.0, 1.0)),
        ],
    )
    def test_examples(self, n, delta, expected):
        np.testing.assert_allclose(rate_vector(n, delta), expected)

    def test_first_and_third_components_match(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(1, 10**6))
            delta = rng.uniform(1e-6, 1.0)
            rates = rate_vector(n, delta)
            assert rates[0] == rates[2]


class TestLocalize:
    def test_zero_perturbation_is_identity(self):
        base = ModelParams(1.0, 1.0, 1.0)
        z = Perturbation(0.0, 0.0, 0.0)
        for ell in (0.0, 0.3, 1.0):
            assert localize(base, z, 100, 0.01, ell) == base

    def test_example_values(self):
        base = ModelParams(1.0, 1.0, 1.0)
        z = Perturbation(2.0, 3.0, 4.0)
        loc = localize(base, z, 100, 0.01, 1.0)  # sqrt(n*delta)=1, sqrt(n)=10
        np.testing.assert_allclose(
            [loc.theta, loc.sigma, loc.lambda_], [3.0, 1.3, 5.0]
        )

    def test_domain_error_names_sigma(self):
        base = ModelParams(0.0, 0.1, 0.1)
        z = Perturbation(0.0, -10.0, 0.0)
        with pytest.raises(ValueError, match="sigma"):
            localize(base, z, 4, 1.0, 1.0)

    def test_domain_error_names_lambda(self):
        base = ModelParams(0.0, 1.0, 0.05)
        z = Perturbation(0.0, 0.0, -10.0)
        with pytest.raises(ValueError, match="lambda"):
            localize(base, z, 4, 1.0, 1.0)

    def test_affine_in_ell(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            base = ModelParams(rng.normal(), rng.uniform(0.5, 2), rng.uniform(0.5, 2))
            z = Perturbation(rng.normal(), rng.normal(), rng.normal())
            n, delta = int(rng.integers(50, 5000)), rng.uniform(0.01, 1.0)
            try:
                end = localize(base, z, n, delta, 1.0)
            except ValueError:
                continue
            for ell in (0.25, 0.5, 0.75):
                mid = localize(base, z, n, delta, ell)
                expected = base.as_array() + ell * (end.as_array() - base.as_array())
                np.testing.assert_allclose(mid.as_array(), expected, rtol=1e-12)

    def test_localized_params_type(self):
        base = ModelParams(1.0, 1.0, 1.0)
        z = Perturbation(2.0, 3.0, 4.0)
        loc = LocalizedParams(base=base, z=z, n=100, delta=0.01, ell=1.0)
        assert loc.params == localize(base, z, 100, 0.01, 1.0)
        with pytest.raises(ValueError):
            LocalizedParams(base=base, z=z, n=100, delta=0.01, ell=1.5)


class TestIncrementMoments:
    @pytest.mark.parametrize(
        "params,delta,expected",
        [
            ((1.0, 1.0, 1.0), 0.1, (0.1, 0.2)),
            ((0.0, 2.0, 3.0), 1.0, (0.0, 7.0)),
            ((-1.0, 1.0, 0.5), 0.5, (-0.5, 0.75)),
        ],
    )
    def test_examples(self, params, delta, expected):
        mean, var = increment_moments(ModelParams(*params), delta)
        np.testing.assert_allclose([mean, var], expected)


class TestParamValidation:
    def test_model_params(self):
        with pytest.raises(ValueError):
            ModelParams(0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            ModelParams(0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            ModelParams(float("nan"), 1.0, 1.0)

    def test_sampling_grid(self):
        with pytest.raises(ValueError):
            SamplingGrid(0, 0.1)
        with pytest.raises(ValueError):
            SamplingGrid(10, 1.5)
        grid = SamplingGrid(10, 0.5, x0=2.0)
        assert grid.horizon == 5.0
        np.testing.assert_allclose(grid.times(), 0.5 * np.arange(11))

    def test_grid_scheme(self):
        with pytest.raises(ValueError):
            GridScheme(0.0, 0.5)
        with pytest.raises(ValueError):
            GridScheme(1.0, 1.0)


class TestGridSequence:
    def test_square_root_scheme(self):
        grids = grid_sequence(GridScheme(1.0, 0.5), [10000])
        assert grids[0].delta == pytest.approx(0.01)
        assert grids[0].horizon == pytest.approx(100.0)

    def test_beta_04_scheme(self):
        # independent arithmetic: delta = c * exp(-beta * log n)
        grids = grid_sequence(GridScheme(1.0, 0.4), [100000])
        expected = math.exp(-0.4 * math.log(100000))
        assert grids[0].delta == pytest.approx(expected, rel=1e-14)
        assert grids[0].horizon == pytest.approx(100000 * expected, rel=1e-14)

    def test_step_above_one_rejected(self):
        with pytest.raises(ValueError, match="delta <= 1"):
            grid_sequence(GridScheme(2.0, 0.1), [2])

    def test_monotone_along_n(self):
        grids = grid_sequence(GridScheme(1.0, 0.4), [100, 1000, 10000, 100000])
        deltas = [g.delta for g in grids]
        horizons = [g.horizon for g in grids]
        assert all(b < a for a, b in zip(deltas, deltas[1:]))
        assert all(b > a for a, b in zip(horizons, horizons[1:]))
