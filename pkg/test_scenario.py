"""Tests for synthetic scenario generation, ground truth and the histogram oracle."""

import numpy as np
import pytest
from pydantic import ValidationError

from dine.core.exceptions import DomainError, OracleError
from dine.ml.data_preprocessing import Dataset, read_dataset, write_dataset
from dine.schemas import BIJECTIONS, Z_FAMILIES, ScenarioConfig
from dine.services.scenario import (SHIFT_CLIP, apply_bijection, draw_dependent_rho, generate,
                                    ground_truth_cmi, oracle_mi_gaussian_2d, read_metadata,
                                    validate_scenario_config, write_scenario)


def residual(values, z):
    design = np.column_stack([np.ones(len(z)), z])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    return values - design @ coef


class TestGroundTruth:

    def test_independent(self):
        assert ground_truth_cmi(0.0, 3) == 0.0

    def test_values(self):
        assert ground_truth_cmi(0.8, 1) == pytest.approx(0.5108, abs=1e-4)
        assert ground_truth_cmi(0.5, 2) == pytest.approx(0.2877, abs=1e-4)

    def test_even_in_rho(self):
        for rho in (0.1, 0.5, 0.93):
            assert ground_truth_cmi(-rho, 2) == ground_truth_cmi(rho, 2)

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
    def test_domain(self, rho):
        with pytest.raises(DomainError):
            ground_truth_cmi(rho, 1)


class TestGenerate:

    def test_shapes_and_ground_truth(self):
        scenario = generate(ScenarioConfig(n=300, d=2, d_z=3, rho=0.8, seed=0))
        assert scenario.dataset.dims == (2, 2, 3)
        assert scenario.a.shape == (2, 3) and scenario.b.shape == (2, 3)
        assert scenario.ground_truth_cmi == ground_truth_cmi(0.8, 2)

    def test_random_choices_are_resolved(self):
        resolved = generate(ScenarioConfig(n=50, d=1, d_z=1, rho=0.2, seed=11)).config
        assert resolved.z_family in Z_FAMILIES
        assert resolved.f_choice in BIJECTIONS
        assert resolved.g_choice in BIJECTIONS

    def test_deterministic(self):
        cfg = ScenarioConfig(n=200, d=2, d_z=2, rho=0.4, seed=5)
        first, second = generate(cfg).dataset, generate(cfg).dataset
        assert first.x.tobytes() == second.x.tobytes()
        assert first.y.tobytes() == second.y.tobytes()
        assert first.z.tobytes() == second.z.tobytes()

    def test_independence_construction(self):
        scenario = generate(ScenarioConfig(n=5000, d=1, d_z=1, rho=0.0, f_choice="linear",
                                           g_choice="linear", z_family="normal", seed=1))
        data = scenario.dataset
        corr = np.corrcoef(residual(data.x[:, 0], data.z), residual(data.y[:, 0], data.z))[0, 1]
        assert abs(corr) < 0.1

    def test_latent_marginals_and_correlation(self):
        scenario = generate(ScenarioConfig(n=5000, d=3, d_z=1, rho=0.6, seed=2))
        x_prime, y_prime = scenario.x_prime, scenario.y_prime
        assert np.all(np.abs(x_prime.var(axis=0) - 1) < 0.1)
        corr = np.corrcoef(x_prime.T, y_prime.T)[:3, 3:]
        assert np.all(np.abs(np.diag(corr) - 0.6) < 0.05)
        assert np.all(np.abs(corr[~np.eye(3, dtype=bool)]) < 0.05)

    @pytest.mark.parametrize("family", Z_FAMILIES)
    def test_z_families_have_small_variance(self, family):
        data = generate(ScenarioConfig(n=4000, d=1, d_z=2, rho=0.0, z_family=family, seed=3)).dataset
        assert np.all(np.abs(data.z.var(axis=0) - (0.01 if family != "uniform" else 0.02 ** 2 / 12)) < 0.003)

    @pytest.mark.parametrize("name", BIJECTIONS)
    def test_every_bijection_generates(self, name):
        data = generate(ScenarioConfig(n=500, d=2, d_z=1, rho=0.5, f_choice=name, g_choice=name, seed=4)).dataset
        assert np.all(np.isfinite(data.x)) and np.all(np.isfinite(data.y))

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            ScenarioConfig(n=100, rho=1.0)
        with pytest.raises(ValidationError):
            ScenarioConfig(n=1, rho=0.0)


class TestBijections:

    @pytest.mark.parametrize("name", BIJECTIONS)
    def test_strictly_monotone(self, name):
        values, _ = apply_bijection(name, np.linspace(-SHIFT_CLIP, SHIFT_CLIP, 1001))
        steps = np.diff(values)
        assert np.all(steps > 0) or np.all(steps < 0)

    def test_clipping_is_counted(self):
        _, clipped = apply_bijection("log", np.array([-6.0, 0.0, 5.5]))
        assert clipped == 2
        _, clipped = apply_bijection("cube", np.array([-6.0, 0.0, 5.5]))
        assert clipped == 0


class TestDependentRho:

    def test_range(self):
        rng = np.random.default_rng(0)
        draws = np.array([draw_dependent_rho(rng) for _ in range(2000)])
        assert np.all((np.abs(draws) >= 0.1) & (np.abs(draws) <= 0.99))
        assert 0.4 < np.mean(draws > 0) < 0.6


class TestValidation:

    def test_warnings(self):
        report = validate_scenario_config(ScenarioConfig(n=20, d=2, d_z=2, rho=0.97, z_family="normal"))
        assert report["valid"]
        assert len(report["warnings"]) == 2

    def test_clean_config(self):
        assert validate_scenario_config(ScenarioConfig(n=1000, d=1, d_z=1, rho=0.3))["warnings"] == []


class TestWriteScenario:

    def test_csv_and_sidecar(self, tmp_path):
        scenario = generate(ScenarioConfig(n=30, d=2, d_z=1, rho=0.5, seed=6))
        path = write_scenario(scenario, tmp_path / "scenario.csv")
        loaded = read_dataset(path)
        np.testing.assert_array_equal(loaded.x, scenario.dataset.x)
        np.testing.assert_array_equal(loaded.z, scenario.dataset.z)
        meta = read_metadata(tmp_path / "scenario.csv.meta")
        assert float(meta["ground_truth_cmi"]) == scenario.ground_truth_cmi
        assert meta["f_choice"] == scenario.config.f_choice
        assert meta["seed"] == "6"

    def test_dataset_values_read_back_bit_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        x = np.concatenate([[0.003585822053050469, 0.1 + 0.2], rng.normal(size=98)])
        data = Dataset(x, rng.normal(size=100) * 1e-3, rng.uniform(size=(100, 2)))
        loaded = read_dataset(write_dataset(data, tmp_path / "exact.csv"))
        assert loaded.x.tobytes() == data.x.tobytes()
        assert loaded.y.tobytes() == data.y.tobytes()
        assert loaded.z.tobytes() == data.z.tobytes()


class TestOracle:

    def test_independent_normals(self):
        rng = np.random.default_rng(0)
        assert oracle_mi_gaussian_2d(rng.normal(size=5000), rng.normal(size=5000)) < 0.07

    def test_correlated_normals(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=5000)
        y = 0.8 * x + 0.6 * rng.normal(size=5000)
        assert oracle_mi_gaussian_2d(x, y) == pytest.approx(0.5108, abs=0.1)

    def test_identical_columns(self):
        x = np.random.default_rng(2).normal(size=5000)
        assert oracle_mi_gaussian_2d(x, x) > 1.5

    def test_constant_column(self):
        with pytest.raises(OracleError):
            oracle_mi_gaussian_2d(np.ones(200), np.arange(200.0))

    def test_too_few_samples(self):
        with pytest.raises(OracleError):
            oracle_mi_gaussian_2d(np.arange(50.0), np.arange(50.0))
