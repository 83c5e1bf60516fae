import numpy as np
import pytest

from gpmini import (CorrectionDistribution, EstimationError, ValidationError,
                    fit_correction_distribution, load_correction, save_correction,
                    select_penalty)
from gpmini.correction import CERT_THRESHOLD, DEFAULT_PENALTY, CorrectionGrid, logistic_pdf


class TestFit:
    def test_masses_nonnegative_unit_sum(self, corr_c1):
        assert np.all(corr_c1.mass >= 0.0)
        assert corr_c1.mass.sum() == pytest.approx(1.0, abs=1e-12)

    def test_c1_sup_error_within_tolerance(self, corr_c1):
        assert corr_c1.sup_error <= 0.01
        # independent convolution oracle on its own fine grid
        z = np.linspace(-15, 15, 3001)
        approx = corr_c1.convolved_density(z)
        assert np.max(np.abs(approx - logistic_pdf(z))) <= corr_c1.sup_error + 1e-12

    def test_accuracy_degrades_with_larger_variance(self, corr_c1):
        worse = fit_correction_distribution(3.0)
        assert worse.sup_error <= CERT_THRESHOLD
        assert worse.sup_error > corr_c1.sup_error

    def test_invalid_variance(self):
        with pytest.raises(ValidationError):
            fit_correction_distribution(0.0)
        with pytest.raises(ValidationError):
            fit_correction_distribution(3.5)

    def test_uncertifiable_construction_impossible(self):
        grid = np.array([-1.0, 0.0, 1.0])
        with pytest.raises(EstimationError):
            CorrectionDistribution(grid, np.array([0.2, 0.6, 0.2]), 1.0, sup_error=0.05)

    def test_mass_validation(self):
        grid = np.array([-1.0, 0.0, 1.0])
        with pytest.raises(ValidationError):
            CorrectionDistribution(grid, np.array([0.5, 0.6, -0.1]), 1.0, 0.001)
        with pytest.raises(ValidationError):
            CorrectionDistribution(grid[::-1], np.array([0.2, 0.6, 0.2]), 1.0, 0.001)

    def test_penalty_ladder_selection(self):
        # bisection over the ladder lands on the documented default
        assert select_penalty() == DEFAULT_PENALTY


class TestSampling:
    def test_degenerate_mass(self):
        cd = CorrectionDistribution(np.array([-1.0, 0.25, 1.0]),
                                    np.array([0.0, 1.0, 0.0]), 1.0, 0.0)
        rng = np.random.default_rng(0)
        draws = cd.sample_many(1000, rng)
        assert np.all(draws == 0.25)

    def test_seed_determinism(self, corr_c1):
        d1 = corr_c1.sample_many(500, np.random.default_rng(9))
        d2 = corr_c1.sample_many(500, np.random.default_rng(9))
        assert np.array_equal(d1, d2)

    def test_moment_matches_mass(self, corr_c1):
        rng = np.random.default_rng(10)
        draws = corr_c1.sample_many(1_000_000, rng)
        expected = corr_c1.mean()
        sd = np.sqrt(float(corr_c1.mass @ (corr_c1.grid - expected) ** 2))
        assert draws.mean() == pytest.approx(expected, abs=4 * sd / 1000.0)

    def test_empirical_pmf_matches_mass(self, corr_c1):
        rng = np.random.default_rng(11)
        n = 1_000_000
        draws = corr_c1.sample_many(n, rng)
        support = corr_c1.grid[corr_c1.mass > 1e-6]
        probs = corr_c1.mass[corr_c1.mass > 1e-6]
        for x, p in zip(support, probs):
            freq = np.mean(draws == x)
            se = np.sqrt(p * (1 - p) / n)
            assert abs(freq - p) <= 4 * se + 1e-9


class TestSerialization:
    def test_round_trip_bit_identical(self, corr_c1, tmp_path):
        path = tmp_path / "corr.txt"
        save_correction(corr_c1, path)
        back = load_correction(path)
        assert np.array_equal(back.grid, corr_c1.grid)
        assert np.array_equal(back.mass, corr_c1.mass)
        assert back.c == corr_c1.c
        assert back.sup_error == corr_c1.sup_error
        save_correction(back, tmp_path / "corr2.txt")
        assert (tmp_path / "corr.txt").read_bytes() == (tmp_path / "corr2.txt").read_bytes()

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("c=1.0\nnot a header\n")
        with pytest.raises(ValidationError):
            load_correction(path)


class TestGridSpec:
    def test_grids(self):
        g = CorrectionGrid()
        atoms = g.atoms()
        assert atoms[0] == -15.0 and atoms[-1] == 15.0
        assert atoms.size == 601
        assert g.eval_points().size == 3001
        with pytest.raises(ValidationError):
            CorrectionGrid(limit=-1.0)
        with pytest.raises(ValidationError):
            CorrectionGrid(atom_step=0.01, eval_step=0.05)
