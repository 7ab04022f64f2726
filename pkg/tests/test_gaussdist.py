#!/usr/bin/env python3
"""
Tests de la comparaison gaussienne pour stabilab
"""
import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.stats import norm


class TestGaussianSampling:
    """Tests de l'échantillonnage de N(0, Θ)"""

    def test_identity_covariance(self):
        """Test de la covariance empirique pour Θ = I"""
        from gaussdist import GaussianSpec, sample_gaussian

        sample = sample_gaussian(GaussianSpec(np.eye(2)), 20000, seed=1)

        assert sample.shape == (20000, 2)
        assert np.allclose(np.cov(sample, rowvar=False), np.eye(2), atol=0.05)

    def test_factor_reproduces_covariance(self):
        """Test de L·Lᵀ = Θ avec L triangulaire inférieur"""
        from gaussdist import GaussianSpec

        cov = np.array([[1.0, math.pi], [math.pi, math.pi ** 2 + math.pi / 2]])
        spec = GaussianSpec(cov)

        assert np.allclose(spec.factor @ spec.factor.T, cov, atol=1e-12)
        assert np.allclose(np.triu(spec.factor, 1), 0.0, atol=1e-12)

    def test_rank_one_covariance(self):
        """Test d'une covariance de rang 1: coordonnées proportionnelles"""
        from gaussdist import GaussianSpec, sample_gaussian

        sample = sample_gaussian(GaussianSpec([[1.0, 2.0], [2.0, 4.0]]), 500, seed=2)

        assert np.allclose(sample[:, 1], 2 * sample[:, 0], atol=1e-6)

    def test_indefinite_covariance_rejected(self):
        """Test du rejet d'une matrice non semi-définie positive"""
        from gaussdist import GaussianSpec, SingularCovarianceError

        with pytest.raises(SingularCovarianceError) as excinfo:
            GaussianSpec([[1.0, 2.0], [2.0, 1.0]])

        assert excinfo.value.min_eigenvalue == pytest.approx(-1.0)

    def test_deterministic_for_seed(self):
        """Test du déterminisme à graine fixée"""
        from gaussdist import GaussianSpec, sample_gaussian

        spec = GaussianSpec(np.eye(3))

        assert np.array_equal(sample_gaussian(spec, 10, seed=5), sample_gaussian(spec, 10, seed=5))

    def test_empty_sample_rejected(self):
        """Test du rejet de n < 1"""
        from gaussdist import GaussianSpec, SampleError, sample_gaussian

        with pytest.raises(SampleError):
            sample_gaussian(GaussianSpec(np.eye(1)), 0)


class TestKolmogorovDistance:
    """Tests de la distance de Kolmogorov empirique"""

    def test_identical_samples(self):
        """Test de d_K nulle entre échantillons identiques"""
        from gaussdist import dk_estimate

        sample = np.random.default_rng(0).normal(size=(300, 2))

        assert dk_estimate(sample, sample).distance == 0.0

    def test_shifted_normals(self):
        """Test de d_K(N(0,1), N(1,1)) = Φ(1/2) − Φ(−1/2)"""
        from gaussdist import dk_estimate

        rng = np.random.default_rng(3)
        result = dk_estimate(rng.normal(size=20000), rng.normal(1.0, size=20000), grid=400)

        assert result.distance == pytest.approx(norm.cdf(0.5) - norm.cdf(-0.5), abs=0.02)
        assert result.above_noise

    def test_noise_floor(self):
        """Test du plancher de bruit n^{-1/2} + n'^{-1/2}"""
        from gaussdist import dk_estimate

        rng = np.random.default_rng(4)
        result = dk_estimate(rng.normal(size=100), rng.normal(size=400))

        assert result.noise_floor == pytest.approx(0.1 + 0.05)
        assert (result.n_a, result.n_b) == (100, 400)

    def test_gaussian_sample_close_to_gaussian(self):
        """Test de d_K faible pour un échantillon réellement gaussien"""
        from gaussdist import dk_to_gaussian

        sample = np.random.default_rng(6).normal(size=(2000, 2))
        result = dk_to_gaussian(sample, np.eye(2), seed=7)

        assert result.distance < 0.06
        assert result.n_b == 10 * result.n_a

    @pytest.mark.parametrize('a_shape, b_shape', [((0, 2), (10, 2)), ((10, 2), (10, 3)), ((10, 4), (10, 4))])
    def test_invalid_samples_rejected(self, a_shape, b_shape):
        """Test du rejet des échantillons vides, incompatibles ou de dimension > 3"""
        from gaussdist import SampleError, dk_estimate

        with pytest.raises(SampleError):
            dk_estimate(np.zeros(a_shape), np.zeros(b_shape))


class TestD3LowerBound:
    """Tests de la borne inférieure d_3"""

    def test_equal_matrices(self):
        """Test de la borne nulle pour des matrices égales"""
        from gaussdist import d3_lower_bound

        assert d3_lower_bound(np.eye(2), np.eye(2)) == 0.0

    def test_half_largest_deviation(self):
        """Test de la demi-déviation maximale"""
        from covlab import CovEstimate
        from gaussdist import d3_lower_bound

        target = CovEstimate([[1.0, 0.5], [0.5, 2.0]], np.zeros((2, 2)), 0, 'closed_form')

        assert d3_lower_bound(target, [[1.2, 0.5], [0.5, 1.4]]) == pytest.approx(0.3)

    def test_shape_mismatch_rejected(self):
        """Test du rejet de matrices de formes différentes"""
        from gaussdist import SampleError, d3_lower_bound

        with pytest.raises(SampleError):
            d3_lower_bound(np.eye(2), np.eye(3))


class TestStandardize:
    """Tests de la standardisation des lots"""

    def test_centered_and_scaled(self):
        """Test du centrage et de la réduction par √s"""
        from gaussdist import standardize

        batch = SimpleNamespace(values=np.array([[1.0], [3.0]]), s=4.0)

        assert standardize(batch).ravel().tolist() == [-0.5, 0.5]

    def test_whitened_covariance_is_identity(self):
        """Test de la covariance identité après blanchiment"""
        from gaussdist import GaussianSpec, sample_gaussian, standardize

        cov = np.array([[2.0, 0.8], [0.8, 1.0]])
        batch = SimpleNamespace(values=sample_gaussian(GaussianSpec(cov), 20000, seed=8), s=1.0)
        sample = standardize(batch, cov, whiten=True)

        assert np.allclose(np.cov(sample, rowvar=False), np.eye(2), atol=0.05)

    def test_singular_covariance_cannot_whiten(self):
        """Test du refus de blanchir par une matrice singulière"""
        from gaussdist import SingularCovarianceError, standardize

        batch = SimpleNamespace(values=np.random.default_rng(0).normal(size=(10, 2)), s=1.0)
        with pytest.raises(SingularCovarianceError):
            standardize(batch, [[1.0, 1.0], [1.0, 1.0]], whiten=True)

    def test_whitening_requires_covariance(self):
        """Test du refus de blanchir sans matrice"""
        from gaussdist import SampleError, standardize

        with pytest.raises(SampleError):
            standardize(SimpleNamespace(values=np.ones((3, 1)), s=1.0), whiten=True)


class TestNormalityDiagnostics:
    """Tests des diagnostics de normalité par coordonnée"""

    def test_gaussian_columns(self):
        """Test des diagnostics sur un échantillon gaussien"""
        from gaussdist import normality_diagnostics

        rows = normality_diagnostics(np.random.default_rng(9).normal(size=(5000, 4)))

        assert [row['coordinate'] for row in rows] == [0, 1, 2, 3]
        assert all(abs(row['skewness']) < 0.2 and abs(row['excess_kurtosis']) < 0.3 for row in rows)

    def test_skewed_column_detected(self):
        """Test de la détection d'une loi asymétrique"""
        from gaussdist import normality_diagnostics

        rows = normality_diagnostics(np.random.default_rng(10).exponential(size=(2000, 1)) - 1.0)

        assert rows[0]['ks_pvalue'] < 1e-3
        assert rows[0]['skewness'] > 1.0

    def test_single_observation_rejected(self):
        """Test du rejet d'un échantillon trop petit"""
        from gaussdist import SampleError, normality_diagnostics

        with pytest.raises(SampleError):
            normality_diagnostics(np.zeros((1, 2)))
