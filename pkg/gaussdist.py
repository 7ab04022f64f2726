#!/usr/bin/env python3
"""
Comparaison gaussienne pour stabilab
Échantillonnage de N_Θ, distance de Kolmogorov empirique, borne inférieure d_3
et diagnostics de normalité
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import stats

from config import get_config
from procgen import SeedLike, make_rng

logger = logging.getLogger(__name__)

MAX_GRID_DIMENSION = 3


class SampleError(ValueError):
    """Échantillon vide ou de forme incompatible"""


class SingularCovarianceError(ValueError):
    """Matrice de covariance non définie positive là où elle doit l'être"""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


def _as_matrix(cov) -> np.ndarray:
    return np.atleast_2d(np.asarray(getattr(cov, 'matrix', cov), dtype=float))


@dataclass
class GaussianSpec:
    """Loi N(0, cov); facteur triangulaire inférieur calculé par décomposition spectrale"""
    cov: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.cov = _as_matrix(self.cov)
        if self.cov.shape[0] != self.cov.shape[1]:
            raise SampleError(f"Matrice de covariance non carrée: {self.cov.shape}")
        tolerance = get_config().PSD_TOLERANCE
        sym = (self.cov + self.cov.T) / 2
        eigvals, eigvecs = np.linalg.eigh(sym)
        if eigvals[0] < -tolerance:
            raise SingularCovarianceError(
                f"Covariance non semi-définie positive (λ_min={eigvals[0]:.3e})", float(eigvals[0]))
        if eigvals[0] < 0:
            logger.info(f"Valeur propre {eigvals[0]:.2e} ramenée à 0")
        root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
        # root·rootᵀ = cov; la factorisation QR de rootᵀ donne un facteur triangulaire
        _, upper = np.linalg.qr(root.T)
        signs = np.where(np.diag(upper) < 0, -1.0, 1.0)
        self.factor = (signs[:, None] * upper).T

    @property
    def m(self) -> int:
        return self.cov.shape[0]


def sample_gaussian(spec: GaussianSpec, n: int, seed: SeedLike = None) -> np.ndarray:
    """n tirages de N(0, cov), sous forme d'une matrice n×m"""
    if n < 1:
        raise SampleError("n doit être ≥ 1")
    rng = make_rng(seed)
    return rng.standard_normal((n, spec.m)) @ spec.factor.T


@dataclass
class DKResult:
    """Distance de Kolmogorov estimée et plancher de bruit à deux échantillons"""
    distance: float
    noise_floor: float
    grid: int
    n_a: int
    n_b: int

    @property
    def above_noise(self) -> bool:
        return self.distance > self.noise_floor


def _grid_cdf(sample: np.ndarray, axes: List[np.ndarray]) -> np.ndarray:
    """CDF empirique P(X ≤ t) sur la grille produit"""
    positions = np.stack([np.searchsorted(axis, sample[:, k], side='left')
                          for k, axis in enumerate(axes)], axis=1)
    shape = tuple(axis.size + 1 for axis in axes)
    counts = np.bincount(np.ravel_multi_index(positions.T, shape), minlength=int(np.prod(shape)))
    cdf = counts.reshape(shape).astype(float)
    for k in range(len(axes)):
        cdf = np.cumsum(cdf, axis=k)
    return cdf[tuple(slice(0, axis.size) for axis in axes)] / sample.shape[0]


def dk_estimate(sample_a: np.ndarray, sample_b: np.ndarray, grid: Optional[int] = None) -> DKResult:
    """
    Distance de Kolmogorov multivariée entre deux échantillons

    Maximum sur une grille produit (couvrant l'étendue commune) des écarts
    entre fonctions de répartition empiriques.

    Args:
        sample_a: Échantillon n×m
        sample_b: Échantillon n'×m
        grid: Résolution par axe (DK_GRID par défaut)

    Returns:
        DKResult
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise SampleError("Échantillons vides")
    if a.shape[1] != b.shape[1]:
        raise SampleError(f"Dimensions incompatibles: {a.shape[1]} et {b.shape[1]}")
    m = a.shape[1]
    if m > MAX_GRID_DIMENSION:
        raise SampleError(f"Estimation sur grille limitée à m ≤ {MAX_GRID_DIMENSION} (m={m})")
    grid = grid or get_config().DK_GRID

    pooled = np.vstack([a, b])
    axes = [np.linspace(pooled[:, k].min(), pooled[:, k].max(), grid) for k in range(m)]
    distance = float(np.max(np.abs(_grid_cdf(a, axes) - _grid_cdf(b, axes))))
    noise = 1 / np.sqrt(a.shape[0]) + 1 / np.sqrt(b.shape[0])
    return DKResult(distance, float(noise), grid, a.shape[0], b.shape[0])


def dk_to_gaussian(sample: np.ndarray, cov, seed: SeedLike = None, grid: Optional[int] = None,
                   factor: Optional[int] = None) -> DKResult:
    """d_K entre un échantillon et N(0, cov), la loi gaussienne étant échantillonnée factor fois plus"""
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    factor = factor or get_config().DK_GAUSSIAN_FACTOR
    gaussian = sample_gaussian(GaussianSpec(_as_matrix(cov)), factor * sample.shape[0], seed)
    return dk_estimate(sample, gaussian, grid)


def d3_lower_bound(sigma_target, sigma_s) -> float:
    """(1/2)·max_ij |σ_ij − Σ(s)_ij|, borne inférieure de d_3 aux corrections près"""
    a, b = _as_matrix(sigma_target), _as_matrix(sigma_s)
    if a.shape != b.shape:
        raise SampleError(f"Matrices de formes différentes: {a.shape} et {b.shape}")
    return 0.5 * float(np.max(np.abs(a - b)))


def standardize(batch, sigma=None, whiten: bool = False) -> np.ndarray:
    """
    Centrer par la moyenne empirique et réduire par s^{-1/2}

    Args:
        batch: ReplicationBatch
        sigma: CovEstimate ou matrice, requis en mode blanchi
        whiten: Appliquer la racine inverse de sigma (cible N(0, I))

    Returns:
        Échantillon n×m
    """
    values = np.asarray(batch.values, dtype=float)
    if values.shape[0] == 0:
        raise SampleError("Lot de réplications vide")
    sample = (values - values.mean(axis=0)) / np.sqrt(batch.s)
    if not whiten:
        return sample
    if sigma is None:
        raise SampleError("Le mode blanchi exige une matrice de covariance")

    matrix = _as_matrix(sigma)
    eigvals, eigvecs = np.linalg.eigh((matrix + matrix.T) / 2)
    if eigvals[0] <= get_config().PSD_TOLERANCE:
        raise SingularCovarianceError(
            f"Covariance singulière, blanchiment impossible (λ_min={eigvals[0]:.3e})", float(eigvals[0]))
    inverse_root = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    return sample @ inverse_root


def normality_diagnostics(sample: np.ndarray) -> List[dict]:
    """Par coordonnée: p-valeur KS contre N(0,1), asymétrie et kurtosis en excès"""
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    if sample.shape[0] < 2:
        raise SampleError("Au moins 2 observations sont requises")
    rows = []
    for k in range(sample.shape[1]):
        column = sample[:, k]
        ks = stats.kstest(column, 'norm')
        rows.append({
            'coordinate': k,
            'ks_statistic': float(ks.statistic),
            'ks_pvalue': float(ks.pvalue),
            'skewness': float(stats.skew(column)),
            'excess_kurtosis': float(stats.kurtosis(column)),
        })
    return rows
