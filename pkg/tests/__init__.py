#!/usr/bin/env python3
"""
Package de tests pour stabilab
Configuration et oracles naïfs pour les tests
"""
import math
import os
import sys

import numpy as np

# Ajouter le répertoire parent au path pour les imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# Configuration des tests
os.environ.setdefault('STABILAB_ENV', 'testing')
os.environ.setdefault('LOG_TO_FILE', 'false')


class TestUtils:
    """Utilitaires de test: implémentations naïves servant d'oracles"""
    __test__ = False

    @staticmethod
    def pairwise_distances(positions, window=None):
        positions = np.asarray(positions, dtype=float)
        delta = positions[None, :, :] - positions[:, None, :]
        if window is not None and window.is_torus:
            delta = delta - window.sides * np.round(delta / window.sides)
        return np.linalg.norm(delta, axis=-1)

    @staticmethod
    def naive_knn(positions, i, k, window=None):
        """k plus proches voisins du point i (distance, coordonnées, identifiant croissants)"""
        dist = TestUtils.pairwise_distances(positions, window)[i]
        candidates = [j for j in range(len(positions)) if j != i]
        candidates.sort(key=lambda j: (dist[j], *tuple(positions[j]), j))
        return candidates[:k]

    @staticmethod
    def naive_range(positions, x, r):
        positions = np.asarray(positions, dtype=float)
        dist = np.linalg.norm(positions - np.asarray(x, dtype=float), axis=1)
        return sorted(np.flatnonzero(dist <= r).tolist())

    @staticmethod
    def naive_edges(positions, r, window=None):
        dist = TestUtils.pairwise_distances(positions, window)
        n = len(positions)
        return [(i, j) for i in range(n) for j in range(i + 1, n) if dist[i, j] <= r]

    @staticmethod
    def component_sizes(n, edges):
        """Taille de la composante de chaque sommet (union-find)"""
        parent = list(range(n))

        def find(u):
            while parent[u] != u:
                parent[u] = parent[parent[u]]
                u = parent[u]
            return u

        for u, v in edges:
            parent[find(u)] = find(v)
        roots = [find(u) for u in range(n)]
        return [roots.count(root) for root in roots]

    @staticmethod
    def cayley_menger_volume(points):
        """Volume k-dimensionnel d'un simplexe par le déterminant de Cayley-Menger"""
        points = np.asarray(points, dtype=float)
        k = points.shape[0] - 1
        sq = TestUtils.pairwise_distances(points) ** 2
        matrix = np.ones((k + 2, k + 2))
        matrix[0, 0] = 0.0
        matrix[1:, 1:] = sq
        coefficient = (-1) ** (k + 1) / (2 ** k * math.factorial(k) ** 2)
        return math.sqrt(max(coefficient * np.linalg.det(matrix), 0.0))

    @staticmethod
    def ball_monomial_integral(exponents):
        """∫_{B_1 ∩ ℝ_+^d} Π u_i^{a_i} du (intégrale de Dirichlet)"""
        shifted = [(a + 1) / 2 for a in exponents]
        return (math.prod(math.gamma(b) for b in shifted)
                / (2 ** len(exponents) * math.gamma(sum(shifted) + 1)))
