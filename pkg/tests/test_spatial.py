#!/usr/bin/env python3
"""
Tests des noyaux géométriques pour stabilab
Index sur grille, sphères circonscrites, intérieurs et volumes
"""
import math

import numpy as np
import pytest

from tests import TestUtils


class TestGridIndex:
    """Tests de l'index spatial sur grille"""

    def test_knn_line_examples(self):
        """Test des exemples élémentaires sur une droite"""
        from procgen import WindowSpec
        from spatial import GridIndex

        window = WindowSpec(2, (0.0, -1.0), (3.0, 1.0))
        index = GridIndex(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]), window)

        assert index.knn([3.0, 0.0], 1, exclude_self=True).tolist() == [1]
        assert index.knn([1.0, 0.0], 2, exclude_self=True).tolist() == [0, 2]

    def test_knn_insufficient_points_carries_deficit(self, unit_square):
        """Test de l'erreur portant le déficit de points"""
        from spatial import GridIndex, InsufficientPointsError

        index = GridIndex(np.array([[0.2, 0.2], [0.4, 0.4]]), unit_square)
        with pytest.raises(InsufficientPointsError) as excinfo:
            index.knn([0.2, 0.2], 3, exclude_self=True)

        assert excinfo.value.deficit == 2

    @pytest.mark.parametrize('boundary', ['hard', 'torus'])
    def test_knn_matches_naive_scan(self, boundary):
        """Test de l'équivalence avec un balayage naïf"""
        from procgen import WindowSpec
        from spatial import GridIndex

        window = WindowSpec.unit_cube(2, boundary)
        rng = np.random.default_rng(17)
        for trial in range(20):
            positions = rng.random((rng.integers(10, 200), 2))
            index = GridIndex(positions, window)
            for i in range(0, positions.shape[0], 7):
                expected = TestUtils.naive_knn(positions, i, 5, window)
                assert index.knn(positions[i], 5, exclude_self=True).tolist() == expected

    def test_knn_table_matches_naive_scan(self):
        """Test de la table des voisins de tous les points"""
        from procgen import WindowSpec
        from spatial import GridIndex

        window = WindowSpec.unit_cube(3)
        positions = np.random.default_rng(5).random((150, 3))
        table, dist = GridIndex(positions, window).knn_table(4)

        for i in range(positions.shape[0]):
            assert table[i].tolist() == TestUtils.naive_knn(positions, i, 4)
        assert np.all(np.diff(dist, axis=1) >= 0)

    def test_knn_tie_break_is_total_order(self, unit_square):
        """Test de l'indépendance vis-à-vis de l'ordre d'entrée"""
        from spatial import GridIndex

        # quatre voisins à égale distance du centre
        positions = np.array([[0.5, 0.5], [0.75, 0.5], [0.25, 0.5], [0.5, 0.75], [0.5, 0.25]])
        permutation = np.array([0, 3, 1, 4, 2])
        first = GridIndex(positions, unit_square).knn([0.5, 0.5], 2, exclude_self=True)
        second = GridIndex(positions[permutation], unit_square).knn([0.5, 0.5], 2, exclude_self=True)

        assert positions[first].tolist() == positions[permutation][second].tolist()
        assert positions[first].tolist() == [[0.25, 0.5], [0.5, 0.25]]

    def test_range_query_closed_ball(self, unit_square):
        """Test de la boule fermée"""
        from spatial import GridIndex

        index = GridIndex(np.array([[0.0, 0.0], [1.0, 0.0]]), unit_square)

        assert index.range_query([0.0, 0.0], 1.0).tolist() == [0, 1]
        assert index.range_query([0.5, 0.5], 0.0).tolist() == []

    def test_range_query_matches_naive_scan(self, unit_square):
        """Test de l'équivalence avec un balayage naïf"""
        from spatial import GridIndex

        rng = np.random.default_rng(23)
        for trial in range(30):
            positions = rng.random((rng.integers(1, 300), 2))
            index = GridIndex(positions, unit_square)
            x, r = rng.random(2), rng.random() * 0.3
            assert index.range_query(x, r).tolist() == TestUtils.naive_range(positions, x, r)

    def test_pairs_within_matches_naive_edges(self, unit_torus):
        """Test des arêtes du graphe géométrique sur le tore"""
        from spatial import GridIndex

        positions = np.random.default_rng(2).random((120, 2))
        a, b, _ = GridIndex(positions, unit_torus, 0.1).pairs_within(0.1)

        assert list(zip(a.tolist(), b.tolist())) == TestUtils.naive_edges(positions, 0.1, unit_torus)

    def test_every_point_in_one_cell(self, unit_square):
        """Test de l'appartenance de chaque point à exactement une cellule"""
        from spatial import GridIndex

        positions = np.random.default_rng(8).random((500, 2))
        index = GridIndex(positions, unit_square)
        members = np.concatenate(list(index.cells.values()))

        assert sorted(members.tolist()) == list(range(500))

    def test_invalid_cell_size(self, unit_square):
        """Test du rejet d'une taille de cellule nulle"""
        from spatial import GridIndex

        with pytest.raises(ValueError):
            GridIndex(np.zeros((1, 2)), unit_square, cell_size=0.0)


class TestSimplexKernels:
    """Tests des sphères circonscrites et des volumes"""

    def test_right_triangle_circumsphere(self):
        """Test du triangle rectangle"""
        from spatial import circumsphere

        sphere = circumsphere([[0, 0], [1, 0], [0, 1]])

        assert np.allclose(sphere.center, [0.5, 0.5])
        assert sphere.radius == pytest.approx(math.sqrt(2) / 2)
        assert not sphere.degenerate

    def test_segment_circumsphere(self):
        """Test d'un segment (k=1)"""
        from spatial import circumsphere

        sphere = circumsphere([[0, 0], [2, 0]])

        assert np.allclose(sphere.center, [1, 0])
        assert sphere.radius == pytest.approx(1.0)

    def test_collinear_points_degenerate(self):
        """Test de points alignés"""
        from spatial import circumsphere

        assert circumsphere([[0, 0], [1, 0], [2, 0]]).degenerate

    def test_circumsphere_residual(self):
        """Test de l'équidistance des générateurs au centre"""
        from spatial import circumsphere

        rng = np.random.default_rng(4)
        for _ in range(100):
            d = int(rng.integers(2, 5))
            k = int(rng.integers(1, d + 1))
            points = rng.random((k + 1, d))
            sphere = circumsphere(points)
            residual = np.abs(np.linalg.norm(points - sphere.center, axis=1) - sphere.radius)
            assert residual.max() / sphere.radius <= 1e-9

    def test_center_in_interior(self):
        """Test de l'intérieur strict du simplexe"""
        from spatial import center_in_interior, circumsphere

        equilateral = [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]
        assert center_in_interior(equilateral, np.mean(equilateral, axis=0))

        right = [[0, 0], [1, 0], [0, 1]]
        assert not center_in_interior(right, [0.5, 0.5])

        obtuse = [[0, 0], [4, 0], [2, 0.5]]
        assert not center_in_interior(obtuse, circumsphere(obtuse).center)

    def test_center_in_interior_degenerate_raises(self):
        """Test de l'erreur sur simplexe dégénéré"""
        from spatial import DegenerateSimplexError, center_in_interior

        with pytest.raises(DegenerateSimplexError):
            center_in_interior([[0, 0], [1, 0], [2, 0]], [1, 0])

    def test_degeneracy_tolerance_from_environment(self, monkeypatch):
        """Test de la tolérance de dégénérescence lue dans GEOMETRY_TOLERANCE"""
        from spatial import circumsphere

        flat = [[0.0, 0.0], [1.0, 0.0], [2.0, 1e-4]]
        assert not circumsphere(flat).degenerate

        monkeypatch.setenv('GEOMETRY_TOLERANCE', '1e-6')
        assert circumsphere(flat).degenerate

    def test_interior_tolerance_from_environment(self, monkeypatch):
        """Test du seuil barycentrique par défaut lu dans la configuration"""
        from spatial import center_in_interior

        right = [[0, 0], [1, 0], [0, 1]]
        near_edge = [0.4985, 0.4985]
        assert center_in_interior(right, near_edge)

        monkeypatch.setenv('GEOMETRY_TOLERANCE', '0.01')
        assert not center_in_interior(right, near_edge)
        assert center_in_interior(right, near_edge, tolerance=1e-12)

    def test_simplex_volumes(self):
        """Test des volumes élémentaires"""
        from spatial import simplex_volume

        assert simplex_volume([[0, 0], [1, 0]]) == pytest.approx(1.0)
        assert simplex_volume([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]) == pytest.approx(math.sqrt(3) / 4)
        assert simplex_volume([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]) == pytest.approx(1 / 6)
        assert simplex_volume([[0, 0], [1, 0], [2, 0]]) == 0.0

    def test_simplex_volume_matches_cayley_menger(self):
        """Test de l'accord Gram / Cayley-Menger"""
        from spatial import simplex_volume

        rng = np.random.default_rng(12)
        for _ in range(50):
            points = rng.random((3, 3))
            assert simplex_volume(points) == pytest.approx(TestUtils.cayley_menger_volume(points), rel=1e-8)

    def test_unit_ball_volume(self):
        """Test de κ_d"""
        from spatial import unit_ball_volume

        assert unit_ball_volume(1) == pytest.approx(2.0)
        assert unit_ball_volume(2) == pytest.approx(math.pi)
        assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
