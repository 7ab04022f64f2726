#!/usr/bin/env python3
"""
Tests de la génération de processus de Poisson pour stabilab
Fenêtres, densités, échantillonnage, couleurs et couplage
"""
import numpy as np
import pytest


class TestWindowSpec:
    """Tests des fenêtres et densités"""

    def test_unit_cube_volume(self):
        """Test du volume et du centre du cube unité"""
        from procgen import WindowSpec

        window = WindowSpec.unit_cube(3)

        assert window.volume == 1.0
        assert np.allclose(window.center, 0.5)
        assert not window.is_torus

    def test_invalid_bounds_rejected(self):
        """Test du rejet d'une boîte de volume nul"""
        from procgen import ConfigurationError, WindowSpec

        with pytest.raises(ConfigurationError):
            WindowSpec(2, (0.0, 0.0), (1.0, 0.0))

    def test_torus_requires_constant_density(self):
        """Test de la restriction du tore aux densités constantes"""
        from procgen import ConfigurationError, DensitySpec, WindowSpec

        with pytest.raises(ConfigurationError):
            WindowSpec.unit_cube(2, 'torus', DensitySpec.affine(0.0, [1.0, 0.0]))

    def test_negative_density_rejected(self):
        """Test du rejet d'une densité négative sur la fenêtre"""
        from procgen import DensitySpecError, DensitySpec, WindowSpec

        with pytest.raises(DensitySpecError):
            WindowSpec.unit_cube(2, density=DensitySpec.affine(-0.5, [1.0, 0.0]))

    def test_sup_bound_below_maximum_rejected(self):
        """Test du rejet d'une borne supérieure trop petite"""
        from procgen import DensitySpecError, DensitySpec, WindowSpec

        with pytest.raises(DensitySpecError):
            WindowSpec.unit_cube(2, density=DensitySpec.affine(0.0, [1.0, 0.0], sup_bound=0.5))

    def test_torus_distance_minimum_image(self):
        """Test de la convention de l'image minimale"""
        from procgen import WindowSpec

        torus = WindowSpec.unit_cube(2, 'torus')
        a, b = np.array([0.05, 0.5]), np.array([0.95, 0.5])

        assert torus.distance(a, b) == pytest.approx(0.1)
        assert torus.distance(b, a) == pytest.approx(torus.distance(a, b))

    def test_torus_distance_bounded_by_half_diagonal(self):
        """Test de la borne des distances toriques"""
        from procgen import WindowSpec

        torus = WindowSpec.unit_cube(2, 'torus')
        rng = np.random.default_rng(3)
        a, b = rng.random((500, 2)), rng.random((500, 2))

        assert np.all(torus.distance(a, b) <= np.sqrt(2) / 2 + 1e-12)

    def test_affine_density_integral(self):
        """Test de l'intégrale exacte d'une densité affine"""
        from procgen import DensitySpec, WindowSpec

        window = WindowSpec.unit_cube(2, density=DensitySpec.affine(0.0, [1.0, 0.0]))

        assert window.density_integral() == pytest.approx(0.5)
        assert window.density_integral((0.5, 0.0), (1.0, 1.0)) == pytest.approx(0.375)

    def test_grid_density_interpolation(self):
        """Test de l'interpolation multilinéaire sur grille"""
        from procgen import DensitySpec, WindowSpec

        window = WindowSpec.unit_cube(2, density=DensitySpec.grid([[0.0, 0.0], [2.0, 2.0]]))

        assert window.density_at([0.25, 0.7])[0] == pytest.approx(0.5)
        assert window.density_integral() == pytest.approx(1.0)
        assert window.density_bound == pytest.approx(2.0)


class TestSeeds:
    """Tests des flux aléatoires"""

    def test_task_seed_deterministic(self):
        """Test du déterminisme des graines de tâche"""
        from procgen import task_seed

        assert task_seed(7, 100.0, 3) == task_seed(7, 100.0, 3)
        assert task_seed(7, 100.0, 3) != task_seed(7, 100.0, 4)
        assert task_seed(7, 100.0, 3) != task_seed(7, 200.0, 3)
        assert task_seed(7, 100.0, 3) != task_seed(8, 100.0, 3)

    def test_derived_streams_independent_of_call_order(self):
        """Test de l'indépendance des flux vis-à-vis de l'ordre des appels"""
        from procgen import derive_seed_sequence, make_rng

        first = make_rng(derive_seed_sequence(1, 'x', 2)).random(3)
        make_rng(derive_seed_sequence(1, 'x', 1)).random(10)
        again = make_rng(derive_seed_sequence(1, 'x', 2)).random(3)

        assert np.array_equal(first, again)


class TestSampling:
    """Tests de l'échantillonnage homogène et inhomogène"""

    def test_duplicate_positions_resampled(self, unit_square, caplog):
        """Test du rééchantillonnage des positions coïncidentes"""
        import logging

        from procgen import _resolve_duplicates

        positions = np.array([[0.1, 0.1], [0.1, 0.1], [0.5, 0.5], [0.1, 0.1]])
        with caplog.at_level(logging.WARNING, logger='procgen'):
            resolved = _resolve_duplicates(positions.copy(), unit_square, np.random.default_rng(0))

        assert resolved.shape == (4, 2)
        assert np.unique(resolved, axis=0).shape[0] == 4
        assert resolved[[0, 2]].tolist() == [[0.1, 0.1], [0.5, 0.5]]
        assert '2 position(s) dupliquée(s) rééchantillonnée(s)' in caplog.text

    def test_zero_intensity_gives_empty_config(self, unit_square):
        """Test d'une intensité nulle"""
        from procgen import sample_homogeneous

        config = sample_homogeneous(unit_square, 0.0, seed=1)

        assert config.n == 0
        assert config.positions.shape == (0, 2)

    def test_same_seed_same_config(self, unit_square):
        """Test du déterminisme de l'échantillonnage"""
        from procgen import sample_homogeneous

        a = sample_homogeneous(unit_square, 200.0, seed=42)
        b = sample_homogeneous(unit_square, 200.0, seed=42)

        assert np.array_equal(a.positions, b.positions)

    def test_points_inside_window_and_simple(self):
        """Test de l'appartenance des points à la fenêtre"""
        from procgen import WindowSpec, sample_homogeneous

        window = WindowSpec(2, (0.0, 0.0), (2.0, 3.0))
        config = sample_homogeneous(window, 50.0, seed=5)

        assert np.all(window.contains(config.positions))
        assert config.is_simple()

    def test_poisson_count_mean_and_variance(self, unit_square):
        """Test de la loi du nombre de points (moyenne et variance s)"""
        from procgen import sample_homogeneous

        counts = np.array([sample_homogeneous(unit_square, 1000.0, seed=i).n for i in range(2000)])
        stderr = np.sqrt(1000.0 / counts.size)

        assert abs(counts.mean() - 1000.0) < 4 * stderr
        assert counts.var(ddof=1) == pytest.approx(1000.0, rel=0.15)

    def test_box_count_uses_density_and_volume(self):
        """Test de la moyenne s·u·Vol(W) sur une boîte non unité"""
        from procgen import DensitySpec, WindowSpec, sample_homogeneous

        window = WindowSpec(2, (0.0, 0.0), (2.0, 3.0), density=DensitySpec.constant(0.5))
        counts = np.array([sample_homogeneous(window, 100.0, seed=i).n for i in range(400)])

        assert abs(counts.mean() - 300.0) < 4 * np.sqrt(300.0 / 400)

    def test_homogeneous_rejects_non_constant_density(self):
        """Test du refus d'une densité non constante"""
        from procgen import DensitySpec, DensitySpecError, WindowSpec, sample_homogeneous

        window = WindowSpec.unit_cube(2, density=DensitySpec.affine(0.0, [1.0, 0.0]))
        with pytest.raises(DensitySpecError):
            sample_homogeneous(window, 10.0, seed=0)

    def test_affine_thinning_mean_count(self):
        """Test de l'amincissement: moyenne s·∫g"""
        from procgen import DensitySpec, WindowSpec, sample_inhomogeneous

        window = WindowSpec.unit_cube(2, density=DensitySpec.affine(0.0, [1.0, 0.0]))
        counts = np.array([sample_inhomogeneous(window, 1e4, seed=i).n for i in range(100)])

        assert abs(counts.mean() - 5000.0) < 4 * np.sqrt(5000.0 / 100)

    def test_thinning_follows_density(self):
        """Test de l'intensité empirique sur une sous-boîte"""
        from procgen import DensitySpec, WindowSpec, sample_inhomogeneous

        window = WindowSpec.unit_cube(2, density=DensitySpec.affine(0.0, [1.0, 0.0]))
        right = 0
        reps = 100
        for i in range(reps):
            config = sample_inhomogeneous(window, 4000.0, seed=i)
            right += int(np.sum(config.positions[:, 0] >= 0.5))
        expected = 4000.0 * window.density_integral((0.5, 0.0), (1.0, 1.0))

        assert abs(right / reps - expected) < 4 * np.sqrt(expected / reps)

    def test_zero_density_gives_empty(self):
        """Test d'une densité identiquement nulle"""
        from procgen import DensitySpec, WindowSpec, sample_inhomogeneous, sample_poisson

        window = WindowSpec.unit_cube(2, density=DensitySpec.constant(0.0))

        assert sample_inhomogeneous(window, 1000.0, seed=1).n == 0
        assert sample_poisson(window, 1000.0, seed=1).n == 0

    def test_disjoint_box_counts_uncorrelated(self, unit_square):
        """Test des accroissements indépendants"""
        from procgen import sample_homogeneous

        left, right = [], []
        for i in range(1500):
            x = sample_homogeneous(unit_square, 100.0, seed=i).positions[:, 0]
            left.append(np.sum(x < 0.5))
            right.append(np.sum(x >= 0.5))
        corr = np.corrcoef(left, right)[0, 1]

        assert abs(corr) < 4 / np.sqrt(1500)


class TestColors:
    """Tests des couleurs i.i.d."""

    def test_single_color(self, unit_square):
        """Test d'une seule couleur"""
        from procgen import attach_colors, sample_homogeneous

        config = attach_colors(sample_homogeneous(unit_square, 100.0, seed=1), [1.0], seed=2)

        assert config.mark_kind == 'color'
        assert np.all(config.marks == 1)

    def test_color_frequencies(self, unit_square):
        """Test des fréquences empiriques des couleurs"""
        from procgen import PointConfig, attach_colors

        rng = np.random.default_rng(0)
        config = PointConfig(rng.random((100_000, 2)), unit_square)
        colored = attach_colors(config, [0.2, 0.3, 0.5], seed=4)
        freq = np.bincount(colored.marks, minlength=4)[1:] / config.n

        for observed, p in zip(freq, [0.2, 0.3, 0.5]):
            assert abs(observed - p) < 4 * np.sqrt(p * (1 - p) / config.n)

    def test_bad_simplex_rejected(self, unit_square):
        """Test du rejet de probabilités hors du simplexe"""
        from procgen import ColorSimplexError, attach_colors, sample_homogeneous

        config = sample_homogeneous(unit_square, 10.0, seed=1)
        with pytest.raises(ColorSimplexError):
            attach_colors(config, [0.5, 0.6], seed=1)
        with pytest.raises(ColorSimplexError):
            attach_colors(config, [1.5, -0.5], seed=1)


class TestCoupling:
    """Tests du couplage des intensités s·g et s·g(x)"""

    def test_constant_density_views_identical(self, unit_square):
        """Test des vues identiques pour une densité constante"""
        from procgen import sample_coupled

        pair = sample_coupled(unit_square, 300.0, [0.3, 0.3], seed=9)

        assert np.array_equal(pair.sg_view.positions, pair.sgx_view.positions)

    def test_anchor_at_maximum_gives_inclusion(self):
        """Test de l'inclusion lorsque l'ancre est au maximum de la densité"""
        from procgen import DensitySpec, WindowSpec, sample_coupled

        window = WindowSpec.unit_cube(2, density=DensitySpec.affine(0.0, [1.0, 0.0]))
        pair = sample_coupled(window, 500.0, [1.0, 0.5], seed=3)

        assert np.all(pair.sgx_keep()[pair.sg_keep()])

    def test_views_agree_below_common_height(self):
        """Test de l'accord des vues sous s·min(g(z), g(x))"""
        from procgen import DensitySpec, WindowSpec, sample_coupled

        window = WindowSpec.unit_cube(2, density=DensitySpec.affine(0.5, [1.0, 0.0]))
        pair = sample_coupled(window, 400.0, [0.2, 0.5], seed=11)
        common = pair.times <= 400.0 * np.minimum(window.density_at(pair.positions), pair.anchor_density)

        assert np.array_equal(pair.sg_keep()[common], pair.sgx_keep()[common])

    def test_stationary_view_count(self):
        """Test de la loi du nombre de points de la vue stationnaire"""
        from procgen import DensitySpec, WindowSpec, sample_coupled

        window = WindowSpec.unit_cube(2, density=DensitySpec.affine(0.5, [1.0, 0.0]))
        counts = np.array([sample_coupled(window, 200.0, [0.2, 0.5], seed=i).sgx_view.n
                           for i in range(500)])
        expected = 200.0 * 0.7

        assert abs(counts.mean() - expected) < 4 * np.sqrt(expected / 500)

    def test_anchor_outside_window_rejected(self, unit_square):
        """Test du rejet d'une ancre hors de la fenêtre"""
        from procgen import ConfigurationError, sample_coupled

        with pytest.raises(ConfigurationError):
            sample_coupled(unit_square, 10.0, [1.5, 0.5], seed=0)


class TestPointConfig:
    """Tests des configurations de points"""

    def test_with_points_appends(self, unit_square):
        """Test de l'ajout de points en fin de configuration"""
        from procgen import PointConfig

        config = PointConfig(np.array([[0.1, 0.1]]), unit_square)
        bigger = config.with_points([[0.5, 0.5], [0.9, 0.9]])

        assert bigger.n == 3
        assert config.n == 1
        assert bigger.find([0.5, 0.5]) == 1

    def test_colored_config_requires_marks(self, unit_square):
        """Test de l'obligation de marquer les points ajoutés"""
        from procgen import ConfigurationError, PointConfig

        config = PointConfig(np.array([[0.1, 0.1]]), unit_square, marks=np.array([1]), mark_kind='color')
        with pytest.raises(ConfigurationError):
            config.with_points([[0.5, 0.5]])

    def test_translated_moves_window(self, unit_square):
        """Test de la translation d'une configuration"""
        from procgen import PointConfig

        config = PointConfig(np.array([[0.1, 0.2]]), unit_square)
        moved = config.translated([1.0, -1.0])

        assert np.allclose(moved.positions, [[1.1, -0.8]])
        assert moved.window.lower == (1.0, -1.0)
