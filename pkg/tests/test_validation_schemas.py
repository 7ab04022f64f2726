#!/usr/bin/env python3
"""
Tests des schémas de validation pour stabilab
"""
import pytest

from tests.conftest import ConfigFactory


def _errors(document):
    from validation_schemas import ExperimentConfigSchema, validate_request

    data, errors = validate_request(ExperimentConfigSchema, document)
    assert data is None
    return errors


class TestExperimentConfigSchema:
    """Tests du schéma de configuration d'expérience"""

    def test_minimal_document(self):
        """Test d'un document minimal valide"""
        from functionals import StatisticSpec
        from procgen import WindowSpec
        from validation_schemas import ExperimentConfigSchema, validate_request

        data, errors = validate_request(ExperimentConfigSchema, ConfigFactory.experiment())

        assert errors is None
        assert isinstance(data['window'], WindowSpec)
        assert all(isinstance(spec, StatisticSpec) for spec in data['statistics'])
        assert data['statistics'][1].score.family == 'knn_edge'
        assert data['analyses']['mc']['n_x'] == 1024

    @pytest.mark.parametrize('name', ['poisson_count', 'rgg_vertex_edge', 'rgg_vertex_edge_3d', 'knn_entropy',
                                      'colored_nn', 'knn_stabilization', 'critical_points'])
    def test_presets_are_valid(self, name):
        """Test de la validité des préréglages"""
        from presets import get_preset
        from validation_schemas import ExperimentConfigSchema, validate_data

        assert validate_data(ExperimentConfigSchema, get_preset(name))['valid']

    def test_missing_window(self):
        """Test de l'absence de fenêtre"""
        document = ConfigFactory.experiment()
        del document['window']

        assert 'window: La fenêtre est requise' in _errors(document)

    def test_unknown_family(self):
        """Test d'une famille de score inconnue"""
        document = ConfigFactory.experiment({'statistics': [{'score': {'family': 'voronoi'}}]})

        assert any(error.startswith('statistics.0.score.family') for error in _errors(document))

    def test_unknown_pattern(self):
        """Test d'un motif inconnu"""
        document = ConfigFactory.experiment({'statistics': [
            {'score': {'family': 'rgg_subgraph', 'pattern': 'K9', 'r_rule': {'kind': 'scaled', 'value': 1.0}}},
        ]})

        assert any('Motif inconnu' in error for error in _errors(document))

    def test_rgg_requires_radius_rule(self):
        """Test de l'absence de règle de rayon"""
        document = ConfigFactory.experiment({'statistics': [{'score': {'family': 'rgg_degree', 'j': 0}}]})

        assert any('règle de rayon' in error for error in _errors(document))

    def test_negative_density(self):
        """Test d'une densité négative sur la fenêtre"""
        document = ConfigFactory.experiment({'window': ConfigFactory.window(
            {'density': {'kind': 'affine', 'base': -1.0, 'gradient': [0.5, 0.5]}})})

        assert any(error.startswith('window') and 'négative' in error for error in _errors(document))

    def test_decreasing_s_grid(self):
        """Test d'une grille de s non croissante"""
        errors = _errors(ConfigFactory.experiment({'s_grid': [100.0, 50.0]}))

        assert 's_grid: La grille de s doit être strictement croissante' in errors

    def test_non_positive_s(self):
        """Test d'une intensité nulle"""
        assert any(error.startswith('s_grid') for error in _errors(ConfigFactory.experiment({'s_grid': [0.0]})))

    def test_region_outside_window(self):
        """Test d'une région hors de la fenêtre"""
        document = ConfigFactory.experiment({'statistics': [
            {'score': {'family': 'unit'}, 'region': {'lower': [0.5, 0.5], 'upper': [2.0, 1.0]}},
        ]})

        assert any(error.startswith('statistics.0') for error in _errors(document))

    def test_zero_test_function(self):
        """Test d'une fonction test nulle"""
        document = ConfigFactory.experiment({'statistics': [
            {'score': {'family': 'unit'}, 'testfn': {'kind': 'constant', 'c': 0.0}},
        ]})

        assert any('f ≢ 0' in error for error in _errors(document))


class TestCrossChecks:
    """Tests des contrôles croisés"""

    def test_colored_score_requires_probs(self):
        """Test de colored_nn sans probabilités de couleurs"""
        document = ConfigFactory.experiment({'statistics': [{'score': {'family': 'colored_nn', 'j': 1}}]})

        assert any(error.startswith('statistics.0') and 'probs' in error for error in _errors(document))

    @pytest.mark.parametrize('probs', [[0.5, 0.6], [0.3, 0.3, 0.3], []])
    def test_color_probs_must_be_a_simplex(self, probs):
        """Test du rejet de probabilités de couleurs ne sommant pas à 1"""
        document = ConfigFactory.experiment({'statistics': [{'score': {'family': 'colored_nn', 'j': 1}}],
                                             'probs': probs})

        assert any(error.startswith('probs:') for error in _errors(document))

    def test_color_probs_on_simplex_accepted(self):
        """Test d'un simplexe valide à trois couleurs"""
        from validation_schemas import ExperimentConfigSchema, validate_data

        document = ConfigFactory.experiment({'statistics': [{'score': {'family': 'colored_nn', 'j': 1}}],
                                             'probs': [0.25, 0.25, 0.5]})

        assert validate_data(ExperimentConfigSchema, document)['valid']

    def test_covariance_requires_two_replications(self):
        """Test de reps_per_s = 1 avec Σ(s) demandée"""
        errors = _errors(ConfigFactory.experiment({'reps_per_s': 1}))

        assert any(error.startswith('reps_per_s') for error in errors)

    def test_single_replication_without_covariance(self):
        """Test de reps_per_s = 1 sans covariance"""
        from validation_schemas import ExperimentConfigSchema, validate_data

        document = ConfigFactory.experiment({'reps_per_s': 1, 'analyses': {'empirical_sigma': False}})

        assert validate_data(ExperimentConfigSchema, document)['valid']

    def test_exact_mode_requires_rgg_pair(self):
        """Test du mode exact sans la paire (V, E)"""
        document = ConfigFactory.experiment({'analyses': {'gap_curve': 'exact_rgg'}})

        assert any(error.startswith('analyses.gap_curve') for error in _errors(document))

    def test_exact_mode_rejects_torus(self):
        """Test du mode exact sur le tore"""
        from presets import get_preset

        document = get_preset('rgg_vertex_edge')
        document['window']['boundary'] = 'torus'

        assert any(error.startswith('analyses.gap_curve') for error in _errors(document))

    def test_probe_index_out_of_range(self):
        """Test d'un indice de statistique sondée hors limites"""
        document = ConfigFactory.experiment({'analyses': {'stab_probe': {'statistic': 2, 'separations': [1.0]}}})

        assert any(error.startswith('analyses.stab_probe.statistic') for error in _errors(document))

    def test_unscaled_score_rejected_for_limit(self):
        """Test d'un score non dilaté avec Σ limite demandée"""
        document = ConfigFactory.experiment({
            'statistics': [{'name': 'L', 'score': {'family': 'knn_directed', 'q': 1.0, 'rescale': False}}],
            'analyses': {'asymptotic_sigma': True},
        })

        assert any(error.startswith('analyses') and 'dilatés' in error for error in _errors(document))

    def test_unscaled_score_allowed_for_empirical_sigma(self):
        """Test d'un score non dilaté pour Σ(s) seule"""
        from presets import get_preset
        from validation_schemas import ExperimentConfigSchema, validate_data

        assert validate_data(ExperimentConfigSchema, get_preset('knn_entropy'))['valid']


class TestFlattenErrors:
    """Tests de l'aplatissement des messages"""

    def test_nested_messages(self):
        """Test des chemins pointés"""
        from validation_schemas import flatten_errors

        messages = {'window': {'_schema': ['a']}, 'statistics': {0: {'score': {'k': ['b', 'c']}}}}

        assert flatten_errors(messages) == ['window: a', 'statistics.0.score.k: b', 'statistics.0.score.k: c']
