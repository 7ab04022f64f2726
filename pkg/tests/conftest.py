#!/usr/bin/env python3
"""
Configuration pytest pour stabilab
Fixtures et configuration partagées entre tous les tests
"""
import os
import sys

import pytest

# Ajouter le répertoire parent au path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


# Configuration des fixtures pytest
@pytest.fixture(scope='session', autouse=True)
def setup_test_environment(tmp_path_factory):
    """Configuration automatique de l'environnement de test"""
    os.environ['STABILAB_ENV'] = 'testing'
    os.environ['LOG_TO_FILE'] = 'false'
    os.environ.setdefault('RESULTS_DIR', str(tmp_path_factory.mktemp('results')))

    # Pas de graine ni de parallélisme hérités du shell
    for name in ('MASTER_SEED', 'PARALLELISM'):
        os.environ.pop(name, None)

    from logging_config import setup_test_logging
    setup_test_logging()


@pytest.fixture
def unit_square():
    from procgen import WindowSpec
    return WindowSpec.unit_cube(2)


@pytest.fixture
def unit_torus():
    from procgen import WindowSpec
    return WindowSpec.unit_cube(2, 'torus')


@pytest.fixture
def bundle_dir(tmp_path):
    """Répertoire de résultats vide"""
    path = tmp_path / 'bundle'
    path.mkdir()
    return path


# Configuration des marqueurs de test
def pytest_configure(config):
    """Configuration pytest avancée"""
    config.addinivalue_line(
        "markers", "unit: tests unitaires rapides"
    )
    config.addinivalue_line(
        "markers", "integration: expériences complètes de bout en bout"
    )
    config.addinivalue_line(
        "markers", "slow: tests Monte Carlo lents (-m 'not slow' pour les exclure)"
    )


def pytest_collection_modifyitems(config, items):
    """Modifier la collection de tests"""
    for item in items:
        if 'expcli' in item.nodeid or 'integration' in item.nodeid:
            item.add_marker(pytest.mark.integration)
        elif 'slow' not in item.keywords:
            item.add_marker(pytest.mark.unit)


# Utilitaires pour les tests
class ConfigFactory:
    """Factory pour créer des objets et documents de test"""

    @staticmethod
    def window(overrides=None):
        """Document de fenêtre (carré unité à bord dur)"""
        defaults = {'dim': 2, 'boundary': 'hard'}
        defaults.update(overrides or {})
        return defaults

    @staticmethod
    def rgg_pair(rho=1.0):
        """Statistiques sommets/arêtes du graphe géométrique dilaté"""
        from functionals import StatisticSpec
        from scores import RadiusRule, ScoreSpec
        return [
            StatisticSpec(ScoreSpec('unit'), name='V'),
            StatisticSpec(ScoreSpec('rgg_subgraph', pattern='K2', r_rule=RadiusRule.scaled(rho)), name='E'),
        ]

    @staticmethod
    def experiment(overrides=None):
        """Document d'expérience minimal et rapide"""
        defaults = {
            'name': 'test_experience',
            'window': ConfigFactory.window(),
            'statistics': [
                {'name': 'N', 'score': {'family': 'unit'}},
                {'name': 'L1', 'score': {'family': 'knn_edge', 'k': 1, 'q': 1.0}},
            ],
            's_grid': [50.0, 100.0],
            'reps_per_s': 6,
            'master_seed': 1234,
            'analyses': {'empirical_sigma': True},
        }
        defaults.update(overrides or {})
        return defaults


# Exporter les utilitaires
__all__ = ['ConfigFactory']
