#!/usr/bin/env python3
"""
Expériences prédéfinies pour stabilab
Chaque préréglage est un document de configuration JSON validable par ExperimentConfigSchema
"""
import copy
from typing import Dict, List


class PresetError(ValueError):
    """Préréglage inconnu"""


def _unit_cube(dim: int, boundary: str = 'hard') -> dict:
    return {'dim': dim, 'boundary': boundary}


def _rgg_pair(rho: float = 1.0) -> List[dict]:
    return [
        {'name': 'V', 'score': {'family': 'unit'}},
        {'name': 'E', 'score': {'family': 'rgg_subgraph', 'pattern': 'K2',
                                'r_rule': {'kind': 'scaled', 'value': rho}}},
    ]


def _rgg_vertex_edge(dim: int, target: float) -> dict:
    return {
        'name': f'rgg_vertex_edge_{dim}d',
        'window': _unit_cube(dim),
        'statistics': _rgg_pair(),
        's_grid': [2.0 ** e for e in range(8, 15)],
        'reps_per_s': 500,
        'analyses': {
            'empirical_sigma': True,
            'gap_curve': 'exact_rgg',
            'dk_vs': 'sigma_limit',
            'rate_fit': {'gap': target, 'dk': -0.5},
        },
    }


PRESETS: Dict[str, dict] = {
    'poisson_count': {
        'description': "Comptage de points (ξ ≡ 1) sur le carré unité: moyenne s·Vol(A), Σ(s) = Vol(A)",
        'config': {
            'name': 'poisson_count',
            'window': _unit_cube(2),
            'statistics': [
                {'name': 'N', 'score': {'family': 'unit'}},
                {'name': 'N_gauche', 'score': {'family': 'unit'},
                 'region': {'lower': [0.0, 0.0], 'upper': [0.5, 1.0]}},
            ],
            's_grid': [100.0],
            'reps_per_s': 100,
            'analyses': {'empirical_sigma': True},
        },
    },
    'rgg_vertex_edge': {
        'description': "Sommets et arêtes du graphe géométrique, d=2, ϱ=1: courbe d'écart exacte et taux s^{-1/2}",
        'config': _rgg_vertex_edge(2, -0.5),
    },
    'rgg_vertex_edge_3d': {
        'description': "Sommets et arêtes du graphe géométrique, d=3, ϱ=1: taux s^{-1/3}",
        'config': _rgg_vertex_edge(3, -1.0 / 3.0),
    },
    'knn_entropy': {
        'description': "Longueur du graphe 1-NN orienté sur le tore (estimateur d'entropie de Rényi)",
        'config': {
            'name': 'knn_entropy',
            'window': _unit_cube(2, 'torus'),
            'statistics': [
                {'name': 'L', 'score': {'family': 'knn_directed', 'k': 1, 'q': 1.0, 'rescale': False}},
            ],
            's_grid': [1000.0, 4000.0, 16000.0],
            'reps_per_s': 50,
            'analyses': {'empirical_sigma': True},
        },
    },
    'colored_nn': {
        'description': "Plus proche voisin de même couleur, deux couleurs équiprobables",
        'config': {
            'name': 'colored_nn',
            'window': _unit_cube(2),
            'statistics': [
                {'name': 'coul_1', 'score': {'family': 'colored_nn', 'j': 1}},
                {'name': 'coul_2', 'score': {'family': 'colored_nn', 'j': 2}},
            ],
            's_grid': [500.0, 2000.0],
            'reps_per_s': 200,
            'probs': [0.5, 0.5],
            'analyses': {'empirical_sigma': True, 'dk_vs': 'sigma_s'},
        },
    },
    'knn_stabilization': {
        'description': "Sonde de stabilisation du score d'arête 1-NN aux séparations {1,2,3,4}·s^{-1/2}",
        'config': {
            'name': 'knn_stabilization',
            'window': _unit_cube(2),
            'statistics': [
                {'name': 'L1', 'score': {'family': 'knn_edge', 'k': 1, 'q': 1.0}},
            ],
            's_grid': [10000.0],
            'reps_per_s': 20,
            'analyses': {
                'empirical_sigma': True,
                'stab_probe': {'statistic': 0, 'separations': [1.0, 2.0, 3.0, 4.0], 'scaled': True, 'reps': 400},
            },
        },
    },
    'critical_points': {
        'description': "Points critiques d'indice 1, locaux (r = s^{-1/2}) et non locaux",
        'config': {
            'name': 'critical_points',
            'window': _unit_cube(2),
            'statistics': [
                {'name': 'crit_local', 'score': {'family': 'critical_points', 'k': 1,
                                                 'r_rule': {'kind': 'scaled', 'value': 1.0}}},
                {'name': 'crit_global', 'score': {'family': 'critical_points', 'k': 1,
                                                  'r_rule': {'kind': 'infinite'}}},
            ],
            's_grid': [50.0, 100.0],
            'reps_per_s': 20,
            'analyses': {'empirical_sigma': True},
        },
    },
}


def list_presets() -> List[dict]:
    """Noms et descriptions des préréglages"""
    return [{'name': name, 'description': entry['description']} for name, entry in PRESETS.items()]


def get_preset(name: str) -> dict:
    """Copie indépendante du document de configuration d'un préréglage"""
    if name not in PRESETS:
        raise PresetError(f"Préréglage inconnu: {name} (choix: {', '.join(PRESETS)})")
    return copy.deepcopy(PRESETS[name]['config'])
