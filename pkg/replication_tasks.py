#!/usr/bin/env python3
"""
Tâches de réplication pour stabilab
Exécution parallèle et déterministe des réplications (une graine par tâche)
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from functionals import StatisticSpec, eval_vector
from logging_config import log_replication
from procgen import WindowSpec, attach_colors, make_rng, sample_poisson, task_seed

logger = logging.getLogger(__name__)


class ReplicationError(RuntimeError):
    """Échec d'une ou plusieurs tâches de réplication"""


def unique_names(specs: Sequence[StatisticSpec]) -> List[str]:
    """Noms de colonnes distincts pour un vecteur de statistiques"""
    names, seen = [], {}
    for spec in specs:
        label = spec.label
        seen[label] = seen.get(label, 0) + 1
        names.append(label if seen[label] == 1 else f'{label}#{seen[label]}')
    return names


@dataclass
class ReplicationTask:
    """Une réplication: intensité, indice, graine et statistiques à évaluer"""
    s: float
    rep: int
    seed: int
    window: WindowSpec
    specs: Tuple[StatisticSpec, ...]
    probs: Optional[Tuple[float, ...]] = None
    experiment: Optional[str] = None


@dataclass
class ReplicationBatch:
    """Échantillon R×m des statistiques à une intensité s"""
    s: float
    values: np.ndarray
    seeds: List[int]
    wall_time: float = 0.0
    names: List[str] = field(default_factory=list)
    n_points: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] != len(self.seeds):
            raise ReplicationError(
                f"{self.values.shape[0]} lignes pour {len(self.seeds)} graines")

    @property
    def reps(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def to_frame(self) -> pd.DataFrame:
        names = self.names or [f'stat_{i}' for i in range(self.m)]
        frame = pd.DataFrame(self.values, columns=names)
        frame.insert(0, 'seed', np.asarray(self.seeds, dtype=np.uint64))
        frame.insert(0, 'rep', np.arange(self.reps))
        frame.insert(0, 's', self.s)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'ReplicationBatch':
        names = [c for c in frame.columns if c not in ('s', 'rep', 'seed')]
        frame = frame.sort_values('rep')
        return cls(float(frame['s'].iloc[0]), frame[names].to_numpy(dtype=float),
                   [int(v) for v in frame['seed']], 0.0, names)


def run_replication(task: ReplicationTask) -> dict:
    """Échantillonner une configuration et évaluer le vecteur de statistiques"""
    start = time.perf_counter()
    try:
        sampling, coloring = np.random.SeedSequence(task.seed).spawn(2)
        config = sample_poisson(task.window, task.s, sampling)
        if task.probs is not None:
            config = attach_colors(config, task.probs, make_rng(coloring))
        vector = eval_vector(config, task.specs, seed=task.seed)
        duration = time.perf_counter() - start
        log_replication(task.s, task.rep, task.seed, config.n, duration, task.experiment)
        return {'status': 'done', 'rep': task.rep, 'seed': task.seed,
                'values': vector.values.tolist(), 'n_points': config.n, 'duration': duration}

    except Exception as e:
        logger.error(f"Réplication s={task.s:g} rep={task.rep} en échec: {e}")
        return {'status': 'error', 'rep': task.rep, 'seed': task.seed, 'error': str(e)}


def build_tasks(window: WindowSpec, specs: Sequence[StatisticSpec], s: float, reps: int,
                master_seed: int, probs=None, experiment: Optional[str] = None) -> List[ReplicationTask]:
    specs = tuple(specs)
    probs = None if probs is None else tuple(float(p) for p in probs)
    return [ReplicationTask(float(s), rep, task_seed(master_seed, s, rep), window, specs, probs, experiment)
            for rep in range(reps)]


def run_batch(window: WindowSpec, specs: Sequence[StatisticSpec], s: float, reps: int,
              master_seed: int, parallelism: int = 1, probs=None,
              experiment: Optional[str] = None) -> ReplicationBatch:
    """
    Exécuter reps réplications à l'intensité s

    Les résultats sont rangés par indice de réplication et ne dépendent pas du
    nombre de processus: chaque tâche tire sa graine de (graine maître, s, rep).

    Args:
        window: Fenêtre et densité
        specs: Statistiques
        s: Intensité
        reps: Nombre de réplications
        master_seed: Graine maître
        parallelism: Nombre de processus (1: exécution dans le processus courant)
        probs: Probabilités de couleurs (optionnel)
        experiment: Nom de l'expérience pour les journaux

    Returns:
        ReplicationBatch
    """
    if reps < 1:
        raise ReplicationError("reps doit être ≥ 1")
    tasks = build_tasks(window, specs, s, reps, master_seed, probs, experiment)
    start = time.perf_counter()

    if parallelism > 1:
        chunksize = max(1, reps // (4 * parallelism))
        with ProcessPoolExecutor(max_workers=parallelism) as executor:
            results = list(executor.map(run_replication, tasks, chunksize=chunksize))
    else:
        results = [run_replication(task) for task in tasks]

    failed = [r for r in results if r['status'] != 'done']
    if failed:
        raise ReplicationError(
            f"{len(failed)} réplication(s) en échec à s={s:g}; première erreur: {failed[0]['error']}")

    wall_time = time.perf_counter() - start
    logger.info(f"Lot s={s:g}: {reps} réplications en {wall_time:.2f}s (parallélisme {parallelism})")
    return ReplicationBatch(float(s), np.array([r['values'] for r in results], dtype=float).reshape(reps, -1),
                            [r['seed'] for r in results], wall_time, unique_names(specs),
                            [r['n_points'] for r in results])
