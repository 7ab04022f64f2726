#!/usr/bin/env python3
"""
Export des résultats pour stabilab
Lots de réplications, covariances, courbes et manifeste d'un répertoire de résultats (CSV/JSON via pandas)
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from covlab import CovEstimate, GapCurve
from replication_tasks import ReplicationBatch

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
MANIFEST_NAME = 'manifest.json'
CURVE_FILES = {
    'gap': 'gap_curve.csv',
    'dk': 'dk_curve.csv',
    'stab_probe': 'stab_probe.csv',
}
PLOT_COLUMNS = ['curve_id', 'entry', 's', 'value', 'stderr']


class BundleError(ValueError):
    """Répertoire de résultats absent, incomplet ou incohérent"""


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Type non sérialisable: {type(value).__name__}")


def config_hash(config: dict, code_version: str) -> str:
    """Empreinte SHA-256 de la configuration canonique et de la version du code"""
    payload = json.dumps({'config': config, 'code_version': code_version},
                         sort_keys=True, default=_to_builtin, ensure_ascii=False)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


class ResultExporter:
    """Écrivain unique d'un répertoire de résultats"""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.files: List[str] = []

    def _path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.output_dir / name

    def write_frame(self, frame: pd.DataFrame, name: str) -> Path:
        path = self._path(name)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        logger.debug(f"Écrit {path}")
        return path

    def write_json(self, payload: dict, name: str) -> Path:
        path = self._path(name)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=_to_builtin, ensure_ascii=False)
            f.write('\n')
        return path

    def write_batch(self, batch: ReplicationBatch, index: int) -> Path:
        """Lot de réplications: colonnes s, rep, seed puis une colonne par statistique"""
        return self.write_frame(batch.to_frame(), f'batch_s{index}.csv')

    def write_covariance(self, estimate: CovEstimate, name: str) -> Path:
        return self.write_json(estimate.to_dict(), name)

    def write_gap_curve(self, curve: GapCurve) -> Path:
        rows = [{'entry': entry, 's': p.s, 'value': p.values[entry], 'stderr': p.stderr[entry]}
                for p in curve.points for entry in p.values]
        frame = pd.DataFrame(rows, columns=['entry', 's', 'value', 'stderr'])
        return self.write_frame(frame, CURVE_FILES['gap'])

    def write_dk_curve(self, rows: List[dict]) -> Path:
        frame = pd.DataFrame(rows, columns=['target', 's', 'distance', 'noise_floor', 'grid', 'n'])
        return self.write_frame(frame, CURVE_FILES['dk'])

    def write_probe(self, rows: List[dict]) -> Path:
        frame = pd.DataFrame(rows, columns=['statistic', 'separation', 'estimate', 'ci_low',
                                            'ci_high', 'nonzero', 'reps'])
        return self.write_frame(frame, CURVE_FILES['stab_probe'])

    def write_rates(self, rows: List[dict]) -> Path:
        frame = pd.DataFrame(rows, columns=['curve_id', 'target', 'exponent', 'stderr', 'z_score', 'pass'])
        return self.write_frame(frame, 'rates.csv')

    def write_manifest(self, manifest: dict) -> Path:
        manifest = dict(manifest)
        manifest['files'] = [f for f in self.files if f != MANIFEST_NAME]
        return self.write_json(manifest, MANIFEST_NAME)


# ---------------------------------------------------------------------------
# Lecture
# ---------------------------------------------------------------------------

def read_manifest(bundle_dir) -> dict:
    path = Path(bundle_dir) / MANIFEST_NAME
    if not path.exists():
        raise BundleError(f"Manifeste introuvable dans {bundle_dir}")
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def check_manifest(bundle_dir, config: dict, code_version: str) -> List[str]:
    """Écarts entre le manifeste relu et la configuration/version courantes"""
    manifest = read_manifest(bundle_dir)
    problems = []
    if manifest.get('code_version') != code_version:
        problems.append(f"Version du code: {manifest.get('code_version')} ≠ {code_version}")
    if manifest.get('config_hash') != config_hash(config, code_version):
        problems.append("Empreinte de configuration différente")
    for name in manifest.get('files', []):
        if not (Path(bundle_dir) / name).exists():
            problems.append(f"Fichier manquant: {name}")
    for problem in problems:
        logger.warning(f"Manifeste {bundle_dir}: {problem}")
    return problems


def read_batch(path) -> ReplicationBatch:
    return ReplicationBatch.from_frame(pd.read_csv(path))


def read_covariance(path) -> CovEstimate:
    with open(path, encoding='utf-8') as f:
        return CovEstimate.from_dict(json.load(f))


def _curve_frame(bundle_dir, curve: str) -> pd.DataFrame:
    if curve not in CURVE_FILES:
        raise BundleError(f"Courbe inconnue: {curve} (choix: {', '.join(CURVE_FILES)})")
    path = Path(bundle_dir) / CURVE_FILES[curve]
    if not path.exists():
        raise BundleError(f"{CURVE_FILES[curve]} absent de {bundle_dir}")
    frame = pd.read_csv(path)
    if curve == 'gap':
        return frame[['entry', 's', 'value', 'stderr']]
    if curve == 'dk':
        return frame.rename(columns={'target': 'entry', 'distance': 'value', 'noise_floor': 'stderr'})[
            ['entry', 's', 'value', 'stderr']]
    # sondes: s ↦ séparation, erreur type ↦ demi-largeur de l'intervalle de Wilson
    return pd.DataFrame({'entry': frame['statistic'], 's': frame['separation'],
                         'value': frame['estimate'],
                         'stderr': (frame['ci_high'] - frame['ci_low']) / 2})


def export_plotdata(bundle_dir, curve: str, output_path=None) -> Path:
    """
    Exporter une courbe d'un répertoire de résultats au format long

    Args:
        bundle_dir: Répertoire de résultats
        curve: 'gap', 'dk' ou 'stab_probe'
        output_path: Fichier de sortie (plot_<curve>.csv dans le répertoire par défaut)

    Returns:
        Chemin du CSV (colonnes curve_id, entry, s, value, stderr)
    """
    frame = _curve_frame(bundle_dir, curve)
    frame.insert(0, 'curve_id', curve)
    path = Path(output_path) if output_path else Path(bundle_dir) / f'plot_{curve}.csv'
    frame[PLOT_COLUMNS].to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info(f"Données de tracé {curve} exportées vers {path}")
    return path


def read_curve(path, entry: Optional[str] = None) -> Dict[str, List[tuple]]:
    """Relire un export long: {entrée: [(s, valeur, erreur type), ...]} trié par s"""
    frame = pd.read_csv(path, dtype={'entry': str})
    missing = set(PLOT_COLUMNS) - set(frame.columns)
    if missing:
        raise BundleError(f"Colonnes manquantes: {sorted(missing)}")
    if entry is not None:
        frame = frame[frame['entry'] == entry]
    curves = {}
    for key, group in frame.groupby('entry', sort=True):
        group = group.sort_values('s')
        curves[key] = list(zip(group['s'].astype(float), group['value'].astype(float),
                               group['stderr'].astype(float)))
    return curves
