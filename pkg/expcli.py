#!/usr/bin/env python3
"""
Orchestration des expériences stabilab
Configurations déclaratives, réplications parallèles sur une grille de s,
persistance des résultats et export des données de tracé
"""
import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from config import get_config
from covlab import (CovEstimate, MCParams, asymptotic_sigma_mc, empirical_sigma, gap_curve,
                    gap_curve_from_sigmas, rgg_pair_radius, rgg_sigma_closed_form)
from functionals import StatisticSpec, stab_probe
from gaussdist import MAX_GRID_DIMENSION, dk_to_gaussian, normality_diagnostics, standardize
from logging_config import PerformanceLogger, setup_logging
from presets import PresetError, get_preset, list_presets
from procgen import WindowSpec, derive_seed_sequence
from ratelab import RateFitError, fit_rate, rate_report
from replication_tasks import ReplicationBatch, run_batch
from results_export import BundleError, ResultExporter, config_hash, export_plotdata
from validation_schemas import ExperimentConfigSchema, validate_request

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
PRESET_PREFIX = 'preset:'

# Clés sans effet sur les résultats, exclues de l'empreinte
NON_RESULT_KEYS = ('output_dir', 'parallelism')


@dataclass
class Analyses:
    """Analyses demandées pour une expérience"""
    empirical_sigma: bool = True
    asymptotic_sigma: bool = False
    gap_curve: Optional[str] = None
    dk_vs: Optional[str] = None
    stab_probe: Optional[dict] = None
    rate_fit: Optional[dict] = None
    mc: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """Configuration validée d'une expérience"""
    name: str
    window: WindowSpec
    statistics: List[StatisticSpec]
    s_grid: List[float]
    reps_per_s: int
    master_seed: int
    analyses: Analyses
    probs: Optional[Tuple[float, ...]] = None
    output_dir: Optional[str] = None
    parallelism: int = 1
    document: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.hashed_document(), get_config().CODE_VERSION)

    def hashed_document(self) -> dict:
        document = {k: v for k, v in self.document.items() if k not in NON_RESULT_KEYS}
        document['master_seed'] = self.master_seed
        return document


def load_document(source: Union[str, Path, dict]) -> dict:
    """Document JSON depuis un fichier, un préréglage (preset:<nom>) ou un dictionnaire"""
    if isinstance(source, dict):
        return json.loads(json.dumps(source))
    source = str(source)
    if source.startswith(PRESET_PREFIX):
        return get_preset(source[len(PRESET_PREFIX):])
    with open(source, encoding='utf-8') as f:
        return json.load(f)


def validate_config(source, seed: Optional[int] = None, parallelism: Optional[int] = None,
                    output_dir: Optional[str] = None) -> Tuple[Optional[ExperimentConfig], List[str]]:
    """
    Valider une configuration d'expérience

    Args:
        source: Chemin JSON, preset:<nom> ou dictionnaire
        seed: Graine maître imposée
        parallelism: Parallélisme imposé
        output_dir: Répertoire de sortie imposé

    Returns:
        tuple: (configuration, erreurs); la liste d'erreurs est vide si la configuration est valide
    """
    try:
        document = load_document(source)
    except (OSError, json.JSONDecodeError, PresetError) as e:
        return None, [f'source: {e}']
    if seed is not None:
        document['master_seed'] = seed

    data, errors = validate_request(ExperimentConfigSchema, document)
    if errors:
        for error in errors:
            logger.info(f"Configuration invalide: {error}")
        return None, errors

    cfg = get_config()
    experiment = ExperimentConfig(
        name=data['name'],
        window=data['window'],
        statistics=data['statistics'],
        s_grid=[float(s) for s in data['s_grid']],
        reps_per_s=data['reps_per_s'],
        master_seed=data['master_seed'] if data['master_seed'] is not None else cfg.MASTER_SEED,
        analyses=Analyses(**data['analyses']),
        probs=None if data['probs'] is None else tuple(data['probs']),
        output_dir=output_dir or data['output_dir'],
        parallelism=parallelism or data['parallelism'] or cfg.PARALLELISM,
        document=document,
    )
    return experiment, []


def _sigma_limit(experiment: ExperimentConfig, asymptotic: Optional[CovEstimate]) -> CovEstimate:
    if asymptotic is not None:
        return asymptotic
    rho = rgg_pair_radius(experiment.statistics, experiment.window)
    if rho is not None:
        return rgg_sigma_closed_form(experiment.window.dim, rho)
    return asymptotic_sigma_mc(experiment.statistics, experiment.window, _mc_params(experiment))


def _mc_params(experiment: ExperimentConfig) -> MCParams:
    return MCParams(seed=int(derive_seed_sequence(experiment.master_seed, 'mc').generate_state(1)[0]),
                    probs=experiment.probs, **experiment.analyses.mc)


def _dk_rows(experiment: ExperimentConfig, batches: List[ReplicationBatch],
             sigmas: List[CovEstimate], limit: Optional[CovEstimate]) -> Tuple[List[dict], List[dict]]:
    m = len(experiment.statistics)
    dk_rows, diagnostics = [], []
    for idx, (batch, sigma_s) in enumerate(zip(batches, sigmas)):
        target = sigma_s if experiment.analyses.dk_vs == 'sigma_s' else limit
        sample = standardize(batch, target, whiten=True)
        if m > MAX_GRID_DIMENSION:
            for row in normality_diagnostics(sample):
                diagnostics.append({'s': batch.s, **row})
            continue
        seed = derive_seed_sequence(experiment.master_seed, 'dk', idx)
        result = dk_to_gaussian(sample, np.eye(m), seed=seed)
        dk_rows.append({'target': experiment.analyses.dk_vs, 's': batch.s, 'distance': result.distance,
                        'noise_floor': result.noise_floor, 'grid': result.grid, 'n': result.n_a})
    return dk_rows, diagnostics


def _probe_rows(experiment: ExperimentConfig) -> List[dict]:
    options = experiment.analyses.stab_probe
    spec = experiment.statistics[options['statistic']]
    s = experiment.s_grid[-1]
    factor = s ** (-1.0 / experiment.window.dim) if options['scaled'] else 1.0
    separations = [y * factor for y in options['separations']]
    seed = int(derive_seed_sequence(experiment.master_seed, 'stab_probe').generate_state(1)[0])
    results = stab_probe(spec, experiment.window, s, separations, options['reps'], seed=seed,
                         probs=experiment.probs)
    return [{'statistic': spec.label, 'separation': r.separation, 'estimate': r.estimate,
             'ci_low': r.ci_low, 'ci_high': r.ci_high, 'nonzero': r.nonzero, 'reps': r.reps}
            for r in results]


def _rate_rows(experiment: ExperimentConfig, curve, dk_rows: List[dict], warnings: List[str]) -> List[dict]:
    targets = experiment.analyses.rate_fit or {}
    fits, goals = [], []
    if targets.get('gap') is not None and curve is not None:
        for entry in curve.entries:
            try:
                fits.append(fit_rate(curve.as_curve(entry), curve_id=f'gap[{entry}]'))
                goals.append(targets['gap'])
            except RateFitError as e:
                warnings.append(f'gap[{entry}]: {e}')
    if targets.get('dk') is not None and dk_rows:
        points = [(row['s'], row['distance'], row['noise_floor']) for row in dk_rows]
        try:
            fits.append(fit_rate(points, curve_id='dk', noise_guard=0.0))
            goals.append(targets['dk'])
        except RateFitError as e:
            warnings.append(f'dk: {e}')
    for warning in warnings:
        logger.warning(f"Ajustement de taux impossible: {warning}")
    return rate_report(fits, goals) if fits else []


def run_experiment(experiment: ExperimentConfig, output_dir=None) -> Path:
    """
    Exécuter une expérience et écrire son répertoire de résultats

    Args:
        experiment: Configuration validée
        output_dir: Répertoire de sortie (sinon celui de la configuration, sinon RESULTS_DIR/<nom>)

    Returns:
        Chemin du répertoire de résultats
    """
    cfg = get_config()
    out = Path(output_dir or experiment.output_dir or Path(cfg.RESULTS_DIR) / experiment.name)
    exporter = ResultExporter(out)
    analyses = experiment.analyses
    manifest = {
        'name': experiment.name,
        'config_hash': experiment.hash,
        'code_version': cfg.CODE_VERSION,
        'master_seed': experiment.master_seed,
        's_grid': experiment.s_grid,
        'reps_per_s': experiment.reps_per_s,
        'status': 'running',
        'wall_times': {},
        'warnings': [],
    }
    started = time.perf_counter()
    logger.info(f"Expérience {experiment.name}: {len(experiment.s_grid)} intensités, "
                f"{experiment.reps_per_s} réplications, parallélisme {experiment.parallelism}")

    try:
        batches, sigmas = [], []
        for idx, s in enumerate(experiment.s_grid):
            with PerformanceLogger(f'réplications s={s:g}') as perf:
                batch = run_batch(experiment.window, experiment.statistics, s, experiment.reps_per_s,
                                  experiment.master_seed, experiment.parallelism, experiment.probs,
                                  experiment.name)
            manifest['wall_times'][f'batch_s{idx}'] = perf.duration
            exporter.write_batch(batch, idx)
            batches.append(batch)
            if analyses.empirical_sigma or analyses.dk_vs or analyses.gap_curve == 'mc':
                sigma_s = empirical_sigma(batch)
                sigmas.append(sigma_s)
                exporter.write_covariance(sigma_s, f'sigma_s{idx}.json')

        asymptotic = None
        if analyses.asymptotic_sigma:
            with PerformanceLogger('Σ asymptotique'):
                asymptotic = asymptotic_sigma_mc(experiment.statistics, experiment.window,
                                                 _mc_params(experiment))
            exporter.write_covariance(asymptotic, 'asymptotic_sigma.json')

        limit = None
        if analyses.dk_vs == 'sigma_limit' or analyses.gap_curve == 'mc':
            limit = _sigma_limit(experiment, asymptotic)

        curve = None
        if analyses.gap_curve == 'exact_rgg':
            curve = gap_curve(experiment.statistics, experiment.window, experiment.s_grid, mode='exact_rgg')
        elif analyses.gap_curve == 'mc':
            curve = gap_curve_from_sigmas(sigmas, limit)
        if curve is not None:
            exporter.write_gap_curve(curve)

        dk_rows = []
        if analyses.dk_vs:
            dk_rows, diagnostics = _dk_rows(experiment, batches, sigmas, limit)
            if dk_rows:
                exporter.write_dk_curve(dk_rows)
            if diagnostics:
                exporter.write_json({'rows': diagnostics}, 'normality.json')

        if analyses.stab_probe:
            with PerformanceLogger('sonde de stabilisation'):
                exporter.write_probe(_probe_rows(experiment))

        if analyses.rate_fit:
            rows = _rate_rows(experiment, curve, dk_rows, manifest['warnings'])
            if rows:
                exporter.write_rates(rows)

        manifest['status'] = 'complete'

    except Exception as e:
        manifest['status'] = 'incomplete'
        manifest['error'] = str(e)
        logger.error(f"Expérience {experiment.name} interrompue: {e}", exc_info=True)
        raise

    finally:
        manifest['wall_times']['total'] = time.perf_counter() - started
        exporter.write_manifest(manifest)

    logger.info(f"Résultats écrits dans {out}")
    return out


# ---------------------------------------------------------------------------
# Ligne de commande
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='stabilab',
        description="Laboratoire Monte Carlo pour statistiques stabilisantes de processus de Poisson",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Exemples:
  python expcli.py run preset:rgg_vertex_edge --parallelism 4
      Lancer le préréglage sommets/arêtes avec 4 processus

  python expcli.py validate experience.json
      Valider une configuration sans l'exécuter

  python expcli.py export results/rgg_vertex_edge_2d --curve gap
      Exporter la courbe d'écart au format long
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help="Exécuter une expérience")
    run.add_argument('config', help="Fichier JSON ou preset:<nom>")
    run.add_argument('--output-dir', '-o', default=None, help="Répertoire de résultats")
    run.add_argument('--parallelism', '-j', type=int, default=None, help="Nombre de processus")
    run.add_argument('--seed', type=int, default=None, help="Graine maître imposée")

    validate = sub.add_parser('validate', help="Valider une configuration")
    validate.add_argument('config', help="Fichier JSON ou preset:<nom>")

    export = sub.add_parser('export', help="Exporter une courbe au format long")
    export.add_argument('bundle', help="Répertoire de résultats")
    export.add_argument('--curve', choices=['gap', 'dk', 'stab_probe'], default='gap')
    export.add_argument('--output', default=None, help="Fichier CSV de sortie")

    presets = sub.add_parser('presets', help="Lister les préréglages")
    presets.add_argument('--show', default=None, help="Afficher le document d'un préréglage")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()

    if args.command == 'presets':
        if args.show:
            try:
                print(json.dumps(get_preset(args.show), indent=2, ensure_ascii=False))
            except PresetError as e:
                print(f"Erreur: {e}", file=sys.stderr)
                return EXIT_VALIDATION
        else:
            for entry in list_presets():
                print(f"{entry['name']:<22} {entry['description']}")
        return EXIT_OK

    if args.command == 'export':
        try:
            print(export_plotdata(args.bundle, args.curve, args.output))
        except BundleError as e:
            print(f"Erreur: {e}", file=sys.stderr)
            return EXIT_VALIDATION
        except Exception as e:
            logger.error(f"Export en échec: {e}")
            return EXIT_RUNTIME
        return EXIT_OK

    if args.command == 'validate':
        _, errors = validate_config(args.config)
    else:
        if args.parallelism is not None and args.parallelism < 1:
            print("Erreur: --parallelism doit être ≥ 1", file=sys.stderr)
            return EXIT_VALIDATION
        experiment, errors = validate_config(args.config, seed=args.seed, parallelism=args.parallelism,
                                             output_dir=args.output_dir)
    if errors:
        for error in errors:
            print(f"✗ {error}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command == 'validate':
        print("✓ Configuration valide")
        return EXIT_OK

    try:
        out = run_experiment(experiment)
    except Exception as e:
        print(f"Erreur d'exécution: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
