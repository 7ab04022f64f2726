#!/usr/bin/env python3
"""
Ajustement des vitesses de convergence pour stabilab
Régression log-log pondérée des courbes d'écart et de distance, comparaison aux exposants cibles
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import get_config

logger = logging.getLogger(__name__)

MIN_POINTS = 4
MIN_GRID_RATIO = 2.0


class RateFitError(ValueError):
    """Courbe inexploitable pour un ajustement en loi de puissance"""


@dataclass
class RateFit:
    """Ajustement value ≈ exp(intercept)·s^exponent"""
    exponent: float
    intercept: float
    stderr: float
    r_squared: float
    s_grid: List[float]
    residuals: List[float] = field(default_factory=list)
    excluded: List[float] = field(default_factory=list)
    curve_id: str = ''

    def to_dict(self) -> dict:
        return {
            'curve_id': self.curve_id,
            'exponent': self.exponent,
            'intercept': self.intercept,
            'stderr': self.stderr,
            'r_squared': self.r_squared,
            'n_points': len(self.s_grid),
        }


def fit_rate(curve: Sequence[Tuple[float, float, float]], curve_id: str = '',
             noise_guard: Optional[float] = None) -> RateFit:
    """
    Moindres carrés pondérés de log(valeur) sur log(s)

    Les poids viennent de la méthode delta (erreur type de log ≈ stderr/valeur).
    Les points dont la valeur est inférieure à noise_guard × stderr sont écartés.

    Args:
        curve: Triplets (s, valeur, erreur type)
        curve_id: Identifiant de la courbe
        noise_guard: Facteur de garde (NOISE_GUARD_FACTOR par défaut)

    Returns:
        RateFit
    """
    guard = get_config().NOISE_GUARD_FACTOR if noise_guard is None else noise_guard
    data = np.asarray(curve, dtype=float).reshape(-1, 3)
    s, value, err = data[:, 0], data[:, 1], np.nan_to_num(data[:, 2], nan=0.0)

    if np.any(np.diff(s) <= 0):
        raise RateFitError("La grille de s doit être strictement croissante")
    if np.any(value <= 0):
        bad = s[value <= 0].tolist()
        raise RateFitError(f"Valeurs non positives aux s={bad}: plancher de bruit atteint, augmenter reps")

    noisy = value < guard * err
    if np.any(noisy):
        logger.info(f"{curve_id or 'courbe'}: {int(noisy.sum())} point(s) sous le plancher de bruit écarté(s)")
    s, value, err = s[~noisy], value[~noisy], err[~noisy]

    if s.size < MIN_POINTS:
        raise RateFitError(f"Au moins {MIN_POINTS} points exploitables sont requis (reçu {s.size})")
    if np.any(s[1:] / s[:-1] < MIN_GRID_RATIO * (1 - 1e-12)):
        raise RateFitError(f"Grille non géométrique: rapport ≥ {MIN_GRID_RATIO:g} exigé entre points voisins")

    x, y = np.log(s), np.log(value)
    log_err = err / value
    if np.all(log_err > 0):
        weights = 1.0 / log_err ** 2
    else:
        weights = np.ones_like(x)
    sqrt_w = np.sqrt(weights)
    design = np.column_stack([np.ones_like(x), x])
    coef, _, _, _ = np.linalg.lstsq(design * sqrt_w[:, None], y * sqrt_w, rcond=None)
    intercept, exponent = float(coef[0]), float(coef[1])

    residuals = y - design @ coef
    dof = x.size - 2
    scale = float(np.sum(weights * residuals ** 2)) / dof
    xm = np.average(x, weights=weights)
    stderr = math.sqrt(scale / float(np.sum(weights * (x - xm) ** 2)))
    total = float(np.sum(weights * (y - np.average(y, weights=weights)) ** 2))
    r_squared = 1.0 - float(np.sum(weights * residuals ** 2)) / total if total > 0 else 1.0

    return RateFit(exponent, intercept, stderr, r_squared, s.tolist(), residuals.tolist(),
                   data[noisy, 0].tolist() if np.any(noisy) else [], curve_id)


def rate_report(fits: Sequence[RateFit], targets: Sequence[float],
                tolerance: Optional[float] = None) -> List[dict]:
    """
    Confronter les exposants ajustés aux exposants cibles

    Returns:
        Une ligne par ajustement: cible, estimation, z-score, succès à la tolérance donnée
    """
    if len(fits) != len(targets):
        raise RateFitError("Un exposant cible est requis par ajustement")
    tolerance = get_config().RATE_TOLERANCE if tolerance is None else tolerance
    rows = []
    for fit, target in zip(fits, targets):
        z = (fit.exponent - target) / fit.stderr if fit.stderr > 0 else (
            0.0 if fit.exponent == target else math.inf)
        passed = abs(fit.exponent - target) <= tolerance
        rows.append({
            'curve_id': fit.curve_id,
            'target': float(target),
            'exponent': fit.exponent,
            'stderr': fit.stderr,
            'z_score': z,
            'pass': passed,
        })
        logger.info(f"Taux {fit.curve_id}: {fit.exponent:.4f} (cible {target:.4f}) → {'OK' if passed else 'ÉCHEC'}")
    return rows
