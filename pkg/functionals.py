#!/usr/bin/env python3
"""
Statistiques stabilisantes pour stabilab
Mesures aléatoires ⟨μ_s, f⟩ sur des régions, vecteurs de statistiques,
opérateurs de différence et sondes empiriques de stabilisation
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import gamma
from scipy.stats import binomtest

from procgen import (MarkedPoint, PointConfig, WindowSpec, attach_colors,
                     derive_seed_sequence, make_rng, sample_poisson)
from scores import ScoreContext, ScoreSpec
from spatial import unit_ball_volume

logger = logging.getLogger(__name__)

DIFF_TOLERANCE = 1e-9


class StatisticSpecError(ValueError):
    """Région, fonction test ou statistique invalide"""


@dataclass(frozen=True)
class RegionSpec:
    """Sous-boîte A de la fenêtre (None: toute la fenêtre)"""
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None

    def __post_init__(self):
        if (self.lower is None) != (self.upper is None):
            raise StatisticSpecError("Une région doit préciser ses deux bornes")
        if self.lower is not None:
            object.__setattr__(self, 'lower', tuple(float(v) for v in self.lower))
            object.__setattr__(self, 'upper', tuple(float(v) for v in self.upper))

    @property
    def is_whole(self) -> bool:
        return self.lower is None

    def bounds(self, window: WindowSpec):
        if self.is_whole:
            return window.lower_arr, window.upper_arr
        return np.asarray(self.lower), np.asarray(self.upper)

    def check(self, window: WindowSpec):
        if self.is_whole:
            return
        lo, hi = self.bounds(window)
        if lo.size != window.dim or hi.size != window.dim:
            raise StatisticSpecError("La région doit avoir la dimension de la fenêtre")
        if np.any(hi <= lo):
            raise StatisticSpecError("La région doit être de volume strictement positif (λ_d(A) > 0)")
        if np.any(lo < window.lower_arr) or np.any(hi > window.upper_arr):
            raise StatisticSpecError(f"Région {self.lower}–{self.upper} hors de la fenêtre")

    def contains(self, x: np.ndarray, window: WindowSpec) -> np.ndarray:
        """Appartenance à A = [a, b) (fermée sur le bord supérieur de la fenêtre)"""
        lo, hi = self.bounds(window)
        x = np.atleast_2d(x)
        upper_ok = (x < hi) | ((x <= hi) & (hi >= window.upper_arr))
        return np.all((x >= lo) & upper_ok, axis=1)

    def volume(self, window: WindowSpec) -> float:
        lo, hi = self.bounds(window)
        return float(np.prod(hi - lo))

    def intersect(self, other: 'RegionSpec', window: WindowSpec) -> Optional['RegionSpec']:
        lo = np.maximum(self.bounds(window)[0], other.bounds(window)[0])
        hi = np.minimum(self.bounds(window)[1], other.bounds(window)[1])
        if np.any(hi <= lo):
            return None
        return RegionSpec(tuple(lo), tuple(hi))


@dataclass(frozen=True)
class TestFnSpec:
    """Fonction test f: constante, coordonnée, affine ou lipschitzienne fournie"""
    __test__ = False

    kind: str = 'constant'
    c: float = 1.0
    index: int = 0
    base: float = 0.0
    gradient: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False)
    lipschitz: Optional[float] = None

    @classmethod
    def constant(cls, c: float = 1.0) -> 'TestFnSpec':
        return cls('constant', c=float(c))

    @classmethod
    def coordinate(cls, index: int) -> 'TestFnSpec':
        return cls('coordinate', index=int(index))

    @classmethod
    def affine(cls, base: float, gradient: Sequence[float]) -> 'TestFnSpec':
        return cls('affine', base=float(base), gradient=tuple(float(g) for g in gradient))

    @classmethod
    def custom(cls, func: Callable, lipschitz: float) -> 'TestFnSpec':
        return cls('custom', func=func, lipschitz=float(lipschitz))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == 'constant':
            return np.full(x.shape[0], self.c)
        if self.kind == 'coordinate':
            return x[:, self.index].astype(float)
        if self.kind == 'affine':
            return self.base + x @ np.asarray(self.gradient)
        if self.kind == 'custom':
            return np.asarray([self.func(p) for p in x], dtype=float)
        raise StatisticSpecError(f"Fonction test inconnue: {self.kind}")

    def lipschitz_constant(self) -> float:
        if self.kind == 'constant':
            return 0.0
        if self.kind == 'coordinate':
            return 1.0
        if self.kind == 'affine':
            return float(np.linalg.norm(self.gradient))
        return float(self.lipschitz)

    def is_identically_zero(self, region: RegionSpec, window: WindowSpec) -> bool:
        if self.kind == 'constant':
            return self.c == 0
        if self.kind == 'affine':
            return self.base == 0 and not np.any(self.gradient)
        if self.kind == 'coordinate':
            lo, hi = region.bounds(window)
            return lo[self.index] == 0 and hi[self.index] == 0
        # contrôle par échantillonnage seulement
        lo, hi = region.bounds(window)
        probe = lo + np.random.default_rng(0).random((64, window.dim)) * (hi - lo)
        return not np.any(self.evaluate(probe))

    def to_dict(self) -> dict:
        if self.kind == 'custom':
            raise StatisticSpecError("Une fonction test personnalisée n'est pas sérialisable")
        return {'kind': self.kind, 'c': self.c, 'index': self.index,
                'base': self.base, 'gradient': list(self.gradient)}


@dataclass(frozen=True)
class StatisticSpec:
    """Score ξ, région A et fonction test f définissant ⟨μ_s, f⟩"""
    score: ScoreSpec
    region: RegionSpec = field(default_factory=RegionSpec)
    testfn: TestFnSpec = field(default_factory=TestFnSpec)
    name: Optional[str] = None

    @property
    def label(self) -> str:
        return self.name or self.score.name

    def check(self, window: WindowSpec):
        self.region.check(window)
        if self.testfn.is_identically_zero(self.region, window):
            raise StatisticSpecError(
                f"{self.label}: la fonction test ne doit pas être identiquement nulle (f ≢ 0)")

    def to_dict(self) -> dict:
        return {
            'name': self.label,
            'score': self.score.to_dict(),
            'region': None if self.region.is_whole else {'lower': list(self.region.lower),
                                                         'upper': list(self.region.upper)},
            'testfn': self.testfn.to_dict(),
        }


@dataclass
class StatVector:
    """Vecteur (⟨μ_s^{(i)}, f_i⟩)_i évalué sur une configuration"""
    values: np.ndarray
    specs: List[StatisticSpec]
    s: float
    seed: Optional[int] = None

    @property
    def names(self) -> List[str]:
        return [spec.label for spec in self.specs]


def eval_statistic(config: PointConfig, spec: StatisticSpec, ctx: Optional[ScoreContext] = None) -> float:
    """
    Somme sur les points de A de f(x)·ξ_s(x, configuration entière)

    Args:
        config: Configuration de points
        spec: Statistique à évaluer
        ctx: Contexte d'évaluation partagé (optionnel)

    Returns:
        Valeur de la statistique
    """
    ctx = ctx or ScoreContext(config)
    if config.n == 0:
        return 0.0
    inside = np.flatnonzero(spec.region.contains(config.positions, config.window))
    if inside.size == 0:
        return 0.0
    weights = spec.testfn.evaluate(config.positions[inside])
    return float(np.dot(weights, spec.score.evaluate(ctx, inside)))


def eval_vector(config: PointConfig, specs: Sequence[StatisticSpec], seed: Optional[int] = None,
                ctx: Optional[ScoreContext] = None) -> StatVector:
    """Évaluer m statistiques en partageant index et tables de voisins"""
    ctx = ctx or ScoreContext(config)
    values = np.array([eval_statistic(config, spec, ctx) for spec in specs], dtype=float)
    if not np.all(np.isfinite(values)):
        logger.warning(f"Valeurs non finies: {values.tolist()}")
    return StatVector(values, list(specs), config.intensity_s, seed)


def diff1(config: PointConfig, spec: StatisticSpec, z: MarkedPoint) -> float:
    """D_z F = F(P ∪ {z}) − F(P), par réévaluation complète"""
    return eval_statistic(config.with_marked_points([z]), spec) - eval_statistic(config, spec)


def diff2(config: PointConfig, spec: StatisticSpec, z1: MarkedPoint, z2: MarkedPoint) -> float:
    """D²_{z1,z2} F = F(P∪{z1,z2}) − F(P∪{z1}) − F(P∪{z2}) + F(P)"""
    both = eval_statistic(config.with_marked_points([z1, z2]), spec)
    first = eval_statistic(config.with_marked_points([z1]), spec)
    second = eval_statistic(config.with_marked_points([z2]), spec)
    return both - first - second + eval_statistic(config, spec)


@dataclass
class ProbeResult:
    """Fréquence de D² ≠ 0 à une séparation donnée, avec intervalle de Wilson"""
    separation: float
    estimate: float
    ci_low: float
    ci_high: float
    nonzero: int
    reps: int


def stab_probe(spec: StatisticSpec, window: WindowSpec, s: float, separations: Sequence[float],
               reps: int, seed: int = 0, anchor=None, direction=None,
               probs: Optional[Sequence[float]] = None,
               confidence: float = 0.95) -> List[ProbeResult]:
    """
    Sonde de stabilisation: fréquence de D²_{x, x+y} F ≠ 0

    Les mêmes configurations (graines partagées) servent pour toutes les séparations.

    Args:
        spec: Statistique sondée
        window: Fenêtre d'échantillonnage
        s: Paramètre d'intensité
        separations: Normes |y| testées
        reps: Nombre de réplications
        seed: Graine maître
        anchor: Point x (centre de la fenêtre par défaut)
        direction: Direction de y (premier axe par défaut)
        probs: Probabilités de couleurs pour les scores marqués

    Returns:
        Un ProbeResult par séparation
    """
    if reps < 1:
        raise StatisticSpecError("reps doit être ≥ 1")
    anchor = window.center if anchor is None else np.asarray(anchor, dtype=float)
    if direction is None:
        direction = np.eye(window.dim)[0]
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)

    nonzero = np.zeros(len(separations), dtype=int)
    for rep in range(reps):
        stream = derive_seed_sequence(seed, 'stab_probe', rep)
        sampling, marking = stream.spawn(2)
        config = sample_poisson(window, s, sampling)
        rng = make_rng(marking)
        if probs is not None:
            config = attach_colors(config, probs, rng)
            m1, m2 = (rng.choice(len(probs), size=2, p=np.asarray(probs) / np.sum(probs)) + 1).tolist()
        else:
            m1 = m2 = None
        z1 = MarkedPoint(anchor, m1)

        base = eval_statistic(config, spec)
        with_first = eval_statistic(config.with_marked_points([z1]), spec)
        for i, y in enumerate(separations):
            z2 = MarkedPoint(anchor + y * direction, m2)
            both = eval_statistic(config.with_marked_points([z1, z2]), spec)
            with_second = eval_statistic(config.with_marked_points([z2]), spec)
            value = both - with_first - with_second + base
            scale = 1.0 + max(abs(both), abs(base))
            if abs(value) > DIFF_TOLERANCE * scale:
                nonzero[i] += 1

    results = []
    for y, hits in zip(separations, nonzero):
        ci = binomtest(int(hits), reps).proportion_ci(confidence_level=confidence, method='wilson')
        results.append(ProbeResult(float(y), hits / reps, float(ci.low), float(ci.high), int(hits), reps))
        logger.debug(f"stab_probe: séparation {y:g} → {hits}/{reps}")
    return results


@dataclass
class EntropyEstimate:
    """Estimation de ∫ g^ρ et de l'entropie de Rényi d'ordre ρ = 1 − q/d"""
    integral: float
    rho: float
    entropy: float
    total_length: float


def renyi_entropy_estimate(config: PointConfig, q: float = 1.0) -> EntropyEstimate:
    """
    Estimateur de l'entropie de Rényi par la longueur pondérée du graphe 1-NN orienté

    s^{q/d−1}·L^{(1,q)} / (Γ(1+q/d)·κ_d^{−q/d}) estime ∫ g^{1−q/d} pour une densité
    de probabilité g.
    """
    d = config.window.dim
    if not 0 < q < d:
        raise StatisticSpecError(f"q doit être dans ]0, d[ (reçu {q})")
    spec = StatisticSpec(ScoreSpec('knn_directed', k=1, q=q, rescale=False))
    length = eval_statistic(config, spec)
    s = config.intensity_s
    constant = gamma(1 + q / d) * unit_ball_volume(d) ** (-q / d)
    integral = s ** (q / d - 1) * length / constant
    rho = 1 - q / d
    entropy = math.log(integral) / (1 - rho) if integral > 0 else float('nan')
    return EntropyEstimate(integral, rho, entropy, length)
