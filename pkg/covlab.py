#!/usr/bin/env python3
"""
Laboratoire de covariances pour stabilab
Σ(s) empirique, estimateur Monte Carlo de la covariance asymptotique Σ,
formes closes et quadrature exacte pour la paire sommets/arêtes du graphe géométrique
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from config import get_config
from functionals import StatisticSpec, StatisticSpecError
from procgen import (DensitySpec, MarkedPoint, PointConfig, WindowSpec, attach_colors,
                     derive_seed_sequence, make_rng, sample_homogeneous)
from scores import ScoreContext, ScoreSpecError
from spatial import unit_ball_volume

logger = logging.getLogger(__name__)

KINDS = ('empirical_Sigma_s', 'asymptotic_Sigma', 'closed_form', 'exact_quadrature')
SYMMETRY_TOLERANCE = 1e-12
MAX_QUADRATURE_NODES = 2_000_000
RELATIVE_STDERR_WARNING = 0.025


class CovarianceError(ValueError):
    """Estimation de covariance impossible (trop peu de réplications, entrée incohérente)"""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class CovEstimate:
    """Matrice de covariance m×m avec erreurs types par entrée"""
    matrix: np.ndarray
    stderr: np.ndarray
    n_samples: int
    kind: str
    names: List[str] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CovarianceError(f"Type d'estimation inconnu: {self.kind}")
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        self.stderr = np.atleast_2d(np.asarray(self.stderr, dtype=float))
        scale = max(1.0, float(np.max(np.abs(self.matrix)))) if self.matrix.size else 1.0
        if np.max(np.abs(self.matrix - self.matrix.T), initial=0.0) > SYMMETRY_TOLERANCE * scale:
            raise CovarianceError("La matrice de covariance doit être symétrique")
        self.matrix = (self.matrix + self.matrix.T) / 2

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_positive_definite(self, tolerance: float = 0.0) -> bool:
        return self.min_eigenvalue > tolerance

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'names': list(self.names),
            'n_samples': int(self.n_samples),
            'matrix': self.matrix.tolist(),
            'stderr': self.stderr.tolist(),
            'min_eigenvalue': self.min_eigenvalue,
            'metadata': self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'CovEstimate':
        return cls(np.array(data['matrix'], dtype=float), np.array(data['stderr'], dtype=float),
                   int(data['n_samples']), data['kind'], list(data.get('names', [])),
                   dict(data.get('metadata', {})))


def entry_label(i: int, j: int) -> str:
    return f'{i},{j}'


@dataclass
class GapPoint:
    s: float
    values: Dict[str, float]
    stderr: Dict[str, float]


@dataclass
class GapCurve:
    """Écarts |σ_ij − Cov/s| le long d'une grille de s croissante"""
    points: List[GapPoint]
    exact: bool
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        s = [p.s for p in self.points]
        if any(b <= a for a, b in zip(s, s[1:])):
            raise CovarianceError("La grille de s d'une courbe d'écart doit être strictement croissante")

    @property
    def s_values(self) -> np.ndarray:
        return np.array([p.s for p in self.points], dtype=float)

    @property
    def entries(self) -> List[str]:
        return list(self.points[0].values) if self.points else []

    def values(self, entry: str) -> np.ndarray:
        return np.array([p.values[entry] for p in self.points], dtype=float)

    def stderrs(self, entry: str) -> np.ndarray:
        return np.array([p.stderr[entry] for p in self.points], dtype=float)

    def as_curve(self, entry: str) -> List[Tuple[float, float, float]]:
        """Triplets (s, valeur, erreur type) pour l'ajustement de taux"""
        return list(zip(self.s_values.tolist(), self.values(entry).tolist(), self.stderrs(entry).tolist()))


# ---------------------------------------------------------------------------
# Σ(s) empirique
# ---------------------------------------------------------------------------

def empirical_sigma(batch) -> CovEstimate:
    """
    Covariance empirique de s^{-1/2}·(statistiques centrées)

    Args:
        batch: ReplicationBatch (matrice R×m de valeurs et intensité s)

    Returns:
        CovEstimate de type empirical_Sigma_s avec erreurs types jackknife
    """
    values = np.asarray(batch.values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 2:
        raise CovarianceError(f"Au moins 2 réplications sont requises (reçu {values.shape[0]})")
    R, m = values.shape
    s = float(batch.s)

    centered = values - values.mean(axis=0)
    matrix = centered.T @ centered / (R - 1) / s

    stderr = np.full((m, m), np.nan)
    if R >= 3:
        # Jackknife par suppression d'une réplication, à partir des sommes
        total = centered.sum(axis=0)
        cross = centered.T @ centered
        n = R - 1
        means = (total[None, :] - centered) / n
        outer = np.einsum('ri,rj->rij', centered, centered)
        loo = (cross[None] - outer - n * np.einsum('ri,rj->rij', means, means)) / (n - 1) / s
        stderr = np.sqrt((R - 1) / R * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))

    estimate = CovEstimate(matrix, stderr, R, 'empirical_Sigma_s',
                           list(getattr(batch, 'names', [])), {'s': s})
    tolerance = get_config().PSD_TOLERANCE
    if estimate.min_eigenvalue < -tolerance:
        logger.warning(f"Σ(s) empirique non semi-définie positive (λ_min={estimate.min_eigenvalue:.3e})")
    return estimate


# ---------------------------------------------------------------------------
# Paire sommets/arêtes du graphe géométrique aléatoire
# ---------------------------------------------------------------------------

def rgg_sigma_closed_form(d: int, rho: float) -> CovEstimate:
    """Σ limite de (V_s, E_s): [[1, κϱ^d], [κϱ^d, κ²ϱ^{2d} + κϱ^d/2]]"""
    if d < 1 or rho < 0:
        raise CovarianceError(f"Paramètres invalides: d={d}, ϱ={rho}")
    c = unit_ball_volume(d) * rho ** d
    matrix = np.array([[1.0, c], [c, c * c + c / 2]])
    return CovEstimate(matrix, np.zeros((2, 2)), 0, 'closed_form', ['V', 'E'], {'d': d, 'rho': rho})


@dataclass
class ExactCovariance:
    """Cov(V_s, E_s)/s, σ12 et leur écart par quadrature déterministe"""
    cov_over_s: float
    sigma12: float
    gap: float
    error_bound: float
    nodes: int


def _orthant_rule(d: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Règle produit de Gauss-Legendre sur B_1 ∩ orthant positif en coordonnées hypersphériques"""
    x, w = leggauss(n)
    radial = (x + 1) / 2
    radial_w = w / 2 * radial ** (d - 1)
    if d == 1:
        return radial[:, None], radial_w

    phi = (x + 1) * math.pi / 4
    phi_w = w * math.pi / 4
    grids = np.meshgrid(radial, *([phi] * (d - 1)), indexing='ij')
    weights = np.meshgrid(radial_w, *([phi_w] * (d - 1)), indexing='ij')
    rho = grids[0].ravel()
    angles = [g.ravel() for g in grids[1:]]
    weight = np.prod([g.ravel() for g in weights], axis=0)

    u = np.empty((rho.size, d))
    sines = np.ones_like(rho)
    for i, a in enumerate(angles):
        u[:, i] = rho * sines * np.cos(a)
        weight = weight * np.sin(a) ** (d - 2 - i)
        sines = sines * np.sin(a)
    u[:, d - 1] = rho * sines
    return u, weight


def _orthant_gap_integral(d: int, r: float, n: int) -> float:
    u, weight = _orthant_rule(d, n)
    # 1 − Π(1 − r·u_i) sans annulation pour r petit
    integrand = -np.expm1(np.sum(np.log1p(-r * u), axis=1))
    return float(np.dot(weight, integrand))


def rgg_cov_exact(d: int, rho: float, s: float, rtol: Optional[float] = None) -> ExactCovariance:
    """
    Covariance exacte Cov(V_s, E_s)/s sur [0,1]^d par la formule de Mecke

    Cov/s = s·∫_{B(0,r)} Π(1 − |z_i|) dz avec r = ϱ s^{-1/d}; l'écart
    σ12 − Cov/s = ϱ^d·2^d·∫_{B_1 ∩ ℝ_+^d} (1 − Π(1 − r u_i)) du est intégré
    par une règle de Gauss-Legendre dont on double les nœuds jusqu'à convergence.

    Args:
        d: Dimension
        rho: Constante de rayon ϱ
        s: Intensité
        rtol: Tolérance relative (QUADRATURE_RTOL par défaut)

    Returns:
        ExactCovariance avec borne d'erreur de quadrature
    """
    rtol = rtol or get_config().QUADRATURE_RTOL
    if s <= 0 or rho <= 0:
        raise CovarianceError(f"s et ϱ doivent être > 0 (s={s}, ϱ={rho})")
    r = rho * s ** (-1.0 / d)
    if r > 1:
        raise CovarianceError(f"Rayon r={r:g} supérieur au côté de la boîte unité")

    sigma12 = unit_ball_volume(d) * rho ** d
    scale = rho ** d * 2 ** d
    n = 8
    previous = scale * _orthant_gap_integral(d, r, n)
    error = math.inf
    while True:
        n *= 2
        if n ** d > MAX_QUADRATURE_NODES:
            logger.warning(f"Quadrature arrêtée à {n // 2} nœuds/axe (d={d}), erreur {error:.2e}")
            n //= 2
            break
        current = scale * _orthant_gap_integral(d, r, n)
        error = abs(current - previous)
        previous = current
        if error <= rtol * abs(current):
            break

    gap = previous
    return ExactCovariance(sigma12 - gap, sigma12, gap, error, n)


def rgg_edge_mean_torus(d: int, rho: float, s: float) -> float:
    """E E_s = s·κ_d·ϱ^d/2 sur le tore unité (formule de Mecke)"""
    r = rho * s ** (-1.0 / d)
    if r > 0.5:
        raise CovarianceError(f"Rayon r={r:g} trop grand pour le tore unité")
    return s * unit_ball_volume(d) * rho ** d / 2


def rgg_vertex_edge_means(d: int, rho: float, s: float, torus: bool = False) -> Tuple[float, float]:
    """Moyennes (E V_s, E E_s) sur le cube ou le tore unité"""
    if torus:
        return s, rgg_edge_mean_torus(d, rho, s)
    return s, s * rgg_cov_exact(d, rho, s).cov_over_s / 2


def rgg_pair_radius(specs: Sequence[StatisticSpec], window: WindowSpec) -> Optional[float]:
    """ϱ si specs est la paire (V, E) à rayon dilaté sur le cube unité à densité 1, sinon None"""
    if len(specs) != 2:
        return None
    vertex, edge = (spec.score for spec in specs)
    if any(not spec.region.is_whole or spec.testfn.kind != 'constant' or spec.testfn.c != 1
           for spec in specs):
        return None
    if vertex.family != 'unit' or edge.family != 'rgg_subgraph' or edge.pattern != ((0, 1),):
        return None
    if edge.r_rule.kind != 'scaled':
        return None
    unit = (np.allclose(window.lower_arr, 0) and np.allclose(window.upper_arr, 1)
            and window.density.kind == 'constant' and window.density.value == 1)
    return edge.r_rule.value if unit else None


# ---------------------------------------------------------------------------
# Estimateur Monte Carlo de Σ
# ---------------------------------------------------------------------------

@dataclass
class MCParams:
    """Paramètres de l'estimateur de Σ (points x, strates radiales, troncature)"""
    n_x: int = 1024
    n_radial: int = 12
    window_ranges: Optional[float] = None
    y_max: Optional[float] = None
    seed: int = 0
    probs: Optional[Tuple[float, ...]] = None

    def to_dict(self) -> dict:
        return {'n_x': self.n_x, 'n_radial': self.n_radial, 'window_ranges': self.window_ranges,
                'y_max': self.y_max, 'seed': self.seed,
                'probs': None if self.probs is None else list(self.probs)}


def _stratified_points(window: WindowSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Un point uniforme par cellule d'une grille c^d de la fenêtre (c^d ≥ n)"""
    d = window.dim
    c = max(1, int(math.ceil(n ** (1.0 / d) - 1e-9)))
    cells = np.stack(np.meshgrid(*([np.arange(c)] * d), indexing='ij'), axis=-1).reshape(-1, d)
    return window.lower_arr + (cells + rng.random(cells.shape)) / c * window.sides


def _annulus_point(inner: float, outer: float, d: int, rng: np.random.Generator) -> np.ndarray:
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    radius = (inner ** d + rng.random() * (outer ** d - inner ** d)) ** (1.0 / d)
    return radius * direction


class _StationarySampler:
    """Processus stationnaires P_λ sur des boîtes centrées, avec couleurs éventuelles"""

    def __init__(self, d: int, intensity: float, probs, rng: np.random.Generator):
        self.d = d
        self.density = DensitySpec.constant(intensity)
        self.probs = None if probs is None else np.asarray(probs, dtype=float)
        self.rng = rng

    def box(self, center, half_width: float) -> WindowSpec:
        return WindowSpec.centered_cube(self.d, half_width, center=center, density=self.density)

    def sample(self, box: WindowSpec) -> PointConfig:
        config = sample_homogeneous(box, 1.0, self.rng)
        if self.probs is not None:
            config = attach_colors(config, self.probs, self.rng)
        return config

    def mark(self):
        if self.probs is None:
            return None
        return int(self.rng.choice(self.probs.size, p=self.probs / self.probs.sum()) + 1)


def _anchor_scores(specs: Sequence[StatisticSpec], config: PointConfig, idx: int) -> np.ndarray:
    ctx = ScoreContext(config)
    return np.array([spec.score.evaluate(ctx, [idx])[0] for spec in specs], dtype=float)


def _split(config: PointConfig, near_origin: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    marks = None if config.marks is None else config.marks[near_origin]
    return config.positions[near_origin], marks


def _spliced(box: WindowSpec, parts, anchor: MarkedPoint) -> PointConfig:
    positions = np.vstack([p for p, _ in parts])
    marks = None
    mark_kind = 'none'
    if parts[0][1] is not None:
        marks = np.concatenate([m for _, m in parts]).astype(int)
        mark_kind = 'color'
    return PointConfig(positions, box, 1.0, marks, mark_kind).with_marked_points([anchor])


def _two_point_terms(specs, sampler: _StationarySampler, y: np.ndarray, w: float):
    """
    Intégrande du second terme en y: ξ_i(0)·ξ_j(y) sur P ∪ {0, y} moins le produit
    ξ_i(0, P1)·ξ_j(y, P2), P1 et P2 indépendants obtenus en recollant P et deux copies
    indépendantes le long de l'hyperplan médiateur de [0, y]
    """
    d = sampler.d
    origin = np.zeros(d)
    box = sampler.box(y / 2, w + np.linalg.norm(y) / 2)
    base = sampler.sample(box)
    z0 = MarkedPoint(origin, sampler.mark())
    zy = MarkedPoint(y, sampler.mark())

    joint = base.with_marked_points([z0, zy])
    ctx = ScoreContext(joint)
    first = np.array([spec.score.evaluate(ctx, [base.n])[0] for spec in specs])
    second = np.array([spec.score.evaluate(ctx, [base.n + 1])[0] for spec in specs])

    def side(config: PointConfig) -> np.ndarray:
        return config.positions @ y < np.dot(y, y) / 2

    other, third = sampler.sample(box), sampler.sample(box)
    near, near_other, near_third = side(base), side(other), side(third)
    p1 = _spliced(box, [_split(base, near), _split(other, ~near_other)], z0)
    p2 = _spliced(box, [_split(base, ~near), _split(third, near_third)], zy)
    product_first = _anchor_scores(specs, p1, p1.n - 1)
    product_second = _anchor_scores(specs, p2, p2.n - 1)
    return np.outer(first, second) - np.outer(product_first, product_second)


def asymptotic_sigma_mc(specs: Sequence[StatisticSpec], window: WindowSpec,
                        params: Optional[MCParams] = None) -> CovEstimate:
    """
    Estimateur Monte Carlo de la covariance asymptotique σ_ij

    σ_ij = ∫ E[ξ_i ξ_j(0, P_{g(x)} ∪ {0})] f_i f_j g(x) dx
         + ∫∫ (E[ξ_i(0, P ∪ {0,y}) ξ_j(y, P ∪ {0,y})] − E ξ_i(0, P ∪ {0}) E ξ_j(0, P ∪ {0})) f_i f_j g(x)² dy dx,
    intégrales en x sur A_i ∩ A_j par échantillonnage stratifié de W, intégrale en y
    stratifiée radialement jusqu'à y_max. Les scores sont ceux des parents non dilatés.

    Args:
        specs: Statistiques à scores dilatés
        window: Fenêtre d'observation et densité g
        params: Paramètres Monte Carlo

    Returns:
        CovEstimate de type asymptotic_Sigma (budget de troncature dans metadata)
    """
    params = params or MCParams()
    cfg = get_config()
    for spec in specs:
        if not spec.score.is_scaled:
            raise ScoreSpecError(f"{spec.label}: σ_ij n'est défini que pour les scores dilatés")
        spec.check(window)
    if params.n_x < 2 or params.n_radial < 1:
        raise StatisticSpecError("n_x ≥ 2 et n_radial ≥ 1 sont requis")

    m = len(specs)
    d = window.dim
    ranges = params.window_ranges or cfg.STATIONARY_WINDOW_RANGES
    kappa = unit_ball_volume(d)

    xs = _stratified_points(window, params.n_x, make_rng(derive_seed_sequence(params.seed, 'x_strata')))
    samples = np.zeros((xs.shape[0], m, m))
    outer_stratum = np.zeros((xs.shape[0], m, m))
    half_widths = []

    for t, x in enumerate(xs):
        intensity = float(window.density_at(x)[0])
        inside = np.array([spec.region.contains(x, window)[0] for spec in specs])
        weights = np.array([spec.testfn.evaluate(x)[0] for spec in specs]) * inside
        if intensity <= 0 or not np.any(weights):
            continue

        w = ranges * max(spec.score.interaction_range(d, intensity) for spec in specs)
        y_max = params.y_max or w
        half_widths.append(w)
        rng = make_rng(derive_seed_sequence(params.seed, 'asymptotic_sigma', t))
        sampler = _StationarySampler(d, intensity, params.probs, rng)
        pair = np.outer(weights, weights)

        config = sampler.sample(sampler.box(np.zeros(d), w))
        anchored = config.with_marked_points([MarkedPoint(np.zeros(d), sampler.mark())])
        xi = _anchor_scores(specs, anchored, config.n)
        samples[t] += intensity * pair * np.outer(xi, xi)

        edges = np.linspace(0.0, y_max, params.n_radial + 1)
        for k in range(params.n_radial):
            y = _annulus_point(edges[k], edges[k + 1], d, rng)
            volume = kappa * (edges[k + 1] ** d - edges[k] ** d)
            integrand = _two_point_terms(specs, sampler, y, w)
            contribution = volume * intensity ** 2 * pair * (integrand + integrand.T) / 2
            samples[t] += contribution
            if k == params.n_radial - 1:
                outer_stratum[t] = contribution

    volume = window.volume
    matrix = volume * samples.mean(axis=0)
    stderr = volume * samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    budget = np.abs(volume * outer_stratum.mean(axis=0))
    diagonal = np.diag(matrix)
    relative = np.divide(np.diag(stderr), np.abs(diagonal), out=np.zeros_like(diagonal), where=diagonal != 0)
    if np.any(relative > RELATIVE_STDERR_WARNING):
        logger.warning(f"Erreur type relative de Σ jusqu'à {relative.max():.1%} avec n_x={xs.shape[0]}; augmenter n_x")
    metadata = {
        'n_x': int(xs.shape[0]),
        'n_radial': params.n_radial,
        'window_ranges': ranges,
        'half_width_min': min(half_widths, default=0.0),
        'half_width_max': max(half_widths, default=0.0),
        'y_max': params.y_max,
        'seed': params.seed,
        'truncation_budget': budget.tolist(),
    }
    logger.info(f"Σ asymptotique estimée sur {xs.shape[0]} points x, {params.n_radial} strates radiales")
    return CovEstimate(matrix, stderr, int(xs.shape[0]), 'asymptotic_Sigma',
                       [spec.label for spec in specs], metadata)


# ---------------------------------------------------------------------------
# Courbes d'écart
# ---------------------------------------------------------------------------

def gap_curve(specs: Sequence[StatisticSpec], window: WindowSpec, s_grid: Sequence[float],
              mode: str = 'exact_rgg', reps: int = 200, master_seed: int = 0,
              target: Optional[CovEstimate] = None, parallelism: int = 1,
              mc_params: Optional[MCParams] = None) -> GapCurve:
    """
    Écart entre Σ et Cov/s le long d'une grille de s

    Args:
        specs: Statistiques
        window: Fenêtre
        s_grid: Intensités strictement croissantes
        mode: 'exact_rgg' (quadrature, entrée (0,1) de la paire V/E) ou 'mc'
        reps: Réplications par s (mode mc)
        master_seed: Graine maître (mode mc)
        target: Σ de référence (mode mc); forme close ou estimateur MC à défaut
        parallelism: Nombre de processus (mode mc)
        mc_params: Paramètres de l'estimateur de Σ si aucune cible n'est connue

    Returns:
        GapCurve
    """
    s_grid = [float(s) for s in s_grid]
    rho = rgg_pair_radius(specs, window)

    if mode == 'exact_rgg':
        if rho is None or window.is_torus:
            raise StatisticSpecError("Le mode exact exige la paire (V, E) dilatée sur le cube unité")
        points = []
        for s in s_grid:
            exact = rgg_cov_exact(window.dim, rho, s)
            points.append(GapPoint(s, {entry_label(0, 1): exact.gap},
                                   {entry_label(0, 1): exact.error_bound}))
        return GapCurve(points, True, {'mode': mode, 'rho': rho, 'd': window.dim})

    if mode != 'mc':
        raise StatisticSpecError(f"Mode de courbe inconnu: {mode}")

    from replication_tasks import run_batch

    if target is None:
        target = (rgg_sigma_closed_form(window.dim, rho) if rho is not None
                  else asymptotic_sigma_mc(specs, window, mc_params))
    sigmas = [empirical_sigma(run_batch(window, specs, s, reps, master_seed, parallelism=parallelism))
              for s in s_grid]
    return gap_curve_from_sigmas(sigmas, target)


def gap_curve_from_sigmas(sigmas: Sequence[CovEstimate], target: CovEstimate) -> GapCurve:
    """Écarts |σ_ij − Σ(s)_ij| (i ≤ j) à partir de Σ(s) empiriques déjà calculées"""
    points = []
    for sigma_s in sigmas:
        values, errors = {}, {}
        for i in range(target.m):
            for j in range(i, target.m):
                values[entry_label(i, j)] = float(abs(target.matrix[i, j] - sigma_s.matrix[i, j]))
                errors[entry_label(i, j)] = float(math.hypot(np.nan_to_num(sigma_s.stderr[i, j]),
                                                             target.stderr[i, j]))
        points.append(GapPoint(float(sigma_s.metadata['s']), values, errors))
    return GapCurve(points, False, {'mode': 'mc', 'reps': sigmas[0].n_samples if sigmas else 0,
                                    'target_kind': target.kind})
