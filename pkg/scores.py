#!/usr/bin/env python3
"""
Catalogue des fonctions de score pour stabilab
Graphes des k plus proches voisins, graphes géométriques aléatoires,
complexes de Vietoris-Rips et points critiques de la fonction distance
"""
import logging
import math
from dataclasses import dataclass, field, asdict
from itertools import combinations
from typing import Dict, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from networkx.algorithms.isomorphism import GraphMatcher
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from config import get_config, critical_point_cap
from procgen import MarkedPoint, PointConfig
from spatial import (GridIndex, InsufficientPointsError,
                     default_cell_size, unit_ball_volume)

logger = logging.getLogger(__name__)


class ScoreSpecError(ValueError):
    """Paramètres de score invalides"""


class CriticalEnumerationError(ValueError):
    """Énumération globale des points critiques trop coûteuse"""


FAMILIES = ('unit', 'knn_edge', 'knn_directed', 'knn_degree', 'colored_nn',
            'rgg_component', 'rgg_degree', 'rgg_subgraph', 'rips_volume', 'critical_points')
KNN_FAMILIES = ('knn_edge', 'knn_directed', 'knn_degree', 'colored_nn')
RGG_FAMILIES = ('rgg_component', 'rgg_degree', 'rgg_subgraph', 'rips_volume', 'critical_points')

NAMED_PATTERNS = {
    'K1': (),
    'K2': ((0, 1),),
    'P3': ((0, 1), (1, 2)),
    'K3': ((0, 1), (1, 2), (0, 2)),
    'P4': ((0, 1), (1, 2), (2, 3)),
    'S3': ((0, 1), (0, 2), (0, 3)),
    'C4': ((0, 1), (1, 2), (2, 3), (0, 3)),
    'K4': ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
}

# Nombres de baiser connus: le degré entrant d'un graphe kNN est au plus k·τ_d
KISSING_NUMBERS = {1: 2, 2: 6, 3: 12}


@dataclass(frozen=True)
class RadiusRule:
    """Rayon de connexion: fixe, r_s = ϱ·s^{-1/d}, ou infini"""
    kind: str = 'scaled'
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ('fixed', 'scaled', 'infinite'):
            raise ScoreSpecError(f"Règle de rayon inconnue: {self.kind}")
        if self.kind != 'infinite' and not self.value > 0:
            raise ScoreSpecError(f"Le rayon doit être strictement positif (reçu {self.value})")

    @classmethod
    def fixed(cls, r: float) -> 'RadiusRule':
        return cls('infinite', math.inf) if math.isinf(r) else cls('fixed', float(r))

    @classmethod
    def scaled(cls, rho: float) -> 'RadiusRule':
        return cls('scaled', float(rho))

    @classmethod
    def infinite(cls) -> 'RadiusRule':
        return cls('infinite', math.inf)

    def radius(self, s: float, d: int) -> float:
        if self.kind == 'fixed':
            return self.value
        if self.kind == 'scaled':
            return self.value * s ** (-1.0 / d)
        return math.inf


def _canonical_pattern(pattern) -> Tuple[Tuple[int, int], ...]:
    if isinstance(pattern, str):
        if pattern not in NAMED_PATTERNS:
            raise ScoreSpecError(f"Motif inconnu: {pattern}")
        return NAMED_PATTERNS[pattern]
    edges = tuple(sorted(tuple(sorted((int(u), int(v)))) for u, v in pattern))
    if any(u == v for u, v in edges):
        raise ScoreSpecError("Le motif ne peut pas contenir de boucle")
    return edges


def pattern_graph(edges: Tuple[Tuple[int, int], ...]) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(max((max(e) for e in edges), default=0) + 1))
    graph.add_edges_from(edges)
    return graph


@dataclass(frozen=True)
class ScoreSpec:
    """
    Entrée du catalogue de scores (famille + paramètres)

    rescale applique le préfacteur s^{q/d} (longueurs kNN) ou s^{αk/d}
    (volumes de Rips), ce qui donne les versions dilatées des scores.
    """
    family: str
    k: int = 1
    q: float = 1.0
    j: int = 1
    alpha: float = 1.0
    r_rule: Optional[RadiusRule] = None
    pattern: Tuple[Tuple[int, int], ...] = field(default=())
    rescale: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ScoreSpecError(f"Famille de score inconnue: {self.family}")
        if self.k < 1:
            raise ScoreSpecError(f"k doit être ≥ 1 (reçu {self.k})")
        if self.q < 0 or self.alpha < 0:
            raise ScoreSpecError("q et α doivent être positifs ou nuls")
        if self.j < 0:
            raise ScoreSpecError(f"j doit être ≥ 0 (reçu {self.j})")
        if self.family in RGG_FAMILIES and self.r_rule is None:
            raise ScoreSpecError(f"La famille {self.family} exige une règle de rayon")
        edges = _canonical_pattern(self.pattern) if self.pattern else ()
        object.__setattr__(self, 'pattern', edges)
        if self.family == 'rgg_subgraph':
            graph = pattern_graph(edges)
            cap = get_config().MAX_PATTERN_SIZE
            if graph.number_of_nodes() > cap:
                raise ScoreSpecError(f"Motif limité à {cap} sommets")
            if not nx.is_connected(graph):
                raise ScoreSpecError("Le motif doit être connexe")

    # --- métadonnées -----------------------------------------------------

    @property
    def name(self) -> str:
        params = {
            'unit': '',
            'knn_edge': f'k={self.k},q={self.q:g}',
            'knn_directed': f'k={self.k},q={self.q:g}',
            'knn_degree': f'k={self.k},j={self.j}',
            'colored_nn': f'j={self.j}',
            'rgg_component': f'k={self.k}',
            'rgg_degree': f'j={self.j}',
            'rgg_subgraph': f'edges={len(self.pattern)}',
            'rips_volume': f'k={self.k},alpha={self.alpha:g}',
            'critical_points': f'k={self.k}',
        }[self.family]
        if self.r_rule is not None:
            params += f',{self.r_rule.kind}={self.r_rule.value:g}'
        return f'{self.family}({params.strip(",")})'

    @property
    def is_scaled(self) -> bool:
        """Vrai si le score est la version dilatée d'un score parent fixe"""
        if self.family in ('knn_edge', 'knn_directed'):
            return self.rescale or self.q == 0
        if self.family == 'rips_volume':
            return self.r_rule.kind != 'fixed' and (self.rescale or self.alpha == 0)
        if self.family in RGG_FAMILIES:
            return self.r_rule.kind != 'fixed'
        return True

    @property
    def pattern_size(self) -> int:
        return pattern_graph(self.pattern).number_of_nodes() if self.pattern else 1

    def radius(self, s: float, d: int) -> float:
        return self.r_rule.radius(s, d) if self.r_rule is not None else math.inf

    def prefactor(self, s: float, d: int) -> float:
        if not self.rescale:
            return 1.0
        if self.family in ('knn_edge', 'knn_directed'):
            return s ** (self.q / d)
        if self.family == 'rips_volume':
            return s ** (self.alpha * self.k / d)
        return 1.0

    def interaction_range(self, d: int, intensity: float = 1.0) -> float:
        """Portée d'interaction typique du score parent à l'intensité donnée"""
        if self.family == 'unit':
            return 1.0
        if self.family in KNN_FAMILIES:
            return 2.0 * ((self.k + 1) / (unit_ball_volume(d) * intensity)) ** (1.0 / d)
        rho = self.r_rule.value
        if self.r_rule.kind == 'infinite':
            return 3.0 * ((self.k + 1) / (unit_ball_volume(d) * intensity)) ** (1.0 / d)
        if self.family == 'rgg_component':
            return self.k * rho
        if self.family == 'rgg_subgraph':
            return max(self.pattern_size - 1, 1) * rho
        if self.family == 'critical_points':
            return 2.0 * rho
        return rho

    def to_dict(self) -> dict:
        data = asdict(self)
        data['pattern'] = [list(e) for e in self.pattern]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ScoreSpec':
        data = dict(data)
        rule = data.get('r_rule')
        if isinstance(rule, dict):
            data['r_rule'] = RadiusRule(rule.get('kind', 'scaled'), float(rule.get('value', math.inf)))
        if 'pattern' in data and data['pattern'] is not None and not isinstance(data['pattern'], str):
            data['pattern'] = tuple(tuple(e) for e in data['pattern'])
        return cls(**data)

    # --- évaluation -------------------------------------------------------

    def evaluate(self, ctx: 'ScoreContext', ids=None) -> np.ndarray:
        """Scores (configuration entière visible) aux points ids, ou à tous"""
        values = ctx.scores(self)
        return values if ids is None else values[np.asarray(ids, dtype=int)]


class ScoreContext:
    """
    Contexte d'évaluation immuable: configuration, index spatiaux,
    tables kNN et arêtes de graphes partagés entre les scores
    """

    def __init__(self, config: PointConfig):
        self.config = config
        self.window = config.window
        self.positions = config.positions
        self.n = config.n
        self.d = config.window.dim
        self.s = config.intensity_s
        self._index = None
        self._knn: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        self._edges: Dict[float, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._scores: Dict[ScoreSpec, np.ndarray] = {}
        cfg = get_config()
        self.geometry_tolerance = cfg.GEOMETRY_TOLERANCE
        self.circumsphere_rtol = cfg.CIRCUMSPHERE_RTOL

    @property
    def index(self) -> GridIndex:
        if self._index is None:
            self._index = GridIndex(self.positions, self.window)
        return self._index

    def knn_table(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        if k not in self._knn:
            cell = default_cell_size(self.window, self.n, occupancy=2.0 * (k + 1))
            self._knn[k] = GridIndex(self.positions, self.window, cell).knn_table(k)
        return self._knn[k]

    def rgg_edges(self, r: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if r not in self._edges:
            cell = default_cell_size(self.window, self.n)
            if math.isfinite(r):
                cell = max(r, cell)
            self._edges[r] = GridIndex(self.positions, self.window, cell).pairs_within(r)
        return self._edges[r]

    def relative(self, ids: np.ndarray) -> np.ndarray:
        """Déplacements (image minimale) des sommets d'un lot de simplexes vers leur premier sommet"""
        pts = self.positions[ids]
        return self.window.displacement(pts[:, :1, :], pts[:, 1:, :])

    def scores(self, spec: ScoreSpec) -> np.ndarray:
        if spec not in self._scores:
            values = _FAMILY_EVALUATORS[spec.family](self, spec)
            self._scores[spec] = values * spec.prefactor(self.s, self.d)
        return self._scores[spec]


# ---------------------------------------------------------------------------
# Familles kNN
# ---------------------------------------------------------------------------

def _knn_or_none(ctx: ScoreContext, k: int):
    try:
        return ctx.knn_table(k)
    except InsufficientPointsError as e:
        if ctx.n:
            logger.warning(f"Configuration dégénérée ({ctx.n} points, k={k}): scores nuls (déficit {e.deficit})")
        return None


def _mutual(nbr: np.ndarray) -> np.ndarray:
    return np.any(nbr[nbr] == np.arange(nbr.shape[0])[:, None, None], axis=-1)


def _knn_edge(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    table = _knn_or_none(ctx, spec.k)
    if table is None:
        return np.zeros(ctx.n)
    nbr, dist = table
    weights = np.power(dist, spec.q)
    return (weights * np.where(_mutual(nbr), 0.5, 1.0)).sum(axis=1)


def _knn_directed(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    table = _knn_or_none(ctx, spec.k)
    if table is None:
        return np.zeros(ctx.n)
    return np.power(table[1], spec.q).sum(axis=1)


def knn_degrees(ctx: ScoreContext, k: int) -> np.ndarray:
    """Degrés dans le graphe kNN non orienté NG_k"""
    table = _knn_or_none(ctx, k)
    if table is None:
        return np.zeros(ctx.n, dtype=int)
    nbr = table[0]
    in_degree = np.bincount(nbr.ravel(), minlength=ctx.n)
    degrees = k + in_degree - _mutual(nbr).sum(axis=1)
    tau = KISSING_NUMBERS.get(ctx.d)
    if tau is not None and degrees.max(initial=0) > k * (tau + 1):
        logger.warning(f"Degré kNN {degrees.max()} au-delà de la borne {k * (tau + 1)} (ex aequo ?)")
    return degrees


def _knn_degree(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    return (knn_degrees(ctx, spec.k) == spec.j).astype(float)


def knn_edges(ctx: ScoreContext, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Arêtes distinctes (i < j) du graphe kNN non orienté"""
    table = _knn_or_none(ctx, k)
    if table is None:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    nbr = table[0]
    a = np.repeat(np.arange(ctx.n), k)
    b = nbr.ravel()
    edges = np.unique(np.sort(np.column_stack([a, b]), axis=1), axis=0)
    return edges[:, 0], edges[:, 1]


def _colored_nn(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    if ctx.config.mark_kind != 'color' or ctx.config.marks is None:
        raise ScoreSpecError("colored_nn exige des points colorés")
    a, b = knn_edges(ctx, 1)
    marks = ctx.config.marks
    mono = (marks[a] == spec.j) & (marks[b] == spec.j)
    return 0.5 * (np.bincount(a[mono], minlength=ctx.n) + np.bincount(b[mono], minlength=ctx.n))


# ---------------------------------------------------------------------------
# Graphes géométriques aléatoires
# ---------------------------------------------------------------------------

def _unit(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    return np.ones(ctx.n)


def _rgg_component(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    if ctx.n == 0:
        return np.zeros(0)
    a, b, _ = ctx.rgg_edges(spec.radius(ctx.s, ctx.d))
    graph = coo_matrix((np.ones(a.size), (a, b)), shape=(ctx.n, ctx.n))
    _, labels = connected_components(graph, directed=False)
    sizes = np.bincount(labels)
    return (sizes[labels] == spec.k) / spec.k


def rgg_degrees(ctx: ScoreContext, r: float) -> np.ndarray:
    a, b, _ = ctx.rgg_edges(r)
    return np.bincount(a, minlength=ctx.n) + np.bincount(b, minlength=ctx.n)


def _rgg_degree(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    return (rgg_degrees(ctx, spec.radius(ctx.s, ctx.d)) == spec.j).astype(float)


def _rgg_subgraph(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    r = spec.radius(ctx.s, ctx.d)
    size = spec.pattern_size
    if size == 1:
        return np.ones(ctx.n)
    if spec.pattern == NAMED_PATTERNS['K2']:
        return rgg_degrees(ctx, r) / 2.0

    a, b, _ = ctx.rgg_edges(r)
    graph = nx.Graph()
    graph.add_edges_from(zip(a.tolist(), b.tolist()))
    pattern = pattern_graph(spec.pattern)
    automorphisms = sum(1 for _ in GraphMatcher(pattern, pattern).isomorphisms_iter())

    counts = np.zeros(ctx.n)
    for mapping in GraphMatcher(graph, pattern).subgraph_monomorphisms_iter():
        counts[list(mapping)] += 1.0
    return counts / (automorphisms * size)


def cliques(ctx: ScoreContext, r: float, size: int) -> np.ndarray:
    """Cliques de taille size (sommets croissants) du graphe G(X, r)"""
    a, b, _ = ctx.rgg_edges(r)
    if size == 1:
        return np.arange(ctx.n).reshape(-1, 1)
    current = np.column_stack([a, b]) if a.size else np.empty((0, 2), dtype=np.int64)
    if size == 2 or current.shape[0] == 0:
        return current
    higher = [set() for _ in range(ctx.n)]
    for u, v in zip(a.tolist(), b.tolist()):
        higher[u].add(v)
    for _ in range(size - 2):
        width = current.shape[1] + 1
        grown = []
        for clique in current.tolist():
            common = set.intersection(*(higher[v] for v in clique))
            grown.extend(clique + [w] for w in sorted(common))
        current = np.array(grown, dtype=np.int64).reshape(-1, width)
        if current.shape[0] == 0:
            break
    return current


def _batch_gram(edges: np.ndarray, tolerance: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    gram = edges @ np.swapaxes(edges, 1, 2)
    det = np.linalg.det(gram)
    scale = np.prod(np.diagonal(gram, axis1=1, axis2=2), axis=1)
    degenerate = (scale <= 0) | (det <= tolerance * scale)
    return gram, det, degenerate


def simplex_volumes(ctx: ScoreContext, simplices: np.ndarray) -> np.ndarray:
    k = simplices.shape[1] - 1
    if simplices.shape[0] == 0:
        return np.zeros(0)
    _, det, degenerate = _batch_gram(ctx.relative(simplices), ctx.geometry_tolerance)
    return np.where(degenerate, 0.0, np.sqrt(np.maximum(det, 0.0)) / math.factorial(k))


def _check_face_dimension(ctx: ScoreContext, spec: ScoreSpec):
    if not 1 <= spec.k <= ctx.d:
        raise ScoreSpecError(f"{spec.family} exige 1 ≤ k ≤ d (k={spec.k}, d={ctx.d})")


def _rips_volume(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    _check_face_dimension(ctx, spec)
    faces = cliques(ctx, spec.radius(ctx.s, ctx.d), spec.k + 1)
    scores = np.zeros(ctx.n)
    if faces.shape[0]:
        weights = np.power(simplex_volumes(ctx, faces), spec.alpha)
        for column in faces.T:
            scores += np.bincount(column, weights=weights, minlength=ctx.n)
    return scores / (spec.k + 1)


def _critical_candidates(ctx: ScoreContext, spec: ScoreSpec, r: float) -> np.ndarray:
    size = spec.k + 1
    if math.isfinite(r):
        # r_Y ≤ r impose des sommets deux à deux à distance ≤ 2r
        return cliques(ctx, 2.0 * r, size)
    cap = critical_point_cap(get_config(), spec.k)
    if ctx.n > cap:
        raise CriticalEnumerationError(
            f"{ctx.n} points dépassent la limite {cap} pour l'énumération globale d'indice {spec.k}; "
            f"utiliser un rayon fini")
    if ctx.n < size:
        return np.empty((0, size), dtype=np.int64)
    return np.array(list(combinations(range(ctx.n), size)), dtype=np.int64)


def critical_simplices(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    """Sous-ensembles Y générant un point critique d'indice k (h_r(Y, X) = 1)"""
    _check_face_dimension(ctx, spec)
    r = spec.radius(ctx.s, ctx.d)
    candidates = _critical_candidates(ctx, spec, r)
    if candidates.shape[0] == 0:
        return candidates

    edges = ctx.relative(candidates)
    gram, _, degenerate = _batch_gram(edges, ctx.geometry_tolerance)
    candidates, edges, gram = candidates[~degenerate], edges[~degenerate], gram[~degenerate]
    if candidates.shape[0] == 0:
        return candidates

    rhs = np.diagonal(gram, axis1=1, axis2=2)
    coeffs = np.linalg.solve(2.0 * gram, rhs[..., None])[..., 0]
    offsets = np.einsum('mk,mkd->md', coeffs, edges)
    radii = np.linalg.norm(offsets, axis=1)
    mu = np.linalg.solve(gram, np.einsum('mkd,md->mk', edges, offsets)[..., None])[..., 0]
    bary = np.column_stack([1.0 - mu.sum(axis=1), mu])
    keep = np.all(bary > ctx.geometry_tolerance, axis=1) & (radii > 0) & (radii <= r)
    candidates, offsets, radii = candidates[keep], offsets[keep], radii[keep]

    centers = ctx.window.wrap(ctx.positions[candidates[:, 0]] + offsets)
    index = ctx.index
    generating = []
    for simplex, center, radius in zip(candidates, centers, radii):
        ids = index.range_query(center, radius)
        others = ids[~np.isin(ids, simplex)]
        if others.size and np.any(index.distances(center, others) < radius * (1 - ctx.circumsphere_rtol)):
            continue
        generating.append(simplex)
    if not generating:
        return np.empty((0, spec.k + 1), dtype=np.int64)
    return np.array(generating, dtype=np.int64)


def _critical_points(ctx: ScoreContext, spec: ScoreSpec) -> np.ndarray:
    simplices = critical_simplices(ctx, spec)
    scores = np.zeros(ctx.n)
    for column in simplices.T:
        scores += np.bincount(column, minlength=ctx.n)
    return scores / (spec.k + 1)


_FAMILY_EVALUATORS = {
    'unit': _unit,
    'knn_edge': _knn_edge,
    'knn_directed': _knn_directed,
    'knn_degree': _knn_degree,
    'colored_nn': _colored_nn,
    'rgg_component': _rgg_component,
    'rgg_degree': _rgg_degree,
    'rgg_subgraph': _rgg_subgraph,
    'rips_volume': _rips_volume,
    'critical_points': _critical_points,
}


# ---------------------------------------------------------------------------
# Interface ponctuelle: score en x sur X ∪ {x}
# ---------------------------------------------------------------------------

def _anchored(x, config: PointConfig) -> Tuple[PointConfig, int]:
    point = x if isinstance(x, MarkedPoint) else MarkedPoint(x)
    if config.mark_kind == 'color' and point.mark is None:
        idx = config.find(point.pos)
        if idx is None:
            raise ScoreSpecError("Le point ajouté doit porter une couleur")
        return config, idx
    idx = config.find(point.pos)
    if idx is not None:
        return config, idx
    return config.with_marked_points([point]), config.n


def score_at(x, config: PointConfig, spec: ScoreSpec) -> float:
    """ξ(x, X ∪ {x}) pour une entrée quelconque du catalogue"""
    augmented, idx = _anchored(x, config)
    return float(spec.evaluate(ScoreContext(augmented), [idx])[0])


def knn_edge_score(x, config: PointConfig, k: int, q: float) -> float:
    return score_at(x, config, ScoreSpec('knn_edge', k=k, q=q, rescale=False))


def knn_directed_score(x, config: PointConfig, k: int, q: float) -> float:
    return score_at(x, config, ScoreSpec('knn_directed', k=k, q=q, rescale=False))


def knn_degree_score(x, config: PointConfig, k: int, j: int) -> float:
    return score_at(x, config, ScoreSpec('knn_degree', k=k, j=j))


def colored_nn_score(x_with_color, config: PointConfig, j: int) -> float:
    return score_at(x_with_color, config, ScoreSpec('colored_nn', j=j))


def rgg_component_score(x, config: PointConfig, k: int, r: float) -> float:
    return score_at(x, config, ScoreSpec('rgg_component', k=k, r_rule=RadiusRule.fixed(r)))


def rgg_degree_score(x, config: PointConfig, j: int, r: float) -> float:
    return score_at(x, config, ScoreSpec('rgg_degree', j=j, r_rule=RadiusRule.fixed(r)))


def rgg_subgraph_score(x, config: PointConfig, pattern, r: float) -> float:
    return score_at(x, config, ScoreSpec('rgg_subgraph', pattern=pattern, r_rule=RadiusRule.fixed(r)))


def rips_volume_score(x, config: PointConfig, k: int, r: float, alpha: float) -> float:
    return score_at(x, config, ScoreSpec('rips_volume', k=k, alpha=alpha,
                                         r_rule=RadiusRule.fixed(r), rescale=False))


def critical_point_score(x, config: PointConfig, k: int, r: float = math.inf) -> float:
    return score_at(x, config, ScoreSpec('critical_points', k=k, r_rule=RadiusRule.fixed(r)))
