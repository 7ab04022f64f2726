#!/usr/bin/env python3
"""
Noyaux géométriques pour stabilab
Index spatial sur grille uniforme (k plus proches voisins, boules fermées,
paires proches), sphères circonscrites, test barycentrique, volumes de simplexes
"""
import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import Optional, Tuple

import numpy as np
from scipy.special import gamma

from config import get_config
from procgen import WindowSpec

logger = logging.getLogger(__name__)


class InsufficientPointsError(ValueError):
    """Moins de k autres points dans la configuration"""

    def __init__(self, message: str, deficit: int):
        super().__init__(message)
        self.deficit = deficit


class DegenerateSimplexError(ValueError):
    """Points qui ne sont pas en position générale"""


def default_cell_size(window: WindowSpec, n: int, occupancy: float = 1.0) -> float:
    """Côté de cellule donnant une occupation moyenne ≈ occupancy"""
    if n <= 0:
        return float(window.sides.max())
    return float((occupancy * window.volume / n) ** (1.0 / window.dim))


class GridIndex:
    """
    Index uniforme immuable: chaque point appartient à exactement une cellule.
    Les cellules ont une largeur ≥ cell_size sur chaque axe (le côté de la
    fenêtre est découpé en un nombre entier de cellules).
    """

    def __init__(self, positions: np.ndarray, window: WindowSpec, cell_size: Optional[float] = None):
        self.positions = np.asarray(positions, dtype=float).reshape(-1, window.dim)
        self.window = window
        self.n = self.positions.shape[0]
        if cell_size is None:
            cell_size = default_cell_size(window, self.n)
        if not cell_size > 0:
            raise ValueError(f"cell_size doit être strictement positif (reçu {cell_size})")
        self.cell_size = float(cell_size)
        self.shape = np.maximum(1, np.floor(window.sides / self.cell_size)).astype(np.int64)
        self.widths = window.sides / self.shape
        self.dims = tuple(int(m) for m in self.shape)

        self.keys = self._cell_of(self.positions)
        self.linear = np.ravel_multi_index(self.keys.T, self.dims) if self.n else np.empty(0, np.int64)
        self.order = np.argsort(self.linear, kind='stable')
        sorted_linear = self.linear[self.order]
        self.cell_ids, self.cell_starts, self.cell_counts = np.unique(
            sorted_linear, return_index=True, return_counts=True)
        self.cells = {
            tuple(int(v) for v in np.unravel_index(lin, self.dims)): self.order[start:start + count]
            for lin, start, count in zip(self.cell_ids, self.cell_starts, self.cell_counts)
        }

    @property
    def is_torus(self) -> bool:
        return self.window.is_torus

    def _cell_of(self, x: np.ndarray) -> np.ndarray:
        x = self.window.wrap(np.atleast_2d(x))
        raw = np.floor((x - self.window.lower_arr) / self.widths).astype(np.int64)
        return np.clip(raw, 0, self.shape - 1)

    def distances(self, x: np.ndarray, ids: np.ndarray) -> np.ndarray:
        return self.window.distance(x, self.positions[ids])

    def _tie_order(self, ids: np.ndarray, dist: np.ndarray) -> np.ndarray:
        # distance, puis coordonnées lexicographiques, puis identifiant
        coords = self.positions[ids]
        keys = [ids] + [coords[:, axis] for axis in reversed(range(self.window.dim))] + [dist]
        return np.lexsort(keys)

    # --- requêtes ponctuelles ---------------------------------------------

    def _ring_cells(self, center: np.ndarray, rho: int) -> np.ndarray:
        d = self.window.dim
        if rho == 0:
            offsets = np.zeros((1, d), dtype=np.int64)
        else:
            axis = np.arange(-rho, rho + 1)
            grid = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
            offsets = grid[np.abs(grid).max(axis=1) == rho]
        cells = center + offsets
        if self.is_torus:
            return np.unique(np.mod(cells, self.shape), axis=0)
        return cells[np.all((cells >= 0) & (cells < self.shape), axis=1)]

    def knn(self, x, k: int, exclude_self: bool = False) -> np.ndarray:
        """
        Les k points les plus proches de x, ordonnés

        Args:
            x: Position de requête
            k: Nombre de voisins
            exclude_self: Exclure les points coïncidant avec x

        Returns:
            Tableau des k identifiants (distance, coordonnées, identifiant croissants)
        """
        x = self.window.wrap(np.asarray(x, dtype=float))
        available = self.n
        if exclude_self:
            available -= int(np.count_nonzero(np.all(self.positions == x, axis=1)))
        if available < k:
            raise InsufficientPointsError(
                f"{available} point(s) disponible(s) pour k={k}", deficit=k - available)

        center = self._cell_of(x)[0]
        visited = set()
        chunks = []
        w_min = float(self.widths.min())
        max_rho = int(self.shape.max())
        rho = 0
        while True:
            for cell in self._ring_cells(center, rho):
                key = tuple(int(v) for v in cell)
                if key in visited:
                    continue
                visited.add(key)
                members = self.cells.get(key)
                if members is not None:
                    chunks.append(members)
            ids = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
            dist = self.distances(x, ids)
            if exclude_self:
                ids, dist = ids[dist > 0], dist[dist > 0]
            if ids.size >= k:
                kth = np.partition(dist, k - 1)[k - 1]
                if kth < rho * w_min or rho >= max_rho:
                    break
            rho += 1

        order = self._tie_order(ids, dist)
        return ids[order[:k]]

    def range_query(self, x, r: float) -> np.ndarray:
        """Identifiants (triés) des points de la boule fermée B(x, r)"""
        x = self.window.wrap(np.asarray(x, dtype=float))
        if self.n == 0 or r < 0:
            return np.empty(0, dtype=np.int64)
        if not np.isfinite(r):
            return np.arange(self.n)
        center = self._cell_of(x)[0]
        reach = np.ceil(r / self.widths).astype(np.int64)
        axes = []
        for axis in range(self.window.dim):
            span = np.arange(center[axis] - reach[axis], center[axis] + reach[axis] + 1)
            if self.is_torus:
                span = np.unique(np.mod(span, self.shape[axis]))
            else:
                span = span[(span >= 0) & (span < self.shape[axis])]
            axes.append(span)
        chunks = [self.cells[key] for key in product(*(map(int, a) for a in axes)) if key in self.cells]
        if not chunks:
            return np.empty(0, dtype=np.int64)
        ids = np.concatenate(chunks)
        return np.sort(ids[self.distances(x, ids) <= r])

    # --- requêtes globales vectorisées ------------------------------------

    def _block_offsets(self, reach: np.ndarray) -> np.ndarray:
        axes = [np.arange(-int(m), int(m) + 1) for m in reach]
        offsets = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, self.window.dim)
        if self.is_torus:
            # deux décalages congrus modulo la grille désignent la même cellule
            offsets = np.unique(np.mod(offsets, self.shape), axis=0)
        return offsets

    def candidate_pairs(self, reach) -> Tuple[np.ndarray, np.ndarray]:
        """
        Toutes les paires ordonnées (a, b), a ≠ b, dont les cellules diffèrent
        d'au plus reach cellules sur chaque axe
        """
        if self.n == 0:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        reach = np.broadcast_to(np.asarray(reach, dtype=np.int64), (self.window.dim,))
        if not self.is_torus:
            reach = np.minimum(reach, self.shape - 1)
        firsts, seconds = [], []
        for offset in self._block_offsets(reach):
            neighbour = self.keys + offset
            if self.is_torus:
                neighbour = np.mod(neighbour, self.shape)
                valid = np.ones(self.n, dtype=bool)
            else:
                valid = np.all((neighbour >= 0) & (neighbour < self.shape), axis=1)
                neighbour = np.where(valid[:, None], neighbour, 0)
            lin = np.ravel_multi_index(neighbour.T, self.dims)
            slot = np.searchsorted(self.cell_ids, lin)
            slot = np.minimum(slot, self.cell_ids.size - 1)
            found = valid & (self.cell_ids[slot] == lin)
            queries = np.flatnonzero(found)
            counts = self.cell_counts[slot[queries]]
            total = int(counts.sum())
            if total == 0:
                continue
            starts = np.repeat(self.cell_starts[slot[queries]], counts)
            within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            firsts.append(np.repeat(queries, counts))
            seconds.append(self.order[starts + within])
        if not firsts:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        a, b = np.concatenate(firsts), np.concatenate(seconds)
        keep = a != b
        return a[keep], b[keep]

    def pairs_within(self, r: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arêtes (i < j) du graphe géométrique G(X, r) et leurs longueurs"""
        if self.n < 2 or r < 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty, np.empty(0)
        if np.isfinite(r):
            reach = np.ceil(r / self.widths).astype(np.int64)
            a, b = self.candidate_pairs(reach)
            keep = a < b
            a, b = a[keep], b[keep]
        else:
            a, b = np.triu_indices(self.n, k=1)
        dist = self.window.distance(self.positions[a], self.positions[b])
        keep = dist <= r
        a, b, dist = a[keep], b[keep], dist[keep]
        order = np.lexsort((b, a))
        return a[order], b[order], dist[order]

    def knn_table(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Voisins V_k(x) de chaque point de la configuration (lui-même exclu)

        Returns:
            (ids, distances), deux tableaux n×k ordonnés par l'ordre total
        """
        if self.n <= k:
            raise InsufficientPointsError(
                f"{self.n} point(s) pour k={k}", deficit=k + 1 - self.n)
        a, b = self.candidate_pairs(1)
        dist = self.window.distance(self.positions[a], self.positions[b])
        coords = self.positions[b]
        keys = [b] + [coords[:, axis] for axis in reversed(range(self.window.dim))] + [dist, a]
        order = np.lexsort(keys)
        a, b, dist = a[order], b[order], dist[order]

        counts = np.bincount(a, minlength=self.n)
        starts = np.cumsum(counts) - counts
        table = np.full((self.n, k), -1, dtype=np.int64)
        table_dist = np.full((self.n, k), np.inf)
        enough = counts >= k
        rows = np.flatnonzero(enough)
        take = starts[rows][:, None] + np.arange(k)
        table[rows] = b[take]
        table_dist[rows] = dist[take]

        # au-delà d'une cellule, le k-ième voisin n'est pas certifié
        uncertified = ~enough | (table_dist[:, -1] >= float(self.widths.min()))
        for i in np.flatnonzero(uncertified):
            ids = self.knn(self.positions[i], k, exclude_self=True)
            table[i] = ids
            table_dist[i] = self.distances(self.positions[i], ids)
        if uncertified.any():
            logger.debug(f"knn_table: {int(uncertified.sum())} requête(s) par expansion d'anneaux")
        return table, table_dist


# ---------------------------------------------------------------------------
# Noyaux de simplexes
# ---------------------------------------------------------------------------

@dataclass
class Circumsphere:
    """Sphère de dimension k−1 contenant les k+1 points générateurs"""
    center: np.ndarray
    radius: float
    degenerate: bool = False


def _edge_gram(points: np.ndarray, tolerance: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, bool]:
    if tolerance is None:
        tolerance = get_config().GEOMETRY_TOLERANCE
    points = np.asarray(points, dtype=float)
    edges = points[1:] - points[0]
    gram = edges @ edges.T
    scale = float(np.prod(np.diag(gram))) if gram.size else 0.0
    det = float(np.linalg.det(gram)) if gram.size else 0.0
    degenerate = scale <= 0.0 or det <= tolerance * scale
    return edges, gram, degenerate


def circumsphere(points) -> Circumsphere:
    """
    Centre et rayon de la sphère circonscrite, centre dans l'enveloppe affine

    Args:
        points: k+1 positions de R^d, k ≤ d

    Returns:
        Circumsphere (degenerate=True si les points ne sont pas en position générale
        ou si le résidu relatif dépasse CIRCUMSPHERE_RTOL)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k = points.shape[0] - 1
    if k < 1 or k > points.shape[1]:
        raise ValueError(f"{k + 1} points ne définissent pas un simplexe de R^{points.shape[1]}")
    cfg = get_config()
    edges, gram, degenerate = _edge_gram(points, cfg.GEOMETRY_TOLERANCE)
    nan = np.full(points.shape[1], np.nan)
    if degenerate:
        return Circumsphere(nan, float('nan'), True)
    coeffs = np.linalg.solve(2.0 * gram, np.diag(gram))
    offset = edges.T @ coeffs
    center, radius = points[0] + offset, float(np.linalg.norm(offset))
    residual = float(np.max(np.abs(np.linalg.norm(points - center, axis=1) - radius))) / radius
    if residual > cfg.CIRCUMSPHERE_RTOL:
        logger.debug(f"Sphère circonscrite mal conditionnée (résidu relatif {residual:.2e})")
        return Circumsphere(nan, float('nan'), True)
    return Circumsphere(center, radius, False)


def barycentric_coordinates(points, c) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    edges, gram, degenerate = _edge_gram(points)
    if degenerate:
        raise DegenerateSimplexError("Simplexe dégénéré: coordonnées barycentriques indéfinies")
    mu = np.linalg.solve(gram, edges @ (np.asarray(c, dtype=float) - points[0]))
    return np.concatenate([[1.0 - mu.sum()], mu])


def center_in_interior(points, c, tolerance: Optional[float] = None) -> bool:
    """Vrai si toutes les coordonnées barycentriques de c dépassent la tolérance (GEOMETRY_TOLERANCE par défaut)"""
    if tolerance is None:
        tolerance = get_config().GEOMETRY_TOLERANCE
    return bool(np.all(barycentric_coordinates(points, c) > tolerance))


def simplex_volume(points) -> float:
    """Volume k-dimensionnel du simplexe (déterminant de Gram), 0 si dégénéré"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k = points.shape[0] - 1
    if k < 1:
        raise ValueError("Au moins deux points sont requis")
    _, gram, degenerate = _edge_gram(points)
    if degenerate:
        return 0.0
    return math.sqrt(max(float(np.linalg.det(gram)), 0.0)) / math.factorial(k)


def unit_ball_volume(d: int) -> float:
    """κ_d = π^{d/2} / Γ(d/2 + 1)"""
    return float(np.pi ** (d / 2) / gamma(d / 2 + 1))
