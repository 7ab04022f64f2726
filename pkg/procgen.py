#!/usr/bin/env python3
"""
Génération de processus de Poisson marqués pour stabilab
Fenêtres (boîtes ou tores plats), densités, échantillonnage homogène,
inhomogène par amincissement, couleurs et couplage des deux intensités
"""
import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-12

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


class ConfigurationError(ValueError):
    """Fenêtre ou paramètres d'échantillonnage invalides"""


class DensitySpecError(ValueError):
    """Densité négative ou dépassant sa borne supérieure déclarée"""


class ColorSimplexError(ValueError):
    """Probabilités de couleurs hors du simplexe"""


# ---------------------------------------------------------------------------
# Flux aléatoires
# ---------------------------------------------------------------------------

def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool) and key >= 0:
        return int(key)
    digest = hashlib.blake2b(repr(key).encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


def derive_seed_sequence(master_seed: int, *keys) -> np.random.SeedSequence:
    """
    Dériver un flux indépendant à partir de la graine maître et d'une clé

    Args:
        master_seed: Graine maître de l'expérience
        keys: Composantes de la clé (indice de réplication, intensité, étiquette d'usage)

    Returns:
        SeedSequence déterministe, indépendante de l'ordre d'exécution
    """
    spawn_key = tuple(_key_to_int(k) for k in keys)
    return np.random.SeedSequence(entropy=_key_to_int(master_seed), spawn_key=spawn_key)


def task_seed(master_seed: int, s: float, rep: int, tag: str = 'replication') -> int:
    """Graine entière d'une tâche de réplication, fonction de (graine maître, s, rep)"""
    state = derive_seed_sequence(master_seed, tag, float(s), rep).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Construire un générateur numpy à partir d'une valeur de graine"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Densités et fenêtres
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensitySpec:
    """Densité g sur la fenêtre: constante, affine ou grille (interpolation multilinéaire)"""
    kind: str = 'constant'
    value: float = 1.0
    base: float = 0.0
    gradient: Tuple[float, ...] = ()
    grid_values: Optional[np.ndarray] = field(default=None, compare=False)
    sup_bound: Optional[float] = None

    @classmethod
    def constant(cls, c: float = 1.0) -> 'DensitySpec':
        return cls(kind='constant', value=float(c))

    @classmethod
    def affine(cls, base: float, gradient: Sequence[float],
               sup_bound: Optional[float] = None) -> 'DensitySpec':
        return cls(kind='affine', base=float(base),
                   gradient=tuple(float(v) for v in gradient), sup_bound=sup_bound)

    @classmethod
    def grid(cls, values, sup_bound: Optional[float] = None) -> 'DensitySpec':
        return cls(kind='grid', grid_values=np.asarray(values, dtype=float), sup_bound=sup_bound)

    def _interpolator(self, lower, upper):
        axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, self.grid_values.shape)]
        return RegularGridInterpolator(axes, self.grid_values, method='linear',
                                       bounds_error=False, fill_value=None)

    def evaluate(self, x: np.ndarray, lower, upper) -> np.ndarray:
        """Évaluer g aux positions x (n×d)"""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == 'constant':
            return np.full(x.shape[0], self.value)
        if self.kind == 'affine':
            return self.base + x @ np.asarray(self.gradient)
        if self.kind == 'grid':
            return self._interpolator(lower, upper)(x)
        raise DensitySpecError(f"Type de densité inconnu: {self.kind}")

    def extrema(self, lower, upper) -> Tuple[float, float]:
        """Minimum et maximum exacts de g sur la boîte"""
        if self.kind == 'constant':
            return self.value, self.value
        if self.kind == 'affine':
            grad = np.asarray(self.gradient)
            lo, hi = np.asarray(lower), np.asarray(upper)
            at_lo, at_hi = grad * lo, grad * hi
            return (self.base + np.minimum(at_lo, at_hi).sum(),
                    self.base + np.maximum(at_lo, at_hi).sum())
        # le maximum d'une interpolation multilinéaire est atteint aux noeuds
        return float(self.grid_values.min()), float(self.grid_values.max())

    def bound(self, lower, upper) -> float:
        """Borne supérieure utilisée pour l'amincissement"""
        if self.sup_bound is not None:
            return float(self.sup_bound)
        return max(self.extrema(lower, upper)[1], 0.0)

    def lipschitz_constant(self, lower, upper) -> float:
        if self.kind == 'constant':
            return 0.0
        if self.kind == 'affine':
            return float(np.linalg.norm(self.gradient))
        steps = [(hi - lo) / max(n - 1, 1) for lo, hi, n in zip(lower, upper, self.grid_values.shape)]
        grads = np.gradient(self.grid_values, *steps) if self.grid_values.ndim > 1 else \
            [np.gradient(self.grid_values, steps[0])]
        return float(np.sqrt(sum(np.abs(g) ** 2 for g in grads)).max())

    def integral(self, lower, upper) -> float:
        """Intégrale exacte de g sur la boîte"""
        lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
        volume = float(np.prod(hi - lo))
        if self.kind == 'constant':
            return self.value * volume
        if self.kind == 'affine':
            return volume * (self.base + float(np.dot(self.gradient, (lo + hi) / 2)))
        # la règle des trapèzes est exacte pour l'interpolant multilinéaire
        values = self.grid_values
        for axis in reversed(range(values.ndim)):
            values = trapezoid(values, np.linspace(lo[axis], hi[axis], values.shape[axis]), axis=axis)
        return float(values)


@dataclass(frozen=True)
class WindowSpec:
    """Fenêtre d'observation: boîte [a_1,b_1]×…×[a_d,b_d], bord dur ou torique"""
    dim: int
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    boundary: str = 'hard'
    density: DensitySpec = field(default_factory=DensitySpec)

    def __post_init__(self):
        object.__setattr__(self, 'lower', tuple(float(v) for v in self.lower))
        object.__setattr__(self, 'upper', tuple(float(v) for v in self.upper))
        if self.dim < 1:
            raise ConfigurationError(f"Dimension invalide: {self.dim}")
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ConfigurationError("Les bornes doivent avoir la dimension de la fenêtre")
        if any(b <= a for a, b in zip(self.lower, self.upper)):
            raise ConfigurationError(f"Volume non positif: bornes {self.lower} / {self.upper}")
        if self.boundary not in ('hard', 'torus'):
            raise ConfigurationError(f"Mode de bord inconnu: {self.boundary}")
        if self.boundary == 'torus' and self.density.kind != 'constant':
            raise ConfigurationError("Le mode torique exige une densité constante")
        if self.density.kind == 'affine' and len(self.density.gradient) != self.dim:
            raise DensitySpecError("Le gradient affine doit avoir la dimension de la fenêtre")
        if self.density.kind == 'grid' and (self.density.grid_values is None
                                            or self.density.grid_values.ndim != self.dim):
            raise DensitySpecError("La grille de densité doit avoir la dimension de la fenêtre")
        low, high = self.density.extrema(self.lower, self.upper)
        if low < 0:
            raise DensitySpecError(f"Densité négative sur la fenêtre (minimum {low:g})")
        if self.density.sup_bound is not None and high > self.density.sup_bound * (1 + 1e-12):
            raise DensitySpecError(
                f"Borne supérieure {self.density.sup_bound:g} inférieure au maximum {high:g}")

    @classmethod
    def unit_cube(cls, dim: int = 2, boundary: str = 'hard',
                  density: Optional[DensitySpec] = None) -> 'WindowSpec':
        return cls(dim, (0.0,) * dim, (1.0,) * dim, boundary, density or DensitySpec())

    @classmethod
    def centered_cube(cls, dim: int, half_width: float, center=None,
                      density: Optional[DensitySpec] = None) -> 'WindowSpec':
        center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(dim, tuple(center - half_width), tuple(center + half_width), 'hard',
                   density or DensitySpec())

    @property
    def lower_arr(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def upper_arr(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def sides(self) -> np.ndarray:
        return self.upper_arr - self.lower_arr

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def center(self) -> np.ndarray:
        return (self.lower_arr + self.upper_arr) / 2

    @property
    def is_torus(self) -> bool:
        return self.boundary == 'torus'

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lower_arr) & (x <= self.upper_arr), axis=1)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Réduire modulo la boîte (mode torique), identité sinon"""
        if not self.is_torus:
            return np.asarray(x, dtype=float)
        return self.lower_arr + np.mod(np.asarray(x, dtype=float) - self.lower_arr, self.sides)

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vecteur b − a, convention de l'image minimale sur le tore"""
        delta = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.is_torus:
            delta = delta - self.sides * np.round(delta / self.sides)
        return delta

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def density_at(self, x: np.ndarray) -> np.ndarray:
        return self.density.evaluate(x, self.lower, self.upper)

    @property
    def density_bound(self) -> float:
        return self.density.bound(self.lower, self.upper)

    def density_integral(self, lower=None, upper=None) -> float:
        """∫_B g pour une sous-boîte B (par défaut toute la fenêtre)"""
        lo = self.lower if lower is None else lower
        hi = self.upper if upper is None else upper
        if self.density.kind == 'grid' and (lower is not None or upper is not None):
            # sous-boîte: quadrature sur une grille fine de l'interpolant
            axes = [np.linspace(a, b, 129) for a, b in zip(lo, hi)]
            mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, self.dim)
            values = self.density_at(mesh).reshape((129,) * self.dim)
            for axis in reversed(range(self.dim)):
                values = trapezoid(values, axes[axis], axis=axis)
            return float(values)
        return self.density.integral(lo, hi)


# ---------------------------------------------------------------------------
# Points et configurations
# ---------------------------------------------------------------------------

@dataclass
class MarkedPoint:
    """Point marqué (position, marque); marque None, couleur entière ou temps de couplage"""
    pos: np.ndarray
    mark: Optional[float] = None

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)


@dataclass(eq=False)
class PointConfig:
    """Configuration finie et simple de points marqués dans une fenêtre"""
    positions: np.ndarray
    window: WindowSpec
    intensity_s: float = 1.0
    marks: Optional[np.ndarray] = None
    mark_kind: str = 'none'

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.size == 0:
            pos = pos.reshape(0, self.window.dim)
        if pos.ndim != 2 or pos.shape[1] != self.window.dim:
            raise ConfigurationError(
                f"Positions de forme {pos.shape} incompatibles avec la dimension {self.window.dim}")
        self.positions = pos
        if self.marks is not None:
            self.marks = np.asarray(self.marks)
            if self.marks.shape != (pos.shape[0],):
                raise ConfigurationError("Une marque par point est requise")

    @classmethod
    def from_points(cls, points: Iterable[MarkedPoint], window: WindowSpec,
                    intensity_s: float = 1.0, mark_kind: str = 'none') -> 'PointConfig':
        points = list(points)
        positions = np.array([p.pos for p in points], dtype=float).reshape(len(points), window.dim)
        marks = None
        if mark_kind != 'none':
            marks = np.array([p.mark for p in points])
        return cls(positions, window, intensity_s, marks, mark_kind)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def points(self) -> List[MarkedPoint]:
        marks = self.marks if self.marks is not None else [None] * self.n
        return [MarkedPoint(p, m) for p, m in zip(self.positions, marks)]

    def point(self, i: int) -> MarkedPoint:
        return MarkedPoint(self.positions[i], None if self.marks is None else self.marks[i])

    def find(self, pos) -> Optional[int]:
        """Indice du point coïncidant avec pos, ou None"""
        if self.n == 0:
            return None
        pos = self.window.wrap(np.asarray(pos, dtype=float))
        hits = np.flatnonzero(np.all(self.positions == pos, axis=1))
        return int(hits[0]) if hits.size else None

    def with_marks(self, marks: np.ndarray, mark_kind: str) -> 'PointConfig':
        return replace(self, marks=np.asarray(marks), mark_kind=mark_kind)

    def with_points(self, positions, marks=None) -> 'PointConfig':
        """Nouvelle configuration augmentée des points donnés (placés en fin)"""
        extra = self.window.wrap(np.atleast_2d(np.asarray(positions, dtype=float)))
        new_marks = self.marks
        if self.marks is not None or marks is not None:
            if self.marks is not None and marks is None:
                raise ConfigurationError("Les points ajoutés doivent porter une marque")
            old = self.marks if self.marks is not None else np.zeros(self.n, dtype=np.asarray(marks).dtype)
            new_marks = np.concatenate([old, np.atleast_1d(marks)])
        return replace(self, positions=np.vstack([self.positions, extra]), marks=new_marks)

    def with_marked_points(self, points: Sequence[MarkedPoint]) -> 'PointConfig':
        if not points:
            return self
        marks = None if self.mark_kind == 'none' else [p.mark for p in points]
        return self.with_points([p.pos for p in points], marks)

    def subset(self, ids) -> 'PointConfig':
        ids = np.asarray(ids, dtype=int)
        return replace(self, positions=self.positions[ids],
                       marks=None if self.marks is None else self.marks[ids])

    def translated(self, v) -> 'PointConfig':
        v = np.asarray(v, dtype=float)
        return replace(self, positions=self.positions + v,
                       window=replace(self.window,
                                      lower=tuple(self.window.lower_arr + v),
                                      upper=tuple(self.window.upper_arr + v)))

    def is_simple(self) -> bool:
        return np.unique(self.positions, axis=0).shape[0] == self.n


def _resolve_duplicates(positions: np.ndarray, window: WindowSpec,
                        rng: np.random.Generator) -> np.ndarray:
    """Rééchantillonner uniformément les positions coïncidentes jusqu'à obtenir une configuration simple"""
    while positions.shape[0] > 1:
        _, first = np.unique(positions, axis=0, return_index=True)
        if first.size == positions.shape[0]:
            break
        duplicated = np.setdiff1d(np.arange(positions.shape[0]), first)
        logger.warning(f"{duplicated.size} position(s) dupliquée(s) rééchantillonnée(s)")
        positions[duplicated] = window.lower_arr + rng.random((duplicated.size, window.dim)) * window.sides
    return positions


def _uniform_positions(window: WindowSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return window.lower_arr + rng.random((n, window.dim)) * window.sides


# ---------------------------------------------------------------------------
# Échantillonnage
# ---------------------------------------------------------------------------

def sample_homogeneous(window: WindowSpec, s: float, seed: SeedLike = None) -> PointConfig:
    """
    Processus de Poisson homogène d'intensité s·u sur la fenêtre (densité constante u)

    Args:
        window: Fenêtre à densité constante
        s: Paramètre d'intensité
        seed: Graine, SeedSequence ou générateur

    Returns:
        PointConfig dont le nombre de points suit Poisson(s·u·Vol(W))
    """
    if window.density.kind != 'constant':
        raise DensitySpecError("sample_homogeneous exige une densité constante")
    mean = s * window.density.value * window.volume
    if not np.isfinite(mean) or mean < 0:
        raise ConfigurationError(f"Nombre moyen de points invalide: {mean}")

    rng = make_rng(seed)
    n = int(rng.poisson(mean)) if mean > 0 else 0
    positions = _resolve_duplicates(_uniform_positions(window, n, rng), window, rng)
    return PointConfig(positions, window, s)


def sample_inhomogeneous(window: WindowSpec, s: float, seed: SeedLike = None) -> PointConfig:
    """
    Processus de Poisson d'intensité s·g par amincissement d'un processus homogène
    de taux s·sup_bound: chaque point z est conservé avec probabilité g(z)/sup_bound.
    """
    sup = window.density_bound
    rng = make_rng(seed)
    if sup <= 0 or s <= 0:
        return PointConfig(np.empty((0, window.dim)), window, s)

    mean = s * sup * window.volume
    if not np.isfinite(mean):
        raise ConfigurationError(f"Nombre moyen de points invalide: {mean}")
    n = int(rng.poisson(mean))
    candidates = _uniform_positions(window, n, rng)
    g = window.density_at(candidates)
    if np.any(g > sup * (1 + 1e-12)):
        raise DensitySpecError(f"g dépasse sup_bound={sup:g} (maximum observé {g.max():g})")
    if np.any(g < 0):
        raise DensitySpecError("Densité négative détectée")
    keep = rng.random(n) * sup < g
    positions = _resolve_duplicates(candidates[keep], window, rng)
    return PointConfig(positions, window, s)


def sample_poisson(window: WindowSpec, s: float, seed: SeedLike = None) -> PointConfig:
    """Aiguillage: échantillonnage homogène si la densité est constante, sinon amincissement"""
    if window.density.kind == 'constant':
        return sample_homogeneous(window, s, seed)
    return sample_inhomogeneous(window, s, seed)


def _check_simplex(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise ColorSimplexError("Au moins une probabilité de couleur est requise")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > SIMPLEX_TOLERANCE:
        raise ColorSimplexError(f"Probabilités hors du simplexe: {probs.tolist()}")
    return probs


def attach_colors(config: PointConfig, probs: Sequence[float], seed: SeedLike = None) -> PointConfig:
    """Attribuer des couleurs i.i.d. (1..ℓ) de loi probs, indépendantes des positions"""
    probs = _check_simplex(probs)
    rng = make_rng(seed)
    marks = rng.choice(probs.size, size=config.n, p=probs / probs.sum()) + 1
    return config.with_marks(marks.astype(int), 'color')


@dataclass(eq=False)
class CoupledPair:
    """
    Réalisation du processus pilote η sur W×[0, T] et ses deux vues:
    (z, m) ∈ vue s·g si t ≤ s·g(z), (z, m) ∈ vue s·g(x) si t ≤ s·g(x).
    """
    window: WindowSpec
    s: float
    anchor_x: np.ndarray
    positions: np.ndarray
    times: np.ndarray
    marks: Optional[np.ndarray] = None

    @property
    def driver(self) -> List[Tuple[np.ndarray, float, Optional[int]]]:
        marks = self.marks if self.marks is not None else [None] * len(self.times)
        return list(zip(self.positions, self.times, marks))

    def _view(self, keep: np.ndarray, intensity: float) -> PointConfig:
        marks = None if self.marks is None else self.marks[keep]
        return PointConfig(self.positions[keep], self.window, intensity, marks,
                           'none' if marks is None else 'color')

    @property
    def anchor_density(self) -> float:
        return float(self.window.density_at(self.anchor_x)[0])

    def sg_keep(self) -> np.ndarray:
        return self.times <= self.s * self.window.density_at(self.positions)

    def sgx_keep(self) -> np.ndarray:
        return self.times <= self.s * self.anchor_density

    @property
    def sg_view(self) -> PointConfig:
        return self._view(self.sg_keep(), self.s)

    @property
    def sgx_view(self) -> PointConfig:
        return self._view(self.sgx_keep(), self.s)


def sample_coupled(window: WindowSpec, s: float, anchor_x, seed: SeedLike = None,
                   probs: Optional[Sequence[float]] = None) -> CoupledPair:
    """
    Couplage des processus d'intensités s·g et s·g(x) par un même pilote

    Args:
        window: Fenêtre d'observation
        s: Paramètre d'intensité
        anchor_x: Point x dont la densité figée définit la vue stationnaire
        seed: Graine
        probs: Probabilités de couleurs (optionnel)

    Returns:
        CoupledPair; les deux vues coïncident sur {t ≤ s·min(g(z), g(x))}
    """
    anchor = np.asarray(anchor_x, dtype=float)
    if anchor.shape != (window.dim,) or not window.contains(anchor)[0]:
        raise ConfigurationError(f"Point d'ancrage hors de la fenêtre: {anchor_x}")
    rng = make_rng(seed)
    height = s * max(window.density_bound, float(window.density_at(anchor)[0]))
    if height <= 0:
        return CoupledPair(window, s, anchor, np.empty((0, window.dim)), np.empty(0))

    n = int(rng.poisson(height * window.volume))
    positions = _resolve_duplicates(_uniform_positions(window, n, rng), window, rng)
    times = rng.random(n) * height
    marks = None
    if probs is not None:
        p = _check_simplex(probs)
        marks = (rng.choice(p.size, size=n, p=p / p.sum()) + 1).astype(int)
    return CoupledPair(window, s, anchor, positions, times, marks)
