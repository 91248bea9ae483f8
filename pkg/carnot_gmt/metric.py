"""
Homogeneous Quasi-Distance & Covering Engine
Metric side of a Carnot group: quasi-norm, boxes, box/ball comparison,
the layer-killing projection and greedy 5r-coverings.

RESPONSIBILITIES:
1. Quasi-norm N(x) = max_j (eps_j |x^j|)^(1/j) and the induced left-invariant quasi-distance
2. Box gauge and Box(x, r) membership; empirical C_BB and quasi-triangle constant K
3. kill_layers: zero the first j layers by repeated right multiplication, with audit pair
4. greedy_5r_cover / covering_number over finite point clouds
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from carnot_gmt.algebra import (
    GroupPoint,
    PointLike,
    StratifiedAlgebra,
    as_coords,
    bch_product,
    inverse,
)
from carnot_gmt.errors import DomainError, PreconditionError

logger = logging.getLogger(__name__)


class LayerNorm(str, Enum):
    """Norm used on each layer x^j inside the quasi-norm"""
    SUP = "sup"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class HomogeneousQuasiNorm:
    """
    N(x) = max_j (eps_j |x^j|)^(1/j); d(x, y) = N(y^{-1} x).

    With unit weights and the sup layer norm the unit ball is exactly Box(0, 1).
    """
    algebra: StratifiedAlgebra
    weights: Tuple[float, ...] = ()
    layer_norm: LayerNorm = LayerNorm.SUP

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights) or (1.0,) * self.algebra.step
        if len(weights) != self.algebra.step:
            raise DomainError(
                f"Need {self.algebra.step} layer weights, got {len(weights)}"
            )
        if any(w <= 0 for w in weights):
            raise DomainError(f"Layer weights must be positive, got {weights}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "layer_norm", LayerNorm(self.layer_norm))

    def __call__(self, x: PointLike) -> np.ndarray:
        xa = as_coords(self.algebra, x)
        parts = []
        for j, sl in enumerate(self.algebra.layer_slices, start=1):
            block = xa[..., sl]
            if self.layer_norm is LayerNorm.SUP:
                size = np.max(np.abs(block), axis=-1)
            else:
                size = np.linalg.norm(block, axis=-1)
            parts.append((self.weights[j - 1] * size) ** (1.0 / j))
        return np.max(np.stack(parts, axis=-1), axis=-1)

    def layer_bounds(self, rho: float) -> np.ndarray:
        """Per-coordinate bound on |z_i| for every z with N(z) < rho"""
        return np.array([
            rho ** d / self.weights[d - 1] for d in self.algebra.degrees
        ])

    @cached_property
    def K(self) -> float:
        """Empirical quasi-triangle constant (fixed internal seed)"""
        return quasi_triangle_constant(self)

    def to_dict(self) -> Dict:
        return {
            "group": self.algebra.name,
            "weights": list(self.weights),
            "layer_norm": self.layer_norm.value,
        }


@dataclass
class CoverReport:
    """Greedy maximal 2r-separated centers; their 5Kr-balls cover the input"""
    r: float
    K: float
    centers: np.ndarray
    center_indices: List[int] = field(default_factory=list)
    n_points: int = 0

    @property
    def count(self) -> int:
        return int(len(self.centers))

    @property
    def cover_radius(self) -> float:
        return 5.0 * self.K * self.r

    def to_dict(self, include_centers: bool = True) -> Dict:
        data = {
            "r": float(self.r),
            "K": float(self.K),
            "count": self.count,
            "n_points": int(self.n_points),
            "cover_radius": float(self.cover_radius),
        }
        if include_centers:
            data["centers"] = [[float(v) for v in c] for c in self.centers]
        return data

    def to_human_readable(self) -> str:
        return (
            f"r={self.r:.4g}  N(r)={self.count}  (from {self.n_points} points, "
            f"K={self.K:.3f}, cover radius {self.cover_radius:.4g})"
        )


@dataclass
class KillLayersResult:
    """x~ with layers 1..j zeroed, plus the audit pair (d(x, x~), r^(1/j))"""
    x_tilde: np.ndarray
    distance: np.ndarray
    scale: float
    j: int

    @property
    def ratio(self) -> np.ndarray:
        return self.distance / self.scale

    def to_dict(self) -> Dict:
        return {
            "j": self.j,
            "scale": float(self.scale),
            "max_distance": float(np.max(self.distance)),
            "max_ratio": float(np.max(self.ratio)),
        }


# ----------------------------------------------------------------------
# Distances and boxes
# ----------------------------------------------------------------------

def quasi_distance(norm: HomogeneousQuasiNorm, x: PointLike, y: PointLike) -> np.ndarray:
    """d(x, y) = N(y^{-1} x); vectorized over broadcast batches"""
    alg = norm.algebra
    return norm(bch_product(alg, inverse(alg, as_coords(alg, y)), as_coords(alg, x)))


def euclidean_norm(x: PointLike) -> np.ndarray:
    arr = x.coords if isinstance(x, GroupPoint) else np.asarray(x, dtype=float)
    return np.linalg.norm(arr, axis=-1)


def box_gauge(alg: StratifiedAlgebra, x: PointLike) -> np.ndarray:
    """rho(x) = max_i |x_i|^(1/d_i); Box(0, r) = {rho < r}"""
    xa = as_coords(alg, x)
    return np.max(np.abs(xa) ** (1.0 / alg.degrees), axis=-1)


def in_box(alg: StratifiedAlgebra, z: PointLike, center: PointLike, r: float) -> np.ndarray:
    """Membership of z in Box(center, r) = center * Box(0, r)"""
    local = bch_product(alg, inverse(alg, as_coords(alg, center)), as_coords(alg, z))
    return box_gauge(alg, local) < r


def _sphere_directions(alg: StratifiedAlgebra, samples: int, rng: np.random.Generator) -> np.ndarray:
    directions = rng.standard_normal((samples, alg.n))
    corners = np.array(np.meshgrid(*([[-1.0, 0.0, 1.0]] * alg.n), indexing="ij")).reshape(alg.n, -1).T
    corners = corners[np.any(corners != 0, axis=1)]
    return np.vstack([directions, corners])


def box_ball_constant(norm: HomogeneousQuasiNorm, samples: int = 100000, seed: int = 0,
                      r: float = 1.0) -> float:
    """
    Smallest sampled C_BB >= 1 with Box(x, r/C) in B(x, r) in Box(x, C r).

    Probes are pushed onto the sphere {N = r} and the box boundary {rho = r}
    by dilation; homogeneity makes the estimate independent of r.
    """
    if not r > 0:
        raise DomainError(f"Probe radius must be positive, got {r}")
    alg = norm.algebra
    rng = np.random.default_rng(seed)
    directions = _sphere_directions(alg, samples, rng)

    n_vals = norm(directions)
    on_ball = directions * (r / n_vals[:, None]) ** alg.degrees
    box_over_ball = box_gauge(alg, on_ball) / r

    g_vals = box_gauge(alg, directions)
    on_box = directions * (r / g_vals[:, None]) ** alg.degrees
    ball_over_box = norm(on_box) / r

    constant = float(max(1.0, box_over_ball.max(), ball_over_box.max()))
    logger.debug("C_BB estimate for %s: %.6f from %d directions", alg.name, constant, len(directions))
    return constant


def quasi_triangle_constant(norm: HomogeneousQuasiNorm, samples: int = 20000,
                            seed: int = 0) -> float:
    """Empirical K >= 1 with d(x, z) <= K (d(x, y) + d(y, z)) over random triples"""
    alg = norm.algebra
    rng = np.random.default_rng(seed)
    scales = 10.0 ** rng.uniform(-2.0, 1.0, size=(3, samples, 1))
    x, y, z = (rng.standard_normal((samples, alg.n)) for _ in range(3))
    x = x * scales[0] ** alg.degrees
    y = y * scales[1] ** alg.degrees
    z = z * scales[2] ** alg.degrees
    lhs = quasi_distance(norm, x, z)
    rhs = quasi_distance(norm, x, y) + quasi_distance(norm, y, z)
    ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), 0.0)
    return float(max(1.0, ratio.max()))


def euclidean_ball_sample(n: int, r: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples of the Euclidean ball B_E(0, r) in R^n"""
    directions = rng.standard_normal((size, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = r * rng.uniform(0.0, 1.0, size=(size, 1)) ** (1.0 / n)
    return directions * radii


# ----------------------------------------------------------------------
# Layer killing
# ----------------------------------------------------------------------

def kill_layers(norm: HomogeneousQuasiNorm, x: PointLike, j: int, r: float) -> KillLayersResult:
    """
    Zero layers 1..j of x by x <- x * (0, ..., -x^k, ..., 0) for k = 1..j.

    Requires |x| <= r <= 1 (Euclidean); accepts batches of shape (..., n).
    """
    alg = norm.algebra
    if not 1 <= j <= alg.step:
        raise DomainError(f"Layer index j={j} outside 1..{alg.step}")
    if not 0 < r <= 1:
        raise PreconditionError(f"kill_layers needs 0 < r <= 1, got r={r}")
    xa = as_coords(alg, x)
    sizes = euclidean_norm(xa)
    if np.any(sizes > r * (1.0 + 1e-12)):
        raise PreconditionError(
            f"kill_layers needs |x| <= r={r}; got |x|={float(np.max(sizes)):.6g}"
        )
    current = xa.copy()
    for k in range(j):
        step = np.zeros_like(current)
        sl = alg.layer_slices[k]
        step[..., sl] = -current[..., sl]
        current = bch_product(alg, current, step)
        current[..., sl] = 0.0
    distance = quasi_distance(norm, xa, current)
    return KillLayersResult(x_tilde=current, distance=np.asarray(distance), scale=r ** (1.0 / j), j=j)


# ----------------------------------------------------------------------
# Coverings
# ----------------------------------------------------------------------

def _displacement_bounds(norm: HomogeneousQuasiNorm, points: np.ndarray, rho: float) -> np.ndarray:
    """
    b_k with |q_k - c_k| <= b_k whenever d(q, c) < rho and c is in the point set.

    q = c * z with N(z) < rho, so q_k - c_k = z_k + Q_k(c, z) and every monomial
    of Q_k is bounded through max |c_i| and the layer bounds on z.
    """
    alg = norm.algebra
    z_bounds = norm.layer_bounds(rho)
    c_bounds = np.max(np.abs(points), axis=0) if len(points) else np.zeros(alg.n)
    bounds = z_bounds.copy()
    values = np.concatenate([c_bounds, z_bounds])
    for exps, coef, k in alg.bch_table.terms:
        bounds[k] += abs(float(coef)) * float(np.prod(values ** np.asarray(exps)))
    return np.maximum(bounds, 1e-300)


def greedy_5r_cover(norm: HomogeneousQuasiNorm, points, r: float) -> CoverReport:
    """
    Greedy maximal separated subset, processing points in input order.

    A point becomes a center unless some earlier center lies within 2r;
    centers are therefore pairwise >= 2r apart and every point is within
    2r <= 5Kr of a center.
    """
    if not r > 0:
        raise DomainError(f"Covering scale must be positive, got {r}")
    alg = norm.algebra
    pts = np.asarray(points, dtype=float).reshape(-1, alg.n) if len(points) else np.zeros((0, alg.n))
    if len(pts) == 0:
        return CoverReport(r=r, K=norm.K, centers=np.zeros((0, alg.n)), n_points=0)

    rho = 2.0 * r
    bounds = _displacement_bounds(norm, pts, rho)
    tree = cKDTree(pts / bounds)
    covered = np.zeros(len(pts), dtype=bool)
    center_indices: List[int] = []
    for idx in range(len(pts)):
        if covered[idx]:
            continue
        center_indices.append(idx)
        candidates = np.asarray(tree.query_ball_point(pts[idx] / bounds, r=1.0, p=np.inf), dtype=int)
        candidates = candidates[~covered[candidates]]
        if len(candidates):
            dist = quasi_distance(norm, pts[candidates], pts[idx])
            covered[candidates[dist < rho]] = True
        covered[idx] = True
    logger.debug("cover r=%.4g: %d centers from %d points", r, len(center_indices), len(pts))
    return CoverReport(
        r=r,
        K=norm.K,
        centers=pts[center_indices],
        center_indices=center_indices,
        n_points=len(pts),
    )


def covering_number(norm: HomogeneousQuasiNorm, points, r: float) -> int:
    """N(r) from greedy_5r_cover"""
    return greedy_5r_cover(norm, points, r).count


def min_center_separation(norm: HomogeneousQuasiNorm, report: CoverReport) -> float:
    """Smallest pairwise quasi-distance between centers (inf for fewer than 2)"""
    centers = report.centers
    if len(centers) < 2:
        return float("inf")
    best = float("inf")
    for i in range(len(centers) - 1):
        best = min(best, float(np.min(quasi_distance(norm, centers[i + 1:], centers[i]))))
    return best


def max_cover_distance(norm: HomogeneousQuasiNorm, points, report: CoverReport) -> float:
    """max over points of the distance to the nearest center"""
    pts = np.asarray(points, dtype=float).reshape(-1, norm.algebra.n)
    if len(pts) == 0:
        return 0.0
    nearest = np.full(len(pts), np.inf)
    for c in report.centers:
        nearest = np.minimum(nearest, quasi_distance(norm, pts, c))
    return float(nearest.max())


def make_norm(alg: StratifiedAlgebra, weights: Optional[Sequence[float]] = None,
              layer_norm: str = "sup") -> HomogeneousQuasiNorm:
    return HomogeneousQuasiNorm(alg, tuple(weights or ()), LayerNorm(layer_norm))
