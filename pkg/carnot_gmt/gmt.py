"""
Measures, Blow-ups and Dimension Estimates
Numerical side of the sub-Riemannian measure theory of C^1 submanifolds.

RESPONSIBILITIES:
1. intrinsic_measure / riemannian_measure by midpoint quadrature or seeded Monte Carlo
2. metric_factor: Euclidean p-area of a tangent plane cut by the unit quasi-ball
3. blowup_trace: density ratios and sampled Hausdorff distances along shrinking radii
4. box_dimension: covering-number regression with confidence half-width
5. charset_dim_bound (exact rationals), charset_covering_experiment
6. spherical_hausdorff_premeasure at one delta and its monotone profile over several
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from joblib import Parallel, delayed
from scipy import stats
from scipy.spatial.distance import directed_hausdorff
from sklearn.metrics import r2_score

from carnot_gmt.algebra import StratifiedAlgebra, bch_product, to_rational
from carnot_gmt.errors import (
    DegenerateRegressionError,
    DomainError,
    PreconditionError,
    StructuralError,
    UsageError,
)
from carnot_gmt.exterior import (
    DegreeProfile,
    Multivector,
    degree_profile,
    minors,
    multi_index_degrees,
    plane_basis,
    project_degree,
    wedge,
)
from carnot_gmt.manifold import (
    Chart,
    PointClass,
    classify_point,
    frame_coefficients,
    normal_form,
    sample_characteristic_set,
)
from carnot_gmt.metric import (
    HomogeneousQuasiNorm,
    box_gauge,
    covering_number,
    greedy_5r_cover,
)

logger = logging.getLogger(__name__)

CHUNK_SIZE = 8192
DEFAULT_RESOLUTION = {1: 20000, 2: 400}
BLOWUP_RESOLUTION = {1: 4001, 2: 301}
MAX_WINDOW_DOUBLINGS = 6


class Estimator(str, Enum):
    """Integration rule for chart integrals"""
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte-carlo"


# ----------------------------------------------------------------------
# Result types
# ----------------------------------------------------------------------

@dataclass
class MeasureResult:
    """Value of a chart integral; standard_error is set for Monte Carlo only"""
    value: float
    estimator: Estimator
    samples: int
    standard_error: Optional[float] = None
    D: Optional[int] = None
    kind: str = "intrinsic"

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "value": float(self.value),
            "estimator": self.estimator.value,
            "samples": int(self.samples),
            "standard_error": None if self.standard_error is None else float(self.standard_error),
            "D": self.D,
        }

    def to_human_readable(self) -> str:
        err = "" if self.standard_error is None else f" ± {self.standard_error:.3g}"
        deg = "" if self.D is None else f" (D={self.D})"
        return f"{self.kind} measure{deg}: {self.value:.6g}{err}  [{self.estimator.value}, {self.samples} samples]"


@dataclass
class BlowupTrace:
    """Density ratios and set distances of the rescaled pieces delta_{1/r}(x^{-1} Sigma)"""
    t0: Tuple[float, ...]
    x: Tuple[float, ...]
    D: int
    radii: List[float]
    densities: List[float]
    distances: List[float]
    predicted: float
    metric_factor: float
    windows: List[float] = field(default_factory=list)

    def density_spread(self, last: int = 3) -> float:
        """(max - min) / mean over the finest `last` radii"""
        tail = np.asarray(self.densities[-last:], dtype=float)
        return float((tail.max() - tail.min()) / tail.mean()) if tail.mean() > 0 else float("inf")

    def audit(self, tol: float = 0.05, slack: float = 0.10) -> List[str]:
        """Convergence checks; returns the failed ones (empty when all pass)"""
        failures = []
        if len(self.densities) >= 3 and self.density_spread() >= tol:
            failures.append(f"density spread {self.density_spread():.4g} over the last three radii >= {tol}")
        final = self.densities[-1]
        rel = abs(final - self.predicted) / self.predicted
        if rel >= tol:
            failures.append(f"final density {final:.6g} misses predicted {self.predicted:.6g} by {rel:.3%}")
        for prev, cur in zip(self.distances, self.distances[1:]):
            if cur > prev * (1.0 + slack) + 1e-12:
                failures.append(f"Hausdorff distance grew from {prev:.4g} to {cur:.4g}")
                break
        if self.distances[-1] >= tol:
            failures.append(f"final Hausdorff distance {self.distances[-1]:.4g} >= {tol}")
        return failures

    def to_dict(self) -> Dict:
        return {
            "t0": list(self.t0),
            "x": list(self.x),
            "D": self.D,
            "radii": list(self.radii),
            "densities": list(self.densities),
            "distances": list(self.distances),
            "predicted": float(self.predicted),
            "metric_factor": float(self.metric_factor),
            "windows": list(self.windows),
        }

    def to_human_readable(self) -> str:
        lines = [f"{'radius':>12} {'density':>14} {'hausdorff':>12}"]
        for r, d, h in zip(self.radii, self.densities, self.distances):
            lines.append(f"{r:>12.4g} {d:>14.6f} {h:>12.4g}")
        lines.append(f"predicted limit: {self.predicted:.6f} (metric factor {self.metric_factor:.6f})")
        return "\n".join(lines)


@dataclass
class DimEstimate:
    """log N(r) = slope * log(1/r) + intercept over the given scales"""
    scales: List[float]
    counts: List[int]
    slope: float
    half_width: float
    intercept: float
    r2: float
    residual: float

    def to_dict(self) -> Dict:
        return {
            "scales": list(self.scales),
            "counts": list(self.counts),
            "slope": float(self.slope),
            "half_width": float(self.half_width),
            "intercept": float(self.intercept),
            "r2": float(self.r2),
            "residual": float(self.residual),
        }

    def to_human_readable(self) -> str:
        lines = [f"{'scale':>12} {'N(r)':>10}"]
        for r, c in zip(self.scales, self.counts):
            lines.append(f"{r:>12.4g} {c:>10d}")
        lines.append(f"slope {self.slope:.4f} ± {self.half_width:.4f} (95%), R² = {self.r2:.4f}")
        return "\n".join(lines)


@dataclass(frozen=True)
class CharsetBound:
    """Upper bound for dim_H of the characteristic set; all values exact rationals"""
    p: int
    ell: int
    lam: sp.Rational
    D: int
    value: sp.Rational
    class_a_bound: sp.Rational
    class_b_bound: Optional[sp.Rational]
    reference_bound: sp.Rational

    def to_dict(self) -> Dict:
        def fmt(v):
            return None if v is None else str(v)

        return {
            "p": self.p,
            "ell": self.ell,
            "lambda": fmt(self.lam),
            "D": self.D,
            "bound": fmt(self.value),
            "bound_float": float(self.value),
            "class_a_bound": fmt(self.class_a_bound),
            "class_b_bound": fmt(self.class_b_bound),
            "reference_bound": fmt(self.reference_bound),
        }

    def to_human_readable(self) -> str:
        b = "empty" if self.class_b_bound is None else str(self.class_b_bound)
        return (
            f"p={self.p}, l={self.ell}, lambda={self.lam}: dim_H(charset) <= {self.value} "
            f"(A: {self.class_a_bound}, B: {b}; D(p)={self.D}, p+1-lambda={self.reference_bound})"
        )


@dataclass
class CharsetExperiment:
    """Local covering counts around characteristic points of one class"""
    point_class: PointClass
    epsilon: float
    r: float
    radius: float
    theta: float
    ceilings: List[float] = field(default_factory=list)
    counts: List[int] = field(default_factory=list)
    params: List[Tuple[float, ...]] = field(default_factory=list)
    message: str = ""

    @property
    def empty(self) -> bool:
        return not self.counts

    @property
    def max_count(self) -> int:
        return max(self.counts) if self.counts else 0

    @property
    def max_ratio(self) -> float:
        """max count / predicted ceiling (a fitted constant, so only boundedness matters)"""
        if not self.counts:
            return 0.0
        return float(max(c / m for c, m in zip(self.counts, self.ceilings)))

    def to_dict(self) -> Dict:
        return {
            "class": self.point_class.value,
            "epsilon": float(self.epsilon),
            "r": float(self.r),
            "radius": float(self.radius),
            "theta": float(self.theta),
            "points": len(self.counts),
            "counts": list(self.counts),
            "ceilings": [float(c) for c in self.ceilings],
            "max_count": self.max_count,
            "max_ratio": self.max_ratio,
            "message": self.message,
        }

    def to_human_readable(self) -> str:
        if self.empty:
            return f"class {self.point_class.value}: {self.message}"
        return (
            f"class {self.point_class.value}: {len(self.counts)} points, radius {self.radius:.4g}, "
            f"max count {self.max_count}, max count/ceiling {self.max_ratio:.4g}"
        )


# ----------------------------------------------------------------------
# Integration
# ----------------------------------------------------------------------

def _mask_unit_disk(ts: np.ndarray) -> np.ndarray:
    return np.sum(ts ** 2, axis=-1) <= 1.0


MASKS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {"unit-disk": _mask_unit_disk}


def _resolve_region(chart: Chart, region) -> np.ndarray:
    if region is None:
        return chart.domain.copy()
    box = np.asarray(region, dtype=float).reshape(chart.p, 2)
    lo, hi = chart.domain[:, 0], chart.domain[:, 1]
    slack = 1e-12 * (1.0 + np.abs(chart.domain).max())
    if np.any(box[:, 0] < lo - slack) or np.any(box[:, 1] > hi + slack) or np.any(box[:, 1] <= box[:, 0]):
        raise PreconditionError(
            f"Region {box.tolist()} is not a nonempty box inside the chart domain {chart.domain.tolist()}"
        )
    return box


def _resolve_mask(mask) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    if mask is None or callable(mask):
        return mask
    if mask not in MASKS:
        raise UsageError(f"Unknown region mask {mask!r}; expected one of {', '.join(MASKS)}")
    return MASKS[mask]


def _quadrature_chunk(integrand, axes, start, stop, mask) -> float:
    shape = tuple(len(a) for a in axes)
    idx = np.unravel_index(np.arange(start, stop), shape)
    ts = np.stack([a[i] for a, i in zip(axes, idx)], axis=-1)
    values = integrand(ts)
    if mask is not None:
        values = np.where(mask(ts), values, 0.0)
    return float(values.sum())


def _monte_carlo_chunk(integrand, box, size, seed_seq, mask) -> Tuple[float, float]:
    rng = np.random.default_rng(seed_seq)
    ts = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.uniform(size=(size, box.shape[0]))
    values = integrand(ts)
    if mask is not None:
        values = np.where(mask(ts), values, 0.0)
    return float(values.sum()), float((values ** 2).sum())


def integrate_chart(integrand: Callable[[np.ndarray], np.ndarray], box: np.ndarray,
                    estimator: Estimator = Estimator.QUADRATURE, resolution: Optional[int] = None,
                    samples: int = 100000, seed: int = 0, mask=None,
                    threads: int = 1) -> Tuple[float, int, Optional[float]]:
    """
    Integral of a vectorized integrand over a parameter box.

    Chunks depend only on the problem size and are reduced in order, so the
    result does not depend on `threads`.
    """
    estimator = Estimator(estimator)
    mask = _resolve_mask(mask)
    p = box.shape[0]
    volume = float(np.prod(box[:, 1] - box[:, 0]))

    if estimator is Estimator.QUADRATURE:
        m = resolution or DEFAULT_RESOLUTION.get(p, 40)
        axes = [lo + (hi - lo) * (np.arange(m) + 0.5) / m for lo, hi in box]
        total = m ** p
        bounds = [(s, min(s + CHUNK_SIZE, total)) for s in range(0, total, CHUNK_SIZE)]
        logger.debug("quadrature: %d^%d midpoint nodes in %d chunks", m, p, len(bounds))
        parts = Parallel(n_jobs=threads, prefer="threads")(
            delayed(_quadrature_chunk)(integrand, axes, s, e, mask) for s, e in bounds
        )
        return volume * math.fsum(parts) / total, total, None

    if samples < 2:
        raise PreconditionError(f"Monte Carlo needs at least 2 samples, got {samples}")
    sizes = [min(CHUNK_SIZE, samples - s) for s in range(0, samples, CHUNK_SIZE)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    parts = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_monte_carlo_chunk)(integrand, box, size, ss, mask) for size, ss in zip(sizes, streams)
    )
    s1 = math.fsum(a for a, _ in parts)
    s2 = math.fsum(b for _, b in parts)
    mean = s1 / samples
    var = max(s2 / samples - mean ** 2, 0.0) * samples / (samples - 1)
    return volume * mean, samples, volume * math.sqrt(var / samples)


def _check_grade(chart: Chart, D: Optional[int], alg: StratifiedAlgebra) -> int:
    profile = degree_profile(alg, chart.p)
    if D is None:
        return profile.D
    if not chart.p <= D <= profile.D:
        raise DomainError(f"Degree D={D} outside [{chart.p}, {profile.D}] for p={chart.p}")
    return int(D)


def intrinsic_density(alg: StratifiedAlgebra, chart: Chart, D: int) -> Callable[[np.ndarray], np.ndarray]:
    """t -> ||pi_D(d_1 Phi ^ ... ^ d_p Phi)|| in the graded metric at Phi(t)"""
    mask = multi_index_degrees(alg.degrees, chart.p) == D

    def integrand(ts: np.ndarray) -> np.ndarray:
        coeffs = minors(frame_coefficients(alg, chart, ts))
        return np.sqrt(np.sum(coeffs[..., mask] ** 2, axis=-1))

    return integrand


def intrinsic_measure(alg: StratifiedAlgebra, chart: Chart, region=None, D: Optional[int] = None,
                      estimator: Estimator = Estimator.QUADRATURE, resolution: Optional[int] = None,
                      samples: int = 100000, seed: int = 0, mask=None, threads: int = 1) -> MeasureResult:
    """mu_Sigma(Phi(region)) with D = D(p) unless given"""
    D = _check_grade(chart, D, alg)
    box = _resolve_region(chart, region)
    _ = alg.frame_table
    value, count, err = integrate_chart(
        intrinsic_density(alg, chart, D), box, estimator, resolution, samples, seed, mask, threads
    )
    return MeasureResult(max(value, 0.0), Estimator(estimator), count, err, D, kind="intrinsic")


def check_metric(metric, n: int) -> np.ndarray:
    """Constant coordinate metric as an SPD (n, n) array"""
    G = np.asarray(metric, dtype=float)
    if G.shape != (n, n):
        raise StructuralError(f"Metric must be {n}x{n}, got shape {G.shape}")
    if not np.allclose(G, G.T, rtol=1e-12, atol=1e-12):
        raise DomainError("Metric matrix is not symmetric")
    if np.linalg.eigvalsh(G).min() <= 0:
        raise DomainError("Metric matrix is not positive definite")
    return G


def gram_density(alg: StratifiedAlgebra, chart: Chart, metric=None) -> Callable[[np.ndarray], np.ndarray]:
    """
    t -> ||d_1 Phi ^ ... ^ d_p Phi|| as a Gram determinant.

    metric=None is the graded left-invariant metric (frame orthonormal);
    otherwise a constant SPD matrix in exponential coordinates.
    """
    if metric is None:
        def integrand(ts):
            C = frame_coefficients(alg, chart, ts)
            return np.sqrt(np.maximum(np.linalg.det(np.swapaxes(C, -1, -2) @ C), 0.0))
        return integrand

    G = check_metric(metric, alg.n)

    def integrand(ts):
        J = chart.jacobian(ts)
        return np.sqrt(np.maximum(np.linalg.det(np.swapaxes(J, -1, -2) @ G @ J), 0.0))

    return integrand


def riemannian_measure(alg: StratifiedAlgebra, chart: Chart, region=None, metric=None,
                       estimator: Estimator = Estimator.QUADRATURE, resolution: Optional[int] = None,
                       samples: int = 100000, seed: int = 0, mask=None, threads: int = 1) -> MeasureResult:
    box = _resolve_region(chart, region)
    _ = alg.frame_table
    value, count, err = integrate_chart(
        gram_density(alg, chart, metric), box, estimator, resolution, samples, seed, mask, threads
    )
    return MeasureResult(max(value, 0.0), Estimator(estimator), count, err, None, kind="riemannian")


# ----------------------------------------------------------------------
# Metric factor and blow-up
# ----------------------------------------------------------------------

def metric_factor(alg: StratifiedAlgebra, norm: HomogeneousQuasiNorm, tau: Multivector,
                  samples: int = 200000, seed: int = 0) -> float:
    """
    Euclidean p-area of S cut by {N < 1}, S the plane of the simple p-vector tau.

    S is sampled over a cube circumscribing the unit quasi-ball through the
    per-coordinate bounds of the norm.
    """
    if tau.degrees != tuple(int(d) for d in alg.degrees):
        raise StructuralError("Multivector does not belong to this group")
    basis = plane_basis(tau)
    R = float(np.linalg.norm(norm.layer_bounds(1.0)))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    s = rng.uniform(-R, R, size=(samples, tau.p))
    inside = norm(s @ basis.T) < 1.0
    return float((2.0 * R) ** tau.p * inside.mean())


def hausdorff_set_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Euclidean Hausdorff distance between finite samples"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return float("inf")
    return float(max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0]))


def _limit_directions(alg: StratifiedAlgebra, C_nf: np.ndarray, sigma: Sequence[int]) -> np.ndarray:
    """Column j keeps only its layer-sigma_j part"""
    L = np.zeros_like(C_nf, dtype=float)
    for j, k in enumerate(sigma):
        sl = alg.layer_slices[k - 1]
        L[sl, j] = C_nf[sl, j]
    return L


def blowup_trace(alg: StratifiedAlgebra, norm: HomogeneousQuasiNorm, chart: Chart, t0,
                 radii: Sequence[float], metric=None, resolution: Optional[int] = None,
                 rel_tol: float = 1e-8, theta_samples: int = 200000, seed: int = 0) -> BlowupTrace:
    """
    Follow delta_{1/r}(x^{-1} Sigma) at a transversal point x = Phi(t0).

    Parameters are sampled as t0 + T lambda_r(xi) on a midpoint grid in xi, T the
    normal-form basis change, so the preimage of B(x, r) keeps its shape as r shrinks;
    the xi window doubles while accepted samples touch its edge.
    """
    t0 = np.asarray(t0, dtype=float).reshape(chart.p)
    radii = [float(r) for r in radii]
    if not radii:
        raise PreconditionError("Blow-up needs at least one radius")
    if any(r <= 0 for r in radii):
        raise DomainError(f"Radii must be positive, got {radii}")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise PreconditionError(f"Radii must be strictly decreasing, got {radii}")
    if not bool(chart.contains(t0)):
        raise PreconditionError(f"t0={t0.tolist()} lies outside the chart domain")

    profile = degree_profile(alg, chart.p)
    nf = normal_form(alg, chart, t0, rel_tol=rel_tol)
    point_class = classify_point(profile, nf)
    if point_class is not PointClass.TRANSVERSAL:
        raise PreconditionError(
            f"Blow-up needs a transversal point: degree at t0={t0.tolist()} is {nf.degree} < D(p)={profile.D} "
            f"(class {point_class.value})"
        )

    x = chart.evaluate(t0)
    tau = wedge(nf.C, alg.degrees)
    tau_D = project_degree(tau, profile.D)
    theta = metric_factor(alg, norm, tau_D, samples=theta_samples, seed=seed)
    weight = gram_density(alg, chart, metric)
    predicted = theta * float(weight(t0[None])[0]) / tau_D.norm()

    T = np.asarray(nf.T, dtype=float)
    det_T = abs(float(np.linalg.det(T)))
    sigma = np.asarray(nf.subdegrees, dtype=float)
    L = _limit_directions(alg, np.asarray(nf.C_nf, dtype=float), nf.subdegrees)
    m = resolution or BLOWUP_RESOLUTION.get(chart.p, 41)
    p = chart.p

    densities, distances, windows = [], [], []
    for r in radii:
        R = 2.0
        for attempt in range(MAX_WINDOW_DOUBLINGS + 1):
            h = 2.0 * R / m
            axis = -R + h * (np.arange(m) + 0.5)
            xi = np.stack([g.ravel() for g in np.meshgrid(*([axis] * p), indexing="ij")], axis=-1)
            ts = t0 + (xi * r ** sigma) @ T.T
            local = bch_product(alg, -x, chart.evaluate(ts))
            inside = norm(local) < r
            blown = local * (1.0 / r) ** alg.degrees
            in_F = box_gauge(alg, blown) <= 1.0
            limit = xi @ L.T
            limit_in_F = box_gauge(alg, limit) <= 1.0
            edge = np.any(np.abs(xi) > R - h, axis=1)
            if not np.any((inside | in_F | limit_in_F) & edge):
                break
            if attempt == MAX_WINDOW_DOUBLINGS:
                logger.warning("blow-up window still clipped at r=%.4g after %d doublings", r, attempt)
                break
            R *= 2.0
            logger.debug("blow-up r=%.4g: window enlarged to %.4g", r, R)
        density = det_T * float(weight(ts[inside]).sum()) * h ** p if np.any(inside) else 0.0
        densities.append(density)
        distances.append(hausdorff_set_distance(blown[in_F], limit[limit_in_F]))
        windows.append(R)
        logger.debug("blow-up r=%.4g: density %.6g, distance %.4g", r, density, distances[-1])

    return BlowupTrace(
        t0=tuple(float(v) for v in t0),
        x=tuple(float(v) for v in x),
        D=profile.D,
        radii=radii,
        densities=densities,
        distances=distances,
        predicted=predicted,
        metric_factor=theta,
        windows=windows,
    )


# ----------------------------------------------------------------------
# Dimension
# ----------------------------------------------------------------------

def linear_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float, float, float]:
    """Least squares line; returns slope, intercept, slope stderr, R², RMS residual"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m, b = np.polyfit(x, y, 1)
    yhat = m * x + b
    n = len(x)
    ss_res = float(np.sum((y - yhat) ** 2))
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else 0.0
    return float(m), float(b), stderr, float(r2_score(y, yhat)), math.sqrt(ss_res / n)


def box_dimension(norm: HomogeneousQuasiNorm, points, scales: Sequence[float],
                  threads: int = 1) -> DimEstimate:
    """Slope of log N(r) against log(1/r) with N(r) from greedy 5r-covers"""
    scales = [float(s) for s in scales]
    if len(scales) < 4:
        raise DegenerateRegressionError(f"Need at least 4 scales, got {len(scales)}")
    if any(s <= 0 for s in scales):
        raise DomainError(f"Scales must be positive, got {scales}")
    x = np.log(1.0 / np.asarray(scales))
    if np.ptp(x) == 0:
        raise DegenerateRegressionError("All scales are equal; the regression is degenerate")
    if np.log10(max(scales) / min(scales)) < 2.0:
        logger.warning("scales span only %.2f decades", np.log10(max(scales) / min(scales)))

    pts = np.asarray(points, dtype=float).reshape(-1, norm.algebra.n)
    if len(pts) == 0:
        raise DegenerateRegressionError("No points to cover")
    _ = norm.K
    counts = Parallel(n_jobs=threads, prefer="threads")(
        delayed(covering_number)(norm, pts, r) for r in scales
    )
    for r, c in zip(scales, counts):
        logger.debug("N(%.4g) = %d", r, c)

    slope, intercept, stderr, r2, residual = linear_fit(x, np.log(np.asarray(counts, dtype=float)))
    half = float(stats.t.ppf(0.975, len(scales) - 2)) * stderr
    return DimEstimate(
        scales=scales,
        counts=[int(c) for c in counts],
        slope=slope,
        half_width=half,
        intercept=intercept,
        r2=r2,
        residual=residual,
    )


# ----------------------------------------------------------------------
# Characteristic set
# ----------------------------------------------------------------------

def _parse_lambda(lam) -> sp.Rational:
    value = to_rational(lam)
    if isinstance(value, sp.Float):
        value = sp.nsimplify(value, rational=True)
    if not (value > 0 and value <= 1):
        raise DomainError(f"lambda must lie in (0, 1], got {lam}")
    return sp.Rational(value)


def charset_dim_bound(profile: DegreeProfile, lam) -> CharsetBound:
    """
    D(p) - lambda if l = 1; D(p) - 1 if l >= 2 and lambda >= 1/(l-1);
    D(p) - l lambda / (1 + lambda) otherwise. Equals the larger per-class bound.
    """
    lam = _parse_lambda(lam)
    ell, D, p = profile.ell, profile.D, profile.p
    one = sp.Integer(1)

    class_a = D - one if lam >= sp.Rational(1, ell) else D - ell * lam
    class_b = None
    if ell >= 2:
        class_b = D - one if lam >= sp.Rational(1, ell - 1) else D - ell * lam / (1 + lam)

    if ell == 1:
        value = D - lam
    elif lam >= sp.Rational(1, ell - 1):
        value = D - one
    else:
        value = D - ell * lam / (1 + lam)

    combined = class_a if class_b is None else max(class_a, class_b)
    if sp.simplify(value - combined) != 0 or not value < D:
        raise StructuralError(f"Bound bookkeeping failed: {value} vs per-class {combined}")
    return CharsetBound(
        p=p, ell=ell, lam=lam, D=D,
        value=value,
        class_a_bound=class_a,
        class_b_bound=class_b,
        reference_bound=p + one - lam,
    )


def _local_cover_count(alg, norm, chart, t_x, r, radius, local_grid) -> int:
    """Greedy cover of (x^{-1} Sigma) cut by B_E(0, r) with balls of the given radius"""
    x = chart.evaluate(t_x)
    C = frame_coefficients(alg, chart, t_x)
    s_min = float(np.linalg.svd(C, compute_uv=False)[-1])
    half = 2.0 * r / max(s_min, 1e-12)
    axes = [t + half * np.linspace(-1.0, 1.0, local_grid) for t in t_x]
    ts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    local = bch_product(alg, -x, chart.evaluate(ts))
    keep = np.linalg.norm(local, axis=1) < r
    return greedy_5r_cover(norm, local[keep], radius / 2.0).count


def charset_covering_experiment(alg: StratifiedAlgebra, norm: HomogeneousQuasiNorm, chart: Chart,
                                epsilon: float, r: float, point_class: PointClass = PointClass.A,
                                resolution: int = 101, local_grid: Optional[int] = None,
                                max_points: int = 50, rel_tol: float = 1e-8,
                                threads: int = 1) -> CharsetExperiment:
    """
    Cover (x^{-1} Sigma) cut by B_E(0, r) around sampled characteristic points.

    Class A uses balls of radius r^{1/l} with ceiling eps r^{p - D/l} (needs r <= eps^l).
    Class B uses radius (eps r)^{1/l} = r^theta, theta = (1 + lambda)/l, lambda = log eps / log r,
    with ceiling eps^H r^{p - theta D - (l theta - 1)(n_l - r_p)}, H = n_l - alpha_l (needs r <= eps^(l-1)).
    """
    point_class = PointClass(point_class)
    if point_class not in (PointClass.A, PointClass.B):
        raise UsageError(f"Covering experiment runs on class A or B, got {point_class.value}")
    if not 0 < epsilon < 1:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0 < r < 1:
        raise DomainError(f"r must lie in (0, 1), got {r}")

    profile = degree_profile(alg, chart.p)
    ell, D, p = profile.ell, profile.D, profile.p
    n_ell = alg.layer_dims[ell - 1]
    if point_class is PointClass.A:
        if r > epsilon ** ell:
            raise PreconditionError(f"Class A experiment needs r <= eps^l = {epsilon ** ell:.6g}, got r={r}")
        theta = 1.0 / ell
        radius = r ** theta
    else:
        if ell < 2:
            return CharsetExperiment(point_class, epsilon, r, 0.0, 0.0,
                                     message="class B is empty when l = 1")
        if r > epsilon ** (ell - 1):
            raise PreconditionError(f"Class B experiment needs r <= eps^(l-1) = {epsilon ** (ell - 1):.6g}, got r={r}")
        lam = math.log(epsilon) / math.log(r)
        theta = (1.0 + lam) / ell
        radius = (epsilon * r) ** (1.0 / ell)

    scan = sample_characteristic_set(alg, chart, resolution, rel_tol=rel_tol, threads=threads)
    picked = [s for s in scan.samples if s.point_class is point_class]
    if not picked:
        msg = f"no class-{point_class.value} characteristic points found on {chart.name}"
        logger.info(msg)
        return CharsetExperiment(point_class, epsilon, r, radius, theta, message=msg)
    if len(picked) > max_points:
        idx = np.unique(np.linspace(0, len(picked) - 1, max_points).round().astype(int))
        picked = [picked[i] for i in idx]

    grid = local_grid or {1: 2001, 2: 101}.get(p, 21)
    _ = norm.K
    counts = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_local_cover_count)(alg, norm, chart, np.asarray(s.t), r, radius, grid) for s in picked
    )
    ceilings = []
    for s in picked:
        if point_class is PointClass.A:
            ceilings.append(epsilon * r ** (p - D / ell))
        else:
            nf = normal_form(alg, chart, np.asarray(s.t), rel_tol=rel_tol)
            H = n_ell - nf.alphas[ell - 1]
            ceilings.append(epsilon ** H * r ** (p - theta * D - (ell * theta - 1.0) * (n_ell - profile.r_p)))
    return CharsetExperiment(
        point_class, epsilon, r, radius, theta,
        ceilings=ceilings,
        counts=[int(c) for c in counts],
        params=[tuple(s.t) for s in picked],
    )


def spherical_hausdorff_premeasure(norm: HomogeneousQuasiNorm, points, q: float, delta: float) -> float:
    """
    Upper estimate of S^q_delta: N(r) delta^q at r = delta / (4K).

    Every point lies within 2r of a greedy center, so the balls B(c, 2r) cover
    and have diameter at most 4Kr = delta. The greedy count is not monotone
    in delta; use spherical_premeasure_profile for a monotone sequence.
    """
    if q < 0:
        raise DomainError(f"q must be nonnegative, got {q}")
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    pts = np.asarray(points, dtype=float).reshape(-1, norm.algebra.n)
    if len(pts) == 0:
        return 0.0
    r = delta / (4.0 * norm.K)
    return float(covering_number(norm, pts, r) * delta ** q)


def spherical_premeasure_profile(
    norm: HomogeneousQuasiNorm, points, q: float, deltas: Sequence[float]
) -> List[float]:
    """
    Premeasure estimates over several delta, nondecreasing as delta shrinks.

    A single greedy count is not monotone in delta. Any cover admissible at a
    finer delta is admissible at a coarser one, so each value is the smallest
    single-scale estimate over all deltas at or below it. Values stay upper
    estimates of S^q_delta. Returned in the order of ``deltas``.
    """
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise UsageError("deltas must be non-empty")
    raw = [spherical_hausdorff_premeasure(norm, points, q, d) for d in deltas]
    order = np.argsort(deltas)
    profile = np.empty(len(deltas))
    best = math.inf
    for i in order:
        best = min(best, raw[i])
        profile[i] = best
    logger.debug("premeasure profile q=%g: raw %s -> %s", q, raw, profile.tolist())
    return [float(v) for v in profile]
