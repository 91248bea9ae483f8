"""
Parametrized Submanifolds
C^1 charts Phi: A in R^p -> G, their tangent p-vectors in the left-invariant frame,
pointwise degree, the graded column-echelon normal form and the characteristic set.

RESPONSIBILITIES:
1. Chart types: builtin parametric families and polynomial charts (exact-capable)
2. Frame coefficients C = A(Phi(t))^{-1} J(t) and the tangent multivector
3. pointwise_degree (relative threshold in float mode, exact zero in exact mode)
4. normal_form: layer-by-layer column echelon from the top layer down
5. classify_point into transversal / A / B and sample_characteristic_set on tensor grids
"""

import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from joblib import Parallel, delayed

from carnot_gmt.algebra import (
    StratifiedAlgebra,
    bch_product,
    bch_product_exact,
    frame_matrix,
    frame_matrix_exact,
    to_rational,
)
from carnot_gmt.errors import PreconditionError, SingularPointError, StructuralError, UsageError
from carnot_gmt.exterior import (
    DegreeProfile,
    Multivector,
    degree_profile,
    minors,
    multi_index_degrees,
    subdegrees_from_alphas,
    wedge,
)

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
CHUNK_SIZE = 4096


class PointClass(str, Enum):
    """Tag of a chart sample"""
    TRANSVERSAL = "transversal"
    A = "A"
    B = "B"
    SINGULAR = "singular"


# ----------------------------------------------------------------------
# Charts
# ----------------------------------------------------------------------

class Chart(ABC):
    """
    A p-dimensional C^1 parametrization of a piece of G.

    Charts are reentrant: evaluate/jacobian never mutate state and accept
    batches of parameters shaped (..., p).
    """

    def __init__(self, name: str, p: int, n: int, domain: Sequence[Sequence[float]]):
        """
        Args:
            name: label used in reports
            p: parameter dimension
            n: dimension of the target group
            domain: [[lo, hi]] * p, the closed parameter box
        """
        self.name = name
        self.p = int(p)
        self.n = int(n)
        self.domain = np.asarray(domain, dtype=float).reshape(self.p, 2)
        if np.any(self.domain[:, 1] <= self.domain[:, 0]):
            raise StructuralError(f"Chart domain must have lo < hi on every axis, got {self.domain.tolist()}")

    @property
    def supports_exact(self) -> bool:
        return False

    @abstractmethod
    def evaluate(self, t) -> np.ndarray:
        """Phi(t), shape (..., n)"""

    def jacobian(self, t) -> np.ndarray:
        """Central differences with step h = 1e-6 (1 + |t_i|); shape (..., n, p)"""
        t = np.asarray(t, dtype=float)
        cols = []
        for i in range(self.p):
            h = 1e-6 * (1.0 + np.abs(t[..., i]))
            step = np.zeros_like(t)
            step[..., i] = h
            diff = self.evaluate(t + step) - self.evaluate(t - step)
            cols.append(diff / (2.0 * h)[..., None])
        return np.stack(cols, axis=-1)

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        return np.all((t >= lo) & (t <= hi), axis=-1)

    def to_dict(self) -> Dict:
        return {"name": self.name, "p": self.p, "n": self.n, "domain": self.domain.tolist()}


class FunctionChart(Chart):
    """Chart from vectorized callables (builtin parametric families, compositions)"""

    def __init__(self, name: str, p: int, n: int, domain, func: Callable,
                 jac: Optional[Callable] = None):
        super().__init__(name, p, n, domain)
        self._func = func
        self._jac = jac

    def evaluate(self, t) -> np.ndarray:
        return self._func(np.asarray(t, dtype=float))

    def jacobian(self, t) -> np.ndarray:
        if self._jac is None:
            return super().jacobian(t)
        return self._jac(np.asarray(t, dtype=float))


Monomial = Tuple[sp.Rational, Tuple[int, ...]]


class PolynomialChart(Chart):
    """
    Chart whose coordinates are polynomials with rational coefficients.

    coords[k] is a list of monomials (coefficient, exponents over t_1..t_p).
    Supports exact evaluation, so degree oracles can run threshold-free.
    """

    def __init__(self, name: str, p: int, n: int, domain, coords: Sequence[Sequence[Monomial]]):
        super().__init__(name, p, n, domain)
        if len(coords) != n:
            raise StructuralError(f"Polynomial chart needs {n} coordinates, got {len(coords)}")
        self.coords: List[List[Monomial]] = []
        for k, poly in enumerate(coords):
            terms = []
            for coef, exps in poly:
                exps = tuple(int(e) for e in exps)
                if len(exps) != p or any(e < 0 for e in exps):
                    raise StructuralError(f"Coordinate {k + 1}: exponents {exps} do not match p={p}")
                terms.append((to_rational(coef), exps))
            self.coords.append(terms)
        self._symbols = sp.symbols(f"t1:{p + 1}")
        self._exprs = [
            sum((c * sp.Mul(*[s**e for s, e in zip(self._symbols, exps)]) for c, exps in poly), sp.Integer(0))
            for poly in self.coords
        ]
        self._jac_exprs = [[sp.diff(e, s) for s in self._symbols] for e in self._exprs]
        self._func = sp.lambdify(self._symbols, self._exprs, "numpy")
        self._jac_func = sp.lambdify(self._symbols, self._jac_exprs, "numpy")

    @property
    def supports_exact(self) -> bool:
        return all(c.is_Rational for poly in self.coords for c, _ in poly)

    @classmethod
    def from_expressions(cls, name: str, domain, exprs: Sequence[sp.Expr],
                         symbols: Sequence[sp.Symbol]) -> "PolynomialChart":
        coords = []
        for e in exprs:
            e = sp.expand(e)
            if e == 0:
                coords.append([])
                continue
            coords.append([(c, m) for m, c in sp.Poly(e, *symbols).terms()])
        return cls(name, len(symbols), len(exprs), domain, coords)

    def _broadcast(self, values, shape) -> np.ndarray:
        return np.broadcast_to(np.asarray(values, dtype=float), shape)

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        args = [t[..., i] for i in range(self.p)]
        vals = self._func(*args)
        return np.stack([self._broadcast(v, t.shape[:-1]) for v in vals], axis=-1)

    def jacobian(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        args = [t[..., i] for i in range(self.p)]
        rows = self._jac_func(*args)
        return np.stack(
            [np.stack([self._broadcast(v, t.shape[:-1]) for v in row], axis=-1) for row in rows],
            axis=-2,
        )

    def evaluate_exact(self, t: Sequence) -> List[sp.Expr]:
        subs = dict(zip(self._symbols, [to_rational(v) for v in t]))
        return [e.subs(subs) for e in self._exprs]

    def jacobian_exact(self, t: Sequence) -> sp.Matrix:
        subs = dict(zip(self._symbols, [to_rational(v) for v in t]))
        return sp.Matrix([[d.subs(subs) for d in row] for row in self._jac_exprs])

    def translated(self, alg: StratifiedAlgebra, y: Sequence) -> "PolynomialChart":
        """Chart of y * Phi, again polynomial"""
        image = bch_product_exact(alg, list(y), self._exprs)
        return PolynomialChart.from_expressions(
            f"{self.name}@translated", self.domain.tolist(), image, self._symbols
        )

    def to_dict(self) -> Dict:
        data = super().to_dict()
        data["type"] = "polynomial"
        data["coords"] = [[[str(c), list(exps)] for c, exps in poly] for poly in self.coords]
        return data


def translated_chart(chart: Chart, alg: StratifiedAlgebra, y: Sequence[float]) -> Chart:
    """Left translate the image of a chart by y"""
    if isinstance(chart, PolynomialChart):
        return chart.translated(alg, y)
    y = np.asarray(y, dtype=float)
    return FunctionChart(
        f"{chart.name}@translated", chart.p, chart.n, chart.domain,
        lambda t: bch_product(alg, y, chart.evaluate(t)),
    )


def reparametrized_chart(chart: Chart, eta: Callable, eta_jac: Callable, domain) -> Chart:
    """Phi o eta for a C^1 diffeomorphism eta of parameter boxes (chain rule Jacobian)"""
    return FunctionChart(
        f"{chart.name}@reparametrized", chart.p, chart.n, domain,
        lambda s: chart.evaluate(eta(s)),
        lambda s: chart.jacobian(eta(s)) @ eta_jac(s),
    )


# ----------------------------------------------------------------------
# Builtin charts
# ----------------------------------------------------------------------

def _curve(n: int, coeffs: Dict[int, Callable], dcoeffs: Dict[int, Callable]):
    def func(t):
        out = np.zeros(t.shape[:-1] + (n,))
        for k, f in coeffs.items():
            out[..., k] = f(t[..., 0])
        return out

    def jac(t):
        out = np.zeros(t.shape[:-1] + (n, 1))
        for k, f in dcoeffs.items():
            out[..., k, 0] = f(t[..., 0])
        return out

    return func, jac


def _builtin_polynomial(name: str, alg: StratifiedAlgebra) -> Optional[PolynomialChart]:
    n = alg.n
    top = n - 1
    zero = []

    def coords(terms: Dict[int, List[Monomial]]) -> List[List[Monomial]]:
        return [terms.get(k, zero) for k in range(n)]

    one = sp.Integer(1)
    if name == "line":
        return PolynomialChart(name, 1, n, [[0.0, 1.0]], coords({0: [(one, (1,))]}))
    if name == "vertical-axis":
        return PolynomialChart(name, 1, n, [[0.0, 1.0]], coords({top: [(one, (1,))]}))
    if name == "transversal-curve":
        if n < 2:
            raise UsageError("transversal-curve needs n >= 2")
        terms = {0: [(one, (1,))], top: [(one, (1,))]}
        return PolynomialChart(name, 1, n, [[-1.0, 1.0]], coords(terms))
    if name == "reparametrized-curve":
        cubic = [(one, (3,)), (one, (1,))]
        return PolynomialChart(name, 1, n, [[-1.0, 1.0]], coords({0: cubic, top: cubic}))
    if name == "plane":
        if n < 2:
            raise UsageError("plane needs n >= 2")
        terms = {0: [(one, (1, 0))], 1: [(one, (0, 1))]}
        return PolynomialChart(name, 2, n, [[-1.0, 1.0], [-1.0, 1.0]], coords(terms))
    if name == "graph-surface":
        if n < 3:
            raise UsageError("graph-surface needs n >= 3")
        terms = {0: [(one, (1, 0))], 1: [(one, (0, 1))], top: [(one, (1, 1))]}
        return PolynomialChart(name, 2, n, [[-1.0, 1.0], [-1.0, 1.0]], coords(terms))
    if name == "segment":
        if n < 2:
            raise UsageError("segment needs n >= 2")
        terms = {0: [(one, (1,))], 1: [(sp.Rational(1, 2), (1,))]}
        return PolynomialChart(name, 1, n, [[0.0, 1.0]], coords(terms))
    return None


def _disk(alg: StratifiedAlgebra) -> FunctionChart:
    n = alg.n
    if n < 2:
        raise UsageError("disk needs n >= 2")

    def func(t):
        rho, phi = t[..., 0], t[..., 1]
        out = np.zeros(t.shape[:-1] + (n,))
        out[..., 0] = rho * np.cos(phi)
        out[..., 1] = rho * np.sin(phi)
        return out

    def jac(t):
        rho, phi = t[..., 0], t[..., 1]
        out = np.zeros(t.shape[:-1] + (n, 2))
        out[..., 0, 0] = np.cos(phi)
        out[..., 1, 0] = np.sin(phi)
        out[..., 0, 1] = -rho * np.sin(phi)
        out[..., 1, 1] = rho * np.cos(phi)
        return out

    return FunctionChart("disk", 2, n, [[0.0, 1.0], [0.0, 2.0 * np.pi]], func, jac)


BUILTIN_CHARTS = (
    "line", "vertical-axis", "transversal-curve", "reparametrized-curve",
    "plane", "graph-surface", "segment", "disk",
)


def builtin_chart(name: str, alg: StratifiedAlgebra) -> Chart:
    """
    Builtin charts sized to the group:
    line (t,0,..), vertical-axis (0,..,t), transversal-curve (t,0,..,t),
    reparametrized-curve (s,0,..,s) with s=t^3+t, plane (u,v,0,..),
    graph-surface (u,v,0,..,uv), segment (t,t/2,0,..), disk (polar unit disk in x1,x2).
    """
    key = name.strip().lower()
    if key == "disk":
        return _disk(alg)
    chart = _builtin_polynomial(key, alg)
    if chart is None:
        raise UsageError(f"Unknown builtin chart {name!r}; expected one of {', '.join(BUILTIN_CHARTS)}")
    return chart


def chart_from_json(data: Dict, alg: StratifiedAlgebra) -> Chart:
    """{"type": "polynomial", "p": p, "coords": [[[coef, [exps]], ...], ...], "domain": [[lo, hi], ...]}"""
    kind = data.get("type", "polynomial")
    if kind == "builtin":
        return builtin_chart(str(data.get("name", "")), alg)
    if kind != "polynomial":
        raise StructuralError(f"Unsupported chart type {kind!r}")
    try:
        p = int(data["p"])
        coords_raw = data["coords"]
        domain = data.get("domain", [[0.0, 1.0]] * p)
    except (KeyError, TypeError, ValueError) as e:
        raise StructuralError(f"Malformed chart definition: {e}")
    if len(coords_raw) != alg.n:
        raise StructuralError(
            f"Chart has {len(coords_raw)} coordinates but group {alg.name} has dimension {alg.n}"
        )
    coords = []
    for poly in coords_raw:
        terms = []
        for term in poly:
            if isinstance(term, dict):
                terms.append((term["coef"], term["exps"]))
            else:
                coef, exps = term
                terms.append((coef, exps))
        coords.append(terms)
    return PolynomialChart(data.get("name", "chart"), p, alg.n, domain, coords)


def load_chart(source: Union[str, Path], alg: StratifiedAlgebra) -> Chart:
    """Builtin chart name or path to a chart-definition JSON file"""
    path = Path(source)
    if path.suffix.lower() == ".json" or path.exists():
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise StructuralError(f"Chart file not found: {path}")
        except json.JSONDecodeError as e:
            raise StructuralError(f"Chart file {path} is not valid JSON: {e}")
        data.setdefault("name", path.stem)
        return chart_from_json(data, alg)
    return builtin_chart(str(source), alg)


def _check_chart(alg: StratifiedAlgebra, chart: Chart):
    if chart.n != alg.n:
        raise StructuralError(f"Chart {chart.name} maps into R^{chart.n}, group {alg.name} has n={alg.n}")


# ----------------------------------------------------------------------
# Tangent data
# ----------------------------------------------------------------------

def frame_coefficients(alg: StratifiedAlgebra, chart: Chart, t) -> np.ndarray:
    """C(t) = A(Phi(t))^{-1} J(t): tangent columns in the left-invariant frame; (..., n, p)"""
    _check_chart(alg, chart)
    t = np.asarray(t, dtype=float)
    A = frame_matrix(alg, chart.evaluate(t))
    return np.linalg.solve(A, chart.jacobian(t))


def frame_coefficients_exact(alg: StratifiedAlgebra, chart: PolynomialChart, t) -> sp.Matrix:
    _check_chart(alg, chart)
    x = chart.evaluate_exact(t)
    return frame_matrix_exact(alg, x).LUsolve(chart.jacobian_exact(t))


def _require_rank(matrix: np.ndarray, t) -> None:
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[-1] <= RANK_TOL * max(s[0], 1.0):
        raise SingularPointError(f"Jacobian is rank deficient at t={list(np.atleast_1d(t))}", t)


def tangent_multivector(alg: StratifiedAlgebra, chart: Chart, t, exact: bool = False) -> Multivector:
    """Wedge of the tangent columns pulled back to the origin by dl_{x^{-1}}"""
    if exact:
        C = frame_coefficients_exact(alg, _exact_chart(chart), t)
        tau = wedge(C, alg.degrees)
        if tau.is_zero():
            raise SingularPointError(f"Tangent multivector vanishes at t={list(t)}", t)
        return tau
    t = np.asarray(t, dtype=float)
    _require_rank(chart.jacobian(t), t)
    return wedge(frame_coefficients(alg, chart, t), alg.degrees)


def _exact_chart(chart: Chart) -> PolynomialChart:
    if not isinstance(chart, PolynomialChart) or not chart.supports_exact:
        raise PreconditionError(f"Exact mode needs a polynomial chart with rational coefficients, got {chart.name}")
    return chart


def pointwise_degree(alg: StratifiedAlgebra, chart: Chart, t, rel_tol: float = 1e-8,
                     exact: bool = False) -> int:
    """max d(alpha) with |c_alpha| > rel_tol max|c|; exact mode thresholds at exact zero"""
    tau = tangent_multivector(alg, chart, t, exact=exact)
    return tau.degree(0.0 if exact else rel_tol)


def degrees_batch(alg: StratifiedAlgebra, chart: Chart, ts: np.ndarray, rel_tol: float = 1e-8
                  ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Float degrees for a batch of parameters, plus a singular mask.

    Singular samples get degree 0.
    """
    ts = np.asarray(ts, dtype=float).reshape(-1, chart.p)
    J = chart.jacobian(ts)
    s = np.linalg.svd(J, compute_uv=False)
    singular = s[:, -1] <= RANK_TOL * np.maximum(s[:, 0], 1.0)
    coeffs = minors(frame_coefficients(alg, chart, ts))
    dvec = multi_index_degrees(alg.degrees, chart.p)
    cutoff = rel_tol * np.max(np.abs(coeffs), axis=1, keepdims=True)
    active = np.abs(coeffs) > cutoff
    degrees = np.where(active, dvec[None, :], 0).max(axis=1)
    degrees[singular] = 0
    return degrees.astype(int), singular


# ----------------------------------------------------------------------
# Normal form
# ----------------------------------------------------------------------

@dataclass
class NormalForm:
    """
    Graded column echelon of the frame-coefficient matrix at one point.

    C_nf = C T; column j of C_nf lives in layers <= sigma_j with a unit pivot
    in layer sigma_j and zeros on every other pivot row.
    """
    t: Tuple
    x: np.ndarray
    C: np.ndarray
    C_nf: np.ndarray
    T: np.ndarray
    alphas: Tuple[int, ...]
    pivot_rows: Tuple[int, ...]
    subdegrees: Tuple[int, ...]
    exact: bool = False
    needs_row_permutation: bool = False
    needs_basis_change: bool = False
    degree_mismatch: bool = False

    @property
    def degree(self) -> int:
        return int(sum(k * a for k, a in enumerate(self.alphas, start=1)))

    @property
    def mu(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in np.cumsum(self.alphas))

    def to_dict(self) -> Dict:
        return {
            "t": [float(v) for v in self.t],
            "x": [float(v) for v in self.x],
            "alphas": list(self.alphas),
            "degree": self.degree,
            "subdegrees": list(self.subdegrees),
            "pivot_rows": [r + 1 for r in self.pivot_rows],
            "C_nf": np.array(self.C_nf.tolist(), dtype=float).tolist(),
            "exact": self.exact,
            "needs_row_permutation": self.needs_row_permutation,
            "needs_basis_change": self.needs_basis_change,
            "degree_mismatch": self.degree_mismatch,
        }


def _echelon(alg: StratifiedAlgebra, C, exact: bool, rel_tol: float):
    """Layer-by-layer column reduction from layer iota down to 1"""
    n, p = C.shape
    work = C.copy()
    T = sp.eye(p) if exact else np.eye(p)
    scale = 0 if exact else rel_tol * max(float(np.max(np.abs(C))), 1e-300)
    remaining = list(range(p))
    assigned: List[Tuple[int, int, int]] = []  # (layer, pivot row, column)
    alphas = [0] * alg.step

    def magnitude(v):
        return abs(v) if exact else abs(float(v))

    for layer in range(alg.step, 0, -1):
        sl = alg.layer_slices[layer - 1]
        rows = list(range(sl.start, sl.stop))
        while remaining:
            best = None
            for r in rows:
                for c in remaining:
                    m = magnitude(work[r, c])
                    if m > scale and (best is None or m > best[0]):
                        best = (m, r, c)
            if best is None:
                break
            _, pr, pc = best
            pivot = work[pr, pc]
            for target in (work, T):
                target[:, pc] = target[:, pc] / pivot
            for c in range(p):
                if c == pc:
                    continue
                factor = work[pr, c]
                if factor != 0:
                    work[:, c] = work[:, c] - factor * work[:, pc]
                    T[:, c] = T[:, c] - factor * T[:, pc]
            remaining.remove(pc)
            assigned.append((layer, pr, pc))
            alphas[layer - 1] += 1
        for r in rows:
            for c in remaining:
                if magnitude(work[r, c]) <= scale:
                    work[r, c] = 0
    return work, T, assigned, alphas


def normal_form(alg: StratifiedAlgebra, chart: Chart, t, rel_tol: float = 1e-8,
                exact: bool = False) -> NormalForm:
    """
    Column echelon of C = A(x)^{-1} J at Phi(t).

    Pivots are the largest-magnitude entries of the current layer block
    (ties: lowest row, then lowest column). d = sum k alpha_k is cross-checked
    against pointwise_degree; a mismatch raises in exact mode and is flagged otherwise.
    """
    if exact:
        chart_e = _exact_chart(chart)
        C = frame_coefficients_exact(alg, chart_e, t)
        if C.rank() < chart.p:
            raise SingularPointError(f"Jacobian is rank deficient at t={list(t)}", t)
        x = np.array([float(v) for v in chart_e.evaluate_exact(t)])
        work = sp.Matrix(C)
    else:
        t = np.asarray(t, dtype=float)
        _require_rank(chart.jacobian(t), t)
        C = frame_coefficients(alg, chart, t)
        x = chart.evaluate(t)
        work = np.array(C, dtype=float)

    reduced, T, assigned, alphas = _echelon(alg, work, exact, rel_tol)

    order = sorted(assigned, key=lambda a: (a[0], a[1]))
    cols = [c for _, _, c in order]
    pivot_rows = tuple(r for _, r, _ in order)
    if exact:
        C_nf = reduced.extract(list(range(alg.n)), cols)
        T_out = T.extract(list(range(chart.p)), cols)
    else:
        C_nf = reduced[:, cols]
        T_out = T[:, cols]

    needs_perm = False
    needs_change = False
    for layer in range(1, alg.step + 1):
        sl = alg.layer_slices[layer - 1]
        layer_pivots = sorted(r for lay, r, _ in assigned if lay == layer)
        if layer_pivots != list(range(sl.start, sl.start + len(layer_pivots))):
            needs_perm = True
        own_cols = [j for j, (lay, _, _) in enumerate(order) if lay == layer]
        for j in own_cols:
            for r in range(sl.start, sl.stop):
                if r not in layer_pivots and C_nf[r, j] != 0:
                    needs_change = True

    nf = NormalForm(
        t=tuple(float(to_rational(v)) for v in t),
        x=np.asarray(x, dtype=float),
        C=np.array(C.tolist(), dtype=float) if exact else C,
        C_nf=C_nf,
        T=T_out,
        alphas=tuple(alphas),
        pivot_rows=pivot_rows,
        subdegrees=tuple(subdegrees_from_alphas(alphas)),
        exact=exact,
        needs_row_permutation=needs_perm,
        needs_basis_change=needs_change,
    )
    if needs_perm:
        logger.debug("normal form at t=%s needs a within-layer row permutation", list(nf.t))

    expected = pointwise_degree(alg, chart, t, rel_tol=rel_tol, exact=exact)
    if expected != nf.degree:
        if exact:
            raise StructuralError(
                f"Normal form degree {nf.degree} disagrees with multivector degree {expected} at t={list(t)}"
            )
        nf.degree_mismatch = True
        logger.warning(
            "normal form degree %d != multivector degree %d at t=%s (float mode)",
            nf.degree, expected, list(nf.t),
        )
    return nf


def classify_point(profile: DegreeProfile, nf: NormalForm) -> PointClass:
    """
    transversal iff alpha matches the transversal pattern (degree D(p));
    A iff some layer j >= l+1 has alpha_j < n_j; otherwise B (alpha_l < r_p).
    """
    alphas = nf.alphas
    if tuple(alphas) == profile.transversal_alphas:
        return PointClass.TRANSVERSAL
    ell, dims = profile.ell, profile.layer_dims
    if any(alphas[j - 1] < dims[j - 1] for j in range(ell + 1, len(dims) + 1)):
        return PointClass.A
    if alphas[ell - 1] < profile.r_p:
        return PointClass.B
    return PointClass.TRANSVERSAL


# ----------------------------------------------------------------------
# Characteristic set
# ----------------------------------------------------------------------

@dataclass
class CharSample:
    t: Tuple[float, ...]
    x: Tuple[float, ...]
    degree: Optional[int]
    point_class: PointClass

    def to_dict(self) -> Dict:
        return {
            "t": list(self.t),
            "x": list(self.x),
            "degree": self.degree,
            "class": self.point_class.value,
        }


@dataclass
class CharacteristicScan:
    """All tagged grid samples; `characteristic` holds the A and B samples"""
    chart_name: str
    p: int
    n: int
    D: int
    resolution: int
    samples: List[CharSample] = field(default_factory=list)

    @property
    def characteristic(self) -> List[CharSample]:
        return [s for s in self.samples if s.point_class in (PointClass.A, PointClass.B)]

    @property
    def singular(self) -> List[CharSample]:
        return [s for s in self.samples if s.point_class is PointClass.SINGULAR]

    def counts(self) -> Dict[str, int]:
        out = {c.value: 0 for c in PointClass}
        for s in self.samples:
            out[s.point_class.value] += 1
        return out

    def characteristic_points(self) -> np.ndarray:
        pts = [s.x for s in self.characteristic]
        return np.array(pts, dtype=float).reshape(-1, self.n)

    def to_dict(self) -> Dict:
        return {
            "chart": self.chart_name,
            "p": self.p,
            "D": self.D,
            "resolution": self.resolution,
            "counts": self.counts(),
        }

    def to_human_readable(self) -> str:
        counts = self.counts()
        return (
            f"{self.chart_name}: {len(self.samples)} samples, D(p)={self.D} | "
            + "  ".join(f"{k}={v}" for k, v in counts.items())
        )


def parameter_grid(domain: np.ndarray, resolution: int) -> np.ndarray:
    """Tensor grid with `resolution` points per axis (endpoints included), C order"""
    axes = [np.linspace(lo, hi, resolution) for lo, hi in domain]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _classify_chunk(alg, chart, profile, ts, rel_tol, exact) -> List[CharSample]:
    degrees, singular = degrees_batch(alg, chart, ts, rel_tol)
    xs = chart.evaluate(ts)
    out = []
    for t, x, deg, sing in zip(ts, xs, degrees, singular):
        t_key = tuple(float(v) for v in t)
        x_key = tuple(float(v) for v in x)
        if sing:
            out.append(CharSample(t_key, x_key, None, PointClass.SINGULAR))
            continue
        if deg == profile.D and not exact:
            out.append(CharSample(t_key, x_key, int(deg), PointClass.TRANSVERSAL))
            continue
        try:
            point = [sp.Rational(float(v)) for v in t] if exact else t
            nf = normal_form(alg, chart, point, rel_tol=rel_tol, exact=exact)
        except SingularPointError:
            out.append(CharSample(t_key, x_key, None, PointClass.SINGULAR))
            continue
        out.append(CharSample(t_key, x_key, nf.degree, classify_point(profile, nf)))
    return out


def sample_characteristic_set(alg: StratifiedAlgebra, chart: Chart, resolution: int,
                              rel_tol: float = 1e-8, exact: bool = False,
                              threads: int = 1) -> CharacteristicScan:
    """
    Tag every point of a tensor grid over the chart domain.

    Float degrees come from batched minors; points below D(p) get a normal form
    and an A/B tag. Singular samples are kept and tagged, never dropped.
    """
    _check_chart(alg, chart)
    if resolution < 2:
        raise PreconditionError(f"Grid resolution must be >= 2 per axis, got {resolution}")
    if exact:
        _exact_chart(chart)
    profile = degree_profile(alg, chart.p)
    _ = alg.frame_table
    grid = parameter_grid(chart.domain, resolution)
    chunks = [grid[i:i + CHUNK_SIZE] for i in range(0, len(grid), CHUNK_SIZE)]
    results = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_classify_chunk)(alg, chart, profile, chunk, rel_tol, exact) for chunk in chunks
    )
    scan = CharacteristicScan(chart.name, chart.p, chart.n, profile.D, resolution)
    for part in results:
        scan.samples.extend(part)
    if scan.singular:
        logger.warning("%d singular samples on chart %s", len(scan.singular), chart.name)
    logger.debug("scan %s: %s", chart.name, scan.counts())
    return scan
