"""
Stratified Lie Algebra & Group Arithmetic
Turns a set of structure constants on an adapted basis into a Carnot group
in exponential coordinates of the first kind.

RESPONSIBILITIES:
1. Parse group definitions (builtin names or JSON files) into StratifiedAlgebra
2. Validate grading, antisymmetry, Jacobi identity and generation by the first layer
3. Bake the Dynkin/BCH series into exact per-coordinate polynomial tables
4. Group product, inverse, dilations (float path vectorized over batches, exact path on rationals)
5. Left-invariant vector field coefficients and the frame matrix A(x)
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from itertools import combinations
from math import factorial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from carnot_gmt.errors import DomainError, StructuralError, UsageError

logger = logging.getLogger(__name__)

FLOAT_TOL = 1e-12

BracketMap = Dict[Tuple[int, int], Dict[int, sp.Expr]]


class InvariantKind(str, Enum):
    """Stratification invariants checked by validate()"""
    GRADING = "grading"
    ANTISYMMETRY = "antisymmetry"
    JACOBI = "jacobi"
    GENERATION = "generation"


@dataclass
class Violation:
    kind: InvariantKind
    detail: str

    def to_dict(self) -> Dict:
        return {"kind": self.kind.value, "detail": self.detail}


@dataclass
class ValidationReport:
    """Outcome of validate(): empty violation list means a valid stratification"""
    algebra_name: str
    layer_dims: List[int]
    exact: bool
    violations: List[Violation] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def kinds(self) -> List[InvariantKind]:
        return sorted({v.kind for v in self.violations}, key=lambda k: k.value)

    def to_dict(self) -> Dict:
        return {
            "algebra": self.algebra_name,
            "layer_dims": list(self.layer_dims),
            "arithmetic": "exact" if self.exact else "float",
            "valid": self.is_valid,
            "violations": [v.to_dict() for v in self.violations],
        }

    def to_human_readable(self) -> str:
        if self.is_valid:
            return f"✓ {self.algebra_name}: valid stratification {self.layer_dims}"
        lines = [f"✗ {self.algebra_name}: {len(self.violations)} violation(s)"]
        lines.extend(f"   - [{v.kind.value}] {v.detail}" for v in self.violations)
        return "\n".join(lines)


@dataclass
class PolynomialTable:
    """
    Sparse polynomial map R^m -> R^n stored as monomials.

    Each term is (exponents over the m input variables, coefficient, output index).
    The float path evaluates all monomials at once and scatters them with a
    (terms x n) coefficient matrix.
    """
    n_vars: int
    n_out: int
    terms: List[Tuple[Tuple[int, ...], sp.Rational, int]]

    @cached_property
    def _exponents(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, self.n_vars), dtype=np.int64)
        return np.array([t[0] for t in self.terms], dtype=np.int64)

    @cached_property
    def _scatter(self) -> np.ndarray:
        scatter = np.zeros((len(self.terms), self.n_out))
        for row, (_, coef, out) in enumerate(self.terms):
            scatter[row, out] = float(coef)
        return scatter

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        monomials = np.prod(values[..., None, :] ** self._exponents, axis=-1)
        return monomials @ self._scatter

    def evaluate_exact(self, values: Sequence[sp.Expr]) -> List[sp.Expr]:
        out = [sp.Integer(0)] * self.n_out
        for exps, coef, k in self.terms:
            term = coef
            for v, e in zip(values, exps):
                if e:
                    term = term * v**e
            out[k] = out[k] + term
        return out


def to_rational(value) -> sp.Expr:
    """Exact value for ints, fraction strings and sympy numbers; sympy Float otherwise"""
    if isinstance(value, bool):
        raise StructuralError(f"Invalid coefficient {value!r}")
    if isinstance(value, (int, np.integer)):
        return sp.Integer(int(value))
    if isinstance(value, str):
        try:
            return sp.Rational(value.strip())
        except (TypeError, ValueError, sp.SympifyError) as e:
            raise StructuralError(f"Invalid coefficient {value!r}: {e}")
    if isinstance(value, sp.Basic):
        return value
    if isinstance(value, (float, np.floating)):
        if float(value).is_integer():
            return sp.Integer(int(value))
        return sp.Float(float(value), 17)
    raise StructuralError(f"Invalid coefficient {value!r}")


class StratifiedAlgebra:
    """
    A stratified Lie algebra g = V_1 + ... + V_iota given on an adapted basis,
    identified with its simply connected group via exponential coordinates.

    Indices are 0-based internally; group-definition files are 1-based.
    """

    def __init__(self, layer_dims: Sequence[int], brackets: Optional[BracketMap] = None,
                 name: str = "custom"):
        """
        Initialize a stratified algebra.

        Args:
            layer_dims: [n_1, ..., n_iota], all positive
            brackets: {(i, j): {k: c_ij^k}} on 0-based indices; missing (j, i) entries
                are filled antisymmetrically
            name: label used in reports
        """
        if not layer_dims:
            raise StructuralError("layer_dims must be nonempty")
        if any(int(d) != d or d <= 0 for d in layer_dims):
            raise StructuralError(f"layer_dims must be positive integers, got {list(layer_dims)}")
        self.name = name
        self.layer_dims: Tuple[int, ...] = tuple(int(d) for d in layer_dims)
        self.step = len(self.layer_dims)
        self.n = sum(self.layer_dims)
        self.degrees = np.repeat(np.arange(1, self.step + 1), self.layer_dims)
        bounds = np.concatenate([[0], np.cumsum(self.layer_dims)])
        self.layer_slices = [slice(int(bounds[j]), int(bounds[j + 1])) for j in range(self.step)]
        self._antisymmetry_issues: List[str] = []
        self.brackets = self._normalize_brackets(brackets or {})

    def _normalize_brackets(self, raw: BracketMap) -> BracketMap:
        given: BracketMap = {}
        for (i, j), coeffs in raw.items():
            for idx in (i, j, *coeffs.keys()):
                if not 0 <= idx < self.n:
                    raise StructuralError(
                        f"Structure constant index {idx + 1} outside 1..{self.n} "
                        f"for layer_dims {list(self.layer_dims)}"
                    )
            clean = {k: to_rational(c) for k, c in coeffs.items() if to_rational(c) != 0}
            if i == j and clean:
                self._antisymmetry_issues.append(f"[X_{i + 1}, X_{i + 1}] is nonzero")
                continue
            if clean:
                given[(i, j)] = clean

        full: BracketMap = dict(given)
        for (i, j), coeffs in given.items():
            mirror = {k: -c for k, c in coeffs.items()}
            if (j, i) not in given:
                full[(j, i)] = mirror
            elif i < j and not _same_vector(given[(j, i)], mirror, exact=self._all_exact(given)):
                self._antisymmetry_issues.append(
                    f"c_{i + 1},{j + 1} != -c_{j + 1},{i + 1}"
                )
        return full

    @staticmethod
    def _all_exact(brackets: BracketMap) -> bool:
        return all(c.is_Rational for coeffs in brackets.values() for c in coeffs.values())

    @property
    def exact(self) -> bool:
        """True when every structure constant is rational"""
        return self._all_exact(self.brackets)

    @property
    def homogeneous_dimension(self) -> int:
        return int(sum((j + 1) * nj for j, nj in enumerate(self.layer_dims)))

    def layer_of(self, index: int) -> int:
        """1-based layer (degree d_i) of a 0-based basis index"""
        return int(self.degrees[index])

    def structure_tensor(self) -> np.ndarray:
        """Dense float array c[i, j, k]"""
        c = np.zeros((self.n, self.n, self.n))
        for (i, j), coeffs in self.brackets.items():
            for k, v in coeffs.items():
                c[i, j, k] = float(v)
        return c

    def bracket(self, u: Sequence, v: Sequence) -> List:
        """[u, v] for coefficient vectors (symbolic or numeric)"""
        out = [sp.Integer(0)] * self.n
        for (i, j), coeffs in self.brackets.items():
            if u[i] == 0 or v[j] == 0:
                continue
            for k, c in coeffs.items():
                out[k] = out[k] + c * u[i] * v[j]
        return out

    # ------------------------------------------------------------------
    # BCH tables
    # ------------------------------------------------------------------

    @cached_property
    def bch_table(self) -> PolynomialTable:
        """Q in x*y = x + y + Q(x, y) as a polynomial table over (x, y)"""
        xs = sp.symbols(f"x1:{self.n + 1}")
        ys = sp.symbols(f"y1:{self.n + 1}")
        letters = {"x": list(xs), "y": list(ys)}
        nested: Dict[str, List] = {}

        def right_nested(word: str) -> List:
            if word in nested:
                return nested[word]
            if len(word) == 1:
                value = letters[word]
            else:
                value = self.bracket(letters[word[0]], right_nested(word[1:]))
            nested[word] = value
            return value

        q = [sp.Integer(0)] * self.n
        for word, coef in _dynkin_word_coefficients(self.step).items():
            if len(word) == 1 or coef == 0:
                continue
            vec = right_nested(word)
            for k in range(self.n):
                if vec[k] != 0:
                    q[k] = q[k] + coef * vec[k]

        gens = list(xs) + list(ys)
        terms: List[Tuple[Tuple[int, ...], sp.Rational, int]] = []
        for k in range(self.n):
            expr = sp.expand(q[k])
            if expr == 0:
                continue
            for exps, coef in sp.Poly(expr, *gens).terms():
                used = [idx % self.n for idx, e in enumerate(exps) if e]
                if any(self.degrees[u] >= self.degrees[k] for u in used):
                    raise StructuralError(
                        f"Q_{k + 1} depends on a coordinate of degree >= {self.degrees[k]}; "
                        "the brackets are not graded (run validate())"
                    )
                terms.append((tuple(int(e) for e in exps), coef, k))
        logger.debug("BCH table for %s: %d monomials", self.name, len(terms))
        return PolynomialTable(n_vars=2 * self.n, n_out=self.n, terms=terms)

    @cached_property
    def frame_table(self) -> PolynomialTable:
        """
        A(x) flattened row-major: entry (l, i) is a_i^l(x) minus delta_i^l.

        Derived from the BCH monomials that are linear in a single y_i.
        """
        terms = []
        for exps, coef, k in self.bch_table.terms:
            y_part = exps[self.n:]
            if sum(y_part) != 1:
                continue
            i = int(np.argmax(y_part))
            terms.append((exps[: self.n], coef, k * self.n + i))
        return PolynomialTable(n_vars=self.n, n_out=self.n * self.n, terms=terms)

    def to_json(self) -> Dict:
        """Group-definition file content (1-based, upper-triangular brackets)"""
        entries = []
        for (i, j), coeffs in sorted(self.brackets.items()):
            if i < j:
                entries.append({
                    "i": i + 1,
                    "j": j + 1,
                    "coeffs": {str(k + 1): _coef_to_json(c) for k, c in sorted(coeffs.items())},
                })
        return {"name": self.name, "layers": list(self.layer_dims), "brackets": entries}

    def __repr__(self) -> str:
        return f"StratifiedAlgebra({self.name!r}, layers={list(self.layer_dims)})"


def _coef_to_json(c: sp.Expr):
    if c.is_Integer:
        return int(c)
    if c.is_Rational:
        return str(c)
    return float(c)


def _same_vector(a: Dict[int, sp.Expr], b: Dict[int, sp.Expr], exact: bool) -> bool:
    for k in set(a) | set(b):
        diff = a.get(k, 0) - b.get(k, 0)
        if exact and diff != 0:
            return False
        if not exact and abs(float(diff)) > FLOAT_TOL:
            return False
    return True


def _pair_sequences(total: int, k: int):
    """All sequences of k pairs (r, s) with r + s >= 1 summing to total"""
    if k == 0:
        if total == 0:
            yield ()
        return
    for size in range(1, total - (k - 1) + 1):
        for r in range(size + 1):
            for rest in _pair_sequences(total - size, k - 1):
                yield ((r, size - r),) + rest


@lru_cache(maxsize=None)
def _dynkin_word_coefficients(order: int) -> Dict[str, sp.Rational]:
    """
    Coefficient of each right-nested bracket word in log(exp(x) exp(y)),
    truncated at total word length `order`.
    """
    coefficients: Dict[str, sp.Rational] = {}
    for total in range(1, order + 1):
        for k in range(1, total + 1):
            for pairs in _pair_sequences(total, k):
                word = "".join("x" * r + "y" * s for r, s in pairs)
                denom = k * total
                for r, s in pairs:
                    denom *= factorial(r) * factorial(s)
                coefficients[word] = coefficients.get(word, sp.Integer(0)) + sp.Rational(
                    (-1) ** (k - 1), denom
                )
    return coefficients


@dataclass(frozen=True)
class GroupPoint:
    """A point of G as graded coordinates (x^1, ..., x^iota)"""
    algebra: StratifiedAlgebra
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != (self.algebra.n,):
            raise StructuralError(
                f"GroupPoint needs {self.algebra.n} coordinates, got shape {coords.shape}"
            )
        object.__setattr__(self, "coords", coords)

    def layer(self, j: int) -> np.ndarray:
        """x^j for 1-based layer index j"""
        if not 1 <= j <= self.algebra.step:
            raise DomainError(f"Layer index {j} outside 1..{self.algebra.step}")
        return self.coords[self.algebra.layer_slices[j - 1]]

    def to_dict(self) -> Dict:
        return {"coords": [float(v) for v in self.coords]}


PointLike = Union[GroupPoint, np.ndarray, Sequence[float]]


def as_coords(alg: StratifiedAlgebra, x: PointLike) -> np.ndarray:
    """Coordinates as a float array of shape (..., n)"""
    arr = x.coords if isinstance(x, GroupPoint) else np.asarray(x, dtype=float)
    if arr.shape[-1:] != (alg.n,):
        raise StructuralError(f"Expected trailing dimension {alg.n}, got shape {arr.shape}")
    return arr


def _wrap(alg: StratifiedAlgebra, like: PointLike, arr: np.ndarray):
    if isinstance(like, GroupPoint):
        return GroupPoint(alg, arr)
    return arr


# ----------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------

def validate(alg: StratifiedAlgebra) -> ValidationReport:
    """Check grading, antisymmetry, Jacobi and generation on the adapted basis"""
    exact = alg.exact
    report = ValidationReport(algebra_name=alg.name, layer_dims=list(alg.layer_dims), exact=exact)

    for issue in alg._antisymmetry_issues:
        report.violations.append(Violation(InvariantKind.ANTISYMMETRY, issue))

    for (i, j), coeffs in sorted(alg.brackets.items()):
        if i > j:
            continue
        for k in sorted(coeffs):
            if alg.degrees[k] != alg.degrees[i] + alg.degrees[j]:
                report.violations.append(Violation(
                    InvariantKind.GRADING,
                    f"[X_{i + 1}, X_{j + 1}] has a component on X_{k + 1} but "
                    f"d_{k + 1}={alg.degrees[k]} != {alg.degrees[i]}+{alg.degrees[j]}",
                ))

    basis = [[sp.Integer(int(a == b)) for a in range(alg.n)] for b in range(alg.n)]
    for i, j, k in combinations(range(alg.n), 3):
        terms = [
            alg.bracket(basis[i], alg.bracket(basis[j], basis[k])),
            alg.bracket(basis[j], alg.bracket(basis[k], basis[i])),
            alg.bracket(basis[k], alg.bracket(basis[i], basis[j])),
        ]
        total = [a + b + c for a, b, c in zip(*terms)]
        bad = any(t != 0 for t in total) if exact else any(abs(float(t)) > FLOAT_TOL for t in total)
        if bad:
            report.violations.append(Violation(
                InvariantKind.JACOBI, f"Jacobi identity fails for (X_{i + 1}, X_{j + 1}, X_{k + 1})"
            ))

    first = range(alg.layer_slices[0].start, alg.layer_slices[0].stop)
    for layer in range(1, alg.step):
        current = range(alg.layer_slices[layer - 1].start, alg.layer_slices[layer - 1].stop)
        target = alg.layer_slices[layer]
        images = [alg.bracket(basis[a], basis[b])[target] for a in first for b in current]
        if exact:
            rank = sp.Matrix(images).rank() if images else 0
        else:
            rank = np.linalg.matrix_rank(np.array(images, dtype=float), tol=FLOAT_TOL) if images else 0
        if rank != alg.layer_dims[layer]:
            report.violations.append(Violation(
                InvariantKind.GENERATION,
                f"[V_1, V_{layer}] has rank {rank} in V_{layer + 1} of dimension {alg.layer_dims[layer]}",
            ))
    return report


def bch_product(alg: StratifiedAlgebra, x: PointLike, y: PointLike):
    """x*y = x + y + Q(x, y), vectorized over leading batch axes"""
    xa, ya = as_coords(alg, x), as_coords(alg, y)
    xa, ya = np.broadcast_arrays(xa, ya)
    q = alg.bch_table.evaluate(np.concatenate([xa, ya], axis=-1))
    return _wrap(alg, x, xa + ya + q)


def bch_product_exact(alg: StratifiedAlgebra, x: Sequence, y: Sequence) -> List[sp.Expr]:
    """Exact product on rational coordinates"""
    if len(x) != alg.n or len(y) != alg.n:
        raise StructuralError(f"Expected {alg.n} coordinates, got {len(x)} and {len(y)}")
    xs = [to_rational(v) for v in x]
    ys = [to_rational(v) for v in y]
    q = alg.bch_table.evaluate_exact(xs + ys)
    return [a + b + c for a, b, c in zip(xs, ys, q)]


def inverse(alg: StratifiedAlgebra, x: PointLike):
    """x^{-1} = -x in exponential coordinates"""
    return _wrap(alg, x, -as_coords(alg, x))


def dilate(alg: StratifiedAlgebra, r: float, x: PointLike):
    """delta_r scales coordinate j by r^{d_j}"""
    if not r > 0:
        raise DomainError(f"Dilation factor must be positive, got {r}")
    return _wrap(alg, x, as_coords(alg, x) * float(r) ** alg.degrees)


def frame_matrix(alg: StratifiedAlgebra, x: PointLike) -> np.ndarray:
    """A(x): column i holds X_i(x) in coordinates; shape (..., n, n), unipotent"""
    xa = as_coords(alg, x)
    flat = alg.frame_table.evaluate(xa)
    return np.eye(alg.n) + flat.reshape(xa.shape[:-1] + (alg.n, alg.n))


def frame_matrix_exact(alg: StratifiedAlgebra, x: Sequence) -> sp.Matrix:
    xs = [to_rational(v) for v in x]
    flat = alg.frame_table.evaluate_exact(xs)
    return sp.eye(alg.n) + sp.Matrix(alg.n, alg.n, flat)


def vector_field_coeffs(alg: StratifiedAlgebra, i: int, x: PointLike) -> np.ndarray:
    """a_i^l(x) for the left-invariant field X_i (1-based i), i.e. column i of A(x)"""
    if not 1 <= i <= alg.n:
        raise DomainError(f"Basis index {i} outside 1..{alg.n}")
    return frame_matrix(alg, x)[..., :, i - 1]


def left_translate(alg: StratifiedAlgebra, x: PointLike, y: PointLike):
    """l_x(y) = x*y"""
    return bch_product(alg, x, y)


def bch_bound_constant(alg: StratifiedAlgebra, samples: int = 20000, seed: int = 0) -> float:
    """Fitted C with |Q(x, y)| <= C|x||y| on the unit Euclidean box"""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(samples, alg.n))
    y = rng.uniform(-1.0, 1.0, size=(samples, alg.n))
    q = alg.bch_table.evaluate(np.concatenate([x, y], axis=-1))
    denom = np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)
    ratio = np.linalg.norm(q, axis=1) / np.where(denom > 0, denom, np.inf)
    return float(ratio.max(initial=0.0))


# ----------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------

def from_json(data: Dict, name: str = "custom") -> StratifiedAlgebra:
    """Build an algebra from {"layers": [...], "brackets": [{"i", "j", "coeffs": {"k": c}}]}"""
    if not isinstance(data, dict) or "layers" not in data:
        raise StructuralError("Group definition must be an object with a 'layers' list")
    layers = data["layers"]
    if not isinstance(layers, list) or not all(isinstance(v, int) for v in layers):
        raise StructuralError(f"'layers' must be a list of integers, got {layers!r}")
    brackets: BracketMap = {}
    for entry in data.get("brackets", []):
        try:
            i, j = int(entry["i"]) - 1, int(entry["j"]) - 1
            coeffs = {int(k) - 1: c for k, c in entry["coeffs"].items()}
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise StructuralError(f"Malformed bracket entry {entry!r}: {e}")
        target = brackets.setdefault((i, j), {})
        for k, c in coeffs.items():
            target[k] = to_rational(target.get(k, 0)) + to_rational(c)
    return StratifiedAlgebra(layers, brackets, name=data.get("name", name))


def _abelian(n: int) -> StratifiedAlgebra:
    return StratifiedAlgebra([n], {}, name=f"abelian:{n}")


def _heisenberg(n: int) -> StratifiedAlgebra:
    center = 2 * n
    brackets = {(i, n + i): {center: sp.Integer(1)} for i in range(n)}
    return StratifiedAlgebra([2 * n, 1], brackets, name=f"heisenberg:{n}")


def _engel() -> StratifiedAlgebra:
    brackets = {(0, 1): {2: sp.Integer(1)}, (0, 2): {3: sp.Integer(1)}}
    return StratifiedAlgebra([2, 1, 1], brackets, name="engel")


def _free_step2(m: int) -> StratifiedAlgebra:
    brackets = {}
    for idx, (a, b) in enumerate(combinations(range(m), 2)):
        brackets[(a, b)] = {m + idx: sp.Integer(1)}
    second = m * (m - 1) // 2
    if second == 0:
        raise DomainError(f"free_step2 needs m >= 2, got {m}")
    return StratifiedAlgebra([m, second], brackets, name=f"free_step2:{m}")


BUILTIN_DEFAULTS = {"abelian": 3, "heisenberg": 1, "free_step2": 2}


@lru_cache(maxsize=None)
def builtin(name: str) -> StratifiedAlgebra:
    """
    Builtin example groups: abelian:n, heisenberg:n, engel, free_step2:m.

    Bare names use a default parameter (abelian:3, heisenberg:1, free_step2:2).
    """
    base, _, arg = name.strip().partition(":")
    base = base.lower().replace("-", "_")
    if base == "engel":
        if arg:
            raise UsageError(f"engel takes no parameter, got {name!r}")
        alg = _engel()
    elif base in BUILTIN_DEFAULTS:
        try:
            param = int(arg) if arg else BUILTIN_DEFAULTS[base]
        except ValueError:
            raise UsageError(f"Builtin parameter must be an integer, got {name!r}")
        if param <= 0:
            raise DomainError(f"Builtin parameter must be positive, got {param}")
        alg = {"abelian": _abelian, "heisenberg": _heisenberg, "free_step2": _free_step2}[base](param)
    else:
        raise UsageError(
            f"Unknown builtin group {name!r}; expected abelian:n, heisenberg:n, engel or free_step2:m"
        )
    report = validate(alg)
    if not report.is_valid:
        raise StructuralError(report.to_human_readable())
    return alg


def load_algebra(source: Union[str, Path]) -> StratifiedAlgebra:
    """Builtin name or path to a group-definition JSON file"""
    path = Path(source)
    if path.suffix.lower() == ".json" or path.exists():
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise StructuralError(f"Group file not found: {path}")
        except json.JSONDecodeError as e:
            raise StructuralError(f"Group file {path} is not valid JSON: {e}")
        return from_json(data, name=path.stem)
    return builtin(str(source))
