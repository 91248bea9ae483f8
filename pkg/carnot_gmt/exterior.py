"""
Multivector Algebra over Lambda_p(G)
Multi-indices, wedge products, homogeneous projections, the dilation action,
maximal dimension D(p), subdegrees and subdilations.

RESPONSIBILITIES:
1. Enumerate I_p and compute multi-index degrees d(alpha)
2. Sparse Multivector values with JSON keys "i1,i2,...,ip" (1-based)
3. wedge (p x p minors), project_degree, dilate_multivector, left_translate_multivector
4. DegreeProfile: l(p), r_p, D(p), transversal subdegrees and mu_k
5. Simplicity test and orthonormal basis of the p-plane of a simple multivector
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from carnot_gmt.algebra import PointLike, StratifiedAlgebra, frame_matrix
from carnot_gmt.errors import DomainError, StructuralError

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]


@lru_cache(maxsize=None)
def multi_indices(n: int, p: int) -> Tuple[MultiIndex, ...]:
    """I_p: strictly increasing 0-based p-tuples in lexicographic order"""
    if not 0 <= p <= n:
        raise DomainError(f"Grade p={p} outside 0..{n}")
    return tuple(combinations(range(n), p))


def index_array(n: int, p: int) -> np.ndarray:
    combos = multi_indices(n, p)
    if not combos:
        return np.zeros((0, p), dtype=np.int64)
    return np.array(combos, dtype=np.int64).reshape(len(combos), p)


def multi_index_degree(degrees: Sequence[int], alpha: MultiIndex) -> int:
    """d(alpha) = d_{alpha_1} + ... + d_{alpha_p}"""
    return int(sum(degrees[i] for i in alpha))


def multi_index_degrees(degrees: Sequence[int], p: int) -> np.ndarray:
    degrees = np.asarray(degrees)
    idx = index_array(len(degrees), p)
    return degrees[idx].sum(axis=1) if len(idx) else np.zeros(0, dtype=np.int64)


def format_key(alpha: MultiIndex) -> str:
    return ",".join(str(i + 1) for i in alpha)


def parse_key(key: str, n: int) -> MultiIndex:
    try:
        alpha = tuple(int(part) - 1 for part in key.split(","))
    except ValueError:
        raise StructuralError(f"Invalid multi-index key {key!r}")
    if any(not 0 <= a < n for a in alpha) or any(b <= a for a, b in zip(alpha, alpha[1:])):
        raise StructuralError(f"Multi-index {key!r} must be strictly increasing within 1..{n}")
    return alpha


@dataclass
class Multivector:
    """
    Sparse p-vector sum_alpha c_alpha X_alpha over a graded basis.

    `degrees` are the basis degrees d_1..d_n so projections and dilations
    need no algebra reference. Coefficients may be floats or sympy numbers.
    """
    p: int
    degrees: Tuple[int, ...]
    coeffs: Dict[MultiIndex, object] = field(default_factory=dict)

    def __post_init__(self):
        self.degrees = tuple(int(d) for d in self.degrees)
        n = len(self.degrees)
        for alpha in self.coeffs:
            if len(alpha) != self.p or any(not 0 <= a < n for a in alpha) or list(alpha) != sorted(set(alpha)):
                raise StructuralError(f"Invalid multi-index {alpha} for grade {self.p}, n={n}")
        self.coeffs = {a: c for a, c in self.coeffs.items() if c != 0}

    @property
    def n(self) -> int:
        return len(self.degrees)

    @classmethod
    def zero(cls, p: int, degrees: Sequence[int]) -> "Multivector":
        return cls(p, tuple(degrees), {})

    @classmethod
    def from_dense(cls, p: int, degrees: Sequence[int], values: Sequence) -> "Multivector":
        combos = multi_indices(len(degrees), p)
        if len(values) != len(combos):
            raise StructuralError(f"Expected {len(combos)} coefficients, got {len(values)}")
        return cls(p, tuple(degrees), {a: v for a, v in zip(combos, values)})

    def dense(self) -> np.ndarray:
        combos = multi_indices(self.n, self.p)
        return np.array([float(self.coeffs.get(a, 0.0)) for a in combos])

    def is_zero(self) -> bool:
        return not self.coeffs

    def norm(self) -> float:
        """Euclidean norm of the coefficient vector (graded basis orthonormal)"""
        return float(np.sqrt(sum(float(c) ** 2 for c in self.coeffs.values())))

    def degree(self, rel_tol: float = 0.0) -> int:
        """max d(alpha) over coefficients above rel_tol * max |c|"""
        if self.is_zero():
            raise DomainError("Degree of the zero multivector is undefined")
        if rel_tol > 0:
            cutoff = rel_tol * max(abs(float(c)) for c in self.coeffs.values())
            keys = [a for a, c in self.coeffs.items() if abs(float(c)) > cutoff]
        else:
            keys = list(self.coeffs)
        return max(multi_index_degree(self.degrees, a) for a in keys)

    def homogeneous_components(self) -> Dict[int, "Multivector"]:
        parts: Dict[int, Dict[MultiIndex, object]] = {}
        for alpha, c in self.coeffs.items():
            parts.setdefault(multi_index_degree(self.degrees, alpha), {})[alpha] = c
        return {D: Multivector(self.p, self.degrees, cs) for D, cs in sorted(parts.items())}

    def _check_compatible(self, other: "Multivector"):
        if other.p != self.p or other.degrees != self.degrees:
            raise StructuralError("Multivectors of different grade or group cannot be combined")

    def __add__(self, other: "Multivector") -> "Multivector":
        self._check_compatible(other)
        out = dict(self.coeffs)
        for a, c in other.coeffs.items():
            out[a] = out.get(a, 0) + c
        return Multivector(self.p, self.degrees, out)

    def __sub__(self, other: "Multivector") -> "Multivector":
        return self + (-1) * other

    def __mul__(self, scalar) -> "Multivector":
        return Multivector(self.p, self.degrees, {a: scalar * c for a, c in self.coeffs.items()})

    __rmul__ = __mul__

    def to_dict(self) -> Dict[str, float]:
        return {format_key(a): _json_number(c) for a, c in sorted(self.coeffs.items())}

    @classmethod
    def from_dict(cls, data: Dict[str, object], degrees: Sequence[int]) -> "Multivector":
        n = len(degrees)
        coeffs = {parse_key(k, n): v for k, v in data.items()}
        grades = {len(a) for a in coeffs}
        if len(grades) > 1:
            raise StructuralError(f"Mixed grades in multivector: {sorted(grades)}")
        p = grades.pop() if grades else 0
        return cls(p, tuple(degrees), coeffs)

    def to_human_readable(self) -> str:
        if self.is_zero():
            return "0"
        terms = []
        for alpha, c in sorted(self.coeffs.items()):
            basis = "∧".join(f"X{i + 1}" for i in alpha)
            terms.append(f"{float(c):+.6g}·{basis}")
        return " ".join(terms)


def _json_number(c):
    if isinstance(c, sp.Basic) and c.is_Rational and not c.is_Integer:
        return str(c)
    if isinstance(c, sp.Basic) and c.is_Integer:
        return int(c)
    return float(c)


# ----------------------------------------------------------------------
# Minors and compound matrices
# ----------------------------------------------------------------------

def minors(matrix: np.ndarray, p: Optional[int] = None) -> np.ndarray:
    """All p x p row minors of an (..., n, p) matrix, ordered as I_p; shape (..., C(n, p))"""
    matrix = np.asarray(matrix, dtype=float)
    n, cols = matrix.shape[-2:]
    p = cols if p is None else p
    idx = index_array(n, p)
    if len(idx) == 0:
        return np.zeros(matrix.shape[:-2] + (0,))
    blocks = matrix[..., idx, :]
    return np.linalg.det(blocks)


def minors_exact(matrix: sp.Matrix) -> List[sp.Expr]:
    n, p = matrix.shape
    return [matrix.extract(list(alpha), list(range(p))).det() for alpha in multi_indices(n, p)]


def compound_matrix(matrix: np.ndarray, p: int) -> np.ndarray:
    """Lambda_p M: entry (alpha, beta) = det M[alpha, beta]; shape (..., C(n,p), C(n,p))"""
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[-1]
    idx = index_array(n, p)
    rows = idx[:, None, :, None]
    cols = idx[None, :, None, :]
    return np.linalg.det(matrix[..., rows, cols])


# ----------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------

def wedge(vectors, degrees: Sequence[int]) -> Multivector:
    """
    v_1 ^ ... ^ v_p for p coefficient vectors of length n.

    `vectors` is a sequence of p vectors or an (n, p) matrix whose columns are the vectors;
    sympy entries are wedged exactly.
    """
    n = len(degrees)
    if isinstance(vectors, sp.MatrixBase):
        mat = vectors
        if mat.shape[0] != n:
            raise StructuralError(f"Vectors must have length {n}, got {mat.shape[0]}")
        return Multivector.from_dense(mat.shape[1], degrees, minors_exact(mat))
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        mat = vectors
    else:
        cols = [np.asarray(v, dtype=float) for v in vectors]
        if any(c.shape != (n,) for c in cols):
            raise StructuralError(f"Every vector must have length {n}")
        mat = np.stack(cols, axis=1) if cols else np.zeros((n, 0))
    if mat.shape[0] != n:
        raise StructuralError(f"Vectors must have length {n}, got {mat.shape[0]}")
    p = mat.shape[1]
    if p > n:
        raise DomainError(f"Cannot wedge {p} vectors in dimension {n}")
    return Multivector.from_dense(p, degrees, minors(mat))


def project_degree(v: Multivector, D: int) -> Multivector:
    """pi_D: keep exactly the coefficients with d(alpha) = D"""
    lo, hi = v.p, max_degree(v.degrees, v.p)
    if not lo <= D <= hi:
        logger.warning("project_degree: D=%s outside [%s, %s]; returning zero", D, lo, hi)
        return Multivector.zero(v.p, v.degrees)
    kept = {a: c for a, c in v.coeffs.items() if multi_index_degree(v.degrees, a) == D}
    return Multivector(v.p, v.degrees, kept)


def dilate_multivector(v: Multivector, r: float) -> Multivector:
    """(Lambda_p delta_r) X_alpha = r^{d(alpha)} X_alpha"""
    if not r > 0:
        raise DomainError(f"Dilation factor must be positive, got {r}")
    return Multivector(
        v.p, v.degrees,
        {a: c * r ** multi_index_degree(v.degrees, a) for a, c in v.coeffs.items()},
    )


def left_translate_multivector(alg: StratifiedAlgebra, x: PointLike, v: Multivector,
                               inverse: bool = False) -> Multivector:
    """
    Lambda_p dl_x applied to v at the origin (coordinate basis at x).

    With inverse=True, maps a multivector at x back to the origin
    (Lambda_p dl_{x^{-1}}), i.e. its left-invariant frame coefficients.
    """
    if v.degrees != tuple(int(d) for d in alg.degrees):
        raise StructuralError("Multivector does not belong to this group")
    A = frame_matrix(alg, x)
    if inverse:
        A = np.linalg.inv(A)
    mapped = compound_matrix(A, v.p) @ v.dense()
    return Multivector.from_dense(v.p, v.degrees, mapped)


def max_degree(degrees: Sequence[int], p: int) -> int:
    """D(p) as the sum of the p largest basis degrees"""
    return int(sum(sorted(degrees, reverse=True)[:p]))


def max_degree_bruteforce(alg: StratifiedAlgebra, p: int) -> int:
    """max over I_p of d(alpha) by exhaustive enumeration"""
    return int(max(multi_index_degree(alg.degrees, a) for a in multi_indices(alg.n, p)))


def subdegrees_from_alphas(alphas: Sequence[int]) -> List[int]:
    """sigma_j = k iff mu_{k-1} < j <= mu_k with mu_k = alpha_1 + ... + alpha_k"""
    sigma: List[int] = []
    for k, a in enumerate(alphas, start=1):
        sigma.extend([k] * int(a))
    return sigma


@dataclass(frozen=True)
class DegreeProfile:
    """l(p), r_p, D(p) and the transversal subdegrees for one grade p"""
    p: int
    ell: int
    r_p: int
    D: int
    layer_dims: Tuple[int, ...]
    subdegrees: Tuple[int, ...]
    mu: Tuple[int, ...]

    @property
    def transversal_alphas(self) -> Tuple[int, ...]:
        """alpha_k at transversal points: 0 below l, r_p at l, n_k above"""
        out = []
        for k, nk in enumerate(self.layer_dims, start=1):
            out.append(0 if k < self.ell else (self.r_p if k == self.ell else nk))
        return tuple(out)

    def to_dict(self) -> Dict:
        return {
            "p": self.p,
            "ell": self.ell,
            "r_p": self.r_p,
            "D": self.D,
            "subdegrees": list(self.subdegrees),
            "mu": list(self.mu),
        }


def degree_profile(alg: StratifiedAlgebra, p: int) -> DegreeProfile:
    """Compute l(p) two ways (cross-checked), then r_p, D(p), sigma and mu"""
    if not 1 <= p <= alg.n:
        raise DomainError(f"Grade p={p} outside 1..{alg.n}")
    dims = alg.layer_dims
    step = alg.step

    if p <= dims[-1]:
        ell = step
    else:
        ell = next(
            l for l in range(step, 0, -1)
            if sum(dims[l:]) < p <= sum(dims[l - 1:])
        )
    ell_alt = int(alg.degrees[alg.n - p])
    if ell != ell_alt:
        raise StructuralError(f"l(p) mismatch for p={p}: {ell} vs d_(n+1-p)={ell_alt}")

    above = sum(dims[ell:])
    r_p = p - above
    D = ell * r_p + sum((j + 1) * dims[j] for j in range(ell, step))
    alphas = [0] * (ell - 1) + [r_p] + list(dims[ell:])
    sigma = subdegrees_from_alphas(alphas)
    mu = tuple(int(v) for v in np.cumsum(alphas))
    if sum(sigma) != D or len(sigma) != p:
        raise StructuralError(f"Subdegree bookkeeping failed for p={p}: {sigma} vs D={D}")
    return DegreeProfile(
        p=p, ell=ell, r_p=r_p, D=D, layer_dims=dims,
        subdegrees=tuple(sigma), mu=mu,
    )


def subdilation(profile: DegreeProfile, r: float, xi) -> np.ndarray:
    """lambda_r(xi) = (r^sigma_1 xi_1, ..., r^sigma_p xi_p); vectorized over leading axes"""
    if not r > 0:
        raise DomainError(f"Subdilation factor must be positive, got {r}")
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1:] != (profile.p,):
        raise StructuralError(f"Expected trailing dimension {profile.p}, got shape {xi.shape}")
    return xi * float(r) ** np.asarray(profile.subdegrees, dtype=float)


# ----------------------------------------------------------------------
# Simple multivectors
# ----------------------------------------------------------------------

def _wedge_with_matrix(v: Multivector) -> np.ndarray:
    """Matrix of u -> u ^ v from R^n to Lambda_{p+1}"""
    n, p = v.n, v.p
    targets = multi_indices(n, p + 1) if p < n else ()
    M = np.zeros((len(targets), n))
    for row, gamma in enumerate(targets):
        for pos, i in enumerate(gamma):
            rest = gamma[:pos] + gamma[pos + 1:]
            c = v.coeffs.get(rest)
            if c is not None:
                M[row, i] += (-1) ** pos * float(c)
    return M


def plane_basis(v: Multivector, tol: float = 1e-9) -> np.ndarray:
    """
    Orthonormal basis (n x p) of S = {u : u ^ v = 0}, the plane of a simple v.

    Raises DomainError when v is zero or not simple.
    """
    if v.is_zero():
        raise DomainError("Zero multivector has no plane")
    M = _wedge_with_matrix(v)
    if M.shape[0] == 0:
        return np.eye(v.n)
    _, s, vh = np.linalg.svd(M)
    scale = max(v.norm(), 1.0)
    rank = int(np.sum(s > tol * scale))
    kernel = vh[rank:].T
    if kernel.shape[1] != v.p:
        raise DomainError(
            f"Multivector is not simple: kernel of u -> u^v has dimension {kernel.shape[1]}, expected {v.p}"
        )
    return kernel


def is_simple(v: Multivector, tol: float = 1e-9) -> bool:
    try:
        plane_basis(v, tol)
    except DomainError:
        return False
    return True


def random_multivector(degrees: Sequence[int], p: int, rng: np.random.Generator,
                       density: float = 1.0) -> Multivector:
    """Random p-vector with normal coefficients on a random subset of I_p"""
    combos = multi_indices(len(degrees), p)
    values = rng.standard_normal(len(combos))
    keep = rng.uniform(size=len(combos)) < density
    return Multivector(p, tuple(degrees), {a: float(c) for a, c, k in zip(combos, values, keep) if k})
