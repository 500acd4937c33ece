"""Sparse multivariate polynomials in the Hermite and standard monomial bases.

A polynomial is a sorted collection of ``(alpha, coefficient)`` pairs where
``alpha`` is an exponent tuple.  In the Hermite basis ``alpha`` indexes the
normalized product ``h_alpha(x) = prod_i h_{alpha_i}(x_i)`` with
``h_m = He_m / sqrt(m!)``; in the standard basis it indexes the monomial
``prod_i x_i ** alpha_i``.

Every operation returns a new :class:`Poly`; instances are never mutated.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

HERMITE = "hermite"
STANDARD = "standard"
BASES = (HERMITE, STANDARD)

DEGREE_CAP = 16

# Evaluation is chunked so that the (points, terms, n) gather stays small.
_CHUNK = 1 << 15

MultiIndex = tuple


class PolyError(ValueError):
    """Raised for malformed polynomials or invalid polynomial operations."""


def total_degree(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def factorial_of(alpha: Sequence[int]) -> int:
    """``alpha! = prod_i alpha_i!``."""
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


def multi_indices(n: int, max_degree: int, exact: int | None = None) -> list[MultiIndex]:
    """All exponent tuples of length ``n`` with ``|alpha| <= max_degree``.

    With ``exact`` given, only those with ``|alpha| == exact`` are returned.
    The result is lexicographically sorted.
    """
    return list(_multi_indices(n, max_degree, exact))


@lru_cache(maxsize=256)
def _multi_indices(n: int, max_degree: int, exact: int | None) -> tuple[MultiIndex, ...]:
    def rec(i: int, budget: int):
        if i == n:
            if exact is None or budget == max_degree - exact:
                yield ()
            return
        for a in range(budget + 1):
            for rest in rec(i + 1, budget - a):
                yield (a,) + rest

    if exact is not None and exact > max_degree:
        return ()
    return tuple(rec(0, max_degree))


# ---------------------------------------------------------------------------
# univariate tables
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _he_integer_coeffs(m: int) -> tuple[int, ...]:
    """Integer coefficients of the probabilists' He_m in powers of t."""
    if m == 0:
        return (1,)
    if m == 1:
        return (0, 1)
    prev2 = _he_integer_coeffs(m - 2)
    prev1 = _he_integer_coeffs(m - 1)
    out = [0] * (m + 1)
    for k, c in enumerate(prev1):
        out[k + 1] += c
    for k, c in enumerate(prev2):
        out[k] -= (m - 1) * c
    return tuple(out)


@lru_cache(maxsize=None)
def hermite_to_power_table(m: int) -> dict[int, float]:
    """Standard-basis expansion of the normalized h_m: ``{power: coeff}``."""
    norm = math.sqrt(math.factorial(m))
    return {k: c / norm for k, c in enumerate(_he_integer_coeffs(m)) if c != 0}


@lru_cache(maxsize=None)
def power_to_hermite_table(m: int) -> dict[int, float]:
    """Hermite expansion of ``t**m``: ``{degree: coeff}`` on normalized h_j.

    Uses ``t^m = sum_j m! / (2^j j! (m-2j)!) He_{m-2j}(t)``.
    """
    out = {}
    for j in range(m // 2 + 1):
        r = m - 2 * j
        count = math.factorial(m) // (2**j * math.factorial(j) * math.factorial(r))
        out[r] = count * math.sqrt(math.factorial(r))
    return out


def hermite_univariate(m: int, t: float) -> float:
    """Normalized Hermite polynomial ``h_m(t) = He_m(t) / sqrt(m!)``.

    Evaluated with the three-term recurrence ``He_{m+1} = t He_m - m He_{m-1}``.
    """
    if m < 0:
        raise PolyError(f"Hermite degree must be non-negative, got {m}")
    h_prev, h = 0.0, 1.0
    for j in range(m):
        h_prev, h = h, t * h - j * h_prev
    return h / math.sqrt(math.factorial(m))


def hermite_table(t: np.ndarray, m_max: int) -> np.ndarray:
    """Values ``h_0(t) .. h_{m_max}(t)`` stacked on a new trailing axis.

    The normalized recurrence ``sqrt(m+1) h_{m+1} = t h_m - sqrt(m) h_{m-1}``
    keeps every entry O(1) for moderate ``t``.
    """
    t = np.asarray(t, dtype=np.float64)
    out = np.empty(t.shape + (m_max + 1,), dtype=np.float64)
    out[..., 0] = 1.0
    if m_max >= 1:
        out[..., 1] = t
    for m in range(1, m_max):
        out[..., m + 1] = (t * out[..., m] - math.sqrt(m) * out[..., m - 1]) / math.sqrt(m + 1)
    return out


def power_table(t: np.ndarray, m_max: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    out = np.empty(t.shape + (m_max + 1,), dtype=np.float64)
    out[..., 0] = 1.0
    for m in range(m_max):
        out[..., m + 1] = out[..., m] * t
    return out


def basis_values(basis: str, X: np.ndarray, alphas: Sequence[MultiIndex]) -> np.ndarray:
    """Matrix of basis functions: entry ``[j, t]`` is ``b_{alphas[t]}(X[j])``.

    ``X`` has shape ``(N, n)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    N, n = X.shape
    if not alphas:
        return np.zeros((N, 0))
    A = np.asarray(alphas, dtype=np.intp).reshape(len(alphas), n)
    m_max = int(A.max()) if A.size else 0
    table = hermite_table(X, m_max) if basis == HERMITE else power_table(X, m_max)
    out = np.ones((N, len(alphas)))
    cols = np.arange(n)
    for i in cols:
        out *= table[:, i, :][:, A[:, i]]
    return out


# ---------------------------------------------------------------------------
# Poly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Poly:
    """Immutable sparse polynomial.

    Build instances with :meth:`from_dict` (or :meth:`constant`,
    :meth:`monomial`), which validate and canonicalize the terms.
    """

    n: int
    d: int
    basis: str
    terms: tuple[tuple[MultiIndex, float], ...]

    def __post_init__(self):
        if self.basis not in BASES:
            raise PolyError(f"unknown basis {self.basis!r}")
        if self.n < 1:
            raise PolyError("polynomials need at least one variable")
        if not 0 <= self.d <= DEGREE_CAP:
            raise PolyError(f"degree {self.d} outside [0, {DEGREE_CAP}]")
        prev = None
        for alpha, c in self.terms:
            if len(alpha) != self.n:
                raise PolyError(f"multi-index {alpha} has length != n={self.n}")
            if any(a < 0 for a in alpha):
                raise PolyError(f"negative exponent in {alpha}")
            if sum(alpha) > self.d:
                raise PolyError(f"multi-index {alpha} exceeds declared degree {self.d}")
            if c == 0.0 or not math.isfinite(c):
                raise PolyError(f"coefficient for {alpha} must be finite and nonzero")
            if prev is not None and not prev < alpha:
                raise PolyError("terms must be strictly sorted by multi-index")
            prev = alpha

    # construction --------------------------------------------------------

    @classmethod
    def from_dict(cls, n: int, d: int, basis: str, coeffs: Mapping[Sequence[int], float]) -> "Poly":
        merged: dict[MultiIndex, float] = {}
        for alpha, c in coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            merged[alpha] = merged.get(alpha, 0.0) + float(c)
        terms = tuple(sorted((a, c) for a, c in merged.items() if c != 0.0))
        return cls(n=n, d=d, basis=basis, terms=terms)

    @classmethod
    def constant(cls, n: int, c: float, basis: str = HERMITE, d: int = 0) -> "Poly":
        return cls.from_dict(n, d, basis, {(0,) * n: c})

    @classmethod
    def monomial(cls, alpha: Sequence[int], c: float = 1.0, basis: str = HERMITE, d: int | None = None) -> "Poly":
        alpha = tuple(alpha)
        return cls.from_dict(len(alpha), sum(alpha) if d is None else d, basis, {alpha: c})

    # accessors -----------------------------------------------------------

    @property
    def coeffs(self) -> dict[MultiIndex, float]:
        return dict(self.terms)

    def coeff(self, alpha: Sequence[int]) -> float:
        return self.coeffs.get(tuple(alpha), 0.0)

    @property
    def alphas(self) -> list[MultiIndex]:
        return [a for a, _ in self.terms]

    @property
    def values(self) -> np.ndarray:
        return np.array([c for _, c in self.terms], dtype=np.float64)

    @property
    def effective_degree(self) -> int:
        return max((sum(a) for a, _ in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def with_terms(self, coeffs: Mapping[MultiIndex, float], basis: str | None = None) -> "Poly":
        return Poly.from_dict(self.n, self.d, basis or self.basis, coeffs)

    def scale(self, c: float) -> "Poly":
        return self.with_terms({a: c * v for a, v in self.terms})

    def add_constant(self, c: float) -> "Poly":
        coeffs = self.coeffs
        zero = (0,) * self.n
        coeffs[zero] = coeffs.get(zero, 0.0) + c
        return self.with_terms(coeffs)

    # evaluation ----------------------------------------------------------

    def __call__(self, x) -> float:
        return eval_poly(self, x)


def eval_poly(p: Poly, x: Sequence[float]) -> float:
    """Value of ``p`` at one point."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.n,):
        raise PolyError(f"point has shape {x.shape}, expected ({p.n},)")
    return float(eval_many(p, x[None, :])[0])


def eval_many(p: Poly, X: np.ndarray) -> np.ndarray:
    """Vectorized evaluation at the rows of ``X`` (shape ``(N, n)``)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != p.n:
        raise PolyError(f"points have shape {X.shape}, expected (N, {p.n})")
    if p.is_zero():
        return np.zeros(X.shape[0])
    alphas, c = p.alphas, p.values
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], _CHUNK):
        block = X[start:start + _CHUNK]
        out[start:start + _CHUNK] = basis_values(p.basis, block, alphas) @ c
    return out


# ---------------------------------------------------------------------------
# basis change
# ---------------------------------------------------------------------------


def _convert(p: Poly, table, target: str) -> Poly:
    if p.d > DEGREE_CAP:
        raise PolyError(f"degree {p.d} exceeds conversion cap {DEGREE_CAP}")
    acc: dict[MultiIndex, float] = {}
    mass: dict[MultiIndex, float] = {}
    for alpha, c in p.terms:
        factors = [sorted(table(a).items()) for a in alpha]
        for combo in itertools.product(*factors):
            key = tuple(k for k, _ in combo)
            v = c
            for _, w in combo:
                v *= w
            acc[key] = acc.get(key, 0.0) + v
            mass[key] = mass.get(key, 0.0) + abs(v)
    # Entries that cancel down to rounding noise are exact zeros.
    eps = 64 * np.finfo(np.float64).eps
    clean = {k: v for k, v in acc.items() if abs(v) > eps * mass[k]}
    return Poly.from_dict(p.n, p.d, target, clean)


def to_standard(p: Poly) -> Poly:
    if p.basis == STANDARD:
        return p
    return _convert(p, hermite_to_power_table, STANDARD)


def to_hermite(p: Poly) -> Poly:
    if p.basis == HERMITE:
        return p
    return _convert(p, power_to_hermite_table, HERMITE)


def in_basis(p: Poly, basis: str) -> Poly:
    return to_hermite(p) if basis == HERMITE else to_standard(p)


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def _derivative_factor(basis: str, beta: MultiIndex, alpha: MultiIndex) -> float:
    """Coefficient of the basis term ``beta - alpha`` in ``d^alpha b_beta``.

    Hermite: ``sqrt(beta! / (beta - alpha)!)``; standard: ``beta! / (beta - alpha)!``.
    """
    ratio = 1
    for b, a in zip(beta, alpha):
        ratio *= math.factorial(b) // math.factorial(b - a)
    return math.sqrt(ratio) if basis == HERMITE else float(ratio)


def derivative(p: Poly, alpha: Sequence[int]) -> Poly:
    """Partial derivative ``d^alpha p`` in the same basis as ``p``."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != p.n or any(a < 0 for a in alpha):
        raise PolyError(f"invalid derivative multi-index {alpha} for n={p.n}")
    out = {}
    for beta, c in p.terms:
        if all(b >= a for b, a in zip(beta, alpha)):
            gamma = tuple(b - a for b, a in zip(beta, alpha))
            out[gamma] = c * _derivative_factor(p.basis, beta, alpha)
    return Poly.from_dict(p.n, max(p.d - sum(alpha), 0), p.basis, out)


def partials_matrix(p: Poly, orders: Iterable[int]) -> tuple[list[MultiIndex], dict[int, np.ndarray]]:
    """Linear maps from basis values to all partial derivatives.

    Returns ``(gammas, mats)`` such that for every point set ``X``,
    ``basis_values(p.basis, X, gammas) @ mats[k]`` has one column per
    multi-index ``alpha`` with ``|alpha| = k`` (in :func:`multi_indices`
    order) holding ``d^alpha p(X)``.
    """
    gammas = sorted({tuple(b - a for b, a in zip(beta, alpha))
                     for beta, _ in p.terms
                     for k in orders
                     for alpha in multi_indices(p.n, k, exact=k)
                     if all(b >= a for b, a in zip(beta, alpha))})
    gidx = {g: j for j, g in enumerate(gammas)}
    mats = {}
    for k in orders:
        alphas = multi_indices(p.n, k, exact=k)
        M = np.zeros((len(gammas), len(alphas)))
        for col, alpha in enumerate(alphas):
            for beta, c in p.terms:
                if all(b >= a for b, a in zip(beta, alpha)):
                    gamma = tuple(b - a for b, a in zip(beta, alpha))
                    M[gidx[gamma], col] += c * _derivative_factor(p.basis, beta, alpha)
        mats[k] = M
    return gammas, mats


def partials_many(p: Poly, X: np.ndarray, k: int) -> np.ndarray:
    """``(N, #{|alpha| = k})`` array of every order-``k`` partial of ``p`` at ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    gammas, mats = partials_matrix(p, [k])
    if not gammas:
        return np.zeros((X.shape[0], mats[k].shape[1]))
    out = np.empty((X.shape[0], mats[k].shape[1]))
    for start in range(0, X.shape[0], _CHUNK):
        block = X[start:start + _CHUNK]
        out[start:start + _CHUNK] = basis_values(p.basis, block, gammas) @ mats[k]
    return out


def gradient_spectrum_many(p: Poly, X: np.ndarray) -> np.ndarray:
    """Rows of ``||grad^k p(x)||`` for ``k = 0..p.d`` at each row of ``X``.

    The norm sums squares over multi-indices ``|alpha| = k``, without the
    multiplicity an ordered derivative tensor would carry.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != p.n:
        raise PolyError(f"points have shape {X.shape}, expected (N, {p.n})")
    orders = list(range(p.d + 1))
    gammas, mats = partials_matrix(p, orders)
    out = np.zeros((X.shape[0], p.d + 1))
    if not gammas:
        return out
    for start in range(0, X.shape[0], _CHUNK):
        B = basis_values(p.basis, X[start:start + _CHUNK], gammas)
        for k in orders:
            vals = B @ mats[k]
            out[start:start + _CHUNK, k] = np.sqrt(np.einsum("ij,ij->i", vals, vals))
    return out


def gradient_spectrum(p: Poly, x: Sequence[float]) -> np.ndarray:
    """``[||grad^0 p(x)||, ..., ||grad^d p(x)||]`` at a single point."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.n,):
        raise PolyError(f"point has shape {x.shape}, expected ({p.n},)")
    return gradient_spectrum_many(p, x[None, :])[0]


# ---------------------------------------------------------------------------
# Gaussian-space operators and norms
# ---------------------------------------------------------------------------


def _require_hermite(p: Poly, what: str) -> None:
    if p.basis != HERMITE:
        raise PolyError(f"{what} needs a Hermite-basis polynomial; convert with to_hermite first")


def noise_operator(p: Poly, rho: float) -> Poly:
    """``U_rho``: scales each Hermite coefficient by ``rho ** |alpha|``.

    ``rho > 1`` is allowed and acts by the same diagonal formula.
    """
    _require_hermite(p, "noise_operator")
    if rho < 0:
        raise PolyError(f"rho must be >= 0, got {rho}")
    return p.with_terms({a: c * rho ** sum(a) for a, c in p.terms})


def exact_l2_norm(p: Poly) -> float:
    """``E[p(x)^2] ** 0.5`` under the standard Gaussian, from orthonormality."""
    _require_hermite(p, "exact_l2_norm")
    return math.sqrt(math.fsum(c * c for _, c in p.terms))


def hypercontractive_qnorm_bound(p: Poly, q: int) -> float:
    """Upper bound ``||U_{sqrt(q-1)} p||_2`` on the Gaussian q-norm (q even)."""
    _require_hermite(p, "hypercontractive_qnorm_bound")
    if q < 2 or q % 2:
        raise PolyError(f"q must be an even integer >= 2, got {q}")
    return math.sqrt(math.fsum((q - 1) ** sum(a) * c * c for a, c in p.terms))


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def poly_to_json(p: Poly) -> dict:
    return {
        "n": p.n,
        "d": p.d,
        "basis": p.basis,
        "terms": [{"alpha": list(a), "c": c} for a, c in p.terms],
    }


def poly_from_json(obj) -> Poly:
    """Parse the JSON polynomial format; rejects unsorted or duplicate terms."""
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    try:
        n, d, basis, raw = int(obj["n"]), int(obj["d"]), obj["basis"], obj["terms"]
    except (KeyError, TypeError, ValueError) as exc:
        raise PolyError(f"malformed polynomial JSON: {exc}") from exc
    if basis not in BASES:
        raise PolyError(f"unknown basis {basis!r}")
    terms = []
    for t in raw:
        try:
            alpha = tuple(int(a) for a in t["alpha"])
            c = float(t["c"])
        except (KeyError, TypeError, ValueError) as exc:
            raise PolyError(f"malformed term {t!r}") from exc
        terms.append((alpha, c))
    alphas = [a for a, _ in terms]
    if len(set(alphas)) != len(alphas):
        raise PolyError("duplicate multi-index in terms")
    if alphas != sorted(alphas):
        raise PolyError("terms must be sorted lexicographically by alpha")
    return Poly(n=n, d=d, basis=basis, terms=tuple((a, c) for a, c in terms if c != 0.0))


def dumps(p: Poly) -> str:
    return json.dumps(poly_to_json(p), indent=1)


def loads(text: str) -> Poly:
    return poly_from_json(json.loads(text))
