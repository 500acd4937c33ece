"""Gaussian restrictions, hypervariance, concentration and the mollifier.

All routines take Hermite-basis polynomials unless noted otherwise and are
pure functions of their arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .poly import (
    HERMITE,
    Poly,
    PolyError,
    basis_values,
    gradient_spectrum,
    gradient_spectrum_many,
    noise_operator,
    partials_many,
    to_hermite,
    to_standard,
)


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam < 1.0:
        raise PolyError(f"lambda must lie in (0, 1), got {lam}")


def _require_hermite(p: Poly) -> None:
    if p.basis != HERMITE:
        raise PolyError("expected a Hermite-basis polynomial")


@dataclass(frozen=True)
class RestrictionParams:
    lam: float
    x: tuple[float, ...]

    def __post_init__(self):
        _check_lambda(self.lam)
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))


# ---------------------------------------------------------------------------
# restrictions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RestrictionMap:
    """Restriction of a fixed ``p`` at a fixed ``lam`` as a linear map in ``x``.

    The Hermite coefficients of ``y -> p(sqrt(1-lam) x + sqrt(lam) y)`` are
    ``basis_values(x, inputs) @ matrix``, one column per entry of ``outputs``.
    """

    n: int
    d: int
    inputs: tuple
    outputs: tuple
    matrix: np.ndarray

    def coefficients(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n:
            raise PolyError(f"points have shape {X.shape}, expected (N, {self.n})")
        return basis_values(HERMITE, X, list(self.inputs)) @ self.matrix

    def at(self, x: Sequence[float]) -> Poly:
        row = self.coefficients(np.asarray(x, dtype=np.float64)[None, :])[0]
        return Poly.from_dict(self.n, self.d, HERMITE, dict(zip(self.outputs, row)))


def _sub_indices(beta):
    if not beta:
        yield ()
        return
    for a in range(beta[0] + 1):
        for rest in _sub_indices(beta[1:]):
            yield (a,) + rest


def restriction_map(p: Poly, lam: float) -> RestrictionMap:
    """Build the linear map behind :func:`restrict` for every center ``x``.

    A term ``beta`` contributes to output ``alpha <= beta`` through
    ``h_gamma(x)`` with ``gamma = beta - alpha`` and weight
    ``(1-lam)^{|gamma|/2} lam^{|alpha|/2} sqrt(beta! / (gamma! alpha!))``.
    Keeping the powers of ``lam`` and ``1-lam`` separate avoids the huge
    and tiny intermediate factors of the ``lam/(1-lam)`` form.
    """
    _require_hermite(p)
    _check_lambda(lam)
    entries = []
    for beta, c in p.terms:
        for alpha in _sub_indices(beta):
            gamma = tuple(b - a for b, a in zip(beta, alpha))
            w = math.sqrt(_multinomial(beta, alpha))
            w *= (1.0 - lam) ** (sum(gamma) / 2) * lam ** (sum(alpha) / 2)
            entries.append((gamma, alpha, c * w))
    inputs = tuple(sorted({g for g, _, _ in entries}))
    outputs = tuple(sorted({a for _, a, _ in entries}))
    gi = {g: i for i, g in enumerate(inputs)}
    ai = {a: i for i, a in enumerate(outputs)}
    M = np.zeros((len(inputs), len(outputs)))
    for g, a, v in entries:
        M[gi[g], ai[a]] += v
    return RestrictionMap(p.n, p.d, inputs, outputs, M)


def _multinomial(beta, alpha) -> int:
    out = 1
    for b, a in zip(beta, alpha):
        out *= math.comb(b, a)
    return out


def restrict(p: Poly, params: RestrictionParams) -> Poly:
    """Gaussian restriction ``y -> p(sqrt(1-lam) x + sqrt(lam) y)``."""
    if len(params.x) != p.n:
        raise PolyError(f"restriction center has length {len(params.x)}, expected {p.n}")
    return restriction_map(p, params.lam).at(params.x)


def phi(p: Poly, lam: float) -> Poly:
    """``z -> (U_{sqrt(1-lam)} p)(z / sqrt(1-lam))`` as an explicit polynomial.

    Noise is applied on Hermite coefficients, the rescaling on monomial
    coefficients.
    """
    _require_hermite(p)
    _check_lambda(lam)
    g = to_standard(noise_operator(p, math.sqrt(1.0 - lam)))
    rescaled = g.with_terms({a: c * (1.0 - lam) ** (-sum(a) / 2) for a, c in g.terms})
    return to_hermite(rescaled)


# ---------------------------------------------------------------------------
# hypervariance and concentration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypervarianceReport:
    hypervariance: float
    normalized: float
    R: float


def hypervariance(p: Poly, R: float) -> HypervarianceReport:
    """``sum_{alpha != 0} c_alpha^2 R^{2|alpha|}`` and its ratio to ``c_0^2``.

    ``normalized`` is ``inf`` when the constant coefficient vanishes.
    """
    _require_hermite(p)
    if R < 1:
        raise PolyError(f"R must be >= 1, got {R}")
    zero = (0,) * p.n
    hv = math.fsum(c * c * R ** (2 * sum(a)) for a, c in p.terms if a != zero)
    c0 = p.coeff(zero)
    normalized = math.inf if c0 == 0.0 else hv / (c0 * c0)
    return HypervarianceReport(hv, normalized, R)


def normalized_hypervariance_rows(coeffs: np.ndarray, alphas: Sequence, R: float) -> np.ndarray:
    """Row-wise normalized hypervariance for a coefficient matrix.

    ``coeffs[j, t]`` is the coefficient of ``alphas[t]`` in polynomial ``j``.
    """
    degs = np.array([sum(a) for a in alphas])
    weights = np.where(degs == 0, 0.0, float(R) ** (2 * degs))
    hv = (coeffs * coeffs) @ weights
    const = coeffs[:, degs == 0].sum(axis=1) if np.any(degs == 0) else np.zeros(len(coeffs))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = hv / (const * const)
    out[const == 0.0] = np.inf
    return out


@dataclass(frozen=True)
class SignFixedBound:
    applies: bool
    bound: float


def sign_fixed_probability_bound(p: Poly, q: int) -> SignFixedBound:
    """Concentration bound: ``P(sign p(y) != sign c_0) <= 2^-q`` if ``H_{sqrt q}(p) <= 1/4``."""
    if q < 2 or q % 2:
        raise PolyError(f"q must be an even integer >= 2, got {q}")
    h = hypervariance(p, math.sqrt(q)).normalized
    if h <= 0.25:
        return SignFixedBound(True, 2.0 ** -q)
    return SignFixedBound(False, 1.0)


def deviation_moment_bound(p: Poly, x: Sequence[float], lam: float, k: int, q: int) -> float:
    """Upper bound on the ``q/2``-norm of the order-``k`` derivative deviation.

    Returns ``sum_{t=k+1}^{d} (lam d q)^{t-k} ||grad^t phi(x)||^2`` with ``d``
    the declared degree of ``p``.  ``k = d`` gives the empty sum.
    """
    _check_lambda(lam)
    if q < 2 or q % 2:
        raise PolyError(f"q must be an even integer >= 2, got {q}")
    if not 0 <= k <= p.d:
        raise PolyError(f"k must lie in [0, {p.d}], got {k}")
    d = p.d
    spec = gradient_spectrum(phi(p, lam), x)
    return math.fsum((lam * d * q) ** (t - k) * spec[t] ** 2 for t in range(k + 1, d + 1))


def deviation_samples(p: Poly, x: Sequence[float], lam: float, k: int, Y: np.ndarray) -> np.ndarray:
    """``D(y) = ||grad^k p(x + sqrt(lam) y) - grad^k phi(x)||^2`` for each row of ``Y``."""
    x = np.asarray(x, dtype=np.float64)
    center = partials_many(phi(p, lam), x[None, :], k)[0]
    vals = partials_many(p, x[None, :] + math.sqrt(lam) * np.asarray(Y), k)
    diff = vals - center
    return np.einsum("ij,ij->i", diff, diff)


# ---------------------------------------------------------------------------
# mollifier and well-behavedness
# ---------------------------------------------------------------------------


def bump(t):
    """Smooth step: 0 for ``t <= 0``, 1 for ``t >= 1``, ``e*exp(1/((t-1)^2-1))`` between."""
    t = np.asarray(t, dtype=np.float64)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    out[inside] = math.e * np.exp(1.0 / ((ti - 1.0) ** 2 - 1.0))
    return out if out.ndim else float(out)


def _mollify_spectra(spec: np.ndarray, eps: float) -> np.ndarray:
    num = spec[:, :-1] ** 2
    den = spec[:, 1:] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.log(num) - np.log(16.0 * eps * eps * den)
    # No higher-order mass: treat the ratio as +inf.
    t = np.where(den == 0.0, np.inf, t)
    return np.prod(bump(t), axis=1) if spec.shape[1] > 1 else np.ones(len(spec))


def mollifier(p: Poly, x: Sequence[float], eps: float) -> float:
    """Soft well-behavedness test ``g(x)`` in ``[0, 1]``; works in either basis."""
    if eps <= 0:
        raise PolyError(f"eps must be positive, got {eps}")
    return float(_mollify_spectra(gradient_spectrum(p, x)[None, :], eps)[0])


def mollifier_many(p: Poly, X: np.ndarray, eps: float) -> np.ndarray:
    if eps <= 0:
        raise PolyError(f"eps must be positive, got {eps}")
    return _mollify_spectra(gradient_spectrum_many(p, X), eps)


@dataclass(frozen=True)
class WellBehaved:
    ok: bool
    worst_k: int | None


def is_well_behaved(p: Poly, x: Sequence[float], eps: float) -> WellBehaved:
    """Checks ``||grad^{k+1} p(x)|| <= ||grad^k p(x)|| / eps`` for every ``k < d``.

    ``worst_k`` is the largest violating ``k``.
    """
    if eps <= 0:
        raise PolyError(f"eps must be positive, got {eps}")
    spec = gradient_spectrum(p, x)
    violated = [k for k in range(p.d) if eps * spec[k + 1] > spec[k]]
    if not violated:
        return WellBehaved(True, None)
    return WellBehaved(False, max(violated))
