"""Moment-matching Gaussian samplers and the bucketed generator.

A :class:`MomentSampler` draws vectors whose coordinates follow an M-node
Gauss-Hermite law, which matches every moment of N(0, 1) up to degree
``2M - 1``.  Coordinates are either fully independent or produced by a
random degree-``k`` polynomial over a prime field.  All randomness comes
from a stateless counter-based hash, so a draw depends only on
``(master_seed, stream_index, counter)``.

The generator output is ``Z = L^{-1/2} * sum_{i<L} Y_i`` with each ``Y_i`` a
``d*R``-moment-matching vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .poly import hermite_table

INDEPENDENT = "independent"
KWISE = "kwise"
MAX_NODES = 32

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


class SamplerError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _gauss_hermite(M: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    # Golub-Welsch start, Newton polish on h_M, Christoffel weights.
    off = np.sqrt(np.arange(1, M, dtype=np.float64))
    J = np.diag(off, 1) + np.diag(off, -1)
    x = np.linalg.eigvalsh(J)
    for _ in range(3):
        t = hermite_table(x, M)
        x = x - t[:, M] / (math.sqrt(M) * t[:, M - 1])
    x = 0.5 * (x - x[::-1])
    if M % 2:
        x[M // 2] = 0.0
    w = 1.0 / (M * hermite_table(x, M - 1)[:, M - 1] ** 2)
    w = 0.5 * (w + w[::-1])
    w /= math.fsum(w)
    return tuple(x.tolist()), tuple(w.tolist())


def gauss_hermite_nodes(M: int) -> list[tuple[float, float]]:
    """M-point Gauss-Hermite rule for the standard normal density.

    Returns ``(node, weight)`` pairs in ascending node order; weights sum to
    one and the rule integrates polynomials of degree ``<= 2M - 1`` exactly.
    """
    if not 1 <= M <= MAX_NODES:
        raise SamplerError(f"node count must lie in [1, {MAX_NODES}], got {M}")
    xs, ws = _gauss_hermite(M)
    return list(zip(xs, ws))


def nodes_for_order(k: int) -> int:
    """Smallest node count whose rule matches ``k`` moments."""
    return max(1, math.ceil((k + 1) / 2))


def gaussian_moment(m: int) -> float:
    """``E[g^m]`` for ``g ~ N(0, 1)``: 0 for odd ``m``, ``(m-1)!!`` otherwise."""
    if m % 2:
        return 0.0
    out = 1
    for j in range(m - 1, 0, -2):
        out *= j
    return float(out)


# ---------------------------------------------------------------------------
# counter-based hashing
# ---------------------------------------------------------------------------


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def counter_hash(seed: int, stream, counter) -> np.ndarray:
    """64-bit hash of ``(seed, stream, counter)``; broadcasts over arrays."""
    with np.errstate(over="ignore"):
        s = _mix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))
        a = _mix64(s ^ np.asarray(stream, dtype=np.uint64))
        return _mix64(a ^ (np.asarray(counter, dtype=np.uint64) * np.uint64(0xD1B54A32D192ED03)))


def counter_uniform(seed: int, stream, counter) -> np.ndarray:
    """Uniform doubles in [0, 1) with 53 random bits."""
    h = counter_hash(seed, stream, counter)
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _block_counts(weights: np.ndarray, prime: int) -> np.ndarray:
    """Largest-remainder rounding of ``weights * prime`` to integers summing to ``prime``."""
    raw = weights * prime
    counts = np.floor(raw).astype(np.int64)
    short = prime - int(counts.sum())
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def _is_prime(m: int) -> bool:
    if m < 2:
        return False
    for f in range(2, int(math.isqrt(m)) + 1):
        if m % f == 0:
            return False
    return True


@dataclass(frozen=True)
class MomentSampler:
    """Discrete ``k``-moment-matching law on R^n.

    In ``kwise`` mode the coordinate at index ``i`` is the node whose block
    of field elements contains ``P(i) mod prime`` for a uniformly random
    polynomial ``P`` of degree ``k``; each node owns a contiguous block of
    size ``round(weight * prime)``.
    """

    n: int
    k: int
    master_seed: int = 0
    mode: str = INDEPENDENT
    prime: int | None = None
    node_count: int | None = None
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise SamplerError("dimension must be >= 1")
        if self.k < 0:
            raise SamplerError("moment order must be >= 0")
        M = self.node_count or nodes_for_order(self.k)
        if 2 * M - 1 < self.k:
            raise SamplerError(f"{M} nodes cannot match {self.k} moments")
        object.__setattr__(self, "node_count", M)
        table = gauss_hermite_nodes(M)
        object.__setattr__(self, "nodes", np.array([v for v, _ in table]))
        object.__setattr__(self, "weights", np.array([w for _, w in table]))
        if self.mode == KWISE:
            p = self.prime
            if p is None or not _is_prime(p):
                raise SamplerError(f"kwise mode needs a prime modulus, got {p}")
            if p < self.n:
                raise SamplerError(f"prime {p} is smaller than the dimension {self.n}")
            if np.any(_block_counts(self.weights, p) == 0):
                raise SamplerError(f"prime {p} too small to give every one of {M} nodes a block")
            if p >= 2**31:
                raise SamplerError("prime modulus must be below 2**31")
        elif self.mode != INDEPENDENT:
            raise SamplerError(f"unknown sampler mode {self.mode!r}")

    # law -----------------------------------------------------------------

    @property
    def block_counts(self) -> np.ndarray:
        return _block_counts(self.weights, self.prime)

    @property
    def realized_weights(self) -> np.ndarray:
        """Per-node probabilities actually produced by the sampler."""
        if self.mode == KWISE:
            return self.block_counts / self.prime
        return self.weights

    def moment_residuals(self, max_order: int | None = None) -> list[tuple[int, float, float]]:
        """``(m, realized moment, residual)`` for ``m = 0..max_order`` (default ``k``)."""
        top = self.k if max_order is None else max_order
        w = self.realized_weights
        out = []
        for m in range(top + 1):
            got = math.fsum(w * self.nodes**m)
            out.append((m, got, got - gaussian_moment(m)))
        return out

    # drawing -------------------------------------------------------------

    def field_coefficients(self, streams: np.ndarray) -> np.ndarray:
        """Degree-``k`` field polynomial coefficients, one row per stream."""
        streams = np.asarray(streams, dtype=np.uint64)
        ctr = np.arange(self.k + 1, dtype=np.uint64)
        h = counter_hash(self.master_seed, streams[:, None], ctr[None, :])
        return (h % np.uint64(self.prime)).astype(np.int64)

    def node_indices_from_field(self, coeffs: np.ndarray) -> np.ndarray:
        """Node index of every coordinate given field-polynomial coefficients."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.int64))
        p = self.prime
        pts = np.arange(self.n, dtype=np.int64)
        vals = np.zeros((coeffs.shape[0], self.n), dtype=np.int64)
        for j in range(coeffs.shape[1] - 1, -1, -1):
            vals = (vals * pts[None, :] + coeffs[:, j:j + 1]) % p
        edges = np.cumsum(self.block_counts)
        return np.searchsorted(edges, vals, side="right")

    def node_indices(self, streams) -> np.ndarray:
        streams = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
        if self.mode == KWISE:
            return self.node_indices_from_field(self.field_coefficients(streams))
        u = counter_uniform(self.master_seed, streams[:, None], np.arange(self.n, dtype=np.uint64)[None, :])
        cum = np.cumsum(self.weights)
        return np.minimum(np.searchsorted(cum, u, side="right"), self.node_count - 1)

    def sample_many(self, streams) -> np.ndarray:
        """One vector per stream index, shape ``(len(streams), n)``."""
        return self.nodes[self.node_indices(streams)]

    def sample(self, stream_index: int) -> np.ndarray:
        return self.sample_many([stream_index])[0]


def sample_moment_vector(s: MomentSampler, stream_index: int) -> np.ndarray:
    return s.sample(stream_index)


# ---------------------------------------------------------------------------
# the generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrgConfig:
    n: int
    d: int
    L: int
    R: int
    master_seed: int = 0
    mode: str = INDEPENDENT
    prime: int | None = None

    def __post_init__(self):
        if self.L < 1:
            raise SamplerError(f"bucket count L must be >= 1, got {self.L}")
        if self.R < 1:
            raise SamplerError(f"R must be >= 1, got {self.R}")
        if self.d < 1:
            raise SamplerError(f"degree must be >= 1, got {self.d}")
        if nodes_for_order(self.k) > MAX_NODES:
            raise SamplerError(f"k = d*R = {self.k} needs more than {MAX_NODES} nodes")

    @property
    def k(self) -> int:
        return self.d * self.R

    @property
    def lam(self) -> float:
        return 1.0 / self.L

    def sampler(self) -> MomentSampler:
        return MomentSampler(self.n, self.k, self.master_seed, self.mode, self.prime)


def prg_many(cfg: PrgConfig, seed_indices, sampler: MomentSampler | None = None) -> np.ndarray:
    """Generator outputs for each seed index, shape ``(len(seed_indices), n)``.

    Bucket ``i`` of seed index ``s`` reads sampler stream ``s * L + i``.
    """
    s = sampler or cfg.sampler()
    idx = np.atleast_1d(np.asarray(seed_indices, dtype=np.uint64))
    L = np.uint64(cfg.L)
    total = np.zeros((len(idx), cfg.n))
    with np.errstate(over="ignore"):
        for i in range(cfg.L):
            total += s.sample_many(idx * L + np.uint64(i))
    return total / math.sqrt(cfg.L)


def prg_output(cfg: PrgConfig, seed_index: int) -> np.ndarray:
    return prg_many(cfg, [seed_index])[0]


@dataclass(frozen=True)
class SeedAccount:
    bits_per_Yi: int
    total_bits: int
    seed_optimal: bool


def seed_accounting(cfg: PrgConfig) -> SeedAccount:
    """Seed bits consumed by the generator (reported, not enforced)."""
    if cfg.mode == KWISE:
        per = (cfg.k + 1) * math.ceil(math.log2(cfg.prime))
        return SeedAccount(per, cfg.L * per, True)
    M = nodes_for_order(cfg.k)
    per = cfg.n * math.ceil(math.log2(M)) if M > 1 else 0
    return SeedAccount(per, cfg.L * per, False)
