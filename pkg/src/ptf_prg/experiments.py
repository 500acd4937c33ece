"""Monte Carlo experiments and the PTF test corpus.

Each ``exp_*`` function is deterministic given its arguments: Gaussian
samples come from ``numpy.random.default_rng([seed, *tag])`` and generator
draws from the counter-based sampler streams.  Results are returned as
:class:`ExperimentReport` rows ready for :func:`write_csv`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import gaussian as ga
from .poly import (
    HERMITE,
    STANDARD,
    Poly,
    basis_values,
    eval_many,
    gradient_spectrum_many,
    multi_indices,
    partials_many,
    to_hermite,
)
from .prg import MomentSampler, PrgConfig, counter_hash, prg_many, seed_accounting

Z95 = 1.96
PARAM_COLUMNS = ("n", "d", "lambda", "eps", "delta", "L", "R", "trials", "seed")


def ptf_sign(v):
    """1 where ``v >= 0`` else 0."""
    return (np.asarray(v) >= 0).astype(np.float64)


def freq_ci(phat: float, trials: int) -> float:
    return Z95 * math.sqrt(max(phat * (1.0 - phat), 0.0) / trials)


def mean_ci(values: np.ndarray) -> float:
    return Z95 * float(np.std(values)) / math.sqrt(len(values))


def pairwise_mean(values: np.ndarray) -> float:
    # numpy's sum is pairwise for contiguous float arrays.
    values = np.ascontiguousarray(values, dtype=np.float64)
    return float(np.sum(values) / len(values))


def quantile_with_ci(values: np.ndarray, level: float) -> tuple[float, float]:
    """Type-7 quantile and the half-width of its 95% order-statistic interval."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    N = len(values)
    est = float(np.quantile(values, level))
    spread = Z95 * math.sqrt(level * (1.0 - level) / N)
    lo = float(np.quantile(values, max(level - spread, 0.0)))
    hi = float(np.quantile(values, min(level + spread, 1.0)))
    if math.isinf(lo) or math.isinf(hi):
        return est, math.inf
    return est, max(hi - lo, 0.0) / 2.0


def gaussian_rng(seed: int, *tag: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *[int(t) for t in tag]])


def derived_seed(seed: int, *tag: int) -> int:
    """64-bit seed for a sub-task, stable across runs and worker counts."""
    h = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    for t in tag:
        h = counter_hash(int(h), t, 0x5EED)
    return int(h)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    experiment: str
    params: dict
    estimate: float
    ci_radius: float
    aux: list = field(default_factory=list)

    def aux_dict(self) -> dict:
        return dict(self.aux)

    def __getitem__(self, name):
        return self.aux_dict()[name]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(reports: Sequence[ExperimentReport], out) -> None:
    """Write reports with a shared header; ``out`` is a path or text stream."""
    width = max((len(r.aux) for r in reports), default=0)
    header = ["experiment", *PARAM_COLUMNS, "estimate", "ci_radius"]
    for j in range(1, width + 1):
        header += [f"aux{j}_name", f"aux{j}_value"]
    rows = []
    for r in reports:
        row = [r.experiment, *(fmt(r.params.get(c)) for c in PARAM_COLUMNS), fmt(r.estimate), fmt(r.ci_radius)]
        for name, value in r.aux:
            row += [name, fmt(value)]
        row += [""] * (len(header) - len(row))
        rows.append(row)
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as fh:
            _write_rows(fh, header, rows)
    else:
        _write_rows(out, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def csv_text(reports: Sequence[ExperimentReport]) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    return buf.getvalue()


def _params(p: Poly, seed: int, trials: int, **extra) -> dict:
    out = {"n": p.n, "d": p.d, "trials": trials, "seed": seed}
    out.update(extra)
    return out


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def max_growth_ratio(spectra: np.ndarray) -> np.ndarray:
    """Row-wise ``max_k ||grad^k|| / ||grad^{k-1}||`` with ``0/0 = 0`` and ``c/0 = inf``."""
    if spectra.shape[1] < 2:
        return np.zeros(len(spectra))
    num, den = spectra[:, 1:], spectra[:, :-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    r = np.where(num == 0.0, 0.0, np.where(den == 0.0, np.inf, r))
    return r.max(axis=1)


def exp_slow_growth(p: Poly, delta: float, trials: int, seed: int = 0, threshold: float | None = None,
                    tag: Sequence[int] = ()) -> ExperimentReport:
    """Quantile of the largest consecutive gradient-norm ratio at Gaussian points.

    ``threshold`` defaults to ``d**3 / delta``.
    """
    if trials < 100:
        raise ValueError("slow-growth needs at least 100 trials")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    X = gaussian_rng(seed, 1, *tag).standard_normal((trials, p.n))
    ratios = max_growth_ratio(gradient_spectrum_many(p, X))
    est, ci = quantile_with_ci(ratios, 1.0 - delta)
    thr = p.d**3 / delta if threshold is None else threshold
    frac = float(np.mean(ratios > thr))
    return ExperimentReport(
        "slow_growth", _params(p, seed, trials, delta=delta), est, ci,
        [("threshold", thr), ("frac_exceeding", frac), ("frac_ci", freq_ci(frac, trials))],
    )


def exp_restriction_fixing(p: Poly, lam: float, eps: float, outer_trials: int, inner_trials: int,
                           seed: int = 0, tag: Sequence[int] = ()) -> ExperimentReport:
    """Fraction of centers ``x`` whose restricted PTF is ``(1-eps)``-fixed.

    One inner Gaussian sample set is shared by all centers.
    """
    h = to_hermite(p)
    rmap = ga.restriction_map(h, lam)
    rng = gaussian_rng(seed, 2, *tag)
    X = rng.standard_normal((outer_trials, p.n))
    Y = rng.standard_normal((inner_trials, p.n))
    B = basis_values(HERMITE, Y, list(rmap.outputs)).T.copy()
    best = np.empty(outer_trials)
    step = max(1, (1 << 22) // inner_trials)
    for start in range(0, outer_trials, step):
        C = rmap.coefficients(X[start:start + step])
        ones = np.mean(C @ B >= 0.0, axis=1)
        best[start:start + step] = np.maximum(ones, 1.0 - ones)
    frac = float(np.mean(best > 1.0 - eps))
    return ExperimentReport(
        "restriction_fixing", _params(p, seed, outer_trials, **{"lambda": lam, "eps": eps}),
        frac, freq_ci(frac, outer_trials),
        [("inner_trials", inner_trials), ("mean_max_prob", pairwise_mean(best))],
    )


def exp_hypervariance(p: Poly, lam: float, R: float, trials: int, seed: int = 0,
                      tag: Sequence[int] = ()) -> ExperimentReport:
    """Quantiles of the normalized hypervariance of random restrictions."""
    h = to_hermite(p)
    rmap = ga.restriction_map(h, lam)
    X = gaussian_rng(seed, 3, *tag).standard_normal((trials, p.n))
    H = ga.normalized_hypervariance_rows(rmap.coefficients(X), rmap.outputs, R)
    med, ci = quantile_with_ci(H, 0.5)
    return ExperimentReport(
        "hypervariance", _params(p, seed, trials, **{"lambda": lam, "R": R}), med, ci,
        [("q90", float(np.quantile(H, 0.9))), ("q99", float(np.quantile(H, 0.99)))],
    )


def exp_anticoncentration(p: Poly, eps: float, trials: int, seed: int = 0,
                          tag: Sequence[int] = ()) -> ExperimentReport:
    """Frequency of ``|p(x)| <= eps * ||grad p(x)||`` under the Gaussian."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    X = gaussian_rng(seed, 4, *tag).standard_normal((trials, p.n))
    vals = np.abs(eval_many(p, X))
    grads = np.sqrt(np.sum(partials_many(p, X, 1) ** 2, axis=1))
    freq = float(np.mean(vals <= eps * grads))
    return ExperimentReport("anticoncentration", _params(p, seed, trials, eps=eps), freq, freq_ci(freq, trials))


def exp_fooling_error(p: Poly, cfg: PrgConfig, prg_draws: int, mc_draws: int, seed: int = 0,
                      tag: Sequence[int] = ()) -> ExperimentReport:
    """Two-sided gap between ``Pr[p >= 0]`` under the generator and the Gaussian."""
    if prg_draws < 10_000 or mc_draws < 10_000:
        raise ValueError("fooling error needs at least 1e4 draws on each side")
    sampler = cfg.sampler()
    prg_hits = 0.0
    for start in range(0, prg_draws, 1 << 16):
        idx = np.arange(start, min(start + (1 << 16), prg_draws), dtype=np.uint64)
        prg_hits += float(np.sum(ptf_sign(eval_many(p, prg_many(cfg, idx, sampler)))))
    rng = gaussian_rng(seed, 5, *tag)
    mc_hits = 0.0
    for start in range(0, mc_draws, 1 << 18):
        m = min(1 << 18, mc_draws - start)
        mc_hits += float(np.sum(ptf_sign(eval_many(p, rng.standard_normal((m, p.n))))))
    a, b = prg_hits / prg_draws, mc_hits / mc_draws
    sigma = math.sqrt(a * (1 - a) / prg_draws + b * (1 - b) / mc_draws)
    acct = seed_accounting(cfg)
    return ExperimentReport(
        "fooling_error", _params(p, seed, prg_draws, L=cfg.L, R=cfg.R), abs(a - b), Z95 * sigma,
        [("prg_prob", a), ("gauss_prob", b), ("sigma", sigma), ("mc_draws", mc_draws),
         ("k", cfg.k), ("seed_bits", acct.total_bits)],
    )


def exp_hybrid_step(p: Poly, x: Sequence[float], lam: float, eps: float, R: int, trials: int,
                    seed: int = 0, tag: Sequence[int] = ()) -> ExperimentReport:
    """Gap between ``E sign(p) g`` near ``x`` under moment-matched and Gaussian noise.

    The sampler matches ``d*R`` moments.  Aux fields report which case
    applies at ``x`` for ``phi`` together with the case predictions: how often
    ``g`` vanishes and how often the sign differs from ``sign(phi(x))``.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    h = to_hermite(p)
    x = np.asarray(x, dtype=np.float64)
    sampler = MomentSampler(p.n, max(p.d, 1) * R, derived_seed(seed, 6, *tag))
    Y = sampler.sample_many(np.arange(trials, dtype=np.uint64))
    y = gaussian_rng(seed, 6, *tag).standard_normal((trials, p.n))
    PY = x + math.sqrt(lam) * Y
    Py = x + math.sqrt(lam) * y
    sY, sy = ptf_sign(eval_many(h, PY)), ptf_sign(eval_many(h, Py))
    gY, gy = ga.mollifier_many(h, PY, eps), ga.mollifier_many(h, Py, eps)
    FY, Fy = sY * gY, sy * gy
    est = abs(pairwise_mean(FY) - pairwise_mean(Fy))
    ci = Z95 * math.sqrt(np.var(FY) / trials + np.var(Fy) / trials)
    f = ga.phi(h, lam)
    wb = ga.is_well_behaved(f, x, eps)
    phi_sign = float(ptf_sign(eval_many(f, x[None, :]))[0])
    g_zero = float(np.mean(gY == 0.0))
    flip = float(np.mean(sY != phi_sign))
    return ExperimentReport(
        "hybrid_step", _params(p, seed, trials, **{"lambda": lam, "eps": eps, "R": R}), est, ci,
        [("well_behaved", wb.ok), ("worst_k", -1 if wb.worst_k is None else wb.worst_k),
         ("g_zero_freq", g_zero), ("g_zero_ci", freq_ci(g_zero, trials)),
         ("sign_flip_freq", flip), ("sign_flip_ci", freq_ci(flip, trials)), ("k", sampler.k)],
    )


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------

KINDS = ("random_hermite", "random_standard", "sparse", "monomial_power")


@dataclass(frozen=True)
class PtfInstance:
    p: Poly
    label: str

    def __post_init__(self):
        if self.p.is_zero():
            raise ValueError("PTF polynomial must not be identically zero")


@dataclass(frozen=True)
class CorpusSpec:
    """``kind`` is one of :data:`KINDS` or ``mixed``; ``center`` subtracts the median."""

    kind: str = "mixed"
    n: int = 4
    d: int = 3
    terms: int = 4
    center: bool = False
    median_samples: int = 100_000

    @classmethod
    def parse(cls, text: str, **defaults) -> "CorpusSpec":
        """Parse ``kind[:key=value,...]``, e.g. ``sparse:terms=3,center=1``."""
        kind, _, rest = text.partition(":")
        kw = dict(defaults)
        for item in filter(None, rest.split(",")):
            key, _, value = item.partition("=")
            kw[key.strip()] = value.strip() not in ("0", "false", "no") if key.strip() == "center" else int(value)
        spec = cls(kind=kind.strip(), **kw)
        if spec.kind not in KINDS + ("mixed",):
            raise ValueError(f"unknown corpus kind {spec.kind!r}")
        return spec


def _random_hermite(n, d, rng):
    alphas = multi_indices(n, d)
    c = rng.standard_normal(len(alphas))
    c /= np.linalg.norm(c)
    return Poly.from_dict(n, d, HERMITE, dict(zip(alphas, c)))


def _random_sparse(n, d, terms, basis, rng):
    alphas = multi_indices(n, d)
    top = [a for a in alphas if sum(a) == d]
    chosen = {top[rng.integers(len(top))]}
    while len(chosen) < min(terms, len(alphas)):
        chosen.add(alphas[rng.integers(len(alphas))])
    c = rng.standard_normal(len(chosen))
    return Poly.from_dict(n, d, basis, dict(zip(sorted(chosen), c)))


def _monomial_power(n, d):
    return Poly.from_dict(n, d, STANDARD, {(d,) + (0,) * (n - 1): 1.0})


def center_at_median(p: Poly, samples: int, rng: np.random.Generator) -> Poly:
    """``p - median(p(x))`` with the median estimated from Gaussian samples."""
    med = float(np.median(eval_many(p, rng.standard_normal((samples, p.n)))))
    return p.add_constant(-med) if med != 0.0 else p


def corpus_generate(spec: CorpusSpec, count: int, seed: int = 0) -> list[PtfInstance]:
    """Deterministic list of PTF instances.

    ``mixed`` cycles through :data:`KINDS`; monomial powers cycle their
    degree downward from ``d`` and odd rounds of the cycle are centered.
    """
    out = []
    for i in range(count):
        rng = gaussian_rng(seed, 7, i)
        kind = KINDS[i % len(KINDS)] if spec.kind == "mixed" else spec.kind
        center = spec.center or (spec.kind == "mixed" and (i // len(KINDS)) % 2 == 1)
        if kind == "random_hermite":
            p = _random_hermite(spec.n, spec.d, rng)
        elif kind == "random_standard":
            p = _random_sparse(spec.n, spec.d, spec.terms, STANDARD, rng)
        elif kind == "sparse":
            p = _random_sparse(spec.n, spec.d, spec.terms, HERMITE, rng)
        else:
            deg = spec.d - ((i // len(KINDS)) % spec.d) if spec.kind == "mixed" else spec.d
            p = _monomial_power(spec.n, deg)
            p = Poly(p.n, spec.d, p.basis, p.terms)
        label = kind
        if center:
            p = center_at_median(p, spec.median_samples, rng)
            label = kind + "_centered"
        out.append(PtfInstance(p, label))
    return out
