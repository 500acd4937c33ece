"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import experiments as ex
from . import gaussian as ga
from .poly import HERMITE, STANDARD, Poly, PolyError, dumps, eval_many, loads, poly_to_json, to_hermite, to_standard
from .prg import INDEPENDENT, KWISE, MomentSampler, PrgConfig, SamplerError, seed_accounting

log = logging.getLogger("ptf_prg")

JOBS_ENV = "PTF_PRG_JOBS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# flag helpers
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _add_common(p: argparse.ArgumentParser, corpus: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed; identical seeds give identical output")
    p.add_argument("--out", help="output path (CSV for experiments); stdout when omitted")
    p.add_argument("--jobs", type=int, default=_default_jobs(),
                   help=f"worker processes (default from ${JOBS_ENV}, else 1); output does not depend on it")
    if corpus:
        p.add_argument("--poly", help="JSON polynomial file; overrides the corpus")
        p.add_argument("--corpus", default="mixed",
                       help="corpus descriptor kind[:key=value,...]; kinds: mixed, "
                            + ", ".join(ex.KINDS) + " (keys: terms, center)")
        p.add_argument("--count", type=int, default=20, help="corpus size")
        p.add_argument("--n", type=int, default=4, help="dimension")
        p.add_argument("--d", type=int, default=3, help="PTF degree")


def _read_poly(path: str) -> Poly:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read polynomial file {path}: {exc}")
    try:
        return loads(text)
    except (json.JSONDecodeError, PolyError) as exc:
        raise UsageError(f"malformed polynomial in {path}: {exc}")


def _instances(args) -> list[ex.PtfInstance]:
    if getattr(args, "poly", None):
        return [ex.PtfInstance(_read_poly(args.poly), "custom")]
    try:
        spec = ex.CorpusSpec.parse(args.corpus, n=args.n, d=args.d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad corpus descriptor {args.corpus!r}: {exc}")
    return ex.corpus_generate(spec, args.count, args.seed)


def _emit_text(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# task fan-out
# ---------------------------------------------------------------------------


def _run_task(task):
    name, kwargs = task
    return getattr(ex, name)(**kwargs)


def run_tasks(tasks: list, jobs: int) -> list[ex.ExperimentReport]:
    """Run ``(experiment_name, kwargs)`` tasks; results keep task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


def _write_reports(reports, out):
    if out:
        ex.write_csv(reports, out)
    else:
        ex.write_csv(reports, sys.stdout)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fool(args) -> int:
    tasks = []
    for i, inst in enumerate(_instances(args)):
        for j, (L, R) in enumerate(itertools.product(args.L, args.R)):
            cfg = PrgConfig(inst.p.n, max(inst.p.d, 1), L, R, ex.derived_seed(args.seed, i, j),
                            args.mode, args.prime)
            tasks.append(("exp_fooling_error", dict(p=inst.p, cfg=cfg, prg_draws=args.trials,
                                                    mc_draws=args.mc_trials or 10 * args.trials,
                                                    seed=args.seed, tag=(i, j))))
    _write_reports(run_tasks(tasks, args.jobs), args.out)
    return 0


def cmd_slow_growth(args) -> int:
    tasks = [("exp_slow_growth", dict(p=inst.p, delta=delta, trials=args.trials, seed=args.seed,
                                      threshold=args.threshold, tag=(i, j)))
             for i, inst in enumerate(_instances(args)) for j, delta in enumerate(args.delta)]
    _write_reports(run_tasks(tasks, args.jobs), args.out)
    return 0


def cmd_restriction_fixing(args) -> int:
    tasks = [("exp_restriction_fixing", dict(p=inst.p, lam=lam, eps=eps, outer_trials=args.outer,
                                             inner_trials=args.inner, seed=args.seed, tag=(i, j)))
             for i, inst in enumerate(_instances(args))
             for j, (lam, eps) in enumerate(itertools.product(args.lam, args.eps))]
    _write_reports(run_tasks(tasks, args.jobs), args.out)
    return 0


def cmd_hypervariance(args) -> int:
    tasks = [("exp_hypervariance", dict(p=inst.p, lam=lam, R=R, trials=args.trials, seed=args.seed, tag=(i, j)))
             for i, inst in enumerate(_instances(args))
             for j, (lam, R) in enumerate(itertools.product(args.lam, args.R))]
    _write_reports(run_tasks(tasks, args.jobs), args.out)
    return 0


def cmd_anticoncentration(args) -> int:
    tasks = [("exp_anticoncentration", dict(p=inst.p, eps=eps, trials=args.trials, seed=args.seed, tag=(i, j)))
             for i, inst in enumerate(_instances(args)) for j, eps in enumerate(args.eps)]
    _write_reports(run_tasks(tasks, args.jobs), args.out)
    return 0


def _center(args, n: int, tag: int) -> np.ndarray:
    if args.x is not None:
        if len(args.x) != n:
            raise UsageError(f"--x has {len(args.x)} entries, polynomial has n={n}")
        return np.asarray(args.x)
    return ex.gaussian_rng(args.x_seed, tag).standard_normal(n)


def cmd_hybrid_step(args) -> int:
    tasks = []
    for i, inst in enumerate(_instances(args)):
        x = _center(args, inst.p.n, i)
        for j, (lam, eps, R) in enumerate(itertools.product(args.lam, args.eps, args.R)):
            tasks.append(("exp_hybrid_step", dict(p=inst.p, x=x, lam=lam, eps=eps, R=R, trials=args.trials,
                                                  seed=args.seed, tag=(i, j))))
    _write_reports(run_tasks(tasks, args.jobs), args.out)
    return 0


def cmd_restrict(args) -> int:
    p = to_hermite(_read_poly(args.poly))
    x = _center(args, p.n, 0)
    q = ga.restrict(p, ga.RestrictionParams(args.lam, tuple(x)))
    # spot-check the evaluation identity before writing
    Y = ex.gaussian_rng(args.x_seed, 99).standard_normal((8, p.n))
    lhs = eval_many(q, Y)
    rhs = eval_many(p, math.sqrt(1 - args.lam) * x + math.sqrt(args.lam) * Y)
    err = float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))))
    log.info("restriction spot-check max relative error %.3g", err)
    if err > 1e-8:
        raise RuntimeError(f"restriction identity spot-check failed (error {err:.3g})")
    _emit_text(dumps(q) + "\n", args.out)
    return 0


def cmd_convert(args) -> int:
    p = _read_poly(args.poly)
    q = to_hermite(p) if args.to == HERMITE else to_standard(p)
    _emit_text(dumps(q) + "\n", args.out)
    return 0


def cmd_corpus(args) -> int:
    insts = _instances(args)
    payload = [{"label": inst.label, "poly": poly_to_json(inst.p)} for inst in insts]
    _emit_text(json.dumps(payload, indent=1) + "\n", args.out)
    return 0


def cmd_moments(args) -> int:
    s = MomentSampler(args.n, args.k, args.seed, args.mode, args.prime, args.M)
    lines = [f"nodes={s.node_count} k={s.k} mode={s.mode}" + (f" prime={s.prime}" if s.prime else "")]
    lines.append("index,node,weight,realized_weight")
    for i, (v, w, rw) in enumerate(zip(s.nodes, s.weights, s.realized_weights)):
        lines.append(f"{i},{ex.fmt(v)},{ex.fmt(w)},{ex.fmt(rw)}")
    status = 0
    if args.audit:
        lines.append("m,moment,gaussian_moment,residual,scaled_residual")
        worst = 0.0
        for m, got, res in s.moment_residuals():
            scale = max(1.0, math.fsum(s.realized_weights * np.abs(s.nodes) ** m))
            worst = max(worst, abs(res) / scale)
            lines.append(f"{m},{ex.fmt(got)},{ex.fmt(got - res)},{ex.fmt(res)},{ex.fmt(abs(res) / scale)}")
        lines.append(f"max_scaled_residual,{ex.fmt(worst)}")
        if args.mode == INDEPENDENT and worst > 1e-9:
            status = 2
    if args.L:
        acct = seed_accounting(PrgConfig(args.n, 1, args.L, max(args.k, 1), args.seed, args.mode, args.prime))
        lines.append(f"bits_per_Yi,{acct.bits_per_Yi}")
        lines.append(f"total_bits,{acct.total_bits}")
        lines.append(f"seed_optimal,{int(acct.seed_optimal)}")
    _emit_text("\n".join(lines) + "\n", args.out)
    return status


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptf-prg", description="Hermite-basis toolkit and Monte Carlo checks for a "
                     "moment-matching PRG fooling Gaussian polynomial threshold functions.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fool", help="measure generator fooling error on a PTF corpus",
                       description="Tests the PRG definition and main theorem: estimates "
                       "|Pr[p(Z) >= 0] - Pr[p(z) >= 0]| for Z = L^-1/2 sum Y_i with each Y_i "
                       "(d*R)-moment-matching. One CSV row per corpus instance and (L, R) pair.")
    _add_common(p)
    p.add_argument("--L", type=_ints, default=[16], help="bucket counts (comma list); lambda = 1/L")
    p.add_argument("--R", type=_ints, default=[4], help="moment parameters (comma list); k = d*R")
    p.add_argument("--trials", type=int, default=100_000, help="generator draws per row")
    p.add_argument("--mc-trials", type=int, default=None, help="Gaussian draws per row (default 10*trials)")
    p.add_argument("--mode", choices=[INDEPENDENT, KWISE], default=INDEPENDENT, help="coordinate independence")
    p.add_argument("--prime", type=int, default=None, help="field size for kwise mode")
    p.set_defaults(func=cmd_fool)

    p = sub.add_parser("slow-growth", help="derivative slow-growth quantiles",
                       description="Tests the slow growth of derivatives claim: with probability 1-delta, "
                       "||grad^k p(x)|| <= O(d^3/delta) ||grad^{k-1} p(x)|| for all k. Reports the "
                       "(1-delta)-quantile of the largest ratio and the fraction above --threshold.")
    _add_common(p)
    p.add_argument("--delta", type=_floats, default=[0.1], help="failure probabilities (comma list)")
    p.add_argument("--trials", type=int, default=100_000, help="Gaussian points")
    p.add_argument("--threshold", type=float, default=None, help="ratio threshold (default d^3/delta)")
    p.set_defaults(func=cmd_slow_growth)

    p = sub.add_parser("restriction-fixing", help="how often random restrictions fix the PTF",
                       description="Tests the restriction theorem: for small lambda, the restricted PTF "
                       "y -> sign p(sqrt(1-lambda) x + sqrt(lambda) y) is (1-eps)-close to constant "
                       "for most x. Reports the fraction of x for which it is.")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=_floats, default=[0.1, 0.01, 0.001], help="restriction sizes")
    p.add_argument("--eps", type=_floats, default=[0.05], help="closeness to constant")
    p.add_argument("--outer", type=int, default=1000, help="restriction centers x")
    p.add_argument("--inner", type=int, default=10_000, help="Gaussian y per center")
    p.set_defaults(func=cmd_restriction_fixing)

    p = sub.add_parser("hypervariance", help="normalized hypervariance of random restrictions",
                       description="Tests the hypervariance reduction lemma: H_R(p_{x,lambda}) = "
                       "O(lambda d^6 R^2 / delta^2) except with probability delta. Reports the median, "
                       "90% and 99% quantiles over x.")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=_floats, default=[0.01], help="restriction sizes")
    p.add_argument("--R", type=_floats, default=[2.0], help="hypervariance parameters (>= 1)")
    p.add_argument("--trials", type=int, default=100_000, help="restriction centers x")
    p.set_defaults(func=cmd_hypervariance)

    p = sub.add_parser("anticoncentration", help="frequency of |p| <= eps ||grad p||",
                       description="Tests gradient anticoncentration: "
                       "P(|p(x)| <= eps ||grad p(x)||) = O(eps d^2).")
    _add_common(p)
    p.add_argument("--eps", type=_floats, default=[0.01, 0.05, 0.1], help="eps values")
    p.add_argument("--trials", type=int, default=1_000_000, help="Gaussian points")
    p.set_defaults(func=cmd_anticoncentration)

    p = sub.add_parser("hybrid-step", help="one hybrid step of the sandwiching argument",
                       description="Tests the main hybrid-step lemma: |E sign(p) g at x + sqrt(lambda) Y "
                       "- same with Gaussian y| <= 2^-Omega(R) for (d*R)-moment-matching Y. Also reports "
                       "whether x is well-behaved for phi and the matching case prediction.")
    _add_common(p)
    p.add_argument("--x", type=_floats, default=None, help="center point (comma list); default random")
    p.add_argument("--x-seed", type=int, default=0, help="seed for a random center")
    p.add_argument("--lambda", dest="lam", type=_floats, default=[1e-4], help="noise sizes")
    p.add_argument("--eps", type=_floats, default=[0.05], help="mollifier eps")
    p.add_argument("--R", type=_ints, default=[4], help="moment parameters")
    p.add_argument("--trials", type=int, default=100_000, help="draws per side")
    p.set_defaults(func=cmd_hybrid_step)

    p = sub.add_parser("restrict", help="write the Gaussian restriction of a polynomial",
                       description="Computes q(y) = p(sqrt(1-lambda) x + sqrt(lambda) y) in the Hermite "
                       "basis, spot-checks the evaluation identity, and writes q as JSON.")
    p.add_argument("--poly", required=True, help="input JSON polynomial")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="restriction size in (0, 1)")
    p.add_argument("--x", type=_floats, default=None, help="center point (comma list)")
    p.add_argument("--x-seed", type=int, default=0, help="seed for a random Gaussian center")
    p.add_argument("--out", help="output JSON path; stdout when omitted")
    p.set_defaults(func=cmd_restrict)

    p = sub.add_parser("convert", help="change polynomial basis",
                       description="Converts a JSON polynomial between the Hermite and standard bases.")
    p.add_argument("--poly", required=True, help="input JSON polynomial")
    p.add_argument("--to", choices=[HERMITE, STANDARD], required=True, help="target basis")
    p.add_argument("--out", help="output JSON path; stdout when omitted")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("corpus", help="write a generated PTF corpus as JSON",
                       description="Generates the deterministic PTF test corpus, including the tight "
                       "example x_1^d for derivative growth.")
    _add_common(p)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("moments", help="print and audit a moment-matching node law",
                       description="Prints the Gauss-Hermite node table behind a k-moment-matching sampler; "
                       "--audit adds per-moment residuals against N(0,1), --L adds seed accounting.")
    p.add_argument("--k", type=int, required=True, help="moment order to match")
    p.add_argument("--M", type=int, default=None, help="node count (default ceil((k+1)/2))")
    p.add_argument("--n", type=int, default=4, help="dimension")
    p.add_argument("--mode", choices=[INDEPENDENT, KWISE], default=INDEPENDENT, help="coordinate independence")
    p.add_argument("--prime", type=int, default=None, help="field size for kwise mode")
    p.add_argument("--audit", action="store_true", help="print moment residuals")
    p.add_argument("--L", type=int, default=None, help="bucket count for seed accounting")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", help="output path; stdout when omitted")
    p.set_defaults(func=cmd_moments)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, PolyError, SamplerError, ValueError) as exc:
        print(f"ptf-prg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"ptf-prg {args.command}: runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
