"""Command-line front end.

Exit codes: 0 success, 2 usage or input error, 3 sampler budget exhausted,
4 maximum likelihood diverges (boundary average), 5 fit did not converge.
Results go to stdout (or ``--out``), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io as ccio
from .core import (
    MeanParams,
    NaturalParams,
    covariance,
    log_normalizer,
    log_normalizer_lambda,
    mean,
    mean_to_natural,
)
from .errors import BoundaryError, BudgetExceededError, CCError, NonFiniteLossError
from .inference import (
    Dataset,
    GlmConfig,
    bias_simulation,
    fit_mle,
    glm_fit,
    glm_predict_arrays,
    simulate_glm,
)
from .samplers import DEFAULT_BUDGET, SAMPLERS, benchmark_samplers, choose_sampler, sample

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_BOUNDARY = 4
EXIT_NOT_CONVERGED = 5

SEED_MAX = 2**64 - 1


class UsageError(CCError):
    pass


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _fraction(text: str) -> float:
    try:
        v = ccio.parse_number(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return v


def _nonnegative(text: str) -> float:
    try:
        v = ccio.parse_number(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not v >= 0.0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    if args.strict:
        raise UsageError("--seed is required with --strict")
    seed = int(np.random.SeedSequence().entropy % 2**64)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _params(args):
    """Parse ``--eta`` or ``--lambda`` into (natural params, mean params or None)."""
    if args.eta is not None:
        try:
            return NaturalParams(ccio.parse_vector(args.eta)), None
        except CCError as exc:
            raise UsageError(f"--eta: {exc}") from None
    try:
        lam = MeanParams(ccio.parse_vector(args.lam))
    except CCError as exc:
        raise UsageError(f"--lambda: {exc}") from None
    return mean_to_natural(lam), lam


def _add_params(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--eta", help="natural parameters, comma separated (K-1 values)")
    g.add_argument("--lambda", dest="lam", help="mean parameters, comma separated (K values, sum 1)")


def _out(path):
    return sys.stdout if path in (None, "-") else path


def cmd_logc(args) -> int:
    eta, lam = _params(args)
    ln = log_normalizer(eta)
    rows = [["log_c", ln.log_c], ["c", ln.c]]
    if lam is not None:
        lc = log_normalizer_lambda(lam)
        rows += [["log_c_lambda", lc], ["c_lambda", float(np.exp(lc))]]
    ccio.write_table(sys.stdout, None, rows)
    return EXIT_OK


def cmd_moments(args) -> int:
    eta, _ = _params(args)
    m = mean(eta)
    cov = covariance(eta)
    rows = [["mean", *m]]
    rows += [[f"cov_{i + 1}", *r] for i, r in enumerate(cov)]
    ccio.write_table(sys.stdout, None, rows)
    return EXIT_OK


def cmd_sample(args) -> int:
    eta, _ = _params(args)
    seed = _resolve_seed(args)
    method = choose_sampler(eta) if args.method == "auto" else args.method
    batch = sample(eta, args.n, seed, method, args.budget)
    ccio.write_points(_out(args.out), batch.points)
    print(
        f"method: {method}\nsamples: {batch.n}\nproposals: {batch.total_proposals}\n"
        f"acceptance_rate: {ccio.fmt(batch.acceptance_rate)}\n"
        f"proposals_per_acceptance: {ccio.fmt(batch.total_proposals / batch.n)}",
        file=sys.stderr,
    )
    return EXIT_OK


def _holdout_split(n: int, fraction: float, seed: int):
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(fraction * n))
    if n_test < 1 or n_test >= n:
        raise UsageError(f"--holdout {fraction} leaves an empty train or test split for {n} rows")
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _errors(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    diff = pred - truth
    return float(np.abs(diff).mean()), float(np.sqrt((diff**2).mean()))


def cmd_fit(args) -> int:
    table = ccio.read_compositions(args.data, smooth_zeros=args.smooth)
    for line, reason in table.rejected:
        print(f"rejected line {line}: {reason}", file=sys.stderr)
    print(table.summary(), file=sys.stderr)
    if table.n == 0:
        raise UsageError(f"{args.data}: no valid composition rows")
    Y = table.rows
    Z = None
    if args.predictors:
        _, Z = ccio.read_matrix(args.predictors)
        n_data = len(table.rejected) + table.n
        if Z.shape[0] != n_data:
            raise UsageError(f"--predictors has {Z.shape[0]} rows, --data has {n_data}")
        Z = Z[table.index]
    elif args.l2:
        raise UsageError("--l2 only applies with --predictors")

    test = None
    if args.holdout is not None:
        train, test = _holdout_split(table.n, args.holdout, _resolve_seed(args))
        Y_test, Y = Y[test], Y[train]
        if Z is not None:
            Z_test, Z = Z[test], Z[train]

    if Z is None:
        report = fit_mle(Dataset(Y), tol=args.tol or 1e-8, max_iter=args.max_iter)
        model = None
    else:
        config = GlmConfig(max_iter=args.max_iter, tol=args.tol or 1e-6, l2=args.l2)
        model, report = glm_fit(Dataset(Y, Z), config)

    ccio.write_report(sys.stdout, report, args.format)
    if test is not None:
        baseline = np.broadcast_to(Y.mean(axis=0), Y_test.shape)
        pred = baseline if model is None else glm_predict_arrays(model, Z_test)[1]
        mae, rmse = _errors(pred, Y_test)
        bmae, brmse = _errors(baseline, Y_test)
        ccio.write_table(
            sys.stdout,
            None,
            [["holdout_rows", len(test)], ["holdout_mae", mae], ["holdout_rmse", rmse],
             ["baseline_mae", bmae], ["baseline_rmse", brmse]],
        )
    if args.out:
        if model is None:
            ccio.write_report(args.out, report, "jsonl")
        else:
            ccio.write_jsonl(args.out, [ccio.model_record(model)])
    if not report.converged:
        print(
            f"fit did not converge in {report.iterations} iterations "
            f"(gradient norm {ccio.fmt(report.grad_norm)})",
            file=sys.stderr,
        )
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_bench_samplers(args) -> int:
    if not 2 <= args.kmin <= args.kmax <= 12:
        raise UsageError("need 2 <= --kmin <= --kmax <= 12")
    seed = _resolve_seed(args)
    rows = benchmark_samplers(
        args.concentration,
        range(args.kmin, args.kmax + 1),
        args.trials,
        np.random.default_rng(seed),
        args.budget,
        uniform=args.uniform,
    )
    ccio.write_records(_out(args.out), rows, args.format)
    return EXIT_OK


def cmd_bias_sim(args) -> int:
    if not 1 <= args.nmin <= args.nmax:
        raise UsageError("need 1 <= --nmin <= --nmax")
    seed = _resolve_seed(args)
    if args.prior_uniform:
        if args.k is None:
            raise UsageError("--prior-uniform needs --k")
        truth, K = "uniform", args.k
    else:
        try:
            truth, K = MeanParams(ccio.parse_vector(args.truth_lambda)), None
        except CCError as exc:
            raise UsageError(f"--truth-lambda: {exc}") from None
    rows = bias_simulation(
        truth,
        range(args.nmin, args.nmax + 1),
        args.trials,
        np.random.default_rng(seed),
        K=K,
        method=args.method,
        budget=args.budget,
    )
    ccio.write_records(_out(args.out), rows, args.format)
    return EXIT_OK


def cmd_simulate_glm(args) -> int:
    seed = _resolve_seed(args)
    Z, Y, W, b = simulate_glm(args.n, args.d, args.k, seed, args.weight_scale)
    ccio.write_points(args.out_data, Y)
    ccio.write_table(args.out_predictors, [f"z{i + 1}" for i in range(args.d)], Z)
    if args.out_truth:
        ccio.write_jsonl(args.out_truth, [{"weights": W, "bias": b, "seed": seed}])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccdist", description="Continuous categorical distribution toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeded=False, fmt=False):
        if seeded:
            p.add_argument("--seed", type=_seed, help="unsigned 64-bit seed (random and printed if omitted)")
            p.add_argument("--strict", action="store_true", help="require --seed")
        if fmt:
            p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = sub.add_parser("logc", help="log normalizing constant")
    _add_params(p)
    p.set_defaults(func=cmd_logc)

    p = sub.add_parser("moments", help="mean vector and covariance")
    _add_params(p)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("sample", help="draw samples as CSV")
    _add_params(p)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--method", choices=("auto", *SAMPLERS), default="auto")
    p.add_argument("--budget", type=_positive_int, default=DEFAULT_BUDGET, help="proposals allowed per sample")
    p.add_argument("--out", help="output file (default stdout)")
    common(p, seeded=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", help="maximum likelihood or regression fit")
    p.add_argument("--data", required=True, help="composition CSV")
    p.add_argument("--predictors", help="predictor CSV, one row per data row")
    p.add_argument("--l2", type=_nonnegative, default=0.0)
    p.add_argument("--smooth", action="store_true", help="mix rows with the uniform composition (weight 1e-3)")
    p.add_argument("--holdout", type=_fraction, help="fraction of rows held out for evaluation")
    p.add_argument("--max-iter", type=_positive_int, default=500)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", help="write the model (regression) or report (MLE) as JSON lines")
    common(p, seeded=True, fmt=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench-samplers", help="proposals per acceptance benchmark")
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--budget", type=_positive_int, default=10**5)
    p.add_argument("--concentration", type=float, default=1.0, help="total Dirichlet concentration")
    p.add_argument("--uniform", action="store_true", help="fix lambda at the centroid")
    p.add_argument("--out")
    common(p, seeded=True, fmt=True)
    p.set_defaults(func=cmd_bench_samplers)

    p = sub.add_parser("bias-sim", help="empirical bias of the fitted mean")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--truth-lambda")
    g.add_argument("--prior-uniform", action="store_true")
    p.add_argument("--k", type=int, help="dimension for --prior-uniform")
    p.add_argument("--nmin", type=int, default=2)
    p.add_argument("--nmax", type=int, default=20)
    p.add_argument("--trials", type=_positive_int, default=10_000)
    p.add_argument("--method", choices=("auto", *SAMPLERS), default="auto")
    p.add_argument("--budget", type=_positive_int, default=DEFAULT_BUDGET)
    p.add_argument("--out")
    common(p, seeded=True, fmt=True)
    p.set_defaults(func=cmd_bias_sim)

    p = sub.add_parser("simulate-glm", help="synthetic regression data")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--d", type=_positive_int, default=3)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--weight-scale", type=float, default=1.0)
    p.add_argument("--out-data", required=True)
    p.add_argument("--out-predictors", required=True)
    p.add_argument("--out-truth")
    common(p, seeded=True)
    p.set_defaults(func=cmd_simulate_glm)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except BoundaryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUNDARY
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (CCError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
