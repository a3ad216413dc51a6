"""Command-line interface: fit, predict, simulate and bench subcommands.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
failure. Errors are written to stderr with a machine-parsable
"vecchiagp: error[kind]:" prefix.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import __version__, bench, engine, inference, io
from .covariance import FAMILY_NAMES, covariance_registry
from .errors import (
    DegenerateInformation,
    NotPositiveDefinite,
    SingularDesign,
    SizeGuardExceeded,
    VecchiaError,
)
from .model import CovarianceParameters, Dataset, ModelSpec, validate_dataset
from .predict import krige
from .preprocess import (
    find_ordered_neighbors,
    identity_ordering,
    random_permutation,
    reorder_dataset,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_NUMERIC_ERRORS = (NotPositiveDefinite, SingularDesign, DegenerateInformation, SizeGuardExceeded)

BACKEND_CHOICES = ("seq", "task", "nested", "staged")


def _error(kind: str, message: str) -> None:
    print(f"vecchiagp: error[{kind}]: {message}", file=sys.stderr)


def _csv_list(text):
    return [part.strip() for part in text.split(",") if part.strip()]


def _float_list(text):
    return [float(part) for part in _csv_list(text)]


def _int_list(text):
    return [int(part) for part in _csv_list(text)]


def _add_data_flags(parser):
    parser.add_argument("--data", required=True, help="training CSV with a header row")
    parser.add_argument("--y-col", default="y", help="response column name")
    parser.add_argument(
        "--x-cols", default="", help="comma-separated design column names (may be empty)"
    )
    parser.add_argument(
        "--loc-cols",
        default="loc0,loc1",
        help="comma-separated coordinate column names",
    )
    parser.add_argument(
        "--intercept",
        action="store_true",
        help="append an all-ones design column (implied when --x-cols is empty)",
    )


def _add_engine_flags(parser):
    parser.add_argument("--backend", choices=BACKEND_CHOICES, default="task")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="fixed-order pairwise-tree reduction; bit-identical across backends",
    )
    parser.add_argument(
        "--capacity-tier",
        type=int,
        default=None,
        choices=engine.CAPACITY_TIERS,
        help="override the automatic task-scratch tier",
    )
    parser.add_argument("--workers", type=int, default=None, help="worker count override")
    parser.add_argument(
        "--core",
        choices=("auto", "compiled", "fallback"),
        default="auto",
        help="execution core selection",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecchiagp",
        description="Fit Gaussian-process models to large spatial datasets "
        "by ordered nearest-neighbor conditioning.",
    )
    parser.add_argument("--version", action="version", version=f"vecchiagp {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_fit = sub.add_parser("fit", help="estimate covariance and mean parameters")
    _add_data_flags(p_fit)
    p_fit.add_argument("--covfun", choices=FAMILY_NAMES, default="exponential_isotropic")
    p_fit.add_argument("--m", type=int, default=30, help="neighbor count")
    p_fit.add_argument("--ordering", choices=("identity", "random"), default="random")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--max-iters", type=int, default=40)
    p_fit.add_argument("--tol", type=float, default=1e-4)
    p_fit.add_argument(
        "--start",
        default=None,
        help="comma-separated starting covariance parameters (default: data-driven)",
    )
    p_fit.add_argument("--jitter", type=float, default=0.0, help="diagonal jitter to add")
    p_fit.add_argument("--out", required=True, help="fit JSON output path")
    p_fit.add_argument("--save-nn", default=None, help="cache the neighbor table as CSV")
    p_fit.add_argument("--load-nn", default=None, help="reuse a cached neighbor table")
    _add_engine_flags(p_fit)

    p_pred = sub.add_parser("predict", help="krige at new locations from a saved fit")
    p_pred.add_argument("--model", required=True, help="fit JSON from the fit subcommand")
    _add_data_flags(p_pred)
    p_pred.add_argument("--pred", required=True, help="CSV of prediction locations")
    p_pred.add_argument("--m-pred", type=int, default=60)
    p_pred.add_argument(
        "--latent",
        action="store_true",
        help="predict the noise-free process (exclude the nugget from the variance)",
    )
    p_pred.add_argument("--out", required=True, help="prediction CSV output path")

    p_sim = sub.add_parser("simulate", help="draw a synthetic dataset")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--d", type=int, default=2)
    p_sim.add_argument("--covfun", choices=FAMILY_NAMES, default="exponential_isotropic")
    p_sim.add_argument("--theta", default="1.0,0.2,0.05", help="comma-separated parameters")
    p_sim.add_argument("--beta", default="0.0", help="comma-separated mean coefficients")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="dataset CSV output path")

    p_bench = sub.add_parser("bench", help="scaling sweeps and phase profiles")
    p_bench.add_argument("--mode", choices=("sweep", "profile"), default="sweep")
    p_bench.add_argument("--n-grid", default="10000", help="comma-separated sizes")
    p_bench.add_argument("--m-grid", default="10", help="comma-separated neighbor counts")
    p_bench.add_argument(
        "--backends", default="task", help="comma-separated backends for sweep mode"
    )
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--no-fit", action="store_true", help="time evaluations only")
    p_bench.add_argument("--out", required=True, help="records CSV output path")
    _add_engine_flags(p_bench)
    return parser


def _core_arg(args):
    return None if args.core == "auto" else args.core


def _load_dataset(args) -> Dataset:
    x_cols = _csv_list(args.x_cols)
    ds = io.read_csv_dataset(
        args.data,
        y_col=args.y_col,
        x_cols=x_cols,
        loc_cols=_csv_list(args.loc_cols),
        intercept=args.intercept or not x_cols,
    )
    validate_dataset(ds)
    return ds


def _cmd_fit(args) -> int:
    ds = _load_dataset(args)
    if args.m >= ds.n:
        _error("data", f"m={args.m} must be smaller than the number of rows n={ds.n}")
        return EXIT_DATA
    family = covariance_registry(args.covfun)
    timings = {}

    t0 = time.perf_counter()
    if args.ordering == "random":
        ordering = random_permutation(ds.n, args.seed)
    else:
        ordering = identity_ordering(ds.n)
    ds = reorder_dataset(ds, ordering)
    timings["reorder_ms"] = 1000.0 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    if args.load_nn:
        nn = io.read_neighbors_csv(args.load_nn)
        if nn.n != ds.n or nn.m != args.m:
            _error("data", f"cached neighbor table is {nn.n} x {nn.m + 1}, need {ds.n} x {args.m + 1}")
            return EXIT_DATA
    else:
        work = family.prepare_locs(ds.locs)
        nn = find_ordered_neighbors(work, args.m, workers=args.workers)
    timings["neighbor_ms"] = 1000.0 * (time.perf_counter() - t0)
    if args.save_nn:
        io.write_neighbors_csv(nn, args.save_nn)

    if args.start is not None:
        start = CovarianceParameters(args.covfun, np.asarray(_float_list(args.start)))
    else:
        start = inference.default_start(ds, args.covfun)
    spec = ModelSpec(
        covariance=start,
        m=args.m,
        ordering=args.ordering,
        seed=args.seed,
        backend=args.backend,
    )
    result = inference.fit(
        ds,
        nn,
        spec,
        max_iters=args.max_iters,
        tol=args.tol,
        workers=args.workers,
        jitter=args.jitter,
        deterministic=args.deterministic,
        capacity_tier=args.capacity_tier,
        core=_core_arg(args),
    )
    result.phase_timings.update(timings)
    config = {k: v for k, v in vars(args).items()}
    io.write_fit_json(result, args.out, config=config, version=__version__)
    theta = ", ".join(f"{v:.6g}" for v in result.theta_hat.theta)
    print(
        f"fit: loglik={result.loglik:.6f} iterations={result.iterations} "
        f"converged={result.converged} theta=[{theta}] -> {args.out}"
    )
    return EXIT_OK


def _cmd_predict(args) -> int:
    doc = io.read_fit_json(args.model)
    fit_result = io.fit_from_dict(doc)
    train = _load_dataset(args)
    x_cols = _csv_list(args.x_cols)
    loc_cols = _csv_list(args.loc_cols)
    pred_ds = io.read_csv_dataset(
        args.pred,
        y_col=loc_cols[0],  # no response requirement; reuse a loc column
        x_cols=x_cols,
        loc_cols=loc_cols,
        intercept=args.intercept or not x_cols,
    )
    if args.m_pred < 1 or args.m_pred > train.n:
        _error("data", f"m-pred={args.m_pred} outside [1, n]={train.n}")
        return EXIT_DATA
    t0 = time.perf_counter()
    result = krige(
        fit_result,
        train,
        pred_ds.locs,
        pred_ds.X,
        m_pred=args.m_pred,
        latent=args.latent,
    )
    predict_ms = 1000.0 * (time.perf_counter() - t0)
    import csv as _csv

    with open(args.out, "w", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow([*loc_cols, "mean", "sd"])
        for t in range(result.mean.shape[0]):
            writer.writerow(
                [repr(float(v)) for v in result.locs_star[t]]
                + [repr(float(result.mean[t])), repr(float(result.sd[t]))]
            )
    print(f"predict: {result.mean.shape[0]} points in {predict_ms:.1f} ms -> {args.out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    from .oracle import simulate_gp

    theta = np.asarray(_float_list(args.theta))
    beta = np.asarray(_float_list(args.beta))
    cov = CovarianceParameters(args.covfun, theta)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    if args.covfun == "exponential_sphere":
        lon = rng.uniform(-180.0, 180.0, args.n)
        lat = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, args.n)))
        locs = np.column_stack([lon, lat])
    else:
        locs = rng.uniform(0.0, 1.0, (args.n, args.d))
    X = np.ones((args.n, beta.shape[0]))
    if beta.shape[0] > 1:
        X[:, 1:] = rng.uniform(-1.0, 1.0, (args.n, beta.shape[0] - 1))
    y = simulate_gp(cov, beta, locs, X, args.seed)
    io.write_csv_dataset(Dataset(y=y, X=X, locs=locs), args.out)
    print(f"simulate: n={args.n} d={locs.shape[1]} -> {args.out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    core = _core_arg(args)
    if args.mode == "profile":
        n = _int_list(args.n_grid)[0]
        m = _int_list(args.m_grid)[0]
        record, phases = bench.phase_profile(
            n, m, backend=args.backend, workers=args.workers, seed=args.seed, core=core
        )
        bench.records_to_csv([record], args.out)
        parts = ", ".join(f"{k}={v:.3f}" for k, v in phases.items())
        print(f"bench profile: {parts} -> {args.out}")
        return EXIT_OK
    records = bench.scaling_sweep(
        _int_list(args.n_grid),
        _int_list(args.m_grid),
        backends=_csv_list(args.backends),
        reps=args.reps,
        workers=args.workers,
        seed=args.seed,
        core=core,
        include_fit=not args.no_fit,
        deterministic=args.deterministic,
    )
    bench.records_to_csv(records, args.out)
    print(f"bench sweep: {len(records)} records -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "simulate": _cmd_simulate,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.subcommand](args)
    except _NUMERIC_ERRORS as err:
        _error("numeric", str(err))
        return EXIT_NUMERIC
    except (VecchiaError, OSError) as err:
        _error("data", str(err))
        return EXIT_DATA
    except ValueError as err:
        _error("usage", str(err))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
