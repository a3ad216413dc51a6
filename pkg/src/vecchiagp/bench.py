"""Scaling sweeps and phase profiles on synthetic fields.

Synthetic benchmark fields use the sphere-embedded isotropic model:
locations drawn uniformly on the sphere (lon/lat degrees), responses
drawn from the neighbor-conditioned process, seeds fixed and recorded.
Timing covers the numerical work including engine-internal buffer
allocation; process startup and file I/O are excluded. A sweep runs
its cells serially so cells do not disturb each other's clock.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import engine, inference
from .model import CovarianceParameters, Dataset, ModelSpec, normalize_backend
from .oracle import simulate_nn_gp
from .preprocess import find_ordered_neighbors, random_permutation, reorder_dataset

BENCH_THETA = (1.0, 0.3, 0.05)
BENCH_FAMILY = "exponential_sphere"

CSV_COLUMNS = (
    "n",
    "m",
    "backend",
    "workers",
    "repetition",
    "core",
    "neighbor_s",
    "evaluate_s",
    "fit_s",
    "iterations",
    "loglik",
)


@dataclass
class BenchRecord:
    """One timed cell repetition; keyed by (n, m, backend, workers, repetition)."""

    n: int
    m: int
    backend: str
    workers: int
    repetition: int
    core: str
    neighbor_s: float
    evaluate_s: float
    fit_s: float | None
    iterations: int | None
    loglik: float


def synthetic_field(n: int, seed: int = 0, m_sim: int = 30) -> Dataset:
    """Sphere-embedded synthetic dataset with an intercept-only design."""
    from .covariance import covariance_registry

    rng = np.random.Generator(np.random.PCG64(seed))
    lon = rng.uniform(-180.0, 180.0, n)
    lat = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, n)))
    locs = np.column_stack([lon, lat])
    X = np.ones((n, 1))
    cov = CovarianceParameters(BENCH_FAMILY, np.asarray(BENCH_THETA))
    work = covariance_registry(BENCH_FAMILY).prepare_locs(locs)
    nn = find_ordered_neighbors(work, min(m_sim, n - 1) if n > 1 else 1)
    y = simulate_nn_gp(cov, np.zeros(1), locs, X, nn, seed + 1)
    return Dataset(y=y, X=X, locs=locs)


def _field_cov() -> CovarianceParameters:
    return CovarianceParameters(BENCH_FAMILY, np.asarray(BENCH_THETA))


def scaling_sweep(
    n_grid,
    m_grid,
    backends=("task",),
    reps: int = 5,
    workers: int | None = None,
    seed: int = 0,
    core: str | None = None,
    include_fit: bool = True,
    deterministic: bool = False,
    field: Dataset | None = None,
) -> list[BenchRecord]:
    """Time one full evaluate (and optionally a full fit) per grid cell.

    One field is simulated at the largest n (or taken from `field` when
    a caller already has one); smaller cells use its leading rows.
    Neighbor tables are built once per (n, m) cell and the build time is
    recorded on every repetition of that cell.
    """
    n_grid = sorted(set(int(n) for n in n_grid))
    m_grid = sorted(set(int(m) for m in m_grid))
    backends = [normalize_backend(b) for b in backends]
    if not n_grid or not m_grid or not backends:
        raise ValueError("n_grid, m_grid and backends must be nonempty")
    nmax = n_grid[-1]
    if field is None:
        field = synthetic_field(nmax, seed=seed)
    elif field.n < nmax:
        raise ValueError(f"supplied field has {field.n} rows, largest cell needs {nmax}")
    cov = _field_cov()
    nw = workers or 1
    records = []
    for n in n_grid:
        sub = Dataset(y=field.y[:n], X=field.X[:n], locs=field.locs[:n])
        from .covariance import covariance_registry

        work = covariance_registry(cov.family).prepare_locs(sub.locs)
        for m in m_grid:
            t0 = time.perf_counter()
            nn = find_ordered_neighbors(work, m, workers=workers)
            neighbor_s = time.perf_counter() - t0
            for backend in backends:
                for rep in range(reps):
                    t0 = time.perf_counter()
                    ev = inference.evaluate(
                        sub,
                        nn,
                        cov,
                        backend=backend,
                        workers=workers,
                        deterministic=deterministic,
                        core=core,
                    )
                    evaluate_s = time.perf_counter() - t0
                    fit_s = None
                    iterations = None
                    loglik = ev.loglik
                    if include_fit:
                        spec = ModelSpec(covariance=cov, m=m, backend=backend)
                        t0 = time.perf_counter()
                        res = inference.fit(
                            sub,
                            nn,
                            spec,
                            workers=workers,
                            deterministic=deterministic,
                            core=core,
                        )
                        fit_s = time.perf_counter() - t0
                        iterations = res.iterations
                        loglik = res.loglik
                    records.append(
                        BenchRecord(
                            n=n,
                            m=m,
                            backend=backend,
                            workers=nw,
                            repetition=rep,
                            core=core or engine.active_core_name(),
                            neighbor_s=neighbor_s,
                            evaluate_s=evaluate_s,
                            fit_s=fit_s,
                            iterations=iterations,
                            loglik=loglik,
                        )
                    )
    return records


def phase_profile(
    n: int,
    m: int,
    backend: str = "task",
    workers: int | None = None,
    seed: int = 0,
    core: str | None = None,
) -> tuple[BenchRecord, dict]:
    """One end-to-end run with per-phase timings.

    Returns the record plus a phase dict (reorder_s, neighbor_s, fit_s,
    wall_s); the phases account for the wall time to within scheduling
    noise.
    """
    backend = normalize_backend(backend)
    field = synthetic_field(n, seed=seed)
    cov = _field_cov()

    wall0 = time.perf_counter()
    t0 = time.perf_counter()
    ordering = random_permutation(field.n, seed)
    ds = reorder_dataset(field, ordering)
    reorder_s = time.perf_counter() - t0

    from .covariance import covariance_registry

    t0 = time.perf_counter()
    work = covariance_registry(cov.family).prepare_locs(ds.locs)
    nn = find_ordered_neighbors(work, m, workers=workers)
    neighbor_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    spec = ModelSpec(covariance=cov, m=m, backend=backend)
    res = inference.fit(ds, nn, spec, workers=workers, core=core)
    fit_s = time.perf_counter() - t0
    wall_s = time.perf_counter() - wall0

    record = BenchRecord(
        n=n,
        m=m,
        backend=backend,
        workers=workers or 1,
        repetition=0,
        core=core or engine.active_core_name(),
        neighbor_s=neighbor_s,
        evaluate_s=res.phase_timings.get("evaluate_ms", 0.0) / 1000.0,
        fit_s=fit_s,
        iterations=res.iterations,
        loglik=res.loglik,
    )
    phases = {
        "reorder_s": reorder_s,
        "neighbor_s": neighbor_s,
        "fit_s": fit_s,
        "wall_s": wall_s,
    }
    return record, phases


def records_to_csv(records, path):
    """Stable-column CSV; floats use shortest round-trip formatting."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            row = []
            for col in CSV_COLUMNS:
                value = getattr(rec, col)
                if value is None:
                    row.append("")
                elif isinstance(value, float):
                    row.append(repr(value))
                else:
                    row.append(str(value))
            writer.writerow(row)


_INT_COLUMNS = ("n", "m", "workers", "repetition", "iterations")
_STR_COLUMNS = ("backend", "core")


def records_from_csv(path) -> list[BenchRecord]:
    out = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            kwargs = {}
            for col in CSV_COLUMNS:
                raw = row[col]
                if raw == "":
                    kwargs[col] = None
                elif col in _STR_COLUMNS:
                    kwargs[col] = raw
                elif col in _INT_COLUMNS:
                    kwargs[col] = int(raw)
                else:
                    kwargs[col] = float(raw)
            out.append(BenchRecord(**kwargs))
    return out
