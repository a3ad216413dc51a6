"""Per-observation local-Cholesky engine with interchangeable backends.

`run` executes the per-observation body (neighbor gather, local
covariance and derivatives, Cholesky, triangular solves, derivative
contractions) for every observation and reduces the contributions into
`VecchiaParts`. Four backends are available:

sequential       one observation after another.
task             one independent work item per observation, each with
                 its own fixed-capacity scratch; one barrier before the
                 reduction.
nested           per-observation work items whose covariance and
                 derivative fills are spread over matrix entries, with
                 an intra-item barrier before the factorization, which
                 runs on a single lane.
staged           whole-array stages (gather-all, covariance-all,
                 factor-all, solve-all, contract-all) separated by
                 global barriers, intermediates in shared heap arrays.

Observations whose conditioning set is still growing (index < m) are
processed in a separate preliminary pass regardless of backend.

Two cores provide these backends: a compiled OpenMP extension and a
numpy fallback, chosen at import (override with VECCHIAGP_CORE or the
`core` argument). Within one core all backends produce bit-identical
per-observation values; `deterministic=True` additionally fixes the
reduction to an index-ordered pairwise tree so whole runs are
bit-reproducible across backends.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..covariance import validate_parameters
from ..errors import NotPositiveDefinite
from ..model import CovarianceParameters, Dataset, normalize_backend
from ..preprocess import NeighborArray, _worker_count
from .fallback import cholesky_lower, solve_lower, solve_upper_transpose
from . import fallback

try:  # compiled core is optional; the fallback covers every contract
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

CAPACITY_TIERS = (8, 16, 32, 64)

_FORCED = os.environ.get("VECCHIAGP_CORE", "").strip().lower()
if _FORCED == "fallback":
    _DEFAULT_CORE = "fallback"
elif _FORCED == "compiled":
    if _compiled is None:
        raise ImportError("VECCHIAGP_CORE=compiled but the extension is not built")
    _DEFAULT_CORE = "compiled"
else:
    _DEFAULT_CORE = "compiled" if _compiled is not None else "fallback"


def compiled_core():
    """The compiled extension module, or None when not built."""
    return _compiled


def active_core_name() -> str:
    return _DEFAULT_CORE


def available_cores() -> tuple:
    return ("compiled", "fallback") if _compiled is not None else ("fallback",)


def choose_capacity_tier(mp1: int) -> int:
    """Smallest scratch tier holding a conditioning set of size mp1.

    Above the largest tier the task scratch is sized exactly, trading
    the compact tiered footprint for support of very wide sets.
    """
    for tier in CAPACITY_TIERS:
        if mp1 <= tier:
            return tier
    return mp1


@dataclass(frozen=True)
class ObservationContribution:
    """One observation's additive share of every accumulator."""

    logdet: float
    ysy: float
    xsx: np.ndarray
    ysx: np.ndarray
    dlogdet: np.ndarray
    dysy: np.ndarray
    dysx: np.ndarray
    dxsx: np.ndarray
    ainfo: np.ndarray


@dataclass(frozen=True)
class VecchiaParts:
    """Sums of per-observation contributions over the whole dataset.

    logdet and ysy assemble the log-likelihood; xsx and ysx profile the
    mean parameters; the d-prefixed fields carry the parameter
    derivatives of their counterparts; ainfo is the Fisher information
    of the covariance parameters.
    """

    logdet: float
    ysy: float
    xsx: np.ndarray
    ysx: np.ndarray
    dlogdet: np.ndarray
    dysy: np.ndarray
    dysx: np.ndarray
    dxsx: np.ndarray
    ainfo: np.ndarray


def _tree_sum(a: np.ndarray):
    """Index-ordered pairwise-tree reduction along axis 0.

    The order of additions depends only on the leading length, never on
    the backend or worker count, so deterministic-mode sums are
    bit-identical however the slots were produced.
    """
    x = a
    while x.shape[0] > 1:
        half = x.shape[0] // 2
        y = x[0 : 2 * half : 2] + x[1 : 2 * half : 2]
        if x.shape[0] % 2:
            y = np.concatenate([y, x[2 * half :]], axis=0)
        x = y
    return x[0]


def _alloc_slots(n, p, q):
    return (
        np.zeros(n),                # logdet
        np.zeros(n),                # ysy
        np.zeros((n, p, p)),        # xsx
        np.zeros((n, p)),           # ysx
        np.zeros((n, q)),           # dlogdet
        np.zeros((n, q)),           # dysy
        np.zeros((n, p, q)),        # dysx
        np.zeros((n, p, p, q)),     # dxsx
        np.zeros((n, q, q)),        # ainfo
    )


def _reduce(slots, deterministic: bool) -> VecchiaParts:
    if deterministic:
        sums = [_tree_sum(s) for s in slots]
    else:
        sums = [np.sum(s, axis=0) for s in slots]
    return VecchiaParts(
        logdet=float(sums[0]),
        ysy=float(sums[1]),
        xsx=sums[2],
        ysx=sums[3],
        dlogdet=sums[4],
        dysy=sums[5],
        dysx=sums[6],
        dxsx=sums[7],
        ainfo=sums[8],
    )


def _prepare(ds: Dataset, nn: NeighborArray, cov: CovarianceParameters):
    family = validate_parameters(cov, ds.d)
    locs_work = family.prepare_locs(ds.locs)
    return locs_work, family.kernel_code


def process_observation(
    i: int,
    ds: Dataset,
    nn: NeighborArray,
    cov: CovarianceParameters,
    jitter: float = 0.0,
) -> ObservationContribution:
    """One observation's contribution, computed on the numpy core."""
    if not 0 <= i < ds.n:
        raise IndexError(f"observation index {i} outside [0, {ds.n})")
    locs_work, kcode = _prepare(ds, nn, cov)
    pieces = fallback._contribution(
        i, ds.y, ds.X, locs_work, nn.idx, cov.theta, kcode, float(jitter)
    )
    return ObservationContribution(*pieces)


def run(
    ds: Dataset,
    nn: NeighborArray,
    cov: CovarianceParameters,
    backend: str = "task",
    deterministic: bool = True,
    workers: int | None = None,
    capacity_tier: int | None = None,
    jitter: float = 0.0,
    core: str | None = None,
) -> VecchiaParts:
    """Sum process_observation over every observation under a backend.

    Raises NotPositiveDefinite with the lowest failing observation
    index if any local factorization fails; no jitter is ever added
    automatically (pass `jitter` to request it).
    """
    backend = normalize_backend(backend)
    core = core or _DEFAULT_CORE
    if core not in ("compiled", "fallback"):
        raise ValueError(f"unknown core {core!r}")
    if core == "compiled" and _compiled is None:
        raise RuntimeError("compiled core requested but the extension is not built")

    n, p = ds.n, ds.p
    nw = _worker_count(workers)
    locs_work, kcode = _prepare(ds, nn, cov)
    theta = cov.theta
    q = theta.shape[0]
    mp1 = nn.idx.shape[1]
    if nn.idx.shape[0] != n:
        raise ValueError(f"neighbor table has {nn.idx.shape[0]} rows for n={n}")

    cap = capacity_tier or choose_capacity_tier(mp1)
    if cap < mp1:
        raise ValueError(f"capacity tier {cap} too small for m+1={mp1}")

    slots = _alloc_slots(n, p, q)
    fail = np.zeros(n, dtype=np.int32)

    head = min(mp1 - 1, n)
    args = (ds.y, ds.X, locs_work, nn.idx, theta, kcode, float(jitter), slots, fail)
    if core == "compiled":
        first = _compiled.run_sequential(*args, 0, head, 1, cap)
        if first < 0 and head < n:
            first = _compiled.RUNNERS[backend](*args, head, n, nw, cap)
    else:
        first = fallback.run_sequential(*args, 0, head, 1)
        if first < 0 and head < n:
            first = fallback.RUNNERS[backend](*args, head, n, nw)
    if first >= 0:
        raise NotPositiveDefinite(pivot=int(fail[first]) - 1, observation=int(first))
    return _reduce(slots, deterministic)
