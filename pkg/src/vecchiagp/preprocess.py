"""Observation reordering, sphere embedding and ordered neighbor search.

The neighbor table is the heart of the approximation: row i lists, in
the current ordering, the indices of observation i itself followed by
its nearest predecessors. The normative algorithm is an exhaustive
distance scan; the compiled scan in the engine core implements the same
algorithm and must return bit-identical tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LatitudeOutOfRange, LengthMismatch
from .model import Dataset

SENTINEL = -1


@dataclass(frozen=True)
class Ordering:
    """A permutation of 0..n-1 mapping new position to original index."""

    perm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "perm", np.ascontiguousarray(self.perm, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.perm.shape[0]


def identity_ordering(n: int) -> Ordering:
    return Ordering(np.arange(n, dtype=np.int64))


def random_permutation(n: int, seed: int) -> Ordering:
    """Uniform random permutation from a PCG64-seeded numpy Generator.

    The generator is numpy's PCG64 with a Fisher-Yates shuffle, which is
    reproducible across platforms for a fixed seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    return Ordering(rng.permutation(n).astype(np.int64))


def reorder_dataset(ds: Dataset, ordering: Ordering) -> Dataset:
    """Apply an ordering consistently to y, X and locs."""
    if ordering.n != ds.n:
        raise LengthMismatch(
            f"permutation length {ordering.n} does not match n={ds.n}"
        )
    perm = ordering.perm
    return Dataset(y=ds.y[perm], X=ds.X[perm], locs=ds.locs[perm])


def lonlat_to_xyz(lon: float, lat: float) -> np.ndarray:
    """Embed one lon/lat degree pair on the unit sphere.

    Returns (cos lat cos lon, cos lat sin lon, sin lat). The radius is
    left at one; any physical radius is absorbed by the range parameter.
    """
    if not -90.0 <= lat <= 90.0:
        raise LatitudeOutOfRange(f"latitude {lat} outside [-90, 90]")
    lon_r = np.deg2rad(lon)
    lat_r = np.deg2rad(lat)
    return np.array(
        [np.cos(lat_r) * np.cos(lon_r), np.cos(lat_r) * np.sin(lon_r), np.sin(lat_r)]
    )


def embed_lonlat(locs) -> np.ndarray:
    """Vectorized sphere embedding of an (n, 2) lon/lat degree array."""
    locs = np.atleast_2d(np.asarray(locs, dtype=np.float64))
    if locs.shape[1] != 2:
        raise ValueError(f"expected (n, 2) lon/lat input, got shape {locs.shape}")
    lat = locs[:, 1]
    if np.any((lat < -90.0) | (lat > 90.0)):
        bad = int(np.argmax((lat < -90.0) | (lat > 90.0)))
        raise LatitudeOutOfRange(f"latitude {lat[bad]} at row {bad} outside [-90, 90]")
    lon_r = np.deg2rad(locs[:, 0])
    lat_r = np.deg2rad(lat)
    out = np.empty((locs.shape[0], 3))
    out[:, 0] = np.cos(lat_r) * np.cos(lon_r)
    out[:, 1] = np.cos(lat_r) * np.sin(lon_r)
    out[:, 2] = np.sin(lat_r)
    return out


@dataclass(frozen=True)
class NeighborArray:
    """Ordered conditioning sets as an (n, m+1) index table.

    Row i holds observation i in column 0 followed by its nearest
    predecessors sorted by increasing distance (ties broken by the
    smaller index); unused trailing cells hold -1.
    """

    idx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "idx", np.ascontiguousarray(self.idx, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.idx.shape[0]

    @property
    def m(self) -> int:
        return self.idx.shape[1] - 1

    def row_sizes(self) -> np.ndarray:
        return (self.idx >= 0).sum(axis=1)


def _neighbors_exhaustive_numpy(locs: np.ndarray, m: int) -> np.ndarray:
    """Reference exhaustive scan: O(n^2 d), lexicographic (distance, index)."""
    n = locs.shape[0]
    idx = np.full((n, m + 1), SENTINEL, dtype=np.int64)
    idx[:, 0] = np.arange(n)
    for i in range(1, n):
        diff = locs[:i] - locs[i]
        d2 = (diff * diff).sum(axis=1)
        take = min(i, m)
        order = np.lexsort((np.arange(i), d2))
        idx[i, 1 : take + 1] = order[:take]
    return idx


def find_ordered_neighbors(locs, m: int, workers: int | None = None) -> NeighborArray:
    """Build the conditioning-set table for already-ordered locations.

    Uses the compiled exhaustive scan when the extension is available,
    the numpy scan otherwise; both produce identical tables, including
    the smaller-index tie break on exactly equal distances.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    locs = np.ascontiguousarray(np.atleast_2d(locs), dtype=np.float64)
    n = locs.shape[0]
    m = min(m, max(n - 1, 1))
    from .engine import compiled_core

    core = compiled_core()
    if core is not None:
        out = np.full((n, m + 1), SENTINEL, dtype=np.int64)
        core.neighbor_scan(locs, m, out, _worker_count(workers))
        return NeighborArray(out)
    return NeighborArray(_neighbors_exhaustive_numpy(locs, m))


def _worker_count(workers: int | None) -> int:
    import os

    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("VECCHIAGP_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
