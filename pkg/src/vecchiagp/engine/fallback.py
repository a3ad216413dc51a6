"""Pure numpy execution core.

Implements the same per-observation kernel and the same four execution
backends as the compiled core, at numpy speed. Selected automatically
when the compiled extension is unavailable (or forced via the
VECCHIAGP_CORE environment variable); also the reference the compiled
kernels are tested against.

All four backends call one `_contribution` pipeline, so within this
core every backend produces bit-identical per-observation slot values.
The backends differ only in how the work is scheduled:

sequential  one loop, one observation at a time.
task        the observation range is split into chunks handed to a
            thread pool; each chunk owns its slot rows.
nested      per-observation stage split (fill, then factor and
            contractions); with no compiled thread team the fill stage
            degenerates to the vectorized whole-matrix build.
staged      whole-array stages with materialized n-leading
            intermediates, mirroring a batched-solver layout.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf

from ..covariance import KERNEL_ANISOTROPIC
from ..errors import NotPositiveDefinite


def cholesky_lower(A) -> np.ndarray:
    """Lower Cholesky factor of a symmetric matrix given by its lower triangle.

    Raises NotPositiveDefinite carrying the zero-based index of the
    first non-positive pivot.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    c, info = dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefinite(pivot=info - 1)
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    return c


def solve_lower(B, rhs) -> np.ndarray:
    """Forward substitution B x = rhs for lower-triangular B."""
    return solve_triangular(B, rhs, lower=True)


def solve_upper_transpose(B, rhs) -> np.ndarray:
    """Backward substitution B' x = rhs for lower-triangular B."""
    return solve_triangular(B, rhs, lower=True, trans="T")


def _cov(theta, locsub, kcode):
    from ..covariance import exponential_anisotropic, exponential_isotropic

    if kcode == KERNEL_ANISOTROPIC:
        return exponential_anisotropic(theta, locsub)
    return exponential_isotropic(theta, locsub)


def _dcov(theta, locsub, kcode):
    from ..covariance import d_exponential

    if kcode == KERNEL_ANISOTROPIC:
        return d_exponential(theta, locsub, "exponential_anisotropic")
    return d_exponential(theta, locsub, "exponential_isotropic")


def _gather(i, y, X, locs, nn_idx):
    """Local slices for observation i, conditioned observation last."""
    row = nn_idx[i]
    row = row[row >= 0]
    g = row[::-1]
    return locs[g], X[g], y[g]


def _factor(i, K):
    try:
        return cholesky_lower(K)
    except NotPositiveDefinite as err:
        raise NotPositiveDefinite(pivot=err.pivot, observation=i) from None


def _solves(B, D, Xsub, ysub):
    k = B.shape[0]
    z = solve_lower(B, ysub)
    W = solve_lower(B, Xsub)
    e_last = np.zeros(k)
    e_last[k - 1] = 1.0
    u = solve_upper_transpose(B, e_last)
    C = solve_lower(B, (D @ u).T)
    return z, W, u, C


def _contract(B, z, W, C):
    """Per-observation accumulator entries from the solved local system.

    With e the local index of the conditioned observation, the
    log-likelihood pieces are the standard conditional-density terms;
    the derivative pieces follow from differentiating the factorized
    quadratic forms, using that row e of the inverse factor is u and
    C[:, j] solves B c = D_j u.
    """
    e = B.shape[0] - 1
    ze = z[e]
    we = W[e]
    ce = C[e]
    zc = z @ C
    Wc = W.T @ C
    wewe = np.outer(we, we)
    return (
        2.0 * np.log(B[e, e]),                       # logdet
        ze * ze,                                     # ysy
        wewe,                                        # xsx
        ze * we,                                     # ysx
        ce.copy(),                                   # dlogdet
        ce * ze * ze - 2.0 * ze * zc,                # dysy
        ze * we[:, None] * ce[None, :] - ze * Wc - np.outer(we, zc),   # dysx
        ce[None, None, :] * wewe[:, :, None]
        - Wc[:, None, :] * we[None, :, None]
        - we[:, None, None] * Wc[None, :, :],        # dxsx
        C.T @ C - 0.5 * np.outer(ce, ce),            # ainfo
    )


def _contribution(i, y, X, locs, nn_idx, theta, kcode, jitter):
    locsub, Xsub, ysub = _gather(i, y, X, locs, nn_idx)
    K = _cov(theta, locsub, kcode)
    if jitter:
        K[np.diag_indices_from(K)] += jitter
    D = _dcov(theta, locsub, kcode)
    B = _factor(i, K)
    z, W, _, C = _solves(B, D, Xsub, ysub)
    return _contract(B, z, W, C)


def _store(slots, i, pieces):
    for arr, piece in zip(slots, pieces):
        arr[i] = piece


def run_sequential(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail, i0, i1, workers=1):
    for i in range(i0, i1):
        try:
            _store(slots, i, _contribution(i, y, X, locs, nn_idx, theta, kcode, jitter))
        except NotPositiveDefinite as err:
            fail[i] = err.pivot + 1
            return i
    return -1


def run_task(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail, i0, i1, workers=1):
    if workers <= 1 or i1 - i0 <= 1:
        return run_sequential(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail, i0, i1)
    bounds = np.linspace(i0, i1, workers + 1).astype(int)

    def _chunk(a, b):
        return run_sequential(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail, a, b)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_chunk, bounds[:-1], bounds[1:]))
    failures = [r for r in results if r >= 0]
    return min(failures) if failures else -1


def run_nested(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail, i0, i1, workers=1):
    # Stage split inside each observation: fill, then factor and
    # contractions. Without a compiled thread team both stages run on
    # the calling thread, so this schedule matches sequential exactly.
    for i in range(i0, i1):
        locsub, Xsub, ysub = _gather(i, y, X, locs, nn_idx)
        K = _cov(theta, locsub, kcode)
        if jitter:
            K[np.diag_indices_from(K)] += jitter
        D = _dcov(theta, locsub, kcode)
        try:
            B = _factor(i, K)
        except NotPositiveDefinite as err:
            fail[i] = err.pivot + 1
            return i
        z, W, _, C = _solves(B, D, Xsub, ysub)
        _store(slots, i, _contract(B, z, W, C))
    return -1


def run_staged(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail, i0, i1, workers=1):
    """Whole-array stages with global barriers between them.

    Every intermediate (gathered sub-arrays, local covariances and
    derivatives, factors, solves) is materialized in an n-leading heap
    array before the next stage starts, reproducing the memory-traffic
    profile of a batched solver.
    """
    n, p = X.shape
    d = locs.shape[1]
    q = theta.shape[0]
    count = i1 - i0
    if count <= 0:
        return -1
    mp1 = nn_idx.shape[1]
    ks = np.asarray((nn_idx[i0:i1] >= 0).sum(axis=1))

    locsub_all = np.zeros((count, mp1, d))
    xsub_all = np.zeros((count, mp1, p))
    ysub_all = np.zeros((count, mp1))
    for t in range(count):                                   # gather-all
        k = ks[t]
        locsub, Xsub, ysub = _gather(i0 + t, y, X, locs, nn_idx)
        locsub_all[t, :k] = locsub
        xsub_all[t, :k] = Xsub
        ysub_all[t, :k] = ysub

    K_all = np.zeros((count, mp1, mp1))
    for t in range(count):                                   # covariance-all
        k = ks[t]
        K = _cov(theta, locsub_all[t, :k], kcode)
        if jitter:
            K[np.diag_indices_from(K)] += jitter
        K_all[t, :k, :k] = K

    D_all = np.zeros((count, q, mp1, mp1))
    for t in range(count):                                   # derivative-all
        k = ks[t]
        D_all[t, :, :k, :k] = _dcov(theta, locsub_all[t, :k], kcode)

    # stages read their inputs as fresh copies matching the memory
    # orders the per-observation pipeline produces (the factor comes
    # out of dpotrf Fortran-ordered, everything else C-ordered), so the
    # LAPACK calls take identical code paths and slot values stay
    # bit-identical across backends
    B_all = np.zeros((count, mp1, mp1))
    for t in range(count):                                   # factor-all
        k = ks[t]
        try:
            B_all[t, :k, :k] = _factor(i0 + t, np.ascontiguousarray(K_all[t, :k, :k]))
        except NotPositiveDefinite as err:
            fail[i0 + t] = err.pivot + 1
            return i0 + t

    z_all = np.zeros((count, mp1))
    W_all = np.zeros((count, mp1, p))
    C_all = np.zeros((count, mp1, q))
    for t in range(count):                                   # solve-all
        k = ks[t]
        z, W, _, C = _solves(
            np.asfortranarray(B_all[t, :k, :k]),
            np.ascontiguousarray(D_all[t, :, :k, :k]),
            np.ascontiguousarray(xsub_all[t, :k]),
            np.ascontiguousarray(ysub_all[t, :k]),
        )
        z_all[t, :k] = z
        W_all[t, :k] = W
        C_all[t, :k] = C

    for t in range(count):                                   # contract-all
        k = ks[t]
        pieces = _contract(
            np.asfortranarray(B_all[t, :k, :k]),
            np.ascontiguousarray(z_all[t, :k]),
            np.asfortranarray(W_all[t, :k]),
            np.asfortranarray(C_all[t, :k]),
        )
        _store(slots, i0 + t, pieces)
    return -1


RUNNERS = {
    "sequential": run_sequential,
    "task": run_task,
    "nested": run_nested,
    "staged": run_staged,
}
