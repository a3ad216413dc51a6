# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled execution core: per-observation local-Cholesky kernels.

One scalar kernel (gather, covariance fill, derivative fill, in-place
Cholesky, triangular solves, contractions) is shared by all four
execution backends, so per-observation slot values are bit-identical
whichever backend produced them. The backends differ only in how the
work is scheduled:

run_sequential  plain loop.
run_task        OpenMP loop over observations, one fixed-capacity
                scratch block per thread.
run_nested      per observation, the gather and the covariance and
                derivative fills are spread over an OpenMP team with a
                barrier before the factorization, which runs on a
                single lane.
run_staged      whole-array stages separated by global barriers, with
                intermediates materialized in shared heap arrays.

All arithmetic is double precision. Compiled with -ffp-contract=off so
the neighbor scan's distance comparisons match the numpy reference bit
for bit.
"""

import numpy as np

from cython.parallel cimport parallel, prange, threadid
from libc.math cimport exp, log, sqrt


# ---------------------------------------------------------------------------
# covariance entries

cdef inline double _cov_entry(const double* la, const double* lb, Py_ssize_t d,
                              const double* theta, Py_ssize_t q, int kcode,
                              bint same, double jitter) noexcept nogil:
    cdef double s = 0.0
    cdef double diff
    cdef Py_ssize_t l
    if same:
        return theta[0] * (1.0 + theta[q - 1]) + jitter
    if kcode == 0:
        for l in range(d):
            diff = la[l] - lb[l]
            s += diff * diff
        return theta[0] * exp(-sqrt(s) / theta[1])
    for l in range(d):
        diff = (la[l] - lb[l]) / theta[1 + l]
        s += diff * diff
    return theta[0] * exp(-sqrt(s))


cdef inline double _dcov_entry(Py_ssize_t j, const double* la, const double* lb,
                               Py_ssize_t d, const double* theta, Py_ssize_t q,
                               int kcode, bint same) noexcept nogil:
    cdef double s = 0.0
    cdef double diff, r
    cdef Py_ssize_t l, ax
    if kcode == 0:
        if j == 0:                                  # variance
            if same:
                return 1.0 + theta[2]
            for l in range(d):
                diff = la[l] - lb[l]
                s += diff * diff
            return exp(-sqrt(s) / theta[1])
        if j == 1:                                  # shared range
            if same:
                return 0.0
            for l in range(d):
                diff = la[l] - lb[l]
                s += diff * diff
            r = sqrt(s)
            return theta[0] * exp(-r / theta[1]) * r / (theta[1] * theta[1])
        if same:                                    # nugget
            return theta[0]
        return 0.0
    if j == 0:                                      # variance
        if same:
            return 1.0 + theta[q - 1]
        for l in range(d):
            diff = (la[l] - lb[l]) / theta[1 + l]
            s += diff * diff
        return exp(-sqrt(s))
    if j == q - 1:                                  # nugget
        if same:
            return theta[0]
        return 0.0
    if same:                                        # per-axis range
        return 0.0
    for l in range(d):
        diff = (la[l] - lb[l]) / theta[1 + l]
        s += diff * diff
    s = sqrt(s)
    if s == 0.0:
        return 0.0
    ax = j - 1
    diff = la[ax] - lb[ax]
    return theta[0] * exp(-s) * diff * diff / (theta[1 + ax] * theta[1 + ax] * theta[1 + ax] * s)


# ---------------------------------------------------------------------------
# run context

cdef struct RunArgs:
    const double* y
    const double* X
    const double* locs
    const long long* nn
    const double* theta
    double* logdet
    double* ysy
    double* xsx
    double* ysx
    double* dlogdet
    double* dysy
    double* dysx
    double* dxsx
    double* ainfo
    int* fail
    Py_ssize_t n
    Py_ssize_t p
    Py_ssize_t d
    Py_ssize_t q
    Py_ssize_t mp1
    int kcode
    double jitter


cdef class _View:
    """Keeps the numpy buffers of one run alive and exposes raw pointers."""

    cdef double[::1] y, theta, logdet, ysy, xsx, ysx, dlogdet, dysy, dysx, dxsx, ainfo
    cdef double[:, ::1] X, locs
    cdef long long[:, ::1] nn
    cdef int[::1] fail
    cdef RunArgs args

    def __init__(self, y, X, locs, nn_idx, theta, kcode, jitter, slots, fail):
        self.y = y
        self.X = X
        self.locs = locs
        self.nn = nn_idx
        self.theta = theta
        self.logdet = slots[0]
        self.ysy = slots[1]
        self.xsx = slots[2].reshape(-1)
        self.ysx = slots[3].reshape(-1)
        self.dlogdet = slots[4].reshape(-1)
        self.dysy = slots[5].reshape(-1)
        self.dysx = slots[6].reshape(-1)
        self.dxsx = slots[7].reshape(-1)
        self.ainfo = slots[8].reshape(-1)
        self.fail = fail
        self.args.y = &self.y[0]
        self.args.X = &self.X[0, 0]
        self.args.locs = &self.locs[0, 0]
        self.args.nn = &self.nn[0, 0]
        self.args.theta = &self.theta[0]
        self.args.logdet = &self.logdet[0]
        self.args.ysy = &self.ysy[0]
        self.args.xsx = &self.xsx[0]
        self.args.ysx = &self.ysx[0]
        self.args.dlogdet = &self.dlogdet[0]
        self.args.dysy = &self.dysy[0]
        self.args.dysx = &self.dysx[0]
        self.args.dxsx = &self.dxsx[0]
        self.args.ainfo = &self.ainfo[0]
        self.args.fail = &self.fail[0]
        self.args.n = self.y.shape[0]
        self.args.p = self.X.shape[1]
        self.args.d = self.locs.shape[1]
        self.args.q = self.theta.shape[0]
        self.args.mp1 = self.nn.shape[1]
        self.args.kcode = kcode
        self.args.jitter = jitter


def ws_size(Py_ssize_t cap, Py_ssize_t d, Py_ssize_t p, Py_ssize_t q):
    """Doubles needed for one task-local scratch block."""
    return (cap * d + cap * p + cap + cap * cap * (1 + q)
            + cap + cap * p + cap + q * cap + cap + p)


# ---------------------------------------------------------------------------
# dense pieces on one local problem

cdef inline Py_ssize_t _count_row(const long long* row, Py_ssize_t mp1) noexcept nogil:
    cdef Py_ssize_t k = 0
    while k < mp1 and row[k] >= 0:
        k += 1
    return k


cdef inline void _gather_row(Py_ssize_t a, const RunArgs* A, const long long* row,
                             Py_ssize_t k, double* locsub, double* xsub,
                             double* ysub) noexcept nogil:
    # local frame is reversed row order: the conditioned observation sits last
    cdef Py_ssize_t g = <Py_ssize_t>row[k - 1 - a]
    cdef Py_ssize_t b
    for b in range(A.d):
        locsub[a * A.d + b] = A.locs[g * A.d + b]
    for b in range(A.p):
        xsub[a * A.p + b] = A.X[g * A.p + b]
    ysub[a] = A.y[g]


cdef void _fill_cov(const double* locsub, Py_ssize_t k, Py_ssize_t d,
                    const double* theta, Py_ssize_t q, int kcode, double jitter,
                    double* K, Py_ssize_t stride) noexcept nogil:
    cdef Py_ssize_t a, b
    for a in range(k):
        for b in range(a):
            K[a * stride + b] = _cov_entry(locsub + a * d, locsub + b * d,
                                           d, theta, q, kcode, 0, jitter)
        K[a * stride + a] = _cov_entry(locsub + a * d, locsub + a * d,
                                       d, theta, q, kcode, 1, jitter)


cdef void _fill_dcov(const double* locsub, Py_ssize_t k, Py_ssize_t d,
                     const double* theta, Py_ssize_t q, int kcode,
                     double* D, Py_ssize_t stride, Py_ssize_t mat_stride) noexcept nogil:
    cdef Py_ssize_t j, a, b
    cdef double* Dj
    for j in range(q):
        Dj = D + j * mat_stride
        for a in range(k):
            for b in range(a):
                Dj[a * stride + b] = _dcov_entry(j, locsub + a * d, locsub + b * d,
                                                 d, theta, q, kcode, 0)
            Dj[a * stride + a] = _dcov_entry(j, locsub + a * d, locsub + a * d,
                                             d, theta, q, kcode, 1)


cdef int _chol(double* K, Py_ssize_t k, Py_ssize_t stride) noexcept nogil:
    """In-place lower Cholesky; returns 0, or pivot index + 1 on failure."""
    cdef Py_ssize_t a, b, l
    cdef double s
    for a in range(k):
        for b in range(a):
            s = K[a * stride + b]
            for l in range(b):
                s -= K[a * stride + l] * K[b * stride + l]
            K[a * stride + b] = s / K[b * stride + b]
        s = K[a * stride + a]
        for l in range(a):
            s -= K[a * stride + l] * K[a * stride + l]
        if s <= 0.0:
            return <int>a + 1
        K[a * stride + a] = sqrt(s)
    return 0


cdef inline void _fsolve(const double* B, Py_ssize_t k, Py_ssize_t stride,
                         const double* rhs, Py_ssize_t rinc,
                         double* out, Py_ssize_t oinc) noexcept nogil:
    cdef Py_ssize_t a, l
    cdef double s
    for a in range(k):
        s = rhs[a * rinc]
        for l in range(a):
            s -= B[a * stride + l] * out[l * oinc]
        out[a * oinc] = s / B[a * stride + a]


cdef inline void _bsolve_elast(const double* B, Py_ssize_t k, Py_ssize_t stride,
                               double* u) noexcept nogil:
    # solves B'u = e_{k-1}: u is the transposed last row of the inverse factor
    cdef Py_ssize_t a, l
    cdef double s
    for a in range(k - 1, -1, -1):
        s = 1.0 if a == k - 1 else 0.0
        for l in range(a + 1, k):
            s -= B[l * stride + a] * u[l]
        u[a] = s / B[a * stride + a]


cdef inline void _deriv_solve(const double* B, Py_ssize_t k, Py_ssize_t stride,
                              const double* Dj, Py_ssize_t dstride,
                              const double* u, double* t, double* cj) noexcept nogil:
    # c_j solves B c = D_j u, with D_j given by its lower triangle
    cdef Py_ssize_t a, b
    cdef double v
    for a in range(k):
        t[a] = Dj[a * dstride + a] * u[a]
    for a in range(k):
        for b in range(a):
            v = Dj[a * dstride + b]
            t[a] += v * u[b]
            t[b] += v * u[a]
    _fsolve(B, k, stride, t, 1, cj, 1)


cdef void _contract(const RunArgs* A, Py_ssize_t i, const double* B, Py_ssize_t k,
                    Py_ssize_t stride, const double* z, const double* W,
                    const double* c, Py_ssize_t cstride, double* wc) noexcept nogil:
    cdef Py_ssize_t p = A.p
    cdef Py_ssize_t q = A.q
    cdef Py_ssize_t e = k - 1
    cdef double ze = z[e]
    cdef double cje, zc, s
    cdef const double* cj
    cdef const double* cl
    cdef Py_ssize_t a, b, j, l
    A.logdet[i] = 2.0 * log(B[e * stride + e])
    A.ysy[i] = ze * ze
    for b in range(p):
        A.ysx[i * p + b] = ze * W[e * p + b]
    for a in range(p):
        for b in range(p):
            A.xsx[(i * p + a) * p + b] = W[e * p + a] * W[e * p + b]
    for j in range(q):
        cj = c + j * cstride
        cje = cj[e]
        zc = 0.0
        for a in range(k):
            zc += z[a] * cj[a]
        for b in range(p):
            s = 0.0
            for a in range(k):
                s += W[a * p + b] * cj[a]
            wc[b] = s
        A.dlogdet[i * q + j] = cje
        A.dysy[i * q + j] = cje * ze * ze - 2.0 * ze * zc
        for b in range(p):
            A.dysx[(i * p + b) * q + j] = (cje * ze * W[e * p + b]
                                           - ze * wc[b] - zc * W[e * p + b])
        for a in range(p):
            for b in range(p):
                A.dxsx[((i * p + a) * p + b) * q + j] = (
                    cje * W[e * p + a] * W[e * p + b]
                    - wc[a] * W[e * p + b]
                    - W[e * p + a] * wc[b]
                )
    for j in range(q):
        cj = c + j * cstride
        for l in range(j + 1):
            cl = c + l * cstride
            s = 0.0
            for a in range(k):
                s += cj[a] * cl[a]
            s -= 0.5 * cj[e] * cl[e]
            A.ainfo[(i * q + j) * q + l] = s
            A.ainfo[(i * q + l) * q + j] = s


cdef int _obs_kernel(const RunArgs* A, Py_ssize_t i, double* ws,
                     Py_ssize_t cap) noexcept nogil:
    cdef const long long* row = A.nn + i * A.mp1
    cdef Py_ssize_t k = _count_row(row, A.mp1)
    cdef Py_ssize_t d = A.d
    cdef Py_ssize_t p = A.p
    cdef Py_ssize_t q = A.q
    cdef double* locsub = ws
    cdef double* xsub = locsub + cap * d
    cdef double* ysub = xsub + cap * p
    cdef double* K = ysub + cap
    cdef double* D = K + cap * cap
    cdef double* z = D + q * cap * cap
    cdef double* W = z + cap
    cdef double* u = W + cap * p
    cdef double* c = u + cap
    cdef double* t = c + q * cap
    cdef double* wc = t + cap
    cdef Py_ssize_t a, b, j
    cdef int piv
    for a in range(k):
        _gather_row(a, A, row, k, locsub, xsub, ysub)
    _fill_cov(locsub, k, d, A.theta, q, A.kcode, A.jitter, K, cap)
    _fill_dcov(locsub, k, d, A.theta, q, A.kcode, D, cap, cap * cap)
    piv = _chol(K, k, cap)
    if piv != 0:
        return piv
    _fsolve(K, k, cap, ysub, 1, z, 1)
    for b in range(p):
        _fsolve(K, k, cap, xsub + b, p, W + b, p)
    _bsolve_elast(K, k, cap, u)
    for j in range(q):
        _deriv_solve(K, k, cap, D + j * cap * cap, cap, u, t, c + j * cap)
    _contract(A, i, K, k, cap, z, W, c, cap, wc)
    return 0


def _first_failure(fail, Py_ssize_t i0, Py_ssize_t i1):
    nz = np.nonzero(np.asarray(fail[i0:i1]))[0]
    return int(nz[0] + i0) if nz.size else -1


# ---------------------------------------------------------------------------
# backends

def run_sequential(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail,
                   Py_ssize_t i0, Py_ssize_t i1, Py_ssize_t workers, Py_ssize_t cap):
    cdef _View v = _View(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail)
    cdef RunArgs* A = &v.args
    if i1 <= i0:
        return -1
    ws_arr = np.zeros(ws_size(cap, A.d, A.p, A.q))
    cdef double[::1] ws = ws_arr
    cdef Py_ssize_t i, first = -1
    cdef int piv
    with nogil:
        for i in range(i0, i1):
            piv = _obs_kernel(A, i, &ws[0], cap)
            if piv != 0:
                A.fail[i] = piv
                first = i
                break
    return int(first)


def run_task(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail,
             Py_ssize_t i0, Py_ssize_t i1, Py_ssize_t workers, Py_ssize_t cap):
    cdef _View v = _View(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail)
    cdef RunArgs* A = &v.args
    if i1 <= i0:
        return -1
    cdef Py_ssize_t T = max(1, min(workers, i1 - i0))
    ws_arr = np.zeros((T, ws_size(cap, A.d, A.p, A.q)))
    cdef double[:, ::1] ws = ws_arr
    cdef Py_ssize_t i, tid
    cdef int piv
    with nogil, parallel(num_threads=<int>T):
        tid = threadid()
        for i in prange(i0, i1, schedule="static"):
            piv = _obs_kernel(A, i, &ws[tid, 0], cap)
            if piv != 0:
                A.fail[i] = piv
    return _first_failure(fail, i0, i1)


cdef void _fill_one_entry(Py_ssize_t rr, Py_ssize_t ntri, const double* locsub,
                          Py_ssize_t k, Py_ssize_t d, const double* theta,
                          Py_ssize_t q, int kcode, double jitter,
                          double* K, double* D, Py_ssize_t cap) noexcept nogil:
    cdef Py_ssize_t mat = rr // ntri
    cdef Py_ssize_t r = rr % ntri
    cdef Py_ssize_t a = <Py_ssize_t>((sqrt(8.0 * r + 1.0) - 1.0) / 2.0)
    cdef Py_ssize_t b
    while (a + 1) * (a + 2) // 2 <= r:
        a += 1
    while a * (a + 1) // 2 > r:
        a -= 1
    b = r - a * (a + 1) // 2
    if mat == 0:
        K[a * cap + b] = _cov_entry(locsub + a * d, locsub + b * d, d, theta, q,
                                    kcode, a == b, jitter)
    else:
        D[(mat - 1) * cap * cap + a * cap + b] = _dcov_entry(
            mat - 1, locsub + a * d, locsub + b * d, d, theta, q, kcode, a == b)


def run_nested(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail,
               Py_ssize_t i0, Py_ssize_t i1, Py_ssize_t workers, Py_ssize_t cap):
    cdef _View v = _View(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail)
    cdef RunArgs* A = &v.args
    if i1 <= i0:
        return -1
    cdef Py_ssize_t T = max(1, workers)
    cdef Py_ssize_t d = A.d
    cdef Py_ssize_t p = A.p
    cdef Py_ssize_t q = A.q
    ws_arr = np.zeros(ws_size(cap, d, p, q))
    cdef double[::1] wsv = ws_arr
    cdef double* ws = &wsv[0]
    cdef double* locsub = ws
    cdef double* xsub = locsub + cap * d
    cdef double* ysub = xsub + cap * p
    cdef double* K = ysub + cap
    cdef double* D = K + cap * cap
    cdef double* z = D + q * cap * cap
    cdef double* W = z + cap
    cdef double* u = W + cap * p
    cdef double* c = u + cap
    cdef double* t = c + q * cap
    cdef double* wc = t + cap
    cdef const double* theta_p = A.theta
    cdef int kc = A.kcode
    cdef double jit = A.jitter
    cdef Py_ssize_t i, a, b, j, k, ntri, total, rr
    cdef const long long* row
    cdef int piv
    for i in range(i0, i1):
        row = A.nn + i * A.mp1
        k = _count_row(row, A.mp1)
        ntri = k * (k + 1) // 2
        total = (1 + q) * ntri
        # gather, spread over local rows; implicit barrier at loop end
        for a in prange(k, nogil=True, num_threads=<int>T, schedule="static"):
            _gather_row(a, A, row, k, locsub, xsub, ysub)
        # covariance and derivative entries, spread over the lower triangles
        for rr in prange(total, nogil=True, num_threads=<int>T, schedule="static"):
            _fill_one_entry(rr, ntri, locsub, k, d, theta_p, q, kc, jit, K, D, cap)
        # factorization and contractions on a single lane
        with nogil:
            piv = _chol(K, k, cap)
            if piv == 0:
                _fsolve(K, k, cap, ysub, 1, z, 1)
                for b in range(p):
                    _fsolve(K, k, cap, xsub + b, p, W + b, p)
                _bsolve_elast(K, k, cap, u)
                for j in range(q):
                    _deriv_solve(K, k, cap, D + j * cap * cap, cap, u, t, c + j * cap)
                _contract(A, i, K, k, cap, z, W, c, cap, wc)
        if piv != 0:
            A.fail[i] = piv
            return int(i)
    return -1


def run_staged(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail,
               Py_ssize_t i0, Py_ssize_t i1, Py_ssize_t workers, Py_ssize_t cap):
    """Batched execution: every stage sweeps all observations, then a barrier.

    Intermediates live in heap arrays with an observation-leading
    dimension; the per-task capacity tier does not apply here, rows are
    exactly m+1 wide.
    """
    cdef _View v = _View(y, X, locs, nn_idx, theta, kcode, jitter, slots, fail)
    cdef RunArgs* A = &v.args
    cdef Py_ssize_t count = i1 - i0
    if count <= 0:
        return -1
    cdef Py_ssize_t mp1 = A.mp1
    cdef Py_ssize_t d = A.d
    cdef Py_ssize_t p = A.p
    cdef Py_ssize_t q = A.q
    cdef Py_ssize_t T = max(1, min(workers, count))

    ks_arr = (np.asarray(nn_idx)[i0:i1] >= 0).sum(axis=1).astype(np.int64)
    locsub_a = np.zeros((count, mp1, d))
    xsub_a = np.zeros((count, mp1, p))
    ysub_a = np.zeros((count, mp1))
    K_a = np.zeros((count, mp1, mp1))
    D_a = np.zeros((count, q, mp1, mp1))
    z_a = np.zeros((count, mp1))
    W_a = np.zeros((count, mp1, p))
    u_a = np.zeros((count, mp1))
    c_a = np.zeros((count, q, mp1))
    t_a = np.zeros((T, mp1))
    wc_a = np.zeros((T, p))

    cdef long long[::1] ks = ks_arr
    cdef double[:, :, ::1] locsub = locsub_a
    cdef double[:, :, ::1] xsub = xsub_a
    cdef double[:, ::1] ysub = ysub_a
    cdef double[:, :, ::1] K = K_a
    cdef double[:, :, :, ::1] D = D_a
    cdef double[:, ::1] z = z_a
    cdef double[:, :, ::1] W = W_a
    cdef double[:, ::1] u = u_a
    cdef double[:, :, ::1] c = c_a
    cdef double[:, ::1] tb = t_a
    cdef double[:, ::1] wcb = wc_a

    cdef Py_ssize_t t, a, b, j, k, tid
    cdef int piv
    cdef int first

    # gather-all
    for t in prange(count, nogil=True, num_threads=<int>T, schedule="static"):
        k = ks[t]
        for a in range(k):
            _gather_row(a, A, A.nn + (i0 + t) * mp1, k,
                        &locsub[t, 0, 0], &xsub[t, 0, 0], &ysub[t, 0])
    # covariance-all
    for t in prange(count, nogil=True, num_threads=<int>T, schedule="static"):
        _fill_cov(&locsub[t, 0, 0], ks[t], d, A.theta, q, A.kcode, A.jitter,
                  &K[t, 0, 0], mp1)
    # derivative-all
    for t in prange(count, nogil=True, num_threads=<int>T, schedule="static"):
        _fill_dcov(&locsub[t, 0, 0], ks[t], d, A.theta, q, A.kcode,
                   &D[t, 0, 0, 0], mp1, mp1 * mp1)
    # factor-all
    for t in prange(count, nogil=True, num_threads=<int>T, schedule="static"):
        piv = _chol(&K[t, 0, 0], ks[t], mp1)
        if piv != 0:
            A.fail[i0 + t] = piv
    first = _first_failure(fail, i0, i1)
    if first >= 0:
        return first
    # solve-all: response, then design columns, then the unit vector
    for t in prange(count, nogil=True, num_threads=<int>T, schedule="static"):
        _fsolve(&K[t, 0, 0], ks[t], mp1, &ysub[t, 0], 1, &z[t, 0], 1)
    for t in prange(count, nogil=True, num_threads=<int>T, schedule="static"):
        for b in range(p):
            _fsolve(&K[t, 0, 0], ks[t], mp1, &xsub[t, 0, 0] + b, p, &W[t, 0, 0] + b, p)
    for t in prange(count, nogil=True, num_threads=<int>T, schedule="static"):
        _bsolve_elast(&K[t, 0, 0], ks[t], mp1, &u[t, 0])
    # derivative-solve-all
    with nogil, parallel(num_threads=<int>T):
        tid = threadid()
        for t in prange(count, schedule="static"):
            for j in range(q):
                _deriv_solve(&K[t, 0, 0], ks[t], mp1, &D[t, j, 0, 0], mp1,
                             &u[t, 0], &tb[tid, 0], &c[t, j, 0])
    # contract-all
    with nogil, parallel(num_threads=<int>T):
        tid = threadid()
        for t in prange(count, schedule="static"):
            _contract(A, i0 + t, &K[t, 0, 0], ks[t], mp1, &z[t, 0], &W[t, 0, 0],
                      &c[t, 0, 0], mp1, &wcb[tid, 0])
    return -1


# ---------------------------------------------------------------------------
# exhaustive ordered neighbor scan

cdef void _scan_row(Py_ssize_t i, const double* locs, Py_ssize_t d, Py_ssize_t m,
                    double* bd, long long* bi, long long* out) noexcept nogil:
    cdef Py_ssize_t nb = 0
    cdef Py_ssize_t j, l, pos
    cdef double d2, diff
    out[i * (m + 1)] = i
    for j in range(i):
        d2 = 0.0
        for l in range(d):
            diff = locs[i * d + l] - locs[j * d + l]
            d2 += diff * diff
        if nb == m and d2 >= bd[m - 1]:
            # not closer than the worst kept entry; an exact tie keeps
            # the earlier (smaller) index already stored
            continue
        if nb < m:
            nb += 1
        pos = nb - 1
        while pos > 0 and bd[pos - 1] > d2:
            bd[pos] = bd[pos - 1]
            bi[pos] = bi[pos - 1]
            pos -= 1
        bd[pos] = d2
        bi[pos] = j
    for j in range(nb):
        out[i * (m + 1) + 1 + j] = bi[j]


def neighbor_scan(double[:, ::1] locs, Py_ssize_t m, long long[:, ::1] out,
                  Py_ssize_t workers):
    """Fill an (n, m+1) index table whose sentinel cells are already -1."""
    cdef Py_ssize_t n = locs.shape[0]
    cdef Py_ssize_t d = locs.shape[1]
    cdef Py_ssize_t T = max(1, min(workers, n))
    bd_arr = np.empty((T, m))
    bi_arr = np.empty((T, m), dtype=np.int64)
    cdef double[:, ::1] bd = bd_arr
    cdef long long[:, ::1] bi = bi_arr
    cdef Py_ssize_t i, tid
    with nogil, parallel(num_threads=<int>T):
        tid = threadid()
        for i in prange(n, schedule="static", chunksize=64):
            _scan_row(i, &locs[0, 0], d, m, &bd[tid, 0], &bi[tid, 0], &out[0, 0])


RUNNERS = {
    "sequential": run_sequential,
    "task": run_task,
    "nested": run_nested,
    "staged": run_staged,
}
