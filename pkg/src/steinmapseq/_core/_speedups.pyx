# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels for the SVGD particle update.

The reductions over particles use exactly-rounded (fsum-style) summation so
that the assembled update direction is independent of particle storage
order; ``fallback.py`` implements the same contract with ``math.fsum``.
"""

from libc.math cimport exp, fabs, fmod, log, sqrt, M_PI
from libc.stdlib cimport free, malloc

DEF MAX_PARTIALS = 64


cdef double _kth_smallest(double* a, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    """In-place quickselect (Hoare partition); returns the k-th smallest."""
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j
    cdef double pivot, t
    while lo < hi:
        pivot = a[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                t = a[i]; a[i] = a[j]; a[j] = t
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            return a[k]
    return a[lo]


cdef double _median(double* a, Py_ssize_t n) noexcept nogil:
    """Median with numpy semantics: mean of the two middles for even n."""
    cdef Py_ssize_t k = n // 2
    cdef Py_ssize_t m
    cdef double hi, lo
    hi = _kth_smallest(a, n, k)
    if n % 2 == 1:
        return hi
    # after selection everything left of k is <= a[k]
    lo = a[0]
    for m in range(1, k):
        if a[m] > lo:
            lo = a[m]
    return (lo + hi) * 0.5


cdef inline double _wrap(double theta) noexcept nogil:
    # Matches wrap_angle(): np.mod(theta + pi, 2*pi) - pi with a guard for
    # the rounding edge where the mod lands on 2*pi.
    cdef double two_pi = 2.0 * M_PI
    cdef double w = fmod(theta + M_PI, two_pi)
    if w < 0.0:
        w += two_pi
    w -= M_PI
    if w >= M_PI:
        w -= two_pi
    return w


cdef inline int _accumulate(double x, double* partials, int n) noexcept nogil:
    """Shewchuk partials update, semantics identical to math.fsum.

    Finite doubles need at most ~40 partials, so MAX_PARTIALS cannot be
    reached for finite inputs; the guard merely avoids writing past the
    buffer.
    """
    cdef int i = 0
    cdef int j
    cdef double y, hi, lo, yr, t
    for j in range(n):
        y = partials[j]
        if fabs(x) < fabs(y):
            t = x
            x = y
            y = t
        hi = x + y
        yr = hi - x
        lo = y - yr
        if lo != 0.0:
            partials[i] = lo
            i += 1
        x = hi
    if i >= MAX_PARTIALS:
        i = MAX_PARTIALS - 1
    partials[i] = x
    return i + 1


cdef double _round_partials(double* partials, int n) noexcept nogil:
    cdef double hi, lo, x, y, yr
    if n == 0:
        return 0.0
    n -= 1
    hi = partials[n]
    lo = 0.0
    while n > 0:
        x = hi
        n -= 1
        y = partials[n]
        hi = x + y
        yr = hi - x
        lo = y - yr
        if lo != 0.0:
            break
    if n > 0 and ((lo < 0.0 and partials[n - 1] < 0.0) or
                  (lo > 0.0 and partials[n - 1] > 0.0)):
        y = lo * 2.0
        x = hi + y
        yr = x - hi
        if y == yr:
            hi = x
    return hi


cdef void _assemble(const double* K, const double* S, const double* diff,
                    double repulsion_scale, Py_ssize_t N, Py_ssize_t n,
                    double* out) noexcept nogil:
    # One fused addend per source particle: kappa*score + grad-kappa. The
    # fused value is computed identically on both backends, and the exact
    # summation over k makes the result independent of particle order.
    cdef Py_ssize_t i, k, c
    cdef int np_
    cdef double partials[MAX_PARTIALS]
    cdef double kik
    for i in range(N):
        for c in range(n):
            np_ = 0
            for k in range(N):
                kik = K[i * N + k]
                np_ = _accumulate(
                    kik * S[k * n + c] +
                    (repulsion_scale * diff[(i * N + k) * n + c]) * kik,
                    partials, np_)
            out[i * n + c] = _round_partials(partials, np_) / N


def assemble_direction(double[:, ::1] K, double[:, ::1] S,
                       double[:, :, ::1] diff, double repulsion_scale,
                       double[:, ::1] out):
    """out[i, c] = (1/N) * fsum_k(K[i,k]*S[k,c] + (scale*diff[i,k,c])*K[i,k])."""
    cdef Py_ssize_t N = K.shape[0]
    cdef Py_ssize_t n = S.shape[1]
    _assemble(&K[0, 0], &S[0, 0], &diff[0, 0, 0], repulsion_scale, N, n,
              &out[0, 0])


def svgd_direction(double[:, ::1] X, double[:, ::1] S,
                   unsigned char[::1] angular, double fixed_h,
                   double[:, ::1] out):
    """Fused kernel-weighted update direction; returns the bandwidth used.

    Computes pairwise (wrapped) differences, the RBF kernel matrix with
    either the fixed bandwidth (fixed_h > 0) or the median heuristic
    h = med^2 / ln(N+1), and the exactly-rounded direction assembly.
    """
    cdef Py_ssize_t N = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t i, k, c, m
    cdef double d, acc, h, med
    cdef Py_ssize_t npairs = N * (N - 1) // 2
    cdef double* diff = <double*> malloc(N * N * n * sizeof(double))
    cdef double* sq = <double*> malloc(N * N * sizeof(double))
    cdef double* K = <double*> malloc(N * N * sizeof(double))
    cdef double* dists = NULL
    if diff == NULL or sq == NULL or K == NULL:
        free(diff); free(sq); free(K)
        raise MemoryError
    try:
        # diff is antisymmetric and sq symmetric: fill the upper triangle
        # and mirror.
        for i in range(N):
            for c in range(n):
                diff[(i * N + i) * n + c] = 0.0
            sq[i * N + i] = 0.0
            for k in range(i + 1, N):
                acc = 0.0
                for c in range(n):
                    d = X[i, c] - X[k, c]
                    if angular[c]:
                        # wrap(-x) == -wrap(x) except at the -pi boundary,
                        # so the mirror is wrapped explicitly.
                        d = _wrap(d)
                        diff[(k * N + i) * n + c] = _wrap(X[k, c] - X[i, c])
                    else:
                        diff[(k * N + i) * n + c] = -d
                    diff[(i * N + k) * n + c] = d
                    acc += d * d
                sq[i * N + k] = acc
                sq[k * N + i] = acc

        if fixed_h > 0.0:
            h = fixed_h
        elif N < 2:
            h = 1.0
        else:
            dists = <double*> malloc(npairs * sizeof(double))
            if dists == NULL:
                raise MemoryError
            m = 0
            for i in range(N):
                for k in range(i + 1, N):
                    dists[m] = sqrt(sq[i * N + k])
                    m += 1
            med = _median(dists, npairs)
            h = med * med / log(<double> (N + 1)) if med > 0.0 else 1.0

        for i in range(N):
            K[i * N + i] = 1.0
            for k in range(i + 1, N):
                d = exp(-sq[i * N + k] / h)
                K[i * N + k] = d
                K[k * N + i] = d

        _assemble(K, &S[0, 0], diff, 2.0 / h, N, n, &out[0, 0])
    finally:
        free(diff)
        free(sq)
        free(K)
        if dists != NULL:
            free(dists)
    return h
