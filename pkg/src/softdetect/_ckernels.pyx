"""Compiled trellis kernels. Mirrors ``_pykernels`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log, log1p


cdef inline double _mstar(double a, double b, bint maxlog) noexcept nogil:
    cdef double t
    if a < b:
        t = a
        a = b
        b = t
    if maxlog or b == -INFINITY:
        return a
    return a + log1p(exp(b - a))


def bcjr(const int[:, ::1] next_state, const unsigned char[:, ::1] parity,
         const double[:, ::1] llr, bint maxlog):
    """Log-domain forward-backward over a rate-1/2 systematic trellis.

    Starts and ends in state 0. Returns a-posteriori LLRs of the
    (systematic, parity) bit of every step, shape (T, 2).
    """
    cdef Py_ssize_t S = next_state.shape[0]
    cdef Py_ssize_t T = llr.shape[0]
    alpha_arr = np.empty((T + 1, S))
    beta_arr = np.empty((T + 1, S))
    post_arr = np.empty((T, 2))
    cdef double[:, ::1] A = alpha_arr
    cdef double[:, ::1] B = beta_arr
    cdef double[:, ::1] P = post_arr
    cdef Py_ssize_t t, s, ns
    cdef int u, p
    cdef double g, m, v, ls, lp, s0, s1, p0, p1

    with nogil:
        for s in range(S):
            A[0, s] = -INFINITY
            B[T, s] = -INFINITY
        A[0, 0] = 0.0
        B[T, 0] = 0.0

        for t in range(T):
            ls = 0.5 * llr[t, 0]
            lp = 0.5 * llr[t, 1]
            for s in range(S):
                A[t + 1, s] = -INFINITY
            for s in range(S):
                if A[t, s] == -INFINITY:
                    continue
                for u in range(2):
                    p = parity[s, u]
                    g = (ls if u == 0 else -ls) + (lp if p == 0 else -lp)
                    ns = next_state[s, u]
                    A[t + 1, ns] = _mstar(A[t + 1, ns], A[t, s] + g, maxlog)
            m = -INFINITY
            for s in range(S):
                if A[t + 1, s] > m:
                    m = A[t + 1, s]
            for s in range(S):
                A[t + 1, s] -= m

        for t in range(T - 1, -1, -1):
            ls = 0.5 * llr[t, 0]
            lp = 0.5 * llr[t, 1]
            m = -INFINITY
            for s in range(S):
                v = -INFINITY
                for u in range(2):
                    p = parity[s, u]
                    g = (ls if u == 0 else -ls) + (lp if p == 0 else -lp)
                    v = _mstar(v, g + B[t + 1, next_state[s, u]], maxlog)
                B[t, s] = v
                if v > m:
                    m = v
            for s in range(S):
                B[t, s] -= m

        for t in range(T):
            ls = 0.5 * llr[t, 0]
            lp = 0.5 * llr[t, 1]
            s0 = -INFINITY
            s1 = -INFINITY
            p0 = -INFINITY
            p1 = -INFINITY
            for s in range(S):
                if A[t, s] == -INFINITY:
                    continue
                for u in range(2):
                    p = parity[s, u]
                    g = (ls if u == 0 else -ls) + (lp if p == 0 else -lp)
                    v = A[t, s] + g + B[t + 1, next_state[s, u]]
                    if u == 0:
                        s0 = _mstar(s0, v, maxlog)
                    else:
                        s1 = _mstar(s1, v, maxlog)
                    if p == 0:
                        p0 = _mstar(p0, v, maxlog)
                    else:
                        p1 = _mstar(p1, v, maxlog)
            P[t, 0] = s0 - s1
            P[t, 1] = p0 - p1

    return post_arr


def pattern_llrs(const double[:, ::1] lp0, const double[:, ::1] lp1,
                 const double[:, ::1] ll, const cnp.int64_t[::1] mapper, bint maxlog):
    """Bit-domain extrinsic LLRs by enumerating every bit pattern.

    ``lp0``/``lp1`` are (T, N) bit log-priors, ``ll`` the (T, M) symbol
    log-likelihoods and ``mapper`` the MSB-first pattern -> symbol table.
    Exact mode uses a max-shifted log-sum-exp per hypothesis.
    """
    cdef Py_ssize_t T = lp0.shape[0]
    cdef Py_ssize_t N = lp0.shape[1]
    cdef Py_ssize_t P = mapper.shape[0]
    out_arr = np.empty((T, N))
    tab_arr = np.empty(P)
    val_arr = np.empty(P)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] tab = tab_arr
    cdef double[::1] val = val_arr
    cdef Py_ssize_t t, n, i, k, p, size, shift
    cdef double a0, a1, v, m0, m1, s0, s1

    with nogil:
        for t in range(T):
            for n in range(N):
                # log-prior of every pattern, bit n contributing nothing
                tab[0] = 0.0
                size = 1
                for i in range(N):
                    if i == n:
                        a0 = 0.0
                        a1 = 0.0
                    else:
                        a0 = lp0[t, i]
                        a1 = lp1[t, i]
                    for k in range(size - 1, -1, -1):
                        v = tab[k]
                        tab[2 * k] = v + a0
                        tab[2 * k + 1] = v + a1
                    size *= 2
                shift = N - 1 - n
                m0 = -INFINITY
                m1 = -INFINITY
                for p in range(P):
                    v = tab[p] + ll[t, mapper[p]]
                    val[p] = v
                    if (p >> shift) & 1:
                        if v > m1:
                            m1 = v
                    elif v > m0:
                        m0 = v
                if maxlog or m0 == -INFINITY or m1 == -INFINITY:
                    out[t, n] = m0 - m1
                    continue
                s0 = 0.0
                s1 = 0.0
                for p in range(P):
                    if (p >> shift) & 1:
                        s1 += exp(val[p] - m1)
                    else:
                        s0 += exp(val[p] - m0)
                out[t, n] = (m0 + log(s0)) - (m1 + log(s1))
    return out_arr
