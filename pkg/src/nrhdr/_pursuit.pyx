# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled greedy sparse-Fourier pursuit over a batch of support windows.

Same contract as :func:`nrhdr._pursuit_py.pursue_batch`; see that module for
the meaning of every argument. Complex arithmetic is spelled out on split
real/imaginary planes so the inner loop vectorizes without libgcc helpers.
"""

import numpy as np
cimport numpy as cnp

from nrhdr._pursuit_py import pair_metric, tie_rank

cdef double RELIABLE_E = 1e-12
cdef double ABS_STOP = 1e-30

cnp.import_array()


cdef double TIE_RTOL = 1e-10


cdef inline double _score(double nr, double ni, const double[:, ::1] P, Py_ssize_t l) noexcept nogil:
    # P[3] carries the selection prior
    return (P[0, l] * nr * nr + 2.0 * P[1, l] * nr * ni + P[2, l] * ni * ni) * P[3, l]


cdef Py_ssize_t _select(double[:, ::1] nr, double[:, ::1] ni, const double[:, ::1] P,
                        const char[::1] ok, const long[::1] rank, Py_ssize_t b) noexcept nogil:
    # among scores within TIE_RTOL of the maximum, the lowest-ranked frequency
    cdef Py_ssize_t l, best = -1, tt = nr.shape[1]
    cdef double s, best_s = -1.0
    for l in range(tt):
        if ok[l]:
            s = _score(nr[b, l], ni[b, l], P, l)
            if s > best_s:
                best_s = s
    if best_s < 0.0:
        return -1
    best_s *= 1.0 - TIE_RTOL
    for l in range(tt):
        if ok[l] and _score(nr[b, l], ni[b, l], P, l) >= best_s:
            if best < 0 or rank[l] < rank[best]:
                best = l
    return best


cdef inline bint _stop(double dec, double e, double e0, double min_gain) noexcept nogil:
    # mirrors should_stop; e is the energy before the step
    if dec <= ABS_STOP * e0:
        return True
    return e > RELIABLE_E * e0 and dec < min_gain * e


cdef void _pursue_one(
    double[:, ::1] nr, double[:, ::1] ni,
    const double[::1] wpr, const double[::1] wpi,
    const double[:, ::1] wqr, const double[:, ::1] wqi,
    const double[:, ::1] hr, const double[:, ::1] hi,
    const double[:, ::1] P, const char[::1] ok, const double[::1] d,
    const double[::1] gsr, const double[::1] gsi,
    const long[:, ::1] shift, const long[::1] mirror, const long[::1] rank,
    double e0, int max_iter, double gamma, double min_gain,
    double[:, ::1] cr, double[:, ::1] ci,
    double[::1] energy, long[::1] n_done, Py_ssize_t b,
) noexcept nogil:
    cdef Py_ssize_t tt = nr.shape[1]
    cdef Py_ssize_t l, q, best, k, kk, di, ei, it
    cdef double e, dec
    cdef bint stop
    cdef double ar, ai, br, bi, tr, ti, accr, acci, gr, gi, vv
    cdef double aqr[4]
    cdef double aqi[4]
    cdef double bqr[4]
    cdef double bqi[4]

    e = e0
    energy[0] = e0
    n_done[b] = 0
    if e0 <= 0.0:
        for it in range(max_iter):
            energy[it + 1] = 0.0
        return

    best = _select(nr, ni, P, ok, rank, b)

    for it in range(max_iter):
        if best < 0:
            energy[it + 1] = e
            continue
        k = best
        kk = mirror[k]
        if kk == k:
            ar = gamma * P[0, k] * nr[b, k]
            ai = 0.0
            br = 0.0
            bi = 0.0
            dec = 2.0 * ar * nr[b, k] - ar * ar * d[k]
            cr[b, k] += ar
        else:
            # least-squares step for the real pair, x = M^+ v = (P v) / 2
            ar = 0.5 * gamma * (P[0, k] * nr[b, k] + P[1, k] * ni[b, k])
            ai = 0.5 * gamma * (P[1, k] * nr[b, k] + P[2, k] * ni[b, k])
            br = ar
            bi = -ai
            gr = gsr[k]
            gi = gsi[k]
            vv = 2.0 * (ar * ar + ai * ai) * d[k] + 2.0 * ((ar * ar - ai * ai) * gr - 2.0 * ar * ai * gi)
            dec = 4.0 * (ar * nr[b, k] + ai * ni[b, k]) - vv
            cr[b, k] += ar
            ci[b, k] += ai
            cr[b, kk] += br
            ci[b, kk] += bi
        for q in range(4):
            aqr[q] = hr[q, k] * ar - hi[q, k] * ai
            aqi[q] = hr[q, k] * ai + hi[q, k] * ar
            bqr[q] = hr[q, kk] * br - hi[q, kk] * bi
            bqi[q] = hr[q, kk] * bi + hi[q, kk] * br

        for l in range(tt):
            di = shift[k, l]
            ei = shift[kk, l]
            accr = ar * wpr[di] - ai * wpi[di] + br * wpr[ei] - bi * wpi[ei]
            acci = ar * wpi[di] + ai * wpr[di] + br * wpi[ei] + bi * wpr[ei]
            for q in range(4):
                tr = aqr[q] * wqr[q, di] - aqi[q] * wqi[q, di] + bqr[q] * wqr[q, ei] - bqi[q] * wqi[q, ei]
                ti = aqr[q] * wqi[q, di] + aqi[q] * wqr[q, di] + bqr[q] * wqi[q, ei] + bqi[q] * wqr[q, ei]
                accr += hr[q, l] * tr + hi[q, l] * ti
                acci += hr[q, l] * ti - hi[q, l] * tr
            nr[b, l] -= accr
            ni[b, l] -= acci
        best = _select(nr, ni, P, ok, rank, b)

        stop = _stop(dec, e, e0, min_gain)
        e = e - dec
        energy[it + 1] = e
        n_done[b] = it + 1
        if stop:
            for l in range(it + 1, max_iter):
                energy[l + 1] = e
            return


def pursue_batch(N0, wp_hat, wq_hat, H, e0, int max_iter, double gamma, double min_gain, prior=None):
    N0 = np.asarray(N0, dtype=np.complex128)
    cdef Py_ssize_t nb = N0.shape[0]
    cdef Py_ssize_t t = N0.shape[1]
    cdef Py_ssize_t tt = t * t
    cdef Py_ssize_t b

    H = np.asarray(H, dtype=np.complex128).reshape(4, tt)
    wp_hat = np.asarray(wp_hat, dtype=np.complex128).reshape(nb, tt)
    wq_hat = np.asarray(wq_hat, dtype=np.complex128).reshape(nb, 4, tt)
    cdef double[::1] e0v = np.ascontiguousarray(e0, dtype=np.float64)

    cdef double[:, ::1] nr = np.ascontiguousarray(N0.reshape(nb, tt).real)
    cdef double[:, ::1] ni = np.ascontiguousarray(N0.reshape(nb, tt).imag)
    cdef double[:, ::1] hr = np.ascontiguousarray(H.real)
    cdef double[:, ::1] hi = np.ascontiguousarray(H.imag)
    cdef double[:, ::1] wpr_all = np.ascontiguousarray(wp_hat.real)
    cdef double[:, ::1] wpi_all = np.ascontiguousarray(wp_hat.imag)
    cdef double[:, :, ::1] wqr_all = np.ascontiguousarray(wq_hat.real)
    cdef double[:, :, ::1] wqi_all = np.ascontiguousarray(wq_hat.imag)

    idx = np.arange(t)
    k1, k2 = np.divmod(np.arange(tt), t)
    shift_np = (((idx[None, :, None] - k1[:, None, None]) % t) * t
                + (idx[None, None, :] - k2[:, None, None]) % t).reshape(tt, tt)
    cdef const long[:, ::1] shift = np.ascontiguousarray(shift_np, dtype=np.int_)
    cdef const long[::1] mirror = np.ascontiguousarray(((-k1) % t) * t + (-k2) % t, dtype=np.int_)
    cdef const long[::1] rank = np.ascontiguousarray(tie_rank(t), dtype=np.int_)

    P_np, D_np, g_np = pair_metric(wp_hat, wq_hat, H)
    ok_np = ((P_np[:, 0] > 0) | (P_np[:, 2] > 0)).astype(np.int8)
    prior_np = np.ones(tt) if prior is None else np.asarray(prior, dtype=np.float64).reshape(tt)
    P_np = np.concatenate([P_np, np.broadcast_to(prior_np, (nb, 1, tt))], axis=1)
    cdef double[:, :, ::1] P = np.ascontiguousarray(P_np)
    cdef char[:, ::1] ok = ok_np
    cdef double[:, ::1] dv = np.ascontiguousarray(D_np)
    cdef double[:, ::1] gsr = np.ascontiguousarray(g_np.real)
    cdef double[:, ::1] gsi = np.ascontiguousarray(g_np.imag)

    C_r = np.zeros((nb, tt))
    C_i = np.zeros((nb, tt))
    energy_np = np.zeros((nb, max_iter + 1))
    n_np = np.zeros(nb, dtype=np.int_)
    cdef double[:, ::1] cr = C_r
    cdef double[:, ::1] ci = C_i
    cdef double[:, ::1] energy = energy_np
    cdef long[::1] n_done = n_np

    with nogil:
        for b in range(nb):
            _pursue_one(nr, ni, wpr_all[b], wpi_all[b], wqr_all[b], wqi_all[b], hr, hi,
                        P[b], ok[b], dv[b], gsr[b], gsi[b], shift, mirror, rank, e0v[b], max_iter, gamma, min_gain,
                        cr, ci, energy[b], n_done, b)

    C = (C_r + 1j * C_i).reshape(nb, t, t)
    return C, n_np.astype(np.int64), energy_np
