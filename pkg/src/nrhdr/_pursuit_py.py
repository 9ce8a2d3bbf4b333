"""Pure numpy greedy sparse-Fourier pursuit (fallback for the compiled kernel).

Every support window is a ``T x T`` patch carrying two kinds of linear
observations of the unknown model ``g = sum_k c_k phi_k``:

* point observations (one cell, unit weight in the sum), and
* binned observations: the sum over the three cells of an L-shaped pixel whose
  origin is the top-left cell of its 2x2 block; ``q`` names the missing corner.

With ``phi_k[c] = exp(2j*pi*k.c/T)`` a binned observation of orientation ``q``
at origin ``c0`` sees ``phi_k[c0] * H_q(k)``, so the weighted Gram matrix of
the degraded basis functions is

    G(l, u) = Wp^(l - u) + sum_q conj(H_q(l)) H_q(u) Wq^(l - u)

where ``Wp^``/``Wq^`` are the 2D DFTs of the per-family weight maps. The
projection numerators ``N(k) = <r, A phi_k>_w`` for all ``k`` are then updated
in O(T^2) per iteration without touching the spatial residual.
"""

import numpy as np

TIE_RTOL = 1e-10
# below RELIABLE_E * e0 the running energy is cancellation noise
RELIABLE_E = 1e-12
ABS_STOP = 1e-30


def should_stop(dec, e, e0, min_gain):
    """Early stop on the decrease ``dec`` of one step from energy ``e``.

    The running energy is a difference of large numbers, so once it falls
    under ``RELIABLE_E * e0`` the relative test would compare against
    roundoff; only the (accurate) decrease itself can stop the fit then.
    """
    if dec <= ABS_STOP * e0:
        return True
    return e > RELIABLE_E * e0 and dec < min_gain * e


def _shift_tables(t):
    idx = np.arange(t)
    k1, k2 = np.divmod(np.arange(t * t), t)
    rows = (idx[None, :] - k1[:, None]) % t
    cols = (idx[None, :] - k2[:, None]) % t
    mirror = ((-k1) % t) * t + (-k2) % t
    return rows, cols, mirror


def tie_rank(t):
    """Tie-break order over flat DFT indices: lowest |k| first, then flat index."""
    k = np.fft.fftfreq(t, 1.0 / t).astype(np.int64)
    mag = (k[:, None] ** 2 + k[None, :] ** 2).ravel()
    order = np.lexsort((np.arange(t * t), mag))
    rank = np.empty(t * t, dtype=np.int64)
    rank[order] = np.arange(t * t)
    return rank


def pair_metric(wp_hat, wq_hat, H, tol=1e-12):
    """Per-candidate quadratic form turning a numerator into an energy decrease.

    A non-self-conjugate k is fitted together with -k as the real function
    ``2 Re(delta * psi_k)``. Writing delta = a + ib, its weighted energy is
    ``2 x^T M x`` with ``M = [[D + g_r, -g_i], [-g_i, D - g_r]]``,
    ``g = G(-k, k)``. The least-squares step is ``x = M^+ v`` with
    ``v = (Re N, Im N)`` and the energy decrease is ``2 v^T M^+ v``.

    Returns ``(P, D, g)`` where ``P`` (nb, 3, T*T) holds the entries
    (rr, ri, ii) of ``2 M^+`` for pairs and of ``1/D`` in rr for self-conjugate
    candidates, so the score is ``v^T P v`` in both cases.
    """
    wp_hat = np.asarray(wp_hat, dtype=np.complex128)
    nb = wp_hat.shape[0]
    tt = wp_hat[0].size
    t = int(round(np.sqrt(tt)))
    wp = wp_hat.reshape(nb, tt)
    wq = np.asarray(wq_hat, dtype=np.complex128).reshape(nb, 4, tt)
    H = np.asarray(H, dtype=np.complex128).reshape(4, tt)
    k1, k2 = np.divmod(np.arange(tt), t)
    twice = ((-2 * k1) % t) * t + (-2 * k2) % t
    selfconj = twice == 0

    D = wp[:, :1].real + (np.abs(H) ** 2 * wq[:, :, :1].real).sum(axis=1)
    g = wp[:, twice] + (H ** 2 * wq[:, :, twice]).sum(axis=1)
    cut = tol * D.max(axis=1, keepdims=True)
    mag = np.abs(g)
    lam1, lam2 = D + mag, D - mag
    # leading eigenvector, taken from whichever row of M - lam1*I is better scaled
    ua = np.stack([g.real + mag, -g.imag])
    ub = np.stack([-g.imag, mag - g.real])
    u = np.where(np.hypot(*ua) >= np.hypot(*ub), ua, ub)
    un = np.hypot(*u)
    iso = un <= 1e-14 * np.maximum(D, 1e-300)
    u = np.where(iso, np.stack([np.ones_like(D), np.zeros_like(D)]), u / np.where(iso, 1.0, un))
    inv1 = np.where(lam1 > cut, 2.0 / np.where(lam1 > cut, lam1, 1.0), 0.0)
    inv2 = np.where(lam2 > cut, 2.0 / np.where(lam2 > cut, lam2, 1.0), 0.0)
    ux, uy = u
    P = np.empty((nb, 3, tt))
    P[:, 0] = inv1 * ux * ux + inv2 * uy * uy
    P[:, 1] = (inv1 - inv2) * ux * uy
    P[:, 2] = inv1 * uy * uy + inv2 * ux * ux
    sc = np.broadcast_to(selfconj, D.shape)
    P[:, 0] = np.where(sc, np.where(D > cut, 1.0 / np.where(D > cut, D, 1.0), 0.0), P[:, 0])
    P[:, 1] = np.where(sc, 0.0, P[:, 1])
    P[:, 2] = np.where(sc, 0.0, P[:, 2])
    ok = D > cut
    P[:, :, :] = np.where(ok[:, None], P, 0.0)
    return P, D, g


def pursue_batch(N0, wp_hat, wq_hat, H, e0, max_iter, gamma, min_gain, prior=None):
    """Run the weighted greedy pursuit independently on ``nb`` windows.

    Parameters
    ----------
    N0 : complex array (nb, T, T)
        DFT of the weighted back-projected observations, i.e. the initial
        projection numerators.
    wp_hat : complex array (nb, T, T)
        DFT of the point-observation weight map.
    wq_hat : complex array (nb, 4, T, T)
        DFT of the binned-observation weight maps, one per orientation,
        sampled at the L origins.
    H : complex array (4, T, T)
        Frequency response of the three-cell L kernel per orientation.
    e0 : float array (nb,)
        Initial weighted residual energy (sum of w * y**2).
    max_iter, gamma, min_gain
        Iteration cap, update damping in (0, 1], and the early-stop threshold
        on the relative energy decrease of one iteration.
    prior : float array (T, T), optional
        Multiplies the selection score of every candidate (not its update);
        ``None`` selects purely by energy decrease.

    Returns
    -------
    C : complex array (nb, T, T)
        Expansion coefficients; conjugate symmetric by construction.
    n_iter : int array (nb,)
        Iterations actually performed.
    energy : float array (nb, max_iter + 1)
        Weighted residual energy before the first and after every iteration,
        held constant after an early stop.
    """
    N0 = np.asarray(N0, dtype=np.complex128)
    nb, t, _ = N0.shape
    tt = t * t
    H = np.asarray(H, dtype=np.complex128).reshape(4, tt)
    Hc = np.conj(H)
    wp_hat = np.asarray(wp_hat, dtype=np.complex128).reshape(nb, t, t)
    wq_hat = np.asarray(wq_hat, dtype=np.complex128).reshape(nb, 4, t, t)
    e0 = np.asarray(e0, dtype=np.float64)
    rows, cols, mirror = _shift_tables(t)
    rank = tie_rank(t)
    prior = np.ones(tt) if prior is None else np.asarray(prior, dtype=np.float64).reshape(tt)

    C = np.zeros((nb, tt), dtype=np.complex128)
    n_iter = np.zeros(nb, dtype=np.int64)
    energy = np.zeros((nb, max_iter + 1))

    P_all, D_all, g_all = pair_metric(wp_hat, wq_hat, H)

    for b in range(nb):
        N = N0[b].reshape(tt).copy()
        wp = wp_hat[b]
        wq = wq_hat[b]
        prr, pri, pii = P_all[b]
        D, g_self = D_all[b], g_all[b]
        ok = (prr > 0) | (pii > 0)
        e = float(e0[b])
        energy[b, :] = e
        if e <= 0.0:
            energy[b, 1:] = 0.0
            continue

        for it in range(max_iter):
            nr, ni = N.real, N.imag
            score = np.where(ok, (prr * nr * nr + 2.0 * pri * nr * ni + pii * ni * ni) * prior, -1.0)
            top = score.max()
            if top < 0.0:
                break
            # exact ties (symmetric layouts) go to the lowest frequency
            tied = np.flatnonzero(score >= top * (1.0 - TIE_RTOL))
            k = int(tied[np.argmin(rank[tied])])
            kk = int(mirror[k])
            dk = (rows[k][:, None], cols[k][None, :])
            if kk == k:
                delta = gamma * prr[k] * N[k].real
                dec = 2.0 * delta * N[k].real - delta ** 2 * D[k]
                t_q = (H[:, k] * delta)[:, None, None] * wq[(slice(None),) + dk]
                upd = delta * wp[dk] + np.einsum("qij,qij->ij", Hc.reshape(4, t, t), t_q)
                C[b, k] += delta
            else:
                a = 0.5 * gamma * (prr[k] * N[k].real + pri[k] * N[k].imag)
                bb = 0.5 * gamma * (pri[k] * N[k].real + pii[k] * N[k].imag)
                delta = complex(a, bb)
                dc = np.conj(delta)
                dkk = (rows[kk][:, None], cols[kk][None, :])
                vv = 2.0 * abs(delta) ** 2 * D[k] + 2.0 * (delta ** 2 * g_self[k]).real
                dec = 4.0 * (dc * N[k]).real - vv
                t_q = ((H[:, k] * delta)[:, None, None] * wq[(slice(None),) + dk]
                       + (H[:, kk] * dc)[:, None, None] * wq[(slice(None),) + dkk])
                upd = delta * wp[dk] + dc * wp[dkk] + np.einsum("qij,qij->ij", Hc.reshape(4, t, t), t_q)
                C[b, k] += delta
                C[b, kk] += dc
            N -= upd.reshape(tt)
            stop = should_stop(dec, e, e0[b], min_gain)
            e -= dec
            energy[b, it + 1:] = e
            n_iter[b] = it + 1
            if stop:
                break

    return C.reshape(nb, t, t), n_iter, energy
