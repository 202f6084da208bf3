"""Compiled inner loops for kernel and nearest-neighbour imputation.

Every loop sums donors in a fixed order determined by the data alone, so
results do not depend on how callers schedule work.
"""

import numpy as np
from numba import njit

GAUSSIAN = 0
EPANECHNIKOV = 1


# Gaussian donors whose log-weight sits more than this below the largest
# contribute less than e^-50 (about 2e-22) relative weight and are skipped.
GAUSS_LOG_CUTOFF = 50.0


@njit(cache=True)
def _lower_bound(ps, x):
    lo, hi = 0, ps.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if ps[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def kernel_impute(p_recv, p_donor, y_donor, h, family, out, empty):
    """Kernel-weighted donor mean for every receiver.

    Donors are sorted by score once; each receiver sweeps outward from its
    nearest donor, left side then right side, so the summation order is
    fixed. Gaussian weights are shifted by the largest log-weight (the
    nearest donor) before exponentiating, which keeps the denominator at
    least 1, and the sweep stops once weights drop below e^-50 of the
    largest. A receiver whose denominator is still zero (Epanechnikov, no
    donor within h) gets ``out = nan`` and ``empty = True``.
    """
    nd = p_donor.shape[0]
    order = np.argsort(p_donor, kind="mergesort")
    ps = p_donor[order]
    ys = y_donor[order]
    for i in range(p_recv.shape[0]):
        pi = p_recv[i]
        pos = _lower_bound(ps, pi)
        num = 0.0
        den = 0.0
        if family == GAUSSIAN:
            dmin = np.inf
            if pos > 0:
                dmin = pi - ps[pos - 1]
            if pos < nd and ps[pos] - pi < dmin:
                dmin = ps[pos] - pi
            umin = dmin / h
            amax = -0.5 * umin * umin
            for j in range(pos - 1, -1, -1):
                u = (ps[j] - pi) / h
                a = -0.5 * u * u - amax
                if a < -GAUSS_LOG_CUTOFF:
                    break
                w = np.exp(a)
                num += w * ys[j]
                den += w
            for j in range(pos, nd):
                u = (ps[j] - pi) / h
                a = -0.5 * u * u - amax
                if a < -GAUSS_LOG_CUTOFF:
                    break
                w = np.exp(a)
                num += w * ys[j]
                den += w
        else:
            for j in range(pos - 1, -1, -1):
                u = (ps[j] - pi) / h
                if u <= -1.0:
                    break
                w = 0.75 * (1.0 - u * u)
                num += w * ys[j]
                den += w
            for j in range(pos, nd):
                u = (ps[j] - pi) / h
                if u >= 1.0:
                    break
                w = 0.75 * (1.0 - u * u)
                num += w * ys[j]
                den += w
        if den < 1e-300:
            out[i] = np.nan
            empty[i] = True
        else:
            out[i] = num / den
            empty[i] = False


@njit(cache=True)
def nearest_1d(p_recv, p_donor, y_donor, k, out):
    """Mean outcome of the k donors closest in |p_j - p_i|.

    Ties at the k-th distance go to the lowest donor index: donors are
    ranked by (distance, index).
    """
    nd = p_donor.shape[0]
    order = np.argsort(p_donor, kind="mergesort")
    ps = p_donor[order]
    for i in range(p_recv.shape[0]):
        pi = p_recv[i]
        lo = _lower_bound(ps, pi)
        left = lo - 1
        right = lo
        taken = 0
        kth = 0.0
        # two-pointer sweep collects the k nearest by distance
        while taken < k:
            if left < 0:
                d = ps[right] - pi
                right += 1
            elif right >= nd:
                d = pi - ps[left]
                left -= 1
            else:
                dl = pi - ps[left]
                dr = ps[right] - pi
                if dl <= dr:
                    d = dl
                    left -= 1
                else:
                    d = dr
                    right += 1
            kth = d
            taken += 1
        # widen to every donor tied with the k-th distance
        while left >= 0 and pi - ps[left] <= kth:
            left -= 1
        while right < nd and ps[right] - pi <= kth:
            right += 1
        m = right - left - 1
        cand = order[left + 1:right]
        dist = np.empty(m)
        for c in range(m):
            dist[c] = abs(p_donor[cand[c]] - pi)
        # rank by (distance, index)
        idx_sorted = np.argsort(cand, kind="mergesort")
        cand2 = cand[idx_sorted]
        dist2 = dist[idx_sorted]
        rank = np.argsort(dist2, kind="mergesort")
        s = 0.0
        for c in range(k):
            s += y_donor[cand2[rank[c]]]
        out[i] = s / k
