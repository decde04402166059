"""Pure-numpy reference implementations of the hot kernels.

These mirror the numba kernels in ``jit.py`` exactly (same arguments, same
tie-breaking, same scan order) so either backend can serve every caller.
"""

import numpy as np
from scipy.special import gammaln

_PHASE_GUARD = 4  # max BFS phases = _PHASE_GUARD * n + 8


def _bfs_levels(res, source, tol):
    n = res.shape[0]
    level = np.full(n, -1, dtype=np.int64)
    level[source] = 0
    frontier = np.zeros(n, dtype=bool)
    frontier[source] = True
    depth = 0
    adj = res > tol
    while frontier.any():
        depth += 1
        reached = adj[frontier].any(axis=0)
        fresh = reached & (level < 0)
        if not fresh.any():
            break
        level[fresh] = depth
        frontier = fresh
    return level


def dinic_maxflow(capacity, source, sink, tol=1e-12):
    """Max flow on a dense capacity matrix via shortest-augmenting paths.

    Returns ``(flow_value, source_side)`` where ``source_side[i]`` is True iff
    node i is reachable from the source in the final residual graph (the
    min-cut partition).
    """
    n = capacity.shape[0]
    res = np.array(capacity, dtype=np.float64, copy=True)
    flow = 0.0
    phases = 0
    while True:
        level = _bfs_levels(res, source, tol)
        if level[sink] < 0:
            break
        phases += 1
        if phases > _PHASE_GUARD * n + 8:
            raise RuntimeError("max-flow did not converge")
        alive = np.ones(n, dtype=bool)
        while True:
            # Greedy walk in the level graph, pruning dead ends.
            path = [source]
            pos = source
            ok = True
            while pos != sink:
                nxt = np.flatnonzero(
                    (res[pos] > tol) & (level == level[pos] + 1) & alive
                )
                if nxt.size == 0:
                    if pos == source:
                        ok = False
                        break
                    alive[pos] = False
                    path.pop()
                    pos = path[-1]
                    continue
                pos = int(nxt[0])
                path.append(pos)
            if not ok:
                break
            us = np.array(path[:-1])
            vs = np.array(path[1:])
            aug = res[us, vs].min()
            res[us, vs] -= aug
            res[vs, us] += aug
            flow += aug
    source_side = _bfs_levels(res, source, tol) >= 0
    return flow, source_side


def grid_scan_descending(m1_centers, c2_centers, c3_centers, lam, rhs, tau,
                         w1, w2, w3):
    """Find the first feasible grid cell, scanning m1 slices in given order.

    A cell centered at (c1, c2, c3) with half-widths (w1, w2, w3) is feasible
    when its most favorable corner satisfies the studentized tail constraint,
    the variance-nonnegativity constraint, and every half-space
    ``lam @ m <= rhs`` (rhs already includes the cell margin).  Returns
    ``(slice_index, c2, c3)`` of the first feasible cell in (m1-slice,
    c2-major, c3) order, or ``(-1, 0.0, 0.0)``.
    """
    n2 = c2_centers.size
    n3 = c3_centers.size
    nh = lam.shape[0]
    c2f = np.repeat(c2_centers, n3)
    c3f = np.tile(c3_centers, n2)
    m2lo = np.maximum(c2f - w2, 0.0)
    m3hi = c3f + w3
    chunk = max(1, int(4_000_000 // max(nh, 1)))
    for k1 in range(m1_centers.size):
        c1 = m1_centers[k1]
        m1lo = max(c1 - w1, 0.0)
        m1hi = c1 + w1
        var = m3hi - m1lo * m1lo
        pre = (var >= 0.0) & (m2lo - m1hi <= tau * np.sqrt(np.maximum(var, 0.0)))
        if not pre.any():
            continue
        idx = np.flatnonzero(pre)
        head = c1 * lam[:, 0]
        for start in range(0, idx.size, chunk):
            sel = idx[start:start + chunk]
            vals = head + np.outer(c2f[sel], lam[:, 1]) + np.outer(c3f[sel], lam[:, 2])
            feas = (vals <= rhs).all(axis=1)
            if feas.any():
                j = int(sel[np.argmax(feas)])
                return k1, c2f[j], c3f[j]
    return -1, 0.0, 0.0


def _log_comb(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _hg_logpmf_range(k_lo, k_hi, successes, population, draws):
    ks = np.arange(k_lo, k_hi + 1, dtype=np.float64)
    return (_log_comb(float(successes), ks)
            + _log_comb(float(population - successes), draws - ks)
            - _log_comb(float(population), float(draws)))


def hypergeom_uppertail(w, successes, population, draws):
    """Upper bound on P(W > w) for W ~ Hypergeometric(successes, ., draws).

    Sums whichever tail is shorter (complementing the lower one); when the
    upper-side terms are decaying, the truncated remainder is replaced by a
    geometric-series bound, so the returned value never underestimates the
    true tail by more than float rounding.
    """
    kmin = max(0, draws - (population - successes))
    kmax = min(draws, successes)
    if w >= kmax:
        return 0.0
    if w < kmin:
        return 1.0
    mode = int((draws + 1.0) * (successes + 1.0) / (population + 2.0))
    if w < mode and w - kmin < kmax - w:
        lower = float(np.exp(_hg_logpmf_range(kmin, w, successes, population,
                                              draws)).sum())
        return max(1.0 - lower, 0.0)
    k0 = w + 1
    total = 0.0
    chunk = 8192
    k = k0
    while k <= kmax:
        hi = min(k + chunk - 1, kmax)
        terms = np.exp(_hg_logpmf_range(k, hi, successes, population, draws))
        total += float(terms.sum())
        last = float(terms[-1])
        if hi < kmax:
            ratio = ((successes - hi) * (draws - hi)) / (
                (hi + 1.0) * (population - successes - draws + hi + 1.0))
            if ratio < 1.0 and last * ratio / (1.0 - ratio) < 1e-18 * max(total, 1e-300):
                total += last * ratio / (1.0 - ratio)
                break
        k = hi + 1
    return total


def bounded_level_dp(lo, hi):
    """Max sum of squares over integer vectors with per-entry bounds.

    Returns ``V`` with ``V[c]`` = max of sum(theta_i^2) subject to
    sum(theta_i) == c and lo_i <= theta_i <= hi_i, or -1 when c is
    unreachable.  ``V`` has length ``sum(hi) + 1``.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    total = int(hi.sum())
    v = np.full(total + 1, -1, dtype=np.int64)
    v[0] = 0
    for t in range(lo.size):
        new_v = np.full(total + 1, -1, dtype=np.int64)
        for u in range(int(lo[t]), int(hi[t]) + 1):
            shifted = np.full(total + 1, -1, dtype=np.int64)
            if u == 0:
                shifted[:] = v
            else:
                shifted[u:] = v[:total + 1 - u]
            cand = shifted + u * u
            better = (shifted >= 0) & (cand > new_v)
            new_v[better] = cand[better]
        v = new_v
    return v
