"""Numba-compiled kernels (hot loops).

Signature-compatible with ``ref.py``; see that module for the contracts.
"""

import math

import numpy as np
from numba import njit

_PHASE_GUARD = 4


@njit(cache=True)
def dinic_maxflow(capacity, source, sink, tol=1e-12):
    n = capacity.shape[0]
    res = capacity.copy()
    level = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    cur = np.empty(n, dtype=np.int64)
    path = np.empty(n + 1, dtype=np.int64)
    flow = 0.0
    phases = 0
    while True:
        for i in range(n):
            level[i] = -1
        level[source] = 0
        qh = 0
        qt = 1
        queue[0] = source
        while qh < qt:
            u = queue[qh]
            qh += 1
            for v in range(n):
                if level[v] < 0 and res[u, v] > tol:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[sink] < 0:
            break
        phases += 1
        if phases > _PHASE_GUARD * n + 8:
            raise RuntimeError("max-flow did not converge")
        for i in range(n):
            cur[i] = 0
        while True:
            depth = 0
            path[0] = source
            reached = False
            while True:
                u = path[depth]
                if u == sink:
                    reached = True
                    break
                v = cur[u]
                while v < n:
                    if res[u, v] > tol and level[v] == level[u] + 1:
                        break
                    v += 1
                cur[u] = v
                if v == n:
                    if depth == 0:
                        break
                    level[u] = -1  # dead end, prune for this phase
                    depth -= 1
                    cur[path[depth]] += 1
                else:
                    depth += 1
                    path[depth] = v
            if not reached:
                break
            aug = np.inf
            for j in range(depth):
                r = res[path[j], path[j + 1]]
                if r < aug:
                    aug = r
            for j in range(depth):
                u = path[j]
                v = path[j + 1]
                res[u, v] -= aug
                res[v, u] += aug
            flow += aug
    source_side = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        source_side[i] = level[i] >= 0
    return flow, source_side


@njit(cache=True)
def grid_scan_descending(m1_centers, c2_centers, c3_centers, lam, rhs, tau,
                         w1, w2, w3):
    n1 = m1_centers.shape[0]
    n2 = c2_centers.shape[0]
    n3 = c3_centers.shape[0]
    nh = lam.shape[0]
    for k1 in range(n1):
        c1 = m1_centers[k1]
        m1lo = c1 - w1
        if m1lo < 0.0:
            m1lo = 0.0
        m1hi = c1 + w1
        for k2 in range(n2):
            c2 = c2_centers[k2]
            m2lo = c2 - w2
            if m2lo < 0.0:
                m2lo = 0.0
            for k3 in range(n3):
                c3 = c3_centers[k3]
                var = c3 + w3 - m1lo * m1lo
                if var < 0.0:
                    continue
                if m2lo - m1hi > tau * math.sqrt(var):
                    continue
                ok = True
                for h in range(nh):
                    if lam[h, 0] * c1 + lam[h, 1] * c2 + lam[h, 2] * c3 > rhs[h]:
                        ok = False
                        break
                if ok:
                    return k1, c2, c3
    return -1, 0.0, 0.0


@njit(cache=True)
def _hg_logpmf(k, successes, population, draws):
    return (math.lgamma(successes + 1.0) - math.lgamma(k + 1.0)
            - math.lgamma(successes - k + 1.0)
            + math.lgamma(population - successes + 1.0)
            - math.lgamma(draws - k + 1.0)
            - math.lgamma(population - successes - draws + k + 1.0)
            - (math.lgamma(population + 1.0) - math.lgamma(draws + 1.0)
               - math.lgamma(population - draws + 1.0)))


@njit(cache=True)
def hypergeom_uppertail(w, successes, population, draws):
    kmin = draws - (population - successes)
    if kmin < 0:
        kmin = 0
    kmax = draws if draws < successes else successes
    if w >= kmax:
        return 0.0
    if w < kmin:
        return 1.0
    mode = int((draws + 1.0) * (successes + 1.0) / (population + 2.0))
    if w < mode and w - kmin < kmax - w:
        # Short lower side: complement it.  Truncation is impossible here
        # (the sum runs to w exactly), so the result stays conservative.
        logp0 = _hg_logpmf(kmin, successes, population, draws)
        acc = 1.0
        term = 1.0
        log_offset = 0.0
        for k in range(kmin, w):
            ratio = ((successes - k) * (draws - k)) / (
                (k + 1.0) * (population - successes - draws + k + 1.0))
            term *= ratio
            acc += term
            if acc > 1e280:
                log_offset += math.log(acc)
                term /= acc
                acc = 1.0
        lower = math.exp(logp0 + log_offset) * acc
        out = 1.0 - lower
        return out if out > 0.0 else 0.0
    k0 = w + 1
    logp0 = _hg_logpmf(k0, successes, population, draws)
    acc = 1.0
    term = 1.0
    log_offset = 0.0
    k = k0
    while k < kmax:
        ratio = ((successes - k) * (draws - k)) / (
            (k + 1.0) * (population - successes - draws + k + 1.0))
        term *= ratio
        acc += term
        k += 1
        if ratio < 1.0 and term < 1e-18 * acc:
            acc += term * ratio / (1.0 - ratio)
            break
        if acc > 1e280:  # re-anchor before the running sum overflows
            log_offset += math.log(acc)
            term /= acc
            acc = 1.0
    return math.exp(logp0 + log_offset) * acc


@njit(cache=True)
def bounded_level_dp(lo, hi):
    n = lo.shape[0]
    total = 0
    for t in range(n):
        total += hi[t]
    v = np.full(total + 1, -1, dtype=np.int64)
    v[0] = 0
    reach = 0
    for t in range(n):
        reach += hi[t]
        new_v = np.full(total + 1, -1, dtype=np.int64)
        for s in range(reach + 1):
            best = np.int64(-1)
            umax = hi[t] if hi[t] < s else s
            for u in range(lo[t], umax + 1):
                prev = v[s - u]
                if prev >= 0:
                    cand = prev + u * u
                    if cand > best:
                        best = cand
            new_v[s] = best
        v = new_v
    return v
