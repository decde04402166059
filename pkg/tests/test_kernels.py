"""Kernel backends: correctness against brute force and jit/numpy parity."""

import itertools
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from attribound._kernels import jit as jit_kernels
from attribound._kernels import ref as ref_kernels


def brute_min_cut(capacity, source, sink):
    """Minimum cut by enumerating every partition (source fixed inside)."""
    n = capacity.shape[0]
    others = [v for v in range(n) if v not in (source, sink)]
    best = np.inf
    for bits in itertools.product([0, 1], repeat=len(others)):
        side = np.zeros(n, dtype=bool)
        side[source] = True
        for v, b in zip(others, bits):
            side[v] = bool(b)
        value = capacity[np.ix_(side, ~side)].sum()
        best = min(best, value)
    return best


def random_graph(rng, n, density=0.5, dyadic=False):
    cap = np.zeros((n, n))
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, False)
    if dyadic:
        cap[mask] = rng.integers(0, 33, size=mask.sum()) / 8.0
    else:
        cap[mask] = rng.random(mask.sum()) * 4.0
    return cap


class TestMaxFlow:
    def test_single_arc(self, kernels_backend):
        cap = np.zeros((2, 2))
        cap[0, 1] = 5.0
        flow, side = kernels_backend.dinic_maxflow(cap, 0, 1, 1e-12)
        assert flow == 5.0
        assert side[0] and not side[1]

    def test_two_disjoint_paths(self, kernels_backend):
        cap = np.zeros((4, 4))
        cap[0, 1] = 1.0
        cap[1, 3] = 1.0
        cap[0, 2] = 1.0
        cap[2, 3] = 1.0
        flow, _ = kernels_backend.dinic_maxflow(cap, 0, 3, 1e-12)
        assert flow == 2.0

    def test_matches_brute_force(self, kernels_backend, rng):
        for trial in range(60):
            n = int(rng.integers(3, 9))
            cap = random_graph(rng, n, dyadic=(trial % 2 == 0))
            flow, side = kernels_backend.dinic_maxflow(cap.copy(), 0, n - 1, 1e-12)
            cut = cap[np.ix_(side, ~side)].sum()
            assert abs(flow - cut) <= 1e-9          # duality
            assert cut == pytest.approx(brute_min_cut(cap, 0, n - 1), abs=1e-9)
            assert side[0] and not side[n - 1]

    def test_backend_parity(self, rng):
        for _ in range(25):
            n = int(rng.integers(3, 12))
            cap = random_graph(rng, n, dyadic=True)
            f1, _ = jit_kernels.dinic_maxflow(cap.copy(), 0, n - 1, 1e-12)
            f2, _ = ref_kernels.dinic_maxflow(cap.copy(), 0, n - 1, 1e-12)
            assert f1 == pytest.approx(f2, abs=1e-9)


def exact_uppertail(w, successes, population, draws):
    total = comb(population, draws)
    acc = Fraction(0)
    for k in range(max(w + 1, max(0, draws - (population - successes))),
                   min(draws, successes) + 1):
        acc += Fraction(comb(successes, k) * comb(population - successes,
                                                  draws - k), total)
    return acc


class TestHypergeomTail:
    @pytest.mark.parametrize("succ,pop,draws", [
        (5, 10, 5), (0, 10, 4), (10, 10, 4), (7, 20, 9), (13, 25, 12),
    ])
    def test_exact_small(self, kernels_backend, succ, pop, draws):
        for w in range(-1, min(draws, succ) + 1):
            got = kernels_backend.hypergeom_uppertail(w, succ, pop, draws)
            want = float(exact_uppertail(w, succ, pop, draws))
            assert got == pytest.approx(want, rel=1e-11, abs=1e-300)

    def test_medium_against_scipy(self, kernels_backend):
        from scipy.stats import hypergeom

        for succ, pop, draws, w in [(400, 1000, 300, 130), (50, 5000, 600, 4),
                                    (2500, 6000, 100, 40)]:
            got = kernels_backend.hypergeom_uppertail(w, succ, pop, draws)
            want = float(hypergeom(pop, succ, draws).sf(w))
            assert got == pytest.approx(want, rel=1e-9)

    def test_early_exit_never_undershoots(self, kernels_backend):
        # Tail far above the mode: truncation must still cover the mass.
        got = kernels_backend.hypergeom_uppertail(120, 10 ** 6, 4 * 10 ** 6,
                                                  10 ** 5)
        from scipy.stats import hypergeom
        want = float(hypergeom(4 * 10 ** 6, 10 ** 6, 10 ** 5).sf(120))
        assert got >= want * (1 - 1e-9)
        assert got == pytest.approx(want, rel=1e-8)


def brute_level_dp(lo, hi):
    total = sum(hi)
    best = [-1] * (total + 1)
    for theta in itertools.product(*[range(l, h + 1) for l, h in zip(lo, hi)]):
        s = sum(theta)
        q = sum(t * t for t in theta)
        if q > best[s]:
            best[s] = q
    return best


class TestLevelDP:
    def test_matches_enumeration(self, kernels_backend, rng):
        for _ in range(40):
            n = int(rng.integers(1, 6))
            hi = rng.integers(0, 5, size=n)
            lo = (rng.integers(0, 100, size=n) % (hi + 1)).astype(np.int64)
            got = kernels_backend.bounded_level_dp(
                np.ascontiguousarray(lo, dtype=np.int64),
                np.ascontiguousarray(hi, dtype=np.int64))
            want = brute_level_dp(list(lo), list(hi))
            assert list(got) == want

    def test_zero_bounds(self, kernels_backend):
        got = kernels_backend.bounded_level_dp(
            np.zeros(3, dtype=np.int64), np.zeros(3, dtype=np.int64))
        assert list(got) == [0]


class TestGridScanParity:
    def test_backends_agree(self, rng):
        for _ in range(20):
            nh = int(rng.integers(5, 30))
            lam = rng.normal(size=(nh, 3))
            lam[:, 2] = np.abs(lam[:, 2])
            lam /= np.linalg.norm(lam, axis=1, keepdims=True)
            rhs = rng.random(nh) * 0.5
            m1 = np.linspace(1.0, 0.0, 17)
            c2 = np.linspace(0.0, 0.8, 13)
            c3 = np.linspace(0.0, 0.9, 11)
            args = (np.ascontiguousarray(m1), np.ascontiguousarray(c2),
                    np.ascontiguousarray(c3), np.ascontiguousarray(lam),
                    np.ascontiguousarray(rhs), 1.3, 0.03, 0.03, 0.04)
            out_jit = jit_kernels.grid_scan_descending(*args)
            out_ref = ref_kernels.grid_scan_descending(*args)
            assert out_jit[0] == out_ref[0]
            assert out_jit[1] == pytest.approx(out_ref[1], abs=0)
            assert out_jit[2] == pytest.approx(out_ref[2], abs=0)

    def test_origin_always_feasible(self, kernels_backend):
        lam = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        rhs = np.array([0.5, 0.5])
        idx, c2, c3 = kernels_backend.grid_scan_descending(
            np.array([0.9, 0.5, 0.05]), np.array([0.05]), np.array([0.05]),
            lam, rhs, 0.0, 0.05, 0.05, 0.05)
        assert idx >= 0
