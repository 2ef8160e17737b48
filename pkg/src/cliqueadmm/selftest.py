"""
Quick property checks run by ``python -m cliqueadmm selftest``.

Each check compares an implementation path against an independent oracle
(dense matrices, brute force, a scalar minimizer) on a handful of random
cases. The full-size versions live in the test suite.
"""

import itertools
import time

import numpy as np
from scipy import optimize

from .functions import L1Norm, Quadratic, SplitSum, Zero, prox_l1
from .graph import (CliqueFamily, adjoint_select, enumerate_all_cliques, enumerate_maximal_cliques,
                    erdos_renyi, select)
from .problem import CliqueBlock, CliqueProblem, aggregate
from .runtime import Network
from .solvers import (ADMM, FLIP, SolverState, aggregated_step, cl_admm_step, cl_flip_admm_step,
                      suggest_params, validate_theorem1)


def dense_selection(fam, d):
    """``W`` straight from its entry definition: ``w_{l,ji} = 1`` iff ``i`` is the ``j``-th member."""
    rows = sum(len(c) for c in fam) * d
    W = np.zeros((rows, fam.graph.n * d))
    r = 0
    for c in fam:
        for i in c.members:
            W[r:r + d, (i - 1) * d:i * d] = np.eye(d)
            r += d
    return W


def brute_force_cliques(g):
    out = []
    for size in range(1, g.n + 1):
        for sub in itertools.combinations(range(1, g.n + 1), size):
            if all(g.adjacent(a, b) for a, b in itertools.combinations(sub, 2)):
                out.append(sub)
    return sorted(out)


def random_problem(rng, n, d, smooth=False):
    """Small connected instance with random dense ``A_l``, ``B_l``, ``c_l``."""
    g = erdos_renyi(n, 0.5, rng)
    fam = enumerate_maximal_cliques(g)
    f, blocks = [], []
    for _ in range(n):
        quad = Quadratic(rng.standard_normal((d, d)), rng.standard_normal(d))
        f.append(SplitSum(L1Norm(d, 0.1), quad) if smooth else quad)
    for c in fam:
        m = len(c) * d
        q = m
        A = rng.standard_normal((m, m))
        B = rng.standard_normal((m, q)) + 2.0 * np.eye(m)
        gq = Quadratic(0.5 * rng.standard_normal((q, q)), rng.standard_normal(q))
        gfn = SplitSum(L1Norm(q, 0.05), gq) if smooth else L1Norm(q, 0.05)
        blocks.append(CliqueBlock(A, B, rng.standard_normal(m), gfn))
    return CliqueProblem(fam, d, f, blocks)


def check_selection(rng, cases=20):
    worst = 0.0
    for _ in range(cases):
        n, d = int(rng.integers(2, 10)), int(rng.integers(1, 4))
        g = erdos_renyi(n, 0.5, rng)
        fam = enumerate_maximal_cliques(g)
        W = dense_selection(fam, d)
        x = rng.standard_normal((n, d))
        v = rng.standard_normal(W.shape[0])
        Wx, Wtv = select(fam, x, d), adjoint_select(fam, v, d)
        worst = max(worst, abs(Wx @ v - np.sum(x * Wtv)),
                    np.max(np.abs(Wx - W @ x.ravel())), np.max(np.abs(Wtv.ravel() - W.T @ v)))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def check_enumeration(rng, cases=20):
    for _ in range(cases):
        g = erdos_renyi(int(rng.integers(2, 8)), float(rng.uniform(0.2, 0.9)), rng, connected=False)
        every = brute_force_cliques(g)
        if [c.members for c in enumerate_all_cliques(g)] != every:
            return False, "all-clique enumeration differs from brute force"
        sets = [set(c) for c in every]
        maximal = [c for c, s in zip(every, sets) if not any(s < t for t in sets)]
        if [c.members for c in enumerate_maximal_cliques(g)] != maximal:
            return False, "maximal cliques differ from the maximality filter"
    return True, f"{cases} graphs"


def check_prox(rng, cases=20):
    worst = 0.0
    for _ in range(cases):
        v, t = float(rng.normal(scale=2.0)), float(rng.uniform(0.1, 2.0))
        ref = optimize.minimize_scalar(lambda y: t * abs(y) + 0.5 * (y - v) ** 2,
                                       bounds=(-10, 10), method="bounded", options={"xatol": 1e-10}).x
        worst = max(worst, abs(prox_l1(np.array([v]), t)[0] - ref))
    return worst <= 1e-6, f"max deviation {worst:.1e}"


def check_equivalence(rng, cases=3, iters=50):
    worst = 0.0
    for k in range(cases):
        flip = bool(k % 2)
        p = random_problem(rng, int(rng.integers(2, 6)), int(rng.integers(1, 3)), smooth=flip)
        style = FLIP if flip else ADMM
        params = suggest_params(p, style)
        if not validate_theorem1(p, params, style).ok:
            return False, "suggested parameters failed validation"
        agg = aggregate(p)
        a = b = SolverState.initial(p, rng)
        net = Network(p, params, style, state=a)
        step = cl_flip_admm_step if flip else cl_admm_step
        for _ in range(iters):
            a = step(p, params, a)
            b = aggregated_step(agg, params, b, flip=flip)
            net.run_round()
            worst = max(worst, np.max(np.abs(a.flat() - b.flat())))
            if not np.array_equal(net.state().flat(), a.flat()):
                return False, "message-passing runtime deviates from the direct solver"
    return worst <= 1e-10, f"max deviation {worst:.1e}"


def check_reduction(rng, cases=3, iters=30):
    for _ in range(cases):
        p = random_problem(rng, int(rng.integers(2, 6)), 2)
        params = suggest_params(p)
        a = b = SolverState.initial(p, rng)
        for _ in range(iters):
            a, b = cl_admm_step(p, params, a), cl_flip_admm_step(p, params, b)
            if not np.array_equal(a.flat(), b.flat()):
                return False, "trajectories differ"
    return True, f"{cases} instances bitwise equal"


CHECKS = (
    ("selection operator vs dense W", check_selection),
    ("clique enumeration vs brute force", check_enumeration),
    ("l1 prox vs scalar minimizer", check_prox),
    ("step vs dense iteration and runtime", check_equivalence),
    ("FLiP reduction with no smooth parts", check_reduction),
)


def run_selftest(seed=0, out=print):
    """Run every check; returns ``True`` when all pass."""
    rng = np.random.default_rng(seed)
    ok = True
    for name, fn in CHECKS:
        t = time.perf_counter()
        passed, detail = fn(rng)
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t:.1f}s)")
    return ok
