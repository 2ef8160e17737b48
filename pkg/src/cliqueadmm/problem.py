"""
Clique-wise coupled problems.

    minimize   sum_i f_i(x_i) + sum_l g_l(y_l)
    subject to A_l x_{C_l} + B_l y_l = c_l   for every clique l in the family

with ``x_i`` in R^d and ``x_{C_l}`` the stacked blocks of the clique members
in increasing label order.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .functions import ConsensusCliqueFn, ConvexFunction, L1Norm, Zero
from .graph import selection_matrix


DENSE_COLUMN_CAP = 5000


@dataclass
class CliqueBlock:
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    g: ConvexFunction

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if not (self.A.shape[0] == self.B.shape[0] == self.c.shape[0]):
            raise ValueError(
                f"row mismatch: A {self.A.shape}, B {self.B.shape}, c {self.c.shape}")
        if self.g.dim is not None and self.g.dim != self.B.shape[1]:
            raise ValueError(f"g has dim {self.g.dim} but B has {self.B.shape[1]} columns")
        # cached once; the solvers hit these every iteration
        self.AtA = self.A.T @ self.A
        self.BtB = self.B.T @ self.B
        self._a_sign = _identity_sign(self.A)
        self._b_sign = _identity_sign(self.B)
        self._c_zero = not np.any(self.c)

    @property
    def p(self):
        return self.A.shape[0]

    @property
    def q(self):
        return self.B.shape[1]

    def residual(self, x_c, y):
        ax = _apply(self.A, self._a_sign, x_c)
        r = ax - y if self._b_sign == -1 else ax + _apply(self.B, self._b_sign, y)
        return r if self._c_zero else r - self.c

    def At(self, v):
        return _apply(self.A, self._a_sign, v, transpose=True)

    def Bt(self, v):
        return _apply(self.B, self._b_sign, v, transpose=True)


def _identity_sign(M):
    if M.shape[0] == M.shape[1]:
        eye = np.eye(M.shape[0])
        if np.array_equal(M, eye):
            return 1
        if np.array_equal(M, -eye):
            return -1
    return 0


def _apply(M, sign, v, transpose=False):
    if sign == 1:
        return v
    if sign == -1:
        return -v
    return M.T @ v if transpose else M @ v


class CliqueProblem:
    """
    Agent objectives ``f`` (one per agent) and one :class:`CliqueBlock` per
    clique of ``family``; ``d`` is the agent variable dimension.
    """

    def __init__(self, family, d, f, blocks, h=None):
        if len(family) == 0:
            raise ValueError("empty clique family")
        if len(f) != family.graph.n:
            raise ValueError(f"need {family.graph.n} agent objectives, got {len(f)}")
        if len(blocks) != len(family):
            raise ValueError(f"need {len(family)} clique blocks, got {len(blocks)}")
        for c, blk in zip(family, blocks):
            if blk.A.shape[1] != len(c) * d:
                raise ValueError(
                    f"clique {c.members}: A has {blk.A.shape[1]} columns, expected {len(c) * d}")
        self.family = family
        self.graph = family.graph
        self.d = d
        self.f = list(f)
        self.blocks = list(blocks)
        self._index = [np.asarray(c.members) - 1 for c in family]
        # agent-level regularizers, kept only for consensus problems
        self.h = None if h is None else list(h)

    @property
    def n(self):
        return self.graph.n

    def members(self, l):
        return self.family[l].members

    def gather(self, x, l):
        """``x_{C_l}`` from an ``(n, d)`` agent array."""
        return x[self._index[l]].ravel()

    def is_consensus(self):
        return self.h is not None

    def zero_state(self):
        x = np.zeros((self.n, self.d))
        y = [np.zeros(b.q) for b in self.blocks]
        u = [np.zeros(b.p) for b in self.blocks]
        return x, y, u


def build_consensus_problem(family, d, f, h=None):
    """
    Consensus over cliques: ``A_l = I``, ``B_l = -I``, ``c_l = 0`` and

        g_l(y_l) = sum_{j in C_l} h_j([y_l]_j) / |Q^j| + indicator{blocks equal}

    where ``|Q^j|`` counts the family's cliques containing ``j``. When the
    family is the set of maximal cliques of a connected graph, feasibility
    forces ``x_1 = ... = x_n``.

    Parameters
    ----------
    family : CliqueFamily
    d : int
    f : list of ConvexFunction
        Agent losses.
    h : list of ConvexFunction, optional
        Agent regularizers (``Zero`` or ``L1Norm``); defaults to zero.
    """
    n = family.graph.n
    if len(family) == 0:
        raise ValueError("empty clique family")
    if h is None:
        h = [Zero(d) for _ in range(n)]
    if len(f) != n or len(h) != n:
        raise ValueError("need one f and one h per agent")
    for fn in list(f) + list(h):
        if fn.dim is not None and fn.dim != d:
            raise ValueError(f"function dimension {fn.dim} does not match d={d}")
    missing = [i for i in family.graph.nodes if family.count(i) == 0]
    if missing:
        raise ValueError(f"agents {missing} belong to no clique of the family")
    blocks = []
    for c in family:
        size = len(c) * d
        comps = [_scaled(h[j - 1], 1.0 / family.count(j)) for j in c.members]
        blocks.append(CliqueBlock(np.eye(size), -np.eye(size), np.zeros(size),
                                  ConsensusCliqueFn(comps, d)))
    return CliqueProblem(family, d, f, blocks, h=h)


def _scaled(fn, s):
    if isinstance(fn, Zero):
        return fn
    if isinstance(fn, L1Norm):
        return L1Norm(fn.dim, fn.coef * s)
    raise ValueError(f"unsupported regularizer {type(fn).__name__}")


def residual(p, x, y):
    """
    Per-clique residuals ``A_l x_{C_l} + B_l y_l - c_l`` and their total
    Euclidean norm.
    """
    x = np.asarray(x, dtype=float).reshape(p.n, p.d)
    res = [blk.residual(p.gather(x, l), y[l]) for l, blk in enumerate(p.blocks)]
    return res, math.sqrt(sum(float(r @ r) for r in res))


def objective(p, x, y):
    """``sum_i f_i(x_i) + sum_l g_l(y_l)``; ``math.inf`` when infeasible."""
    x = np.asarray(x, dtype=float).reshape(p.n, p.d)
    total = sum(fn.value(x[i]) for i, fn in enumerate(p.f))
    total += sum(blk.g.value(y[l]) for l, blk in enumerate(p.blocks))
    return float(total)


def consensus_objective(p, x):
    """``sum_i f_i(x_i) + h_i(x_i)`` at the agent iterates (consensus problems)."""
    x = np.asarray(x, dtype=float).reshape(p.n, p.d)
    return float(sum(p.f[i].value(x[i]) + p.h[i].value(x[i]) for i in range(p.n)))


class AggregatedProblem:
    """
    Dense stacked form ``min F(x) + G(y)  s.t.  A W x + B y = c``.

    Only for small instances (tests and reference iterations).
    """

    def __init__(self, p, cap=DENSE_COLUMN_CAP):
        cols = p.n * p.d + sum(b.q for b in p.blocks)
        if cols > cap:
            raise ValueError(f"dense form needs {cols} columns, cap is {cap}")
        self.problem = p
        self.W = selection_matrix(p.family, p.d)
        self.A = linalg.block_diag(*[b.A for b in p.blocks])
        self.B = linalg.block_diag(*[b.B for b in p.blocks])
        self.c = np.concatenate([b.c for b in p.blocks])
        self.AW = self.A @ self.W
        self.y_offsets = np.concatenate([[0], np.cumsum([b.q for b in p.blocks])])
        self.u_offsets = np.concatenate([[0], np.cumsum([b.p for b in p.blocks])])

    def split_y(self, y):
        return [y[a:b] for a, b in zip(self.y_offsets[:-1], self.y_offsets[1:])]

    def split_u(self, u):
        return [u[a:b] for a, b in zip(self.u_offsets[:-1], self.u_offsets[1:])]

    def residual(self, x, y):
        return self.AW @ np.ravel(x) + self.B @ y - self.c


def aggregate(p, cap=DENSE_COLUMN_CAP):
    return AggregatedProblem(p, cap=cap)


def stack(parts):
    return np.concatenate([np.ravel(v) for v in parts]) if parts else np.zeros(0)

