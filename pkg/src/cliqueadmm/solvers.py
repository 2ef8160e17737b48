"""
Clique-based linearized ADMM and its gradient-linearized (FLiP) variant.

One iteration, for every agent ``i`` and clique ``l``::

    x_i <- prox_{a_i f_i}( x_i - a_i sum_{l ∋ i} [A_l^T (u_l + g_l r_l)]_{pos_l(i)} )
    y_l <- prox_{b_l g_l}( y_l - b_l B_l^T (u_l + g_l r_l') )
    u_l <- u_l + phi_l g_l (A_l x_{C_l} + B_l y_l - c_l)

where ``r_l`` is the clique residual before the x-update and ``r_l'`` the one
after it. The FLiP variant takes gradient steps on the smooth parts of
``f_i`` and ``g_l`` and applies the prox only to the nonsmooth parts.

Parameters may be clique-wise (one ``beta, gamma, phi`` per clique) or
agent-wise (one per agent, expanded to diagonal matrices on each clique);
the latter needs identity-like ``A_l`` and ``B_l``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .functions import lambda_max
from .problem import AggregatedProblem, consensus_objective, objective, residual, stack

log = logging.getLogger(__name__)

CLIQUE_WISE = "clique_wise"
AGENT_WISE = "agent_wise"
ADMM = "admm"
FLIP = "flip"

DIVERGENCE_NORM = 1e12
CONDITION_SLACK = 1e-9


class Divergence(RuntimeError):
    def __init__(self, k, msg):
        super().__init__(f"iteration {k}: {msg}")
        self.k = k


class InvalidParameters(ValueError):
    pass


def default_epsilon(phi):
    return np.minimum(0.5 * (2.0 - np.asarray(phi, dtype=float)), 0.1)


@dataclass
class SolverParams:
    """
    Step sizes. ``alpha`` has one entry per agent. ``beta``, ``gamma``,
    ``phi`` (and ``epsilon``, used only by validation and the Lyapunov
    monitor) have one entry per clique in clique-wise mode and one per agent
    in agent-wise mode.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    mode: str = CLIQUE_WISE
    epsilon: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in (CLIQUE_WISE, AGENT_WISE):
            raise InvalidParameters(f"unknown mode {self.mode!r}")
        for name in ("alpha", "beta", "gamma", "phi"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(~(arr > 0)):
                raise InvalidParameters(f"{name} must be strictly positive")
            setattr(self, name, arr)
        if self.epsilon is None:
            self.epsilon = default_epsilon(self.phi)
        self.epsilon = np.broadcast_to(np.asarray(self.epsilon, dtype=float), self.phi.shape).copy()

    def coefficients(self, p):
        """Per-clique ``(beta, gamma, phi)``, scalars or expanded diagonals."""
        hit = self._cache.get(id(p))
        if hit is None or hit[0] is not p:
            hit = self._cache[id(p)] = (p, _expand(p, self))
        return hit[1]


def _expand(p, params):
    if len(params.alpha) != p.n:
        raise InvalidParameters(f"alpha needs {p.n} entries, got {len(params.alpha)}")
    out = []
    if params.mode == CLIQUE_WISE:
        L = len(p.blocks)
        for name in ("beta", "gamma", "phi"):
            if len(getattr(params, name)) != L:
                raise InvalidParameters(f"{name} needs one entry per clique ({L})")
        for l in range(L):
            out.append((float(params.beta[l]), float(params.gamma[l]), float(params.phi[l])))
        return out
    for name in ("beta", "gamma", "phi"):
        if len(getattr(params, name)) != p.n:
            raise InvalidParameters(f"{name} needs one entry per agent ({p.n}) in agent-wise mode")
    for l, blk in enumerate(p.blocks):
        idx = np.asarray(p.members(l)) - 1
        size = len(idx) * p.d
        if blk.p != size or blk.q != size:
            raise InvalidParameters("agent-wise parameters need square clique blocks of size |C_l| d")
        out.append(tuple(np.repeat(getattr(params, name)[idx], p.d) for name in ("beta", "gamma", "phi")))
    return out


@dataclass
class SolverState:
    k: int
    x: np.ndarray
    y: list
    u: list
    prev: tuple = None

    @classmethod
    def initial(cls, p, rng=None, scale=1.0):
        x, y, u = p.zero_state()
        if rng is not None:
            x = scale * rng.standard_normal(x.shape)
            y = [scale * rng.standard_normal(v.shape) for v in y]
            u = [scale * rng.standard_normal(v.shape) for v in u]
        return cls(0, x, y, u)

    def copy(self):
        return SolverState(self.k, self.x.copy(), [v.copy() for v in self.y],
                           [v.copy() for v in self.u], self.prev)

    def flat(self):
        return np.concatenate([self.x.ravel(), stack(self.y), stack(self.u)])


# -- kernels shared with the message-passing runtime ---------------------------

def clique_dual_term(blk, x_c, y, u, gamma):
    """``A_l^T (u_l + gamma_l (A_l x_{C_l} + B_l y_l - c_l))``."""
    return blk.At(u + gamma * blk.residual(x_c, y))


def agent_x_update(fn, x_i, acc, alpha, flip):
    if flip:
        nonsmooth, smooth = fn.split()
        return nonsmooth.prox(x_i - alpha * (smooth.grad(x_i) + acc), alpha)
    return fn.prox(x_i - alpha * acc, alpha)


def clique_yu_update(blk, x_c, y, u, beta, gamma, phi, flip):
    """New ``(y_l, u_l)`` given the freshly updated ``x_{C_l}``."""
    drive = blk.Bt(u + gamma * blk.residual(x_c, y))
    if flip:
        nonsmooth, smooth = blk.g.split()
        y_new = nonsmooth.prox(y - beta * (smooth.grad(y) + drive), beta)
    else:
        y_new = blk.g.prox(y - beta * drive, beta)
    u_new = u + (phi * gamma) * blk.residual(x_c, y_new)
    return y_new, u_new


def _guard(state):
    # a non-finite entry makes the sum of squares non-finite too
    sq = float(np.vdot(state.x, state.x)) + sum(float(v @ v) for v in state.y) \
        + sum(float(v @ v) for v in state.u)
    if not math.isfinite(sq) or sq > DIVERGENCE_NORM ** 2:
        raise Divergence(state.k, "iterate is non-finite or exceeds the divergence bound")


def _clique_step(p, params, state, flip):
    coeffs = params.coefficients(p)
    x = state.x
    acc = np.zeros_like(x)
    for l, blk in enumerate(p.blocks):
        z = clique_dual_term(blk, p.gather(x, l), state.y[l], state.u[l], coeffs[l][1])
        acc[p._index[l]] += z.reshape(-1, p.d)
    x_new = np.empty_like(x)
    for i in range(p.n):
        x_new[i] = agent_x_update(p.f[i], x[i], acc[i], params.alpha[i], flip)
    y_new, u_new = [], []
    for l, blk in enumerate(p.blocks):
        beta, gamma, phi = coeffs[l]
        yl, ul = clique_yu_update(blk, p.gather(x_new, l), state.y[l], state.u[l],
                                  beta, gamma, phi, flip)
        y_new.append(yl)
        u_new.append(ul)
    out = SolverState(state.k + 1, x_new, y_new, u_new, prev=(x, state.y, state.u))
    _guard(out)
    return out


def cl_admm_step(p, params, state):
    """One synchronous CL-ADMM iteration; returns a new state."""
    return _clique_step(p, params, state, flip=False)


def cl_flip_admm_step(p, params, state):
    """One CL-FLiP-ADMM iteration (gradient steps on smooth parts)."""
    return _clique_step(p, params, state, flip=True)


# -- dense reference iteration -------------------------------------------------

def stacked_diagonals(agg, params):
    """Diagonals of ``D_alpha``, ``D_beta``, ``Gamma`` and ``Phi`` over the stacked variables."""
    p = agg.problem
    d_alpha = np.repeat(params.alpha, p.d)
    coeffs = params.coefficients(p)
    d_beta = np.concatenate([np.broadcast_to(c[0], (b.q,)) for c, b in zip(coeffs, p.blocks)])
    gam = np.concatenate([np.broadcast_to(c[1], (b.p,)) for c, b in zip(coeffs, p.blocks)])
    phi = np.concatenate([np.broadcast_to(c[2], (b.p,)) for c, b in zip(coeffs, p.blocks)])
    return d_alpha, d_beta, gam, phi


def aggregated_step(agg, params, state, flip=False):
    """
    The same iteration written on the dense stacked matrices ``A W``, ``B``
    and ``c`` with diagonal step matrices.
    """
    if not isinstance(agg, AggregatedProblem):
        raise TypeError("aggregated_step needs an AggregatedProblem")
    p = agg.problem
    d_alpha, d_beta, gam, phi = stacked_diagonals(agg, params)
    x = state.x.ravel()
    y = stack(state.y)
    u = stack(state.u)

    grad_x = agg.AW.T @ (u + gam * (agg.AW @ x + agg.B @ y - agg.c))
    if flip:
        grad_x = grad_x + np.concatenate([fn.split()[1].grad(x[i * p.d:(i + 1) * p.d])
                                          for i, fn in enumerate(p.f)])
    v = (x - d_alpha * grad_x).reshape(p.n, p.d)
    x_new = np.stack([(fn.split()[0] if flip else fn).prox(v[i], params.alpha[i])
                      for i, fn in enumerate(p.f)])

    grad_y = agg.B.T @ (u + gam * (agg.AW @ x_new.ravel() + agg.B @ y - agg.c))
    if flip:
        grad_y = grad_y + stack([b.g.split()[1].grad(yl) for b, yl in zip(p.blocks, state.y)])
    w = agg.split_y(y - d_beta * grad_y)
    steps = agg.split_y(d_beta)
    y_new = [(b.g.split()[0] if flip else b.g).prox(w[l], steps[l]) for l, b in enumerate(p.blocks)]

    u_new = u + phi * gam * (agg.AW @ x_new.ravel() + agg.B @ stack(y_new) - agg.c)
    out = SolverState(state.k + 1, x_new, y_new, agg.split_u(u_new), prev=(state.x, state.y, state.u))
    _guard(out)
    return out


# -- parameter conditions ------------------------------------------------------

@dataclass
class ValidationReport:
    ok: bool
    mode: str
    # per-agent margin of the step-size bound on alpha
    alpha_margin: np.ndarray
    # per-clique (or per-agent) margin of the beta bound
    beta_margin: np.ndarray
    # per-clique (or per-agent) smallest eigenvalue of the curvature condition
    psd_margin: np.ndarray
    epsilon: np.ndarray

    def summary(self):
        return {
            "ok": bool(self.ok),
            "mode": self.mode,
            "min_alpha_margin": float(np.min(self.alpha_margin)),
            "min_beta_margin": float(np.min(self.beta_margin)),
            "min_psd_margin": float(np.min(self.psd_margin)),
        }


def _smooth_constants(p, method):
    if method == FLIP:
        Lf = np.array([fn.split()[1].lipschitz for fn in p.f], dtype=float)
        Lg = np.array([b.g.split()[1].lipschitz for b in p.blocks], dtype=float)
    elif method == ADMM:
        Lf = np.zeros(p.n)
        Lg = np.zeros(len(p.blocks))
    else:
        raise ValueError(f"unknown method {method!r}")
    return Lf, Lg


def block_lambdas(p):
    """Cached ``(lambda_max(A_l^T A_l), lambda_max(B_l^T B_l))`` per clique."""
    lam = getattr(p, "_block_lambdas", None)
    if lam is None:
        lam = np.array([(lambda_max(b.AtA), lambda_max(b.BtB)) for b in p.blocks])
        p._block_lambdas = lam
    return lam


def smallest_eigenvalue(S):
    return float(np.linalg.eigvalsh(S)[0]) if S.size else math.inf


def curvature_matrix(blk, beta, gamma, phi, eps, Lg):
    """``gamma (1 - (1-phi)^2 / (2-phi-eps)) B^T B + Q - 3 Lg I`` with ``Q = I/beta - gamma B^T B``."""
    theta = 2.0 - phi - eps
    Q = np.eye(blk.q) / beta - gamma * blk.BtB
    return gamma * (1.0 - (1.0 - phi) ** 2 / theta) * blk.BtB + Q - 3.0 * Lg * np.eye(blk.q)


def _check_phi_eps(phi, eps):
    if np.any(phi >= 2.0):
        raise InvalidParameters("phi must be below 2 for a nonempty epsilon window")
    if np.any(eps <= 0) or np.any(eps >= 2.0 - phi):
        raise InvalidParameters("epsilon must lie in (0, 2 - phi)")


def epsilon_grid(phi, points=16):
    """Interior grid of the admissible window ``(0, 2 - phi)``."""
    return (2.0 - phi) * np.arange(1, points + 1) / (points + 1)


def validate_theorem1(p, params, method=ADMM, search_epsilon=False):
    """
    Check the clique-wise step-size conditions and report signed margins.

    With ``search_epsilon`` each clique's epsilon is picked from a 16-point
    grid to maximize the curvature margin; otherwise ``params.epsilon`` is
    used.
    """
    if params.mode != CLIQUE_WISE:
        raise InvalidParameters("validate_theorem1 needs clique-wise parameters")
    coeffs = params.coefficients(p)
    lam = block_lambdas(p)
    Lf, Lg = _smooth_constants(p, method)

    need = Lf.copy()
    for l in range(len(p.blocks)):
        for i in p.members(l):
            need[i - 1] += coeffs[l][1] * lam[l, 0]
    alpha_margin = 1.0 / params.alpha - need

    beta_margin = np.array([1.0 / b - g * lam[l, 1] for l, (b, g, _) in enumerate(coeffs)])

    phi = params.phi
    _check_phi_eps(phi, params.epsilon)
    eps = params.epsilon.copy()
    psd = np.empty(len(p.blocks))
    for l, blk in enumerate(p.blocks):
        b, g, f = coeffs[l]
        cands = epsilon_grid(f) if search_epsilon else [eps[l]]
        vals = [smallest_eigenvalue(curvature_matrix(blk, b, g, f, e, Lg[l])) for e in cands]
        best = int(np.argmax(vals))
        psd[l], eps[l] = vals[best], cands[best]
    ok = all(np.min(m, initial=0.0) >= -CONDITION_SLACK for m in (alpha_margin, beta_margin, psd))
    return ValidationReport(ok, CLIQUE_WISE, alpha_margin, beta_margin, psd, eps)


def _is_signed_identity(M):
    return M.shape[0] == M.shape[1] and (
        np.array_equal(M, np.eye(M.shape[0])) or np.array_equal(M, -np.eye(M.shape[0])))


def validate_theorem2(p, params, method=ADMM, search_epsilon=False):
    """
    Agent-wise conditions; needs every ``A_l`` and ``B_l`` to be ``±I``.
    All matrices in the conditions are multiples of ``I_d``, so each check
    reduces to a scalar inequality per agent.
    """
    if params.mode != AGENT_WISE:
        raise InvalidParameters("validate_theorem2 needs agent-wise parameters")
    for b in p.blocks:
        if not (_is_signed_identity(b.A) and _is_signed_identity(b.B)):
            raise InvalidParameters("agent-wise conditions need A_l and B_l equal to ±I")
    Lf, Lg = _smooth_constants(p, method)
    counts = np.array([p.family.count(i) for i in p.graph.nodes], dtype=float)
    Lg_max = np.array([max((Lg[l] for l in p.family.cliques_of(i)), default=0.0)
                       for i in p.graph.nodes])
    g, b, f = params.gamma, params.beta, params.phi
    alpha_margin = 1.0 / params.alpha - (g * counts + Lf)
    beta_margin = 1.0 / b - g
    _check_phi_eps(f, params.epsilon)

    def curvature(e):
        return g * (1.0 - (1.0 - f) ** 2 / (2.0 - f - e)) + (1.0 / b - g) - 3.0 * Lg_max

    if search_epsilon:
        grid = np.stack([epsilon_grid(fi) for fi in f])
        vals = np.stack([curvature(grid[:, k]) for k in range(grid.shape[1])], axis=1)
        best = np.argmax(vals, axis=1)
        psd = vals[np.arange(p.n), best]
        eps = grid[np.arange(p.n), best]
    else:
        eps = params.epsilon.copy()
        psd = curvature(eps)
    ok = all(np.min(m) >= -CONDITION_SLACK for m in (alpha_margin, beta_margin, psd))
    return ValidationReport(ok, AGENT_WISE, alpha_margin, beta_margin, psd, eps)


def validate(p, params, method=ADMM, search_epsilon=False):
    if params.mode == AGENT_WISE:
        return validate_theorem2(p, params, method, search_epsilon)
    return validate_theorem1(p, params, method, search_epsilon)


def _alpha_denominators(p, gamma, style):
    lam = block_lambdas(p)
    Lf, _ = _smooth_constants(p, FLIP if style == FLIP else ADMM)
    den = Lf.copy()
    for l in range(len(p.blocks)):
        for i in p.members(l):
            den[i - 1] += gamma[l] * lam[l, 0]
    return den


def _unit_beta(p, gamma, style):
    lam = block_lambdas(p)
    _, Lg = _smooth_constants(p, FLIP if style == FLIP else ADMM)
    return 1.0 / np.maximum(np.maximum(gamma * lam[:, 1], 3.0 * Lg), 1.0)


def suggest_params(p, style=ADMM):
    """
    ``gamma = phi = 1`` and ``beta = 1`` (shrunk only when the beta or
    curvature conditions would fail), with each ``alpha_i`` at the equality
    case of its step-size bound.
    """
    L = len(p.blocks)
    gamma = np.ones(L)
    den = _alpha_denominators(p, gamma, style)
    if np.any(den <= 0):
        raise InvalidParameters("an agent has no coupling and no smooth part; alpha is unbounded")
    return SolverParams(1.0 / den, _unit_beta(p, gamma, style), gamma, np.ones(L))


def uniform_baseline_params(p, style=ADMM):
    """Common parameters for every agent and clique: ``alpha = 1 / max_i(...)``."""
    L = len(p.blocks)
    gamma = np.ones(L)
    den = np.max(_alpha_denominators(p, gamma, style))
    beta = np.full(L, np.min(_unit_beta(p, gamma, style)))
    return SolverParams(np.full(p.n, 1.0 / den), beta, gamma, np.ones(L))


# -- Lyapunov monitor ----------------------------------------------------------

class BlockWeight:
    """
    Symmetric weight ``blkdiag(X, Y_1, ..., Y_L, diag(u))`` acting on
    ``w = (x, y_1, ..., y_L, u)``; the y part is block diagonal per clique.
    """

    def __init__(self, X, Y, U):
        self.X = X
        self.Y = list(Y)
        self.U = np.asarray(U, dtype=float)

    def norm2(self, ex, ey, eu):
        """``||(ex, ey, eu)||^2`` under this weight; ``ey`` is a per-clique list."""
        total = float(ex @ self.X @ ex)
        for Yl, e in zip(self.Y, ey):
            total += float(e @ Yl @ e)
        return total + float(eu @ (self.U * eu))

    def min_eigenvalue(self):
        parts = [smallest_eigenvalue(self.X)] + [smallest_eigenvalue(Yl) for Yl in self.Y]
        if self.U.size:
            parts.append(float(self.U.min()))
        return min(parts)

    def dense(self):
        return linalg.block_diag(self.X, *self.Y, np.diag(self.U))


class LyapunovMonitor:
    """
    Weighted distance to a saddle point plus a weighted last-step term.

    ``V = ||w - w*||^2_{M0} + ||w - w_prev||^2_{M1}`` with ``w = (x, y, u)``;
    along valid iterations ``V`` does not increase and the decrease is at
    least ``||w - w_prev||^2_{M2}``. The weights are kept block by block
    (:class:`BlockWeight`); ``dense()`` assembles them for inspection.
    """

    def __init__(self, agg, params, reference, method=ADMM, epsilon=None, check=True):
        p = agg.problem
        self.agg = agg
        d_alpha, d_beta, gam, phi = stacked_diagonals(agg, params)
        eps = params.epsilon if epsilon is None else np.asarray(epsilon, dtype=float)
        theta = 2.0 - phi - _expand_like(p, params, eps)
        Lf, Lg = _smooth_constants(p, method)
        LF = np.repeat(Lf, p.d)

        AW = agg.AW
        self.P = np.diag(1.0 / d_alpha) - AW.T @ (gam[:, None] * AW)
        ys, us = agg.y_offsets, agg.u_offsets
        Qs, BGBs, curv = [], [], []
        for l, blk in enumerate(p.blocks):
            g_l, t_l, ph_l = gam[us[l]:us[l + 1]], theta[us[l]:us[l + 1]], phi[us[l]:us[l + 1]]
            BGB = blk.B.T @ (g_l[:, None] * blk.B)
            Q = np.diag(1.0 / d_beta[ys[l]:ys[l + 1]]) - BGB
            Qs.append(Q)
            BGBs.append(BGB)
            curv.append(blk.B.T @ ((g_l * (1.0 - (1.0 - ph_l) ** 2 / t_l))[:, None] * blk.B)
                        + Q - 3.0 * Lg[l] * np.eye(blk.q))
        self.Q_blocks = Qs
        half = 0.5
        self.M0 = BlockWeight(half * self.P, [half * (a + b) for a, b in zip(BGBs, Qs)],
                              half / (gam * phi))
        self.M1 = BlockWeight(np.zeros_like(self.P),
                              [half * (Lg[l] * np.eye(Q.shape[0]) + Q) for l, Q in enumerate(Qs)],
                              half * theta / (phi ** 2 * gam))
        self.M2 = BlockWeight(half * (self.P - np.diag(LF)), [half * C for C in curv],
                              half * (2.0 - phi - theta) / (phi ** 2 * gam))
        if check:
            for name, lo in self.min_eigenvalues().items():
                if lo < -CONDITION_SLACK:
                    raise InvalidParameters(f"{name} is not positive semidefinite (min eig {lo:.3e})")
        x_ref, y_ref, u_ref = reference
        self.ref = (np.ravel(np.asarray(x_ref, dtype=float)),
                    [np.asarray(v, dtype=float) for v in y_ref], stack(u_ref))

    @property
    def Q(self):
        return linalg.block_diag(*self.Q_blocks)

    def min_eigenvalues(self):
        out = {"P": smallest_eigenvalue(self.P),
               "Q": min(smallest_eigenvalue(Q) for Q in self.Q_blocks)}
        for name in ("M0", "M1", "M2"):
            out[name] = getattr(self, name).min_eigenvalue()
        return out


def _expand_like(p, params, values):
    values = np.asarray(values, dtype=float)
    if params.mode == CLIQUE_WISE:
        return np.concatenate([np.full(b.p, values[l]) for l, b in enumerate(p.blocks)])
    return np.concatenate([np.repeat(values[np.asarray(p.members(l)) - 1], p.d)
                           for l in range(len(p.blocks))])


def lyapunov_value(mon, state):
    """
    Returns ``(V, step)`` where ``step = ||w - w_prev||^2_{M2}``. Without a
    previous iterate the step terms are zero.
    """
    x, y, u = np.ravel(state.x), state.y, stack(state.u)
    rx, ry, ru = mon.ref
    V = mon.M0.norm2(x - rx, [a - b for a, b in zip(y, ry)], u - ru)
    step = 0.0
    if state.prev is not None:
        px, py, pu = state.prev
        dx, dy, du = x - np.ravel(px), [a - b for a, b in zip(y, py)], u - stack(pu)
        V += mon.M1.norm2(dx, dy, du)
        step = mon.M2.norm2(dx, dy, du)
    return V, step


# -- PG-EXTRA baseline ---------------------------------------------------------

def build_mixing_matrix(g):
    """``I - L / max_degree``: symmetric with unit row sums."""
    if not g.edges:
        raise ValueError("mixing matrix needs at least one edge")
    max_deg = max(g.degree(i) for i in g.nodes)
    return np.eye(g.n) - g.laplacian() / max_deg


@dataclass
class ExtraState:
    k: int
    x: np.ndarray
    v: np.ndarray


def pg_extra_step(mix, eta, grad_F, prox_h, state):
    """
    One PG-EXTRA iteration on ``(n, d)`` agent arrays::

        x+ = prox_{eta h}(Wm x - eta grad F(x) - v)
        v+ = v + (x - Wm x) / 2
    """
    x = state.x
    if mix.shape != (x.shape[0], x.shape[0]) or state.v.shape != x.shape:
        raise ValueError("dimension mismatch between mixing matrix and iterates")
    mixed = mix @ x
    x_new = prox_h(mixed - eta * grad_F(x) - state.v, eta)
    v_new = state.v + 0.5 * (x - mixed)
    return ExtraState(state.k + 1, x_new, v_new)


# -- driver --------------------------------------------------------------------

def run(p, method, params, horizon, state=None, obj_star=None, callbacks=(), stepper=None):
    """
    Iterate ``horizon`` times and record metrics.

    Each record holds ``k``, ``objective`` (``F + G`` at ``(x^k, y^k)``),
    ``residual`` (norm of the stacked constraint residual) and, for
    consensus problems, ``consensus_objective`` (``sum_i f_i + h_i`` at the
    agent iterates) and ``rel_obj_residual`` relative to ``obj_star``.

    ``stepper`` overrides the step function (e.g. the message-passing
    runtime); callbacks receive ``(state, record)`` after every iteration.
    """
    if stepper is None:
        stepper = {ADMM: cl_admm_step, FLIP: cl_flip_admm_step}[method]
    state = SolverState.initial(p) if state is None else state
    records = [_record(p, state, obj_star)]
    for cb in callbacks:
        cb(state, records[-1])
    for _ in range(horizon):
        state = stepper(p, params, state)
        records.append(_record(p, state, obj_star))
        for cb in callbacks:
            cb(state, records[-1])
    return records, state


def _record(p, state, obj_star):
    rec = {"k": state.k, "objective": objective(p, state.x, state.y),
           "residual": residual(p, state.x, state.y)[1]}
    if p.is_consensus():
        rec["consensus_objective"] = consensus_objective(p, state.x)
        if obj_star is not None:
            rec["rel_obj_residual"] = abs(rec["consensus_objective"] - obj_star) / abs(obj_star)
    return rec
