"""
Convex functions with values, gradients and proximal mappings.

Every function exposes ``prox(v, step)`` computing

    argmin_y  h(y) + 1/2 * sum_k (v_k - y_k)**2 / step_k

where ``step`` is a positive scalar or an array broadcastable to ``v``. A
scalar step ``t`` is the usual ``prox_{t h}``; an array step is the prox
under the diagonal metric ``diag(1 / step)``.

Values are extended reals: infeasible points evaluate to ``math.inf``.
"""

import math

import numpy as np
from scipy import linalg


class ProxNotAvailable(NotImplementedError):
    pass


def lambda_max(M, tol=1e-10, max_iter=10_000):
    """
    Largest eigenvalue of a symmetric positive semidefinite matrix.

    Diagonal and 1x1 inputs are read off exactly; otherwise power iteration
    runs until the eigen-residual ``||M v - rho v||`` falls below ``tol``
    relative to the Rayleigh quotient ``rho``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"square matrix required, got shape {M.shape}")
    if M.size == 0:
        return 0.0
    if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
        return float(np.max(np.diag(M)))
    # deterministic start with a component along every coordinate
    v = np.ones(M.shape[0]) + np.linspace(0.0, 0.5, M.shape[0])
    v /= np.linalg.norm(v)
    lam = float(v @ M @ v)
    for _ in range(max_iter):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * max(abs(lam), 1.0):
            return lam
        v = w / nw
    return float(v @ M @ v)


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_l1(v, t):
    """Componentwise soft-thresholding, the prox of ``t * ||.||_1``."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("threshold must be positive")
    return soft_threshold(np.asarray(v, dtype=float), t)


def prox_quadratic(v, Psi, b, alpha):
    """
    Prox of ``alpha * 1/2 ||Psi y - b||^2``.

    Solves ``(I + alpha Psi^T Psi) y = v + alpha Psi^T b``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    H = np.eye(Psi.shape[1]) + alpha * Psi.T @ Psi
    return linalg.cho_solve(linalg.cho_factor(H), np.asarray(v, dtype=float) + alpha * Psi.T @ b)


class ConvexFunction:
    """
    Base class. Subclasses set ``dim`` and ``lipschitz`` (the gradient
    Lipschitz constant, or ``None`` when the function is not smooth).
    """

    dim = None
    lipschitz = None

    @property
    def smooth(self):
        return self.lipschitz is not None

    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError(f"{type(self).__name__} is not differentiable")

    def prox(self, v, step):
        raise ProxNotAvailable(f"no proximal mapping registered for {type(self).__name__}")

    def split(self):
        """``(nonsmooth, smooth)`` parts used by the gradient-linearized solver."""
        return self, Zero(self.dim)


class Zero(ConvexFunction):
    lipschitz = 0.0

    def __init__(self, dim):
        self.dim = dim

    def value(self, x):
        return 0.0

    def grad(self, x):
        return np.zeros(np.shape(x))

    def prox(self, v, step):
        return np.array(v, dtype=float)


class L1Norm(ConvexFunction):
    """``coef * ||x||_1``."""

    def __init__(self, dim, coef=1.0):
        if coef < 0:
            raise ValueError("coefficient must be nonnegative")
        self.dim = dim
        self.coef = float(coef)

    def value(self, x):
        return self.coef * float(np.sum(np.abs(x)))

    def prox(self, v, step):
        v = np.asarray(v, dtype=float)
        if self.coef == 0.0:
            return v.copy()
        return soft_threshold(v, self.coef * np.asarray(step, dtype=float))


class ZeroIndicator(ConvexFunction):
    """Indicator of the origin."""

    def __init__(self, dim):
        self.dim = dim

    def value(self, x):
        return 0.0 if not np.any(x) else math.inf

    def prox(self, v, step):
        return np.zeros(np.shape(v))


class Quadratic(ConvexFunction):
    """
    Least-squares loss ``1/2 ||Psi x - b||^2``.

    Cholesky factors of ``I + t Psi^T Psi`` are cached per scalar step.
    """

    def __init__(self, Psi, b):
        self.Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
        self.b = np.asarray(b, dtype=float)
        self.dim = self.Psi.shape[1]
        self.gram = self.Psi.T @ self.Psi
        self.Ptb = self.Psi.T @ self.b
        self.lipschitz = lambda_max(self.gram)
        self._factors = {}

    def value(self, x):
        r = self.Psi @ x - self.b
        return 0.5 * float(r @ r)

    def grad(self, x):
        return self.gram @ x - self.Ptb

    def prox(self, v, step):
        v = np.asarray(v, dtype=float)
        if np.ndim(step) == 0:
            t = float(step)
            fac = self._factors.get(t)
            if fac is None:
                fac = self._factors[t] = linalg.cho_factor(np.eye(self.dim) + t * self.gram)
            return linalg.cho_solve(fac, v + t * self.Ptb)
        w = 1.0 / np.broadcast_to(np.asarray(step, dtype=float), v.shape)
        return linalg.solve(np.diag(w) + self.gram, w * v + self.Ptb, assume_a="pos")


class SplitSum(ConvexFunction):
    """
    ``nonsmooth + smooth`` kept apart for the gradient-linearized solver.

    The proximal mapping of the sum is available when either part is zero.
    """

    def __init__(self, nonsmooth, smooth):
        if smooth.lipschitz is None:
            raise ValueError("smooth part must carry a Lipschitz constant")
        self.nonsmooth = nonsmooth
        self.smooth_part = smooth
        self.dim = nonsmooth.dim

    @property
    def lipschitz(self):
        return self.nonsmooth.lipschitz + self.smooth_part.lipschitz if self.nonsmooth.smooth else None

    def value(self, x):
        return self.nonsmooth.value(x) + self.smooth_part.value(x)

    def grad(self, x):
        return self.nonsmooth.grad(x) + self.smooth_part.grad(x)

    def prox(self, v, step):
        if isinstance(self.smooth_part, Zero):
            return self.nonsmooth.prox(v, step)
        if isinstance(self.nonsmooth, Zero):
            return self.smooth_part.prox(v, step)
        raise ProxNotAvailable("prox of a sum with two nonzero parts")

    def split(self):
        return self.nonsmooth, self.smooth_part


def combine_separable(parts, dim):
    """Sum of ``Zero``/``L1Norm`` terms on a common argument, as one function."""
    coef = 0.0
    for r in parts:
        if isinstance(r, L1Norm):
            coef += r.coef
        elif not isinstance(r, Zero):
            raise ProxNotAvailable(f"cannot combine {type(r).__name__} into a summed prox")
    return L1Norm(dim, coef) if coef > 0 else Zero(dim)


class ConsensusCliqueFn(ConvexFunction):
    """
    ``s(y) = sum_j r_j(y_j) + indicator{y_1 = ... = y_m}`` on ``m`` blocks of
    dimension ``d``.

    The prox reduces to the prox of ``rbar = sum_j r_j`` at the (weighted)
    block mean, replicated over the blocks.
    """

    def __init__(self, components, d, atol=0.0):
        self.components = list(components)
        self.m = len(self.components)
        self.d = d
        self.dim = self.m * d
        self.atol = atol
        self.rbar = combine_separable(self.components, d)

    def value(self, y):
        Y = np.asarray(y, dtype=float).reshape(self.m, self.d)
        spread = (Y != Y[0]).any() if self.atol == 0 else np.max(np.abs(Y - Y[0])) > self.atol
        if spread:
            return math.inf
        return float(sum(r.value(Y[j]) for j, r in enumerate(self.components)))

    def prox(self, v, step):
        V = np.asarray(v, dtype=float).reshape(self.m, self.d)
        step = np.asarray(step, dtype=float)
        if step.ndim == 0:
            weights = None
        else:
            weights = 1.0 / np.broadcast_to(step, (self.m * self.d,)).reshape(self.m, self.d)
        return prox_consensus(self, V.ravel(), weights, scalar_step=float(step) if weights is None else None)


def prox_consensus(fn, v, weights=None, scalar_step=None):
    """
    Prox of a :class:`ConsensusCliqueFn` under the metric ``diag(weights)``.

    Parameters
    ----------
    fn : ConsensusCliqueFn
    v : ndarray
        Stacked point of length ``m * d``.
    weights : array_like, optional
        Either ``m`` per-block weights or an ``(m, d)`` array of per-entry
        weights; all must be positive. Omitted means unit weights.
    scalar_step : float, optional
        Scale of ``fn`` under unit weights (``prox_{t s}``); ignored when
        ``weights`` is given.

    Returns
    -------
    ndarray
        ``1_m (x) xi`` where ``xi`` is the prox of ``rbar`` at the weighted
        mean, taken with step ``1 / sum_j w_j``.
    """
    V = np.asarray(v, dtype=float).reshape(fn.m, fn.d)
    if weights is None:
        t = 1.0 if scalar_step is None else scalar_step
        if t <= 0:
            raise ValueError("step must be positive")
        xi = fn.rbar.prox(V.sum(axis=0) / fn.m, t / fn.m)
    else:
        w = np.asarray(weights, dtype=float)
        if w.ndim == 1:
            w = np.repeat(w[:, None], fn.d, axis=1)
        if w.shape != (fn.m, fn.d):
            raise ValueError(f"weights must have shape ({fn.m},) or ({fn.m}, {fn.d})")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        total = w.sum(axis=0)
        xi = fn.rbar.prox((w * V).sum(axis=0) / total, 1.0 / total)
    return np.tile(xi, fn.m)


def prox_generic(fn, v, metric):
    """
    ``argmin_y fn(y) + 1/2 ||v - y||^2_M`` for a diagonal positive metric ``M``.

    ``metric`` is a scalar or the diagonal of ``M``.
    """
    metric = np.asarray(metric, dtype=float)
    if np.any(metric <= 0):
        raise ValueError("metric must be positive definite")
    step = 1.0 / metric
    return fn.prox(np.asarray(v, dtype=float), float(step) if step.ndim == 0 else step)
