r"""Asymptotic variance of the LSTD estimator and its upper bounds.

The CLT variance of :math:`\sqrt{M}(\tilde u(i) - u(i))` is

.. math::

    \sigma_i^2 = \sum_{k \in D} \frac{G(i,k)^2}{\mu(k)}\,
        \mathbf{E}_k\Big[\sum_{t<\tau} R_D(X_{t\wedge T})
        + u(X_{\tau\wedge T}) - u(k)\Big]^2,
    \qquad G = (I - S_D^\tau)^{-1}.

It is bounded by sums over pairs ``(k, l)`` whose denominators are the
taboo hitting probabilities ``Q(k, l)`` of the ``tau``-step chain.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path

from . import linalg
from .errors import ConfigError
from .exact import solve_value
from .mrp import kernel_powers, mask_to_D, stopped_kernel


@dataclass(frozen=True, eq=False)
class VarianceReport:
    """Per-state asymptotic variances; entries outside ``D`` are 0."""

    sigma_sq: np.ndarray
    rel_avar: np.ndarray
    inner: np.ndarray
    u: np.ndarray
    tau: int

    def max_rel_avar(self, D):
        return float(np.max(self.rel_avar[list(D)]))


def inner_expectations(S, R_D, u, tau):
    """``E_k[(sum_{t<tau} R_D(X_t) + u(X_tau) - u(k))^2]`` for every ``k``.

    Because ``u`` is harmonic for the stopped chain, the bracket is a sum of
    martingale increments ``R_D(X_t) + u(X_{t+1}) - u(X_t)``, whose squares
    add up in expectation:  the result is ``sum_{t<tau} S^t q`` with ``q`` the
    one-step increment variance.  Computed backward in ``O(tau n^2)``.
    """
    diff = R_D[:, None] + u[None, :] - u[:, None]
    q = (S * diff**2).sum(axis=1)
    h = np.zeros_like(q)
    for _ in range(tau):
        h = q + S @ h
    return h


def moment_recursion(S, R_D, u, tau):
    """First and second moments of ``Z = sum_{t<tau} R_D(X_t) + u(X_tau)``.

    Returns ``(f0, g0)`` with ``f0(x) = E_x[Z]`` and ``g0(x) = E_x[Z^2]``.
    The inner expectation equals ``g0 - u**2`` (subject to cancellation when
    it is small next to ``u**2``).
    """
    f = np.array(u, dtype=float)
    g = f**2
    for _ in range(tau):
        Sf = S @ f
        f, g = R_D + Sf, R_D**2 + 2 * R_D * Sf + S @ g
    return f, g


def sigma_asymptotic(mrp, tau=1):
    """Exact CLT variance of the ``tau``-step LSTD estimator.

    Raises
    ------
    ConfigError
        If ``mu(k) = 0`` for some ``k`` in ``D``.
    """
    D = list(mrp.D)
    if np.any(mrp.mu[D] <= 0):
        raise ConfigError("asymptotic variance needs mu(k) > 0 on all of D")
    S = stopped_kernel(mrp).S
    u = solve_value(mrp, tau).u
    R_D = mrp.R_D
    inner = inner_expectations(S, R_D, u, tau)
    Stau = kernel_powers(S, tau)[-1]
    B = Stau[np.ix_(D, D)]
    G = linalg.inverse(np.eye(len(D)) - B)
    sig = np.zeros(mrp.n)
    sig[D] = (G**2) @ (inner[D] / mrp.mu[D])
    rel = np.zeros(mrp.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel[D] = np.where(sig[D] == 0, 0.0, sig[D] / u[D] ** 2)
    inner_out = np.zeros(mrp.n)
    inner_out[D] = inner[D]
    return VarianceReport(sigma_sq=sig, rel_avar=rel, inner=inner_out, u=u, tau=tau)


@dataclass(frozen=True, eq=False)
class QMatrix:
    """Taboo hitting probabilities; rows outside ``D`` and the diagonal are 0."""

    Q: np.ndarray
    tau: int


def q_tau(mrp, tau=1, Stau=None):
    """``Q(k, l)``: the ``tau``-step chain from ``k`` reaches ``l`` before
    returning to ``k`` or entering ``D^c`` anywhere other than ``l``.

    For each ``k`` the chain is killed on ``{k}`` and on ``D^c``; with
    ``G = (I - K)^{-1}`` for the surviving block ``K``, the probability of
    reaching ``l`` in the block from ``y`` is ``G(y, l)/G(l, l)``, and exits
    through ``l`` outside ``D`` follow from ``G S^tau(., l)``.
    """
    if Stau is None:
        Stau = kernel_powers(stopped_kernel(mrp), tau)[-1]
    n = mrp.n
    D = list(mrp.D)
    out = [j for j in range(n) if j not in mrp.D]
    Q = np.zeros((n, n))
    for k in D:
        rest = [j for j in D if j != k]
        if not rest:
            Q[k, out] = Stau[k, out]
            continue
        K = Stau[np.ix_(rest, rest)]
        G = linalg.inverse(np.eye(len(rest)) - K)
        a = Stau[k, rest] @ G
        Q[k, rest] = a / np.diag(G)
        Q[k, out] = Stau[k, out] + a @ Stau[np.ix_(rest, out)]
    np.clip(Q, 0.0, 1.0, out=Q)
    return QMatrix(Q=Q, tau=tau)


def hitting_probability_pair(Stau, D, k, l):
    """``Q(k, l)`` for a single pair by a direct absorbing-chain solve."""
    n = Stau.shape[0]
    D = set(D)
    absorbing = {k, l} | (set(range(n)) - D)
    free = [j for j in range(n) if j not in absorbing]
    h = np.zeros(n)
    h[l] = 1.0
    if free:
        A = np.eye(len(free)) - Stau[np.ix_(free, free)]
        h[free] = linalg.solve(A, Stau[free, l])
    return float(Stau[k] @ h)


def avar_bound(mrp, tau=1, zero_reward_in_D=False, qmat=None):
    """Upper bound on ``max_i sigma_i^2 / u(i)^2``.

    Sums ``num(k, l) / (mu(k) Q(k, l)^2)`` over ``k`` in ``D`` and ``l != k``,
    with ``num = sum_{t=1}^{tau} S^t(k, l)``; when ``zero_reward_in_D`` the
    numerator is only ``S^tau(k, l)``.  Pairs with zero numerator contribute
    nothing; a positive numerator over ``Q = 0`` makes the bound ``inf``.

    Raises
    ------
    ConfigError
        If ``zero_reward_in_D`` is set but ``R`` is nonzero somewhere in ``D``.
    """
    if zero_reward_in_D and np.any(mrp.R[list(mrp.D)] != 0):
        raise ConfigError("zero_reward_in_D set but R does not vanish on D")
    powers = kernel_powers(stopped_kernel(mrp), tau)
    if qmat is None:
        qmat = q_tau(mrp, tau, Stau=powers[-1])
    Q = qmat.Q
    num = powers[-1] if zero_reward_in_D else np.sum(powers[1:], axis=0)
    D = list(mrp.D)
    total = 0.0
    for k in D:
        for l in range(mrp.n):
            if l == k or num[k, l] == 0:
                continue
            denom = mrp.mu[k] * Q[k, l] ** 2
            if denom == 0:
                return math.inf
            total += num[k, l] / denom
    return total


@dataclass(frozen=True, eq=False)
class MinorizingGraph:
    """Directed graph of transitions with probability at least ``c``."""

    edges: np.ndarray
    connected: bool
    distances: np.ndarray
    c: float


def minorizing_graph(Stau, c, D):
    """Keep edges ``i -> j`` (``i != j``) with ``Stau(i, j) >= c``.

    ``connected`` requires every state of ``D`` to reach every other state.
    ``distances`` holds BFS path lengths, ``inf`` where unreachable.
    """
    if not c > 0:
        raise ConfigError("threshold c must be positive")
    Stau = np.asarray(Stau, dtype=float)
    edges = Stau >= c
    np.fill_diagonal(edges, False)
    dist = shortest_path(edges.astype(float), directed=True, unweighted=True)
    rows = dist[list(D)]
    connected = bool(np.all(np.isfinite(rows)))
    return MinorizingGraph(edges=edges, connected=connected, distances=dist, c=c)


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    """Constants of the rare-event assumptions and the bound they imply.

    ``alpha`` is ``n * min_D mu`` capped at 1.  ``C_fit`` is the smallest
    ``C`` with ``S^t(i, j) <= C exp(-beta d(i, j)^2)`` for all ``i != j`` and
    ``t <= tau``; ``inf`` when some reachable-in-``S^t`` pair is unreachable in
    the graph.  ``bound`` carries the factor ``tau`` and ``bound_zero_reward``
    omits it (valid when ``R`` vanishes on ``D``).
    """

    alpha: float
    c: float
    beta: float
    C_fit: float
    connected: bool
    distances: np.ndarray
    tau: int
    n: int
    bound: float
    bound_zero_reward: float
    argmax_pair: tuple

    def applicable_bound(self, zero_reward_in_D):
        return self.bound_zero_reward if zero_reward_in_D else self.bound


def fit_assumption_constants(mrp, tau=1, c=1 / (2 * (1 + math.e)), beta=0.5):
    if not beta > 0:
        raise ConfigError("beta must be positive")
    powers = kernel_powers(stopped_kernel(mrp), tau)
    graph = minorizing_graph(powers[-1], c, mrp.D)
    n = mrp.n
    alpha = min(n * float(mrp.mu[list(mrp.D)].min()), 1.0)
    d = graph.distances
    C = 0.0
    argmax = None
    off = ~np.eye(n, dtype=bool)
    for t in range(1, tau + 1):
        St = powers[t]
        live = off & (St > 0)
        if np.any(live & ~np.isfinite(d)):
            C, argmax = math.inf, None
            break
        with np.errstate(over="ignore"):
            vals = np.where(live, St * np.exp(beta * np.where(live, d, 0.0) ** 2), 0.0)
        idx = np.unravel_index(int(vals.argmax()), vals.shape)
        if vals[idx] > C:
            C, argmax = float(vals[idx]), (int(idx[0]), int(idx[1]), t)
    if graph.connected and alpha > 0:
        shape = C / alpha * math.exp(math.log(c) ** 2 / beta) * n**3
        bound, bound0 = shape * tau, shape
    else:
        bound = bound0 = math.inf
    return AssumptionReport(
        alpha=alpha,
        c=c,
        beta=beta,
        C_fit=C,
        connected=graph.connected,
        distances=d,
        tau=tau,
        n=n,
        bound=bound,
        bound_zero_reward=bound0,
        argmax_pair=argmax,
    )


def theorem2_check(mrp, tau, report, variance=None):
    """Compare ``max_i sigma_i^2/u(i)^2`` with the assumption-based bound.

    Returns ``(holds, margin)`` where ``margin = bound / max rel-avar``.  The
    tighter variant without ``tau`` is used when ``R`` vanishes on ``D``.
    """
    if variance is None:
        variance = sigma_asymptotic(mrp, tau)
    worst = variance.max_rel_avar(mrp.D)
    zero_in_D = not np.any(mrp.R[list(mrp.D)])
    bound = report.applicable_bound(zero_in_D)
    margin = math.inf if worst == 0 else bound / worst
    return worst <= bound, margin
