"""Ground-truth quantities by dense linear algebra.

The value function solves, for any lag ``tau``,

    (I - S_D^tau) u = sum_{t<tau} S^t R_D + (S^tau - S_D^tau) R_{D^c}

where ``S_D^tau`` is ``S^tau`` with rows and columns outside ``D`` zeroed, so
rows outside ``D`` reduce to ``u(i) = R(i)``.  The same assembly is reused by
the LSTD estimator with empirical kernels in place of the powers of ``S``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from . import linalg
from .errors import ConfigError, ConvergenceError, NumericalError
from .mrp import (
    ChainSpec,
    Family,
    build_chain,
    invariant_distribution,
    kernel_powers,
    log_invariant_weights,
    mask_to_D,
    mfpt_reward,
    stopped_kernel,
)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    u: np.ndarray
    quantity: str
    tau: int


def bellman_system(powers, D, R):
    """Assemble ``(A, rhs)`` from kernels ``[K^0=I, K^1, ..., K^tau]``.

    ``K^t`` may be exact powers of ``S`` or empirical kernels; only the last
    one enters the matrix.
    """
    tau = len(powers) - 1
    n = powers[0].shape[0]
    in_D = np.zeros(n, dtype=bool)
    in_D[list(D)] = True
    R = np.asarray(R, dtype=float)
    R_D = np.where(in_D, R, 0.0)
    R_out = np.where(in_D, 0.0, R)
    K = powers[tau]
    KD = mask_to_D(K, D).SD
    A = np.eye(n) - KD
    rhs = (K - KD) @ R_out
    for t in range(tau):
        rhs += powers[t] @ R_D
    return A, rhs


def solve_bellman(powers, D, R):
    A, rhs = bellman_system(powers, D, R)
    return linalg.solve(A, rhs)


def solve_value(mrp, tau=1, quantity="general"):
    """Exact value function ``u`` using lag ``tau``.

    Raises
    ------
    SingularSystemError
        If some state of ``D`` cannot reach the complement of ``D``.
    """
    if tau < 1:
        raise ConfigError("tau must be a positive integer")
    powers = kernel_powers(stopped_kernel(mrp), tau)
    u = solve_bellman(powers, mrp.D, mrp.R)
    return ValueFunction(u=u, quantity=quantity, tau=tau)


def _sum(terms):
    # terms span many decades; largest first, exactly rounded
    return math.fsum(sorted(terms, key=abs, reverse=True))


def _edge_weights(n):
    """``1/p(i) + 1/p(i+1)`` for consecutive states, with normalized ``p``."""
    p = invariant_distribution(n)
    return [1.0 / p[i] + 1.0 / p[i + 1] for i in range(n - 1)], p


def mfpt_midpoint_closed_form(n):
    """Mean escape time from the middle state of the bistable chain.

    With ``w_i = 1/p(i) + 1/p(i+1)`` over the ``n-1`` edges (1-based ``i``),

        u((n+1)/2) = 2 (sum_{i<=(n-1)/2} w_i)^2 (sum_{l=2}^{(n+1)/2} p(l))
                     / sum_{i<=n-1} w_i
    """
    if n % 2 == 0 or n < 5:
        raise ConfigError("mfpt_midpoint_closed_form needs odd n >= 5")
    w, p = _edge_weights(n)
    half = (n - 1) // 2
    left = _sum(w[:half])
    mass = _sum(p[1:half + 1])
    return 2.0 * left * left * mass / _sum(w)


def mfpt_midpoint_lower_bound(n):
    return 0.75 * math.exp(3 * (n - 1) / (8 * math.pi))


def committor_u2_closed_form(n):
    """Probability that the bistable chain started next to state 0 ends at ``n-1``."""
    if n < 4:
        raise ConfigError("committor_u2_closed_form needs n >= 4")
    w, _ = _edge_weights(n)
    return w[0] / _sum(w)


@dataclass(frozen=True, eq=False)
class QuasiStationaryReport:
    """Quasi-stationary diagnostics of the chain killed on leaving ``D``.

    ``nu`` and ``lambda_max`` are indexed over ``D`` only.  ``lemma1`` holds
    ``(resolvent_inf_norm, e_nu_T / tau)``; the first must dominate.
    """

    nu: np.ndarray
    lambda_max: float
    e_nu_T: float
    resolvent_inf_norm: float
    lemma1: tuple
    tau: int
    aperiodic: bool
    iterations: int
    residual: float

    @property
    def lemma1_margin(self):
        lhs, rhs = self.lemma1
        return lhs / rhs

    @property
    def lemma1_holds(self):
        lhs, rhs = self.lemma1
        return lhs >= rhs * (1 - 1e-12)


def _period(adjacency):
    """Period of a strongly connected digraph given as a boolean matrix."""
    order, _ = breadth_first_order(adjacency.astype(float), 0, directed=True)
    level = np.full(adjacency.shape[0], -1)
    level[0] = 0
    for v in order:
        for w in np.flatnonzero(adjacency[v]):
            if level[w] < 0:
                level[w] = level[v] + 1
    g = 0
    for v, w in zip(*np.nonzero(adjacency)):
        g = math.gcd(g, int(level[v] + 1 - level[w]))
    return g


def quasi_stationary_report(mrp, tau=1, tol=1e-12, max_iter=10**6):
    """Quasi-stationary distribution and the resolvent lower bound it implies.

    ``nu`` is the normalized left Perron vector of ``S`` restricted to ``D``,
    found by power iteration from the uniform vector.  A periodic block is
    iterated through ``(B + I)/2``, which has the same Perron vector.

    Raises
    ------
    ConfigError
        If the restricted block is not irreducible.
    ConvergenceError
        If the iteration has not settled after ``max_iter`` steps.
    """
    D = list(mrp.D)
    B = stopped_kernel(mrp).S[np.ix_(D, D)]
    m = len(D)
    ncomp, _ = connected_components(B > 0, directed=True, connection="strong")
    if ncomp != 1:
        raise ConfigError("S restricted to D is not irreducible")
    aperiodic = _period(B > 0) == 1
    it_matrix = B if aperiodic else 0.5 * (B + np.eye(m))

    nu = np.full(m, 1.0 / m)
    for it in range(1, max_iter + 1):
        nxt = nu @ it_matrix
        nxt /= nxt.sum()
        change = np.abs(nxt - nu).sum()
        nu = nxt
        if change <= tol:
            break
    else:
        raise ConvergenceError(
            f"power iteration did not settle in {max_iter} steps (change {change:.2e})"
        )
    image = nu @ B
    lam = image.sum()
    residual = float(np.abs(image - lam * nu).max())

    u_T = solve_value(mrp.with_reward(mfpt_reward(mrp.n, D)), 1, "mfpt").u
    e_nu_T = float(nu @ u_T[D])
    Btau = np.linalg.matrix_power(B, tau) if tau > 1 else B
    G = linalg.inverse(np.eye(m) - Btau)
    norm = float(np.abs(G).sum(axis=1).max())
    return QuasiStationaryReport(
        nu=nu,
        lambda_max=float(lam),
        e_nu_T=e_nu_T,
        resolvent_inf_norm=norm,
        lemma1=(norm, e_nu_T / tau),
        tau=tau,
        aperiodic=aperiodic,
        iterations=it,
        residual=residual,
    )


def symmetrized_interior(n):
    """``D_p^{1/2} B D_p^{-1/2}`` for the interior block ``B`` of the bistable chain."""
    mrp = build_chain(ChainSpec(Family.BISTABLE, n))
    B = mrp.P[1:-1, 1:-1]
    logp = log_invariant_weights(n)[1:-1]
    half = 0.5 * (logp[:, None] - logp[None, :])
    return B * np.exp(half)


def spectral_gap_bound(n, tol=1e-10, max_iter=10**7, seed=0):
    """``1 - lambda_min`` of the interior block of the bistable chain.

    The block is similar to a symmetric matrix ``A``; its smallest eigenvalue
    comes from power iteration on ``c I - A`` with ``c = 1 + max row sum``.
    Iteration stops once the eigen-residual falls below ``tol`` relative to
    the Rayleigh quotient, or the quotient stops increasing.
    """
    A = symmetrized_interior(n)
    if np.abs(A - A.T).max() >= 1e-12:
        raise NumericalError("symmetrized interior block is not symmetric")
    c = 1.0 + np.abs(A).sum(axis=1).max()
    M = c * np.eye(A.shape[0]) - A
    x = np.random.default_rng(seed).standard_normal(A.shape[0])
    x /= np.linalg.norm(x)
    theta_prev = -np.inf
    for _ in range(max_iter):
        y = M @ x
        theta = x @ y
        # theta increases monotonically toward c - lambda_min; stop on a small
        # residual or once it stagnates at rounding level
        if (np.linalg.norm(y - theta * x) <= tol * theta
                or theta - theta_prev <= 4 * np.finfo(float).eps * theta):
            break
        theta_prev = theta
        x = y / np.linalg.norm(y)
    else:
        raise ConvergenceError("shifted power iteration did not converge")
    return 1.0 - (c - theta)


def total_reward_second_moment(mrp):
    """``w(i) = E_i[(sum_{t<=T} R(X_t))^2]`` from its one-step linear system."""
    u = solve_value(mrp).u
    S = stopped_kernel(mrp).S
    in_D = mrp.in_D
    R = mrp.R
    SD = mask_to_D(S, mrp.D).SD
    # terminal squares R(j)^2 enter through the columns outside D
    rhs = R**2 + 2 * R * (u - R) + (S - SD) @ np.where(in_D, 0.0, R**2)
    rhs[~in_D] = R[~in_D] ** 2
    A = np.eye(mrp.n) - SD
    return linalg.solve(A, rhs)


def total_reward_variance(mrp, u=None):
    """``Var_i[sum_{t<=T} R(X_t)]``, zero outside ``D``.

    Solved in centered form, ``(I - S_D) v = q`` with
    ``q(i) = sum_j S(i,j) (R(i) + u(j) - u(i))^2``, which avoids the
    cancellation in ``w - u^2``.
    """
    if u is None:
        u = solve_value(mrp).u
    S = stopped_kernel(mrp).S
    q = one_step_inner_variance(S, mrp.R_D, u)
    q[~mrp.in_D] = 0.0
    A = np.eye(mrp.n) - mask_to_D(S, mrp.D).SD
    return linalg.solve(A, q)


def one_step_inner_variance(S, R_D, u):
    """``q(x) = sum_y S(x,y) (R_D(x) + u(y) - u(x))^2``."""
    diff = R_D[:, None] + u[None, :] - u[:, None]
    return (S * diff**2).sum(axis=1)


def mc_relative_avar(mrp):
    """Exact relative asymptotic MSE of the Monte Carlo estimator.

    Returns ``Var_i[total reward] / (mu(i) u(i)^2)`` on ``D`` and 0 outside
    (those values are known exactly).  States of ``D`` with ``mu(i) = 0`` get
    ``inf``.

    Raises
    ------
    ZeroDivisionError
        If ``u(i) = 0`` for some ``i`` in ``D`` while ``R`` is not identically 0.
    """
    out = np.zeros(mrp.n)
    if not np.any(mrp.R):
        return out
    u = solve_value(mrp).u
    D = list(mrp.D)
    if np.any(u[D] == 0):
        raise ZeroDivisionError("value function vanishes on D")
    v = total_reward_variance(mrp, u)
    with np.errstate(divide="ignore"):
        out[D] = v[D] / (mrp.mu[D] * u[D] ** 2)
    return out
