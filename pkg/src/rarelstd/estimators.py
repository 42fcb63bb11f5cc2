"""LSTD and Monte Carlo estimators of the value function from trajectories."""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularSystemError, UnfinishedTrajectoriesError
from .exact import solve_bellman


@dataclass(frozen=True, eq=False)
class EmpiricalKernels:
    """Empirical ``tau``-step kernels ``S~^0 = I, S~^1, ..., S~^tau``.

    ``Stilde[t][i, j]`` is the fraction of paths started at ``i`` with
    ``X_{t ^ T} = j``; rows with no starts are ``e_i``.
    """

    Stilde: np.ndarray
    defined_rows: np.ndarray
    counts: np.ndarray

    @property
    def tau(self):
        return self.Stilde.shape[0] - 1


def empirical_kernels(ds, tau):
    """Count ``(X_0, X_{t ^ T})`` pairs for ``t = 1..tau``.

    Raises
    ------
    ConfigError
        If ``ds`` was sampled with a lag shorter than ``tau``.
    """
    if ds.tau is not None and ds.tau < tau:
        raise ConfigError(f"dataset lag {ds.tau} is shorter than tau={tau}")
    n = ds.n
    X0 = ds.initial_states
    counts = np.bincount(X0, minlength=n)
    defined = counts > 0
    K = np.empty((tau + 1, n, n))
    K[0] = np.eye(n)
    undefined = np.flatnonzero(~defined)
    for t in range(1, tau + 1):
        pairs = np.bincount(X0 * n + ds.stopped_state(t), minlength=n * n)
        Kt = pairs.reshape(n, n).astype(float)
        Kt[defined] /= counts[defined, None]
        Kt[undefined, undefined] = 1.0
        K[t] = Kt
    return EmpiricalKernels(Stilde=K, defined_rows=defined, counts=counts)


class FailureKind(str, enum.Enum):
    NONE = "none"
    UNDEFINED_STATES = "undefined-states"
    SINGULAR_SYSTEM = "singular-system"


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Estimated value function, or the reason it does not exist.

    ``u`` is ``None`` on failure.  ``defined`` flags the states whose entry
    is an actual estimate (or an exact boundary value).
    """

    u: np.ndarray
    failure: FailureKind
    tau: int
    defined: np.ndarray

    @property
    def ok(self):
        return self.failure is FailureKind.NONE


def _failed(kind, tau, n):
    return EstimateResult(u=None, failure=kind, tau=tau, defined=np.zeros(n, dtype=bool))


def lstd_solve(ek, mrp, tau=None):
    """``tau``-step LSTD estimate from empirical kernels.

    Solves the Bellman system of :func:`rarelstd.exact.solve_value` with
    ``S~^t`` in place of ``S^t``.  Any state of ``D`` without starts makes the
    estimate undefined.
    """
    tau = ek.tau if tau is None else tau
    if tau > ek.tau:
        raise ConfigError(f"kernels built up to {ek.tau}, tau={tau} requested")
    D = list(mrp.D)
    if not np.all(ek.defined_rows[D]):
        return _failed(FailureKind.UNDEFINED_STATES, tau, mrp.n)
    try:
        u = solve_bellman(ek.Stilde[: tau + 1], D, mrp.R)
    except SingularSystemError:
        return _failed(FailureKind.SINGULAR_SYSTEM, tau, mrp.n)
    return EstimateResult(u=u, failure=FailureKind.NONE, tau=tau, defined=np.ones(mrp.n, dtype=bool))


def mc_estimate(ds, mrp, states=None):
    """Per-state mean total reward over until-escape paths.

    Parameters
    ----------
    states : iterable of int, optional
        States of ``D`` to estimate; all of ``D`` by default.  Other states
        of ``D`` are ``nan`` with ``defined = False``.

    Raises
    ------
    UnfinishedTrajectoriesError
        If some path did not escape.
    """
    if not np.all(ds.escaped):
        raise UnfinishedTrajectoriesError(
            f"{np.count_nonzero(~ds.escaped)} trajectories did not escape"
        )
    n = mrp.n
    states = list(mrp.D) if states is None else [int(s) for s in states]
    counts = np.bincount(ds.initial_states, minlength=n)
    if np.any(counts[states] == 0):
        return _failed(FailureKind.UNDEFINED_STATES, None, n)
    totals = np.bincount(ds.initial_states, weights=ds.total_rewards(mrp.R), minlength=n)
    u = np.where(mrp.in_D, np.nan, mrp.R)
    u[states] = totals[states] / counts[states]
    defined = ~mrp.in_D
    defined[states] = True
    return EstimateResult(u=u, failure=FailureKind.NONE, tau=None, defined=defined)
