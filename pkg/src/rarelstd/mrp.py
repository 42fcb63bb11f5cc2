r"""Markov reward processes with an absorbing complement.

A prediction problem is the tuple ``(n, P, R, D, mu)``: a row-stochastic
transition matrix ``P`` on states ``0..n-1``, a non-negative reward ``R``, the
non-absorbed set ``D`` and an initial distribution ``mu`` supported on ``D``.
The value of interest is

.. math::

    u(i) = \mathbf{E}_i\left[\sum_{t=0}^{T} R(X_t)\right],
    \qquad T = \min\{t \ge 0 : X_t \notin D\}.

States are 0-based throughout the package; state ``i`` here is state
``i + 1`` in 1-based notation.
"""

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ROW_SUM_TOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mrp:
    """Markov reward process ``(n, P, R, D, mu)``.

    Parameters
    ----------
    P : (n, n) array_like
        Row-stochastic transition matrix.
    R : (n,) array_like
        Non-negative reward.
    D : iterable of int
        Non-absorbed states; nonempty and a proper subset of ``range(n)``.
    mu : (n,) array_like
        Initial distribution, zero outside ``D``.
    """

    P: np.ndarray
    R: np.ndarray
    D: tuple
    mu: np.ndarray

    def __post_init__(self):
        P = _frozen(self.P)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ConfigError(f"P must be a square matrix, got shape {P.shape}")
        n = P.shape[0]
        if not np.all((P >= 0) & (P <= 1)):
            raise ConfigError("entries of P must lie in [0, 1]")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise ConfigError("rows of P must sum to 1")
        R = _frozen(self.R)
        if R.shape != (n,):
            raise ConfigError(f"R must have length {n}")
        if np.any(R < 0) or not np.all(np.isfinite(R)):
            raise ConfigError("R must be finite and non-negative")
        D = tuple(sorted({int(i) for i in self.D}))
        if not D or len(D) == n or D[0] < 0 or D[-1] >= n:
            raise ConfigError("D must be a nonempty proper subset of the states")
        mu = _frozen(self.mu)
        if mu.shape != (n,) or not np.all(mu >= 0):
            raise ConfigError(f"mu must be a non-negative vector of length {n}")
        outside = np.ones(n, dtype=bool)
        outside[list(D)] = False
        if np.any(mu[outside] != 0):
            raise ConfigError("mu must vanish outside D")
        if abs(mu.sum() - 1.0) > ROW_SUM_TOL:
            raise ConfigError("mu must sum to 1")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self):
        return self.P.shape[0]

    @property
    def in_D(self):
        """Boolean mask of ``D``."""
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.D)] = True
        return mask

    @property
    def R_D(self):
        """Reward zeroed outside ``D``."""
        return np.where(self.in_D, self.R, 0.0)

    def with_reward(self, R):
        return dataclasses.replace(self, R=R)

    def with_mu(self, mu):
        return dataclasses.replace(self, mu=mu)


def mfpt_reward(n, D):
    """Reward whose value function is the mean escape time ``E_i[T]``."""
    R = np.zeros(n)
    R[list(D)] = 1.0
    return R


def committor_reward(n):
    """Reward whose value function is the probability of ending in state ``n-1``."""
    R = np.zeros(n)
    R[n - 1] = 1.0
    return R


def with_quantity(mrp, quantity):
    """Return ``mrp`` with the reward of ``quantity`` ('mfpt' or 'committor')."""
    if quantity == "mfpt":
        return mrp.with_reward(mfpt_reward(mrp.n, mrp.D))
    if quantity == "committor":
        return mrp.with_reward(committor_reward(mrp.n))
    raise ConfigError(f"unknown quantity {quantity!r}")


@dataclass(frozen=True, eq=False)
class StoppedKernel:
    """Transition matrix of the chain frozen on leaving ``D``."""

    S: np.ndarray
    tau: int = 1

    def __post_init__(self):
        object.__setattr__(self, "S", _frozen(self.S))
        if self.tau < 1:
            raise ConfigError("tau must be a positive integer")


@dataclass(frozen=True, eq=False)
class MaskedKernel:
    """A kernel power with every row and column outside ``D`` zeroed."""

    SD: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "SD", _frozen(self.SD))


class Family(str, enum.Enum):
    BISTABLE = "bistable"
    LAZY_BISTABLE = "lazy-bistable"
    CUSTOM = "custom"


class MuMode(str, enum.Enum):
    UNIFORM = "uniform-on-D"
    INVARIANT = "invariant-conditioned-on-D"
    CUSTOM = "custom"


_DEFAULT_DENOMINATOR = {Family.BISTABLE: 2.0, Family.LAZY_BISTABLE: 10.0}
_MU_ALIASES = {"uniform": MuMode.UNIFORM, "invariant": MuMode.INVARIANT}


@dataclass(frozen=True)
class ChainSpec:
    """Recipe for a benchmark chain.

    ``laziness_denominator`` defaults to 2 for the bistable family and 10 for
    the lazy variant.
    """

    family: Family = Family.BISTABLE
    n: int = 20
    laziness_denominator: float = None
    mu_mode: MuMode = MuMode.UNIFORM

    def __post_init__(self):
        try:
            family = Family(self.family)
            mu_mode = _MU_ALIASES.get(self.mu_mode) or MuMode(self.mu_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "mu_mode", mu_mode)
        if self.laziness_denominator is None:
            object.__setattr__(
                self, "laziness_denominator", _DEFAULT_DENOMINATOR.get(family, 2.0)
            )
        if not self.laziness_denominator > 0:
            raise ConfigError("laziness_denominator must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        if family is not Family.CUSTOM and self.n < 4:
            raise ConfigError("bistable chains need n >= 4")

    @classmethod
    def from_config(cls, text):
        """Parse ``key=value`` lines (``#`` starts a comment)."""
        fields = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            fields[key] = value
        unknown = set(fields) - {"family", "n", "laziness_denominator", "mu_mode"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "n" in fields:
                fields["n"] = int(fields["n"])
            if "laziness_denominator" in fields:
                fields["laziness_denominator"] = float(fields["laziness_denominator"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cls(**fields)

    def to_config(self):
        return (
            f"family={self.family.value}\n"
            f"n={self.n}\n"
            f"laziness_denominator={self.laziness_denominator!r}\n"
            f"mu_mode={self.mu_mode.value}\n"
        )


def log_invariant_weights(n):
    """Unnormalized log-weights ``(n-1)/(4 pi) * cos(4 pi k/(n-1))``, k = 0..n-1."""
    if n < 2:
        raise ConfigError("invariant_distribution needs n >= 2")
    k = np.arange(n)
    scale = (n - 1) / (4 * math.pi)
    return scale * np.cos(4 * math.pi * k / (n - 1))


def invariant_distribution(n):
    """Three-mode invariant distribution of the bistable benchmark chain.

    Modes sit at the two ends and the middle state; they sharpen as ``n``
    grows.  Computed in the log domain with max-subtraction.
    """
    logw = log_invariant_weights(n)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def build_chain(spec, mu=None):
    """Build the nearest-neighbour benchmark chain described by ``spec``.

    The hop probability from ``i`` to a neighbour ``j`` is
    ``p(j) / (d * (p(i) + p(j)))`` with ``d`` the laziness denominator and ``p``
    the invariant distribution; the remaining mass stays on ``i``.  The two
    end states are absorbing and ``D`` is everything else.  The reward is left
    at zero; see :func:`with_quantity`.

    Parameters
    ----------
    spec : ChainSpec
    mu : (n,) array_like, optional
        Required when ``spec.mu_mode`` is custom.
    """
    if spec.family is Family.CUSTOM:
        raise ConfigError("custom chains are constructed directly as Mrp")
    n = spec.n
    logp = log_invariant_weights(n)
    d = spec.laziness_denominator
    P = np.zeros((n, n))
    for i in range(1, n - 1):
        for j in (i - 1, i + 1):
            # p(j)/(d(p(i)+p(j))) written in log-ratio form
            P[i, j] = 1.0 / (d * (1.0 + math.exp(logp[i] - logp[j])))
        P[i, i] = 1.0 - P[i, i - 1] - P[i, i + 1]
    P[0, 0] = P[n - 1, n - 1] = 1.0
    D = range(1, n - 1)
    if spec.mu_mode is MuMode.UNIFORM:
        mu = np.zeros(n)
        mu[1:-1] = 1.0 / (n - 2)
    elif spec.mu_mode is MuMode.INVARIANT:
        p = invariant_distribution(n)
        mu = np.zeros(n)
        mu[1:-1] = p[1:-1] / p[1:-1].sum()
    elif mu is None:
        raise ConfigError("mu_mode=custom requires an explicit mu")
    return Mrp(P=P, R=np.zeros(n), D=D, mu=mu)


def w4_chain():
    """Four-state walk: interior states 1, 2 hop left/right with probability 1/2."""
    P = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    return Mrp(P=P, R=np.zeros(4), D=(1, 2), mu=np.array([0.0, 0.5, 0.5, 0.0]))


def stopped_kernel(mrp):
    """Kernel ``S`` of the stopped chain: ``P`` on ``D`` rows, identity elsewhere."""
    S = np.array(mrp.P, dtype=float)
    out = ~mrp.in_D
    S[out, :] = 0.0
    S[out, out] = 1.0
    return StoppedKernel(S=S, tau=1)


def _matrix(S):
    return S.S if isinstance(S, StoppedKernel) else np.asarray(S, dtype=float)


def kernel_power(S, t):
    """``t``-th power of a kernel by repeated multiplication."""
    if t < 1:
        raise ConfigError("kernel_power needs t >= 1")
    return kernel_powers(S, int(t))[-1]


def kernel_powers(S, tau):
    """List ``[S^0, S^1, ..., S^tau]`` built by successive products."""
    S = _matrix(S)
    out = [np.eye(S.shape[0])]
    for _ in range(tau):
        out.append(out[-1] @ S)
    return out


def mask_to_D(Stau, D):
    """Zero every row and column of ``Stau`` whose index is outside ``D``."""
    Stau = _matrix(Stau)
    keep = np.zeros(Stau.shape[0], dtype=bool)
    keep[list(D)] = True
    return MaskedKernel(SD=Stau * np.outer(keep, keep))
