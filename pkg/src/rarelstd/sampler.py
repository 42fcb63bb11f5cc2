"""Seeded trajectory generation for the stopped chain.

Randomness is counter based.  Trajectory ``l`` of a dataset with master seed
``s`` owns the SplitMix64 stream with key ``mix64(mix64(s) + (l + 1) * GOLDEN)``;
its ``t``-th draw is the top ``RES_BITS`` bits of ``mix64(key + (t + 1) * GOLDEN)``,
and categorical choices compare it with CDFs rounded to the same grid, so
probabilities are resolved to ``2**-40``.  Draw ``t = 0`` picks the initial
state and draw ``t`` the ``t``-th transition.  A trajectory therefore
depends only on ``(s, l, t)``, which makes the output independent of
batching, ordering and worker count while still letting numpy advance all
trajectories at once.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mrp import stopped_kernel

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
RES_BITS = 40
_SCALE = float(1 << RES_BITS)
DEFAULT_CAP = 10**8


def mix64(x):
    """SplitMix64 finalizer, applied elementwise to a ``uint64`` array."""
    z = np.array(x, dtype=np.uint64, copy=True, ndmin=1)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def _u64(seed):
    return np.array([int(seed) & _MASK64], dtype=np.uint64)


def stream_keys(master_seed, index):
    """Stream keys for the given replica/trajectory indices."""
    index = np.asarray(index, dtype=np.uint64)
    return mix64(mix64(_u64(master_seed)) + (index + np.uint64(1)) * GOLDEN)


def derive_seed(master_seed, index):
    """Child seed for replica ``index`` (a Python int)."""
    return int(stream_keys(master_seed, [index])[0])


def draws(keys, step):
    """Draw number ``step`` of every stream, as integers in ``[0, 2**RES_BITS)``."""
    z = mix64(keys + np.array([step + 1], dtype=np.uint64) * GOLDEN)
    return z >> np.uint64(64 - RES_BITS)


def uniforms(keys, step):
    """Draw number ``step`` of every stream, scaled to ``[0, 1)``."""
    return draws(keys, step).astype(np.float64) * 2.0**-RES_BITS


def _thresholds(weights):
    """Row-wise integer CDFs on the ``2**RES_BITS`` grid.

    Entries past the last positive weight equal the full scale, so the
    inverse-CDF lookup never lands on a zero-mass state.
    """
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    cdf = np.cumsum(w, axis=1)
    cdf /= cdf[:, -1:]
    thr = np.round(cdf * _SCALE)
    for row, wr in zip(thr, w):
        row[np.flatnonzero(wr)[-1]:] = _SCALE
    return thr.astype(np.uint64)


def _categorical(thr, u):
    # side='right': u in [thr[j-1], thr[j]) selects j; empty cells are skipped
    return np.searchsorted(thr, u, side="right")


class _Stepper:
    """Vectorized one-step transitions for all rows of a kernel.

    Sparse kernels (at most ``SPARSE_WIDTH`` nonzeros per row) keep each row's
    support and thresholds; the next state is ``cols[X, #{j : u >= thr[X, j]}]``.
    Denser kernels shift row ``s`` of the threshold table by ``s * 2**RES_BITS``
    and search the flattened table once for all trajectories.
    """

    SPARSE_WIDTH = 8

    def __init__(self, S):
        S = np.asarray(S, dtype=float)
        self.n = S.shape[0]
        width = int((S > 0).sum(axis=1).max())
        if width <= self.SPARSE_WIDTH:
            cols = np.zeros((self.n, width), dtype=np.int64)
            thr = np.full((self.n, width), 1 << RES_BITS, dtype=np.uint64)
            for s, row in enumerate(S):
                nz = np.flatnonzero(row)
                cols[s, : nz.size] = nz
                cols[s, nz.size:] = nz[-1]
                thr[s, : nz.size] = _thresholds(row[nz])[0]
            # the last threshold is always full scale, so it never counts
            self.cols, self.thr = cols, thr[:, :-1]
            self.flat = None
        else:
            shift = np.arange(self.n, dtype=np.uint64)[:, None] << np.uint64(RES_BITS)
            self.flat = (_thresholds(S) + shift).ravel()

    def __call__(self, X, u):
        if self.flat is not None:
            key = (X.astype(np.uint64) << np.uint64(RES_BITS)) | u
            return np.searchsorted(self.flat, key, side="right") - X * self.n
        pos = np.zeros(X.shape, dtype=np.int64)
        for j in range(self.thr.shape[1]):
            pos += u >= self.thr[X, j]
        return self.cols[X, pos]


@dataclass(frozen=True)
class Trajectory:
    """One stopped path ``X_0, ..., X_{tau ^ T}``."""

    states: tuple
    escaped: bool
    escape_time: int = None


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """``M`` independent stopped paths stored back to back.

    Trajectory ``l`` is ``states[offsets[l]:offsets[l + 1]]``.  ``tau`` is
    ``None`` for until-escape datasets.  ``escape_time`` is -1 for paths that
    did not leave ``D``.
    """

    states: np.ndarray
    offsets: np.ndarray
    escaped: np.ndarray
    escape_time: np.ndarray
    counts: np.ndarray
    master_seed: int
    tau: int
    n: int

    @property
    def M(self):
        return len(self.offsets) - 1

    @property
    def lengths(self):
        return np.diff(self.offsets)

    @property
    def initial_states(self):
        return self.states[self.offsets[:-1]]

    @property
    def unfinished(self):
        """Number of until-escape paths that hit the step cap."""
        if self.tau is not None:
            return 0
        return int(np.count_nonzero(~self.escaped))

    def stopped_state(self, t):
        """``X_{t ^ T}`` of every trajectory."""
        lengths = self.lengths
        if t >= 0 and np.any((lengths <= t) & ~self.escaped):
            raise ConfigError(f"trajectories are not observed up to step {t}")
        pos = self.offsets[:-1] + np.minimum(t, lengths - 1)
        return self.states[pos]

    def trajectory(self, l):
        a, b = self.offsets[l], self.offsets[l + 1]
        escaped = bool(self.escaped[l])
        return Trajectory(
            states=tuple(int(s) for s in self.states[a:b]),
            escaped=escaped,
            escape_time=int(self.escape_time[l]) if escaped else None,
        )

    def __iter__(self):
        return (self.trajectory(l) for l in range(self.M))

    def total_rewards(self, R):
        """``sum_t R(X_t)`` along every stored path."""
        R = np.asarray(R, dtype=float)
        return np.add.reduceat(R[self.states], self.offsets[:-1])

    def to_text(self):
        tau = "inf" if self.tau is None else str(self.tau)
        lines = [
            f"# master_seed={self.master_seed}",
            f"# M={self.M}",
            f"# tau={tau}",
            f"# n={self.n}",
        ]
        for l in range(self.M):
            a, b = self.offsets[l], self.offsets[l + 1]
            lines.append(",".join(map(str, self.states[a:b].tolist())))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, D):
        """Parse :meth:`to_text` output; ``D`` decides which paths escaped."""
        header = {}
        paths = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                header[key.strip()] = value.strip()
            elif line.strip():
                paths.append([int(s) for s in line.split(",")])
        try:
            n = int(header["n"])
            tau = None if header["tau"] == "inf" else int(header["tau"])
            seed = int(header["master_seed"])
        except KeyError as exc:
            raise ConfigError(f"dataset header lacks {exc}") from None
        return from_paths(paths, n, D, tau=tau, master_seed=seed)


def from_paths(paths, n, D, tau=None, master_seed=0):
    """Build a dataset from explicit state sequences."""
    in_D = np.zeros(n, dtype=bool)
    in_D[list(D)] = True
    lengths = np.array([len(p) for p in paths], dtype=np.int64)
    if np.any(lengths < 1):
        raise ConfigError("empty trajectory")
    states = np.concatenate([np.asarray(p, dtype=np.int64) for p in paths])
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    last = states[offsets[1:] - 1]
    escaped = ~in_D[last]
    escape_time = np.where(escaped, lengths - 1, -1)
    counts = np.bincount(states[offsets[:-1]], minlength=n)
    return TrajectoryDataset(
        states=states,
        offsets=offsets,
        escaped=escaped,
        escape_time=escape_time,
        counts=counts,
        master_seed=master_seed,
        tau=tau,
        n=n,
    )


def sample_initial_states(mrp, M, master_seed):
    """Draw ``X_0`` for trajectories ``0..M-1`` by inverse CDF on ``mu``."""
    keys = stream_keys(master_seed, np.arange(M))
    return _categorical(_thresholds(mrp.mu)[0], draws(keys, 0)), keys


def sample_dataset(mrp, M, tau, master_seed, initial=None):
    """``M`` independent paths observed up to ``tau ^ T``.

    Parameters
    ----------
    mrp : Mrp
    M : int
        Number of trajectories.
    tau : int
        Lag time (maximum number of transitions per path).
    master_seed : int
        64-bit seed; together with ``(M, tau, mrp)`` it fixes the output.
    initial : tuple, optional
        ``sample_initial_states(mrp, M, master_seed)`` if already computed.
    """
    if M < 1 or tau < 1:
        raise ConfigError("M and tau must be positive")
    X0, keys = initial or sample_initial_states(mrp, M, master_seed)
    step = _Stepper(stopped_kernel(mrp).S)
    in_D = mrp.in_D
    paths = np.empty((M, tau + 1), dtype=np.int64)
    paths[:, 0] = X0
    T = np.full(M, -1, dtype=np.int64)
    T[~in_D[X0]] = 0
    for t in range(1, tau + 1):
        prev = paths[:, t - 1]
        cur = prev.copy()
        active = np.flatnonzero(T < 0)
        if active.size:
            cur[active] = step(prev[active], draws(keys[active], t))
            left = active[~in_D[cur[active]]]
            T[left] = t
        paths[:, t] = cur
    escaped = T >= 0
    lengths = np.where(escaped, T, tau) + 1
    keep = np.arange(tau + 1)[None, :] < lengths[:, None]
    return TrajectoryDataset(
        states=paths[keep],
        offsets=np.concatenate([[0], np.cumsum(lengths)]),
        escaped=escaped,
        escape_time=T,
        counts=np.bincount(X0, minlength=mrp.n),
        master_seed=int(master_seed),
        tau=int(tau),
        n=mrp.n,
    )


def sample_until_escape(mrp, M, master_seed, cap=DEFAULT_CAP):
    """``M`` paths run until they leave ``D`` or take ``cap`` steps.

    Paths still inside ``D`` after ``cap`` steps are kept with
    ``escaped = False``; their number is ``dataset.unfinished`` and a
    warning is issued.
    """
    if M < 1 or cap < 1:
        raise ConfigError("M and cap must be positive")
    X0, keys = sample_initial_states(mrp, M, master_seed)
    step = _Stepper(stopped_kernel(mrp).S)
    in_D = mrp.in_D
    T = np.full(M, -1, dtype=np.int64)
    T[~in_D[X0]] = 0
    active = np.flatnonzero(T < 0)
    cur = X0.copy()
    steps = []
    t = 0
    while active.size and t < cap:
        t += 1
        cur = step(cur, draws(keys[active], t))
        steps.append((active, cur))
        out = ~in_D[cur]
        T[active[out]] = t
        active, cur = active[~out], cur[~out]
    escaped = T >= 0
    lengths = np.where(escaped, T, t) + 1
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    states = np.empty(offsets[-1], dtype=np.int64)
    states[offsets[:-1]] = X0
    for s, (idx, st) in enumerate(steps, start=1):
        states[offsets[idx] + s] = st
    if active.size:
        warnings.warn(f"{active.size} trajectories hit the cap of {cap} steps")
    return TrajectoryDataset(
        states=states,
        offsets=offsets,
        escaped=escaped,
        escape_time=T,
        counts=np.bincount(X0, minlength=mrp.n),
        master_seed=int(master_seed),
        tau=None,
        n=mrp.n,
    )
