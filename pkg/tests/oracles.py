"""Independent reference computations used as test oracles.

Nothing here calls the package's solvers.  Values come from truncated
series, explicit path enumeration, forward probability propagation,
finite-difference delta methods or plain Python integer arithmetic.
"""

import math

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def stopped(P, D):
    n = len(P)
    S = np.array(P, dtype=float)
    for i in range(n):
        if i not in D:
            S[i] = 0.0
            S[i, i] = 1.0
    return S


def value_by_series(P, R, D, tol=1e-15, max_steps=10**6):
    """``u = sum_t E[R_D(X_t)] + E[R(X_T)]`` by propagating the surviving mass."""
    n = len(P)
    S = stopped(P, D)
    inD = np.array([i in D for i in range(n)])
    R = np.asarray(R, dtype=float)
    u = np.where(inD, 0.0, R)
    for i in sorted(D):
        mass = np.zeros(n)
        mass[i] = 1.0
        total = 0.0
        for _ in range(max_steps):
            total += mass[inD] @ R[inD]
            nxt = mass[inD] @ S[inD]
            total += nxt[~inD] @ R[~inD]
            mass = np.where(inD, nxt, 0.0)
            if mass.sum() < tol:
                break
        u[i] = total
    return u


def enumerate_paths(S, start, steps):
    """All ``(path, probability)`` of ``steps`` transitions with positive probability."""
    n = len(S)
    paths = [((start,), 1.0)]
    for _ in range(steps):
        nxt = []
        for path, p in paths:
            x = path[-1]
            for y in range(n):
                if S[x, y] > 0:
                    nxt.append((path + (y,), p * S[x, y]))
        paths = nxt
    return paths


def inner_by_enumeration(P, R, D, u, k, tau):
    """``E_k[(sum_{t<tau} R_D(X_t) + u(X_tau) - u(k))^2]`` over enumerated paths."""
    S = stopped(P, D)
    RD = np.array([R[i] if i in D else 0.0 for i in range(len(P))])
    total = 0.0
    for path, p in enumerate_paths(S, k, tau):
        z = sum(RD[x] for x in path[:-1]) + u[path[-1]] - u[k]
        total += p * z * z
    return total


def _assemble_and_solve(K, D, R):
    """LSTD map from kernels ``K[1..tau]`` to ``u``, written independently."""
    tau = len(K) - 1
    n = K[0].shape[0]
    inD = np.array([i in D for i in range(n)])
    RD = np.where(inD, R, 0.0)
    Rout = np.where(inD, 0.0, R)
    KD = K[tau] * np.outer(inD, inD)
    rhs = sum(K[t] @ RD for t in range(tau)) + (K[tau] - KD) @ Rout
    return np.linalg.solve(np.eye(n) - KD, rhs)


def sigma_by_delta_method(P, R, D, mu, tau, h=1e-6):
    """Asymptotic variance of the LSTD estimator by the delta method.

    Row ``k`` of the empirical kernels is the mean of ``M mu(k)`` i.i.d.
    indicator vectors ``(1{X_{t^T} = j})_{t, j}``; their covariance comes from
    path enumeration and the Jacobian of the LSTD map from central
    differences.
    """
    n = len(P)
    R = np.asarray(R, dtype=float)
    S = stopped(P, D)
    K = [np.eye(n)]
    for _ in range(tau):
        K.append(K[-1] @ S)
    sig = np.zeros(n)
    for k in sorted(D):
        # covariance of the tau*n indicator vector for paths from k
        mean = np.zeros(tau * n)
        second = np.zeros((tau * n, tau * n))
        for path, p in enumerate_paths(S, k, tau):
            y = np.zeros(tau * n)
            for t in range(1, tau + 1):
                y[(t - 1) * n + path[t]] = 1.0
            mean += p * y
            second += p * np.outer(y, y)
        cov = second - np.outer(mean, mean)
        J = np.zeros((n, tau * n))
        for t in range(1, tau + 1):
            for j in range(n):
                Kp = [A.copy() for A in K]
                Km = [A.copy() for A in K]
                Kp[t][k, j] += h
                Km[t][k, j] -= h
                J[:, (t - 1) * n + j] = (
                    _assemble_and_solve(Kp, D, R) - _assemble_and_solve(Km, D, R)
                ) / (2 * h)
        sig += np.einsum("ia,ab,ib->i", J, cov, J) / mu[k]
    return sig


def taboo_probability(Stau, D, k, l, tol=1e-16, max_steps=10**6):
    """``Q(k, l)`` by forward propagation of the killed ``tau``-step chain."""
    n = len(Stau)
    alive = np.array([(j in D) and j not in (k, l) for j in range(n)])
    mass = np.array(Stau[k], dtype=float)
    hit = mass[l]
    mass = np.where(alive, mass, 0.0)
    for _ in range(max_steps):
        if mass.sum() < tol:
            break
        nxt = mass @ Stau
        hit += nxt[l]
        mass = np.where(alive, nxt, 0.0)
    return hit


def reward_distribution(P, R, D, start, max_len=200, tol=1e-18):
    """Distribution of the integer total reward from ``start`` by forward DP.

    Returns ``(dist, tail)`` where ``dist`` maps totals to probabilities and
    ``tail`` is the mass still inside ``D`` after ``max_len`` steps.
    """
    n = len(P)
    inD = [i in D for i in range(n)]
    R = [int(r) for r in R]
    state = {(start, R[start]): 1.0} if inD[start] else {}
    dist = {} if inD[start] else {R[start]: 1.0}
    for _ in range(max_len):
        nxt = {}
        for (x, acc), p in state.items():
            for y in range(n):
                if P[x][y] > 0:
                    q = p * P[x][y]
                    key = (y, acc + R[y])
                    if inD[y]:
                        nxt[key] = nxt.get(key, 0.0) + q
                    else:
                        dist[acc + R[y]] = dist.get(acc + R[y], 0.0) + q
        state = nxt
        if sum(state.values()) < tol:
            break
    return dist, sum(state.values())


def mix64_ref(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream_draw_ref(seed, index, step, bits=40):
    key = mix64_ref((mix64_ref(seed) + (index + 1) * GOLDEN) & MASK)
    return mix64_ref((key + (step + 1) * GOLDEN) & MASK) >> (64 - bits)


def invariant_reference(n, dps=50):
    """Normalized three-mode weights in arbitrary precision (mpmath)."""
    import mpmath

    mpmath.mp.dps = dps
    w = [mpmath.exp((n - 1) / (4 * mpmath.pi) * mpmath.cos(4 * mpmath.pi * k / (n - 1)))
         for k in range(n)]
    Z = mpmath.fsum(w)
    return [float(x / Z) for x in w]


def eigen_gap_reference(n):
    """``1 - lambda_min`` of the interior block, via a dense eigensolver."""
    k = np.arange(n)
    logp = (n - 1) / (4 * math.pi) * np.cos(4 * math.pi * k / (n - 1))
    P = np.zeros((n, n))
    for i in range(1, n - 1):
        for j in (i - 1, i + 1):
            P[i, j] = 1.0 / (2.0 * (1.0 + math.exp(logp[i] - logp[j])))
        P[i, i] = 1.0 - P[i, i - 1] - P[i, i + 1]
    B = P[1:-1, 1:-1]
    # eigenvalues of a nonsymmetric but similar-to-symmetric matrix
    ev = np.linalg.eigvals(B).real
    return 1.0 - ev.min()


def random_chain(rng, n, d_size=None, sparsity=0.4):
    """Random absorbing chain where every state of ``D`` can escape."""
    d_size = d_size or rng.integers(1, n)
    D = sorted(rng.choice(n, size=d_size, replace=False).tolist())
    P = rng.random((n, n))
    P[rng.random((n, n)) < sparsity] = 0.0
    P[np.arange(n), np.arange(n)] += 0.01
    out = [j for j in range(n) if j not in D]
    for i in D:
        P[i, rng.choice(out)] += 0.05
    P /= P.sum(axis=1, keepdims=True)
    R = rng.random(n)
    mu = np.zeros(n)
    mu[D] = rng.random(len(D)) + 0.1
    mu /= mu.sum()
    return P, R, D, mu

