"""Dense LU solves with an explicit singularity threshold."""

import warnings

import numpy as np
import scipy.linalg

from .errors import SingularSystemError

PIVOT_THRESHOLD = 1e-13


def lu_factor(A, threshold=PIVOT_THRESHOLD):
    """LU-factorize ``A`` with partial pivoting, rejecting tiny pivots.

    Parameters
    ----------
    A : (m, m) ndarray
    threshold : float
        Smallest admissible absolute pivot.

    Returns
    -------
    lu_piv : tuple
        Factorization usable by :func:`lu_solve`.

    Raises
    ------
    SingularSystemError
        If some pivot of ``U`` has absolute value below ``threshold``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return (A.copy(), np.zeros(0, dtype=np.int32))
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularSystemError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < threshold:
        k = int(pivots.argmin())
        raise SingularSystemError(
            f"pivot {pivots[k]:.3e} at position {k} is below {threshold:g}"
        )
    return lu, piv


def lu_solve(lu_piv, b):
    lu, _ = lu_piv
    if lu.shape[0] == 0:
        return np.zeros_like(np.asarray(b, dtype=float))
    return scipy.linalg.lu_solve(lu_piv, b)


def solve(A, b, threshold=PIVOT_THRESHOLD):
    """Solve ``A x = b`` by thresholded LU; ``b`` may be a vector or matrix."""
    return lu_solve(lu_factor(A, threshold), b)


def inverse(A, threshold=PIVOT_THRESHOLD):
    A = np.asarray(A, dtype=float)
    return solve(A, np.eye(A.shape[0]), threshold)
