"""Shared linear-system helpers.

Solves are factorization-based; an explicit inverse is never formed on the
critical paths. Symmetric positive-definite systems use Cholesky; a pivoted
LU is the fallback, and exact singularity is a hard error.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import ConditioningWarning, SingularMatrixError

# Condition estimate above which a warning is emitted but the solve proceeds.
COND_WARN_THRESHOLD = 1e12


def solve_spd(A: np.ndarray, B: np.ndarray, context: str) -> np.ndarray:
    """Solve A X = B for symmetric positive (semi-)definite A.

    Cholesky first; on failure falls back to pivoted LU after a rank check.
    The Cholesky diagonal ratio doubles as a cheap condition estimate:
    cond(A) ~ (max diag / min diag)^2.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=False)
        diag = np.abs(np.diag(c))
        cond_est = (diag.max() / diag.min()) ** 2
        if cond_est > COND_WARN_THRESHOLD:
            warnings.warn(
                f"{context}: condition estimate {cond_est:.2e} exceeds "
                f"{COND_WARN_THRESHOLD:.0e}; proceeding",
                ConditioningWarning,
                stacklevel=2,
            )
        return scipy.linalg.cho_solve((c, low), B, check_finite=False)
    except scipy.linalg.LinAlgError:
        pass
    rank = int(np.linalg.matrix_rank(A))
    if rank < A.shape[0]:
        raise SingularMatrixError(context, rank, A.shape[0])
    lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    return scipy.linalg.lu_solve((lu, piv), B, check_finite=False)
