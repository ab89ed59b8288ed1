import numpy as np
from scipy import linalg as sla
from scipy.linalg import lapack

from .errors import NumericalError

# Relative jitter (times the mean diagonal) tried in order before giving up.
JITTER_SCHEDULE = (1e-12, 1e-10, 1e-8, 1e-6)


def robust_cholesky(A):
    """Lower Cholesky factor of ``A + jitter*I`` with jitter escalation.

    Returns ``(L, jitter)`` where ``jitter`` is the absolute amount added.
    """
    n = A.shape[0]
    d = np.diag(A)
    scale = float(np.mean(d)) if n else 1.0
    if not np.isfinite(scale) or scale <= 0:
        raise NumericalError("matrix diagonal is not positive", size=n,
                             diag_range=(float(d.min()), float(d.max())) if n else None)
    jitter = 0.0
    for rel in JITTER_SCHEDULE:
        jitter = rel * scale
        try:
            L = sla.cholesky(A + jitter * np.eye(n), lower=True, check_finite=True)
        except (sla.LinAlgError, ValueError):
            continue
        return L, jitter
    raise NumericalError("Cholesky factorization failed after jitter escalation",
                         size=n, jitter=jitter, diag_range=(float(d.min()), float(d.max())))


def tri_solve(L, B, trans=False):
    return sla.solve_triangular(L, B, lower=True, trans="T" if trans else "N", check_finite=False)


def cho_solve(L, B):
    return sla.cho_solve((L, True), B, check_finite=False)


def cho_inverse_lower(L):
    """Lower triangle of ``inv(L @ L.T)``; the strict upper triangle is zero."""
    inv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise NumericalError("inverse from Cholesky factor failed", size=L.shape[0])
    return np.tril(inv)


def cho_inverse(L):
    """Full symmetric ``inv(L @ L.T)`` from its lower factor."""
    P = cho_inverse_lower(L)
    return P + np.tril(P, -1).T
