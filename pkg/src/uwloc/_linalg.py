"""Small dense linear-algebra helpers used across the package.

Everything here works on matrices of at most a few hundred rows, so plain
LAPACK through scipy is plenty. Explicit inverses are avoided except where
a caller genuinely needs the inverse matrix itself (a covariance output).
"""

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import NotPSD

COND_LIMIT = 1e12


def scaled_condition(a):
    """Condition number of ``a`` after symmetric diagonal (Jacobi) scaling.

    The unknowns in this problem live on wildly different scales (metres,
    m/s, m^2/s^2), so the raw condition number of a normal matrix says more
    about units than about geometry. Scaling by the diagonal removes the
    unit effect and leaves the genuine near-dependence.
    """
    a = np.asarray(a, dtype=float)
    d = np.abs(np.diag(a))
    if np.any(d == 0) or not np.all(np.isfinite(a)):
        return np.inf
    s = 1.0 / np.sqrt(d)
    return np.linalg.cond(a * s[:, None] * s[None, :])


def spd_solve(a, b, exc, what="matrix", cond_limit=COND_LIMIT):
    """Solve ``a x = b`` for symmetric positive definite ``a``.

    Raises ``exc`` when ``a`` is not numerically positive definite or its
    scaled condition number exceeds ``cond_limit``.
    """
    cond = scaled_condition(a)
    if not np.isfinite(cond) or cond > cond_limit:
        raise exc(f"{what} is ill-conditioned (scaled condition {cond:.3g})")
    try:
        factor = sla.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as err:
        raise exc(f"{what} is not positive definite: {err}") from None
    return sla.cho_solve(factor, b, check_finite=False)


def spd_inv(a, exc, what="matrix", cond_limit=COND_LIMIT):
    a = np.asarray(a, dtype=float)
    inv = spd_solve(a, np.eye(a.shape[0]), exc, what, cond_limit)
    return symmetrize(inv)


def symmetrize(a):
    return 0.5 * (a + a.T)


def psd_factor(cov, rtol=1e-10):
    """Square-root factor ``F`` with ``F @ F.T == cov`` for a PSD matrix.

    Uses LAPACK's pivoted Cholesky (``?pstrf``) so rank-deficient inputs,
    e.g. a zero noise level, are handled without fuss. Pivots below
    ``rtol * max(diag)`` are treated as zero.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if cov.shape != (n, n):
        raise ValueError(f"covariance must be square, got {cov.shape}")
    scale = float(np.max(np.abs(np.diag(cov)))) if n else 0.0
    if scale == 0.0:
        if np.any(cov != 0):
            raise NotPSD("covariance has zero diagonal but nonzero off-diagonal entries")
        return np.zeros((n, n))
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-12 * scale):
        raise NotPSD("covariance is not symmetric")
    c, piv, rank, info = lapack.dpstrf(cov, lower=1, tol=rtol * scale)
    if info < 0:
        raise NotPSD(f"dpstrf argument error {info}")
    lower = np.tril(c)[:, :rank]
    factor = np.zeros((n, rank))
    factor[piv - 1] = lower
    resid = cov - factor @ factor.T
    if np.max(np.abs(resid)) > 1e-8 * scale:
        raise NotPSD("covariance has a negative pivot beyond tolerance")
    return factor


def sym_inv_sqrt(a):
    """Symmetric ``S`` with ``S @ S == inv(a)`` for positive definite ``a``."""
    w, v = np.linalg.eigh(symmetrize(a))
    if w[0] <= 0:
        raise NotPSD("matrix is not positive definite")
    return symmetrize((v / np.sqrt(w)) @ v.T)
