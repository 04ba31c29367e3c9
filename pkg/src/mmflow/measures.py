"""Matrix measures (logarithmic norms), induced norms and symmetric/skew splits.

A matrix measure is the one-sided derivative of an induced norm at the
identity, ``mu[W] = lim_{h->0+} (||I + hW|| - 1) / h``. The closed forms are
used here; the limit itself only appears in the test suite as an oracle.

All functions are pure and accept anything ``numpy.asarray`` understands.
"""

import enum
import math

import numpy as np

from ._validation import ValidationError, check_square_matrix

__all__ = [
    "MeasureId",
    "mu_1",
    "mu_2",
    "mu_inf",
    "measure",
    "operator_norm",
    "symmetric_part",
    "skew_part",
    "frobenius_norm",
    "jacobi_eigvalsh",
]

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class MeasureId(enum.Enum):
    MU1 = "mu1"
    MU2 = "mu2"
    MUINF = "muinf"

    @classmethod
    def parse(cls, value):
        """Accept a MeasureId or one of its string names (case-insensitive)."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ValidationError(f"unknown measure {value!r}; expected one of mu1, mu2, muinf")


def symmetric_part(W):
    A = check_square_matrix(W)
    return 0.5 * (A + A.T)


def skew_part(W):
    A = check_square_matrix(W)
    return 0.5 * (A - A.T)


def frobenius_norm(W):
    A = check_square_matrix(W)
    return float(np.sqrt(np.sum(A * A)))


def jacobi_eigvalsh(S, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues of a symmetric matrix by the cyclic Jacobi method.

    Sweeps rotate every off-diagonal pair (p, q) to zero in row-cyclic order
    until the off-diagonal Frobenius mass drops below ``tol * ||S||_F``.

    Parameters
    ----------
    S : array_like, shape (n, n)
        Symmetric matrix. Only symmetry up to rounding is assumed; the
        symmetric part is taken before iterating.
    tol : float
        Relative off-diagonal convergence threshold.
    max_sweeps : int
        Hard cap on the number of sweeps.

    Returns
    -------
    ndarray, shape (n,)
        Eigenvalues in ascending order.
    """
    A = symmetric_part(S).copy()
    n = A.shape[0]
    scale = np.sqrt(np.sum(A * A))
    if n == 1 or scale == 0.0:
        return np.sort(np.diag(A))
    threshold = tol * scale
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if not np.sqrt(np.sum(A[offdiag] ** 2)) > threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                diff = A[q, q] - A[p, p]
                if abs(apq) <= 1e-300 or abs(apq) < 1e-18 * abs(diff):
                    # rotation angle below rounding; zeroing is exact enough
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) Givens rotation
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                A[p, q] = A[q, p] = 0.0
    return np.sort(np.diag(A))


def mu_2(W, method="lapack"):
    """Largest eigenvalue of the symmetric part ``(W + W^T) / 2``.

    ``method="lapack"`` uses the symmetric LAPACK driver behind
    ``numpy.linalg.eigvalsh``; ``method="jacobi"`` uses :func:`jacobi_eigvalsh`.
    """
    S = symmetric_part(W)
    if method == "lapack":
        return float(np.linalg.eigvalsh(S)[-1])
    if method == "jacobi":
        return float(jacobi_eigvalsh(S)[-1])
    raise ValidationError(f"unknown eigen method {method!r}")


def mu_1(W):
    """Column formula ``max_j [W_jj + sum_{i != j} |W_ij|]``."""
    A = check_square_matrix(W)
    d = np.diag(A)
    off = np.abs(A).sum(axis=0) - np.abs(d)
    return float(np.max(d + off))


def mu_inf(W):
    """Row formula ``max_i [W_ii + sum_{j != i} |W_ij|]``."""
    A = check_square_matrix(W)
    d = np.diag(A)
    off = np.abs(A).sum(axis=1) - np.abs(d)
    return float(np.max(d + off))


_MEASURES = {
    MeasureId.MU1: mu_1,
    MeasureId.MU2: mu_2,
    MeasureId.MUINF: mu_inf,
}


def measure(W, id=MeasureId.MU2):
    return _MEASURES[MeasureId.parse(id)](W)


def operator_norm(W, id=MeasureId.MU2):
    """Induced norm of the family that ``id`` is the measure of.

    1-norm is the max absolute column sum, inf-norm the max absolute row sum
    and the 2-norm the largest singular value.
    """
    A = check_square_matrix(W)
    id = MeasureId.parse(id)
    if id is MeasureId.MU1:
        return float(np.abs(A).sum(axis=0).max())
    if id is MeasureId.MUINF:
        return float(np.abs(A).sum(axis=1).max())
    return float(np.linalg.svd(A, compute_uv=False)[0])
