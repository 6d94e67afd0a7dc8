"""Dense linear algebra for small systems (n <= 32).

Matrix exponential by scaling and squaring with Pade approximants, the
continuous Lyapunov equation ``J.T @ P + P @ J = -Q`` solved through its
Kronecker-structured linear system, and a Hurwitz test that certifies
stability by exhibiting a Cholesky-factorable Lyapunov solution.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NotHurwitzError, SingularSystem

MAX_DIM = 32

__all__ = [
    "MAX_DIM",
    "NotHurwitz",
    "SpdCertificate",
    "expm",
    "is_hurwitz",
    "require_hurwitz",
    "solve_lyapunov",
]

# Higham (2005) degree-dependent 1-norm thresholds.
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1,
          7: 9.504178996162932e-1, 9: 2.097847961257068e0,
          13: 5.371920351148152e0}

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}


def _as_square(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _pade(A, m):
    b = _PADE[m]
    n = A.shape[0]
    ident = np.eye(n)
    A2 = A @ A
    if m == 13:
        A4 = A2 @ A2
        A6 = A4 @ A2
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
        V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
             + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    else:
        powers = [ident, A2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ A2)
        U = A @ sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
        V = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
    return np.linalg.solve(V - U, V + U)


def expm(M, t=1.0):
    """Matrix exponential ``exp(M * t)``.

    Parameters
    ----------
    M : array_like, shape (n, n)
        Square real matrix.
    t : float
        Time multiplier.

    Returns
    -------
    ndarray, shape (n, n)
    """
    M = _as_square(M)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    A = M * float(t)
    norm = np.linalg.norm(A, 1)
    if norm == 0.0:
        return np.eye(A.shape[0])
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            return _pade(A, m)
    s = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
    X = _pade(A / 2.0**s, 13)
    for _ in range(s):
        X = X @ X
    return X


def _sym_index(n):
    idx = np.empty((n, n), dtype=int)
    k = 0
    for i in range(n):
        for j in range(i, n):
            idx[i, j] = idx[j, i] = k
            k += 1
    return idx, k


def solve_lyapunov(J, Q):
    """Solve ``J.T @ P + P @ J = -Q`` for symmetric positive definite ``P``.

    Only the upper triangle of ``P`` is unknown, so the result is exactly
    symmetric. Raises :class:`SingularSystem` when the linear system is
    singular or the solution is not positive definite; either signals that
    ``J`` is not Hurwitz.
    """
    J = _as_square(J, "J")
    Q = _as_square(Q, "Q")
    n = J.shape[0]
    if Q.shape != J.shape:
        raise ValueError("J and Q must have the same shape")
    if n > MAX_DIM:
        raise ValueError(f"dimension {n} exceeds the supported maximum {MAX_DIM}")
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q must be symmetric")

    idx, m = _sym_index(n)
    K = np.zeros((m, m))
    rhs = np.empty(m)
    for i in range(n):
        for j in range(i, n):
            row = idx[i, j]
            rhs[row] = -Q[i, j]
            # (J^T P)_{ij} = sum_k J[k, i] P[k, j];  (P J)_{ij} = sum_k P[i, k] J[k, j]
            for k in range(n):
                K[row, idx[k, j]] += J[k, i]
                K[row, idx[i, k]] += J[k, j]

    sv = np.linalg.svd(K, compute_uv=False)
    if sv[-1] <= 1e-13 * sv[0]:
        raise SingularSystem("Lyapunov system is singular; J is not Hurwitz")
    p = np.linalg.solve(K, rhs)
    P = p[idx]
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise SingularSystem("Lyapunov solution is not positive definite; J is not Hurwitz")
    return P


@dataclass(frozen=True)
class SpdCertificate:
    """Lyapunov solution ``matrix`` with its lower Cholesky ``factor``."""

    matrix: np.ndarray
    factor: np.ndarray

    def __bool__(self):
        return True


@dataclass(frozen=True)
class NotHurwitz:
    """Negative outcome of :func:`is_hurwitz`; falsy."""

    reason: str

    def __bool__(self):
        return False


def is_hurwitz(A):
    """Certify that every eigenvalue of ``A`` has negative real part.

    Returns an :class:`SpdCertificate` holding ``P`` with
    ``A.T @ P + P @ A = -I`` and its Cholesky factor, or a falsy
    :class:`NotHurwitz` when no such ``P`` exists.
    """
    A = _as_square(A, "A")
    try:
        P = solve_lyapunov(A, np.eye(A.shape[0]))
        L = np.linalg.cholesky(P)
    except (SingularSystem, np.linalg.LinAlgError) as exc:
        return NotHurwitz(str(exc))
    if not np.all(np.diag(L) > 0):
        return NotHurwitz("Cholesky factor has a nonpositive pivot")
    return SpdCertificate(matrix=P, factor=L)


def require_hurwitz(A):
    """Like :func:`is_hurwitz` but raises :class:`NotHurwitzError` on failure."""
    cert = is_hurwitz(A)
    if not cert:
        raise NotHurwitzError(f"matrix is not Hurwitz: {cert.reason}")
    return cert
