"""Dense symmetric kernels used by the manifolds and problems.

Everything here is a thin, validated layer over LAPACK. Functions
accept a single matrix or a stack of matrices with shape ``(..., d, d)``.
"""
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.linalg import lapack

from .exceptions import InvalidInput, NotPositiveDefinite, RankDeficient

__all__ = ["SymEig", "sym", "sym_eig", "qr_unique", "sym_mat_fn", "spd_check"]

_PD_RTOL = 1e-12


class SymEig(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym(a):
    """Symmetric part ``(a + a^T) / 2`` of a matrix or a stack of matrices."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _check_square(a, name="A"):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] < 1:
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    return a


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    The input is symmetrized before factorization, so small asymmetries from
    accumulated round-off do not leak into the result.
    """
    a = _check_square(a)
    w, v = np.linalg.eigh(sym(a))
    return SymEig(w, v)


def qr_unique(a):
    """Thin QR factorization with a strictly positive diagonal in ``R``.

    Fixing the sign gauge makes ``Q`` a deterministic function of ``a``.

    Raises
    ------
    RankDeficient
        If a diagonal entry of ``R`` is below ``1e-12 * ||a||_F``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < a.shape[1] or a.shape[1] < 1:
        raise InvalidInput(f"need a d x r matrix with d >= r >= 1, got {a.shape}")
    if not np.isfinite(a).all():
        raise InvalidInput("A has non-finite entries")
    # direct LAPACK calls: numpy.linalg.qr has large fixed overhead on small inputs
    qr, tau, _, info = lapack.dgeqrf(a)
    k = a.shape[1]
    r = qr[:k] * _upper_mask(k)
    diag = r.diagonal()
    # ||R||_F == ||A||_F since Q has orthonormal columns
    if info != 0 or min(abs(diag)) <= 1e-12 * np.sqrt(np.vdot(r, r)):
        raise RankDeficient("matrix is numerically rank deficient")
    q = lapack.dorgqr(qr, tau)[0]
    s = np.copysign(1.0, diag)
    return q * s, r * s[:, None]


@lru_cache(maxsize=64)
def _upper_mask(k):
    return np.triu(np.ones((k, k)))


_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "inv_sqrt": lambda w: 1.0 / np.sqrt(w),
}


def _reassemble(v, fw):
    return sym((v * fw[..., None, :]) @ np.swapaxes(v, -1, -2))


def _check_pd(w):
    if np.any(w[..., 0] <= _PD_RTOL * np.abs(w[..., -1])) or np.any(w[..., -1] <= 0):
        raise NotPositiveDefinite("matrix is not positive definite")


def sym_mat_fn(a, fn):
    """Apply ``fn`` in {'exp', 'log', 'sqrt', 'inv_sqrt'} to symmetric ``a``.

    Computed as ``V diag(fn(w)) V^T`` from one eigendecomposition. For every
    function except ``exp`` the input must be positive definite.
    """
    if fn not in _FUNCS:
        raise InvalidInput(f"unknown matrix function {fn!r}")
    w, v = sym_eig(a)
    if fn != "exp":
        _check_pd(w)
    return _reassemble(v, _FUNCS[fn](w))


def sym_mat_fns(a, *fns):
    """Several matrix functions of the same SPD matrix from one decomposition."""
    w, v = sym_eig(a)
    if any(f != "exp" for f in fns):
        _check_pd(w)
    return tuple(_reassemble(v, _FUNCS[f](w)) for f in fns)


def spd_check(a, atol=1e-10):
    """True if ``a`` is symmetric within ``atol`` (relative) and positive definite."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        return False
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - np.swapaxes(a, -1, -2))) > atol * scale:
        return False
    w = np.linalg.eigvalsh(sym(a))
    return bool(np.all(w[..., 0] > 0))
