"""Conditional mean embeddings of futures given pasts.

Each past ``x_j`` is mapped to the weight vector ``omega(x_j)`` solving
``(Gx + eps I) omega = Gx[:, j]``; the corresponding conditional embedding
is ``sum_a omega_a k_Y(y_a, .)``. Inner products between those embeddings
form the causal-state Gram matrix ``Omega^T Gy Omega``.

Both matrices are N x N, so the routines here can work in place: pass
``overwrite=True`` to let them reuse their input buffers.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import NumericError, ValidationError
from .kernels import cross_gram, gram

__all__ = [
    "ConditionalWeights",
    "StateGram",
    "CompressedStateGram",
    "solve_weights",
    "state_gram",
    "unique_windows",
    "compressed_state_gram",
    "state_gram_out_of_core",
    "state_gram_few_futures",
    "mmd2",
]

_BLOCK = 512


@dataclass
class ConditionalWeights:
    """Column ``j`` of ``omega`` is the weight vector of past ``x_j``."""

    omega: np.ndarray
    eps: float


@dataclass
class StateGram:
    matrix: np.ndarray
    eps: float

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def solve_weights(Gx, eps, overwrite=False):
    """Solve ``(Gx + eps I) Omega = Gx`` for all columns at once.

    Uses ``Omega = I - eps (Gx + eps I)^{-1}``, with the inverse obtained from
    a Cholesky factorisation, so a single N x N buffer suffices. The result
    is exactly symmetric.
    """
    if not eps > 0:
        raise ValidationError(f"regularisation eps must be > 0, got {eps}")
    Gx = np.asarray(Gx, dtype=float)
    n = Gx.shape[0]
    if Gx.shape != (n, n):
        raise ValidationError("Gram matrix must be square")
    A = Gx if overwrite and Gx.flags.c_contiguous else np.array(Gx, order="C")
    A.flat[:: n + 1] += eps
    # A is symmetric and C-ordered, so A.T is the same matrix in Fortran order
    # and LAPACK can work on it without a copy.
    F = A.T
    c, info = lapack.dpotrf(F, lower=1, clean=0, overwrite_a=1)
    if info != 0:
        raise NumericError(f"Cholesky factorisation failed (info={info})")
    inv, info = lapack.dpotri(c, lower=1, overwrite_c=1)
    if info != 0:
        raise NumericError(f"triangular inversion failed (info={info})")
    if not np.shares_memory(inv, A):
        A[...] = inv.T
    # inverse is valid in the lower triangle of F, i.e. the upper triangle of A
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        rows = A[start:stop, start:]
        rows *= -eps
        diag = A[start:stop, start:stop]
        diag.flat[:: stop - start + 1] += 1.0
        lower = np.tril_indices(stop - start, -1)
        diag[lower] = diag.T[lower]
        A[stop:, start:stop] = A[start:stop, stop:].T
    if not np.all(np.isfinite(A[:: max(1, n // 64)])):
        raise NumericError("non-finite conditional weights")
    return ConditionalWeights(omega=A, eps=eps)


def state_gram(weights, Gy, overwrite=False):
    """Causal-state Gram matrix ``Omega^T Gy Omega``, symmetrised and
    clamped at zero.

    With ``overwrite=True`` the product is accumulated in ``weights.omega``
    and ``Gy`` is used as scratch space; both are invalid afterwards.
    """
    omega = weights.omega
    n = omega.shape[0]
    Gy = np.asarray(Gy, dtype=float)
    if Gy.shape != (n, n):
        raise ValidationError(f"Gy must be {n}x{n}, got {Gy.shape}")
    T = Gy if overwrite and Gy.flags.c_contiguous else np.array(Gy, order="C")
    S = omega if overwrite else np.array(omega, order="C")
    # omega is symmetric: Omega^T Gy Omega = Omega (Gy Omega).
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        T[start:stop] = T[start:stop] @ omega
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        S[start:stop] = S[start:stop] @ T
    _finish(S)
    return StateGram(matrix=S, eps=weights.eps)


def _finish(S):
    """Symmetrise, then clamp the negative entries left by regularisation.

    Inner products of conditional embeddings are estimates; negative values
    are artefacts and can make a row of the similarity sum to a negative
    number, which the diffusion map cannot normalise.
    """
    _symmetrize(S)
    np.maximum(S, 0.0, out=S)
    return S


def _symmetrize(S):
    n = S.shape[0]
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        diag = S[start:stop, start:stop]
        diag[...] = 0.5 * (diag + diag.T)
        if stop < n:
            avg = 0.5 * (S[start:stop, stop:] + S[stop:, start:stop].T)
            S[start:stop, stop:] = avg
            S[stop:, start:stop] = avg.T


def mmd2(samples_a, samples_b, spec, direction="past"):
    """Squared maximum mean discrepancy between two sample sets.

    Biased estimate ``<a,a> + <b,b> - 2<a,b>`` of the squared RKHS distance
    between empirical mean maps, clamped at zero.
    """
    A = np.atleast_2d(np.asarray(samples_a, dtype=float))
    B = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValidationError("both sample sets must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ValidationError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    aa = cross_gram(A, A, spec, direction).mean()
    bb = cross_gram(B, B, spec, direction).mean()
    ab = cross_gram(A, B, spec, direction).mean()
    return max(aa + bb - 2.0 * ab, 0.0)


@dataclass
class CompressedStateGram:
    """State Gram matrix over distinct past windows.

    With ``A`` the N x u indicator of which distinct past each sample has,
    the full matrix is ``A @ matrix @ A.T``. ``inverse`` maps samples to rows
    of ``matrix``; ``counts`` are the multiplicities.
    """

    matrix: np.ndarray
    eps: float
    inverse: np.ndarray
    counts: np.ndarray

    def expand(self):
        """Full N x N state Gram matrix."""
        return self.matrix[np.ix_(self.inverse, self.inverse)]


def unique_windows(samples):
    """Distinct rows, the row index of each sample, and multiplicities."""
    uniq, inverse, counts = np.unique(
        np.asarray(samples, dtype=float), axis=0, return_inverse=True, return_counts=True
    )
    return uniq, inverse.ravel(), counts


def compressed_state_gram(X, Y, spec_x, spec_y, eps):
    """Exact causal-state Gram matrix computed on distinct windows only.

    Identical pasts give identical columns of ``Omega``, so with
    ``Gx = A Gu A^T`` and ``C = diag(counts)``,
    ``Omega = A C^-1/2 (Gh + eps I)^-1 Gh C^-1/2 A^T`` where
    ``Gh = C^1/2 Gu C^1/2``. The future Gram matrix enters only through
    ``A^T Gy A``, which is accumulated over distinct futures. Cost depends
    on the number of distinct windows rather than on N, which makes
    discrete-alphabet processes cheap at any sample size.
    """
    ux, ix, cx = unique_windows(X)
    uy, iy, cy = unique_windows(Y)
    if len(ix) != len(iy):
        raise ValidationError("X and Y must have the same number of rows")
    nx, ny = len(ux), len(uy)
    co = np.bincount(ix * ny + iy, minlength=nx * ny).reshape(nx, ny).astype(float)
    B = co @ gram(uy, spec_y, "future") @ co.T
    root = np.sqrt(cx.astype(float))
    Gh = gram(ux, spec_x, "past") * np.outer(root, root)
    W = solve_weights(Gh, eps, overwrite=True).omega
    W /= root[:, None]
    W /= root[None, :]
    S = W @ B @ W
    _finish(S)
    return CompressedStateGram(matrix=S, eps=eps, inverse=ix, counts=cx)


def state_gram_few_futures(X, Y, spec_x, spec_y, eps):
    """Exact causal-state Gram matrix when futures take few distinct values.

    With ``Gy = A Gv A^T`` (``A`` the N x v indicator of distinct futures)
    the state Gram matrix is ``(Omega A) Gv (Omega A)^T``, and
    ``Omega A = A - eps (Gx + eps I)^-1 A`` needs only a Cholesky solve with
    ``v`` right-hand sides. Peak memory is one N x N array.
    """
    uy, iy, _ = unique_windows(Y)
    n = X.shape[0]
    if len(iy) != n:
        raise ValidationError("X and Y must have the same number of rows")
    A = gram(X, spec_x, "past")
    A.flat[:: n + 1] += eps
    c, info = lapack.dpotrf(A.T, lower=1, clean=0, overwrite_a=1)
    if info != 0:
        raise NumericError(f"Cholesky factorisation failed (info={info})")
    ind = np.zeros((n, len(uy)))
    ind[np.arange(n), iy] = 1.0
    z, info = lapack.dpotrs(c, ind, lower=1)
    if info != 0:
        raise NumericError(f"Cholesky solve failed (info={info})")
    del A, c
    L = ind - eps * z
    del ind, z
    S = (L @ gram(uy, spec_y, "future")) @ L.T
    _finish(S)
    return StateGram(matrix=S, eps=eps)


def state_gram_out_of_core(X, Y, spec_x, spec_y, eps, workdir, block=512):
    """State Gram matrix with a single N x N array resident in memory.

    ``Omega`` and the intermediate ``Gy Omega`` are spilled to files in
    ``workdir``; future Gram rows are generated block by block and never
    stored. The arithmetic is the same as ``state_gram(solve_weights(...))``.
    """
    import os

    n = X.shape[0]
    omega = solve_weights(gram(X, spec_x, "past"), eps, overwrite=True).omega
    path_omega = os.path.join(workdir, "omega.f64")
    path_t = os.path.join(workdir, "t.f64")
    omega.tofile(path_omega)

    T = np.memmap(path_t, dtype=float, mode="w+", shape=(n, n))
    for start in range(0, n, block):
        stop = min(start + block, n)
        gy = cross_gram(Y[start:stop], Y, spec_y, "future")
        gy[np.arange(stop - start), np.arange(start, stop)] = 1.0
        T[start:stop] = gy @ omega
    T.flush()
    del T, omega

    Tm = np.fromfile(path_t, dtype=float).reshape(n, n)
    os.remove(path_t)
    omega = np.memmap(path_omega, dtype=float, mode="r", shape=(n, n))
    S = np.memmap(path_t, dtype=float, mode="w+", shape=(n, n))
    for start in range(0, n, block):
        stop = min(start + block, n)
        S[start:stop] = np.asarray(omega[start:stop]) @ Tm
    S.flush()
    del S, Tm, omega
    os.remove(path_omega)

    S = np.fromfile(path_t, dtype=float).reshape(n, n)
    os.remove(path_t)
    _finish(S)
    return StateGram(matrix=S, eps=eps)
