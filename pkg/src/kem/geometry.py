"""Diffusion-map coordinates of the causal-state set.

The state Gram matrix is treated as a similarity matrix. It is first
density-normalised (``K_ij / (q_i q_j)`` with ``q`` the row sums), then
row-normalised into a Markov matrix ``P = D^-1 K``. The spectrum of ``P`` is
obtained from the symmetric conjugate ``D^-1/2 K D^-1/2``, so eigenvalues are
real and right/left eigenvectors follow by rescaling.

Conventions: ``psi[:, 0] == 1``, ``phi[:, 0]`` sums to 1, and
``<psi_a, phi_b> = delta_ab``. The remaining right eigenvectors have unit
variance under ``phi[:, 0]``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import DegenerateInputError, NumericError, ValidationError

__all__ = [
    "DiffusionBasis",
    "diffusion_basis",
    "spectral_gap",
    "limit_density",
    "self_information",
]

DENSE_EIGH_MAX = 3000
EIG_FLOOR = 1e-12
_BLOCK = 1024


@dataclass
class DiffusionBasis:
    """Reduced basis: ``M`` nontrivial components plus the trivial one.

    Attributes
    ----------
    eigenvalues : ndarray, shape (M+1,)
        Descending, ``eigenvalues[0] == 1``.
    psi, phi : ndarray, shape (N, M+1)
        Right and left eigenvectors of the Markov matrix.
    spectrum : ndarray
        Every eigenvalue that was computed, including components dropped
        by the retention rule.
    """

    eigenvalues: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    spectrum: np.ndarray = field(default=None)

    @property
    def M(self):
        return len(self.eigenvalues) - 1

    @property
    def n_samples(self):
        return self.psi.shape[0]

    def coords(self):
        """State coordinates ``lambda_m psi[:, m]`` for ``m = 1..M``."""
        return self.psi[:, 1:] * self.eigenvalues[1:]

    def truncate(self, M):
        """Basis restricted to the first ``M`` nontrivial components."""
        M = int(min(M, self.M))
        return DiffusionBasis(
            eigenvalues=self.eigenvalues[: M + 1].copy(),
            psi=self.psi[:, : M + 1].copy(),
            phi=self.phi[:, : M + 1].copy(),
            spectrum=self.spectrum,
        )

    def check(self):
        """Raise ``NumericError`` if a normalisation convention is violated."""
        lam = self.eigenvalues
        if abs(lam[0] - 1.0) > 1e-9:
            raise NumericError(f"trivial eigenvalue is {lam[0]!r}")
        if np.any(lam[1:] <= 0) or np.any(lam[1:] > 1 + 1e-9) or np.any(np.diff(lam) > 1e-12):
            raise NumericError("nontrivial eigenvalues must be descending within (0, 1]")
        if np.max(np.abs(self.psi[:, 0] - 1.0)) > 1e-9:
            raise NumericError("trivial right eigenvector is not constant 1")
        if abs(self.phi[:, 0].sum() - 1.0) > 1e-10:
            raise NumericError("limit density does not sum to 1")
        gram = self.psi.T @ self.phi
        if np.max(np.abs(gram - np.eye(len(lam)))) > 1e-8:
            raise NumericError("right and left eigenvectors are not bi-orthogonal")


def diffusion_basis(Gs, M_max=20, theta=0.0, overwrite=False, eig_floor=EIG_FLOOR, seed=0):
    """Fit the diffusion-map basis of a state Gram matrix.

    Parameters
    ----------
    Gs : array_like, StateGram or CompressedStateGram
        Symmetric similarity matrix. A compressed matrix over distinct
        windows is handled exactly by weighting each row with its
        multiplicity; the returned eigenvectors are expanded to all samples.
    M_max : int
        Largest number of nontrivial components to compute.
    theta : float
        Residual diffusion-distance threshold. With ``theta > 0`` the basis is
        cut at the smallest ``M`` whose discarded components (among the
        computed ones) move no sampled pair of states by more than ``theta``.
    overwrite : bool
        Reuse the input buffer.
    eig_floor : float
        Eigenvalues at or below this value are treated as zero and dropped.
    """
    K = getattr(Gs, "matrix", Gs)
    K = np.asarray(K, dtype=float)
    u = K.shape[0]
    if K.shape != (u, u):
        raise ValidationError("need a square similarity matrix")
    inverse = getattr(Gs, "inverse", None)
    if inverse is None:
        inverse = np.arange(u)
        c = np.ones(u)
    else:
        c = np.asarray(Gs.counts, dtype=float)
    n = len(inverse)
    if n < 2:
        raise ValidationError("need at least two samples")
    if M_max < 0 or M_max >= n:
        raise ValidationError(f"M_max must lie in [0, N), got {M_max}")
    if theta < 0:
        raise ValidationError("theta must be >= 0")
    if not (overwrite and K.flags.c_contiguous):
        K = np.array(K, order="C")

    q = K @ c
    if not np.all(np.isfinite(q)) or np.any(q <= 0):
        raise DegenerateInputError("similarity rows must have finite positive sums")
    _scale_rows_cols(K, 1.0 / q)
    d = K @ c
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise DegenerateInputError("normalised similarity has non-positive row sums")
    _scale_rows_cols(K, np.sqrt(c / d))

    v0 = np.sqrt(c * d)
    v0 /= np.linalg.norm(v0)
    k = min(M_max, u - 1)
    if k > 0:
        lam, V = _top_eigenpairs(K, v0, k, seed)
    else:
        lam, V = np.zeros(0), np.zeros((u, 0))
    del K

    # clean up against the trivial vector and between components
    V -= np.outer(v0, v0 @ V)
    if V.shape[1]:
        Q, R = np.linalg.qr(V)
        V = Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
    per_sample = V / np.sqrt(c)[:, None]
    for j in range(V.shape[1]):
        col = per_sample[inverse, j]
        if col[np.argmax(np.abs(col))] < 0:
            V[:, j] *= -1

    spectrum = np.concatenate([[1.0], lam])
    # eigenvalues are sorted, so the retained ones are a prefix
    M = int(np.sum(lam > eig_floor))
    total = np.dot(c, d)
    psi_u = np.empty((u, M + 1))
    phi_u = np.empty((u, M + 1))
    psi_u[:, 0] = 1.0
    phi_u[:, 0] = d / total
    root = np.sqrt(total)
    psi_u[:, 1:] = V[:, :M] * (root / np.sqrt(c * d))[:, None]
    phi_u[:, 1:] = V[:, :M] * (np.sqrt(d / c) / root)[:, None]
    basis = DiffusionBasis(
        eigenvalues=spectrum[: M + 1].copy(),
        psi=psi_u[inverse],
        phi=phi_u[inverse],
        spectrum=spectrum,
    )
    if theta > 0 and M > 0:
        basis = basis.truncate(_residual_cut(basis, theta, seed))
    basis.check()
    return basis


def _scale_rows_cols(K, s):
    n = K.shape[0]
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        rows = K[start:stop]
        rows *= s[start:stop, None]
        rows *= s[None, :]


def _top_eigenpairs(S, v0, k, seed):
    """Largest ``k`` eigenpairs of ``S - v0 v0^T``, descending."""
    n = S.shape[0]
    if n <= DENSE_EIGH_MAX:
        S -= np.outer(v0, v0)
        lam, V = eigh(S, subset_by_index=[n - k, n - 1], overwrite_a=True, check_finite=False)
    else:
        op = LinearOperator(
            (n, n), matvec=lambda x: S @ x - v0 * (v0 @ x), dtype=float
        )
        start = np.random.default_rng(seed).standard_normal(n)
        ncv = min(n, max(2 * k + 1, 40))
        lam, V = eigsh(op, k=k, which="LA", v0=start, ncv=ncv, maxiter=100 * n)
    order = np.argsort(lam)[::-1]
    return lam[order], V[:, order]


def _residual_cut(basis, theta, seed, n_pairs=2000):
    rng = np.random.default_rng(seed)
    n = basis.n_samples
    i = rng.integers(0, n, n_pairs)
    j = rng.integers(0, n, n_pairs)
    diff2 = (basis.eigenvalues[1:] ** 2) * (basis.psi[i, 1:] - basis.psi[j, 1:]) ** 2
    # tail[m] = residual after keeping m components
    tail = np.cumsum(diff2[:, ::-1], axis=1)[:, ::-1]
    tail = np.concatenate([tail, np.zeros((n_pairs, 1))], axis=1)
    worst = tail.max(axis=0)
    return int(np.argmax(worst <= theta))


def spectral_gap(eigenvalues):
    """Locate the largest ratio between consecutive nontrivial eigenvalues.

    ``eigenvalues[0]`` is the trivial eigenvalue. Returns ``(m, ratio)``
    where ``ratio = eigenvalues[m] / eigenvalues[m + 1]`` is maximal; ``m``
    is then the number of components before the gap. Ties go to the
    smaller ``m``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    nontrivial = lam[1:]
    nontrivial = nontrivial[nontrivial > 0]
    if nontrivial.size < 2:
        raise ValidationError("need at least two positive nontrivial eigenvalues")
    ratios = nontrivial[:-1] / nontrivial[1:]
    m = int(np.argmax(ratios))
    return m + 1, float(ratios[m])


def limit_density(basis):
    """Stationary weights over the reference samples (``phi[:, 0]``)."""
    return basis.phi[:, 0]


def self_information(density, i):
    """Surprisal ``-log density[i]`` in nats; ``inf`` where the density is 0."""
    value = float(np.asarray(density)[i])
    if value < 0:
        raise ValidationError("density values must be nonnegative")
    if value == 0:
        return np.inf
    return -np.log(value)
