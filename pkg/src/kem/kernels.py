"""Gaussian product kernels over time windows and Gram matrix assembly.

A window kernel is a product of per-step Gaussian factors, each raised to a
weight that decays geometrically with the distance from the present: the
present step has weight 1 and the most distant step weight ``decay``.
Because every factor is Gaussian, the product is a Gaussian in rescaled
coordinates, which is how Gram matrices are assembled here: rescale each
step by ``sqrt(w_i / 2) / bandwidth`` and take ``exp(-squared distance)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import blas

from .errors import ValidationError

__all__ = [
    "KernelSpec",
    "step_weights",
    "eval_scalar",
    "eval_window",
    "scaled_features",
    "gram",
    "cross_gram",
    "write_gram",
    "read_gram",
]

FLOOR = 1e-300
_BLOCK = 1024


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian window kernel.

    Parameters
    ----------
    bandwidth : float
        Scale ``xi`` of the per-step Gaussian ``exp(-|a-b|^2 / (2 xi^2))``.
    decay : float
        Weight of the most distant step, in (0, 1].
    window_len : int
        Number of time steps in a window.
    per_step_dim : int
        Observable dimension of one step.
    """

    bandwidth: float
    decay: float = 1.0
    window_len: int = 1
    per_step_dim: int = 1
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValidationError(f"unsupported kernel family {self.family!r}")
        if not self.bandwidth > 0:
            raise ValidationError(f"bandwidth must be > 0, got {self.bandwidth}")
        if not 0 < self.decay <= 1:
            raise ValidationError(f"decay must lie in (0, 1], got {self.decay}")
        if self.window_len < 1 or self.per_step_dim < 1:
            raise ValidationError("window_len and per_step_dim must be >= 1")

    @property
    def n_features(self):
        return self.window_len * self.per_step_dim


def step_weights(spec, direction):
    """Exponent of each step factor, in window storage order.

    Past windows are stored oldest first, so the weights increase along the
    window; future windows are stored nearest first and the weights
    decrease.
    """
    L = spec.window_len
    if L == 1:
        return np.ones(1)
    offsets = np.arange(L) / (L - 1)
    w = spec.decay ** offsets  # nearest-to-present first
    if direction == "past":
        return w[::-1].copy()
    if direction == "future":
        return w
    raise ValidationError(f"direction must be 'past' or 'future', got {direction!r}")


def eval_scalar(a, b, bandwidth):
    """Gaussian kernel between two points."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not bandwidth > 0:
        raise ValidationError("bandwidth must be > 0")
    return float(np.exp(-np.sum((a - b) ** 2) / (2.0 * bandwidth**2)))


def eval_window(x1, x2, spec, direction):
    """Product kernel between two windows, one factor per time step."""
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.size != spec.n_features or x2.size != spec.n_features:
        raise ValidationError(
            f"windows must have {spec.n_features} entries, got {x1.size} and {x2.size}"
        )
    D = spec.per_step_dim
    value = 1.0
    for i, w in enumerate(step_weights(spec, direction)):
        value *= eval_scalar(x1[i * D:(i + 1) * D], x2[i * D:(i + 1) * D], spec.bandwidth) ** w
    return value


def scaled_features(samples, spec, direction):
    """Rescale windows so the kernel is ``exp(-squared euclidean distance)``."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != spec.n_features:
        raise ValidationError(
            f"samples must be N x {spec.n_features}, got shape {samples.shape}"
        )
    if not np.all(np.isfinite(samples)):
        raise ValidationError("samples contain non-finite values")
    scale = np.sqrt(step_weights(spec, direction) / 2.0) / spec.bandwidth
    return samples * np.repeat(scale, spec.per_step_dim)


def gram(samples, spec, direction):
    """Symmetric Gram matrix of a sample set.

    The squared distances come from one symmetric rank-k update on centred
    features; only the upper triangle is computed and then mirrored. The
    diagonal is exactly 1 and entries are floored at 1e-300.
    """
    Z = scaled_features(samples, spec, direction)
    Z -= Z.mean(axis=0)
    n = Z.shape[0]
    sq = np.einsum("ij,ij->i", Z, Z)
    # C-ordered G is the transpose of a Fortran array, so its upper triangle
    # is BLAS's lower triangle.
    G = blas.dsyrk(alpha=-2.0, a=Z.T, lower=1, trans=1)
    G = np.ascontiguousarray(G.T) if not G.flags.c_contiguous else G
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        rows = G[start:stop, start:]
        rows += sq[start:stop, None]
        rows += sq[None, start:]
        np.maximum(rows, 0.0, out=rows)
        np.negative(rows, out=rows)
        np.exp(rows, out=rows)
        np.maximum(rows, FLOOR, out=rows)
    _mirror_upper(G)
    np.fill_diagonal(G, 1.0)
    return G


def cross_gram(samples_a, samples_b, spec, direction):
    """Kernel values between two sample sets (rows of ``a`` by rows of ``b``)."""
    A = scaled_features(np.atleast_2d(samples_a), spec, direction)
    B = scaled_features(np.atleast_2d(samples_b), spec, direction)
    center = B.mean(axis=0)
    A = A - center
    B = B - center
    sq = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :]
    sq -= 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    np.exp(-sq, out=sq)
    return np.maximum(sq, FLOOR, out=sq)


def _mirror_upper(G):
    n = G.shape[0]
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        diag = G[start:stop, start:stop]
        lower = np.tril_indices(stop - start, -1)
        diag[lower] = diag.T[lower]
        G[stop:, start:stop] = G[start:stop, stop:].T


def write_gram(path, G):
    """Binary dump: little-endian uint64 N, then N*N little-endian f64, row-major."""
    G = np.asarray(G, dtype="<f8")
    n = G.shape[0]
    if G.shape != (n, n):
        raise ValidationError("only square matrices can be written")
    with open(path, "wb") as fh:
        fh.write(np.uint64(n).astype("<u8").tobytes())
        fh.write(np.ascontiguousarray(G).tobytes())


def read_gram(path):
    with open(path, "rb") as fh:
        n = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        data = np.frombuffer(fh.read(8 * n * n), dtype="<f8")
    if data.size != n * n:
        raise ValidationError(f"{path}: truncated matrix file")
    return data.reshape(n, n).copy()
