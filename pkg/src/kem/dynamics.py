"""Evolution operator on the reduced basis.

A distribution over the reference states is stored by its coefficients on
the left eigenvectors ``phi[:, m]``. Coefficient 0 carries the mass; the
operator is estimated from consecutive samples as
``E[a, b] = sum_i psi[succ(i), a] * phi[i, b]`` and normalised so that the
mass coefficient is preserved.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEvolutionError, ValidationError

__all__ = [
    "EvolutionOperator",
    "StateDistribution",
    "estimate_operator",
    "operator_power",
    "evolve",
    "normalize",
    "power_discrepancy",
]

_MASS_FLOOR = 1e-300


@dataclass
class EvolutionOperator:
    """Reduced-basis operator advancing distributions by ``dt``.

    Attributes
    ----------
    E : ndarray, shape (M+1, M+1)
        Normalised operator. Row and column 0 are ``(1, 0, ..., 0)``, so the
        limit density is an exact fixed point and mass is conserved.
    dt : float
        Time advanced by one application.
    n_train : int
        Number of successor pairs used in the estimate.
    raw : ndarray
        Unnormalised estimate, kept for diagnostics. ``raw[1:, 0]`` measures
        how far the sampled dynamics is from leaving the limit density fixed.
    """

    E: np.ndarray
    dt: float
    n_train: int
    raw: np.ndarray = None

    @property
    def size(self):
        return self.E.shape[0]

    def fixed_point_leak(self):
        """Relative size of the discarded ``raw[1:, 0]`` column."""
        if self.raw is None or self.size == 1:
            return 0.0
        return float(np.linalg.norm(self.raw[1:, 0]) / abs(self.raw[0, 0]))


@dataclass
class StateDistribution:
    """Distribution over reference states in the left-eigenvector basis.

    ``coeffs[0]`` is the total mass; the density at sample ``i`` is
    ``sum_m coeffs[m] * phi[i, m]``, so ``coeffs[m] = <psi_m, q>``. The
    evolution operator acts on these coefficients. State coordinates in
    the diffusion embedding are ``lambda_m * coeffs[m]`` (see ``coords``).
    """

    coeffs: np.ndarray
    weights: np.ndarray = None

    @classmethod
    def from_weights(cls, basis, q):
        """Coefficients ``<psi_m, q>`` of sample weights ``q``."""
        q = np.asarray(q, dtype=float)
        if q.shape != (basis.n_samples,):
            raise ValidationError(f"weights must have length {basis.n_samples}")
        if np.any(q < 0) or not q.sum() > 0:
            raise ValidationError("weights must be nonnegative with positive sum")
        q = q / q.sum()
        return cls(coeffs=q @ basis.psi, weights=q)

    @classmethod
    def from_sample(cls, basis, i):
        """Point mass on training sample ``i``: ``(1, psi_i1, psi_i2, ...)``."""
        if not 0 <= i < basis.n_samples:
            raise ValidationError(f"sample index {i} out of range")
        return cls(coeffs=basis.psi[i].copy())

    @classmethod
    def limit(cls, size):
        """Coefficients of the limit density."""
        c = np.zeros(size)
        c[0] = 1.0
        return cls(coeffs=c)

    def density(self, basis):
        """Values over the reference samples."""
        return basis.phi[:, : len(self.coeffs)] @ self.coeffs

    def coords(self, basis):
        """Expected state coordinates ``lambda_m * coeffs[m]``, ``m >= 1``."""
        m = len(self.coeffs)
        return basis.eigenvalues[1:m] * self.coeffs[1:]


def estimate_operator(basis, pairs, n=1):
    """Estimate ``E(n * spacing)`` from samples ``n`` spacings apart.

    Parameters
    ----------
    basis : DiffusionBasis
    pairs : SamplePairSet
        The samples the basis was fitted on, in their original order.
    n : int
        Lag in sample spacings.
    """
    N = basis.n_samples
    if len(pairs) != N:
        raise ValidationError(f"basis has {N} samples but pair set has {len(pairs)}")
    if not 1 <= n < N:
        raise ValidationError(f"lag must satisfy 1 <= n < N, got {n}")
    i, j = pairs.successor_index(n)
    if len(i) == 0:
        raise ValidationError(f"no pairs of samples {n} spacings apart")
    raw = basis.psi[j].T @ basis.phi[i]
    if not raw[0, 0] > 0:
        raise DegenerateEvolutionError("successor pairs carry no limit-density mass")
    E = raw / raw[0, 0]
    E[0, 1:] = 0.0
    E[1:, 0] = 0.0
    E[0, 0] = 1.0
    return EvolutionOperator(E=E, dt=n * pairs.sample_spacing(), n_train=len(i), raw=raw)


def operator_power(op, n):
    """``E(dt)^n`` by repeated squaring."""
    if n < 0:
        raise ValidationError("power must be >= 0")
    E = np.linalg.matrix_power(op.E, int(n))
    return EvolutionOperator(E=E, dt=n * op.dt, n_train=op.n_train)


def power_discrepancy(direct, powered):
    """Relative Frobenius distance between a direct and a powered estimate."""
    A, B = direct.E, powered.E
    if A.shape != B.shape:
        raise ValidationError("operators differ in size")
    return float(np.linalg.norm(A - B) / max(np.linalg.norm(A), _MASS_FLOOR))


def normalize(q):
    """Divide by the mass coefficient."""
    c = np.asarray(getattr(q, "coeffs", q), dtype=float)
    if not np.all(np.isfinite(c)) or abs(c[0]) < _MASS_FLOOR:
        raise DegenerateEvolutionError("distribution has vanishing mass coefficient")
    return StateDistribution(coeffs=c / c[0])


def evolve(q, op, steps, normalise=True):
    """Apply ``op`` ``steps`` times to a distribution."""
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    c = np.asarray(getattr(q, "coeffs", q), dtype=float)
    m = op.size
    if len(c) < m:
        raise ValidationError(f"distribution has {len(c)} coefficients, operator needs {m}")
    c = c[:m]
    if steps:
        c = np.linalg.matrix_power(op.E, int(steps)) @ c
    return normalize(c) if normalise else StateDistribution(coeffs=c)
