"""Functions of the data, projection of new observations, and forecasting.

A function of the data is known by its value at every training sample and
is projected on the left eigenvectors. A new past window is turned into a
distribution over training samples by nonnegative least squares against
the regularised past Gram matrix, then into reduced-basis coefficients.
Forecasting evolves those coefficients and reads the function off them.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .dynamics import StateDistribution, evolve, normalize
from .embedding import unique_windows
from .errors import OutOfSupportError, ValidationError
from .kernels import FLOOR, cross_gram, gram

__all__ = [
    "FittedFunction",
    "fit_function",
    "fit_values",
    "PastContext",
    "NewStateEstimate",
    "project_new",
    "forecast",
    "forecast_path",
]

NNLS_TOL = 1e-10
_SCREEN = 64
_MAX_ROUNDS = 200


@dataclass
class FittedFunction:
    """Function of the data projected on the reduced basis.

    Attributes
    ----------
    values : ndarray, shape (N, D)
        Value at each training sample.
    coeffs : ndarray, shape (M+1, D)
        ``coeffs[m] = <f, phi_m>``.
    """

    values: np.ndarray
    coeffs: np.ndarray
    tau: float = None

    def at(self, state):
        """Expected value of ``f`` under a state given by its coefficients."""
        c = np.asarray(getattr(state, "coeffs", state), dtype=float)
        m = min(c.shape[-1], self.coeffs.shape[0])
        return c[..., :m] @ self.coeffs[:m]

    def reconstruct(self, basis):
        """Value at each training state, ``sum_m psi_im coeffs[m]``."""
        return basis.psi[:, : self.coeffs.shape[0]] @ self.coeffs

    def r2(self, basis):
        """Coefficient of determination of the in-sample reconstruction."""
        fit = self.reconstruct(basis)
        resid = np.sum((self.values - fit) ** 2)
        total = np.sum((self.values - self.values.mean(axis=0)) ** 2)
        return 1.0 - resid / total if total > 0 else float(resid == 0)


def fit_values(values, basis, tau=None):
    """Project arbitrary per-sample values on the left eigenvectors."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != basis.n_samples:
        raise ValidationError(f"need one row per training sample ({basis.n_samples})")
    return FittedFunction(values=values, coeffs=basis.phi.T @ values, tau=tau)


def fit_function(pairs, basis, tau):
    """Project the observation ``tau`` time units after the present.

    ``tau`` must be a positive multiple of ``dt`` inside the future window.
    """
    k = tau / pairs.dt
    kk = int(round(k))
    if abs(k - kk) > 1e-9 * max(1.0, abs(k)) or not 1 <= kk <= pairs.Ly:
        raise ValidationError(
            f"tau={tau} is not a step inside the future window (dt={pairs.dt}, Ly={pairs.Ly})"
        )
    D = pairs.D
    return fit_values(pairs.Y[:, (kk - 1) * D:kk * D], basis, tau=tau)


class PastContext:
    """Training pasts, kernel and regularisation needed to place new windows.

    The regularised Gram matrix is built lazily on distinct windows, so
    repeated pasts (discrete data) are handled at the cost of the distinct
    count.
    """

    def __init__(self, X, spec, eps):
        if not eps > 0:
            raise ValidationError("eps must be > 0")
        self.X = np.asarray(X, dtype=float)
        self.spec = spec
        self.eps = float(eps)
        self._uniq = None
        self._Gu = None

    @property
    def n_samples(self):
        return self.X.shape[0]

    def _prepare(self):
        if self._uniq is None:
            ux, inverse, counts = unique_windows(self.X)
            self._uniq = (ux, inverse, counts.astype(float))
            self._Gu = gram(ux, self.spec, "past")
        return self._uniq, self._Gu


@dataclass
class NewStateEstimate:
    """Distribution over training samples representing a new past."""

    omega: np.ndarray
    q: np.ndarray
    distribution: StateDistribution = None
    state: np.ndarray = None
    residual: float = np.nan
    kkt: float = np.nan
    extra: dict = field(default_factory=dict)


def _screened_nnls(Gu, c, eps, k, tol):
    """Nonnegative least squares on the regularised, multiplicity-weighted system.

    Minimises ``sum_u c_u ((Gu C + eps I) w - k)_u^2`` over ``w >= 0``.
    Columns are screened: the problem is solved on a working set and grown
    with every coordinate violating the optimality conditions.
    """
    u = len(c)
    root = np.sqrt(c)
    b = root * k

    def columns(S):
        A = Gu[:, S] * c[S]
        A[S, np.arange(len(S))] += eps
        return A * root[:, None]

    def gradient(r):
        return c * (Gu @ (root * r)) + eps * root * r

    scale = max(1.0, float(np.max(gradient(b))))
    S = np.argsort(-k, kind="stable")[: min(u, _SCREEN)]
    for _ in range(_MAX_ROUNDS):
        A = columns(S)
        w_S, _ = nnls(A, b, maxiter=50 * max(len(S), 10))
        r = b - A @ w_S
        g = gradient(r)
        g[S] = -np.inf
        worst = float(np.max(g)) if len(S) < u else -np.inf
        if worst <= tol * scale:
            break
        add = np.argsort(-g, kind="stable")[:_SCREEN]
        add = add[g[add] > tol * scale]
        S = np.concatenate([S, add])
    w = np.zeros(u)
    w[S] = w_S
    return w, float(np.linalg.norm(r)), max(worst, 0.0) / scale


def project_new(x_new, context, basis=None, tol=NNLS_TOL):
    """Represent a new past window as a distribution over training samples.

    Solves ``min |(Gx + eps I) w - K(x_new)|^2`` subject to ``w >= 0`` and
    normalises ``q = w / sum(w)``. With a basis, the distribution
    coefficients ``sum_i q_i psi_im`` and the estimated state coordinates
    ``lambda_m sum_i q_i psi_im`` are attached.
    """
    x_new = np.asarray(x_new, dtype=float).ravel()
    (ux, inverse, counts), Gu = context._prepare()
    k = cross_gram(x_new[None, :], ux, context.spec, "past")[0]
    if k.max() <= FLOOR:
        raise OutOfSupportError("new window has zero similarity to every training past")
    w, resid, kkt = _screened_nnls(Gu, counts, context.eps, k, tol)
    omega = w[inverse]
    total = omega.sum()
    if not total > 0:
        raise OutOfSupportError("nonnegative projection is identically zero")
    q = omega / total
    dist = state = None
    if basis is not None:
        dist = StateDistribution.from_weights(basis, q)
        state = dist.coords(basis)
    return NewStateEstimate(omega=omega, q=q, distribution=dist, state=state, residual=resid, kkt=kkt)


def forecast(x_new, context, basis, op, f, horizon_steps):
    """Expected value of ``f`` after ``horizon_steps`` operator applications.

    ``x_new`` may be a single window or a matrix of windows (one per row).
    """
    X = np.atleast_2d(np.asarray(x_new, dtype=float))
    out = []
    for x in X:
        est = project_new(x, context, basis)
        out.append(f.at(evolve(est.distribution, op, horizon_steps)))
    out = np.array(out)
    return out[0] if np.ndim(x_new) == 1 else out


def forecast_path(state, op, f, n_steps):
    """Forecasts after ``0 .. n_steps`` applications, shape (n_steps+1, D)."""
    c = np.asarray(getattr(state, "coeffs", state), dtype=float)[: op.size]
    path = []
    for n in range(n_steps + 1):
        if n:
            c = op.E @ c
        path.append(f.at(normalize(c)))
    return np.array(path)
