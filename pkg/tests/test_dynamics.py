import numpy as np
import pytest

from conftest import ou_series
from kem.dynamics import (
    EvolutionOperator,
    StateDistribution,
    estimate_operator,
    evolve,
    normalize,
    operator_power,
    power_discrepancy,
)
from kem.errors import DegenerateEvolutionError, ValidationError
from kem.geometry import diffusion_basis
from kem.model import ModelConfig, fit
from kem.processes import SamplePairSet, concat_pairs, window_pairs


def _two_step_discrepancy(model, n_dist=50, seed=1):
    E1 = model.operator
    E2 = estimate_operator(model.basis, model.pairs, 2)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_dist):
        q = StateDistribution.from_weights(model.basis, rng.random(model.basis.n_samples))
        direct = evolve(q, E2, 1).coeffs
        powered = evolve(q, E1, 2).coeffs
        out.append(np.linalg.norm(direct - powered) / np.linalg.norm(powered))
    return float(np.mean(out))


def test_limit_density_is_fixed(ou_model):
    ell = StateDistribution.limit(ou_model.operator.size)
    for k in (1, 10, 500):
        assert np.allclose(evolve(ell, ou_model.operator, k).coeffs, ell.coeffs, atol=1e-3)
    assert ou_model.operator.fixed_point_leak() < 0.1


def test_two_step_consistency_on_ou(ou_model):
    small = _two_step_discrepancy(ou_model)
    assert small < 0.15
    big = fit(window_pairs(ou_series(8002, 0), 1, 1), ModelConfig(bandwidth=0.3, decay=1.0, eps=1e-3, M_max=10))
    assert _two_step_discrepancy(big) < small


def test_successor_cosine_on_ou(ou_model):
    i, _ = ou_model.pairs.successor_index(1)
    coords = ou_model.basis.coords()
    cos = []
    for k in i:
        u = evolve(StateDistribution.from_sample(ou_model.basis, k), ou_model.operator, 1).coords(ou_model.basis)
        v = coords[k + 1]
        cos.append(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
    assert np.median(cos) > 0.9


def test_mixing_converges_to_limit(ou_model):
    q = StateDistribution.from_sample(ou_model.basis, 0)
    far = evolve(q, ou_model.operator, 2000).coeffs
    assert np.allclose(far, StateDistribution.limit(len(far)).coeffs, atol=1e-6)


def test_single_state_operator_is_identity():
    X = np.zeros((6, 1))
    pairs = SamplePairSet(X=X, Y=X, t=np.arange(6.0), Lx=1, Ly=1, D=1, dt=1.0)
    basis = diffusion_basis(np.ones((6, 6)), M_max=3)
    op = estimate_operator(basis, pairs)
    assert op.E.shape == (1, 1) and op.E[0, 0] == 1.0
    q = StateDistribution(coeffs=np.array([2.0]))
    assert evolve(q, op, 5).coeffs[0] == 1.0


def test_evolve_zero_steps_is_identity(ou_model):
    q = StateDistribution.from_sample(ou_model.basis, 7)
    assert np.array_equal(evolve(q, ou_model.operator, 0).coeffs, q.coeffs)


def test_linearity_before_normalisation(ou_model):
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=ou_model.operator.size), rng.normal(size=ou_model.operator.size)
    lhs = evolve(2.0 * a + 3.0 * b, ou_model.operator, 3, normalise=False).coeffs
    rhs = 2.0 * evolve(a, ou_model.operator, 3, normalise=False).coeffs + 3.0 * evolve(
        b, ou_model.operator, 3, normalise=False).coeffs
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_normalize_idempotent_and_degenerate():
    c = np.array([2.0, 1.0, -4.0])
    once = normalize(c).coeffs
    assert np.array_equal(normalize(once).coeffs, once)
    with pytest.raises(DegenerateEvolutionError):
        normalize(np.array([0.0, 1.0]))
    with pytest.raises(DegenerateEvolutionError):
        normalize(np.array([np.nan, 1.0]))


def test_operator_power_and_discrepancy(ou_model):
    op = ou_model.operator
    sq = operator_power(op, 2)
    assert np.allclose(sq.E, op.E @ op.E)
    assert sq.dt == pytest.approx(2 * op.dt)
    assert power_discrepancy(sq, sq) == 0.0
    assert np.array_equal(operator_power(op, 0).E, np.eye(op.size))


def test_lag_checks(ou_model):
    with pytest.raises(ValidationError):
        estimate_operator(ou_model.basis, ou_model.pairs, 0)
    with pytest.raises(ValidationError):
        estimate_operator(ou_model.basis, ou_model.pairs, ou_model.basis.n_samples)
    with pytest.raises(ValidationError):
        evolve(StateDistribution.limit(2), ou_model.operator, 1)
    with pytest.raises(ValidationError):
        evolve(StateDistribution.limit(ou_model.operator.size), ou_model.operator, -1)


def test_cross_series_pairs_are_excluded():
    a = window_pairs(ou_series(300, 1), 1, 1)
    b = window_pairs(ou_series(300, 2), 1, 1)
    p = concat_pairs([a, b])
    model = fit(p, ModelConfig(bandwidth=0.3, decay=1.0, M_max=4))
    assert model.operator.n_train == len(p) - 2


def test_no_successor_pairs():
    X = np.arange(4.0)[:, None]
    pairs = SamplePairSet(X=X, Y=X, t=np.arange(4.0), Lx=1, Ly=1, D=1, dt=1.0, series=np.arange(4))
    basis = diffusion_basis(np.exp(-(X - X.T) ** 2), M_max=2)
    with pytest.raises(ValidationError):
        estimate_operator(basis, pairs)


def test_from_weights_validation(ou_model):
    with pytest.raises(ValidationError):
        StateDistribution.from_weights(ou_model.basis, np.ones(3))
    with pytest.raises(ValidationError):
        StateDistribution.from_weights(ou_model.basis, -np.ones(ou_model.basis.n_samples))
    with pytest.raises(ValidationError):
        StateDistribution.from_sample(ou_model.basis, -1)


def test_density_of_limit(ou_model):
    ell = StateDistribution.limit(ou_model.operator.size)
    assert np.allclose(ell.density(ou_model.basis), ou_model.basis.phi[:, 0])
    assert isinstance(ou_model.operator, EvolutionOperator)
