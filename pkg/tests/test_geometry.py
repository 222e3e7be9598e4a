import numpy as np
import pytest

import kem.geometry as geometry
from kem.embedding import CompressedStateGram
from kem.errors import DegenerateInputError, ValidationError
from kem.geometry import diffusion_basis, limit_density, self_information, spectral_gap


def _markov(K, alpha=1.0):
    q = K.sum(1)
    Kt = K / np.outer(q, q) ** alpha
    return Kt / Kt.sum(1, keepdims=True)


def _blobs(n_a, n_b, seed=0):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(0, 0.3, n_a), rng.normal(3, 0.3, n_b)])
    return np.exp(-((x[:, None] - x[None]) ** 2) / 2), x


def test_constant_similarity_has_no_components():
    b = diffusion_basis(np.ones((6, 6)), M_max=3)
    assert b.M == 0
    assert b.eigenvalues[0] == 1.0
    assert np.allclose(limit_density(b), 1 / 6)


def test_two_block_eigenvalue_tends_to_one():
    lam = []
    for delta in (1e-1, 1e-2, 1e-3, 1e-4):
        K = np.full((8, 8), delta)
        K[:4, :4] = K[4:, 4:] = 1.0
        b = diffusion_basis(K, M_max=2)
        # brute-force oracle on the nonsymmetric Markov matrix
        ev = np.sort(np.linalg.eigvals(_markov(K)).real)[::-1]
        assert b.eigenvalues[1] == pytest.approx(ev[1], abs=1e-12)
        lam.append(b.eigenvalues[1])
    assert np.all(np.diff(lam) > 0)
    assert lam[-1] > 1 - 1e-3


def test_eigenvectors_against_markov_matrix():
    K, _ = _blobs(30, 20)
    b = diffusion_basis(K, M_max=6)
    P = _markov(K)
    assert np.allclose(P.sum(1), 1, atol=1e-10)
    for m in range(b.M + 1):
        assert np.allclose(P @ b.psi[:, m], b.eigenvalues[m] * b.psi[:, m], atol=1e-9)
        assert np.allclose(b.phi[:, m] @ P, b.eigenvalues[m] * b.phi[:, m], atol=1e-9)
    ev = np.sort(np.linalg.eigvals(P).real)[::-1]
    assert np.allclose(b.eigenvalues, ev[: b.M + 1], atol=1e-10)


def test_conventions():
    K, _ = _blobs(25, 25, seed=1)
    b = diffusion_basis(K, M_max=5)
    assert abs(b.eigenvalues[0] - 1) <= 1e-9
    assert np.all(np.diff(b.eigenvalues) <= 0) and np.all(b.eigenvalues[1:] > 0)
    assert np.all(np.abs(b.psi[:, 0] - 1) <= 1e-9)
    assert abs(b.phi[:, 0].sum() - 1) <= 1e-10
    assert np.max(np.abs(b.psi.T @ b.phi - np.eye(b.M + 1))) <= 1e-8
    # coordinates have zero mean under the limit density
    assert np.all(np.abs(b.phi[:, 0] @ b.coords()) <= 1e-6)
    # sign rule
    for m in range(1, b.M + 1):
        col = b.psi[:, m]
        assert col[np.argmax(np.abs(col))] > 0


def test_limit_density_two_clusters_alpha_one():
    K = np.full((4, 4), 1e-6)
    K[:3, :3] = 1.0
    K[3, 3] = 1.0
    b = diffusion_basis(K, M_max=1)
    # brute-force stationary vector of the row-normalised, density-normalised matrix
    w, V = np.linalg.eig(_markov(K).T)
    pi = np.abs(V[:, np.argmax(w.real)].real)
    pi /= pi.sum()
    assert np.allclose(limit_density(b), pi, atol=1e-10)
    assert limit_density(b)[:3].sum() == pytest.approx(0.5, abs=0.01)


def _two_block(labels, delta=1e-3):
    return np.where(labels[:, None] == labels[None], 1.0, delta)


def test_density_robustness_to_oversampling():
    labels = np.repeat([0, 1], 4)
    dup = np.concatenate([labels, labels[:3], labels[:3]])
    a = diffusion_basis(_two_block(labels), M_max=3)
    b = diffusion_basis(_two_block(dup), M_max=3)
    assert a.M == b.M == 1
    assert np.all(np.abs(b.eigenvalues[1:] - a.eigenvalues[1:]) / a.eigenvalues[1:] < 0.05)
    # smooth two-cluster similarity: the cluster eigenvalue is also stable
    K, x = _blobs(40, 40, seed=2)
    xd = np.concatenate([x, x[5:25]])
    Kd = np.exp(-((xd[:, None] - xd[None]) ** 2) / 2)
    lam, lam_d = diffusion_basis(K, M_max=1).eigenvalues[1], diffusion_basis(Kd, M_max=1).eigenvalues[1]
    assert abs(lam_d - lam) / lam < 0.05


def test_compressed_input_matches_expanded():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(15, 2))
    inverse = rng.integers(0, 15, 60)
    inverse[:15] = np.arange(15)
    counts = np.bincount(inverse, minlength=15)
    Ku = np.exp(-((pts[:, None] - pts[None]) ** 2).sum(-1))
    C = CompressedStateGram(matrix=Ku, eps=0.0, inverse=inverse, counts=counts)
    a = diffusion_basis(C, M_max=5)
    b = diffusion_basis(C.expand(), M_max=5)
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-10)
    assert np.allclose(a.psi, b.psi, atol=1e-7)
    assert np.allclose(a.phi, b.phi, atol=1e-9)


def test_iterative_path_matches_dense(monkeypatch):
    K, _ = _blobs(150, 100, seed=4)
    dense = diffusion_basis(K, M_max=6)
    monkeypatch.setattr(geometry, "DENSE_EIGH_MAX", 10)
    sparse = diffusion_basis(K, M_max=6)
    assert np.allclose(dense.eigenvalues, sparse.eigenvalues, atol=1e-10)
    assert np.allclose(dense.psi, sparse.psi, atol=1e-6)


def test_residual_cut():
    K, _ = _blobs(60, 40, seed=5)
    full = diffusion_basis(K, M_max=10)
    cut = diffusion_basis(K, M_max=10, theta=1e-3)
    assert cut.M < full.M
    rest = (full.eigenvalues[cut.M + 1:] ** 2 * (full.psi[:, None, cut.M + 1:] - full.psi[None, :, cut.M + 1:]) ** 2).sum(-1)
    assert rest.max() <= 1e-3 * 1.5
    assert np.allclose(cut.eigenvalues, full.eigenvalues[: cut.M + 1])


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        diffusion_basis(np.ones((3, 3)), M_max=3)
    with pytest.raises(ValidationError):
        diffusion_basis(np.ones((1, 1)), M_max=0)
    with pytest.raises(ValidationError):
        diffusion_basis(np.ones((3, 3)), M_max=1, theta=-1)
    K = np.eye(3)
    K[1, 1] = 0.0
    with pytest.raises(DegenerateInputError):
        diffusion_basis(K, M_max=1)
    with pytest.raises(DegenerateInputError):
        diffusion_basis(np.full((3, 3), np.nan), M_max=1)


def test_spectral_gap():
    assert spectral_gap([1, 0.5, 0.49, 0.01]) == (2, pytest.approx(49.0))
    assert spectral_gap([1, 0.4, 0.2, 0.1])[0] == 1  # ties go to the smaller index
    with pytest.raises(ValidationError):
        spectral_gap([1, 0.3])


def test_self_information():
    assert self_information([1.0], 0) == 0.0
    assert self_information([np.exp(-1)], 0) == pytest.approx(1.0)
    assert self_information(np.full(4, 0.25), 2) == pytest.approx(np.log(4))
    assert self_information(np.full(4, 0.25), 2) == pytest.approx(1.3863, abs=1e-4)
    assert self_information([0.0, 1.0], 0) == np.inf
    with pytest.raises(ValidationError):
        self_information([-0.1], 0)
