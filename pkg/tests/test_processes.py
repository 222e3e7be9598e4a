import numpy as np
import pytest

from kem.errors import IntegrationError, ValidationError
from kem.processes import (
    HmmSpec,
    SdeSpec,
    Series,
    concat_pairs,
    even_process,
    generate_hmm,
    integrate_sde,
    lorenz63_drift,
    lorenz96_initial,
    mess3,
    random_embed,
    window_pairs,
)


def test_even_process_symbol_frequencies():
    s = generate_hmm(even_process(), 100_000, seed=3).values[:, 0]
    assert abs(np.mean(s == 0) - 1 / 3) < 0.01
    assert abs(np.mean(s == 1) - 2 / 3) < 0.01


def _one_blocks(symbols):
    """Lengths of maximal runs of 1s that are bounded by 0s on both sides."""
    edges = np.flatnonzero(np.diff(np.concatenate([[0], symbols, [0]])))
    starts, stops = edges[::2], edges[1::2]
    inner = (starts > 0) & (stops < len(symbols))
    return (stops - starts)[inner]


def test_even_process_blocks_after_zero_are_even():
    s = generate_hmm(even_process(), 20_000, seed=0).values[:, 0].astype(int)
    blocks = _one_blocks(s)
    assert len(blocks) > 1000
    assert np.all(blocks % 2 == 0)


def test_even_process_walk_from_sigma0_has_even_blocks():
    series, states = generate_hmm(even_process(), 5000, seed=11, return_states=True)
    s = series.values[:, 0].astype(int)
    first = int(np.argmax(states == 0))
    last = len(states) - 1 - int(np.argmax(states[::-1] == 0))
    assert np.all(_one_blocks(s[first:last]) % 2 == 0)


def test_hmm_sampling_is_bit_reproducible():
    a = generate_hmm(mess3(), 500, seed=42).values
    b = generate_hmm(mess3(), 500, seed=42).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, generate_hmm(mess3(), 500, seed=43).values)


def test_mess3_self_transition_probability():
    spec = mess3(a=0.6, x=0.15)
    stay = {s: 0.0 for s in spec.states}
    for src, dst, _, p in spec.transitions:
        if src == dst:
            stay[src] += p
    # alpha = a(1-2x) + 2 * ((1-a)/2) * x
    for value in stay.values():
        assert value == pytest.approx(0.48, abs=1e-12)


def test_mess3_alphabet():
    s = generate_hmm(mess3(), 3000, seed=1).values[:, 0]
    assert set(np.unique(s)) == {0.0, 1.0, 2.0}


def test_invalid_hmm_rejected():
    with pytest.raises(ValidationError):
        HmmSpec(states=(0, 1), transitions=((0, 1, 0, 0.5), (1, 0, 1, 1.0)), initial=(0.5, 0.5))
    with pytest.raises(ValidationError):
        HmmSpec(states=(0,), transitions=((0, 0, 0, 1.0),), initial=(2.0,))


def test_lorenz63_fixed_point_at_origin():
    s = integrate_sde(SdeSpec("lorenz63"), 200, [0.0, 0.0, 0.0])
    assert np.all(s.values == 0.0)


def test_lorenz96_equilibrium():
    spec = SdeSpec("lorenz96", params={"D": 5, "F": 8.0})
    s = integrate_sde(spec, 300, np.full(5, 8.0))
    assert np.allclose(s.values, 8.0, atol=0, rtol=0)


def _rk4(f, x, dt, n):
    out = np.empty((n, len(x)))
    for k in range(n):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k] = x
    return out


def test_lorenz63_attractor_bounds_and_lobes():
    s = integrate_sde(SdeSpec("lorenz63", dt=0.01), 2000, [1.0, 1.0, 1.0])
    u, w = s.values[:, 0], s.values[:, 2]
    assert np.all(np.abs(w) < 60)
    assert np.sum(np.diff(np.sign(u)) != 0) >= 2
    # independent reference: RK4 at dt=0.001 from the same start
    ref = _rk4(lorenz63_drift(), np.array([1.0, 1.0, 1.0]), 0.001, 30_000)[9::10]
    assert np.all(np.abs(ref[:, 2]) < 60)
    assert np.sum(np.diff(np.sign(ref[-2000:, 0])) != 0) >= 2
    # first-order convergence towards the reference at t = 0.2
    errs = []
    for dt, n in ((0.01, 20), (0.001, 200)):
        end = integrate_sde(SdeSpec("lorenz63", dt=dt), n + 1, [1.0, 1.0, 1.0], transient=0).values[-1]
        errs.append(np.linalg.norm(end - ref[19]))
    assert 5 < errs[0] / errs[1] < 20


def test_euler_maruyama_without_noise_is_forward_euler():
    f = lorenz63_drift()
    x = np.array([1.0, 2.0, 3.0])
    expected = [x]
    for _ in range(9):
        x = x + f(x) * 0.01
        expected.append(x)
    s = integrate_sde(SdeSpec("lorenz63", dt=0.01, seed=5), 10, [1.0, 2.0, 3.0], transient=0)
    assert np.array_equal(s.values, np.array(expected))


def test_measurement_noise_leaves_trajectory_unchanged():
    clean = integrate_sde(SdeSpec("lorenz63", seed=2), 500, [1.0, 1.0, 1.0], transient=10)
    noisy = integrate_sde(SdeSpec("lorenz63", nu=1.0, seed=2), 500, [1.0, 1.0, 1.0], transient=10)
    resid = noisy.values - clean.values
    assert abs(resid.std() - 1.0) < 0.1


def test_blow_up_names_step():
    with pytest.raises(IntegrationError) as info:
        integrate_sde(SdeSpec("lorenz63", dt=1.0), 100, [1e100, 1e100, 1e100], transient=0)
    assert info.value.step >= 1


def test_lorenz96_initial_is_seeded():
    a, b = lorenz96_initial(5, 8.0, 1), lorenz96_initial(5, 8.0, 1)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a - 8.0) <= 0.5)


def test_random_embed_identity_hook():
    s = Series(np.random.default_rng(0).normal(size=(20, 3)), dt=0.1)
    out, R = random_embed(s, 3, 0.0, seed=0, R=np.eye(3))
    assert np.array_equal(out.values, s.values)


def test_random_embed_shape_and_scale():
    s = Series(np.random.default_rng(0).normal(size=(50, 5)), dt=0.1)
    out, R = random_embed(s, 1000, 0.2, seed=1)
    assert out.values.shape == (50, 1000)
    assert R.shape == (5, 1000)
    assert abs(R.std() - 1 / 5) < 0.01


def test_random_embed_pinv_reconstruction():
    s = integrate_sde(SdeSpec("lorenz96", params={"D": 5, "F": 8.0}), 400, lorenz96_initial(5, 8.0, 0))
    errs = []
    for seed in range(20):
        out, R = random_embed(s, 1000, 1 / 5, seed=seed)
        back = out.values @ np.linalg.pinv(R)
        errs.append(np.mean((back - s.values) ** 2, axis=0))
    assert np.all(np.mean(errs, axis=0) <= 3 * (1 / 5))


def test_random_embed_rejects_smaller_target():
    with pytest.raises(ValidationError):
        random_embed(Series(np.zeros((4, 3)), dt=1.0), 2, 0.0, seed=0)


def test_window_pairs_counts():
    ramp = Series(np.arange(15.0)[:, None], dt=1.0)
    assert len(window_pairs(ramp, 10, 5)) == 1
    p = window_pairs(Series(np.arange(20.0)[:, None], dt=1.0), 10, 5)
    assert len(p) == 6
    assert np.array_equal(p.X[0], np.arange(10.0))
    assert np.array_equal(p.Y[0], np.arange(10.0, 15.0))
    # the future of pair 0 is the tail of the past of pair 5
    assert np.array_equal(p.Y[0], p.X[5][5:])
    assert np.array_equal(p.t, np.arange(9.0, 15.0))


def test_window_pairs_stride():
    p = window_pairs(Series(np.arange(30.0)[:, None], dt=1.0), 4, 2, stride=3)
    assert len(p) == (30 - 6) // 3 + 1
    assert p.sample_spacing() == 3.0


def test_window_pairs_too_short():
    with pytest.raises(ValidationError):
        window_pairs(Series(np.zeros((5, 1)), dt=1.0), 4, 2)


def test_concat_excludes_boundary_successors():
    a = window_pairs(Series(np.arange(10.0)[:, None], dt=1.0), 2, 1)
    b = window_pairs(Series(np.arange(10.0)[:, None], dt=1.0), 2, 1)
    p = concat_pairs([a, b])
    i, j = p.successor_index(1)
    assert len(i) == 2 * (len(a) - 1)
    assert np.all(p.series[i] == p.series[j])
