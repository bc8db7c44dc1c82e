import math

import numpy as np
import pytest

from cmrac import linalg
from cmrac.excitation import (
    AlreadyComplete, DegenerateEffectiveness, FilterState, MemoryBuilder, Outcome,
    excitation_level, extract_params, filter_derivs, filtered_output, memory_output,
)
from cmrac.sim import initial_condition, augmented_rhs, rk4_step, state_layout


def spanning_samples(rng, q):
    """``q`` well-separated samples: rotated columns with norms in [2, 5]."""
    U, _ = np.linalg.qr(rng.normal(size=(q, q)))
    return (U * rng.uniform(2.0, 5.0, q)).T


def feed(builder, samples, W_T):
    return [builder.try_insert(s, W_T @ s) for s in samples]


def test_filter_derivs_examples():
    fs = FilterState(1.0, np.array([1.0, 2.0]), np.array([1.0, 2.0, 3.0]), np.zeros(2))
    xd, pd = filter_derivs(fs, [1.0, 2.0], [1.0, 2.0, 3.0])
    assert not xd.any() and not pd.any()
    fs = FilterState.start(1.0, [0.0, 0.0], 3)
    np.testing.assert_array_equal(filter_derivs(fs, [2.0, 0.0], np.zeros(3))[0], [2.0, 0.0])


def test_filter_rejects_nonpositive_cutoff():
    with pytest.raises(ValueError, match="f must be positive"):
        FilterState.start(0.0, [0.0], 2)


def test_filter_step_response_matches_exponential():
    f, dt = 2.0, 1e-3
    fs = FilterState.start(f, [0.0], 1)
    x = np.array([1.5])
    for _ in range(3000):
        fs.x_f = rk4_step(fs.x_f, lambda t, z: f * (x - z), 0.0, dt)
    assert fs.x_f[0] == pytest.approx(1.5 * (1 - math.exp(-f * 3.0)), abs=1e-10)


def test_filtered_output_examples():
    fs = FilterState.start(1.0, [0.4, -0.3], 4)
    np.testing.assert_allclose(filtered_output(fs, [0.4, -0.3], 0.0), [0.0, 0.0], atol=0)
    fs = FilterState.start(1.0, [0.0, 0.0], 4)
    np.testing.assert_array_equal(filtered_output(fs, [3.0, 1.0], 2.0), [3.0, 1.0])


def test_filtered_output_tracks_true_parameters(bench, model, ref):
    """Along a closed-loop run the filtered output equals W^T times the filtered regressor."""
    cfg = bench.sim
    init = initial_condition(cfg, model, ref, x0=[0.3, -0.05])
    lay = state_layout(model.n, model.p)
    rhs = augmented_rhs(cfg, model, ref, init)
    z = np.zeros(3 * model.n + 2 * model.q)
    z[lay["x"]], z[lay["gains"]] = init.x0, init.gains0
    fs = FilterState.start(cfg.f, init.x0, model.q)
    worst = 0.0
    for k in range(3000):
        z = rk4_step(z, rhs, k * cfg.dt, cfg.dt)
        fs.x_f = z[lay["x_f"]]
        y_f = filtered_output(fs, z[lay["x"]], (k + 1) * cfg.dt)
        worst = max(worst, np.max(np.abs(y_f - model.W_T @ z[lay["phi_f"]])))
    assert worst <= 1e-9


def test_try_insert_examples():
    b = MemoryBuilder(2, 4)
    s = np.array([3.0, 0.0, 4.0, 0.0])
    assert b.try_insert(s, [1.0, 2.0]) is Outcome.ACCEPTED
    np.testing.assert_array_equal(b.Phi_b[:, 0], s / 5.0)
    assert b.try_insert(s, [1.0, 2.0]) is Outcome.REJECTED_DEPENDENT
    assert b.try_insert(s * 0.1, [0.0, 0.0]) is Outcome.REJECTED_LOW_NORM
    assert b.i == 1


def test_scaled_standard_basis_recovers_W():
    W_T = np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 2.0, -0.2]])
    b = MemoryBuilder(2, 4)
    order = [2, 0, 3, 1]
    outcomes = feed(b, [2.0 * np.eye(4)[j] for j in order], W_T)
    assert outcomes == [Outcome.ACCEPTED] * 4 and b.complete
    # a permutation matrix: one unit entry per row and column
    assert np.array_equal(np.abs(b.Phi_b).sum(axis=0), np.ones(4))
    assert np.array_equal(np.abs(b.Phi_b).sum(axis=1), np.ones(4))
    np.testing.assert_array_equal(b.Y_b @ b.Phi_b.T, W_T)
    with pytest.raises(AlreadyComplete):
        b.try_insert(np.ones(4) * 3, np.zeros(2))


def test_memory_output_before_and_after_completion(rng):
    b = MemoryBuilder(2, 3)
    out = memory_output(b)
    assert out.eta == 0.0 and not out.Y_m.any() and not out.Phi_m.any()
    W_T = rng.normal(size=(2, 3))
    feed(b, spanning_samples(rng, 3), W_T)
    out = memory_output(b)
    assert np.max(np.abs(out.Phi_m - np.eye(3))) <= 1e-8
    assert out.eta == 1.0
    assert abs(linalg.det(out.Phi_m) - 1.0) <= 1e-6
    np.testing.assert_allclose(out.Y_m, W_T, atol=1e-9)


def test_mgs_orthonormality_and_data_consistency(rng):
    for _ in range(200):
        q = int(rng.integers(2, 7))
        n = int(rng.integers(1, 4))
        W_T = rng.normal(size=(n, q))
        b = MemoryBuilder(n, q, eps1=0.5, eps2=0.01)
        for s in rng.normal(size=(int(rng.integers(1, 3 * q)), q)) * rng.uniform(0.1, 3.0):
            if b.complete:
                break
            b.try_insert(s, W_T @ s)
        B = b.Phi_b[:, :b.i]
        assert np.max(np.abs(B.T @ B - np.eye(b.i)), initial=0.0) <= 1e-9
        np.testing.assert_allclose(b.Y_b[:, :b.i], W_T @ B, atol=1e-9)


def test_reorthogonalization_keeps_nearly_dependent_samples_orthonormal(rng):
    # residuals of ~1e-14 relative fall below the second-pass trigger
    q = 5
    base = rng.normal(size=q)
    b = MemoryBuilder(1, q, eps1=0.0, eps2=1e-16)
    b.try_insert(base, [0.0])
    for _ in range(q - 1):
        b.try_insert(base + 1e-14 * rng.normal(size=q), [0.0])
    assert b.i > 1
    B = b.Phi_b[:, :b.i]
    assert np.max(np.abs(B.T @ B - np.eye(b.i))) <= 1e-9


def test_memory_term_identity(rng):
    """With a complete memory, Y_m - W_hat^T Phi_m equals the transposed parameter error."""
    for _ in range(100):
        n, q = 2, 4
        W_T = rng.normal(size=(n, q))
        b = MemoryBuilder(n, q)
        feed(b, spanning_samples(rng, q), W_T)
        assert b.complete
        out = memory_output(b)
        W_hat = rng.normal(size=(q, n))
        term = (out.Y_m - W_hat.T @ out.Phi_m).T
        np.testing.assert_allclose(term, -(W_hat - W_T.T), atol=1e-8)


def test_insertion_order_independence(rng):
    for _ in range(50):
        W_T = rng.normal(size=(2, 4))
        samples = spanning_samples(rng, 4)
        Ys = []
        for perm in (np.arange(4), rng.permutation(4)):
            b = MemoryBuilder(2, 4)
            feed(b, samples[perm], W_T)
            Ys.append(memory_output(b).Y_m)
        np.testing.assert_allclose(Ys[0], Ys[1], atol=1e-8)
        np.testing.assert_allclose(Ys[0], W_T, atol=1e-8)


def test_extract_params_examples():
    W_T = np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 2.0, -0.2]])
    ext = extract_params(W_T, 2, 1)
    np.testing.assert_array_equal(ext.A_hat, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(ext.bkp_hat, [0, 2])
    np.testing.assert_allclose(ext.theta_hat, [-0.1], atol=1e-15)
    with pytest.raises(DegenerateEffectiveness):
        extract_params(np.hstack([np.eye(2), np.zeros((2, 2))]), 2, 1)


def test_extract_params_round_trip(rng):
    for _ in range(100):
        n, p = int(rng.integers(1, 5)), int(rng.integers(0, 4))
        A = rng.normal(size=(n, n))
        bkp = rng.normal(size=n)
        theta = rng.normal(size=p)
        ext = extract_params(np.hstack([A, bkp[:, None], np.outer(bkp, theta)]), n, p)
        np.testing.assert_allclose(ext.A_hat, A, atol=1e-10)
        np.testing.assert_allclose(ext.bkp_hat, bkp, atol=1e-10)
        np.testing.assert_allclose(ext.theta_hat, theta, atol=1e-10)


def test_excitation_level_examples(rng):
    assert excitation_level(list(np.eye(4))) == pytest.approx(1.0, abs=1e-12)
    assert excitation_level(list(0.5 * np.eye(4))) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(linalg.Singular):
        excitation_level([[1.0, 2.0], [2.0, 4.0]])
    M = rng.normal(size=(4, 4))
    assert excitation_level(list(M.T)) == pytest.approx(np.linalg.norm(np.linalg.inv(M), 2), rel=1e-8)
