import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepdemix.errors import DegenerateFactorizationError, RankDeficientError, ReconstructionError
from sepdemix.measurement import lift, lift_pairs
from sepdemix.metrics import aligned_errors
from sepdemix.model import ProblemConfig, complex_normal, generate_instance, make_rng
from sepdemix.vector_recovery import (
    SINGULAR_SENTINEL,
    FactoredReceiver,
    TransformOptions,
    cross_transforms,
    factorize_rank_s,
    make_residual_fn,
    pack_transform,
    reconstruct_vectors,
    residuals_one_sided,
    residuals_two_sided,
    solve_transform,
    true_transform,
    unpack_transform,
)


def exact_setup(S=2, R=3, mode="two_sided", seed=0, K=5, N=6):
    cfg = ProblemConfig(L=40, K=K, N=N, S=S, R=R, mode=mode, seed=seed)
    _, truth, _ = generate_instance(cfg)
    factored = [factorize_rank_s(truth.lifted(r), S) for r in range(R)]
    T_cross, G = cross_transforms(factored)
    return cfg, truth, factored, T_cross, G


def rand_T(rng, S):
    return complex_normal(rng, (S, S))


def test_factorize_rank_one_recovers_pair_up_to_scalars():
    rng = make_rng(0, "f")
    m, h = complex_normal(rng, 6), complex_normal(rng, 5)
    f = factorize_rank_s(lift(m, h), 1)
    a = f.M_tilde[:, 0] / m
    b = f.H_tilde[:, 0] / h
    np.testing.assert_allclose(a, a[0], atol=1e-12)
    np.testing.assert_allclose(b, b[0], atol=1e-12)
    assert abs(a[0] * b[0] - 1) < 1e-12


def test_factorization_properties():
    _, truth, factored, _, _ = exact_setup(S=3, R=3)
    for r, f in enumerate(factored):
        gram = f.M_tilde.conj().T @ f.M_tilde
        np.testing.assert_allclose(gram, np.diag(f.sigma), atol=1e-10)
        assert np.all(np.diff(f.sigma) <= 0)
        Z = truth.lifted(r)
        assert np.linalg.norm(f.product() - Z) / np.linalg.norm(Z) < 1e-12


def test_factorization_stability_under_perturbation():
    _, truth, _, _, _ = exact_setup(S=2)
    Z = truth.lifted(0)
    E = complex_normal(make_rng(1, "p"), Z.shape)
    E *= 1e-3 * np.linalg.norm(Z) / np.linalg.norm(E)
    f = factorize_rank_s(Z + E, 2)
    err = np.linalg.norm(f.product() - Z)
    assert err <= 1.01 * np.linalg.norm(E)


def test_rank_deficiency():
    rng = make_rng(2, "d")
    Z = lift(complex_normal(rng, 6), complex_normal(rng, 5))
    with pytest.raises(RankDeficientError):
        factorize_rank_s(Z, 2)
    assert factorize_rank_s(Z, 2, strict=False).rank_deficient
    with pytest.raises(RankDeficientError):
        factorize_rank_s(np.full((3, 3), np.nan), 1)
    with pytest.raises(RankDeficientError):
        factorize_rank_s(np.ones((2, 3)), 3)


def test_cross_transforms_reference_is_identity():
    _, _, factored, T_cross, G = exact_setup()
    np.testing.assert_allclose(T_cross[0], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(G[0], factored[0].H_tilde, atol=1e-12)


def test_cross_transforms_map_to_common_signal_factor():
    _, _, factored, T_cross, _ = exact_setup(S=3, R=4)
    for f, Tc in zip(factored, T_cross):
        np.testing.assert_allclose(f.M_tilde @ np.linalg.inv(Tc), factored[0].M_tilde, atol=1e-8)


def test_cross_transforms_scalar_case():
    _, _, factored, T_cross, _ = exact_setup(S=1, R=3)
    for Tc in T_cross:
        assert Tc.shape == (1, 1) and abs(Tc[0, 0]) > 0


def test_cross_transforms_degenerate():
    f = FactoredReceiver(M_tilde=np.zeros((4, 2)), H_tilde=np.ones((3, 2)), sigma=np.zeros(2))
    with pytest.raises(DegenerateFactorizationError):
        cross_transforms([f])


@pytest.mark.parametrize("mode", ["one_sided", "two_sided"])
@pytest.mark.parametrize("S", [1, 2, 3])
def test_true_transform_zeroes_residuals(mode, S):
    for seed in range(10):
        _, truth, factored, _, G = exact_setup(S=S, R=S + 1, mode=mode, seed=seed)
        T = true_transform(factored[0], truth.M)
        res = make_residual_fn(mode, G, factored[0].M_tilde)(T)
        assert res.size == (S * (S + 1) if mode == "one_sided" else S + S * (S + 1))
        assert np.max(np.abs(res)) < 1e-8
        M_hat, H_hat = reconstruct_vectors(factored[0], G, T)
        assert aligned_errors(truth, M_hat, H_hat).max_error < 1e-10


def test_random_transform_is_not_a_root():
    _, _, factored, _, G = exact_setup()
    T = rand_T(make_rng(0, "r"), 2)
    assert np.max(np.abs(residuals_one_sided(T, G))) > 1e-3


def test_scaling_T_by_two_shifts_signal_residuals_by_three():
    _, truth, factored, _, G = exact_setup(S=2)
    T = true_transform(factored[0], truth.M)
    res = residuals_two_sided(2 * T, factored[0].M_tilde, G)
    np.testing.assert_allclose(res[:2], 3.0, atol=1e-10)


def test_scalar_closed_form_one_sided():
    _, _, factored, _, G = exact_setup(S=1, R=2, mode="one_sided")
    t = np.linalg.norm(G[0])
    res = residuals_one_sided(np.array([[t * np.exp(0.7j)]]), G)
    assert np.max(np.abs(res)) < 1e-12
    assert abs(np.linalg.norm(G[1]) / t - 1) < 1e-12


def test_singular_transform_gives_sentinel():
    _, _, factored, _, G = exact_setup()
    res = residuals_two_sided(np.zeros((2, 2)), factored[0].M_tilde, G)
    assert np.all(res == SINGULAR_SENTINEL)
    with pytest.raises(ReconstructionError):
        reconstruct_vectors(factored[0], G, np.zeros((2, 2)))


def test_identity_transform_returns_svd_factors():
    _, _, factored, _, G = exact_setup()
    M_hat, H_hat = reconstruct_vectors(factored[0], G, np.eye(2))
    np.testing.assert_allclose(M_hat, factored[0].M_tilde)
    np.testing.assert_allclose(H_hat[0], factored[0].H_tilde)


def test_pack_round_trip():
    T = rand_T(make_rng(0, "pk"), 3)
    x = pack_transform(T)
    assert x.shape == (18,) and x.dtype == np.float64
    np.testing.assert_array_equal(unpack_transform(x, 3), T)


@settings(max_examples=40, deadline=None)
@given(S=st.integers(1, 3), seed=st.integers(0, 10**9))
def test_product_invariance(S, seed):
    _, truth, factored, _, G = exact_setup(S=S, R=S + 1, seed=seed % 1000)
    T = rand_T(make_rng(seed, "inv"), S)
    M_hat, H_hat = reconstruct_vectors(factored[0], G, T)
    for r, H in enumerate(H_hat):
        Z = truth.lifted(r)
        assert np.linalg.norm(lift_pairs(M_hat, H) - Z) / np.linalg.norm(Z) < 1e-8


@settings(max_examples=40, deadline=None)
@given(S=st.integers(2, 3), seed=st.integers(0, 10**9))
def test_column_separability_one_sided(S, seed):
    _, _, factored, _, G = exact_setup(S=S, R=S + 1, mode="one_sided", seed=seed % 1000)
    rng = make_rng(seed, "perm")
    T = rand_T(rng, S)
    perm = rng.permutation(S)
    base = residuals_one_sided(T, G).reshape(len(G), S)
    permuted = residuals_one_sided(T[:, perm], G).reshape(len(G), S)
    np.testing.assert_allclose(permuted, base[:, perm], atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(S=st.integers(1, 3), seed=st.integers(0, 10**9))
def test_phase_gauge_invariance(S, seed):
    _, _, factored, _, G = exact_setup(S=S, R=S + 1, seed=seed % 1000)
    rng = make_rng(seed, "phase")
    T = rand_T(rng, S)
    D = np.exp(1j * rng.uniform(0, 2 * np.pi, S))
    for fn in (lambda X: residuals_one_sided(X, G), lambda X: residuals_two_sided(X, factored[0].M_tilde, G)):
        a, b = fn(T), fn(T * D)
        assert np.max(np.abs(a - b)) < 1e-12 * max(1.0, np.max(np.abs(a)))


def test_scalar_problems_converge_from_random_starts():
    _, _, factored, _, G = exact_setup(S=1, R=2, mode="one_sided")
    fn = make_residual_fn("one_sided", G)
    for seed in range(100):
        sol = solve_transform(fn, 1, TransformOptions(max_restarts=1, tol=1e-10), make_rng(seed, "s"))
        assert sol.converged and sol.resid_norm < 1e-10
        assert abs(abs(sol.T[0, 0]) - np.linalg.norm(G[0])) < 1e-8


def test_two_sided_scalar_case_consistent():
    _, truth, factored, _, G = exact_setup(S=1, R=1)
    sol = solve_transform(make_residual_fn("two_sided", G, factored[0].M_tilde), 1, rng=make_rng(0, "t"))
    assert sol.converged
    M_hat, H_hat = reconstruct_vectors(factored[0], G, sol.T)
    assert aligned_errors(truth, M_hat, H_hat).max_error < 1e-6


def test_two_sided_exact_data_monte_carlo_with_oracle_restarts():
    ok = 0
    for seed in range(10):
        _, truth, factored, _, G = exact_setup(S=2, R=2, seed=seed)

        def accept(T):
            return aligned_errors(truth, *reconstruct_vectors(factored[0], G, T)).max_error < 1e-6

        sol = solve_transform(make_residual_fn("two_sided", G, factored[0].M_tilde), 2, rng=make_rng(seed, "t"),
                              accept=accept)
        ok += sol.converged and accept(sol.T)
    assert ok >= 8


def test_spurious_roots_are_flagged():
    # with an acceptance test that rejects everything, converged roots are spurious
    _, _, factored, _, G = exact_setup(S=2, R=3, mode="one_sided")
    sol = solve_transform(make_residual_fn("one_sided", G), 2, TransformOptions(max_restarts=3),
                          make_rng(0, "sp"), accept=lambda T: False)
    assert sol.converged and sol.spurious
    assert len(sol.attempts) == 3 and sol.restarts_used == 2


def test_nonconvergence_is_reported_not_raised():
    sol = solve_transform(lambda T: np.array([abs(T[0, 0]) ** 2 + 1.0]), 1,
                          TransformOptions(max_restarts=2, max_iters=20), make_rng(0, "nc"))
    assert not sol.converged and not sol.spurious
    assert np.isfinite(sol.cond)
