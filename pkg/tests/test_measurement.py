import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepdemix.errors import ValidationError
from sepdemix.measurement import (
    DIRECT_CONVOLUTION_MAX,
    adjoint,
    build_lifted_operator,
    circular_convolve,
    dft,
    dft_direct,
    forward,
    forward_naive,
    idft,
    lift,
    lift_pairs,
)
from sepdemix.model import CodingMatrices, ProblemConfig, generate_instance


def cgauss(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def brute_conv(x, w):
    L = len(x)
    return np.array([sum(x[k] * w[(n - k) % L] for k in range(L)) for n in range(L)])


def make_op(L, K, N, seed=0, random_basis=True):
    cfg = ProblemConfig(L=L, K=K, N=N, S=1, R=1, seed=seed)
    coding, _, _ = generate_instance(cfg, random_basis=random_basis)
    return coding, build_lifted_operator(coding)


def test_impulse_is_identity():
    rng = np.random.default_rng(1)
    x = cgauss(rng, 12)
    d = np.zeros(12, complex)
    d[0] = 1
    np.testing.assert_allclose(circular_convolve(x, d), x, atol=1e-14)


@pytest.mark.parametrize("j", [1, 5, 11])
def test_shifted_impulse_rolls(j):
    rng = np.random.default_rng(j)
    x = cgauss(rng, 12)
    d = np.zeros(12, complex)
    d[j] = 1
    np.testing.assert_allclose(circular_convolve(x, d), np.roll(x, j), atol=1e-14)


@pytest.mark.parametrize("L", [1, 7, 16, 33, 64])
def test_fft_and_direct_paths_match_brute_force(L):
    rng = np.random.default_rng(L)
    x, w = cgauss(rng, L), cgauss(rng, L)
    ref = brute_conv(x, w)
    np.testing.assert_allclose(circular_convolve(x, w, method="direct"), ref, atol=1e-12)
    np.testing.assert_allclose(circular_convolve(x, w, method="fft"), ref, atol=1e-12)


def test_auto_switches_at_threshold():
    rng = np.random.default_rng(0)
    for L in (DIRECT_CONVOLUTION_MAX, DIRECT_CONVOLUTION_MAX + 1):
        x, w = cgauss(rng, L), cgauss(rng, L)
        np.testing.assert_allclose(circular_convolve(x, w), brute_conv(x, w), atol=1e-11)


def test_convolution_length_mismatch():
    with pytest.raises(ValidationError):
        circular_convolve(np.ones(4), np.ones(5))
    with pytest.raises(ValueError):
        circular_convolve(np.ones(4), np.ones(4), method="bogus")


@pytest.mark.parametrize("L", [1, 8, 64, 257])
def test_dft_matches_direct_and_is_unitary(L):
    rng = np.random.default_rng(L)
    x = cgauss(rng, L)
    np.testing.assert_allclose(dft(x), dft_direct(x), atol=1e-11)
    assert abs(np.linalg.norm(dft(x)) - np.linalg.norm(x)) < 1e-12 * np.linalg.norm(x)
    np.testing.assert_allclose(idft(dft(x)), x, atol=1e-12)


def test_convolution_theorem_constant():
    rng = np.random.default_rng(3)
    L = 20
    x, w = cgauss(rng, L), cgauss(rng, L)
    np.testing.assert_allclose(dft(brute_conv(x, w)), np.sqrt(L) * dft(x) * dft(w), atol=1e-11)


@pytest.mark.parametrize("L,K,N", [(8, 3, 2), (64, 5, 6), (257, 7, 9)])
def test_forward_lift_is_dft_of_time_convolution(L, K, N):
    coding, op = make_op(L, K, N)
    rng = np.random.default_rng(L)
    for _ in range(20):
        m, h = cgauss(rng, N), cgauss(rng, K)
        ref = dft(brute_conv(coding.C @ m, coding.B @ h) if L <= 64 else circular_convolve(coding.C @ m, coding.B @ h))
        got = forward(op, lift(m, h))
        assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) < 1e-9


def test_forward_matches_naive_rows():
    _, op = make_op(8, 3, 4)
    rng = np.random.default_rng(0)
    Z = cgauss(rng, 3, 4)
    np.testing.assert_allclose(forward(op, Z), forward_naive(op, Z), atol=1e-13)


def test_forward_matches_dense_matrix():
    _, op = make_op(16, 3, 4)
    Z = cgauss(np.random.default_rng(1), 3, 4)
    np.testing.assert_allclose(op.to_dense() @ Z.ravel(), forward(op, Z), atol=1e-12)
    assert op.shape == (16, 12)


def test_forward_and_adjoint_of_zero():
    _, op = make_op(8, 3, 2)
    assert not np.any(forward(op, np.zeros((3, 2))))
    assert not np.any(adjoint(op, np.zeros(8)))


def test_linearity():
    _, op = make_op(32, 4, 5)
    rng = np.random.default_rng(2)
    Z1, Z2 = cgauss(rng, 4, 5), cgauss(rng, 4, 5)
    a, b = 0.3 - 2j, 1.7 + 0.2j
    lhs = forward(op, a * Z1 + b * Z2)
    rhs = a * forward(op, Z1) + b * forward(op, Z2)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs))


def test_superposition_in_h_with_identity_basis():
    L = 6
    C = cgauss(np.random.default_rng(0), L, 3)
    op = build_lifted_operator(CodingMatrices(B=np.eye(L, dtype=complex), C=C))
    rng = np.random.default_rng(1)
    m = cgauss(rng, 3)
    h1, h2 = cgauss(rng, L), cgauss(rng, L)
    np.testing.assert_allclose(
        forward(op, lift(m, h1 + 2 * h2)), forward(op, lift(m, h1)) + 2 * forward(op, lift(m, h2)), atol=1e-12
    )


@pytest.mark.parametrize("L,K,N", [(8, 3, 2), (64, 5, 6), (257, 7, 9)])
def test_adjoint_identity(L, K, N):
    _, op = make_op(L, K, N)
    rng = np.random.default_rng(L + 1)
    for _ in range(100):
        Z, y = cgauss(rng, K, N), cgauss(rng, L)
        gap = abs(np.vdot(y, forward(op, Z)) - np.vdot(adjoint(op, y), Z))
        assert gap / (np.linalg.norm(Z) * np.linalg.norm(y)) < 1e-10


def test_adjoint_of_basis_vector_has_rank_one():
    _, op = make_op(16, 4, 5)
    for l in (0, 7, 15):
        e = np.zeros(16, complex)
        e[l] = 1
        assert np.linalg.matrix_rank(adjoint(op, e), tol=1e-10) == 1


def test_shape_checks():
    _, op = make_op(8, 3, 2)
    with pytest.raises(ValidationError):
        forward(op, np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        adjoint(op, np.zeros(7))
    with pytest.raises(ValidationError):
        build_lifted_operator(CodingMatrices(B=np.eye(8, 3), C=np.ones((7, 2))))


def test_operator_rows_are_immutable():
    _, op = make_op(8, 3, 2)
    with pytest.raises(ValueError):
        op.b_rows[0, 0] = 1.0
    assert op.describe()["convention_constant"] == pytest.approx(np.sqrt(8))


def test_lift_orientation_and_rank():
    rng = np.random.default_rng(0)
    m, h = cgauss(rng, 4), cgauss(rng, 3)
    Z = lift(m, h)
    assert Z.shape == (3, 4)
    assert np.linalg.matrix_rank(Z) == 1
    np.testing.assert_allclose(lift_pairs(m[:, None], h[:, None]), Z)
    M, H = cgauss(rng, 6, 3), cgauss(rng, 5, 3)
    Zs = lift_pairs(M, H)
    np.testing.assert_allclose(Zs, sum(lift(M[:, s], H[:, s]) for s in range(3)), atol=1e-13)
    assert np.linalg.matrix_rank(Zs) == 3


@settings(max_examples=30, deadline=None)
@given(L=st.integers(2, 40), K=st.integers(1, 6), N=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_defining_property_random_shapes(L, K, N, seed):
    K, N = min(K, L), min(N, L)
    coding, op = make_op(L, K, N, seed=seed)
    rng = np.random.default_rng(seed)
    m, h = cgauss(rng, N), cgauss(rng, K)
    ref = dft(brute_conv(coding.C @ m, coding.B @ h))
    got = forward(op, lift(m, h))
    assert np.max(np.abs(got - ref)) <= 1e-9 * max(np.max(np.abs(ref)), 1e-300)
