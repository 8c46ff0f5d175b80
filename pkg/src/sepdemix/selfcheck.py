"""Oracle self-tests run by ``sepdemix check``.

Each check compares an implementation against an independent reference on
random instances and returns ``(name, passed, detail)``.
"""
import numpy as np

from . import kernels
from .matrix_recovery import objective_and_gradient
from .measurement import build_lifted_operator, circular_convolve, dft, forward, adjoint, lift
from .model import ProblemConfig, complex_normal, generate_instance, make_rng
from .vector_recovery import (
    cross_transforms,
    factorize_rank_s,
    make_residual_fn,
    true_transform,
)


def check_adjoint(seed=0, trials=100, tol=1e-10):
    worst = 0.0
    for L, K, N in ((8, 3, 2), (64, 5, 6), (257, 7, 9)):
        cfg = ProblemConfig(L=L, K=K, N=N, S=1, R=1, seed=seed)
        for t in range(trials):
            rng = make_rng(seed, "check-adjoint", L, t)
            coding, _, _ = generate_instance(cfg.replace(seed=seed + t), random_basis=True)
            op = build_lifted_operator(coding)
            Z = complex_normal(rng, (K, N))
            y = complex_normal(rng, L)
            lhs = np.vdot(y, forward(op, Z))
            rhs = np.vdot(adjoint(op, y), Z)
            worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(Z) * np.linalg.norm(y)))
    return "adjoint identity", worst < tol, f"max normalized gap {worst:.2e} (tol {tol:g})"


def check_fourier_time(seed=0, trials=100, tol=1e-9):
    worst = 0.0
    for L, K, N in ((8, 3, 2), (64, 5, 6), (257, 7, 9)):
        cfg = ProblemConfig(L=L, K=K, N=N, S=1, R=1)
        for t in range(trials):
            rng = make_rng(seed, "check-conv", L, t)
            coding, _, _ = generate_instance(cfg.replace(seed=seed + t), random_basis=True)
            op = build_lifted_operator(coding)
            m = complex_normal(rng, N)
            h = complex_normal(rng, K)
            y_time = circular_convolve(coding.C @ m, coding.B @ h, method="direct")
            ref = dft(y_time)
            got = forward(op, lift(m, h))
            worst = max(worst, np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
    return "forward(lift) vs dft(conv)", worst < tol, f"max relative deviation {worst:.2e} (tol {tol:g})"


def check_gradient(seed=0, points=20, tol=1e-5):
    rng = make_rng(seed, "check-grad")
    cfg = ProblemConfig(L=32, K=4, N=5, S=2, R=2, seed=seed)
    coding, _, meas = generate_instance(cfg)
    op = build_lifted_operator(coding)
    y = meas.y_hat[0]
    worst = 0.0
    for _ in range(points):
        U = complex_normal(rng, (op.K, 2))
        V = complex_normal(rng, (op.N, 2))
        lam = 0.1
        _, gU, gV = objective_and_gradient(op, U, V, y, lam)
        dU = complex_normal(rng, U.shape)
        dV = complex_normal(rng, V.shape)
        eps = 1e-6
        fp = objective_and_gradient(op, U + eps * dU, V + eps * dV, y, lam)[0]
        fm = objective_and_gradient(op, U - eps * dU, V - eps * dV, y, lam)[0]
        fd = (fp - fm) / (2 * eps)
        an = np.vdot(gU, dU).real + np.vdot(gV, dV).real
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    return "gradient vs central differences", worst < tol, f"max relative error {worst:.2e} (tol {tol:g})"


def check_transform_oracle(seed=0, instances=50, tol=1e-8):
    worst = 0.0
    for i in range(instances):
        S = 1 + i % 3
        mode = ("one_sided", "two_sided")[i % 2]
        cfg = ProblemConfig(L=40, K=5, N=6, S=S, R=S + 1, mode=mode, seed=seed * 1000 + i)
        _, truth, _ = generate_instance(cfg)
        factored = [factorize_rank_s(truth.lifted(r), S) for r in range(cfg.R)]
        _, G = cross_transforms(factored)
        T = true_transform(factored[0], truth.M)
        res = make_residual_fn(mode, G, factored[0].M_tilde)(T)
        worst = max(worst, float(np.max(np.abs(res))))
    return "transform residual at the true T", worst < tol, f"max residual {worst:.2e} (tol {tol:g})"


def check_kernel_backends(seed=0, tol=1e-10):
    if kernels.compiled_backend is None:
        return "compiled kernels match numpy", True, "compiled backend unavailable; skipped"
    rng = make_rng(seed, "check-backends")
    py, cy = kernels.python_backend, kernels.compiled_backend
    b = complex_normal(rng, (24, 4))
    c = complex_normal(rng, (24, 5))
    U = complex_normal(rng, (4, 2))
    V = complex_normal(rng, (5, 2))
    y = complex_normal(rng, 24)
    a = py.factored_residual_grad(b, c, U, V, y, 2.0, 0.1)
    z = cy.factored_residual_grad(b, c, U, V, y, 2.0, 0.1)
    gap = max(abs(a[0] - z[0]) / abs(a[0]), np.max(np.abs(a[1] - z[1])), np.max(np.abs(a[2] - z[2])))
    x = complex_normal(rng, 17)
    w = complex_normal(rng, 17)
    gap = max(gap, np.max(np.abs(py.circular_convolve_direct(x, w) - cy.circular_convolve_direct(x, w))))
    return "compiled kernels match numpy", gap < tol, f"max deviation {gap:.2e} (tol {tol:g})"


CHECKS = (check_adjoint, check_fourier_time, check_gradient, check_transform_oracle, check_kernel_backends)


def run_checks(seed=0):
    return [check(seed=seed) for check in CHECKS]
