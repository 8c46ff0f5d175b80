"""Powell dogleg trust-region solver for nonlinear least squares.

Minimizes ``0.5 * ||F(x)||^2`` over real ``x``. The Jacobian is built by
forward differences. Rectangular (including underdetermined) systems are
handled with a minimum-norm Gauss-Newton step. Singular values of the
Jacobian below ``rcond * sigma_max`` are treated as zero: forward
differences only resolve the Jacobian to about ``rel_step``, so exact null
directions (e.g. phase gauges) otherwise surface as tiny singular values
and blow up the Gauss-Newton step.
"""
from dataclasses import dataclass

import numpy as np


@dataclass
class DoglegResult:
    x: np.ndarray
    fun: np.ndarray
    resid_norm: float
    iters: int
    nfev: int
    status: str  # "converged", "small_step", "small_gradient", "max_iters"

    @property
    def converged(self):
        return self.status == "converged"


def forward_difference_jacobian(F, x, f0, rel_step=1e-7):
    """Forward-difference Jacobian with step ``rel_step * max(|x_i|, 1)``."""
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xp[i] += h
        h = xp[i] - x[i]
        J[:, i] = (F(xp) - f0) / h
    return J


def dogleg_step(J, f, delta, rcond=1e-6):
    """Dogleg step for the linearized model ``||f + J p||`` within radius ``delta``."""
    p_gn = -np.linalg.lstsq(J, f, rcond=rcond)[0]
    gn_norm = np.linalg.norm(p_gn)
    if gn_norm <= delta:
        return p_gn
    g = J.T @ f
    Jg = J @ g
    gg = g @ g
    JgJg = Jg @ Jg
    if JgJg == 0.0 or gg == 0.0:
        return p_gn * (delta / gn_norm)
    p_sd = -(gg / JgJg) * g
    sd_norm = np.linalg.norm(p_sd)
    if sd_norm >= delta:
        return p_sd * (delta / sd_norm)
    # point on the segment p_sd + s (p_gn - p_sd) at distance delta
    d = p_gn - p_sd
    a = d @ d
    b = 2.0 * (p_sd @ d)
    c = p_sd @ p_sd - delta * delta
    s = (-b + np.sqrt(max(b * b - 4.0 * a * c, 0.0))) / (2.0 * a)
    return p_sd + s * d


def solve_dogleg(
    F, x0, tol=1e-8, max_iters=200, delta0=None, rel_step=1e-7, rcond=1e-6, xtol=1e-14, gtol=1e-16
):
    """Drive ``||F(x)||`` below ``tol`` by trust-region dogleg iterations."""
    x = np.array(x0, dtype=np.float64)
    f = np.asarray(F(x), dtype=np.float64)
    nfev = 1
    fnorm = np.linalg.norm(f)
    delta = delta0 if delta0 is not None else max(1.0, np.linalg.norm(x))
    status = "max_iters"
    it = 0
    while it < max_iters:
        if fnorm < tol:
            status = "converged"
            break
        J = forward_difference_jacobian(F, x, f, rel_step)
        nfev += x.size
        g = J.T @ f
        if np.linalg.norm(g) <= gtol * max(1.0, fnorm):
            status = "small_gradient"
            break
        p = dogleg_step(J, f, delta, rcond)
        pnorm = np.linalg.norm(p)
        x_new = x + p
        f_new = np.asarray(F(x_new), dtype=np.float64)
        nfev += 1
        fnorm_new = np.linalg.norm(f_new)
        predicted = fnorm**2 - np.linalg.norm(f + J @ p) ** 2
        actual = fnorm**2 - fnorm_new**2
        rho = actual / predicted if predicted > 0 else -1.0
        if rho < 0.25:
            delta = 0.25 * pnorm
        elif rho > 0.75 and pnorm >= 0.99 * delta:
            delta = 2.0 * delta
        if rho > 1e-4 and np.isfinite(fnorm_new):
            x, f, fnorm = x_new, f_new, fnorm_new
        it += 1
        if delta <= xtol * max(1.0, np.linalg.norm(x)):
            status = "converged" if fnorm < tol else "small_step"
            break
    else:
        if fnorm < tol:
            status = "converged"
    return DoglegResult(x=x, fun=f, resid_norm=float(fnorm), iters=it, nfev=nfev, status=status)
