"""Independent reference computations used by the test suite."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import lambertw

from ddae_theta.model import LinearDelayModel

# x' = -x - 0.5 x(t-1), x = 1 on [-1, 0]; x(5) from the exact piecewise
# solution (method of steps carried out symbolically, see test_integrator).
MOS_X5 = 0.001565795604900298133654500

# rightmost root of s = -1 - 0.5 exp(-s): s = -1 + W0(-e/2)
LAMBERT_ROOT = complex(-1.0 + lambertw(-0.5 * np.e, 0))


def method_of_steps(a, b, phi, t_end):
    """Exact x(t_end) of ``x' = a x + b x(t - 1)`` with constant history (sympy)."""
    import sympy as sp

    t, s = sp.symbols("t s")
    a, b = sp.nsimplify(a), sp.nsimplify(b)
    prev = sp.nsimplify(phi)
    x0 = prev
    for k in range(int(t_end)):
        forcing = b * prev.subs(t, s - 1)
        sol = sp.exp(a * (t - k)) * x0 + sp.integrate(sp.exp(a * (t - s)) * forcing, (s, k, t))
        prev = sp.expand(sol)
        x0 = prev.subs(t, k + 1)
    return float(sp.N(x0, 30))


def companion_spectrum(m: LinearDelayModel, theta: float) -> np.ndarray:
    """Eigenvalues of the one-step companion matrix of the Theta recurrence.

    The recurrence is assembled row by row from its definition rather than
    from the package's block formulas: differential rows use the Theta
    quadrature, algebraic rows are enforced at the new time point.
    """
    n, nu, r, h = m.n, m.nu, m.r, m.h
    A = [m.A0, *m.Ak]
    P = np.diag([1.0] * nu + [0.0] * (n - nu))
    Q = np.eye(n) - P
    lhs = P @ (np.eye(n) - h * (1 - theta) * A[0]) - Q @ A[0]
    rhs = [np.zeros((n, n)) for _ in range(r + 1)]
    rhs[0] += P @ (np.eye(n) + h * theta * A[0])
    for k in range(1, r + 1):
        rhs[k - 1] += P @ (h * (1 - theta) * A[k]) + Q @ A[k]
        rhs[k] += P @ (h * theta * A[k])
    inv = np.linalg.inv(lhs)
    C = np.zeros(((r + 1) * n, (r + 1) * n))
    for j in range(r + 1):
        C[:n, j * n:(j + 1) * n] = inv @ rhs[j]
    C[n:, :-n] = np.eye(r * n)
    return np.linalg.eigvals(C)


def match_sets(a, b) -> float:
    """Largest relative distance under the optimal one-to-one pairing."""
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    if a.size != b.size:
        return np.inf
    if a.size == 0:
        return 0.0
    d = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(d)
    return float(np.max(d[i, j] / np.maximum(1.0, np.abs(a[i]))))


def random_linear_model(rng, nu_max=4, mu_max=2, r_max=4, h=None) -> LinearDelayModel:
    nu = int(rng.integers(1, nu_max + 1))
    mu = int(rng.integers(0, mu_max + 1))
    r = int(rng.integers(1, r_max + 1))
    n = nu + mu
    E = np.diag([1.0] * nu + [0.0] * mu)
    A0 = rng.normal(size=(n, n))
    if mu:
        A0[nu:, nu:] += 3.0 * np.eye(mu)  # keep g_y comfortably nonsingular
    Ak = [0.5 * rng.normal(size=(n, n)) for _ in range(r)]
    return LinearDelayModel(E, A0, Ak, float(rng.uniform(0.05, 0.5)) if h is None else h)


def fitted_order(hs, errs) -> float:
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
