"""Nonlinear DDAE systems in Hessenberg form and their linearization.

A system is

    x' = f(x, y, xd, yd)
    0  = g(x, y, xd, yd)

where ``xd[i], yd[i]`` are the states and algebraic variables delayed by
``delays[i].tau``.  Linearizing around an equilibrium on a grid of step
``h`` gives the matrix family ``E x' = A0 x + sum_k A_k x(t - k h)``.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, JacobianError, NoConvergence, SingularJacobian

_GRID_RTOL = 1e-9


@dataclass(frozen=True)
class DelaySpec:
    tau: float
    label: str = ""

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError(f"delay must be positive and finite, got {self.tau}")


def interpolation_split(tau: float, h: float) -> tuple[int, float]:
    """Grid index and weight for linear interpolation of a delayed sample.

    Returns ``(k, c)`` with ``k*h <= tau < (k+1)*h`` so that
    ``v(t - tau) ~= c*v_{n-k} + (1 - c)*v_{n-k-1}``.  Delays on the grid
    (within a relative 1e-9) return ``c = 1``.
    """
    if not (tau > 0 and h > 0):
        raise ConfigError("tau and h must be positive")
    ratio = tau / h
    nearest = round(ratio)
    if abs(ratio - nearest) <= _GRID_RTOL * max(1.0, ratio):
        return int(nearest), 1.0
    k = math.floor(ratio)
    return k, (k + 1) - ratio


# Signature of the residual maps: (x, y, xd, yd) -> array, where xd, yd are
# sequences with one delayed sample per DelaySpec, in declaration order.
ResidualMap = Callable[[np.ndarray, np.ndarray, Sequence[np.ndarray], Sequence[np.ndarray]], np.ndarray]
# (x, y, xd, yd) -> (J0, [J_1..J_m]); J0 is d(f, g)/d(x, y), J_i is d(f, g)/d(xd_i, yd_i).
JacobianMap = Callable[..., tuple]


@dataclass
class DdaeSystem:
    nu: int
    mu: int
    f: ResidualMap
    g: Optional[ResidualMap] = None
    delays: list = field(default_factory=list)
    history: Optional[Callable[[float], tuple]] = None
    jacobian: Optional[JacobianMap] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nu < 1 or self.mu < 0:
            raise ConfigError("need nu >= 1 and mu >= 0")
        if self.mu > 0 and self.g is None:
            raise ConfigError("algebraic equations g are required when mu > 0")
        self.delays = [d if isinstance(d, DelaySpec) else DelaySpec(float(d)) for d in self.delays]
        if self.history is None:
            zx, zy = np.zeros(self.nu), np.zeros(self.mu)
            self.history = lambda t: (zx, zy)

    @property
    def n(self) -> int:
        return self.nu + self.mu

    @property
    def m(self) -> int:
        return len(self.delays)

    @property
    def tau_max(self) -> float:
        return max((d.tau for d in self.delays), default=0.0)

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[: self.nu], z[self.nu :]

    def residual(self, z, lagged) -> np.ndarray:
        """Stacked ``(f, g)`` at ``z = (x, y)`` with delayed stacks ``lagged``."""
        x, y = self.split(z)
        xd = [np.asarray(v[: self.nu], dtype=float) for v in lagged]
        yd = [np.asarray(v[self.nu :], dtype=float) for v in lagged]
        fv = np.atleast_1d(np.asarray(self.f(x, y, xd, yd), dtype=float))
        gv = np.atleast_1d(np.asarray(self.g(x, y, xd, yd), dtype=float)) if self.mu else np.zeros(0)
        if fv.shape != (self.nu,) or gv.shape != (self.mu,):
            raise DimensionError(f"f/g returned shapes {fv.shape}, {gv.shape}; expected ({self.nu},), ({self.mu},)")
        return np.concatenate([fv, gv])

    def jacobians(self, z, lagged, analytic: bool = True):
        """``(J0, [J_i])`` at the given point, analytic when available."""
        if analytic and self.jacobian is not None:
            x, y = self.split(z)
            xd = [np.asarray(v[: self.nu], dtype=float) for v in lagged]
            yd = [np.asarray(v[self.nu :], dtype=float) for v in lagged]
            j0, jd = self.jacobian(x, y, xd, yd)
            return np.asarray(j0, dtype=float), [np.asarray(j, dtype=float) for j in jd]
        return fd_jacobians(self, z, lagged)

    def history_stack(self, t: float) -> np.ndarray:
        x, y = self.history(t)
        return np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float))])


def _fd_step(v):
    return max(1e-6, 1e-6 * abs(v))


def fd_jacobians(sys: DdaeSystem, z, lagged):
    """Central-difference Jacobians of the stacked residual."""
    z = np.asarray(z, dtype=float)
    lagged = [np.asarray(v, dtype=float) for v in lagged]
    n = sys.n

    def column(fun, vec, j):
        d = _fd_step(vec[j])
        vp, vm = vec.copy(), vec.copy()
        vp[j] += d
        vm[j] -= d
        return (fun(vp) - fun(vm)) / (2 * d)

    j0 = np.empty((n, n))
    for j in range(n):
        j0[:, j] = column(lambda v: sys.residual(v, lagged), z, j)
    jd = []
    for i in range(sys.m):
        ji = np.empty((n, n))

        def shifted(v, i=i):
            lag = list(lagged)
            lag[i] = v
            return sys.residual(z, lag)

        for j in range(n):
            ji[:, j] = column(shifted, lagged[i], j)
        jd.append(ji)
    if not (np.all(np.isfinite(j0)) and all(np.all(np.isfinite(j)) for j in jd)):
        raise JacobianError("finite-difference Jacobian has non-finite entries")
    return j0, jd


@dataclass(frozen=True)
class EquilibriumPoint:
    x0: np.ndarray
    y0: np.ndarray
    residual_norm: float

    @property
    def z0(self) -> np.ndarray:
        return np.concatenate([self.x0, self.y0])


def find_equilibrium(sys: DdaeSystem, guess=None, tol: float = 1e-12, max_iter: int = 50) -> EquilibriumPoint:
    """Newton on the residual with every delayed sample frozen at the iterate."""
    if guess is None:
        z = np.zeros(sys.n)
    else:
        gx, gy = guess
        gx = np.atleast_1d(np.asarray(gx, dtype=float))
        gy = np.atleast_1d(np.asarray(gy, dtype=float)) if sys.mu else np.zeros(0)
        if gx.shape != (sys.nu,) or gy.shape != (sys.mu,):
            raise DimensionError("equilibrium guess does not match (nu, mu)")
        z = np.concatenate([gx, gy])

    def frozen(v):
        return sys.residual(v, [v] * sys.m)

    res = frozen(z)
    norm = np.max(np.abs(res), initial=0.0)
    for _ in range(max_iter):
        if norm <= tol:
            break
        j0, jd = sys.jacobians(z, [z] * sys.m)
        jac = j0 + sum(jd, np.zeros_like(j0))
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1e14:
            raise SingularJacobian("equilibrium Newton matrix is rank-deficient")
        dz = np.linalg.solve(jac, -res)
        step = 1.0
        for _halving in range(11):
            trial = z + step * dz
            tres = frozen(trial)
            tnorm = np.max(np.abs(tres), initial=0.0)
            if np.isfinite(tnorm) and tnorm < norm:
                break
            step *= 0.5
        z, res, norm = trial, tres, tnorm
    if not norm <= tol:
        raise NoConvergence(f"equilibrium not found; residual {norm:.3e}", residual=norm)
    x0, y0 = sys.split(z)
    return EquilibriumPoint(x0.copy(), y0.copy(), float(norm))


@dataclass
class LinearDelayModel:
    """``E x' = A0 x + sum_{k=1..r} A_k x(t - k h)`` with ``E = diag(I_nu, 0_mu)``."""

    E: np.ndarray
    A0: np.ndarray
    Ak: list
    h: float

    def __post_init__(self):
        self.E = np.atleast_2d(np.asarray(self.E, dtype=float))
        self.A0 = np.atleast_2d(np.asarray(self.A0, dtype=float))
        self.Ak = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.Ak]
        n = self.E.shape[0]
        if self.E.shape != (n, n) or self.A0.shape != (n, n):
            raise DimensionError("E and A0 must be square and of equal size")
        if not self.Ak:
            self.Ak = [np.zeros((n, n))]
        if any(a.shape != (n, n) for a in self.Ak):
            raise DimensionError("every A_k must match the size of A0")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigError("h must be positive")
        d = np.diag(self.E)
        nu = int(np.sum(d == 1.0))
        expected = np.diag(np.r_[np.ones(nu), np.zeros(n - nu)])
        if not np.array_equal(self.E, expected) or nu < 1:
            raise ConfigError("E must have the block form diag(I_nu, 0_mu) with nu >= 1")

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def nu(self) -> int:
        return int(np.trace(self.E))

    @property
    def mu(self) -> int:
        return self.n - self.nu

    @property
    def r(self) -> int:
        return len(self.Ak)

    def with_delay_scale(self, beta: float) -> "LinearDelayModel":
        return LinearDelayModel(self.E, self.A0, [beta * a for a in self.Ak], self.h)

    def as_system(self, history=None) -> DdaeSystem:
        """Realize the linear model as a DDAE with delays ``k*h``."""
        ks = [k for k, a in enumerate(self.Ak, start=1) if np.any(a)]
        nu = self.nu
        A0, Ak = self.A0, [self.Ak[k - 1] for k in ks]

        def full(x, y, xd, yd):
            z = np.concatenate([x, y])
            out = A0 @ z
            for a, vx, vy in zip(Ak, xd, yd):
                out = out + a @ np.concatenate([vx, vy])
            return out

        def jac(x, y, xd, yd):
            return A0, Ak

        return DdaeSystem(
            nu=nu,
            mu=self.mu,
            f=lambda x, y, xd, yd: full(x, y, xd, yd)[:nu],
            g=(lambda x, y, xd, yd: full(x, y, xd, yd)[nu:]) if self.mu else None,
            delays=[DelaySpec(k * self.h, f"k{k}") for k in ks],
            history=history,
            jacobian=jac,
            name="linear",
        )

    def to_dict(self) -> dict:
        return {"E": self.E.tolist(), "A0": self.A0.tolist(), "Ak": [a.tolist() for a in self.Ak], "h": self.h}


def history_depth(tau_max: float, h: float) -> int:
    """Summation limit ``r`` with ``(r-1) h < tau_max <= r h`` (at least 1)."""
    if tau_max <= 0:
        return 1
    k, c = interpolation_split(tau_max, h)
    return max(1, k if c == 1.0 else k + 1)


def linearize(sys: DdaeSystem, eq: EquilibriumPoint, h: float, analytic: bool = True) -> LinearDelayModel:
    """Jacobian matrices of the system on a step-``h`` grid.

    Off-grid delays are spread over the two neighbouring grid lags with the
    interpolation weights; sub-step delays put their near share into ``A0``.
    """
    if eq.residual_norm > 1e-8:
        raise ConfigError(f"equilibrium residual {eq.residual_norm:.2e} exceeds 1e-8")
    if not h > 0:
        raise ConfigError("h must be positive")
    z0 = eq.z0
    j0, jd = sys.jacobians(z0, [z0] * sys.m, analytic=analytic)
    n = sys.n
    if sys.mu:
        gy = j0[sys.nu :, sys.nu :]
        if np.linalg.matrix_rank(gy) < sys.mu:
            warnings.warn("g_y is singular at the equilibrium; the DDAE is not index-1 there", RuntimeWarning)
    r = history_depth(sys.tau_max, h)
    A0 = j0.copy()
    Ak = [np.zeros((n, n)) for _ in range(r)]

    def add(k, mat):
        if k == 0:
            A0[...] += mat
        else:
            Ak[k - 1] += mat

    for delay, ji in zip(sys.delays, jd):
        k, c = interpolation_split(delay.tau, h)
        add(k, c * ji)
        if c < 1.0:
            add(k + 1, (1.0 - c) * ji)
    E = np.diag(np.r_[np.ones(sys.nu), np.zeros(sys.mu)])
    return LinearDelayModel(E, A0, Ak, h)


def reference_step(delays, cap: float = 0.1) -> float:
    """A step on which every delay is an exact grid multiple (at most ``cap``)."""
    taus = [Fraction(d.tau if isinstance(d, DelaySpec) else d).limit_denominator(10**6) for d in delays]
    if not taus:
        return cap
    num = 0
    den = 1
    for t in taus:
        den = den * t.denominator // math.gcd(den, t.denominator)
    for t in taus:
        num = math.gcd(num, t.numerator * (den // t.denominator))
    step = num / den
    return step / math.ceil(step / cap - 1e-12)
