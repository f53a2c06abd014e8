"""Characteristic roots of linear delay models and their Theta-method deformation.

Two spectra are compared:

* the exact roots ``s`` of ``det(s E - A0 - sum_k A_k exp(-s k h)) = 0``,
  seeded by Chebyshev collocation of the delay system and polished by
  Newton on the nonlinear eigenpair;
* the roots ``z`` of the block pencil ``z F - G`` obtained by applying the
  Theta method to the same linear model, mapped back with ``s = ln(z)/h``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSpectrum,
    DimensionError,
    EigensolveError,
    NoSignChange,
    TrackingLost,
)
from .model import LinearDelayModel
from .scalar import ThetaParams

log = logging.getLogger(__name__)

INFINITE_BETA_RTOL = 1e-12
ZERO_ALPHA_RTOL = 1e-13
REFINED_RESIDUAL_TOL = 1e-8


def canonical_order(roots) -> np.ndarray:
    """Sort by real part descending, then imaginary part descending."""
    roots = np.asarray(roots, dtype=complex)
    return roots[_order(roots)]


def _order(roots):
    # rounding keeps conjugate pairs in a fixed (+Im, -Im) order
    scale = max(1.0, float(np.max(np.abs(roots), initial=0.0)))
    re_key = np.round(roots.real / scale, 10)
    return np.lexsort((-roots.imag, -re_key))


@dataclass
class EigenSpectrum:
    roots: np.ndarray
    residuals: np.ndarray
    domain: str = "s"

    def __post_init__(self):
        if self.domain not in ("s", "z"):
            raise ConfigError("domain must be 's' or 'z'")
        roots = np.asarray(self.roots, dtype=complex)
        res = np.asarray(self.residuals, dtype=float)
        idx = _order(roots)
        self.roots, self.residuals = roots[idx], res[idx]

    def __len__(self):
        return self.roots.size

    def rightmost(self) -> complex:
        if not self.roots.size:
            raise DegenerateSpectrum("empty spectrum")
        return complex(self.roots[0])

    def max_real(self) -> float:
        return float(self.roots.real.max()) if self.roots.size else -math.inf


# --------------------------------------------------------------------------
# exact spectrum


def characteristic_matrix(m: LinearDelayModel, s: complex) -> np.ndarray:
    out = s * m.E - m.A0
    for k, a in enumerate(m.Ak, start=1):
        if np.any(a):
            out = out - a * np.exp(-s * k * m.h)
    return out


def _characteristic_derivative(m: LinearDelayModel, s: complex) -> np.ndarray:
    out = m.E.astype(complex)
    for k, a in enumerate(m.Ak, start=1):
        if np.any(a):
            out = out + (k * m.h) * a * np.exp(-s * k * m.h)
    return out


def root_residual(m: LinearDelayModel, s: complex, v) -> float:
    """Backward error ``|T(s) v| / (|v| (|s||E| + |A0| + sum |A_k| |e^{-skh}|))``."""
    v = np.asarray(v, dtype=complex)
    scale = abs(s) * np.linalg.norm(m.E, 2) + np.linalg.norm(m.A0, 2)
    for k, a in enumerate(m.Ak, start=1):
        if np.any(a):
            scale += np.linalg.norm(a, 2) * abs(np.exp(-s * k * m.h))
    return float(np.linalg.norm(characteristic_matrix(m, s) @ v) / (np.linalg.norm(v) * max(scale, 1e-300)))


def cheb(n: int):
    """Chebyshev extreme points on [-1, 1] (descending) and differentiation matrix."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.r_[2.0, np.ones(n - 1), 2.0] * (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return x, d


def _barycentric_row(x, xi):
    """Lagrange basis values at ``xi`` for Chebyshev extreme points ``x``."""
    n = x.size - 1
    w = (-1.0) ** np.arange(n + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    diff = xi - x
    hit = np.nonzero(np.abs(diff) < 1e-14)[0]
    if hit.size:
        row = np.zeros(n + 1)
        row[hit[0]] = 1.0
        return row
    t = w / diff
    return t / t.sum()


def collocation_pencil(m: LinearDelayModel, n_nodes: int):
    """Matrices ``(A, B)`` of the collocated eigenproblem ``A u = s B u``."""
    n = m.n
    tau = m.r * m.h
    x, d = cheb(n_nodes)
    d = d * (2.0 / tau)
    big_a = np.zeros(((n_nodes + 1) * n, (n_nodes + 1) * n))
    big_b = np.eye((n_nodes + 1) * n)
    big_b[:n, :n] = m.E
    big_a[:n, :n] = m.A0
    for k, a in enumerate(m.Ak, start=1):
        if not np.any(a):
            continue
        row = _barycentric_row(x, 1.0 - 2.0 * k / m.r)
        big_a[:n, :] += np.kron(row[None, :], a)
    big_a[n:, :] = np.kron(d[1:, :], np.eye(n))
    return big_a, big_b


def refine_root(m: LinearDelayModel, s0: complex, v0=None, tol: float = 1e-13, max_iter: int = 50):
    """Newton on ``T(s) v = 0, c^H v = 1``; returns ``(s, v, residual)``."""
    s = complex(s0)
    n = m.n
    if v0 is None or not np.linalg.norm(v0) > 0:
        _, _, vh = np.linalg.svd(characteristic_matrix(m, s))
        v0 = vh[-1].conj()
    v = np.asarray(v0, dtype=complex) / np.linalg.norm(v0)
    c = v.copy()
    res = root_residual(m, s, v)
    for _ in range(max_iter):
        if res <= tol:
            break
        t = characteristic_matrix(m, s)
        jac = np.zeros((n + 1, n + 1), dtype=complex)
        jac[:n, :n] = t
        jac[:n, n] = _characteristic_derivative(m, s) @ v
        jac[n, :n] = c.conj()
        rhs = np.r_[t @ v, c.conj() @ v - 1.0]
        try:
            delta = np.linalg.solve(jac, -rhs)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular refinement system at s={s}", root=s, residual=res) from exc
        if not np.all(np.isfinite(delta)):
            raise ConvergenceError(f"refinement diverged at s={s}", root=s, residual=res)
        v = v + delta[:n]
        s = s + delta[n]
        if s.real * m.r * m.h < -600.0:  # exp(-s tau) would overflow
            raise ConvergenceError(f"refinement ran off to Re(s)={s.real:.3g}", root=s0, residual=res)
        new_res = root_residual(m, s, v)
        if abs(delta[n]) <= 1e-15 * max(1.0, abs(s)) and new_res <= REFINED_RESIDUAL_TOL:
            res = new_res
            break
        res = new_res
    if not (res <= REFINED_RESIDUAL_TOL and np.isfinite(s)):
        raise ConvergenceError(f"refinement stalled at s={s} with residual {res:.2e}", root=s0, residual=res)
    return s, v / np.linalg.norm(v), res


def exact_spectrum(m: LinearDelayModel, N: int = 20, sigma_min: Optional[float] = None) -> EigenSpectrum:
    """Characteristic roots with ``Re(s) >= sigma_min``.

    Collocation on ``N + 1`` Chebyshev nodes over ``[-r h, 0]`` only seeds
    the search; each candidate is refined to a backward error below 1e-8
    and candidates that fail to refine are dropped.
    """
    if N < 5:
        raise ConfigError("collocation size N must be at least 5")
    tau = m.r * m.h
    if sigma_min is None:
        sigma_min = -50.0 / tau
    big_a, big_b = collocation_pencil(m, N)
    alpha, beta, vecs = _eig_homogeneous(big_a, big_b)
    finite = np.abs(beta) > INFINITE_BETA_RTOL * np.linalg.norm(big_b, 2)
    roots, residuals = [], []
    n = m.n
    for j in np.nonzero(finite)[0]:
        s0 = alpha[j] / beta[j]
        if not np.isfinite(s0) or s0.real < sigma_min - 1.0:
            continue
        try:
            s, _, res = refine_root(m, s0, vecs[:n, j])
        except ConvergenceError as exc:
            log.debug("dropping unrefined root %s (residual %s)", exc.root, exc.residual)
            continue
        if s.real < sigma_min:
            continue
        if any(abs(s - q) <= 1e-7 * (1.0 + abs(s)) for q in roots):
            continue
        roots.append(s)
        residuals.append(res)
    return EigenSpectrum(np.array(roots, dtype=complex), np.array(residuals), "s")


def _eig_homogeneous(a, b):
    """Generalized eigenvalues ``a v = lam b v`` as ``(alpha, beta, vecs)``."""
    try:
        w, vr = sla.eig(a, b, homogeneous_eigvals=True, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise EigensolveError(str(exc)) from exc
    return w[0], w[1], vr


# --------------------------------------------------------------------------
# Theta-discretized pencil


@dataclass
class DiscretePencil:
    """Block pencil ``F y_{n+1} = G y_n`` over ``y_n = (x_n, x_{n-1}, ..., x_{n-r})``."""

    F: np.ndarray
    G: np.ndarray
    block_dim: int
    r: int
    theta: float
    h: float
    M: np.ndarray = field(repr=False, default=None)
    D: list = field(repr=False, default_factory=list)


def recurrence_blocks(m: LinearDelayModel, p: ThetaParams):
    """``M`` and ``[D_0..D_r]`` with ``M x_{n+1} = sum_j D_j x_{n-j}``."""
    if not math.isclose(m.h, p.h, rel_tol=1e-12):
        raise ConfigError(f"model step {m.h} differs from method step {p.h}")
    n, r = m.n, m.r
    th, h = p.theta, p.h
    E = m.E
    alg = np.eye(n) - E
    M = E - h * (1.0 - th) * (E @ m.A0) - h * (alg @ m.A0)
    A = E + h * th * (E @ m.A0)
    B = [h * (1.0 - th) * (E @ a) + h * (alg @ a) for a in m.Ak]  # B[k-1] multiplies x_{n+1-k}
    C = [h * th * (E @ a) for a in m.Ak]  # C[k-1] multiplies x_{n-k}
    D = [A + B[0]]
    for j in range(1, r):
        D.append(B[j] + C[j - 1])
    D.append(C[r - 1])
    for blk in [M, *D]:
        if blk.shape != (n, n):
            raise DimensionError("inconsistent block sizes in discrete pencil")
    return M, D


def build_discrete_pencil(m: LinearDelayModel, p: ThetaParams) -> DiscretePencil:
    M, D = recurrence_blocks(m, p)
    n, r = m.n, m.r
    size = (r + 1) * n
    F = np.zeros((size, size))
    G = np.zeros((size, size))
    F[: r * n, n:] = np.eye(r * n)
    F[r * n :, :n] = M
    F[r * n :, n:] = -np.hstack(D[:r])
    G[: r * n, : r * n] = np.eye(r * n)
    G[r * n :, r * n :] = D[r]
    return DiscretePencil(F, G, n, r, p.theta, p.h, M, D)


def pencil_eigenvalues(dp: DiscretePencil, drop_zero: bool = True) -> EigenSpectrum:
    """Finite ``z`` with ``G v = z F v``; infinite and (optionally) zero roots removed."""
    alpha, beta, vecs = _eig_homogeneous(dp.G, dp.F)
    f_norm = np.linalg.norm(dp.F, 2)
    g_norm = np.linalg.norm(dp.G, 2)
    keep = np.abs(beta) > INFINITE_BETA_RTOL * f_norm
    if drop_zero:
        keep &= np.abs(alpha) > ZERO_ALPHA_RTOL * g_norm * np.maximum(np.abs(beta), 1e-300) / f_norm
    z = alpha[keep] / beta[keep]
    v = vecs[:, keep]
    res = [
        np.linalg.norm(dp.G @ v[:, j] - z[j] * (dp.F @ v[:, j]))
        / (np.linalg.norm(v[:, j]) * (g_norm + abs(z[j]) * f_norm))
        for j in range(z.size)
    ]
    return EigenSpectrum(z, np.array(res), "z")


def log_transform(z, h: float) -> np.ndarray:
    """``ln(z)/h`` on the principal branch, imaginary part in ``(-pi/h, pi/h]``."""
    z = np.asarray(z, dtype=complex)
    w = np.log(z)
    w = np.where(np.isclose(w.imag, -np.pi, rtol=0, atol=1e-15), w.real + 1j * np.pi, w)
    return w / h


def deformed_spectrum(dp: DiscretePencil) -> EigenSpectrum:
    zs = pencil_eigenvalues(dp, drop_zero=True)
    return EigenSpectrum(log_transform(zs.roots, dp.h), zs.residuals, "s")


# --------------------------------------------------------------------------
# comparison


def damping_ratio(s: complex) -> float:
    mag = abs(s)
    return -s.real / mag if mag > 0 else float("nan")


@dataclass(frozen=True)
class RootPair:
    exact: complex
    deformed: complex
    zeta: float
    zeta_hat: float
    distance: float
    frequency_drift: float
    damping_drift: float


@dataclass
class DeformationReport:
    pairs: list
    unmatched_exact: list
    unmatched_deformed: list

    def summary(self) -> dict:
        exact_max = max((p.exact.real for p in self.pairs), default=math.nan)
        return {
            "pairs": len(self.pairs),
            "unmatched_exact": len(self.unmatched_exact),
            "unmatched_deformed": len(self.unmatched_deformed),
            "max_distance": max((p.distance for p in self.pairs), default=0.0),
            "max_abs_damping_drift": max((abs(p.damping_drift) for p in self.pairs), default=0.0),
            "sign_disagreements": sum(
                1 for p in self.pairs if (p.exact.real < 0) != (p.deformed.real < 0)
            ),
            "max_real_exact_paired": exact_max,
        }


def default_radius(s: complex) -> float:
    return 0.1 * (1.0 + abs(s))


def deformation_report(exact: EigenSpectrum, deformed: EigenSpectrum, radius: Optional[float] = None) -> DeformationReport:
    """Mutual-nearest pairing of exact and deformed roots in the s-plane."""
    if exact.domain != "s" or deformed.domain != "s":
        raise ConfigError("both spectra must be in the s-domain")
    s_ex, s_df = exact.roots, deformed.roots
    pairs, used_ex, used_df = [], set(), set()
    if s_ex.size and s_df.size:
        dist = np.abs(s_ex[:, None] - s_df[None, :])
        near_df = dist.argmin(axis=1)
        near_ex = dist.argmin(axis=0)
        for i, j in enumerate(near_df):
            lim = default_radius(s_ex[i]) if radius is None else radius
            if near_ex[j] == i and dist[i, j] <= lim:
                s, sh = complex(s_ex[i]), complex(s_df[j])
                z, zh = damping_ratio(s), damping_ratio(sh)
                pairs.append(RootPair(s, sh, z, zh, abs(sh - s), sh.imag - s.imag, zh - z))
                used_ex.add(i)
                used_df.add(j)
    return DeformationReport(
        pairs,
        [complex(s) for i, s in enumerate(s_ex) if i not in used_ex],
        [complex(s) for j, s in enumerate(s_df) if j not in used_df],
    )


def stiffness_ratio(spectrum: EigenSpectrum) -> float:
    mags = np.abs(spectrum.roots)
    if mags.size == 0:
        raise DegenerateSpectrum("stiffness ratio of an empty spectrum")
    if mags.min() == 0:
        raise DegenerateSpectrum("spectrum contains a zero root")
    return float(mags.max() / mags.min())


# --------------------------------------------------------------------------
# theta matching


@dataclass
class ThetaMatch:
    theta: float
    s_exact: complex
    s_deformed: complex
    zeta: float
    zeta_hat: float
    bisection_steps: int

    @property
    def mismatch(self) -> float:
        return self.zeta_hat - self.zeta


def _deformed_roots(m: LinearDelayModel, theta: float) -> np.ndarray:
    return deformed_spectrum(build_discrete_pencil(m, ThetaParams(theta, m.h))).roots


def _nearest(roots, target, jump_limit):
    if roots.size == 0:
        raise TrackingLost("no finite deformed roots to track")
    j = int(np.argmin(np.abs(roots - target)))
    if abs(roots[j] - target) > jump_limit:
        raise TrackingLost(f"deformed root jumped from {target} to {roots[j]}")
    return complex(roots[j])


def theta_match(
    m: LinearDelayModel,
    target: complex,
    h: Optional[float] = None,
    theta_range=(0.0, 1.0),
    sweep_step: float = 1e-3,
    tol: float = 1e-6,
    max_bisect: int = 60,
) -> ThetaMatch:
    """Theta at which the tracked deformed root has the exact root's damping ratio.

    The deformed root nearest ``target`` at the theta closest to 0.5 is
    followed by nearest-neighbour continuation across the whole range on a
    ``sweep_step`` grid; the sign change of ``zeta_hat - zeta`` closest to
    the start is then bisected.
    """
    if h is not None and not math.isclose(h, m.h, rel_tol=1e-12):
        raise ConfigError(f"model was linearized for h={m.h}, not h={h}")
    lo, hi = (float(v) for v in theta_range)
    if not (0.0 <= lo < hi <= 1.0):
        raise ConfigError("theta range must satisfy 0 <= lo < hi <= 1")
    target = complex(target)
    zeta = damping_ratio(target)
    jump = default_radius(target)

    n_grid = max(2, int(math.ceil((hi - lo) / sweep_step)) + 1)
    grid = np.linspace(lo, hi, n_grid)
    i0 = int(np.argmin(np.abs(grid - 0.5)))
    tracked = np.empty(n_grid, dtype=complex)
    tracked[i0] = _nearest(_deformed_roots(m, grid[i0]), target, jump)
    for i in range(i0 + 1, n_grid):
        tracked[i] = _nearest(_deformed_roots(m, grid[i]), tracked[i - 1], jump)
    for i in range(i0 - 1, -1, -1):
        tracked[i] = _nearest(_deformed_roots(m, grid[i]), tracked[i + 1], jump)
    phi = np.array([damping_ratio(s) for s in tracked]) - zeta

    brackets = [i for i in range(n_grid - 1) if phi[i] * phi[i + 1] < 0]
    for i in range(n_grid):
        if phi[i] == 0 and 0 < i < n_grid - 1 and phi[i - 1] * phi[i + 1] < 0:
            return ThetaMatch(float(grid[i]), target, complex(tracked[i]), zeta, zeta, 0)
    if not brackets:
        raise NoSignChange(
            f"damping mismatch keeps one sign on [{lo}, {hi}]: "
            f"phi(lo)={phi[0]:.3e}, phi(hi)={phi[-1]:.3e}",
            endpoints=(float(phi[0]), float(phi[-1])),
        )
    i = min(brackets, key=lambda b: abs(b + 0.5 - i0))
    a_th, b_th = grid[i], grid[i + 1]
    a_root, b_root = tracked[i], tracked[i + 1]
    a_phi = phi[i]
    steps = 0
    mid_th, mid_root, mid_phi = a_th, a_root, a_phi
    while steps < max_bisect:
        mid_th = 0.5 * (a_th + b_th)
        guess = a_root if abs(mid_th - a_th) <= abs(b_th - mid_th) else b_root
        mid_root = _nearest(_deformed_roots(m, mid_th), guess, jump)
        mid_phi = damping_ratio(mid_root) - zeta
        steps += 1
        if abs(mid_phi) <= tol:
            break
        if a_phi * mid_phi < 0:
            b_th, b_root = mid_th, mid_root
        else:
            a_th, a_root, a_phi = mid_th, mid_root, mid_phi
    if abs(mid_phi) > tol:
        raise NoSignChange(f"bisection stalled with mismatch {mid_phi:.3e}", endpoints=(float(phi[0]), float(phi[-1])))
    return ThetaMatch(float(mid_th), target, mid_root, zeta, zeta + mid_phi, steps)
