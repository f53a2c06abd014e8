"""Fixed-step Theta-method integration of DDAE systems with multiple delays."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, NoConvergence, SingularIteration
from .model import DdaeSystem, interpolation_split
from .scalar import ThetaParams

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 20
DIVERGENCE_LIMIT = 1e12


class HistoryBuffer:
    """Ring of the most recent grid samples ``z_n, z_{n-1}, ..., z_{n-R}``."""

    def __init__(self, sys: DdaeSystem, h: float, t0: float = 0.0):
        self.h = h
        self.splits = [interpolation_split(d.tau, h) for d in sys.delays]
        k_max = max((k for k, _ in self.splits), default=0)
        self.depth = k_max + 1
        self._buf = deque(maxlen=self.depth + 1)
        for j in range(self.depth, -1, -1):
            self._buf.append(sys.history_stack(t0 - j * h))
        self.n = 0

    def __getitem__(self, lag: int) -> np.ndarray:
        """Sample ``z_{n-lag}``."""
        return self._buf[-1 - lag]

    @property
    def current(self) -> np.ndarray:
        return self._buf[-1]

    def replace_current(self, z) -> None:
        self._buf[-1] = np.asarray(z, dtype=float)

    def push(self, z) -> None:
        self._buf.append(np.asarray(z, dtype=float))
        self.n += 1

    def lagged_now(self) -> list:
        """Interpolated delayed samples at step ``n``."""
        return [c * self[k] + (1.0 - c) * self[k + 1] if c < 1.0 else self[k] for k, c in self.splits]

    def lagged_next(self, z_next) -> list:
        """Interpolated delayed samples at step ``n+1``; lag 0 refers to ``z_next``."""

        def at(lag):
            return z_next if lag == 0 else self[lag - 1]

        return [c * at(k) + (1.0 - c) * at(k + 1) if c < 1.0 else at(k) for k, c in self.splits]


@dataclass
class StepInfo:
    iterations: int
    residual: float


def _solve(mat, rhs):
    try:
        lu, piv = sla.lu_factor(mat, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularIteration(f"Newton matrix unusable: {exc}") from exc
    d = np.abs(np.diag(lu))
    if d.size and (d.min() <= 1e-14 * max(d.max(), 1e-300)):
        raise SingularIteration("Newton matrix is numerically singular")
    return sla.lu_solve((lu, piv), rhs)


def step(sys: DdaeSystem, p: ThetaParams, hist: HistoryBuffer, analytic: bool = True):
    """Advance one step; returns ``(x_{n+1}, y_{n+1}, StepInfo)``.

    Solves ``x1 - x_n - h th f_n - h (1-th) f_{n+1} = 0`` and ``g_{n+1} = 0``
    by Newton from the previous solution, always taking at least one step.
    """
    th, h = p.theta, p.h
    nu = sys.nu
    zn = hist.current
    f_now = sys.residual(zn, hist.lagged_now())[:nu]
    sub_step = [(i, c) for i, (k, c) in enumerate(hist.splits) if k == 0]

    def residual(z1):
        full = sys.residual(z1, hist.lagged_next(z1))
        res = np.empty(sys.n)
        res[:nu] = z1[:nu] - zn[:nu] - h * th * f_now - h * (1.0 - th) * full[:nu]
        res[nu:] = full[nu:]
        return res

    def newton_matrix(z1):
        lag = hist.lagged_next(z1)
        j0, jd = sys.jacobians(z1, lag, analytic=analytic)
        jac = j0.copy()
        for i, c in sub_step:
            jac += c * jd[i]
        out = jac.copy()
        out[:nu] *= -h * (1.0 - th)
        out[:nu, :nu] += np.eye(nu)
        return out

    z1 = zn.copy()
    res = residual(z1)
    iters = 0
    while True:
        scale = max(1.0, np.max(np.abs(z1)))
        norm = np.max(np.abs(res))
        if not np.isfinite(norm):
            raise NoConvergence("non-finite residual in Newton iteration", residual=norm)
        # at least one update, so tiny solutions never stall below the tolerance
        if iters >= 1 and norm <= NEWTON_TOL * scale:
            break
        if iters >= NEWTON_MAX_ITER:
            raise NoConvergence(f"Newton did not converge in {NEWTON_MAX_ITER} iterations", residual=norm)
        z1 = z1 - _solve(newton_matrix(z1), res)
        res = residual(z1)
        iters += 1
    return z1[:nu].copy(), z1[nu:].copy(), StepInfo(iters, float(norm))


@dataclass
class SimulationResult:
    t: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    newton_iters: np.ndarray
    status: str = "completed"
    diverged_at: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


Event = tuple  # (time, mutation: (x, y) -> (x, y))


def _reconcile_algebraic(sys: DdaeSystem, hist: HistoryBuffer, analytic: bool):
    """Re-solve ``g = 0`` for y with x fixed at the current sample."""
    if sys.mu == 0:
        return
    nu = sys.nu
    z = hist.current.copy()
    lag = hist.lagged_now()
    for _ in range(NEWTON_MAX_ITER):
        gval = sys.residual(z, lag)[nu:]
        if np.max(np.abs(gval)) <= NEWTON_TOL * max(1.0, np.max(np.abs(z))):
            hist.replace_current(z)
            return
        j0, _ = sys.jacobians(z, lag, analytic=analytic)
        z[nu:] -= _solve(j0[nu:, nu:], gval)
    raise NoConvergence("algebraic re-initialization after event did not converge")


def n_steps_for(t_end: float, h: float) -> int:
    ratio = t_end / h
    n = round(ratio)
    if abs(ratio - n) > 1e-9 * max(1.0, ratio):
        n = math.ceil(ratio)
    return int(n)


def simulate(
    sys: DdaeSystem,
    p: ThetaParams,
    t_end: float,
    events: Optional[Sequence[Event]] = None,
    analytic: bool = True,
) -> SimulationResult:
    """Integrate on the uniform grid ``0, h, ..., N h``.

    Divergence (``|x| > 1e12``) ends the run with ``status='diverged'``;
    Newton failures raise with the failing step index attached.
    """
    if not t_end > 0:
        raise ConfigError("t_end must be positive")
    n_steps = n_steps_for(t_end, p.h)
    if n_steps < 1:
        raise ConfigError("t_end must cover at least one step")
    h = p.h
    hist = HistoryBuffer(sys, h)
    pending = sorted(events or [], key=lambda e: e[0])
    t = h * np.arange(n_steps + 1)
    Z = np.full((sys.n, n_steps + 1), np.nan)
    iters = np.zeros(n_steps, dtype=int)
    status, diverged_at = "completed", None
    Z[:, 0] = hist.current
    for n in range(n_steps):
        tn = t[n]
        while pending and pending[0][0] <= tn + 1e-9 * h:
            _, mutate = pending.pop(0)
            x, y = sys.split(hist.current)
            nx_, ny_ = mutate(x.copy(), y.copy())
            hist.replace_current(np.concatenate([np.atleast_1d(nx_), np.atleast_1d(ny_)]))
            _reconcile_algebraic(sys, hist, analytic)
            Z[:, n] = hist.current
        try:
            x1, y1, info = step(sys, p, hist, analytic=analytic)
        except NoConvergence as exc:
            exc.step = n
            raise
        hist.push(np.concatenate([x1, y1]))
        Z[:, n + 1] = hist.current
        iters[n] = info.iterations
        if not np.all(np.isfinite(x1)) or np.max(np.abs(x1), initial=0.0) > DIVERGENCE_LIMIT:
            status, diverged_at = "diverged", n + 1
            log.info("trajectory diverged at step %d (t=%g)", n + 1, t[n + 1])
            break
    last = n_steps + 1 if diverged_at is None else diverged_at + 1
    return SimulationResult(
        t=t[:last],
        X=Z[: sys.nu, :last],
        Y=Z[sys.nu :, :last],
        newton_iters=iters[: last - 1],
        status=status,
        diverged_at=diverged_at,
        meta={"theta": p.theta, "h": h, "model": sys.name},
    )


def growth_rate(result: SimulationResult, tail: float = 0.5) -> float:
    """Exponential growth rate of the trajectory envelope over its tail.

    A line is fitted to the log of the local maxima of ``max|(x, y)|``, so
    oscillation zeros do not bias it; monotone tails use every sample.
    """
    z = np.vstack([result.X, result.Y])
    norms = np.max(np.abs(z), axis=0)
    start = int(norms.size * (1.0 - tail))
    tt, vv = result.t[start:], norms[start:]
    keep = vv > 0
    tt, vv = tt[keep], vv[keep]
    if vv.size < 2:
        return -np.inf
    peaks = np.nonzero((vv[1:-1] >= vv[:-2]) & (vv[1:-1] > vv[2:]))[0] + 1
    if peaks.size >= 3:
        tt, vv = tt[peaks], vv[peaks]
    return float(np.polyfit(tt, np.log(vv), 1)[0])
