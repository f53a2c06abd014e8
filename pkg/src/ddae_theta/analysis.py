"""High-level workflows shared by the CLI: model -> spectra -> reports."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateSpectrum
from .model import LinearDelayModel, find_equilibrium, linearize, reference_step
from .pencil import (
    DeformationReport,
    EigenSpectrum,
    build_discrete_pencil,
    deformation_report,
    deformed_spectrum,
    exact_spectrum,
    stiffness_ratio,
    theta_match,
)
from .scalar import ThetaParams


def worker_count() -> int:
    env = os.environ.get("DDAE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DDAE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Order-preserving map capped by ``DDAE_THREADS``."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def linear_model(source, h: Optional[float] = None) -> LinearDelayModel:
    """Linearization of ``source`` on a step-``h`` grid.

    Explicit linear models carry their own step; asking for another one is
    an error because their delay lags are tied to it.
    """
    if isinstance(source, LinearDelayModel):
        if h is not None and not math.isclose(h, source.h, rel_tol=1e-12):
            raise ConfigError(f"explicit linear model is defined for h={source.h}, not h={h}")
        return source
    if h is None:
        raise ConfigError("a step size is required to linearize a nonlinear model")
    return linearize(source, find_equilibrium(source), h)


def reference_model(source) -> LinearDelayModel:
    """Linear model whose lags reproduce every delay exactly (no interpolation)."""
    if isinstance(source, LinearDelayModel):
        return source
    return linearize(source, find_equilibrium(source), reference_step(source.delays))


@dataclass
class PencilAnalysis:
    theta: float
    h: float
    exact: EigenSpectrum
    deformed: EigenSpectrum
    report: DeformationReport
    stiffness: Optional[float]

    def summary(self) -> dict:
        out = {
            "theta": self.theta,
            "h": self.h,
            "n_exact": len(self.exact),
            "n_deformed": len(self.deformed),
            "max_real_exact": self.exact.max_real(),
            "max_real_deformed": self.deformed.max_real(),
            "sign_exact": int(np.sign(self.exact.max_real())),
            "sign_deformed": int(np.sign(self.deformed.max_real())),
            "stiffness_ratio": self.stiffness,
        }
        out.update({f"report_{k}": v for k, v in self.report.summary().items()})
        return out


def analyze(source, theta: float, h: float, N: int = 20, exact: Optional[EigenSpectrum] = None) -> PencilAnalysis:
    p = ThetaParams(theta, h)
    if exact is None:
        exact = exact_spectrum(reference_model(source), N=N)
    deformed = deformed_spectrum(build_discrete_pencil(linear_model(source, h), p))
    try:
        stiff = stiffness_ratio(exact)
    except DegenerateSpectrum:
        stiff = None
    return PencilAnalysis(theta, h, exact, deformed, deformation_report(exact, deformed), stiff)


def h_sweep(source, theta: float, hs, N: int = 20) -> list:
    """Rightmost exact and deformed roots for each step size."""
    if isinstance(source, LinearDelayModel):
        raise ConfigError("step-size sweeps need a nonlinear/builtin model (explicit linear models fix h)")
    exact = exact_spectrum(reference_model(source), N=N)
    return parallel_map(lambda h: analyze(source, theta, h, N, exact=exact), hs)


def select_target(exact: EigenSpectrum, selector="rightmost") -> complex:
    """Exact root to track: the rightmost one (upper half-plane member) or the nearest to a point."""
    roots = exact.roots
    if roots.size == 0:
        raise DegenerateSpectrum("no exact roots to select from")
    if isinstance(selector, str) and selector == "rightmost":
        top = roots.real.max()
        band = roots[np.abs(roots.real - top) <= 1e-9 * max(1.0, abs(top))]
        return complex(band[np.argmax(band.imag)])
    point = complex(selector)
    return complex(roots[np.argmin(np.abs(roots - point))])


def theta_table(source, hs, selector="rightmost", theta_range=(0.0, 1.0), N: int = 20) -> list:
    """``theta_zeta`` for each step size; errors propagate per step."""
    exact = exact_spectrum(reference_model(source), N=N)
    target = select_target(exact, selector)
    return parallel_map(lambda h: theta_match(linear_model(source, h), target, h, theta_range), hs)


def parse_sweep(text: str) -> np.ndarray:
    """``"lo:hi:logN"`` / ``"lo:hi:linN"`` / ``"a,b,c"`` -> step sizes."""
    try:
        if ":" in text:
            lo, hi, tail = text.split(":")
            lo, hi = float(lo), float(hi)
            if tail.startswith("log"):
                vals = np.geomspace(lo, hi, int(tail[3:]))
            elif tail.startswith("lin"):
                vals = np.linspace(lo, hi, int(tail[3:]))
            else:
                vals = np.linspace(lo, hi, int(tail))
        else:
            vals = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise ConfigError(f"cannot parse sweep {text!r}") from exc
    if vals.size == 0 or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ConfigError(f"sweep {text!r} must contain positive step sizes")
    return vals
