"""Theta-method stability on the scalar test ODE and test DDE.

The Theta method used throughout this package reads

    x_{n+1} = x_n + h * [theta * f_n + (1 - theta) * f_{n+1}]

so ``theta = 0.5`` is the trapezoidal method and ``theta = 0`` is backward
Euler.  Applied to ``x' = a x + b x(t - h)`` it gives a two-term recurrence
whose companion matrix (the growth matrix) decides numerical stability.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PoleError


@dataclass(frozen=True)
class ThetaParams:
    theta: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise ConfigError(f"theta must lie in [0, 1], got {self.theta}")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ConfigError(f"step size must be positive, got {self.h}")


@dataclass(frozen=True)
class ScalarTestDde:
    """``x'(t) = a x(t) + b x(t - h)``."""

    a: complex
    b: complex = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ConfigError("test equation coefficients must be finite")


@dataclass(frozen=True)
class GrowthMatrix:
    """Companion matrix advancing ``[x_n, x_{n-1}, ...]`` by one step."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise ConfigError("growth matrix must be square with order >= 2")
        object.__setattr__(self, "entries", m)

    @property
    def top_row(self) -> np.ndarray:
        return self.entries[0]

    def eigenvalues(self) -> np.ndarray:
        if self.entries.shape[0] == 2:
            return np.array(_companion2_roots(self.entries[0, 0], self.entries[0, 1]))
        return np.linalg.eigvals(self.entries)


def growth_function(p: ThetaParams, ah: complex) -> complex:
    """Amplification factor of the Theta method on ``x' = a x``."""
    den = 1.0 - ah * (1.0 - p.theta)
    if den == 0:
        raise PoleError(f"growth function pole at ah = {ah}")
    return (1.0 + p.theta * ah) / den


def growth_matrix(p: ThetaParams, eq: ScalarTestDde, lag_steps: int = 1) -> GrowthMatrix:
    """Growth matrix of the Theta method on the scalar test DDE.

    ``lag_steps`` generalizes the delay to ``tau = lag_steps * h``; the
    companion order is then ``lag_steps + 1``.  The default reproduces the
    2x2 case with ``tau = h``.
    """
    if lag_steps < 1:
        raise ConfigError("lag_steps must be >= 1")
    th, h = p.theta, p.h
    ah, bh = eq.a * h, eq.b * h
    den = 1.0 - ah * (1.0 - th)
    if den == 0:
        raise PoleError(f"growth matrix pole at ah = {ah}")
    k = lag_steps
    m = np.zeros((k + 1, k + 1), dtype=complex)
    # x_{n+1} * den = (1 + ah th) x_n + bh (1-th) x_{n+1-k} + bh th x_{n-k}
    m[0, 0] += (1.0 + ah * th) / den
    m[0, k - 1] += bh * (1.0 - th) / den
    m[0, k] += bh * th / den
    m[1:, :-1] = np.eye(k)
    return GrowthMatrix(m)


def _companion2_roots(p, q):
    """Roots of ``lam**2 - p*lam - q`` without cancellation."""
    p = complex(p)
    q = complex(q)
    sq = np.sqrt(p * p + 4.0 * q)
    big = p + sq if abs(p + sq) >= abs(p - sq) else p - sq
    if big == 0:
        return 0j, 0j
    l1 = big / 2.0
    return l1, -q / l1


def spectral_radius(m: GrowthMatrix) -> float:
    return float(max(abs(lam) for lam in m.eigenvalues()))


# --------------------------------------------------------------------------
# raster scans


@dataclass(frozen=True)
class ScanRule:
    """Linear coupling between the two coefficients.

    ``scanned`` names the swept product (``"a"`` -> a*h, ``"b"`` -> b*h); the
    other coefficient equals ``alpha`` times the scanned one.
    """

    scanned: str
    alpha: float

    def __post_init__(self):
        if self.scanned not in ("a", "b"):
            raise ConfigError(f"scanned parameter must be 'a' or 'b', got {self.scanned!r}")

    def coefficients(self, w):
        """Return ``(a*h, b*h)`` for scanned values ``w``."""
        if self.scanned == "a":
            return w, self.alpha * w
        return self.alpha * w, w

    def describe(self) -> str:
        other = "b" if self.scanned == "a" else "a"
        return f"scan {self.scanned}*h, {other} = {self.alpha:g}*{self.scanned}"


PRESETS = {
    "b-eq-0": ScanRule("a", 0.0),
    "a-eq-0": ScanRule("b", 0.0),
    "b-eq-a": ScanRule("a", 1.0),
    "a-eq-1.1b": ScanRule("b", 1.1),
    "b-eq-0.15a": ScanRule("a", 0.15),
    "a-eq-0.85b": ScanRule("b", 0.85),
}

_RULE_RE = re.compile(r"^\s*([ab])\s*=\s*([-+0-9.eE]+)\s*\*?\s*([ab])\s*$")


def parse_rule(text: str) -> ScanRule:
    """Parse ``"b=0.15a"`` / ``"a=1.1*b"`` or a preset name."""
    if text in PRESETS:
        return PRESETS[text]
    m = _RULE_RE.match(text)
    if not m or m.group(1) == m.group(3):
        raise ConfigError(f"cannot parse scan rule {text!r}; expected e.g. 'b=0.15a'")
    try:
        alpha = float(m.group(2))
    except ValueError as exc:
        raise ConfigError(f"bad coefficient in scan rule {text!r}") from exc
    return ScanRule(m.group(3), alpha)


@dataclass(frozen=True)
class StabilityRaster:
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    nx: int
    ny: int
    theta: float
    scan: ScanRule
    values: np.ndarray = field(repr=False)  # (ny, nx): row i <-> im[i]

    @property
    def stable_mask(self) -> np.ndarray:
        return self.values < 1.0

    @property
    def re(self) -> np.ndarray:
        return np.linspace(self.re_min, self.re_max, self.nx)

    @property
    def im(self) -> np.ndarray:
        return np.linspace(self.im_min, self.im_max, self.ny)

    def grid(self) -> np.ndarray:
        return self.re[None, :] + 1j * self.im[:, None]


def spectral_radius_grid(theta: float, ah, bh) -> np.ndarray:
    """Vectorized spectral radius of the 2x2 growth matrix; poles -> inf."""
    ah = np.asarray(ah, dtype=complex)
    bh = np.asarray(bh, dtype=complex)
    den = 1.0 - ah * (1.0 - theta)
    pole = den == 0
    den = np.where(pole, 1.0, den)
    p = (1.0 + ah * theta + bh * (1.0 - theta)) / den
    q = bh * theta / den
    sq = np.sqrt(p * p + 4.0 * q)
    plus, minus = p + sq, p - sq
    big = np.where(np.abs(plus) >= np.abs(minus), plus, minus) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big == 0, 0.0, -q / np.where(big == 0, 1.0, big))
    rho = np.maximum(np.abs(big), np.abs(small))
    return np.where(pole, np.inf, rho)


def stability_raster(
    bounds=(-5.0, 5.0, -5.0, 5.0),
    resolution=(400, 400),
    theta: float = 0.5,
    scan: ScanRule | str = "b-eq-0",
) -> StabilityRaster:
    """Spectral radius of the growth matrix over a rectangle of the scanned product."""
    re_min, re_max, im_min, im_max = (float(v) for v in bounds)
    nx, ny = (int(v) for v in resolution)
    if not all(math.isfinite(v) for v in (re_min, re_max, im_min, im_max)):
        raise ConfigError("raster bounds must be finite")
    if re_min >= re_max or im_min >= im_max:
        raise ConfigError("raster bounds are inverted or empty")
    if nx < 2 or ny < 2:
        raise ConfigError("raster resolution must be at least 2x2")
    ThetaParams(theta, 1.0)
    rule = parse_rule(scan) if isinstance(scan, str) else scan
    w = np.linspace(re_min, re_max, nx)[None, :] + 1j * np.linspace(im_min, im_max, ny)[:, None]
    ah, bh = rule.coefficients(w)
    values = spectral_radius_grid(theta, ah, bh)
    return StabilityRaster(re_min, re_max, im_min, im_max, nx, ny, theta, rule, values)


def stable_step_limit(theta: float, a: float, ratio: float, h_max: float = 1e3, n: int = 20001) -> float:
    """Largest ``h`` in a 1-D sweep below which ``x' = a x + ratio*a x(t-h)`` stays stable.

    Returns ``h_max`` when no instability is met in ``(0, h_max]``.
    """
    hs = np.geomspace(h_max * 1e-6, h_max, n)
    rho = spectral_radius_grid(theta, a * hs, ratio * a * hs)
    bad = np.nonzero(rho >= 1.0)[0]
    if bad.size == 0:
        return h_max
    return float(hs[bad[0] - 1]) if bad[0] > 0 else 0.0
