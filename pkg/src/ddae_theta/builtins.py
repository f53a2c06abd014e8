"""Built-in desk-scale models and the JSON model loader."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import DdaeSystem, DelaySpec, LinearDelayModel


def scalar_dde(a: float = -1.0, b: float = -0.5, tau: float = 1.0, phi: float = 1.0) -> DdaeSystem:
    """``x' = a x + b x(t - tau)`` with constant history ``phi``."""
    a, b, tau, phi = float(a), float(b), float(tau), float(phi)
    hist = np.array([phi])

    def f(x, y, xd, yd):
        return a * x + b * xd[0]

    def jac(x, y, xd, yd):
        return np.array([[a]]), [np.array([[b]])]

    return DdaeSystem(
        nu=1,
        mu=0,
        f=f,
        delays=[DelaySpec(tau, "tau")],
        history=lambda t: (hist, np.zeros(0)),
        jacobian=jac,
        name="scalar_dde",
        params={"a": a, "b": b, "tau": tau, "phi": phi},
    )


def delayed_oscillator(
    omega: float = 2.0,
    zeta: float = 0.1,
    gain: float = 0.5,
    tau: float = 0.3,
    x0: float = 0.1,
) -> DdaeSystem:
    """Pendulum-like oscillator with delayed position feedback.

    ``x1' = x2``, ``x2' = -omega^2 sin(x1) - 2 zeta omega x2 - gain x1(t - tau)``.
    The history is the constant offset ``(x0, 0)``; the equilibrium is the origin.
    """
    w2, c, g = omega**2, 2.0 * zeta * omega, float(gain)
    hist = np.array([float(x0), 0.0])

    def f(x, y, xd, yd):
        return np.array([x[1], -w2 * np.sin(x[0]) - c * x[1] - g * xd[0][0]])

    def jac(x, y, xd, yd):
        j0 = np.array([[0.0, 1.0], [-w2 * np.cos(x[0]), -c]])
        jd = np.array([[0.0, 0.0], [-g, 0.0]])
        return j0, [jd]

    return DdaeSystem(
        nu=2,
        mu=0,
        f=f,
        delays=[DelaySpec(tau, "feedback")],
        history=lambda t: (hist, np.zeros(0)),
        jacobian=jac,
        name="delayed_oscillator",
        params={"omega": omega, "zeta": zeta, "gain": gain, "tau": tau, "x0": x0},
    )


def multi_delay_chain(
    beta: float = 1.0,
    omega: float = 19.4,
    damping: float = 2.0,
    gain: float = 3.54,
    coupling: float = 20.0,
    tau1: float = 0.06,
    tau2: float = 0.04,
    split: float = 0.7,
    x0: float = 1e-3,
) -> DdaeSystem:
    """Two coupled swing-type oscillators with delayed speed feedback.

    States ``(d1, w1, d2, w2)``, algebraic speed measurements ``(y1, y2)``
    with ``0 = w_i - y_i``.  Each oscillator receives the positive feedback
    ``beta * gain * (split * y_i(t - tau1) + (1 - split) * y_i(t - tau2))``,
    so ``beta`` scales every delayed coefficient and ``beta = 0`` removes
    the delays.  With the defaults the exact system is stable for
    ``beta <= 1.01`` with a lightly damped pair near 18 rad/s, and the
    trapezoidal method reports it unstable for ``beta = 1.01, h = 0.02``.
    """
    w2 = omega**2
    fb = beta * gain
    hist = np.array([float(x0), 0.0, 0.0, 0.0])
    yhist = np.zeros(2)

    def f(x, y, xd, yd):
        d1, o1, d2, o2 = x
        return np.array(
            [
                o1,
                -w2 * np.sin(d1) - damping * o1 - coupling * np.sin(d1 - d2)
                + fb * (split * yd[0][0] + (1.0 - split) * yd[1][0]),
                o2,
                -w2 * np.sin(d2) - damping * o2 - coupling * np.sin(d2 - d1)
                + fb * (split * yd[0][1] + (1.0 - split) * yd[1][1]),
            ]
        )

    def g(x, y, xd, yd):
        return np.array([x[1] - y[0], x[3] - y[1]])

    def jac(x, y, xd, yd):
        d1, _, d2, _ = x
        c12 = coupling * np.cos(d1 - d2)
        j0 = np.zeros((6, 6))
        j0[0, 1] = j0[2, 3] = 1.0
        j0[1, 0] = -w2 * np.cos(d1) - c12
        j0[1, 2] = c12
        j0[1, 1] = j0[3, 3] = -damping
        j0[3, 2] = -w2 * np.cos(d2) - c12
        j0[3, 0] = c12
        j0[4, 1] = j0[5, 3] = 1.0
        j0[4, 4] = j0[5, 5] = -1.0
        ja = np.zeros((6, 6))
        jb = np.zeros((6, 6))
        ja[1, 4] = ja[3, 5] = fb * split
        jb[1, 4] = jb[3, 5] = fb * (1.0 - split)
        return j0, [ja, jb]

    return DdaeSystem(
        nu=4,
        mu=2,
        f=f,
        g=g,
        delays=[DelaySpec(tau1, "tau1"), DelaySpec(tau2, "tau2")],
        history=lambda t: (hist, yhist),
        jacobian=jac,
        name="multi_delay_chain",
        params={
            "beta": beta, "omega": omega, "damping": damping, "gain": gain, "coupling": coupling,
            "tau1": tau1, "tau2": tau2, "split": split, "x0": x0,
        },
    )


BUILTINS = {
    "scalar_dde": scalar_dde,
    "delayed_oscillator": delayed_oscillator,
    "multi_delay_chain": multi_delay_chain,
}


def build_builtin(name: str, **params) -> DdaeSystem:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown built-in model {name!r}; choose from {sorted(BUILTINS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc


def load_model(source):
    """Parse a model description (path, JSON text or dict).

    Returns a :class:`DdaeSystem` for ``{"builtin": name, ...overrides}`` and
    a :class:`LinearDelayModel` for ``{"E": .., "A0": .., "Ak": [..], "h": ..}``.
    """
    if isinstance(source, dict):
        payload = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("model description must be a JSON object")
    if "builtin" in payload:
        params = dict(payload.get("params", {}))
        params.update({k: v for k, v in payload.items() if k not in ("builtin", "params")})
        return build_builtin(payload["builtin"], **params)
    missing = [k for k in ("E", "A0", "h") if k not in payload]
    if missing:
        raise ConfigError(f"linear model is missing {missing}")
    return LinearDelayModel(payload["E"], payload["A0"], payload.get("Ak", []), float(payload["h"]))


def model_description(model) -> dict:
    """Canonical JSON-able description used for hashing and manifests."""
    if isinstance(model, LinearDelayModel):
        return model.to_dict()
    return {"builtin": model.name, "params": dict(sorted(model.params.items()))}
