"""Command-line front end.

Every command resolves its flags into a flat parameter dict, writes its
outputs into ``--out`` and finishes with ``manifest.json``.  ``replay``
re-runs a manifest and checks that every output is byte-identical.

Exit codes: 0 ok, 1 replay mismatch, 2 bad flags/config, 3 Newton failure,
4 eigensolver failure, 5 theta matching failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze, h_sweep, linear_model, parse_sweep, theta_table
from .builtins import BUILTINS, load_model, model_description
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSpectrum,
    DimensionError,
    EigensolveError,
    JacobianError,
    NoConvergence,
    NoSignChange,
    PoleError,
    SingularJacobian,
    TrackingLost,
)
from .export import (
    sha256_file,
    sha256_json,
    write_csv,
    write_json,
    write_pairs_csv,
    write_raster_csv,
    write_raster_pgm,
    write_spectrum_csv,
    write_trajectory_csv,
)
from .integrator import simulate
from .model import LinearDelayModel
from .scalar import PRESETS, ThetaParams, parse_rule, stability_raster

log = logging.getLogger("ddae_theta")

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_NEWTON, EXIT_EIG, EXIT_MATCH = 0, 1, 2, 3, 4, 5
MANIFEST = "manifest.json"

_EXIT_FOR = [
    ((ConfigError, DimensionError, PoleError), EXIT_CONFIG),
    ((NoConvergence, SingularJacobian, JacobianError), EXIT_NEWTON),
    ((EigensolveError, ConvergenceError, DegenerateSpectrum), EXIT_EIG),
    ((NoSignChange, TrackingLost), EXIT_MATCH),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# --------------------------------------------------------------------------
# flag parsing helpers


def _floats(text: str, n=None, name="value"):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"{name} must be comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) not in (n if isinstance(n, tuple) else (n,)):
        raise ConfigError(f"{name} needs {n} numbers, got {text!r}")
    return vals


def _kv(text: str, name: str) -> dict:
    out = {}
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"{name} entries must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _number(v: str):
    try:
        f = float(v)
    except ValueError:
        return v
    return int(f) if f.is_integer() and "." not in v and "e" not in v.lower() else f


def parse_event(text: str) -> dict:
    kv = _kv(text, "--event")
    try:
        ev = {"t": float(kv.pop("t")), "kick": float(kv.pop("kick")), "var": int(kv.pop("var", "1"))}
    except KeyError as exc:
        raise ConfigError(f"--event needs {exc.args[0]}=...") from None
    except ValueError:
        raise ConfigError(f"bad number in --event {text!r}") from None
    if kv:
        raise ConfigError(f"unknown --event keys {sorted(kv)}")
    if ev["var"] < 1:
        raise ConfigError("--event var is 1-based")
    return ev


def _resolve_model(args):
    """Model description dict from --model/--model-file plus overrides."""
    if args.model_file:
        text = Path(args.model_file).read_text() if Path(args.model_file).exists() else None
        if text is None:
            raise ConfigError(f"model file {args.model_file!r} not found")
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file is not valid JSON: {exc}") from exc
    elif args.model:
        if args.model not in BUILTINS:
            raise ConfigError(f"unknown built-in model {args.model!r}; choose from {sorted(BUILTINS)}")
        payload = {"builtin": args.model}
    else:
        raise ConfigError("give --model NAME or --model-file PATH")
    overrides = {}
    for name in ("a", "b", "tau", "beta"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    for item in args.param or []:
        overrides.update({k: _number(v) for k, v in _kv(item, "--param").items()})
    if overrides:
        if "builtin" not in payload:
            raise ConfigError("parameter overrides only apply to built-in models")
        payload = dict(payload)
        payload["params"] = {**payload.get("params", {}), **overrides}
    model = load_model(payload)
    return model_description(model)


def _add_model_flags(p):
    p.add_argument("--model", help=f"built-in model: {', '.join(sorted(BUILTINS))}")
    p.add_argument("--model-file", help="JSON model description")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--beta", type=float, help="delayed-coefficient scale (multi_delay_chain)")
    p.add_argument("--param", action="append", metavar="K=V", help="extra built-in parameter(s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ddae-theta", description="Theta-method stability analysis for delay DAEs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("region", help="stability region raster of the scalar test equation")
    p.add_argument("--theta", type=float, default=0.5)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--rule", help="coupling rule such as b=0.15a")
    p.add_argument("--bounds", default="-5,5,-5,5", help="re_min,re_max,im_min,im_max")
    p.add_argument("--res", default="400", help="N or NX,NY")
    p.add_argument("--out", default="ddae_out")

    p = sub.add_parser("simulate", help="integrate a model with the Theta method")
    _add_model_flags(p)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--event", action="append", metavar="t=T,kick=K[,var=I]")
    p.add_argument("--fd-jacobian", action="store_true", help="use finite-difference Jacobians")
    p.add_argument("--out", default="ddae_out")

    p = sub.add_parser("pencil", help="exact vs Theta-deformed spectra")
    _add_model_flags(p)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--h", type=float)
    p.add_argument("--N", type=int, default=20, help="collocation order")
    p.add_argument("--h-sweep", help="lo:hi:logN, lo:hi:linN or a comma list")
    p.add_argument("--out", default="ddae_out")

    p = sub.add_parser("theta-match", help="theta that preserves a root's damping ratio")
    _add_model_flags(p)
    p.add_argument("--h-list", required=True, help="comma-separated step sizes")
    p.add_argument("--target", default="rightmost", help="'rightmost' or RE,IM (use --target=RE,IM)")
    p.add_argument("--theta-range", default="0,1")
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--out", default="ddae_out")

    p = sub.add_parser("replay", help="re-run a manifest and verify byte-identical outputs")
    p.add_argument("manifest")
    p.add_argument("--out", help="directory for the re-run (default: the manifest's directory)")
    return parser


def resolve_params(args) -> dict:
    """Fully resolved, JSON-able parameter set for a command."""
    cmd = args.command
    if cmd == "region":
        bounds = _floats(args.bounds, 4, "--bounds")
        res = [int(v) for v in _floats(args.res, (1, 2), "--res")]
        scan = args.rule or args.preset or "b-eq-0"
        parse_rule(scan)
        return {"theta": args.theta, "scan": scan, "bounds": bounds, "resolution": res * (3 - len(res))}
    params = {"model": _resolve_model(args)}
    if cmd == "simulate":
        ThetaParams(args.theta, args.h)
        params.update(theta=args.theta, h=args.h, t_end=args.t_end,
                      events=[parse_event(e) for e in args.event or []],
                      analytic=not args.fd_jacobian)
    elif cmd == "pencil":
        if args.N < 2:
            raise ConfigError("--N must be at least 2")
        h = args.h
        if h is None and "builtin" not in params["model"]:
            h = params["model"]["h"]
        if args.h_sweep is None and h is None:
            raise ConfigError("pencil needs --h (or --h-sweep) for built-in models")
        sweep = None if args.h_sweep is None else [float(v) for v in parse_sweep(args.h_sweep)]
        if h is not None:
            ThetaParams(args.theta, h)
        params.update(theta=args.theta, h=h, N=args.N, h_sweep=sweep)
    elif cmd == "theta-match":
        hs = [float(v) for v in parse_sweep(args.h_list)]
        rng = _floats(args.theta_range, 2, "--theta-range")
        target = args.target if args.target == "rightmost" else _floats(args.target, 2, "--target")
        params.update(h_list=hs, target=target, theta_range=rng, N=args.N)
    return params


# --------------------------------------------------------------------------
# command bodies: (params, out_dir) -> list of written file names


def run_region(params, out: Path) -> list:
    r = stability_raster(params["bounds"], params["resolution"], params["theta"], params["scan"])
    write_raster_csv(out / "region.csv", r)
    write_raster_pgm(out / "region.pgm", r)
    write_json(out / "region_summary.json", {
        "theta": r.theta, "scan": r.scan.describe(), "nx": r.nx, "ny": r.ny,
        "stable_cells": int(r.stable_mask.sum()), "stable_fraction": float(r.stable_mask.mean()),
    })
    return ["region.csv", "region.pgm", "region_summary.json"]


def _mutation(ev, nu):
    def mutate(x, y):
        if ev["var"] > nu:
            raise ConfigError(f"--event var={ev['var']} exceeds the {nu} differential states")
        x[ev["var"] - 1] += ev["kick"]
        return x, y
    return mutate


def run_simulate(params, out: Path) -> list:
    model = load_model(params["model"])
    if isinstance(model, LinearDelayModel):
        model = model.as_system()
    events = [(ev["t"], _mutation(ev, model.nu)) for ev in params["events"]]
    res = simulate(model, ThetaParams(params["theta"], params["h"]), params["t_end"], events,
                   analytic=params["analytic"])
    write_trajectory_csv(out / "trajectory.csv", res)
    x_end = np.abs(np.vstack([res.X, res.Y])[:, -1])
    write_json(out / "simulation_summary.json", {
        "status": res.status, "diverged_at": res.diverged_at, "steps": int(res.t.size - 1),
        "t_final": float(res.t[-1]), "max_abs_final": float(x_end.max(initial=0.0)),
        "newton_iterations_max": int(res.newton_iters.max(initial=0)),
        "newton_iterations_mean": float(res.newton_iters.mean()) if res.newton_iters.size else 0.0,
    })
    if res.diverged:
        log.warning("trajectory diverged at step %d", res.diverged_at)
    return ["trajectory.csv", "simulation_summary.json"]


def run_pencil(params, out: Path) -> list:
    model = load_model(params["model"])
    files = []
    if params["h_sweep"] is not None:
        rows = h_sweep(model, params["theta"], params["h_sweep"], params["N"])
        write_spectrum_csv(out / "exact_spectrum.csv", rows[0].exact)
        table = []
        for a in rows:
            se, sd = a.exact.rightmost(), a.deformed.rightmost()
            table.append((a.h, se.real, se.imag, sd.real, sd.imag,
                          int(np.sign(se.real)), int(np.sign(sd.real)), abs(sd - se)))
        write_csv(out / "h_sweep.csv",
                  ["h", "re_exact", "im_exact", "re_deformed", "im_deformed",
                   "sign_exact", "sign_deformed", "distance"], table)
        files += ["exact_spectrum.csv", "h_sweep.csv"]
    if params["h"] is not None:
        a = analyze(model, params["theta"], params["h"], params["N"])
        write_spectrum_csv(out / "exact_spectrum.csv", a.exact)
        write_spectrum_csv(out / "deformed_spectrum.csv", a.deformed)
        write_pairs_csv(out / "deformation_pairs.csv", a.report)
        write_json(out / "pencil_summary.json", a.summary())
        files = sorted(set(files) | {"exact_spectrum.csv", "deformed_spectrum.csv",
                                     "deformation_pairs.csv", "pencil_summary.json"})
    return files


def run_theta_match(params, out: Path) -> list:
    model = load_model(params["model"])
    target = params["target"]
    if target != "rightmost":
        target = complex(*target)
    if isinstance(model, LinearDelayModel):
        for h in params["h_list"]:
            linear_model(model, h)
    results = theta_table(model, params["h_list"], target, tuple(params["theta_range"]), params["N"])
    rows = [(h, m.theta, m.zeta, m.zeta_hat, m.s_exact.real, m.s_exact.imag,
             m.s_deformed.real, m.s_deformed.imag, m.bisection_steps)
            for h, m in zip(params["h_list"], results)]
    write_csv(out / "theta_match.csv",
              ["h", "theta_zeta", "zeta", "zeta_hat", "re_exact", "im_exact",
               "re_deformed", "im_deformed", "bisection_steps"], rows)
    return ["theta_match.csv"]


RUNNERS = {
    "region": run_region,
    "simulate": run_simulate,
    "pencil": run_pencil,
    "theta-match": run_theta_match,
}


def execute(command: str, params: dict, out: Path) -> dict:
    """Run a command and write its manifest last; returns the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files = RUNNERS[command](params, out)
    manifest = {
        "command": command,
        "params": params,
        "model_sha256": sha256_json(params["model"]) if "model" in params else None,
        "version": __version__,
        "wall_time": time.perf_counter() - t0,
        "outputs": {name: sha256_file(out / name) for name in files},
    }
    write_json(out / MANIFEST, manifest)
    return manifest


def replay(manifest_path, out=None) -> tuple:
    """Re-run a manifest; returns ``(new_manifest, mismatched_files)``."""
    path = Path(manifest_path)
    try:
        old = json.loads(path.read_text())
        command, params = old["command"], old["params"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read manifest {manifest_path!r}: {exc}") from exc
    if command not in RUNNERS:
        raise ConfigError(f"manifest names unknown command {command!r}")
    new = execute(command, params, Path(out) if out else path.parent)
    bad = sorted(k for k in set(old["outputs"]) | set(new["outputs"])
                 if old["outputs"].get(k) != new["outputs"].get(k))
    return new, bad


def _print_tail(command, out: Path):
    if command == "theta-match":
        print((out / "theta_match.csv").read_text(), end="")
    elif command == "pencil" and (out / "pencil_summary.json").exists():
        s = json.loads((out / "pencil_summary.json").read_text())
        print(f"max Re s = {s['max_real_exact']}  max Re s_hat = {s['max_real_deformed']}  "
              f"signs {s['sign_exact']}/{s['sign_deformed']}  stiffness = {s['stiffness_ratio']}")
    elif command == "simulate":
        s = json.loads((out / "simulation_summary.json").read_text())
        print(f"status={s['status']} t_final={s['t_final']} max|z(t_final)|={s['max_abs_final']}")
    print(f"wrote {out / MANIFEST}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "replay":
            new, bad = replay(args.manifest, args.out)
            if bad:
                print(f"replay mismatch in: {', '.join(bad)}", file=sys.stderr)
                return EXIT_MISMATCH
            print(f"replay identical ({len(new['outputs'])} files)")
            return EXIT_OK
        params = resolve_params(args)
        out = Path(args.out)
        execute(args.command, params, out)
        _print_tail(args.command, out)
        return EXIT_OK
    except Exception as exc:  # map library errors to the exit-code contract
        for kinds, code in _EXIT_FOR:
            if isinstance(exc, kinds):
                extra = ""
                if isinstance(exc, NoConvergence) and exc.step is not None:
                    extra = f" (step {exc.step})"
                if isinstance(exc, NoSignChange) and exc.endpoints is not None:
                    extra = f" (endpoint mismatches {exc.endpoints[0]:.6g}, {exc.endpoints[1]:.6g})"
                print(f"error: {exc}{extra}", file=sys.stderr)
                return code
        if isinstance(exc, OSError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
