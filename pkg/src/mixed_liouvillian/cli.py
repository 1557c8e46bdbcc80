"""
Command-line front end for mixed non-Hermitian / Lindblad propagation.

    mixed-liouvillian run|sweep|poles|oracle|presets [--config FILE] [--preset NAME]
        [--gamma-c X|LIST] [--rho0 LABEL] [--t START:STOP:COUNT] [--out DIR] [--jobs N]

Exit codes: 0 success, 2 invariant violation or numerical failure, 3 bad
configuration.  Every failure prints one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import microscopic, models
from .errors import ConfigError, MixedLiouvillianError, PropagationError
from .liouville import JumpChannel, SystemModel, build_generators, check_density_matrix
from .propagator import (evolution_operators, doubled_space_propagator, gamma_c_sweep,
                         projector_traces, propagate, semigroup_defect, sweep_to_json)
from .spectral import build_extended_matrix, build_pencil, classify_poles, decompose

log = logging.getLogger(__name__)

OUT_ENV = "MIXED_LIOUVILLIAN_OUT"
DEFAULT_TIMES = {"start": 0.0, "stop": 50.0, "count": 501}
# microscopic tolerance is stated on this horizon
ORACLE_TIMES = {"start": 0.0, "stop": 30.0, "count": 121}
DEFAULT_OUTPUTS = ("trace", "populations", "coherences", "fidelity_nh", "fidelity_lindblad",
                   "eigenvalues", "projector_traces")
ORACLE_TOL = {"doubled_exp": 1e-8, "microscopic": 2e-2}
EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 2, 3


def fmt(x):
    """Fixed 17-significant-digit formatting used in every CSV."""
    return f"{float(x):.17g}"


# -- config -----------------------------------------------------------------

def load_schema():
    text = resources.files(__package__).joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def json_pointer(parts):
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _most_specific(err):
    # descend into oneOf branches only when some branch got further into the document
    while err.context:
        deepest = max(len(e.absolute_path) for e in err.context)
        if deepest <= len(err.absolute_path):
            break
        err = jsonschema.exceptions.best_match(
            e for e in err.context if len(e.absolute_path) == deepest)
    return err


def validate_config(cfg):
    """Raise ConfigError pointing at the most specific schema violation."""
    validator = jsonschema.Draft202012Validator(load_schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if err is not None:
        err = _most_specific(err)
        raise ConfigError(err.message, json_pointer(err.absolute_path))


def _matrix(raw, path):
    try:
        rows = [[complex(e["re"], e.get("im", 0.0)) if isinstance(e, dict) else complex(e)
                 for e in row] for row in raw]
        a = np.array(rows, dtype=complex)
    except ValueError as exc:
        raise ConfigError(f"not a rectangular matrix: {exc}", path) from None
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError("matrix must be square", path)
    return a


@dataclass
class Scenario:
    name: str
    model: SystemModel
    state_labels: tuple
    gamma_c: list
    rho0: np.ndarray
    times: np.ndarray
    outputs: tuple
    oracle: object


def _build_model(spec):
    """Return ``(name, model_without_gamma_c, labels, preset_or_None)``."""
    if isinstance(spec, str):
        try:
            preset = models.get_preset(spec)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0]), "/model") from None
        return spec, preset.model(), preset.state_labels(), preset
    kind = spec["type"]
    try:
        if kind == "two_level":
            gamma = spec.get("gamma", 0.0)
            if "sqrt_gamma_over_2pi" in spec:
                gamma = models.rate_from_coupling(spec["sqrt_gamma_over_2pi"])
            p = models.TwoLevelParams(spec["delta_e"], spec["v_eg"], gamma,
                                      spec.get("gamma_pump", 0.0), spec.get("gamma_z", 0.0))
            return "two_level", models.two_level(p), ("g", "e"), None
        if kind == "m_level":
            couplings = {(int(k[0]), int(k[1])): v for k, v in spec["couplings"].items()}
            p = models.MLevelParams(tuple(spec["delta"]), couplings, dict(spec["gamma"]),
                                    dict(spec.get("gamma_prime", {})))
            return "m_level", models.m_level(p), models.M_LEVEL_STATES, None
        h = _matrix(spec["hamiltonian"], "/model/hamiltonian")
        channels = []
        for i, ch in enumerate(spec.get("channels", [])):
            op = _matrix(ch["operator"], f"/model/channels/{i}/operator")
            channels.append(JumpChannel(op, ch.get("label", f"F{i + 1}"), ch.get("kind", "decay")))
        labels = tuple(spec.get("states") or (str(i) for i in range(h.shape[0])))
        if len(labels) != h.shape[0]:
            raise ConfigError("one label per basis state required", "/model/states")
        return "custom", SystemModel(h, channels), labels, None
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "/model") from None


def _gamma_c_values(raw):
    if isinstance(raw, (int, float)):
        return [float(raw)]
    if isinstance(raw, list):
        return [float(g) for g in raw]
    n = raw["points"]
    lo, hi = float(raw["from"]), float(raw["to"])
    if raw.get("log", False):
        if lo <= 0 or hi <= 0:
            raise ConfigError("log-spaced sweep needs positive bounds", "/gamma_c")
        return [float(g) for g in np.logspace(math.log10(lo), math.log10(hi), n)]
    return [float(g) for g in np.linspace(lo, hi, n)]


def _times(raw):
    if isinstance(raw, dict):
        if raw["stop"] <= raw["start"]:
            raise ConfigError("stop must exceed start", "/times")
        times = np.linspace(raw["start"], raw["stop"], raw["count"])
    else:
        times = np.asarray(raw, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ConfigError("times must be strictly ascending", "/times")
    return times


def _initial_state(raw, labels, n):
    if isinstance(raw, str):
        try:
            return models.initial_state(raw, labels)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0]), "/initial_state") from None
    rho = _matrix(raw, "/initial_state")
    if rho.shape[0] != n:
        raise ConfigError(f"initial state must be {n}x{n}", "/initial_state")
    bad = check_density_matrix(rho, tol_herm=1e-9)
    if bad is not None:
        raise ConfigError(f"initial state violates {bad}", "/initial_state")
    return rho


def parse_t_flag(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--t expects START:STOP:COUNT, got {text!r}", "/times")
    try:
        return {"start": float(parts[0]), "stop": float(parts[1]), "count": int(parts[2])}
    except ValueError:
        raise ConfigError(f"--t expects START:STOP:COUNT, got {text!r}", "/times") from None


def parse_gamma_c_flag(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--gamma-c expects a number or comma list, got {text!r}",
                          "/gamma_c") from None
    if not vals:
        raise ConfigError("--gamma-c is empty", "/gamma_c")
    return vals[0] if len(vals) == 1 else vals


def merged_config(args):
    """Config file contents with command-line flags applied on top."""
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", "") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object", "")
        cfg = copy.deepcopy(cfg)
    else:
        cfg = {"schema_version": 1}
    if getattr(args, "preset", None):
        cfg["model"] = args.preset
    if getattr(args, "gamma_c", None) is not None:
        cfg["gamma_c"] = parse_gamma_c_flag(args.gamma_c)
    if getattr(args, "rho0", None):
        cfg["initial_state"] = args.rho0
    if getattr(args, "t", None):
        cfg["times"] = parse_t_flag(args.t)
    if "model" not in cfg:
        raise ConfigError("no model given; use --preset or a config file", "/model")
    return cfg


def resolve(cfg):
    validate_config(cfg)
    name, model, labels, preset = _build_model(cfg["model"])
    if "gamma_c" in cfg:
        gammas = _gamma_c_values(cfg["gamma_c"])
    elif preset is not None:
        gammas = [preset.default_gamma_c]
    else:
        raise ConfigError("gamma_c is required for inline models", "/gamma_c")
    if "initial_state" in cfg:
        rho0 = _initial_state(cfg["initial_state"], labels, model.dim)
    elif preset is not None:
        rho0 = preset.rho0()
    else:
        raise ConfigError("initial_state is required for inline models", "/initial_state")
    times = _times(cfg.get("times", DEFAULT_TIMES))
    outputs = tuple(cfg.get("outputs", DEFAULT_OUTPUTS))
    return Scenario(name, model, tuple(labels), gammas, rho0, times, outputs, cfg.get("oracle"))


# -- artifacts --------------------------------------------------------------

def output_dir(args):
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def trajectory_csv(traj, outputs, labels):
    n = traj.states.shape[1]
    cols, series = ["t", "trace"], [traj.times, traj.trace]
    for i in range(n):
        for j in range(n):
            want = ("populations" in outputs and i == j) or ("coherences" in outputs and i < j)
            if want:
                name = f"rho_{labels[i]}{labels[j]}"
                cols += [f"{name}_re", f"{name}_im"]
                series += [traj.states[:, i, j].real, traj.states[:, i, j].imag]
    for key in ("fidelity_nh", "fidelity_lindblad"):
        if key in outputs:
            cols.append(key)
            series.append(traj.observables[key])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in zip(*series):
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def sweep_csv(rows):
    n_eig = max((len(r.eigenvalues) for r in rows if r.ok), default=0)
    cols = ["gamma_c"]
    for i in range(n_eig):
        cols += [f"lambda_{i}_re", f"lambda_{i}_im"]
    cols += ["t0", "t_rest", "error"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        if r.ok:
            eig = [fmt(v) for l in r.eigenvalues for v in (l.real, l.imag)]
            w.writerow([fmt(r.gamma_c), *eig, fmt(r.t0), fmt(r.t_rest), ""])
        else:
            w.writerow([fmt(r.gamma_c), *([""] * (2 * n_eig)), "", "", r.error])
    return buf.getvalue()


def defect_report(dec, times, points=5):
    grid = np.linspace(times[0], times[-1], points)
    table = [[semigroup_defect(dec, t, tau) for tau in grid] for t in grid]
    return {"grid": grid.tolist(), "defect": table, "max": float(np.max(table))}


def oracle_report(model, rho0, times, oracle):
    if oracle == "doubled_exp" or oracle is None:
        gens = build_generators(model)
        dec = decompose(model, gens)
        if model.gamma_c == 0:
            raise ConfigError("doubled_exp oracle needs gamma_c > 0", "/gamma_c")
        ext = build_extended_matrix(build_pencil(model, gens))
        us = evolution_operators(dec, times)
        dev = max(float(np.linalg.norm(u - doubled_space_propagator(ext, t)))
                  for u, t in zip(us, times))
        tol = ORACLE_TOL["doubled_exp"]
        return {"method": "doubled_exp", "gamma_c": model.gamma_c, "max_frobenius": dev,
                "tolerance": tol, "pass": dev <= tol}
    opts = oracle["microscopic"]
    spec = microscopic.default_continuum(model, k_count=opts.get("k", 64),
                                         half_bandwidth=opts.get("w"))
    ref = propagate(decompose(model), rho0, times)
    traj = microscopic.run_microscopic(microscopic.build_microscopic(model, spec), rho0, times)
    sup, tr = microscopic.trajectory_deviation(traj, ref)
    tol = ORACLE_TOL["microscopic"]
    return {"method": "microscopic", "gamma_c": model.gamma_c, "k": spec.k_count,
            "w": spec.half_bandwidth, "grid": spec.grid, "sup_error": sup, "trace_error": tr,
            "tolerance": tol, "pass": sup <= tol}


def _write(path, text):
    path.write_text(text)
    return str(path)


def _single_gamma_c(sc, command):
    if len(sc.gamma_c) != 1:
        raise ConfigError(f"{command} needs a single gamma_c; use sweep for lists", "/gamma_c")
    return sc.model.with_gamma_c(sc.gamma_c[0])


# -- commands ---------------------------------------------------------------

def cmd_run(args):
    sc = resolve(merged_config(args))
    model = _single_gamma_c(sc, "run")
    out = output_dir(args)
    gens = build_generators(model)
    dec = decompose(model, gens)
    need_fid = {"fidelity_nh", "fidelity_lindblad"} & set(sc.outputs)
    traj = propagate(dec, sc.rho0, sc.times, generators=gens if need_fid else None)
    written = [_write(out / "trajectory.csv", trajectory_csv(traj, sc.outputs, sc.state_labels))]
    if "eigenvalues" in sc.outputs:
        written.append(_write(out / "poles.json", classify_poles(dec, model).to_json(indent=1)))
    if "projector_traces" in sc.outputs:
        rep = projector_traces(dec, sc.rho0)
        written.append(_write(out / "projector_traces.json", json.dumps(rep.to_dict(), indent=1)))
    if "semigroup_defect" in sc.outputs:
        written.append(_write(out / "semigroup_defect.json",
                              json.dumps(defect_report(dec, sc.times), indent=1)))
    if sc.oracle is not None:
        rep = oracle_report(model, sc.rho0, sc.times, sc.oracle)
        written.append(_write(out / "oracle.json", json.dumps(rep, indent=1)))
    print(json.dumps({"scenario": sc.name, "gamma_c": model.gamma_c, "written": written}))
    return EXIT_OK


def cmd_sweep(args):
    sc = resolve(merged_config(args))
    out = output_dir(args)
    rows = gamma_c_sweep(sc.model, sc.gamma_c, sc.rho0, sc.times, jobs=args.jobs)
    written = [_write(out / "sweep.csv", sweep_csv(rows)), _write(out / "sweep.json", sweep_to_json(rows))]
    failed = [r for r in rows if not r.ok]
    print(json.dumps({"scenario": sc.name, "points": len(rows), "failed": len(failed),
                      "written": written}))
    if len(failed) == len(rows):
        _error_json("SweepFailed", "every sweep point failed", EXIT_INVARIANT,
                    errors=[r.error for r in failed])
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_poles(args):
    sc = resolve(merged_config(args))
    model = _single_gamma_c(sc, "poles")
    report = classify_poles(decompose(model), model).to_json(indent=1)
    if args.out or os.environ.get(OUT_ENV):
        _write(output_dir(args) / "poles.json", report)
    print(report)
    return EXIT_OK


def cmd_oracle(args):
    cfg = merged_config(args)
    if args.k is not None or args.w is not None or args.method == "microscopic":
        micro = {}
        if args.k is not None:
            micro["k"] = args.k
        if args.w is not None:
            micro["w"] = args.w
        cfg["oracle"] = {"microscopic": micro}
    elif args.method == "doubled_exp":
        cfg["oracle"] = "doubled_exp"
    cfg.setdefault("times", ORACLE_TIMES)
    sc = resolve(cfg)
    model = _single_gamma_c(sc, "oracle")
    rep = oracle_report(model, sc.rho0, sc.times, sc.oracle)
    text = json.dumps(rep, indent=1)
    if args.out or os.environ.get(OUT_ENV):
        _write(output_dir(args) / "oracle.json", text)
    print(text)
    return EXIT_OK


def cmd_presets(args):
    listing = [
        {"name": p.name, "description": p.description, "gamma_c": list(p.gamma_c_values),
         "initial_state": p.initial_state, "states": list(p.state_labels()), "note": p.note}
        for p in models.PRESETS.values()
    ]
    print(json.dumps(listing, indent=1))
    return EXIT_OK


# -- entry point ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, "")


def build_parser():
    p = _Parser(prog="mixed-liouvillian", description=__doc__.splitlines()[1].strip() or None)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="scenario JSON file")
        sp.add_argument("--preset", help="built-in model name (see `presets`)")
        sp.add_argument("--gamma-c", dest="gamma_c", help="value or comma-separated list")
        sp.add_argument("--rho0", help="initial basis state label, e.g. ee or g3")
        sp.add_argument("--t", help="time grid START:STOP:COUNT")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker threads for sweeps (results do not depend on it)")

    for name, fn, helptext in [
        ("run", cmd_run, "propagate one scenario"),
        ("sweep", cmd_sweep, "spectra and projector traces over gamma_c values"),
        ("poles", cmd_poles, "pole report as JSON"),
        ("oracle", cmd_oracle, "compare against an independent propagator"),
    ]:
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.set_defaults(func=fn)
        if name == "oracle":
            sp.add_argument("--method", choices=["doubled_exp", "microscopic"])
            sp.add_argument("--k", type=int, help="continuum states per channel")
            sp.add_argument("--w", type=float, help="continuum half bandwidth")
    sp = sub.add_parser("presets", help="list built-in models")
    sp.set_defaults(func=cmd_presets)
    return p


def _error_json(kind, message, code, **extra):
    payload = {"error": kind, "message": message, "exit_code": code, **extra}
    print(json.dumps(payload), file=sys.stderr)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ConfigError as exc:
        _error_json("ConfigError", exc.message, EXIT_CONFIG, path=exc.path)
        return EXIT_CONFIG
    except PropagationError as exc:
        _error_json("PropagationError", str(exc), EXIT_INVARIANT, step=exc.step,
                    time=exc.time, invariant=exc.invariant)
        return EXIT_INVARIANT
    except MixedLiouvillianError as exc:
        _error_json(type(exc).__name__, str(exc), EXIT_INVARIANT)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
