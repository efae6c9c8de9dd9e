"""Command-line front end.

Subcommands ``check``, ``solve``, ``density``, ``classify`` and
``validate-mc``. Options come from flags, optionally layered over a JSON
config file (flags win). Exit codes: 0 success, 2 usage or input error,
3 numerical failure. ``QVE_LOG`` selects the log level.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .density import detect_support, extract_density, moments, write_density_csv
from .ensembles import model_from_dict
from .errors import QveError, QveInputError
from .model import check_assumptions
from .montecarlo import mc_report, sample_spectra, write_samples_csv
from .singularity import analyze
from .solver import default_eta_ladder, solve_grid

log = logging.getLogger("qvelab")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "model": None,
    "ensemble": None,
    "n": 200,
    "alpha": 3.0,
    "beta": 1.0,
    "gamma": None,
    "delta": None,
    "lam": 1.0,
    "a_value": 1.0,
    "tau_min": -3.0,
    "tau_max": 3.0,
    "tau_count": 601,
    "eta_max": 1e-1,
    "eta_min": 1e-6,
    "eta_ratio": 10 ** -0.5,
    "etas": None,
    "tol": 1e-11,
    "extrapolation": "richardson",
    "threshold": None,
    "compress": True,
    "cusp_tol": 0.05,
    "out": ".",
    "workers": None,
    "k_max": 10,
    "strip_eps": None,
    "probe_eps": 1e-4,
    "n_mat": 2000,
    "seeds": [1, 2, 3, 4, 5],
}


class ConfigError(QveInputError):
    pass


# -- output helpers ------------------------------------------------------------

def _encode(obj, out):
    if isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        out.append("%.17g" % x if math.isfinite(x) else json.dumps(x))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)) + ": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    out = []
    _encode(obj, out)
    return "".join(out) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    model_spec: dict
    taus: np.ndarray
    etas: np.ndarray
    tol: float
    out: Path
    workers: int
    options: dict = field(default_factory=dict)


def _model_spec(cfg: dict) -> dict:
    if cfg["model"] is not None and cfg["ensemble"] is not None:
        raise ConfigError("give either --model or --ensemble, not both")
    if isinstance(cfg["model"], dict):
        return cfg["model"]
    if cfg["model"] is not None:
        try:
            return json.loads(Path(cfg["model"]).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read model file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file is not valid JSON: {exc}") from None
    kind = cfg["ensemble"] or "semicircle"
    kernel = {"type": kind, "n": int(cfg["n"])}
    if kind == "block":
        kernel.update(alpha=cfg["alpha"], beta=cfg["beta"])
        if cfg["gamma"] is not None:
            kernel["gamma"] = cfg["gamma"]
        if cfg["delta"] is not None:
            kernel["delta"] = cfg["delta"]
    elif kind == "deformed":
        kernel.update({"lambda": cfg["lam"], "a_value": cfg["a_value"]})
    return {"kernel": kernel}


def build_config(command: str, args: argparse.Namespace) -> RunConfig:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val

    if int(cfg["tau_count"]) < 2:
        raise ConfigError("tau_count must be at least 2")
    if not float(cfg["tau_min"]) < float(cfg["tau_max"]):
        raise ConfigError("empty tau range: tau_min must be below tau_max")
    taus = np.linspace(float(cfg["tau_min"]), float(cfg["tau_max"]), int(cfg["tau_count"]))
    if cfg["etas"] is not None:
        etas = np.asarray(cfg["etas"], dtype=float)
    else:
        if not (0 < float(cfg["eta_min"]) < float(cfg["eta_max"])) or not (0 < float(cfg["eta_ratio"]) < 1):
            raise ConfigError("eta ladder needs 0 < eta_min < eta_max and 0 < eta_ratio < 1")
        etas = default_eta_ladder(float(cfg["eta_max"]), float(cfg["eta_min"]), float(cfg["eta_ratio"]))
    if etas.size < 1 or np.any(etas <= 0) or np.any(np.diff(etas) >= 0):
        raise ConfigError("eta ladder must be positive and strictly decreasing")
    if float(cfg["tol"]) <= 0:
        raise ConfigError("tol must be positive")
    if command == "validate-mc":
        if not cfg["seeds"]:
            raise ConfigError("at least one seed is required")
        if int(cfg["n_mat"]) < 1:
            raise ConfigError("n_mat must be positive")
    workers = cfg["workers"] or os.cpu_count() or 1
    if int(workers) < 1:
        raise ConfigError("workers must be positive")
    return RunConfig(command=command, model_spec=_model_spec(cfg), taus=taus, etas=etas,
                     tol=float(cfg["tol"]), out=Path(cfg["out"]), workers=int(workers), options=cfg)


# -- commands ------------------------------------------------------------------

def _profile(config: RunConfig, model):
    grid = solve_grid(model, config.taus, config.etas, tol=config.tol,
                      compress=bool(config.options["compress"]), workers=config.workers)
    profile = extract_density(grid, config.options["extrapolation"])
    detect_support(profile, config.options["threshold"])
    return grid, profile


def cmd_check(config: RunConfig, model) -> dict:
    report = check_assumptions(model, k_max=int(config.options["k_max"]),
                               strip_eps=config.options["strip_eps"],
                               probe_eps=float(config.options["probe_eps"]))
    data = report.to_dict()
    text = dumps(data)
    atomic_write(config.out / "check.json", text)
    sys.stdout.write(text)
    return data


def cmd_solve(config: RunConfig, model) -> None:
    grid = solve_grid(model, config.taus, config.etas, tol=config.tol,
                      compress=bool(config.options["compress"]), workers=config.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "eta", "x_index", "re_m", "im_m", "residual"])
    for tau, eta, x, re, im, r in grid.rows():
        w.writerow(["%.17g" % tau, "%.17g" % eta, x, "%.17g" % re, "%.17g" % im, "%.17g" % r])
    atomic_write(config.out / "solution.csv", buf.getvalue())


def cmd_density(config: RunConfig, model) -> None:
    _, profile = _profile(config, model)
    mom = moments(profile)
    dev = float(np.max(np.abs(mom[:, 1] + model.a)))
    log.info("first moment check: max |mu1 + a| = %.3g", dev)
    buf = io.StringIO()
    write_density_csv(profile, buf)
    support_text = dumps(profile.support_dicts())
    atomic_write(config.out / "density.csv", buf.getvalue())
    atomic_write(config.out / "support.json", support_text)


def cmd_classify(config: RunConfig, model) -> list:
    _, profile = _profile(config, model)
    reports = analyze(profile, cusp_tol=float(config.options["cusp_tol"]))
    data = [r.to_dict() for r in reports]
    atomic_write(config.out / "singularities.json", dumps(data))
    return data


def cmd_validate_mc(config: RunConfig, model) -> dict:
    kap = model.kappa
    taus = config.taus
    if taus[0] > -kap or taus[-1] < kap:
        lo, hi = min(taus[0], -kap), max(taus[-1], kap)
        taus = np.linspace(lo, hi, max(taus.size, 1201))
        config = RunConfig(**{**config.__dict__, "taus": taus})
    _, profile = _profile(config, model)
    samples = sample_spectra(model, int(config.options["n_mat"]), config.options["seeds"],
                             workers=config.workers)
    report = mc_report(samples, profile)
    buf = io.StringIO()
    write_samples_csv(samples, buf)
    atomic_write(config.out / "samples.csv", buf.getvalue())
    atomic_write(config.out / "mc_report.json", dumps(report))
    return report


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "density": cmd_density,
    "classify": cmd_classify,
    "validate-mc": cmd_validate_mc,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default options")
    common.add_argument("--model", help="model JSON file")
    common.add_argument("--ensemble", choices=["semicircle", "constant", "block", "deformed", "holder"])
    common.add_argument("--n", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--lam", type=float, help="kernel level of the deformed ensemble")
    common.add_argument("--a-value", dest="a_value", type=float)
    common.add_argument("--tau-min", dest="tau_min", type=float)
    common.add_argument("--tau-max", dest="tau_max", type=float)
    common.add_argument("--tau-count", dest="tau_count", type=int)
    common.add_argument("--eta-max", dest="eta_max", type=float)
    common.add_argument("--eta-min", dest="eta_min", type=float)
    common.add_argument("--eta-ratio", dest="eta_ratio", type=float)
    common.add_argument("--etas", type=float, nargs="+")
    common.add_argument("--tol", type=float)
    common.add_argument("--extrapolation", choices=["last", "richardson"])
    common.add_argument("--threshold", type=float)
    common.add_argument("--no-compress", dest="compress", action="store_const", const=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "check":
            p.add_argument("--k-max", dest="k_max", type=int)
            p.add_argument("--strip-eps", dest="strip_eps", type=float)
            p.add_argument("--probe-eps", dest="probe_eps", type=float)
        if name == "classify":
            p.add_argument("--cusp-tol", dest="cusp_tol", type=float)
        if name == "validate-mc":
            p.add_argument("--n-mat", dest="n_mat", type=int)
            p.add_argument("--seeds", type=int, nargs="*")
    return parser


def _setup_logging():
    level = os.environ.get("QVE_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = build_config(args.command, args)
        model = model_from_dict(config.model_spec)
    except (QveInputError, ValueError, TypeError, KeyError) as exc:
        print(f"qvelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](config, model)
    except QveInputError as exc:
        print(f"qvelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QveError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"qvelab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
