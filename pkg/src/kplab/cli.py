"""Command-line front end.

``kplab COMMAND [flags]`` with commands ``bands``, ``lyapunov``,
``idos``, ``green``, ``transport``, ``deviations`` and ``verify``.

A single JSON (or, on interpreters that ship ``tomllib``, TOML) config
file can supply any of a command's parameters; explicit flags override
the file, and keys the command does not know are errors.  Every run
writes a ``<command>_manifest.json`` next to its artifacts holding the
fully resolved configuration, the code version and the seed, so
re-running the same manifest reproduces every artifact byte for byte
regardless of the worker count.

Results go to stdout (fit summaries as JSON, verify as one line per
check); progress notes and artifact paths go to stderr.  Floats are
printed with 17 significant digits, CSV files carry a header row and LF
line endings.

Exit codes: 0 success, 1 a verify run reported failures, 2 bad flags or
config, 3 a computation did not converge (partial artifacts are still
written when they exist).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, acceptance, lyapunov, spectral, transport, weyl
from .ensemble import DisorderModel, Realization, sample
from .prufer import CriticalEnergy
from .transfer import band_edges, critical_energy

__all__ = ["main"]


class SchemaError(ValueError):
    """Bad flag value, bad config value, or an unknown config key."""


# -- formatting ------------------------------------------------------------


def _fmt(x: float) -> str:
    """17 significant digits; enough to round-trip any double."""
    return format(float(x), ".17g")


def _json_text(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if obj is True or obj is False:
        return "true" if obj else "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [_json_text(v, indent + 1) for v in obj]
        if sum(len(s) for s in items) < 60 and all("\n" not in s for s in items):
            return "[" + ", ".join(items) + "]"
        body = ",\n".join(inner + s for s in items)
        return "[\n" + body + "\n" + pad + "]"
    if isinstance(obj, dict):
        items = [f"{json.dumps(str(k))}: {_json_text(v, indent + 1)}"
                 for k, v in obj.items()]
        body = ",\n".join(inner + s for s in items)
        return "{\n" + body + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_json(path: str, obj) -> None:
    _write_text(path, _json_text(obj) + "\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = [str(v) if isinstance(v, (int, np.integer)) else _fmt(v)
                 for v in row]
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- option schema ----------------------------------------------------------


@dataclass(frozen=True)
class Opt:
    """One command parameter: flag syntax, config coercion, default."""

    name: str            # flag spelling, dashes
    kind: str            # int | float | str | grid | linspace | pair | intlist
    default: object
    help: str
    choices: tuple = ()

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


def _parse_grid(text: str, geometric: bool) -> np.ndarray:
    lo, hi, n = text.split(":")
    lo, hi, n = float(lo), float(hi), int(n)
    if n < 1 or not lo < hi:
        raise ValueError("grid wants LO < HI and N >= 1")
    return np.geomspace(lo, hi, n) if geometric else np.linspace(lo, hi, n)


def _coerce(opt: Opt, value):
    """Validate a flag string or a config-native value."""
    try:
        if opt.kind == "int":
            if isinstance(value, bool):
                raise ValueError("expected an integer")
            return int(value)
        if opt.kind == "float":
            return float(value)
        if opt.kind == "str":
            value = str(value)
            if opt.choices and value not in opt.choices:
                raise ValueError(f"must be one of {', '.join(opt.choices)}")
            return value
        if opt.kind in ("grid", "linspace"):
            if isinstance(value, str):
                return _parse_grid(value, opt.kind == "grid")
            arr = np.asarray([float(v) for v in value], dtype=float)
            if arr.size < 1:
                raise ValueError("empty grid")
            return arr
        if opt.kind == "pair":
            if isinstance(value, str):
                lo, hi = (float(t) for t in value.split(":"))
            else:
                lo, hi = (float(t) for t in value)
            return (lo, hi)
        if opt.kind == "intlist":
            if isinstance(value, str):
                return [int(float(t)) for t in value.split(",")]
            return [int(t) for t in value]
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"--{opt.name}: {exc}") from exc
    raise SchemaError(f"unhandled option kind {opt.kind!r}")


GLOBAL_OPTS = (
    Opt("seed", "int", 42, "master seed for every random draw"),
    Opt("out", "str", ".", "directory for artifacts"),
    Opt("threads", "int", None,
        "worker pool size (default: KP_THREADS or logical cores)"),
)

_MODEL_HELP = "coupling law, e.g. uniform:0.5,1.5 or twopoint:1,0.5,3"

COMMAND_OPTS: dict[str, tuple[Opt, ...]] = {
    "bands": (
        Opt("v", "float", 1.0, "coupling strength of the periodic operator"),
        Opt("l-max", "int", 3, "number of bands"),
    ),
    "lyapunov": (
        Opt("model", "str", "uniform:0.5,1.5", _MODEL_HELP),
        Opt("l", "int", 1, "critical level"),
        Opt("side", "str", "below", "side of the critical energy",
            choices=("below", "above")),
        Opt("eps-grid", "grid", None,
            "LO:HI:N geometric grid of distances to the critical energy"),
        Opt("n-steps", "int", None, "steps per point (default: adaptive)"),
        Opt("samples", "int", 32, "realizations per grid point"),
    ),
    "idos": (
        Opt("model", "str", "uniform:0.5,1.5", _MODEL_HELP),
        Opt("l", "int", 1, "critical level"),
        Opt("eps-grid", "grid", None, "LO:HI:N geometric grid"),
        Opt("n-cells", "int", 200, "box size per realization"),
        Opt("samples", "int", 200, "boxes per grid point"),
    ),
    "green": (
        Opt("model", "str", "uniform:0.5,1.5", _MODEL_HELP + " (or free)"),
        Opt("z-re", "float", critical_energy(1) - 0.01, "Re z"),
        Opt("z-im", "float", 0.05, "Im z (> 0)"),
        Opt("a", "float", 0.5, "cut point of the two half-lines"),
        Opt("y", "float", 10.25, "fixed second argument of the kernel"),
        Opt("x-grid", "linspace", "0.5:20.5:21", "LO:HI:N first arguments"),
        Opt("rtol", "float", 1e-10, "half-line truncation tolerance"),
    ),
    "transport": (
        Opt("model", "str", "uniform:0.5,1.5", _MODEL_HELP + " (or free)"),
        Opt("q", "float", 4.0, "moment order"),
        Opt("t-grid", "grid", "1e2:1e4:7", "LO:HI:N geometric time grid"),
        Opt("samples", "int", 8, "realizations per time"),
        Opt("l", "int", 1, "critical level fixing the energy window"),
        Opt("a", "float", 0.5, "localization center"),
        Opt("alpha", "float", 0.3, "window/cutoff exponent"),
        Opt("c8", "float", 1.0, "site-budget prefactor"),
        Opt("energy-window", "pair", None,
            "LO:HI explicit energy window (needs --x-max)"),
        Opt("x-max", "int", None, "explicit truncation radius in cells"),
    ),
    "deviations": (
        Opt("model", "str", "uniform:0.5,1.5", _MODEL_HELP),
        Opt("l", "int", 1, "critical level"),
        Opt("alpha", "float", 0.2, "threshold exponent N^(1/2+alpha)"),
        Opt("sizes", "intlist", [1_000, 10_000, 100_000], "window sizes N"),
        Opt("samples", "int", 200, "realizations per size"),
    ),
    "verify": (
        Opt("suite", "str", "all", "which acceptance suite to run",
            choices=tuple(acceptance.SUITES)),
    ),
}


# -- config/flag resolution --------------------------------------------------


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    if path.endswith(".toml"):
        data = _load_toml(raw, path)
    else:
        try:
            data = json.loads(raw.decode())
        except (UnicodeDecodeError, json.JSONDecodeError):
            data = _load_toml(raw, path)
    if not isinstance(data, dict):
        raise SchemaError(f"config {path} must hold a table at top level")
    return data


def _load_toml(raw: bytes, path: str) -> dict:
    try:
        import tomllib
    except ImportError:  # Python 3.10
        import tomli as tomllib
    try:
        return tomllib.loads(raw.decode())
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise SchemaError(f"cannot parse config {path}: {exc}") from exc


def _resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults < config file < explicit flags; reject unknowns."""
    opts = COMMAND_OPTS[command] + GLOBAL_OPTS
    config = _load_config(args.config) if args.config else {}
    known = {o.dest for o in opts}
    unknown = {str(k).replace("-", "_") for k in config} - known
    if unknown:
        raise SchemaError(
            f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
    by_dest = {str(k).replace("-", "_"): v for k, v in config.items()}
    resolved = {}
    for opt in opts:
        flag_value = getattr(args, opt.dest)
        if flag_value is not None:
            resolved[opt.dest] = _coerce(opt, flag_value)
        elif opt.dest in by_dest:
            resolved[opt.dest] = _coerce(opt, by_dest[opt.dest])
        else:
            resolved[opt.dest] = opt.default
    return resolved


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value]
    if isinstance(value, tuple):
        return list(value)
    return value


def _manifest(command: str, cfg: dict, artifacts: list[str]) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "config": {k: _jsonable(v) for k, v in cfg.items() if k != "out"},
        "artifacts": [os.path.basename(a) for a in artifacts],
    }
    path = os.path.join(cfg["out"], f"{command}_manifest.json")
    _write_json(path, payload)
    _note(f"wrote {path}")


def _artifact(cfg: dict, name: str) -> str:
    os.makedirs(cfg["out"], exist_ok=True)
    return os.path.join(cfg["out"], name)


def _model_or_free(text: str) -> DisorderModel | None:
    if text.strip().lower() == "free":
        return None
    try:
        return DisorderModel.parse(text)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def _fit_summary(fit: lyapunov.ScalingFit, theory: dict, passed: bool) -> dict:
    return {
        "fit": {
            "exponent": fit.exponent,
            "exponent_stderr": fit.exponent_stderr,
            "coefficient": fit.coefficient,
            "coefficient_stderr": fit.coefficient_stderr,
            "residual": fit.residual,
        },
        "theory": theory,
        "pass": passed,
    }


# -- commands ----------------------------------------------------------------


def _cmd_bands(cfg: dict) -> int:
    if cfg["l_max"] < 1:
        raise SchemaError("--l-max must be >= 1")
    bands = band_edges(cfg["v"], cfg["l_max"])
    csv = _artifact(cfg, "bands.csv")
    _write_csv(csv, ["l", "E_low", "E_high"],
               [[b.index, b.lower, b.upper] for b in bands])
    _note(f"wrote {csv}")
    _manifest("bands", cfg, [csv])
    for b in bands:
        print(f"{b.index},{_fmt(b.lower)},{_fmt(b.upper)}")
    return 0


def _cmd_lyapunov(cfg: dict) -> int:
    model = DisorderModel.parse(cfg["model"])
    ce = CriticalEnergy.for_model(cfg["l"], model)
    csv = _artifact(cfg, "lyapunov.csv")
    try:
        fit = lyapunov.fit_scaling(
            cfg["side"], ce, model, cfg["eps_grid"],
            n_steps=cfg["n_steps"], samples=cfg["samples"], seed=cfg["seed"])
    except lyapunov.ConvergenceError as err:
        _write_csv(csv, ["epsilon", "gamma_mean", "gamma_stderr"],
                   [[e, v, s] for e, v, s in
                    zip(err.epsilon_grid, err.values, err.stderrs)])
        _note(f"wrote {csv}")
        _manifest("lyapunov", cfg, [csv])
        _note(f"lyapunov fit did not converge: {err}")
        return 3
    if cfg["side"] == "below":
        theory = {"exponent": 1.0, "coefficient": ce.d_minus}
        passed = (abs(fit.exponent - 1.0) <= 0.10
                  and abs(fit.coefficient / ce.d_minus - 1.0) <= 0.15)
    else:
        theory = {"exponent": 0.5, "coefficient": ce.d_plus}
        passed = (abs(fit.exponent - 0.5) <= 0.05
                  and abs(fit.coefficient / ce.d_plus - 1.0) <= 0.10)
    _write_csv(csv, ["epsilon", "gamma_mean", "gamma_stderr"],
               [[e, v, s] for e, v, s in
                zip(fit.epsilon_grid, fit.values, fit.stderrs)])
    _note(f"wrote {csv}")
    summary = _fit_summary(fit, theory, passed)
    fit_path = _artifact(cfg, "lyapunov_fit.json")
    _write_json(fit_path, summary)
    _note(f"wrote {fit_path}")
    _manifest("lyapunov", cfg, [csv, fit_path])
    print(_json_text(summary))
    return 0


def _cmd_idos(cfg: dict) -> int:
    model = DisorderModel.parse(cfg["model"])
    ce = CriticalEnergy.for_model(cfg["l"], model)
    grid = (np.geomspace(1e-4, 1e-2, 13) if cfg["eps_grid"] is None
            else cfg["eps_grid"])
    target = ce.d_plus / math.pi
    csv = _artifact(cfg, "idos.csv")
    try:
        fit = spectral.vanhove_fit(ce, model, grid, n_cells=cfg["n_cells"],
                                   samples=cfg["samples"], seed=cfg["seed"])
    except lyapunov.ConvergenceError as err:
        # Partial artifact: the per-point estimates are still well defined
        # even when the deficit fit is not.
        rows = [[e, ce.level - d, s] for e, d, s in
                zip(err.epsilon_grid, err.values, err.stderrs)]
        _write_csv(csv, ["epsilon", "idos_mean", "idos_stderr"], rows)
        _note(f"wrote {csv}")
        _manifest("idos", cfg, [csv])
        _note(f"idos fit did not converge: {err}")
        return 3
    rows = [[e, ce.level - d, s] for e, d, s in
            zip(fit.epsilon_grid, fit.values, fit.stderrs)]
    _write_csv(csv, ["epsilon", "idos_mean", "idos_stderr"], rows)
    _note(f"wrote {csv}")
    passed = abs(fit.coefficient / target - 1.0) <= 0.10
    summary = _fit_summary(fit, {"exponent": 0.5, "coefficient": target},
                           passed)
    fit_path = _artifact(cfg, "idos_fit.json")
    _write_json(fit_path, summary)
    _note(f"wrote {fit_path}")
    _manifest("idos", cfg, [csv, fit_path])
    print(_json_text(summary))
    return 0


def _cmd_green(cfg: dict) -> int:
    model = _model_or_free(cfg["model"])
    z = complex(cfg["z_re"], cfg["z_im"])
    if not z.imag > 0.0:
        raise SchemaError("--z-im must be positive")
    if model is None:
        realization = Realization(model=None, seed=0, site_offset=0,
                                  values=np.zeros(0))
    else:
        realization = sample(model, cfg["seed"], -2, 2)
    rows = []
    rc = 0
    failure = None
    for x in cfg["x_grid"]:
        try:
            g = weyl.green_kernel(z, realization, float(x), cfg["y"],
                                  a=cfg["a"], rtol=cfg["rtol"])
        except weyl.TruncationError as err:
            rc, failure = 3, err
            break
        rows.append([x, cfg["y"], g.value.real, g.value.imag])
    csv = _artifact(cfg, "green.csv")
    _write_csv(csv, ["x", "y", "re_G", "im_G"], rows)
    _note(f"wrote {csv}")
    _manifest("green", cfg, [csv])
    if failure is not None:
        _note(f"green kernel did not converge: {failure}")
    return rc


def _cmd_transport(cfg: dict) -> int:
    grid = np.sort(np.asarray(cfg["t_grid"], dtype=float))
    if len(grid) < 5 or grid[-1] < 100.0 * grid[0] * (1.0 - 1e-12):
        raise SchemaError(
            "--t-grid needs at least 5 points spanning two decades "
            "for the growth-exponent fit")
    model = _model_or_free(cfg["model"])
    window = cfg["energy_window"]
    x_max = cfg["x_max"]
    rule = None
    if model is None:
        ce = None
        if window is None:
            window = (1.0, 4.0)
        if x_max is None:
            e_hi = window[1]
            rule = lambda T: int(10.0 * T * math.sqrt(e_hi))  # noqa: E731
        theory = {"exponent": cfg["q"], "tolerance": 0.1}
    else:
        ce = CriticalEnergy.for_model(cfg["l"], model)
        bound = transport.bound_exponent(cfg["q"])
        theory = {"bound_exponent": bound, "required": bound - 0.3}
    if rule is None and x_max is not None:
        rule = lambda T: x_max  # noqa: E731
    curve = transport.moment_curve(
        cfg["q"], grid, cfg["a"], model, ce,
        samples=cfg["samples"], seed=cfg["seed"], alpha=cfg["alpha"],
        c8=cfg["c8"], energy_window=window, x_max_rule=rule)
    expo = transport.growth_exponent(curve)
    if model is None:
        passed = abs(expo - cfg["q"]) <= 0.1
    else:
        passed = expo >= theory["required"]
    csv = _artifact(cfg, "transport.csv")
    _write_csv(csv, ["T", "q", "moment_mean", "moment_stderr"],
               [[t, cfg["q"], v, s] for t, v, s in
                zip(curve.T_grid, curve.values, curve.stderrs)])
    _note(f"wrote {csv}")
    summary = {"fit": {"exponent": expo}, "theory": theory, "pass": passed}
    fit_path = _artifact(cfg, "transport_fit.json")
    _write_json(fit_path, summary)
    _note(f"wrote {fit_path}")
    _manifest("transport", cfg, [csv, fit_path])
    print(_json_text(summary))
    return 0


def _cmd_deviations(cfg: dict) -> int:
    model = DisorderModel.parse(cfg["model"])
    ce = CriticalEnergy.for_model(cfg["l"], model)
    alpha = cfg["alpha"]
    rows = []
    tails = []
    for n_sites in cfg["sizes"]:
        eps = float(n_sites) ** (-1.0 - 2.0 * alpha)
        rep = transport.martingale_deviation(
            ce, model, eps, n_sites, alpha, cfg["samples"], cfg["seed"])
        sups = rep.sup_values
        rows.append([n_sites, eps, rep.threshold, float(sups.min()),
                     float(np.median(sups)), float(sups.max()),
                     rep.empirical_tail])
        tails.append(rep.empirical_tail)
    envelope = [n * n * math.exp(-float(n) ** alpha) for n in cfg["sizes"]]
    c_fit = max(t / e for t, e in zip(tails, envelope))
    monotone = all(tails[i + 1] <= tails[i] for i in range(len(tails) - 1))
    under = all(t <= c_fit * e + 1e-15 for t, e in zip(tails, envelope))
    csv = _artifact(cfg, "deviations.csv")
    _write_csv(csv, ["n_sites", "epsilon", "threshold", "sup_min",
                     "sup_median", "sup_max", "tail"], rows)
    _note(f"wrote {csv}")
    summary = {
        "fit": {"tails": tails, "C": c_fit},
        "theory": {"threshold_exponent": 0.5 + alpha,
                   "envelope": "C * N^2 * exp(-N^alpha)"},
        "pass": monotone and under,
    }
    fit_path = _artifact(cfg, "deviations_fit.json")
    _write_json(fit_path, summary)
    _note(f"wrote {fit_path}")
    _manifest("deviations", cfg, [csv, fit_path])
    print(_json_text(summary))
    return 0


def _cmd_verify(cfg: dict) -> int:
    results = acceptance.run_suite(cfg["suite"], cfg["seed"])
    for res in results:
        print(res.line())
        _note(f"{res.name} took {res.seconds:.1f}s")
    path = _artifact(cfg, "verify_results.json")
    _write_json(path, [res.to_json() for res in results])
    _note(f"wrote {path}")
    _manifest("verify", cfg, [path])
    return 0 if all(res.passed for res in results) else 1


_HANDLERS = {
    "bands": _cmd_bands,
    "lyapunov": _cmd_lyapunov,
    "idos": _cmd_idos,
    "green": _cmd_green,
    "transport": _cmd_transport,
    "deviations": _cmd_deviations,
    "verify": _cmd_verify,
}


# -- entry point --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kplab",
        description="transfer-matrix laboratory for the random "
                    "Kronig-Penney operator")
    parser.add_argument("--version", action="version",
                        version=f"kplab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in COMMAND_OPTS.items():
        p = sub.add_parser(command, help=f"run the {command} computation")
        p.add_argument("--config", default=None,
                       help="JSON or TOML file with parameter values")
        for opt in opts + GLOBAL_OPTS:
            extra = {}
            if opt.choices:
                extra["choices"] = opt.choices
            p.add_argument(f"--{opt.name}", default=None,
                           help=f"{opt.help} (default: {opt.default})",
                           **extra)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve(args.command, args)
        if cfg["threads"] is not None:
            if cfg["threads"] < 1:
                raise SchemaError("--threads must be >= 1")
            os.environ["KP_THREADS"] = str(cfg["threads"])
        return _HANDLERS[args.command](cfg)
    except SchemaError as err:
        _note(f"error: {err}")
        return 2
    except ValueError as err:
        _note(f"error: {err}")
        return 2
    except weyl.TruncationError as err:
        _note(f"did not converge: {err}")
        return 3
    except RuntimeError as err:
        _note(f"did not converge: {err}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
