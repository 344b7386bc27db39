"""Batch command line front end.

Subcommands ``simulate``, ``oracle``, ``phase-scan`` and ``compare-situations``
read one JSON run configuration (``--config``), apply scalar overrides from
flags, and write a JSON summary or a CSV table to ``--out`` (stdout if omitted).

Exit codes: 0 ok, 2 config error, 3 validation error, 4 runtime error.  On
failure a single JSON object ``{"error": ..., "message": ..., "details": [...]}``
is written to stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import analysis, engine, exact
from .model import ModelSpec, SpecError, Variant, validate

log = logging.getLogger("shortcut_tasep")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4

MODES = ("simulate", "oracle", "phase-scan", "compare-situations")
MODEL_FIELDS = ("variant", "L", "k", "alpha", "beta", "q", "p")
SIM_FIELDS = ("seed", "t_burn", "t_meas", "init", "rho0")
INDEXED_FIELDS = {"q1": ("q", 0), "q2": ("q", 1), "p1": ("p", 0), "p2": ("p", 1)}
SWEEP_FIELDS = MODEL_FIELDS + SIM_FIELDS + tuple(INDEXED_FIELDS)

DEFAULT_MODEL = {"variant": "Basic1", "L": 600, "k": [200, 400], "alpha": 0.3,
                 "beta": 0.8, "q": [0.5], "p": [1.0]}
DEFAULT_SIM = {"seed": 0, "t_burn": 1e6, "t_meas": 1e7, "init": "Empty", "rho0": 0.5}

# (alpha, beta, init) corners, times q and p; the alpha = beta < 1/2 line is left out
DEFAULT_SCAN = [
    ["alpha,beta,init", [[0.3, 0.8, "Empty"], [0.8, 0.3, "Empty"],
                         [0.8, 0.8, "Full"], [0.8, 0.8, "Empty"]]],
    ["q", [0.1, 0.5, 0.9]],
    ["p", [0.0, 0.5, 1.0]],
]


class CliError(Exception):
    code = EXIT_RUNTIME
    kind = "runtime_error"

    def __init__(self, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.details = details or []


class ConfigError(CliError):
    code = EXIT_CONFIG
    kind = "config_error"


class ValidationError(CliError):
    code = EXIT_VALIDATION
    kind = "validation_error"


@dataclass
class RunConfig:
    """One declarative run: model, simulation settings, optional sweep, output.

    ``sweep`` is a list of ``[name, values]`` pairs expanded as a Cartesian
    product.  A comma-joined name such as ``"alpha,beta"`` zips several
    parameters, each value then being a list with one entry per name.
    """

    mode: str = "simulate"
    model: dict = field(default_factory=lambda: dict(DEFAULT_MODEL))
    sim: dict = field(default_factory=lambda: dict(DEFAULT_SIM))
    sweep: list | None = None
    out: str | None = None
    format: str = "json"
    workers: int = 1
    eps_rho: float = analysis.EPS_RHO
    eps_J: float = analysis.EPS_J

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("unknown config keys", unknown)
        cfg = cls(**{k: v for k, v in data.items()})
        model = dict(DEFAULT_MODEL)
        model.update(data.get("model") or {})
        sim = dict(DEFAULT_SIM)
        sim.update(data.get("sim") or {})
        cfg.model, cfg.sim = model, sim
        cfg.check()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def check(self) -> None:
        errors = []
        if self.mode not in MODES:
            errors.append(f"mode: must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.format not in ("json", "csv"):
            errors.append(f"format: must be json or csv, got {self.format!r}")
        bad = sorted(set(self.model) - set(MODEL_FIELDS))
        if bad:
            errors.append(f"model: unknown fields {bad}")
        bad = sorted(set(self.sim) - set(SIM_FIELDS))
        if bad:
            errors.append(f"sim: unknown fields {bad}")
        for entry in self.sweep or []:
            if not (isinstance(entry, (list, tuple)) and len(entry) == 2
                    and isinstance(entry[0], str) and isinstance(entry[1], list)):
                errors.append(f"sweep: entries must be [name, [values...]], got {entry!r}")
                continue
            names = entry[0].split(",")
            for n in names:
                if n not in SWEEP_FIELDS:
                    errors.append(f"sweep: {n!r} is not a ModelSpec or SimConfig field")
            if len(names) > 1:
                for v in entry[1]:
                    if not (isinstance(v, list) and len(v) == len(names)):
                        errors.append(f"sweep: {entry[0]!r} needs {len(names)}-element values")
                        break
        if errors:
            raise ConfigError("invalid run configuration", errors)

    def points(self) -> list[dict[str, Any]]:
        """Parameter assignments of every sweep point (one empty dict without a sweep)."""
        sweep = self.sweep
        if sweep is None:
            sweep = DEFAULT_SCAN if self.mode == "phase-scan" else []
        axes = []
        for name, values in sweep:
            names = name.split(",")
            if len(names) == 1:
                axes.append([{name: v} for v in values])
            else:
                axes.append([dict(zip(names, v)) for v in values])
        points = []
        for combo in itertools.product(*axes):
            merged: dict[str, Any] = {}
            for part in combo:
                merged.update(part)
            points.append(merged)
        return points


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def build(model: dict, sim: dict, assign: dict[str, Any], stream: int = 0
          ) -> tuple[ModelSpec, engine.SimConfig]:
    model = dict(model)
    sim = dict(sim)
    for name, value in assign.items():
        if name in INDEXED_FIELDS:
            key, idx = INDEXED_FIELDS[name]
            vals = _as_list(model[key])
            while len(vals) <= idx:
                vals.append(0.0)
            vals[idx] = value
            model[key] = vals
        elif name in ("q", "p") and not isinstance(value, (list, tuple)):
            # a scalar sweep value applies to every shortcut of the model
            model[name] = [value] * max(1, len(_as_list(model[name])))
        elif name in MODEL_FIELDS:
            model[name] = value
        else:
            sim[name] = value
    try:
        spec = ModelSpec(
            variant=Variant(model["variant"]),
            L=int(model["L"]),
            k=tuple(int(x) for x in _as_list(model["k"])),
            alpha=float(model["alpha"]),
            beta=float(model["beta"]),
            q=_as_list(model["q"]),
            p=_as_list(model["p"]),
        )
        cfg = engine.SimConfig(seed=int(sim["seed"]), t_burn=float(sim["t_burn"]),
                               t_meas=float(sim["t_meas"]), init=str(sim["init"]),
                               rho0=float(sim["rho0"]), stream=int(stream))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad parameter value: {exc}") from exc
    errors = validate(spec) + cfg.validate()
    if errors:
        raise ValidationError("invalid model or simulation parameters", errors)
    return spec, cfg


# -- per-mode work units (module level so worker processes can pickle them) --

def simulation_summary(spec: ModelSpec, cfg: engine.SimConfig, eps_rho: float, eps_J: float,
                       report: engine.StationaryReport | None = None) -> dict:
    if report is None:
        report = engine.run(spec, cfg)
    summ = analysis.summarize(spec, report, eps_rho, eps_J)
    out = report.to_dict()
    out.update(summ.to_dict())
    return out


def _simulate_point(args) -> dict:
    spec, cfg, eps_rho, eps_J = args
    return simulation_summary(spec, cfg, eps_rho, eps_J)


def oracle_summary(spec: ModelSpec, with_pi: bool = False, eps_rho: float = analysis.EPS_RHO,
                   eps_J: float = analysis.EPS_J) -> dict:
    sol = exact.solve_stationary(spec)
    out = sol.to_dict(with_pi=with_pi)
    out.update(analysis.summarize(spec, sol, eps_rho, eps_J).to_dict())
    return out


def compare_situations(spec: ModelSpec, cfg: engine.SimConfig) -> dict:
    """Basic1 minus Basic2 density profile on one shared random stream."""
    if not spec.variant.is_basic:
        raise ValidationError("compare-situations needs a Basic1 or Basic2 model",
                              [f"variant: got {spec.variant.value}"])
    r1 = engine.run(spec.replace(variant=Variant.BASIC1), cfg)
    r2 = engine.run(spec.replace(variant=Variant.BASIC2), cfg)
    delta = r1.site_density - r2.site_density
    # both runs share their stream, so this is conservative
    stderr = np.hypot(r1.site_stderr, r2.site_stderr)
    j = int(np.argmax(np.abs(delta)))
    return {
        "spec": spec.to_dict(),
        "seed": int(cfg.seed),
        "stream": int(cfg.stream),
        "t_burn": cfg.t_burn,
        "t_meas": cfg.t_meas,
        "init": cfg.init,
        "max_abs_delta": float(abs(delta[j])),
        "argmax_site": j + 1,
        "delta": delta.tolist(),
        "delta_stderr": stderr.tolist(),
        "J_in": [r1.J_in, r2.J_in],
        "J_sc": [r1.J_sc.tolist(), r2.J_sc.tolist()],
    }


# -- output --

def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (list, tuple)):
        return ";".join(_fmt(v) for v in x)
    return str(x)


def profile_csv(density, stderr) -> str:
    return _csv_text(["site", "density", "stderr"],
                     ([i, repr(float(d)), repr(float(e))]
                      for i, (d, e) in enumerate(zip(density, stderr), start=1)))


SCAN_COLUMNS = ["point", "variant", "L", "k", "alpha", "beta", "q", "p", "init", "seed",
                "stream", "J_in", "J_in_stderr", "J_out", "J_sc", "segment_density",
                "segment_stderr", "phase_tuple", "max_residual"]


def scan_csv(points: list[dict]) -> str:
    rows = []
    for n, s in enumerate(points):
        spec = s["spec"]
        rows.append([_fmt(v) for v in (
            n, spec["variant"], spec["L"], spec["k"], spec["alpha"], spec["beta"],
            spec["q"], spec["p"], s["init"], s["seed"], s["stream"], s["J_in"],
            s["J_in_stderr"], s["J_out"], s["J_sc"],
            [g["bulk_density"] for g in s["segments"]],
            [g["density_stderr"] for g in s["segments"]],
            s["phase_tuple"], max(s["residuals"].values(), default=math.nan))])
    return _csv_text(SCAN_COLUMNS, rows)


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc.strerror}") from exc


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


# -- argument parsing --

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="parallel sweep points")
    common.add_argument("--variant", choices=[v.value for v in Variant])
    common.add_argument("--L", type=int, dest="L")
    common.add_argument("--k", type=_ints, help="anchors, comma separated")
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--q", type=_floats, help="comma separated")
    common.add_argument("--p", type=_floats, help="comma separated")
    common.add_argument("--t-burn", type=float, dest="t_burn")
    common.add_argument("--t-meas", type=float, dest="t_meas")
    common.add_argument("--init", choices=("Empty", "Full", "Uniform"))
    common.add_argument("--rho0", type=float)
    common.add_argument("--eps-rho", type=float, dest="eps_rho")
    common.add_argument("--eps-J", type=float, dest="eps_J")
    common.add_argument("--with-pi", action="store_true",
                        help="oracle: include the full stationary vector")
    common.add_argument("--dump-config", action="store_true",
                        help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="shortcut-tasep", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for mode in MODES:
        sub.add_parser(mode, parents=[common])
    return parser


def resolve(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(ns.config) if ns.config else RunConfig()
    cfg.mode = ns.mode
    for name in MODEL_FIELDS:
        val = getattr(ns, name)
        if val is not None:
            cfg.model[name] = val
    for name in SIM_FIELDS:
        val = getattr(ns, name)
        if val is not None:
            cfg.sim[name] = val
    for name in ("out", "format", "workers", "eps_rho", "eps_J"):
        val = getattr(ns, name)
        if val is not None:
            setattr(cfg, name, val)
    cfg.check()
    return cfg


def execute(cfg: RunConfig, with_pi: bool = False) -> str:
    if (cfg.mode == "phase-scan" and cfg.sweep is None
            and cfg.model.get("variant") not in ("Basic1", "Basic2")):
        raise ConfigError("the default phase-scan grid is defined for Basic1 and Basic2 only",
                          ["sweep: give an explicit sweep, e.g. [[\"q1\", [0.1, 0.4]]]"])
    points = cfg.points()
    built = [build(cfg.model, cfg.sim, a, stream=n if len(points) > 1 else 0)
             for n, a in enumerate(points)]

    if cfg.mode == "oracle":
        for spec, _ in built:
            if spec.L > exact.L_MAX:
                raise ValidationError(f"oracle needs L <= {exact.L_MAX}", [f"L: got {spec.L}"])
        sols = [oracle_summary(spec, with_pi, cfg.eps_rho, cfg.eps_J) for spec, _ in built]
        if cfg.format == "csv":
            if len(sols) != 1:
                raise ValidationError("csv oracle output needs a single point")
            return profile_csv(sols[0]["site_density"], np.zeros(len(sols[0]["site_density"])))
        return _json(sols[0] if len(sols) == 1 else {"points": sols})

    if cfg.mode == "compare-situations":
        results = _map(_compare_point, built, cfg.workers)
        if cfg.format == "csv":
            if len(results) != 1:
                raise ValidationError("csv compare output needs a single point")
            r = results[0]
            return _csv_text(["site", "delta", "stderr"],
                             ([i, repr(d), repr(e)] for i, (d, e) in
                              enumerate(zip(r["delta"], r["delta_stderr"]), start=1)))
        return _json(results[0] if len(results) == 1 else {"points": results})

    results = _map(_simulate_point, [(s, c, cfg.eps_rho, cfg.eps_J) for s, c in built],
                   cfg.workers)
    if cfg.mode == "phase-scan":
        if cfg.format == "csv":
            return scan_csv(results)
        return _json({"points": results})
    if cfg.format == "csv":
        if len(results) != 1:
            raise ValidationError("csv profile output needs a single point; use phase-scan")
        return profile_csv(results[0]["site_density"], results[0]["site_stderr"])
    return _json(results[0] if len(results) == 1 else {"points": results})


def _compare_point(args) -> dict:
    return compare_situations(*args)


def _map(fn, items: list, workers: int) -> list:
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fail(err: CliError) -> int:
    sys.stderr.write(json.dumps({"error": err.kind, "message": str(err),
                                 "details": err.details}) + "\n")
    return err.code


def run_cli(argv: list[str] | None = None) -> int:
    try:
        try:
            ns = make_parser().parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve(ns)
        if ns.dump_config:
            _write(cfg.to_json() + "\n", cfg.out)
            return EXIT_OK
        _write(execute(cfg, ns.with_pi), cfg.out)
        return EXIT_OK
    except CliError as err:
        return _fail(err)
    except SpecError as err:
        return _fail(ValidationError(str(err), list(err.errors)))
    except exact.ExactSolverError as err:
        return _fail(CliError(str(err)))
    except Exception as err:  # anything else is still reported as JSON
        log.debug("unhandled", exc_info=True)
        return _fail(CliError(f"{type(err).__name__}: {err}"))


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
