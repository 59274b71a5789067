"""Command-line front end.

``kerrsense <command> --config FILE [--seed N] [--threads N] [--out DIR]``

Configuration files hold ``key = value`` lines with ``#`` comments.  Rates
take a unit (``hz``, ``khz``, ``mhz``, ``ghz`` are converted to angular
frequency; ``rad/s`` is taken as is) and times take ``s``, ``ms``, ``us`` or
``ns``.  Frequency keys describe reduced (size-independent) rates.  Exit
status is 0 on success, 1 on a domain error and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import DeviceModel, extract_g, flux_resonance, s21_fit, s21_model
from .classical import ClassicalSetup, classical_precision_curve, classical_precision_timed
from .errors import ConfigError, KerrSenseError, MissingKey, ParseError, UnknownKey
from .fock import TWO_PI
from .measurement import (MeasurementModel, PowerMoments, estimate_moments,
                          estimate_precision_pair, export_traces, ingest_traces,
                          synthesize_traces)
from .metrology import (ReducedParams, Scaling, critical_detuning, fit_beta, from_physical,
                        model_precision, solve_points, sweep)
from .reference import REFERENCE_REDUCED, load_table, preset

logger = logging.getLogger("kerrsense")

COMMANDS = ("sweep", "scaling", "precision", "traces", "calibrate", "classical")
OUT_ENV = "KERRSENSE_OUT"

_FREQ_UNITS = {"hz": TWO_PI, "khz": TWO_PI * 1e3, "mhz": TWO_PI * 1e6, "ghz": TWO_PI * 1e9,
               "rad/s": 1.0}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
_NUMBER = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z/]*)\s*$")

# key -> (kind, default); default None means "no default"
KEYS = {
    "command": ("command", None),
    "preset": ("str", None),
    "seed": ("int", 0),
    "threads": ("int", 1),
    "out": ("str", None),
    # model
    "G": ("freq", None),
    "U": ("freq", None),
    "kappa": ("freq", None),
    "kappa_ext": ("freq", None),
    "L": ("float", 1.0),
    "L_list": ("floatlist", None),
    "scaling": ("scaling", "I"),
    "delta": ("freq", None),
    "delta_min": ("freq", None),
    "delta_max": ("freq", None),
    "delta_step": ("freq", None),
    "detunings": ("freqlist", None),
    "epsilon": ("freq", None),
    "dim": ("int", None),
    "dim_cap": ("int", 160),
    "leak_tol": ("float", 1e-6),
    "autocorrelation": ("bool", False),
    "err_form": ("choice:printed,sum", "printed"),
    # detection
    "gain": ("float", 1.0),
    "sigma2": ("float", 0.25),
    "delta_t": ("time", 1.5e-6),
    "total_time": ("time", 69e-6),
    "j_ss_time": ("time", 15e-6),
    "repetitions": ("int", 400_000),
    "epsilon_err": ("freq", 0.0),
    "m": ("int", 10_000),
    "trace_file": ("str", None),
    # calibration
    "gamma0": ("float", None),
    "omega_bare": ("freq", None),
    "flux_list": ("floatlist", None),
    "s21_file": ("str", None),
    "curve_file": ("str", None),
    "fit_min": ("freq", None),
    "fit_max": ("freq", None),
    # classical
    "delta_p_min": ("freq", None),
    "delta_p_max": ("freq", None),
    "delta_p_step": ("freq", None),
    "alpha2": ("float", 1.0),
    "bandwidth": ("freq", 0.0),
    "time": ("time", 0.0),
}

_MODEL_KEYS = ("G", "U", "kappa")
REQUIRED = {
    "sweep": _MODEL_KEYS + ("delta_min", "delta_max", "delta_step"),
    "scaling": _MODEL_KEYS + ("delta_min", "delta_max", "delta_step", "L_list"),
    "precision": _MODEL_KEYS + ("detunings", "epsilon"),
    "traces": _MODEL_KEYS + ("delta",),
    "calibrate": ("gamma0", "omega_bare"),
    "classical": ("kappa_ext", "delta_p_min", "delta_p_max", "delta_p_step"),
}


@dataclass
class RunConfig:
    command: str | None
    params: dict
    output_dir: Path | None = None
    seed: int = 0
    threads: int = 1
    explicit: set = field(default_factory=set)

    def get(self, key):
        return self.params.get(key, KEYS[key][1])


def _parse_number(text: str, line: int):
    mt = _NUMBER.match(text)
    if not mt:
        raise ParseError(f"cannot parse number {text!r}", line)
    return float(mt.group(1)), mt.group(2).lower()


def _parse_value(key: str, kind: str, text: str, line: int):
    if kind == "str":
        return text
    if kind == "command":
        if text not in COMMANDS:
            raise ParseError(f"unknown command {text!r}; choose from {', '.join(COMMANDS)}", line)
        return text
    if kind == "scaling":
        if text not in ("I", "II"):
            raise ParseError(f"scaling must be I or II, got {text!r}", line)
        return text
    if kind.startswith("choice:"):
        options = kind.split(":", 1)[1].split(",")
        if text not in options:
            raise ParseError(f"{key} must be one of {options}, got {text!r}", line)
        return text
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ParseError(f"{key} must be a boolean, got {text!r}", line)
    if kind in ("freqlist", "floatlist"):
        parts = [p for p in text.split(",") if p.strip()]
        if not parts:
            raise ParseError(f"{key} needs at least one value", line)
        single = "freq" if kind == "freqlist" else "float"
        return [_parse_value(key, single, p, line) for p in parts]
    value, unit = _parse_number(text, line)
    if kind == "int":
        if unit or value != int(value):
            raise ParseError(f"{key} must be an integer, got {text!r}", line)
        return int(value)
    if kind == "float":
        if unit:
            raise ParseError(f"{key} is dimensionless, got unit {unit!r}", line)
        return value
    table = _FREQ_UNITS if kind == "freq" else _TIME_UNITS
    if unit not in table:
        raise ParseError(f"{key} needs a unit from {', '.join(table)}; got {text!r}", line)
    return value * table[unit]


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` text into a :class:`RunConfig`.

    Unknown keys, duplicate keys and malformed values are rejected with the
    offending line number.  Preset values are applied before explicit keys.
    """
    params, explicit, lines = {}, set(), {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise UnknownKey(f"unknown key {key!r}", lineno)
        if key in explicit:
            raise ParseError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ParseError(f"key {key!r} has no value", lineno)
        params[key] = _parse_value(key, KEYS[key][0], value, lineno)
        explicit.add(key)
        lines[key] = lineno

    if "preset" in params:
        try:
            merged = _preset_values(params["preset"])
        except KeyError as exc:
            raise ParseError(str(exc.args[0]), lines["preset"]) from None
        merged.update(params)
        params = merged
    out = params.get("out")
    return RunConfig(params.get("command"), params, Path(out) if out else None,
                     params.get("seed", 0), params.get("threads", 1), explicit)


def _preset_values(name: str) -> dict:
    """Reduced model values for a named operating point."""
    if name == "reference":
        return {"G": REFERENCE_REDUCED["tilde_G"], "U": REFERENCE_REDUCED["tilde_U"],
                "kappa": REFERENCE_REDUCED["tilde_kappa"], "L": 1.0, "scaling": "I",
                "delta_min": TWO_PI * -500e3, "delta_max": 0.0, "delta_step": TWO_PI * 5e3}
    row = preset(name)
    scaling = Scaling.I if name.startswith("table1") else Scaling.II
    rp = from_physical(row.physical(), row.L, scaling)
    lo, hi = row.delta_window_hz
    div = row.L if scaling is Scaling.II else 1.0
    step = TWO_PI * 5e3
    d_lo = TWO_PI * lo / div
    n = int(math.floor((TWO_PI * hi / div - d_lo) / step + 1e-9))
    return {"G": rp.tilde_G, "U": rp.tilde_U, "kappa": rp.tilde_kappa, "L": row.L,
            "scaling": scaling.value, "delta_min": d_lo, "delta_max": d_lo + n * step,
            "delta_step": step, "flux_list": [row.F]}


def _check_required(cfg: RunConfig):
    for key in REQUIRED[cfg.command]:
        if cfg.params.get(key) is None:
            if key in _MODEL_KEYS + ("delta",) and cfg.command == "traces" and cfg.get("trace_file"):
                continue
            raise MissingKey(f"command {cfg.command!r} needs key {key!r}")


# -- helpers ------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows, comments=()) -> Path:
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _hz(x):
    return np.round(np.asarray(x, dtype=float) / TWO_PI, 6)


def _model(cfg: RunConfig) -> MeasurementModel:
    return MeasurementModel(gain=cfg.get("gain"), sigma2=cfg.get("sigma2"),
                            kappa_ext=cfg.get("kappa_ext"), delta_t=cfg.get("delta_t"),
                            total_time=cfg.get("total_time"), j_ss_time=cfg.get("j_ss_time"),
                            repetitions=cfg.get("repetitions"), epsilon_err=cfg.get("epsilon_err"))


def _reduced(cfg: RunConfig, L: float | None = None) -> ReducedParams:
    return ReducedParams(0.0, cfg.get("G"), cfg.get("U"), cfg.get("kappa"),
                         cfg.get("L") if L is None else L, Scaling(cfg.get("scaling")))


def _grid(cfg: RunConfig, prefix="delta") -> np.ndarray:
    lo, hi, step = (cfg.get(f"{prefix}_{s}") for s in ("min", "max", "step"))
    if not step > 0 or hi <= lo:
        raise ConfigError(f"{prefix}_min < {prefix}_max and {prefix}_step > 0 are required")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def _solve_kw(cfg: RunConfig):
    return dict(dim=cfg.get("dim"), dim_cap=cfg.get("dim_cap"), leak_tol=cfg.get("leak_tol"),
                autocorrelation=cfg.get("autocorrelation"), workers=cfg.threads)


def _curve_rows(curve):
    return zip(_hz(curve.detunings), curve.n_mean, curve.n_var, curve.d2n, curve.precision,
               curve.precision_err)


CURVE_HEADER = ["delta_hz", "n_mean", "n_var", "d2n", "precision", "precision_err"]
ERROR_HEADER = ["L", "delta_hz", "error"]


# -- commands -------------------------------------------------------------------

def cmd_sweep(cfg: RunConfig, out: Path) -> list[Path]:
    from .plotting import plot_curve
    rp = _reduced(cfg)
    curve = sweep(rp, _grid(cfg), _model(cfg), err_form=cfg.get("err_form"), **_solve_kw(cfg))
    files = [write_csv(out / "curve.csv", CURVE_HEADER, _curve_rows(curve)),
             write_csv(out / "errors.csv", ERROR_HEADER,
                       [(rp.L, d / TWO_PI, e) for d, e in curve.errors])]
    files.append(plot_curve(curve, out / "curve.svg", title=f"L = {rp.L:g}"))
    return files


def cmd_scaling(cfg: RunConfig, out: Path) -> list[Path]:
    from .classical import quantum_classical_gap
    from .plotting import plot_curve, plot_scaling
    grid, model = _grid(cfg), _model(cfg)
    files, errors, rows = [], [], []
    for L in cfg.get("L_list"):
        rp = _reduced(cfg, L)
        curve = sweep(rp, grid, model, err_form=cfg.get("err_form"), **_solve_kw(cfg))
        tag = f"L{L:g}"
        files.append(write_csv(out / f"curve_{tag}.csv", CURVE_HEADER, _curve_rows(curve)))
        files.append(plot_curve(curve, out / f"curve_{tag}.svg", title=f"L = {L:g}"))
        errors += [(L, d / TWO_PI, e) for d, e in curve.errors]
        dc = critical_detuning(rp.tilde_G, rp.tilde_kappa)
        rows.append((L, curve.p_max, curve.delta_max / TWO_PI, dc / TWO_PI))
    files.append(write_csv(out / "errors.csv", ERROR_HEADER, errors))
    header = ["L", "p_max", "delta_max_hz", "delta_c_hz"]
    try:
        fit = fit_beta([r[0] for r in rows], [r[1] for r in rows])
    except KerrSenseError:
        files.append(write_csv(out / "beta.csv", header, rows))
        raise
    gap = quantum_classical_gap(fit, [r[0] for r in rows], cfg.get("kappa") / 2.0)
    comments = [f"fit: beta={fit.beta!r} stderr={fit.stderr!r}",
                f"classical: beta={gap.beta_classical!r} gap={gap.gap!r}"]
    files.append(write_csv(out / "beta.csv", header, rows, comments))
    files.append(plot_scaling([r[0] for r in rows], [r[1] for r in rows], fit,
                              out / "beta.svg"))
    return files


def _point_seed(seed: int, *key) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def cmd_precision(cfg: RunConfig, out: Path) -> list[Path]:
    rp, model = _reduced(cfg), _model(cfg)
    deltas, eps = np.asarray(cfg.get("detunings")), cfg.get("epsilon")
    prec, err, lo, hi = model_precision(rp, deltas, eps, model, err_form=cfg.get("err_form"),
                                        **_solve_kw(cfg))
    rows, errors = [], []
    m = cfg.get("m")
    for k, d in enumerate(deltas):
        est = (math.nan, math.nan, False)
        pa = PowerMoments(float(lo.n_out_mean[k]), float(lo.n_out_var[k]))
        pb = PowerMoments(float(hi.n_out_mean[k]), float(hi.n_out_var[k]))
        try:
            if not np.isfinite([pa.n_out_mean, pb.n_out_mean]).all():
                raise KerrSenseError("steady state unavailable")
            ta = synthesize_traces(pa, model, m, _point_seed(cfg.seed, k, 0))
            tb = synthesize_traces(pb, model, m, _point_seed(cfg.seed, k, 1))
            pe = estimate_precision_pair(ta, tb, eps, err_form=cfg.get("err_form"))
            est = (pe.aggregate, pe.aggregate_err, pe.flagged)
        except KerrSenseError as exc:
            errors.append((rp.L, d / TWO_PI, f"{type(exc).__name__}: {exc}"))
        rows.append((d / TWO_PI, prec[k], err[k], *est))
    header = ["delta_hz", "precision_model", "precision_model_err", "precision_est",
              "precision_est_err", "zero_signal"]
    return [write_csv(out / "precision.csv", header, rows),
            write_csv(out / "errors.csv", ERROR_HEADER, errors)]


def cmd_traces(cfg: RunConfig, out: Path) -> list[Path]:
    files = []
    if cfg.get("trace_file"):
        te = ingest_traces(cfg.get("trace_file"), _model(cfg))
        model_rows = None
    else:
        rp, model = _reduced(cfg), _model(cfg)
        pts = solve_points(rp, [cfg.get("delta")], model, **_solve_kw(cfg))
        if pts.errors:
            raise KerrSenseError(pts.errors[0][1])
        pm = PowerMoments(float(pts.moments.n_out_mean[0]), float(pts.moments.n_out_var[0]))
        te = synthesize_traces(pm, model, cfg.get("m"), cfg.seed)
        files.append(out / "traces.csv")
        export_traces(te, files[-1])
        model_rows = (pm.n_out_mean, pm.n_out_var)
    est = estimate_moments(te)
    rows = []
    for j in range(te.j):
        row = [j, est.n_out_mean[j], est.n_out_var[j]]
        if model_rows:
            row += list(model_rows)
        rows.append(row)
    header = ["bin", "n_out_mean", "n_out_var"]
    if model_rows:
        header += ["model_mean", "model_var"]
    files.append(write_csv(out / "moments.csv", header, rows))
    return files


def _read_columns(path, ncols: int):
    data = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            data.append([float(p) for p in parts[:ncols]])
        except ValueError:
            if data:
                raise ParseError(f"non-numeric row in {path}", lineno) from None
            continue  # header
        if len(parts) < ncols:
            raise ParseError(f"expected {ncols} columns in {path}", lineno)
    return np.array(data, dtype=float).reshape(-1, ncols)


def cmd_calibrate(cfg: RunConfig, out: Path) -> list[Path]:
    dm = DeviceModel(gamma0=cfg.get("gamma0"), omega_bare=cfg.get("omega_bare"))
    table = {row.F: row.omega_r_ghz * 1e9 for row in load_table("table1")}
    fluxes = cfg.get("flux_list") or sorted(table)
    rows = []
    for F in fluxes:
        w = flux_resonance(dm, F) / TWO_PI
        ref = table.get(F, math.nan)
        rows.append((F, w, ref, (w - ref) / ref))
    files = [write_csv(out / "flux.csv", ["F", "omega_r_hz", "table_omega_r_hz", "rel_dev"], rows)]

    if cfg.get("s21_file"):
        from .plotting import plot_s21
        data = _read_columns(cfg.get("s21_file"), 3)
        z = data[:, 1] + 1j * data[:, 2]
        fit = s21_fit(data[:, 0], z)
        files.append(write_csv(out / "s21_fit.csv",
                               ["f_r_hz", "q_l", "q_c_abs", "phi", "a", "alpha", "tau",
                                "kappa_hz"],
                               [(fit.f_r, fit.q_l, fit.q_c_abs, fit.phi, fit.a, fit.alpha,
                                 fit.tau, fit.kappa / TWO_PI)]))
        files.append(plot_s21(data[:, 0], z, s21_model(data[:, 0], fit), out / "s21.svg"))

    if cfg.get("curve_file"):
        if cfg.params.get("kappa") is None:
            raise MissingKey("pump extraction needs key 'kappa'")
        data = _read_columns(cfg.get("curve_file"), 2)
        d = data[:, 0] * TWO_PI
        keep = np.isfinite(data[:, 1])
        if cfg.get("fit_min") is not None:
            keep &= d >= cfg.get("fit_min")
        if cfg.get("fit_max") is not None:
            keep &= d <= cfg.get("fit_max")
        G, d0 = extract_g(d[keep], data[keep, 1], cfg.get("kappa"))
        files.append(write_csv(out / "pump.csv", ["G_hz", "delta0_hz", "points"],
                               [(G / TWO_PI, d0 / TWO_PI, int(keep.sum()))]))
    return files


def cmd_classical(cfg: RunConfig, out: Path) -> list[Path]:
    from .plotting import plot_classical
    dp = _grid(cfg, "delta_p")
    ke = cfg.get("kappa_ext")
    prec = classical_precision_curve(ke, dp, cfg.get("alpha2"))
    timed = [classical_precision_timed(ClassicalSetup(ke, d, cfg.get("alpha2"),
                                                      cfg.get("bandwidth"), cfg.get("time")))
             for d in dp]
    rows = zip(_hz(dp), prec, timed)
    return [write_csv(out / "classical.csv", ["delta_p_hz", "precision", "precision_timed"], rows),
            plot_classical(dp, prec, out / "classical.svg")]


HANDLERS = {"sweep": cmd_sweep, "scaling": cmd_scaling, "precision": cmd_precision,
            "traces": cmd_traces, "calibrate": cmd_calibrate, "classical": cmd_classical}


def _manifest(cfg: RunConfig, files) -> dict:
    import matplotlib
    import scipy
    params = {k: cfg.get(k) for k in sorted(KEYS) if cfg.get(k) is not None
              and k not in ("threads", "out", "seed")}
    return {"command": cfg.command, "seed": cfg.seed, "params": params,
            "units": "rates in rad/s, times in s",
            "files": sorted(Path(f).name for f in files),
            "versions": {"kerrsense": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "matplotlib": matplotlib.__version__,
                         "python": platform.python_version()}}


def run(cfg: RunConfig) -> list[Path]:
    """Execute a parsed configuration and return the written files."""
    if cfg.command not in HANDLERS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    _check_required(cfg)
    out = cfg.output_dir or Path(os.environ.get(OUT_ENV, "kerrsense_out"))
    out.mkdir(parents=True, exist_ok=True)
    files = HANDLERS[cfg.command](cfg, out)
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(_manifest(cfg, files), indent=2, sort_keys=True) + "\n")
    return files + [manifest]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kerrsense", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--threads", type=int, help="worker processes for independent points")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./kerrsense_out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            cfg = parse_config(text)
        except ParseError as exc:
            raise ConfigError(str(exc)) from None
        if cfg.command is not None and cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
        cfg.command = args.command
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        if args.out is not None:
            cfg.output_dir = Path(args.out)
        out = cfg.output_dir or Path(os.environ.get(OUT_ENV, "kerrsense_out"))
        files = run(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"kerrsense: usage error: {exc}", file=sys.stderr)
        return 2
    except KerrSenseError as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(record, indent=2) + "\n")
        return 1
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
