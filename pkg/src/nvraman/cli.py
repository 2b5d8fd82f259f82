"""Batch command-line front end.

Every command validates its configuration, computes all outputs in memory and
only then writes them, so a failed run leaves the output directory untouched.
Files are never overwritten without ``--force``. Frequencies are in MHz,
times in us and field angles in degrees.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (DriveConfig, IntegrationError, calibrate_omega, pumping_rate_ab,
                       simulate_experiment, simulation_basis, trace_csv)
from .fit import (LINE_HEADER, DegenerateFitWarning, FitError, evaluate_trace_model, fit_strain,
                  fit_trace, fitresult_text, line_list_csv, prediction_band, read_line_list_csv,
                  residuals_csv, subtract_background, synthetic_lines)
from .linalg import DimensionError, NotHermitianError
from .model import ELECTRONIC_STATES, eslac_scan, transition_table
from .params import ConfigError, ModelParams, dump_params, load_params
from .raman import channel_labels, channel_name, figure_of_merit_sweep, fom_csv, misalignment_sweep

log = logging.getLogger("nvraman")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONVERGED = 0, 2, 3, 4

FOM_GRID = (-3000.0, 2000.0, 1.0)
DEFAULT_DURATIONS = "0:40:0.1"
DEFAULT_CHANNELS = "p1N_to_p1N,p1N_to_0N"
PI_TIME_CONSERVING = 3.21
TRACE_FIT_MODEL = {"conserving": "damped_sin", "flipflop": "damped_sin_plus_ramp"}


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    output_dir: Path
    force: bool = False
    seed: int = 0
    options: dict = field(default_factory=dict)


@dataclass
class Outputs:
    """Files to be written, keyed by name, plus manifest entries."""

    files: dict = field(default_factory=dict)
    axes: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    converged: bool = True

    def add(self, name: str, text: str, columns=None, x=None, y=None):
        self.files[name] = text
        entry = {}
        if columns is not None:
            entry["columns"] = list(columns)
        if x is not None:
            entry["x"] = x
        if y is not None:
            entry["y"] = y
        self.axes[name] = entry


# --- argument parsing --------------------------------------------------------


def parse_grid(text: str, name: str) -> np.ndarray:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            parts = [float(s) for s in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ConfigError(f"{name}: need step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            grid = start + step * np.arange(n)
        else:
            grid = np.array([float(s) for s in text.split(",") if s.strip()])
    except ValueError:
        raise ConfigError(f"{name}: cannot parse grid {text!r}") from None
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ConfigError(f"{name}: grid must be non-empty and finite")
    return grid


def _channels(text: str) -> list:
    table = {channel_name(a, b): (a, b) for a, b in channel_labels()}
    if text == "all":
        return list(table)
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [n for n in names if n not in table]
    if bad or not names:
        raise ConfigError(f"unknown channel(s) {bad}; choose from {sorted(table)} or 'all'")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="key = value parameter file (MHz, G, rad)")
    common.add_argument("--out", default="out", help="output directory (created if absent)")
    common.add_argument("--force", action="store_true", help="overwrite existing files")
    common.add_argument("--seed", type=int, default=0, help="seed for synthetic data")

    parser = argparse.ArgumentParser(
        prog="nvraman",
        description="NV-centre optical Raman models. Frequencies in MHz, times in us, "
                    "angles in degrees. Writes CSV tables and a manifest.json.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", parents=[common], help="optical transition table")
    sp.add_argument("--bz-scan", help="B_z grid in G, start:stop:step, for eslac.csv")

    fp = sub.add_parser("fom", parents=[common], help="Raman figure of merit sweeps")
    fp.add_argument("--channels", default=DEFAULT_CHANNELS,
                    help="comma-separated channel names or 'all'")
    fp.add_argument("--theta", help="polar field angle grid (deg) for misalignment maps")
    fp.add_argument("--phi", help="azimuthal field angle grid (deg) for misalignment maps")

    mp = sub.add_parser("simulate", parents=[common], help="Lindblad Raman pulse sweep")
    mp.add_argument("--transition", choices=sorted(TRACE_FIT_MODEL), default="flipflop")
    mp.add_argument("--durations", default=DEFAULT_DURATIONS, help="pulse lengths (us)")
    mp.add_argument("--lambda-z", type=float, default=None,
                    help="Ey-E1 transverse coupling (MHz) replacing the field term")
    mp.add_argument("--fit", action="store_true", help="fit the simulated traces")

    tp = sub.add_parser("fit", parents=[common], help="strain or Rabi-trace fits")
    tp.add_argument("input", nargs="?", help="line-list CSV or trace CSV (t_us first)")
    tp.add_argument("--model", choices=("damped_sin", "damped_sin_plus_ramp"),
                    default="damped_sin_plus_ramp", help="trace model")
    tp.add_argument("--synthetic", action="store_true",
                    help="generate and fit a synthetic line list and trace")
    return parser


def make_config(args: argparse.Namespace) -> RunConfig:
    params = load_params(args.params) if args.params else ModelParams()
    opts = {}
    if args.command == "spectrum":
        opts["bz_grid"] = parse_grid(args.bz_scan, "--bz-scan") if args.bz_scan else None
        if opts["bz_grid"] is not None and np.any(opts["bz_grid"] < 0):
            raise ConfigError("--bz-scan: fields must be non-negative")
    elif args.command == "fom":
        opts["channels"] = _channels(args.channels)
        if args.theta or args.phi:
            opts["theta"] = parse_grid(args.theta or "5", "--theta")
            opts["phi"] = parse_grid(args.phi or "0:350:10", "--phi")
    elif args.command == "simulate":
        opts["transition"] = args.transition
        opts["durations"] = parse_grid(args.durations, "--durations")
        if opts["durations"][0] < 0:
            raise ConfigError("--durations must be non-negative")
        if args.lambda_z is not None and not math.isfinite(args.lambda_z):
            raise ConfigError("--lambda-z must be finite")
        opts["lambda_z"] = args.lambda_z
        opts["fit"] = args.fit
    elif args.command == "fit":
        if not args.synthetic and not args.input:
            raise ConfigError("fit needs an input file or --synthetic")
        if args.input:
            path = Path(args.input)
            if not path.is_file():
                raise ConfigError(f"input file {path} not found")
            opts["input"] = _read_input(path.read_text())
        opts["model"] = args.model
        opts["synthetic"] = args.synthetic
    return RunConfig(args.command, params, Path(args.out), args.force, args.seed, opts)


def _read_input(text: str) -> tuple:
    header = next(csv.reader(io.StringIO(text)), [])
    if tuple(header) == LINE_HEADER:
        return "lines", read_line_list_csv(text)
    if header and header[0] == "t_us":
        rows = [r for r in csv.reader(io.StringIO(text))][1:]
        try:
            data = np.array([[float(x) for x in r] for r in rows if r], dtype=float)
        except ValueError:
            raise ConfigError("trace file has non-numeric entries") from None
        if data.ndim != 2 or data.shape[0] < 8 or data.shape[1] < 2:
            raise ConfigError("trace file needs t_us plus at least one column and 8 rows")
        cols = {h: data[:, i] for i, h in enumerate(header)}
        return "trace", cols
    raise ConfigError(f"unrecognised input header {header}; expected {list(LINE_HEADER)} "
                      "or a trace starting with t_us")


# --- commands ----------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([x if isinstance(x, str) else repr(float(x)) for x in r])
    return buf.getvalue()


def cmd_spectrum(cfg: RunConfig) -> Outputs:
    out = Outputs()
    lines = transition_table(cfg.params)
    header = ("ground_mS", "excited", "freq_MHz", "strength", "strength_total")
    out.add("transitions.csv",
            _csv(header, [(ln.ground_label, ln.excited_label, ln.frequency, ln.strength,
                           ln.strength_total) for ln in lines]),
            header, "excited", "freq_MHz")
    out.info["lines_above_0.01"] = int(sum(ln.strength > 0.01 for ln in lines))
    grid = cfg.options.get("bz_grid")
    if grid is not None:
        scan = eslac_scan(cfg.params, grid)
        header = ("Bz_G",) + tuple(f"{n}_MHz" for n in ELECTRONIC_STATES)
        out.add("eslac.csv", _csv(header, np.column_stack([scan["bz"], scan["energies"]])),
                header, "Bz_G", "energy_MHz")
        out.info["anticrossing_Bz_G"] = scan["anticrossing_bz"]
    return out


def cmd_fom(cfg: RunConfig) -> Outputs:
    out = Outputs()
    table = {channel_name(a, b): (a, b) for a, b in channel_labels()}
    grid = np.arange(FOM_GRID[0], FOM_GRID[1] + FOM_GRID[2] / 2, FOM_GRID[2])
    for name in cfg.options["channels"]:
        pts = figure_of_merit_sweep(cfg.params, table[name], grid)
        text = fom_csv(pts)
        out.add(f"fom_{name}.csv", text, text.split("\n", 1)[0].split(","), "Delta_MHz", "ratio")
    if "theta" in cfg.options:
        th, ph = cfg.options["theta"], cfg.options["phi"]
        m = misalignment_sweep(cfg.params, np.radians(th), np.radians(ph))
        header = ("theta_deg", "phi_deg", "re_rabi_MHz", "im_rabi_MHz", "abs_rabi_MHz", "ratio")
        for key in ("conserving", "flipflop"):
            rows = [(th[i], ph[j], m[key]["rabi"][i, j].real, m[key]["rabi"][i, j].imag,
                     abs(m[key]["rabi"][i, j]), m[key]["ratio"][i, j])
                    for i in range(th.size) for j in range(ph.size)]
            out.add(f"misalignment_{key}.csv", _csv(header, rows), header, "phi_deg",
                    "abs_rabi_MHz")
    return out


def _fit_trace_files(out: Outputs, t, y, name: str, model: str):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateFitWarning)
        res = fit_trace(t, y, model)
    out.add(f"fit_{name}.txt", fitresult_text(res))
    out.add(f"residuals_{name}.csv", residuals_csv(t, res.residuals), ("t_us", "residual"),
            "t_us", "residual")
    if not res.degenerate:
        header = ("t_us", "fit", "gauss_newton_95_lower", "gauss_newton_95_upper")
        out.add(f"band_{name}.csv", _csv(header, zip(t, *prediction_band(t, res))), header,
                "t_us", "fit")
    if model == "damped_sin_plus_ramp":
        header = ("t_us", "signal", "background_subtracted")
        out.add(f"background_{name}.csv",
                _csv(header, zip(t, y, subtract_background(t, y, res))), header, "t_us",
                "background_subtracted")
    if not res.converged:
        out.converged = False
    return res


def cmd_simulate(cfg: RunConfig) -> Outputs:
    out = Outputs()
    p = cfg.params
    tr = cfg.options["transition"]
    d = DriveConfig(lambda_Z=cfg.options["lambda_z"])
    omega = calibrate_omega(p, d, PI_TIME_CONSERVING, "conserving")
    d = d.replace(omega_Ey=omega)
    basis = simulation_basis(p)
    sim = simulate_experiment(p, d, tr, cfg.options["durations"], basis=basis)
    res = sim.result
    if res.max_trace_error > 1e-6 or not np.all(np.isfinite(res.pop_by_mS)):
        raise IntegrationError(f"trace drifted by {res.max_trace_error:.3g}")
    text = trace_csv(res)
    out.add(f"trace_{tr}.csv", text, text.split("\n", 1)[0].split(","), "t_us", "population")
    out.info.update(transition=tr, omega_Ey_MHz=omega, delta_L_MHz=sim.delta_L.delta_L,
                    delta_L_flagged=sim.delta_L.flagged,
                    gamma_ab_MHz=pumping_rate_ab(p, d, tr, basis, sim.delta_L.delta_L),
                    lambda_Z_MHz=d.lambda_Z)
    if cfg.options["fit"]:
        for key, y in sim.traces.items():
            r = _fit_trace_files(out, sim.times, y, f"{tr}_{key}", TRACE_FIT_MODEL[tr])
            out.info[f"fit_{tr}_{key}"] = r.as_dict()
    return out


def _strain_files(out: Outputs, lines, p: ModelParams, tag: str):
    res = fit_strain(lines, p)
    out.add(f"strain_fit{tag}.txt", fitresult_text(res))
    labels = [f"{ln.ground_label}->{ln.excited_label}" for ln in lines]
    out.add(f"strain_residuals{tag}.csv", residuals_csv(labels, res.residuals, "line"),
            ("line", "residual"), "line", "residual")
    if not res.converged:
        out.converged = False
    return res


def cmd_fit(cfg: RunConfig) -> Outputs:
    out = Outputs()
    p = cfg.params
    model = cfg.options["model"]
    if "input" in cfg.options:
        kind, data = cfg.options["input"]
        if kind == "lines":
            res = _strain_files(out, data, p, "")
            out.info["strain_delta_MHz"] = res["strain_delta"]
        else:
            t = data["t_us"]
            for name, y in data.items():
                if name in ("t_us", "trace_err"):
                    continue
                res = _fit_trace_files(out, t, y, name, model)
                out.info[f"fit_{name}"] = res.as_dict()
    if cfg.options["synthetic"]:
        rng = np.random.default_rng(cfg.seed)
        lines = synthetic_lines(p, noise=50.0, seed=cfg.seed)
        out.add("synthetic_lines.csv", line_list_csv(lines), LINE_HEADER, "excited_label",
                "freq_MHz")
        res = _strain_files(out, lines, p, "_synthetic")
        t = np.linspace(0.0, 20.0, 201)
        truth = {"c": 0.5, "A": 0.4, "tau": 8.0, "f": 0.35, "phi": 0.0}
        if model == "damped_sin_plus_ramp":
            truth.update(B=0.2, tau_r=10.0)
        y = evaluate_trace_model(model, t, truth) + rng.normal(0.0, 0.004, t.size)
        out.add("synthetic_trace.csv", _csv(("t_us", "signal"), zip(t, y)),
                ("t_us", "signal"), "t_us", "signal")
        tres = _fit_trace_files(out, t, y, "synthetic", model)
        out.info["synthetic_truth"] = {"strain_delta": p.strain_delta, **truth}
        out.info["synthetic_fit"] = {"strain_delta": res["strain_delta"], **tres.as_dict()}
    return out


COMMANDS = {"spectrum": cmd_spectrum, "fom": cmd_fom, "simulate": cmd_simulate,
            "fit": cmd_fit}


# --- output ------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int, bool)) or x is None or isinstance(x, str):
        return x.item() if isinstance(x, np.generic) else x
    return str(x)


def manifest(cfg: RunConfig, out: Outputs) -> str:
    doc = {
        "command": cfg.command,
        "version": __version__,
        "seed": cfg.seed,
        "units": {"frequency": "MHz", "time": "us", "field": "G", "angle": "deg"},
        "params": cfg.params.to_dict(),
        "files": out.axes,
        "results": out.info,
        "converged": out.converged,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_outputs(cfg: RunConfig, out: Outputs):
    files = dict(out.files)
    files["manifest.json"] = manifest(cfg, out)
    files["params.txt"] = dump_params(cfg.params)
    _check_writable(cfg, files)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (cfg.output_dir / name).write_text(text)
    return sorted(files)


def _check_writable(cfg: RunConfig, names):
    if cfg.output_dir.exists() and not cfg.output_dir.is_dir():
        raise ConfigError(f"{cfg.output_dir} exists and is not a directory")
    if cfg.force:
        return
    clash = [n for n in names if (cfg.output_dir / n).exists()]
    if clash:
        raise ConfigError(f"would overwrite {clash} in {cfg.output_dir}; use --force")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
        out = COMMANDS[cfg.command](cfg)
        written = write_outputs(cfg, out)
    except (ConfigError, FitError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (IntegrationError, DimensionError, NotHermitianError, np.linalg.LinAlgError,
            FloatingPointError, OverflowError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    for name in written:
        log.info("wrote %s", cfg.output_dir / name)
    if not out.converged:
        log.error("a fit did not converge; results written and flagged in manifest.json")
        return EXIT_NONCONVERGED
    return EXIT_OK


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
