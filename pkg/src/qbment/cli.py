"""Command-line driver.

    qbment evolve        [--config F] [--out STEM] [--format csv|json] [--key=value ...]
    qbment phase-diagram [--t-grid A:B:STEP] [--r-grid A:B:STEP] ...
    qbment detune        [--omega2-grid LIST] [--snapshots LIST] ...
    qbment equilibrium   ...

Overrides use dotted keys, e.g. ``--initial.r=3 --temperature=10``.
Exit codes: 0 ok, 2 invalid configuration, 3 recurrence guard, 4 numerical failure.
"""

import argparse
import json
import logging
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import RunConfig, apply_overrides, load_config, validate_config
from .dynamics import ModelParams, analyze_series, evolve
from .errors import ConfigurationError, InvalidStateError, NumericalError, RecurrenceError
from .gaussian import make_initial_state
from .phases import (
    asymptotic_coefficients,
    boundaries,
    crossover_temperature,
    damping_rate,
    equilibrium_dispersions_fd,
    phase_diagram,
)

log = logging.getLogger("qbment")

EXIT_OK, EXIT_CONFIG, EXIT_RECURRENCE, EXIT_NUMERICAL = 0, 2, 3, 4

EVOLVE_COLUMNS = ("t", "E_N", "var_xm", "var_pm", "var_xp", "var_pp", "purity_minus")
GRID_COLUMNS = ("T", "r", "phase", "E_mean", "E_amp")
BOUNDARY_COLUMNS = ("T", "S_r", "r_crit", "E_c")
DETUNE_SERIES_COLUMNS = ("omega2", "t", "E_N")
DETUNE_SNAPSHOT_COLUMNS = ("t", "omega2", "E_N")
EQUILIBRIUM_KEYS = (
    "T",
    "omega_minus",
    "dx_plus",
    "dp_plus",
    "dx_plus_fd",
    "dp_plus_fd",
    "gamma",
    "D",
    "f",
    "S_r",
    "r_crit",
    "E_c",
    "T_star",
)

_OVERRIDE = re.compile(r"^--([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?)=(.*)$")


# -- formatting and atomic output -------------------------------------------


def fmt_float(x):
    return format(float(x), ".12g")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def _round(v):
    if isinstance(v, (float, np.floating)):
        return float(fmt_float(v))
    if isinstance(v, dict):
        return {k: _round(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_round(x) for x in v]
    return v


def render_table(columns, rows, fmt):
    if fmt == "json":
        return render_json({"columns": list(columns), "rows": [list(r) for r in rows]})
    lines = [",".join(columns)] + [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def render_json(obj):
    try:
        return json.dumps(_round(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"
    except ValueError:
        raise NumericalError("non-finite value in JSON output") from None


def write_outputs(files):
    """Write {path: text} atomically: everything goes to temp files first, then renames."""
    staged = []
    try:
        for path, text in files.items():
            d = os.path.dirname(os.path.abspath(path))
            os.makedirs(d, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
            staged.append((tmp, path))
            with open(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def _ext(cfg):
    return "." + cfg.output.format


def gnuplot_script(csv_path, xcol, ycol, title):
    return (
        "set datafile separator ','\n"
        f"set title '{title}'\n"
        f"plot '{os.path.basename(csv_path)}' using {xcol}:{ycol} every ::1 with lines notitle\n"
    )


# -- jobs --------------------------------------------------------------------


def run_evolve(cfg, gnuplot=False):
    p = validate_config(cfg)
    V0 = make_initial_state(cfg.initial_spec(p))
    series = evolve(p, V0, cfg.temperature, cfg.times())
    analysis = analyze_series(series, window=cfg.run.window)
    rows = [
        (pt.t, pt.E_N, pt.var_xm, pt.var_pm, pt.var_xp, pt.var_pp, pt.purity_minus) for pt in series
    ]
    stem = cfg.output.path
    data_path = stem + _ext(cfg)
    files = {
        data_path: render_table(EVOLVE_COLUMNS, rows, cfg.output.format),
        stem + ".analysis.json": render_json(analysis.to_dict()),
    }
    if gnuplot and cfg.output.format == "csv":
        files[stem + ".gp"] = gnuplot_script(data_path, 1, 2, "E_N(t)")
    write_outputs(files)
    log.info("phase observed: %s", analysis.phase_observed.value)
    return analysis


def run_phase_diagram(cfg, T_grid, r_grid, threads=1, gnuplot=False):
    p = validate_config(cfg, check_horizon=False)
    if not p.resonant:
        raise ConfigurationError("phase-diagram needs resonant oscillators (omega1 == omega2)")
    try:
        diagram = phase_diagram(p, T_grid, r_grid, workers=threads)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    grid_rows = [(pt.T, pt.r, pt.phase.value, pt.E_mean, pt.E_amp) for pt in diagram.points]
    b_rows = [(b.T, b.S_r, b.r_crit, b.E_c) for b in diagram.boundaries]
    stem, fmt = cfg.output.path, cfg.output.format
    files = {
        stem + "_grid" + _ext(cfg): render_table(GRID_COLUMNS, grid_rows, fmt),
        stem + "_boundaries" + _ext(cfg): render_table(BOUNDARY_COLUMNS, b_rows, fmt),
    }
    if gnuplot and fmt == "csv":
        files[stem + "_boundaries.gp"] = gnuplot_script(stem + "_boundaries.csv", 1, 2, "S_r(T)")
    write_outputs(files)
    return diagram


def run_detune(cfg, omega2_grid, snapshots, threads=1, gnuplot=False):
    p0 = validate_config(cfg)
    times = np.asarray(cfg.times())
    snapshots = sorted(float(s) for s in snapshots)
    if snapshots and snapshots[-1] > times[-1]:
        raise ConfigurationError("snapshot times must not exceed run.t_max")
    grid = sorted(float(w) for w in omega2_grid)
    if not grid:
        raise ConfigurationError("omega2 grid is empty")
    V0 = make_initial_state(cfg.initial_spec(p0))
    sample_t = np.union1d(times, snapshots)

    def one(w2):
        try:
            p = ModelParams(p0.omega1, w2, p0.c12, p0.m, p0.spectral, p0.n_modes)
        except ConfigurationError as exc:
            raise ConfigurationError(f"omega2 = {w2:g}: {exc}") from None
        pts = evolve(p, V0, cfg.temperature, sample_t)
        return {pt.t: pt.E_N for pt in pts}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, grid))
    else:
        results = [one(w2) for w2 in grid]

    series_rows = [(w2, t, res[t]) for w2, res in zip(grid, results) for t in times]
    snap_rows = [(t, w2, res[t]) for t in snapshots for w2, res in zip(grid, results)]
    stem, fmt = cfg.output.path, cfg.output.format
    files = {
        stem + "_series" + _ext(cfg): render_table(DETUNE_SERIES_COLUMNS, series_rows, fmt),
        stem + "_snapshots" + _ext(cfg): render_table(DETUNE_SNAPSHOT_COLUMNS, snap_rows, fmt),
    }
    if gnuplot and fmt == "csv":
        files[stem + "_snapshots.gp"] = gnuplot_script(stem + "_snapshots.csv", 2, 3, "E_N vs omega2")
    write_outputs(files)
    return grid, results


def equilibrium_report(cfg):
    p = validate_config(cfg, check_horizon=False)
    if not p.resonant:
        raise ConfigurationError("equilibrium needs resonant oscillators (omega1 == omega2)")
    T = cfg.temperature
    b = boundaries(p, T)
    gamma = damping_rate(p)
    if p.spectral.kind.value == "ohmic":
        dx_fd, dp_fd = equilibrium_dispersions_fd(p.spectral, p.omega_plus, T)
    else:
        dx_fd = dp_fd = None
    D = f = None
    if gamma > 0:
        coeffs = asymptotic_coefficients(b.dx, b.dp, gamma, p.m, p.omega_plus)
        D, f = coeffs.D, coeffs.f
    report = {
        "T": T,
        "omega_minus": p.omega_minus,
        "dx_plus": b.dx,
        "dp_plus": b.dp,
        "dx_plus_fd": dx_fd,
        "dp_plus_fd": dp_fd,
        "gamma": gamma,
        "D": D,
        "f": f,
        "S_r": b.S_r,
        "r_crit": b.r_crit,
        "E_c": b.E_c,
        "T_star": crossover_temperature(p),
    }
    assert tuple(report) == EQUILIBRIUM_KEYS
    return report


def run_equilibrium(cfg):
    report = equilibrium_report(cfg)
    text = render_json(report)
    write_outputs({cfg.output.path + ".json": text})
    sys.stdout.write(text)
    return report


# -- argument handling -------------------------------------------------------


def parse_grid(text):
    """'a:b:step' (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(np.floor((b - a) / step + 1e-9))
            return [round(a + i * step, 12) for i in range(n + 1)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"bad grid specification {text!r}") from None


def _threads(value):
    if value is not None:
        return max(1, value)
    env = os.environ.get("QBM_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ConfigurationError(f"QBM_THREADS must be an integer, got {env!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", help="output path stem")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--threads", type=int, help="worker threads (default: $QBM_THREADS or 1)")
    common.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="qbment",
        description="Entanglement of two oscillators in a common thermal bath.",
        epilog="Configuration overrides: --section.key=value (e.g. --initial.r=3, --temperature=10).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("evolve", parents=[common], help="E_N(t) trajectory and its analysis")
    pd = sub.add_parser("phase-diagram", parents=[common], help="SD/SDR/NSD classification grid")
    pd.add_argument("--t-grid", default="0:10:0.5")
    pd.add_argument("--r-grid", default="0:4:0.05")
    dt = sub.add_parser("detune", parents=[common], help="non-resonant scan over omega2")
    dt.add_argument("--omega2-grid", default="0.99:1.01:0.0005")
    dt.add_argument("--snapshots", default="5,10,20")
    sub.add_parser("equilibrium", parents=[common], help="asymptotic dispersions and boundaries")
    return parser


def make_config(args, overrides):
    cfg = load_config(args.config) if args.config else RunConfig()
    extra = {}
    if args.out:
        extra["output.path"] = args.out
    if args.format:
        extra["output.format"] = args.format
    values = {}
    for token in overrides:
        m = _OVERRIDE.match(token)
        if not m:
            raise ConfigurationError(f"unrecognized argument {token!r}")
        values[m.group(1)] = m.group(2)
    values.update(extra)
    return apply_overrides(cfg, values)


def main(argv=None):
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    try:
        cfg = make_config(args, rest)
        threads = _threads(args.threads)
        if args.command == "evolve":
            run_evolve(cfg, args.gnuplot)
        elif args.command == "phase-diagram":
            run_phase_diagram(cfg, parse_grid(args.t_grid), parse_grid(args.r_grid), threads, args.gnuplot)
        elif args.command == "detune":
            run_detune(
                cfg, parse_grid(args.omega2_grid), parse_grid(args.snapshots), threads, args.gnuplot
            )
        elif args.command == "equilibrium":
            run_equilibrium(cfg)
    except ConfigurationError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except RecurrenceError as exc:
        log.error("%s", exc)
        return EXIT_RECURRENCE
    except (NumericalError, InvalidStateError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
