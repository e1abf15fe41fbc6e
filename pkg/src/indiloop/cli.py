"""Command line front end.

    indiloop <margins|bode|nyquist|region|evaluate|sweep> --config run.ini [flags]
    indiloop rerun path/to/manifest.json

Exit codes: 0 success, 2 configuration error, 3 divergence or instability,
4 numerical failure.  Output goes to ``--out``, else ``$INDILOOP_OUT``,
else ``./indiloop_out``; ``manifest.json`` is written last.
"""

from __future__ import annotations

import argparse
import datetime as dt
import itertools
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SWEEPABLE, ConfigError, RunConfig, load_config, parse_floats, parse_list
from .loop_synthesis import gamma1, gamma2, open_loop
from .output import format_value, write_columns, write_csv, write_kv, write_manifest
from .performance_analysis import performance_set
from .stability_analysis import closed_loop_char_poly, delay_stability_grid, is_stable, margins
from .tf_core import DomainError, NumericalFailure, SingularEvaluationError, evaluate, freq_response
from .time_sim import METRIC_FIELDS, DivergenceError, SimTrace, run_metrics

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_NUMERIC = 0, 2, 3, 4
OUT_ENV = "INDILOOP_OUT"
COMMANDS = ("margins", "bode", "nyquist", "region", "evaluate", "sweep")


class Diverged(Exception):
    """A run finished but found divergence or instability."""


def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"band must be lo:hi, got {text!r}") from e
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"band needs 0 < lo < hi, got {text!r}")
    return lo, hi


def _axis(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"axis must be lo:hi:n, got {text!r}") from e
    if lo < 0 or hi < lo or n < 1:
        raise argparse.ArgumentTypeError(f"bad axis {text!r}")
    return lo, hi, n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="indiloop", description="Stability and performance analysis of incremental control loops.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="INI configuration file")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./indiloop_out)")

    sp = sub.add_parser("margins", help="gain/phase/delay margins, hedging off and on")
    common(sp)
    sp.add_argument("--pch", choices=("both", "on", "off"), default="both")
    sp.add_argument("--band", type=_band, default=(1e-3, 1e4))

    for name, what in (("bode", "magnitude and phase"), ("nyquist", "real and imaginary parts")):
        sp = sub.add_parser(name, help=f"open-loop {what}")
        common(sp)
        sp.add_argument("--band", type=_band, default=(1e-2, 1e3))
        sp.add_argument("--points", type=int, default=801)
        sp.add_argument("--pch", choices=("config", "on", "off"), default="config")
        sp.add_argument("--gamma1", type=float, action="append", default=[], metavar="TAU1")
        sp.add_argument("--gamma2", action="append", default=[], metavar="TAU1,TAU2")
        if name == "bode":
            sp.add_argument("--performance", action="store_true", help="also write S, T_ec, T_yd, T_yn curves")

    sp = sub.add_parser("region", help="stability over the (tau1, tau2) delay plane")
    common(sp)
    sp.add_argument("--tau1", type=_axis, default=(0.0, 0.1, 81))
    sp.add_argument("--tau2", type=_axis, default=(0.0, 0.1, 81))
    sp.add_argument("--gains", action="append", default=[], metavar="KP,KV")

    sp = sub.add_parser("evaluate", help="run the metric battery")
    common(sp)
    sp.add_argument("--scenario", action="append", choices=("tracking", "disturbance", "noise", "robustness"))

    sp = sub.add_parser("sweep", help="metrics against one or two swept parameters")
    common(sp)
    sp.add_argument("--param")
    sp.add_argument("--values")
    sp.add_argument("--param2")
    sp.add_argument("--values2")

    sp = sub.add_parser("rerun", help="repeat a run from its manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out")
    return p


# ---------------------------------------------------------------------------
# commands; each returns the list of files it wrote
# ---------------------------------------------------------------------------


def _margin_row(label, r):
    return [label, r.gain_margin, r.gain_margin_db, r.phase_margin, r.time_delay_margin, r.gain_crossover, r.crossover_found]


MARGIN_COLUMNS = ["pch", "gain_margin", "gain_margin_db", "phase_margin_deg", "time_delay_margin_s", "gain_crossover", "crossover_found"]


def cmd_margins(rc: RunConfig, args, out: Path) -> list[Path]:
    m = rc.plant_model()
    cfg = rc.loop_config(m)
    states = {"both": (False, True), "on": (True,), "off": (False,)}[args.pch]
    rows = [_margin_row(int(s), margins(open_loop(cfg, m, s), args.band)) for s in states]
    return [write_csv(out / "margins.csv", MARGIN_COLUMNS, rows)]


def _pch_flag(choice):
    return None if choice == "config" else choice == "on"


def _gamma_curves(args, T_act, w, out, polar):
    files = []
    curves = [(f"gamma1_{i}", gamma1(t, T_act)) for i, t in enumerate(args.gamma1)]
    for i, pair in enumerate(args.gamma2):
        t1, t2 = parse_floats(pair, "--gamma2")
        curves.append((f"gamma2_{i}", gamma2(t1, t2, T_act)))
    for name, g in curves:
        v = g(1j * w)
        data = {"omega": w}
        if polar:
            data.update(magnitude_db=20 * np.log10(np.abs(v)), phase_deg=np.degrees(np.unwrap(np.angle(v))))
        else:
            data.update(real=v.real, imag=v.imag)
        files.append(write_columns(out / f"{args.command}_{name}.csv", data))
    return files


def cmd_bode(rc: RunConfig, args, out: Path) -> list[Path]:
    m = rc.plant_model()
    cfg = rc.loop_config(m)
    if args.points < 2:
        raise ConfigError("--points must be at least 2")
    w = np.logspace(math.log10(args.band[0]), math.log10(args.band[1]), args.points)
    L = open_loop(cfg, m, _pch_flag(args.pch))
    fr = freq_response(L, w)
    files = [write_columns(out / "bode.csv", {"omega": w, "magnitude_db": fr.magnitude_db, "phase_deg": fr.phase_deg})]
    files += _gamma_curves(args, cfg.T_act, w, out, polar=True)
    if getattr(args, "performance", False):
        ps = performance_set(cfg, m, _pch_flag(args.pch))
        data = {"omega": w}
        for name in ("S", "T_ec", "T_yd", "T_yn"):
            r = freq_response(getattr(ps, name), w)
            data[f"{name}_db"] = r.magnitude_db
            data[f"{name}_deg"] = r.phase_deg
        files.append(write_columns(out / "performance.csv", data))
    return files


def cmd_nyquist(rc: RunConfig, args, out: Path) -> list[Path]:
    m = rc.plant_model()
    cfg = rc.loop_config(m)
    if args.points < 2:
        raise ConfigError("--points must be at least 2")
    w = np.logspace(math.log10(args.band[0]), math.log10(args.band[1]), args.points)
    v = evaluate(open_loop(cfg, m, _pch_flag(args.pch)), 1j * w)
    files = [write_columns(out / "nyquist.csv", {"omega": w, "real": v.real, "imag": v.imag})]
    return files + _gamma_curves(args, cfg.T_act, w, out, polar=False)


def cmd_region(rc: RunConfig, args, out: Path) -> list[Path]:
    m = rc.plant_model()
    t1 = np.linspace(*args.tau1[:2], args.tau1[2])
    t2 = np.linspace(*args.tau2[:2], args.tau2[2])
    gains = [tuple(parse_floats(g, "--gains")) for g in args.gains] or [(rc.loop["K_p"], rc.loop["K_v"])]
    rows = []
    for kp, kv in gains:
        g = delay_stability_grid(rc.loop_config(m, K_p=kp, K_v=kv), m, t1, t2)
        for i, a in enumerate(t1):
            for j, b in enumerate(t2):
                mr = g.max_real_part[i, j]
                rows.append([kp, kv, float(a), float(b), bool(g.stable[i, j]),
                             None if math.isnan(mr) else float(mr), bool(g.indeterminate[i, j])])
    cols = ["K_p", "K_v", "tau1", "tau2", "stable", "max_real_part", "indeterminate"]
    return [write_csv(out / "region.csv", cols, rows)]


def _write_trace(path, tr: SimTrace):
    return write_columns(path, tr.columns())


def cmd_evaluate(rc: RunConfig, args, out: Path) -> list[Path]:
    m = rc.plant_model()
    cfg = rc.loop_config(m)
    battery = rc.battery()
    if args.scenario:
        battery = battery.selected(args.scenario)
    files = []
    if not is_stable(closed_loop_char_poly(cfg, m)):
        files.append(write_kv(out / "metrics.txt", {"status": "unstable"}))
        raise Diverged("nominal closed loop is unstable", files)
    rep = run_metrics(cfg, m, battery)
    metrics = rep.as_dict()
    status = "divergent:" + "+".join(rep.divergent) if rep.divergent else "ok"
    files.append(write_kv(out / "metrics.txt", {**metrics, "mc_excluded": rep.mc_excluded, "status": status}))
    files.append(write_csv(out / "metrics.csv", list(METRIC_FIELDS), [list(metrics.values())]))
    for kind, tr in rep.traces.items():
        files.append(_write_trace(out / f"trace_{kind}.csv", tr))
    if rep.divergent:
        raise Diverged(f"divergent scenario(s): {', '.join(rep.divergent)}", files)
    return files


def sweep_overrides(rc: RunConfig, name: str, value: float) -> dict:
    """Loop-field overrides for one swept value."""
    if name not in SWEEPABLE:
        raise ConfigError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEPABLE)}")
    inverse = {"actuator_freq": "T_act", "sensor_freq": "T_sensor", "filter_bandwidth": "T_diff"}
    if name in inverse:
        if not value > 0:
            raise ConfigError(f"{name} must be positive")
        return {inverse[name]: 1.0 / value}
    return {name: value}


def cmd_sweep(rc: RunConfig, args, out: Path) -> list[Path]:
    plan = dict(rc.sweep)
    for k in ("param", "values", "param2", "values2"):
        if getattr(args, k, None):
            plan[k] = getattr(args, k)
    if "param" not in plan or "values" not in plan:
        raise ConfigError("sweep needs sweep.param and sweep.values")
    names = [plan["param"]]
    axes = [parse_floats(plan["values"], "sweep.values")]
    if plan.get("param2"):
        names.append(plan["param2"])
        axes.append(parse_floats(plan.get("values2", ""), "sweep.values2"))
    m = rc.plant_model()
    battery = rc.battery()
    if plan.get("scenarios"):
        battery = battery.selected(parse_list(plan["scenarios"]))
    points = list(itertools.product(*axes))
    for name, vals in zip(names, axes):
        if not vals:
            raise ConfigError(f"no values given for {name}")
        sweep_overrides(rc, name, vals[0])
    rows = []
    for idx, point in enumerate(points):
        over = {}
        for name, v in zip(names, point):
            over.update(sweep_overrides(rc, name, v))
        cfg = rc.loop_config(m, **over)
        if not is_stable(closed_loop_char_poly(cfg, m)):
            mr = margins(open_loop(cfg, m))
            metrics = dict.fromkeys(METRIC_FIELDS)
            metrics.update(GM=mr.gain_margin_db, PM=mr.phase_margin, TDM=mr.time_delay_margin)
            status = "unstable"
        else:
            rep = run_metrics(cfg, m, battery, keep_traces=False)
            metrics = rep.as_dict()
            status = "divergent" if rep.divergent else "ok"
        for key, val in metrics.items():
            if val is not None and not math.isfinite(val) and key not in ("GM", "PM", "TDM"):
                val = None
            # the value column is a margin field only on margin rows
            rows.append([idx, *point, key, format_value(val, key), status])
    cols = ["point", *names, "metric", "value", "status"]
    return [write_csv(out / "sweep.csv", cols, rows)]


HANDLERS = {
    "margins": cmd_margins,
    "bode": cmd_bode,
    "nyquist": cmd_nyquist,
    "region": cmd_region,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def _stored_args(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("config", "out", "manifest")}


def _out_dir(flag) -> Path:
    out = Path(flag or os.environ.get(OUT_ENV) or "indiloop_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def execute(command: str, rc: RunConfig, args, out: Path, argv) -> int:
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    code, message, files = EXIT_OK, "", []
    try:
        files = HANDLERS[command](rc, args, out)
    except Diverged as e:
        code, message, files = EXIT_DIVERGED, e.args[0], e.args[1]
    except DivergenceError as e:
        code, message = EXIT_DIVERGED, str(e)
    except (NumericalFailure, SingularEvaluationError) as e:
        code, message = EXIT_NUMERIC, f"numerical failure: {e}"
    manifest = {
        "command": command,
        "argv": list(argv),
        "args": _stored_args(args),
        "config": rc.to_dict(),
        "out_dir": str(out),
        "seed": rc.scenario.get("seed"),
        "version": __version__,
        "files": sorted(p.name for p in files),
        "exit_code": code,
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
    }
    write_manifest(out / "manifest.json", manifest)
    if message:
        print(f"indiloop: {message}", file=sys.stderr)
    return code


def _namespace_from(stored: dict, command: str) -> argparse.Namespace:
    ns = argparse.Namespace(**stored)
    ns.command = command
    for k in ("band", "tau1", "tau2"):
        if isinstance(getattr(ns, k, None), list):
            setattr(ns, k, tuple(getattr(ns, k)))
    return ns


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        if args.command == "rerun":
            import json

            man = json.loads(Path(args.manifest).read_text())
            command = man["command"]
            rc = RunConfig.from_dict(man["config"])
            ns = _namespace_from(man["args"], command)
            out = _out_dir(args.out or man["out_dir"])
            return execute(command, rc, ns, out, man["argv"])
        rc = load_config(args.config)
        out = _out_dir(args.out)
        return execute(args.command, rc, args, out, argv)
    except (ConfigError, DomainError, argparse.ArgumentTypeError, KeyError, OSError) as e:
        print(f"indiloop: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
