"""``rabi-sim``: sweep, wigner, validate and single-run commands.

Every output file starts with the resolved configuration so a table can be
traced back to the run that produced it. Numbers are written with at most
12 significant digits and rows follow a fixed order, which makes repeated
runs byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as cfgmod
from .errors import ConfigError, RabiSimError
from .metrics import (energy, fidelity, grid_axes, negativity, radial_asymmetry,
                      wigner)
from .setups import (SetupConfig, apply_to_input, ideal_jc, ideal_rabi,
                     input_state, run_setup, steer)

log = logging.getLogger("rabi_sim")

SWEEP_COLUMNS = ("variant", "input", "t", "E_ideal_rabi", "N_ideal_rabi", "E_jc", "N_jc",
                 "E_setup", "N_setup", "F_Rabi", "F_JC", "P_success", "error")
SINGLE_COLUMNS = ("variant", "input", "t", "E_ideal_rabi", "N_ideal_rabi", "E_jc", "N_jc",
                  "E_setup", "N_setup", "F_Rabi", "F_JC", "P_success", "herald_probability",
                  "leak_u", "leak_up", "leak_d_multi")
BOUNDED = ("F_Rabi", "F_JC", "P_success", "herald_probability")
PROCESSES = ("input", "jc", "ideal-rabi", "u2", "u3", "u3+loss")
PROJECTIONS = ("P0", "P1")
BOUND_TOL = 1e-9

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class NumericalFailure(RabiSimError):
    pass


# --- formatting ------------------------------------------------------------

def fmt(x) -> str:
    """12 significant digits, shortest form, no negative zero."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    s = f"{x:.12g}"
    return "0" if s in ("-0", "0") else s


def _round(x):
    if x is None or isinstance(x, str):
        return x
    x = float(x)
    if not math.isfinite(x):
        return None
    v = float(f"{x:.12g}")
    return 0.0 if v == 0 else v


def _bounded(row):
    """Clip tiny excursions of probabilities and fidelities; refuse real ones."""
    for key in BOUNDED:
        v = row.get(key)
        if v is None:
            continue
        if v < -BOUND_TOL or v > 1 + BOUND_TOL:
            raise NumericalFailure(f"{key} = {v} outside [0, 1]")
        row[key] = min(max(v, 0.0), 1.0)
    return row


def _header(plan):
    return [f"rabi-sim {plan.command}"] + plan.echo()


def _write_table(path: Path, plan, columns, rows):
    if plan.format == "csv":
        buf = io.StringIO()
        for line in _header(plan):
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])
        text = buf.getvalue()
    else:
        doc = {"command": plan.command, "config": plan.echo(), "columns": list(columns),
               "rows": [{c: _round(row.get(c)) for c in columns} for row in rows]}
        text = json.dumps(doc, indent=2) + "\n"
    path.write_text(text)
    return path


# --- sweep / single ----------------------------------------------------------

def evaluate(setup: dict, variant: str, spec: tuple, t: float) -> dict:
    """All per-row quantities for one (variant, input, t)."""
    cfg = SetupConfig(**{**setup, "variant": variant, "cv_input": spec, "t": t})
    res = run_setup(None, cfg)
    rc = res.config
    psi = input_state(rc)
    rabi = apply_to_input(ideal_rabi(t, rc.dim_u), rc.qubit_input, psi)
    jc = apply_to_input(ideal_jc(rc.tau, rc.dim_u), rc.qubit_input, psi)
    out = res.joint_state
    return {
        "E_ideal_rabi": energy(rabi), "N_ideal_rabi": negativity(rabi),
        "E_jc": energy(jc), "N_jc": negativity(jc),
        "E_setup": energy(out), "N_setup": negativity(out),
        "F_Rabi": fidelity(rabi, out), "F_JC": fidelity(jc, out),
        "P_success": res.success_probability,
        "herald_probability": res.herald_probability,
        "leak_u": res.leakage["u"], "leak_up": res.leakage["u'"],
        "leak_d_multi": res.leakage["d>1"],
    }


def _sweep_task(args):
    setup, variant, spec, t = args
    row = {"variant": variant, "input": cfgmod.input_tag(spec), "t": t}
    try:
        vals = evaluate(setup, variant, spec, t)
        row.update({k: vals[k] for k in SWEEP_COLUMNS if k in vals})
        _bounded(row)
    except ConfigError:
        raise
    except RabiSimError as exc:
        row = {"variant": row["variant"], "input": row["input"], "t": t,
               "error": f"{type(exc).__name__}: {exc}"}
    return row


def cmd_sweep(plan) -> list:
    tasks = [(plan.setup, v, spec, t) for v in plan.variants for spec in plan.inputs
             for t in plan.t_grid]
    if plan.jobs > 1:
        with ProcessPoolExecutor(plan.jobs) as ex:
            rows = list(ex.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(a) for a in tasks]
    plan.out.mkdir(parents=True, exist_ok=True)
    _write_table(plan.out / f"sweep.{plan.format}", plan, SWEEP_COLUMNS, rows)
    return rows


def cmd_single(plan) -> dict:
    cfg = SetupConfig(**plan.setup)
    vals = evaluate(plan.setup, cfg.variant, tuple(cfg.cv_input), cfg.t)
    row = _bounded({"variant": cfg.variant, "input": cfgmod.input_tag(tuple(cfg.cv_input)),
                    "t": cfg.t, **vals})
    plan.out.mkdir(parents=True, exist_ok=True)
    _write_table(plan.out / f"single.{plan.format}", plan, SINGLE_COLUMNS, [row])
    return row


# --- wigner ------------------------------------------------------------------

def _tag(spec):
    return cfgmod.input_tag(spec).replace(":", "-")


def wigner_states(plan, spec) -> dict:
    """{(process, projection): (state on u, probability)} for one input."""
    t = plan.wigner_t
    base = {**plan.setup, "t": t, "cv_input": spec}
    cfg = SetupConfig(**base).resolved()
    psi = input_state(cfg)
    joint = {
        "jc": lambda: apply_to_input(ideal_jc(cfg.tau, cfg.dim_u), cfg.qubit_input, psi),
        "ideal-rabi": lambda: apply_to_input(ideal_rabi(t, cfg.dim_u), cfg.qubit_input, psi),
        "u2": lambda: run_setup(None, SetupConfig(**{**base, "gamma": 0.0,
                                                      "variant": f"u2-{plan.wigner_resource}"})),
        "u3": lambda: run_setup(None, SetupConfig(**{**base, "gamma": 0.0,
                                                      "variant": f"u3-{plan.wigner_resource}"})),
        "u3+loss": lambda: run_setup(None, SetupConfig(**{**base, "gamma": plan.wigner_gamma,
                                                           "variant": f"u3-{plan.wigner_resource}"})),
    }
    out = {}
    for proc in PROCESSES:
        if proc == "input":
            for proj in PROJECTIONS:
                out[(proc, proj)] = (psi, 1.0)
            continue
        try:
            state = joint[proc]()
        except RabiSimError as exc:
            for proj in PROJECTIONS:
                out[(proc, proj)] = exc
            continue
        for proj in PROJECTIONS:
            try:
                out[(proc, proj)] = steer(state, proj)
            except RabiSimError as exc:
                out[(proc, proj)] = exc
    return out


def _write_grid(path, plan, meta, grid):
    if plan.format == "csv":
        buf = io.StringIO()
        for line in _header(plan):
            buf.write(f"# {line}\n")
        for k in sorted(meta):
            buf.write(f"# {k} = {fmt(meta[k])}\n")
        for row in grid.values:
            buf.write(",".join(fmt(v) for v in row) + "\n")
        text = buf.getvalue()
    else:
        doc = {"command": plan.command, "config": plan.echo(),
               **{k: _round(v) if not isinstance(v, str) else v for k, v in sorted(meta.items())},
               "x": [_round(v) for v in grid.x], "p": [_round(v) for v in grid.p],
               "values": [[_round(v) for v in row] for row in grid.values]}
        text = json.dumps(doc, indent=2) + "\n"
    path.write_text(text)


def cmd_wigner(plan) -> dict:
    lo, hi, n = plan.grid
    axes = grid_axes(lo, hi, n)
    plan.out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for spec in plan.wigner_inputs:
        for (proc, proj), item in wigner_states(plan, spec).items():
            name = f"wigner_{_tag(spec)}_{proc}_{proj}.{plan.format}"
            if isinstance(item, Exception):
                summary[name] = {"error": f"{type(item).__name__}: {item}"}
                continue
            rho, prob = item
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                g = wigner(rho, axes)
            for w in caught:
                log.info("%s: %s", name, w.message)
            meta = {"input": cfgmod.input_tag(spec), "process": proc, "projection": proj,
                    "probability": prob, "t": plan.wigner_t,
                    "grid": f"x,p in [{fmt(lo)}, {fmt(hi)}], {n} points each; rows p, columns x"}
            _write_grid(plan.out / name, plan, meta, g)
            summary[name] = {"min_wigner": _round(float(g.values.min())),
                             "probability": _round(prob),
                             "integral": _round(g.integral),
                             "radial_asymmetry": _round(radial_asymmetry(rho))}
    doc = {"command": plan.command, "config": plan.echo(), "files": summary}
    (plan.out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return summary


# --- validate ----------------------------------------------------------------

def cmd_validate(plan) -> list:
    from .validate import run_suite
    checks = run_suite(plan)
    plan.out.mkdir(parents=True, exist_ok=True)
    rows = [dataclasses.asdict(c) for c in checks]
    for r in rows:
        r["passed"] = "pass" if r["passed"] else "fail"
    if plan.format == "csv":
        _write_table(plan.out / "validate.csv", plan,
                     ("name", "passed", "deviation", "tolerance", "detail"), rows)
    else:
        doc = {"command": plan.command, "config": plan.echo(),
               "passed": all(c.passed for c in checks),
               "checks": [{**r, "deviation": _round(r["deviation"]),
                           "tolerance": _round(r["tolerance"])} for r in rows]}
        (plan.out / "validate.json").write_text(json.dumps(doc, indent=2) + "\n")
    return checks


# --- entry point ---------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="rabi-sim", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=cfgmod.COMMANDS)
    p.add_argument("--config", help="flat key = value file with dotted keys")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=cfgmod.FORMATS, default="csv")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = cfgmod.load(args.config, args.overrides)
        plan = cfgmod.build_plan(args.command, raw, args.out, args.format)
    except ConfigError as exc:
        print(f"rabi-sim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if plan.command == "sweep":
            rows = cmd_sweep(plan)
            failed = sum(1 for r in rows if r.get("error"))
            if failed:
                log.warning("%d of %d rows failed; see the error column", failed, len(rows))
        elif plan.command == "single":
            cmd_single(plan)
        elif plan.command == "wigner":
            cmd_wigner(plan)
        else:
            checks = cmd_validate(plan)
            for c in checks:
                log.info("%s %s (%.3g <= %.3g) %s", "pass" if c.passed else "FAIL",
                         c.name, c.deviation, c.tolerance, c.detail)
            if not all(c.passed for c in checks):
                bad = ", ".join(c.name for c in checks if not c.passed)
                print(f"rabi-sim: validation failed: {bad}", file=sys.stderr)
                return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"rabi-sim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RabiSimError as exc:
        print(f"rabi-sim: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"rabi-sim: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
