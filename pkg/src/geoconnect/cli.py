"""Command-line front end: ``geoconnect COMMAND SCENARIO... [options]``.

Commands::

    connect      full pipeline; verdict file plus path samples
    verify       residual and conservation report for a path file
    obstruct     obstruction search only
    gpw-connect  plane-wave solver
    sweep        per-n diagnostics over the n-schedule
    arrival      arrival time T(x) of the lightlike lift of a path

Exit codes: 0 geodesic / success, 2 obstructed, 3 inconclusive, 1 error.
The log level is read from the GEO_LOG environment variable.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .action import DiscretePath, lightlike_lift
from .connect import (
    ConnectVerdict,
    classify_pairing,
    connect,
    limit_system,
    sweep,
    beta_lower_bound,
    _plain,
)
from .fieldlang import FieldError
from .geodesic import residual
from .geometry import GeometryError
from .gpw import full_metric, full_residual, gpw_connect
from .obstruction import certify
from .scenario import ScenarioError, config_from, load_scenario, _Collector
from .spacetime import SpacetimeModel

log = logging.getLogger("geoconnect")

EXIT_OK, EXIT_ERROR, EXIT_OBSTRUCTED, EXIT_INCONCLUSIVE = 0, 1, 2, 3
COMMANDS = ("connect", "verify", "obstruct", "gpw-connect", "sweep", "arrival")
SWEEP_COLUMNS = (
    "n", "Jn", "xdot_l2", "tdot_l2", "h1_gap", "residual",
    "pairing_min", "pairing_max", "extrapolated_gap", "extrapolated_gap2", "status", "iterations",
)
OVERRIDES = {
    "nodes": "m", "n_start": "n0", "k_max": "k_max", "tol_grad": "tol_grad",
    "tol_lim": "tol_lim", "tol_bvp": "tol_bvp", "grid": "grid", "seed": "seed",
}


class CommandError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_table(path: Path, header, rows, emit="csv"):
    """CSV with a header row, or a whitespace layout with a '#' header for gnuplot."""
    with open(path, "w", newline="") as fh:
        if emit == "gnuplot-data":
            fh.write("# " + " ".join(header) + "\n")
            for row in rows:
                fh.write(" ".join(fmt(v) for v in row) + "\n")
        else:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])


def read_table(path):
    """Inverse of write_table for numeric tables; returns (header, array)."""
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("#"):
        header = first[1:].split()
        data = np.loadtxt(path, comments="#", ndmin=2)
    else:
        header = [h.strip() for h in first.split(",")]
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise CommandError(f"{path}: {data.shape[1]} columns but header names {len(header)}")
    return header, data


def path_columns(scenario):
    d = scenario.model.dimension
    xs = [f"x{i + 1}" for i in range(d)]
    return ["s"] + xs + (["u", "v"] if scenario.is_gpw else ["t"])


def _suffix(emit):
    return ".dat" if emit == "gnuplot-data" else ".csv"


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def split_path_report(scenario, path: DiscretePath) -> dict:
    """Residual and finite-difference conservation along sampled (x, t)."""
    base = scenario.model
    model = SpacetimeModel(base)
    system = limit_system(base)
    rich = path.m % 2 == 0 and path.m >= 8
    r = residual(model, path, system, richardson=rich)
    h = path.h
    xm = path.nodes[1:-1]
    v = (path.nodes[2:] - path.nodes[:-2]) / (2 * h)
    td = (path.t[2:] - path.t[:-2]) / (2 * h)
    geo, w, b = model.pieces(xm)
    a = np.einsum("ni,ni->n", w, v)
    E = np.einsum("ni,nij,nj->n", v, geo.g, v) + 2 * a * td - b * td**2
    C = a - b * td
    d = base.dimension
    end = np.concatenate([path.nodes[-1], [path.t[-1]]])
    start = np.concatenate([path.nodes[0], [path.t[0]]])
    return {
        "system": system,
        "residual": r,
        "residual_kind": "richardson" if rich else "second-difference",
        "nodes": path.m,
        "energy": float(np.mean(E)),
        "energy_drift": float(np.max(E) - np.min(E)),
        "killing_constant": float(np.mean(C)),
        "killing_drift": float(np.max(C) - np.min(C)),
        "condition_ii": classify_pairing(C),
        "endpoint_mismatch": float(max(np.max(np.abs(start - scenario.p[: d + 1])),
                                       np.max(np.abs(end - scenario.q[: d + 1])))),
    }


def gpw_path_report(scenario, X) -> dict:
    model = scenario.model
    m = X.shape[0] - 1
    rich = m % 2 == 0 and m >= 8
    if not rich:
        raise CommandError("GPW path files need an even number (>= 8) of segments")
    r = full_residual(model, X)
    h = 1.0 / m
    V = (X[2:] - X[:-2]) / (2 * h)
    G, _ = full_metric(model, X[1:-1])
    E = np.einsum("ni,nij,nj->n", V, G, V)
    C = V[:, model.dimension]
    return {
        "system": "gpw",
        "residual": r,
        "residual_kind": "richardson",
        "nodes": m,
        "energy": float(np.mean(E)),
        "energy_drift": float(np.max(E) - np.min(E)),
        "killing_constant": float(np.mean(C)),
        "killing_drift": float(np.max(C) - np.min(C)),
        "condition_ii": classify_pairing(C),
        "endpoint_mismatch": float(max(np.max(np.abs(X[0] - scenario.p)), np.max(np.abs(X[-1] - scenario.q)))),
    }


def _samples(scenario, verdict: ConnectVerdict):
    """(s, coordinates) to publish for a verdict, or None."""
    sol = verdict.solution
    if sol is not None:
        coords = sol.coordinates() if scenario.is_gpw else np.column_stack([sol.x, sol.t])
        return sol.s, coords
    path = verdict.path
    if path is not None and path.t is not None:
        return path.s, np.column_stack([path.nodes, path.t])
    cert = verdict.certificate
    if cert is not None and cert.witness is not None:
        w = cert.witness
        return w.s, np.column_stack([w.nodes, w.t])
    return None


class Run:
    """Artifacts of one scenario run."""

    def __init__(self, scenario, command, out: Path, emit: str):
        self.scenario = scenario
        self.command = command
        self.out = out
        self.emit = emit
        out.mkdir(parents=True, exist_ok=True)

    def file(self, kind, ext):
        return self.out / f"{self.scenario.name}.{kind}{ext}"

    def write_path(self, s, coords, kind="path"):
        target = self.file(kind, _suffix(self.emit))
        write_table(target, path_columns(self.scenario), np.column_stack([s, coords]), self.emit)
        # re-read so the reported residual is the one `verify` will reproduce
        _, data = read_table(target)
        return target, data

    def report_for(self, data):
        if self.scenario.is_gpw:
            return gpw_path_report(self.scenario, data[:, 1:])
        return split_path_report(self.scenario, _path_from(data))

    def write_summary(self, summary):
        target = self.file(self.command, ".yaml")
        doc = {"scenario": self.scenario.name, "source": self.scenario.source, "command": self.command}
        if self.scenario.assumptions:
            doc["assumptions"] = self.scenario.assumptions
        doc.update(_plain(summary))
        with open(target, "w") as fh:
            yaml.safe_dump(doc, fh, sort_keys=False)
        return target


def _path_from(data) -> DiscretePath:
    s = data[:, 0]
    if s.size < 2 or np.max(np.abs(s - np.linspace(0.0, 1.0, s.size))) > 1e-9:
        raise CommandError("path samples must be uniform in s on [0, 1]")
    return DiscretePath(data[:, 1:-1], data[:, -1])


def _finish_verdict(run: Run, verdict: ConnectVerdict) -> int:
    summary = verdict.summary()
    samples = _samples(run.scenario, verdict)
    if samples is not None:
        target, data = run.write_path(*samples)
        summary["path_file"] = target.name
        try:
            summary["path_report"] = run.report_for(data)
        except (GeometryError, ValueError, CommandError) as exc:
            summary["path_report"] = {"error": str(exc)}
    if verdict.sweep:
        target = run.file("sweep", _suffix(run.emit))
        _write_sweep(target, verdict.sweep, run.emit)
        summary["sweep_file"] = target.name
    summary["exit_code"] = verdict.exit_code
    run.write_summary(summary)
    print(f"{run.scenario.name}: {verdict.tag} (exit {verdict.exit_code})")
    return verdict.exit_code


def _write_sweep(target, records, emit):
    rows = [[getattr(r, c) for c in SWEEP_COLUMNS] for r in records]
    write_table(target, SWEEP_COLUMNS, rows, emit)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _gpw_verdict(run):
    sc = run.scenario
    verdict = gpw_connect(sc.model, sc.p, sc.q, h=sc.config.h_ode, tol=sc.config.tol_bvp)
    verdict.diagnostics["gpw_endpoints"] = {"p": sc.p.tolist(), "q": sc.q.tolist()}
    return verdict


def cmd_connect(run, args):
    sc = run.scenario
    if sc.is_gpw:
        return _finish_verdict(run, _gpw_verdict(run))
    return _finish_verdict(run, connect(sc.model, sc.pair, sc.config))


def cmd_gpw_connect(run, args):
    if not run.scenario.is_gpw:
        raise CommandError("gpw-connect needs a scenario with model kind gpw")
    return _finish_verdict(run, _gpw_verdict(run))


def cmd_obstruct(run, args):
    sc = run.scenario
    if sc.is_gpw:
        raise CommandError("the obstruction search works on split models")
    cert = certify(sc.model, sc.pair, sc.config.grid)
    summary = {"certificate": cert.summary()}
    if cert.witness is not None:
        target, _ = run.write_path(cert.witness.s, np.column_stack([cert.witness.nodes, cert.witness.t]), "witness")
        summary["witness_file"] = target.name
    if cert.obstructed:
        code = EXIT_OBSTRUCTED
    elif cert.witness is not None and cert.witness_condition not in ("SignChange", "blocked"):
        code = EXIT_OK
    else:
        code = EXIT_INCONCLUSIVE
    summary["exit_code"] = code
    run.write_summary(summary)
    print(f"{sc.name}: obstructed={cert.obstructed} witness={cert.witness_condition} (exit {code})")
    return code


def cmd_sweep(run, args):
    sc = run.scenario
    if sc.is_gpw:
        raise CommandError("sweep runs the limit scheme of split models")
    records, _ = sweep(sc.model, sc.pair, sc.config)
    target = run.file("sweep", _suffix(run.emit))
    _write_sweep(target, records, run.emit)
    run.write_summary({"sweep_file": target.name, "records": len(records), "exit_code": EXIT_OK})
    print(f"{sc.name}: {len(records)} sweep records -> {target}")
    return EXIT_OK


def cmd_verify(run, args):
    if not args.path:
        raise CommandError("verify needs --path FILE")
    header, data = read_table(args.path)
    expected = path_columns(run.scenario)
    if header != expected:
        raise CommandError(f"path columns {header} do not match {expected}")
    report = run.report_for(data)
    report["path_file"] = str(args.path)
    ok = report["residual"] <= run.scenario.config.residual_tol
    code = EXIT_OK if ok else EXIT_INCONCLUSIVE
    report["exit_code"] = code
    run.write_summary(report)
    print(f"{run.scenario.name}: residual {report['residual']:.3e} energy drift {report['energy_drift']:.3e} "
          f"killing drift {report['killing_drift']:.3e} (exit {code})")
    return code


def cmd_arrival(run, args):
    sc = run.scenario
    if sc.is_gpw:
        raise CommandError("arrival times are defined for split models")
    base = sc.model
    d = base.dimension
    if args.path:
        header, data = read_table(args.path)
        if header[: d + 1] != ["s"] + [f"x{i + 1}" for i in range(d)]:
            raise CommandError(f"path columns {header} do not start with s, x1..x{d}")
        path = DiscretePath(data[:, 1 : d + 1])
    else:
        path = DiscretePath.straight(sc.p[:d], sc.q[:d], sc.config.m)
    if args.n_start is not None:
        n = args.n_start
    else:
        n = None if beta_lower_bound(base, sc.pair, seed=sc.config.seed) > 0 else sc.config.n0
    lifted, T = lightlike_lift(SpacetimeModel(base, n), path, tp=float(sc.p[d]))
    target, _ = run.write_path(lifted.s, np.column_stack([lifted.nodes, lifted.t]), "lightlike")
    run.write_summary({"arrival_time": T, "n": n, "lightlike_file": target.name, "exit_code": EXIT_OK})
    print(f"{sc.name}: T = {T:.17g} (n = {n})")
    return EXIT_OK


HANDLERS = {
    "connect": cmd_connect,
    "verify": cmd_verify,
    "obstruct": cmd_obstruct,
    "gpw-connect": cmd_gpw_connect,
    "sweep": cmd_sweep,
    "arrival": cmd_arrival,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="geoconnect", description="Geodesic connectedness of split spacetimes.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("scenarios", nargs="*", help="scenario files or shipped scenario names")
    p.add_argument("--scenario", action="append", default=[], help="scenario file (repeatable)")
    p.add_argument("--path", help="path samples for verify / arrival")
    p.add_argument("--nodes", type=int, help="path nodes m")
    p.add_argument("--n-start", type=int, help="first perturbation index n0")
    p.add_argument("--k-max", type=int, help="last schedule exponent")
    p.add_argument("--tol-grad", type=float)
    p.add_argument("--tol-lim", type=float)
    p.add_argument("--tol-bvp", type=float)
    p.add_argument("--grid", type=int, help="obstruction grid resolution")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
    p.add_argument("--out", default="geoconnect-out", help="output directory")
    p.add_argument("--emit", choices=("csv", "gnuplot-data"), default="csv")
    return p


def _overrides(args):
    return {key: getattr(args, key) for key in OVERRIDES if getattr(args, key) is not None}


def run_one(command, scenario_path, args) -> int:
    try:
        sc = load_scenario(scenario_path)
        overrides = _overrides(args)
        if overrides:
            c = _Collector()
            raw = {OVERRIDES[k]: v for k, v in overrides.items()}
            current = {k: getattr(sc.config, k) for k in vars(sc.config)}
            sc.config = config_from(c, {**current, **raw}, "command line")
            if c.problems:
                raise ScenarioError("command line", c.problems)
        run = Run(sc, command, Path(args.out), args.emit)
        log.info("%s %s (%s) -> %s", command, sc.name, sc.source, run.out)
        return HANDLERS[command](run, args)
    except (ScenarioError, CommandError, FileNotFoundError, FieldError, GeometryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _worker(job):
    command, scenario_path, args = job
    configure_logging()
    return run_one(command, scenario_path, args)


def combine(codes) -> int:
    """Error wins, then inconclusive, then obstructed."""
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return max(codes, default=EXIT_OK)


def configure_logging():
    level = os.environ.get("GEO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    scenarios = list(args.scenarios) + list(args.scenario)
    if not scenarios:
        print("error: no scenario given", file=sys.stderr)
        return EXIT_ERROR
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_ERROR
    jobs = [(args.command, s, args) for s in scenarios]
    if args.jobs == 1 or len(jobs) == 1:
        codes = [run_one(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_worker, jobs))
    return combine(codes)


if __name__ == "__main__":
    sys.exit(main())
