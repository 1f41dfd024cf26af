"""Command line runner: ``cortexnoc run | sweep | verify``.

Exit status: 0 success, 1 configuration or usage error, 2 simulation fault
(drain watchdog, protocol violation, or a failed equivalence check).
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import config as cfgmod
from .accel import Machine, verify_against_reference
from .cla_ref import ReferenceCortex
from .config import ExperimentConfig
from .errors import ConfigError, ProtocolError, SimulationFault, UsageError
from .noc import Kind
from .workload import LearnTracker, encode_series, gen_poly_series, ingest_csv

log = logging.getLogger("cortexnoc")

KIND_COLS = [f"flit_hops_{k.name.lower()}" for k in Kind]
EPOCH_COLUMNS = ["series", "epoch", "zone", "anomaly", "bursting", "cycles", *KIND_COLS, "energy"]
MEAN_COLUMNS = ["anomaly", "bursting", "cycles", *KIND_COLS, "energy"]
OPT_PRESETS = {
    "seq": dict(mode="sequential", coalescing=False),
    "coal": dict(mode="sequential", coalescing=True),
    "pipe": dict(mode="pipelined", coalescing=True),
}


class FaultWithTrace(Exception):
    def __init__(self, cause: Exception, trace_path: Path):
        super().__init__(str(cause))
        self.cause = cause
        self.trace_path = trace_path


@dataclass
class RunOutput:
    rows: list[dict]
    summary: dict
    csv_path: Path
    json_path: Path
    machines: list = field(default_factory=list)


def _streams(cfg: ExperimentConfig):
    """(series id, list of raw values) pairs for the configured workload."""
    if cfg.workload == "csv":
        res = ingest_csv(cfg.csv_path, cfg.csv_column, cfg.levels, cfg.probation)
        return [(0, res.values * cfg.reps)]
    return [(i, list(gen_poly_series(i).points) * cfg.reps) for i in range(cfg.series)]


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def run_experiment(cfg: ExperimentConfig) -> RunOutput:
    cfg.validate()
    cortex = cfg.cortex()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    divergences = 0
    first_div = None
    checked = cfg.verify and cfg.zones == 1
    learned = []
    drains = 0
    machines = []
    for sid, values in _streams(cfg):
        usable = len(values) - len(values) % cfg.zones
        sdrs = encode_series(values[:usable], cortex.sdr)
        m = Machine(cortex, cfg.net(), mode=cfg.mode, zones=cfg.zones)
        machines.append(m)
        try:
            results = m.run(sdrs)
        except (SimulationFault, ProtocolError) as exc:
            trace = out / f"{cfg.name}.trace"
            lines = [f"fault: {exc}", f"cycle: {m.net.now}", *m.net.trace_lines]
            trace.write_text("\n".join(lines) + "\n")
            raise FaultWithTrace(exc, trace) from exc
        drains += sum(s.drains for s in m.epoch_stats)
        for s, r in enumerate(results):
            es = m.epoch_stats[s // cfg.zones]
            row = dict(series=sid, epoch=s, zone=s % cfg.zones, anomaly=float(r.anomaly),
                       bursting=r.bursting, cycles=es.cycles)
            for k, col in zip(Kind, KIND_COLS):
                row[col] = int(es.flit_hops.get(k, 0))
            row["energy"] = float(es.energy)
            rows.append(row)
        if cfg.workload == "synthetic" and cfg.zones == 1:
            n = len(values) // cfg.reps
            tracker = LearnTracker(n)
            rep = None
            for i in range(cfg.reps):
                if tracker.record(results[i * n:(i + 1) * n]) and rep is None:
                    rep = i + 1
            learned.append(rep)
        if checked:
            ref = ReferenceCortex(cortex).run(sdrs)
            rep = verify_against_reference(results, ref)
            divergences += len(rep.divergences)
            if first_div is None and rep.first is not None:
                d = rep.first
                first_div = dict(series=sid, epoch=d.epoch, field=d.field)

    header = "".join(f"# {k} = {v}\n" for k, v in cfg.items())
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPOCH_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in EPOCH_COLUMNS])
    csv_path = out / f"{cfg.name}.csv"
    csv_path.write_text(buf.getvalue())

    summary = {
        "config": dict(cfg.items()),
        "epochs": len(rows),
        "means": {c: mean_of([r[c] for r in rows]) for c in MEAN_COLUMNS},
        "totals": {c: sum(r[c] for r in rows if r["zone"] == 0)
                   for c in ["cycles", *KIND_COLS]},
        "drains": drains,
        "drains_per_epoch": drains / max(1, len(rows) // cfg.zones),
    }
    if learned:
        summary["learning"] = {
            "series": len(learned),
            "learned": sum(r is not None for r in learned),
            "reps_to_learn": learned,
        }
    if cfg.verify:
        summary["equivalence"] = {"checked": checked, "divergences": divergences,
                                  "first": first_div}
    json_path = out / f"{cfg.name}.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunOutput(rows, summary, csv_path, json_path, machines)


def mean_of(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def read_epoch_csv(path) -> tuple[dict, list[dict]]:
    """Parse a per-epoch CSV back into (embedded config, rows)."""
    cfg = {}
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, v = line[1:].split("=", 1)
            cfg[k.strip()] = v.strip()
        else:
            body.append(line)
    rows = []
    for rec in csv.DictReader(body):
        rows.append({k: (float(v) if k in ("anomaly", "energy") else int(v)) for k, v in rec.items()})
    return cfg, rows


# ------------------------------------------------------------------ sweep


def parse_axes(specs) -> list[tuple[str, list[str]]]:
    axes = []
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"axis must be key=v1,v2,..., got {spec!r}")
        key, vals = spec.split("=", 1)
        key = key.strip()
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"axis {key} has no values", field=key)
        if key == "opt":
            bad = [v for v in values if v not in OPT_PRESETS]
            if bad:
                raise ConfigError(f"opt values must be in {sorted(OPT_PRESETS)}", field="opt")
        else:
            for v in values:
                cfgmod.parse_value(key, v)
        axes.append((key, values))
    return axes


def point_config(base: ExperimentConfig, point: dict) -> ExperimentConfig:
    updates = {}
    for key, val in point.items():
        if key == "opt":
            updates.update(OPT_PRESETS[val])
        else:
            updates[key] = cfgmod.parse_value(key, val)
    tag = "_".join(f"{k}-{v}" for k, v in point.items())
    updates["name"] = f"{base.name}_{tag}" if tag else base.name
    return base.replace(**updates)


SWEEP_COLUMNS = ["status", "epochs", "mean_anomaly", "cycles_per_epoch", "flit_hops_per_epoch",
                 "energy_per_epoch", "drains_per_epoch", "error"]


def run_sweep(base: ExperimentConfig, axes) -> tuple[Path, list[dict]]:
    keys = [k for k, _ in axes]
    rows = []
    for combo in itertools.product(*[v for _, v in axes]):
        point = dict(zip(keys, combo))
        row = dict(point)
        try:
            cfg = point_config(base, point)
            res = run_experiment(cfg)
            s = res.summary
            m = s["means"]
            row.update(status="ok", epochs=s["epochs"], mean_anomaly=m["anomaly"],
                       cycles_per_epoch=m["cycles"],
                       flit_hops_per_epoch=math.fsum(m[c] for c in KIND_COLS),
                       energy_per_epoch=m["energy"], drains_per_epoch=s["drains_per_epoch"],
                       error="")
        except (ConfigError, UsageError, FaultWithTrace) as exc:
            row.update(status="failed", epochs=0, mean_anomaly="", cycles_per_epoch="",
                       flit_hops_per_epoch="", energy_per_epoch="", drains_per_epoch="",
                       error=str(exc))
            log.warning("sweep point %s failed: %s", point, exc)
        rows.append(row)
    out = Path(base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{base.name}_sweep.csv"
    buf = io.StringIO()
    buf.write("".join(f"# {k} = {v}\n" for k, v in base.items()))
    buf.write("".join(f"# axis {k} = {','.join(v)}\n" for k, v in axes))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys + SWEEP_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in keys + SWEEP_COLUMNS])
    path.write_text(buf.getvalue())
    return path, rows


# ------------------------------------------------------------------ argparse


def _key_help() -> str:
    lines = ["config keys (default):"]
    lines += [f"  {k} = {v}" for k, v in ExperimentConfig().items()]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cortexnoc", description=__doc__.splitlines()[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog=_key_help())
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", nargs="?", help="flat key = value config file (optional)")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
        sp.add_argument("--paper", action="store_true",
                        help="full-scale preset: 16x16 grid, 2025 columns, 32 cells")
        sp.add_argument("--out", dest="out_dir", help="output directory (default: out)")
        sp.add_argument("--name", help="output file stem (default: run)")

    for name, desc in (("run", "run one experiment, write <name>.csv and <name>.json"),
                       ("verify", "run with the reference cross-check and report divergences")):
        common(sub.add_parser(name, help=desc, description=desc, epilog=_key_help(),
                              formatter_class=argparse.RawDescriptionHelpFormatter))
    sp = sub.add_parser("sweep", help="cartesian sweep, write <name>_sweep.csv",
                        epilog=_key_help() + "\n\naxis opt: seq | coal | pipe",
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    common(sp)
    sp.add_argument("--axis", action="append", default=[], metavar="KEY=V1,V2",
                    help="sweep axis over a config key or opt=seq,coal,pipe; repeatable")
    return p


def resolve_config(args) -> ExperimentConfig:
    base = cfgmod.load(args.config) if args.config else ExperimentConfig()
    if args.paper:
        base = cfgmod.paper(base)
    cfg = cfgmod.parse_assignments(args.overrides, base)
    if args.out_dir:
        cfg = cfg.replace(out_dir=args.out_dir)
    if args.name:
        cfg = cfg.replace(name=args.name)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "sweep":
            axes = parse_axes(args.axis)
            cfg.validate()
            path, rows = run_sweep(cfg, axes)
            failed = sum(r["status"] != "ok" for r in rows)
            print(f"wrote {path} ({len(rows)} points, {failed} failed)")
            return 0
        if args.command == "verify":
            cfg = cfg.replace(verify=True)
            if cfg.zones != 1:
                raise ConfigError("verify needs zones = 1", field="zones")
        res = run_experiment(cfg)
        print(f"wrote {res.csv_path} and {res.json_path}")
        eq = res.summary.get("equivalence")
        if eq is not None and eq["checked"]:
            if eq["divergences"]:
                print(f"DIVERGED: {eq['divergences']} mismatches, first {eq['first']}")
                return 2
            print(f"equivalent: {res.summary['epochs']} epochs match the reference")
        return 0
    except ConfigError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return 1
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FaultWithTrace as exc:
        print(f"simulation fault: {exc}; trace written to {exc.trace_path}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
