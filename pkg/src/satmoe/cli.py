"""Command-line entry point: run, compare, and sweep scenarios.

Artifacts are plain CSV/JSON; every file carries the resolved config hash and
seed so runs can be told apart without timestamps (outputs are byte-identical
across repeated runs of the same scenario).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import yaml

from . import engine
from .config import (
    apply_override,
    build_scenario,
    clone_config,
    config_hash,
    load_config,
    parse_override,
    VALID_EMITS,
)
from .constellation import export_snapshot_csv
from .errors import ComparisonError, ConfigError, SimulationError


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(doc: dict) -> str:
    return f"# config_sha256={config_hash(doc)} seed={doc['workload']['seed']}\n"


def _write_metrics(out: Path, doc: dict, result: engine.RunResult) -> None:
    payload = {
        "config_sha256": config_hash(doc),
        "seed": doc["workload"]["seed"],
        "config": doc,
        "metrics": result.metrics.to_dict(),
    }
    _atomic_write(out / "metrics.json", json.dumps(payload, indent=1, sort_keys=True) + "\n")
    csv = _header(doc) + engine.RunMetrics.csv_columns + "\n" + result.metrics.to_csv_row() + "\n"
    _atomic_write(out / "summary.csv", csv)


def _write_energy_ledger(out: Path, doc: dict, result: engine.RunResult) -> None:
    lines = [_header(doc).rstrip("\n"), "t,sat_id,soc,health,harvest_w,discharge_w,load_w,dt_s"]
    for r in result.energy_rows:
        lines.append(
            f"{r.t!r},{r.sat},{r.soc!r},{r.health!r},{r.harvest_w!r},"
            f"{r.discharge_w!r},{r.load_w!r},{r.dt_s!r}"
        )
    _atomic_write(out / "energy_ledger.csv", "\n".join(lines) + "\n")


def _write_thermal_series(out: Path, doc: dict, scenario, name: str = "thermal_series.csv") -> None:
    rows = engine.thermal_series(scenario)
    lines = [_header(doc).rstrip("\n"), "t,sat_id,p_rad_w,p_abs_w,budget_w"]
    for t, sat, p_rad, p_abs, budget in rows:
        lines.append(f"{t!r},{sat},{p_rad!r},{p_abs!r},{budget!r}")
    _atomic_write(out / name, "\n".join(lines) + "\n")


def _write_transmissions(out: Path, doc: dict, result: engine.RunResult) -> None:
    lines = [json.dumps({"config_sha256": config_hash(doc), "seed": doc["workload"]["seed"]})]
    for rec in result.transmissions:
        lines.append(
            json.dumps(
                {
                    "t": rec.t,
                    "src": str(rec.src),
                    "dst": str(rec.dst),
                    "hops": rec.hops,
                    "bytes": rec.bytes_on_wire,
                    "compressed_ratio": rec.compression_ratio,
                    "thermal_fallback": rec.thermal_fallback,
                },
                sort_keys=True,
            )
        )
    _atomic_write(out / "transmission_log.jsonl", "\n".join(lines) + "\n")


def _write_selection_log(out: Path, doc: dict, result: engine.RunResult) -> None:
    lines = [json.dumps({"config_sha256": config_hash(doc), "seed": doc["workload"]["seed"]})]
    for rec in result.selection_log:
        lines.append(json.dumps(rec, sort_keys=True))
    _atomic_write(out / "selection_log.jsonl", "\n".join(lines) + "\n")


def _write_topology(out: Path, doc: dict, scenario) -> None:
    snapshot = engine.TopologyProvider(scenario).at_index(0)
    lines = [_header(doc).rstrip("\n"), "t,sat_id,x_km,y_km,z_km,sunlit"]
    lines.extend(export_snapshot_csv(snapshot))
    _atomic_write(out / "topology.csv", "\n".join(lines) + "\n")


def _emit_artifacts(out: Path, doc: dict, scenario, result: engine.RunResult,
                    emits: list[str]) -> None:
    _write_metrics(out, doc, result)
    if "ledgers" in emits:
        _write_energy_ledger(out, doc, result)
    if "thermal_series" in emits:
        _write_thermal_series(out, doc, scenario)
    if "transmission_log" in emits:
        _write_transmissions(out, doc, result)
    if "selection_log" in emits:
        _write_selection_log(out, doc, result)
    if "placement" in emits and result.placement is not None:
        _atomic_write(out / "placement.json", result.placement.to_json() + "\n")
    if "topology" in emits:
        _write_topology(out, doc, scenario)


def _resolve(config_path: str, overrides: list[str]) -> tuple:
    doc = load_config(config_path)
    for text in overrides:
        key, value = parse_override(text)
        apply_override(doc, key, value)
    return build_scenario(doc), doc


def cmd_run(args: argparse.Namespace) -> int:
    scenario, doc = _resolve(args.config, args.set or [])
    emits = list(dict.fromkeys((doc["output"]["emit"] or []) + (args.emit or [])))
    if args.verbose or "selection_log" in emits:
        doc["output"]["verbose"] = True
        scenario = build_scenario(doc)
    result = engine.dispatch(scenario)
    out = Path(args.out)
    _emit_artifacts(out, doc, scenario, result, emits)
    m = result.metrics
    print(
        f"{m.label}: {m.num_tokens} tokens, avg latency "
        f"{m.avg_token_latency_s * 1e3:.2f} ms, mean utility {m.mean_utility:.4f}, "
        f"energy {m.total_energy_wh:.1f} Wh, violations {m.thermal_violations}"
    )
    print(f"wrote {out / 'metrics.json'}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.configs) < 2:
        raise ComparisonError("compare needs at least two configs")
    scenarios = []
    docs = []
    for path in args.configs:
        scenario, doc = _resolve(path, args.set or [])
        scenarios.append(scenario)
        docs.append(doc)
    rows = engine.compare(scenarios)
    out = Path(args.out)
    header = f"# seeds={docs[0]['workload']['seed']} configs={len(docs)}\n"
    columns = list(rows[0].keys())
    lines = [header.rstrip("\n"), ",".join(columns)]
    for row in rows:
        lines.append(",".join(
            repr(v) if isinstance(v, float) else json.dumps(v) if isinstance(v, list) else str(v)
            for v in (row[c] for c in columns)
        ))
    text = "\n".join(lines) + "\n"
    _atomic_write(out / "compare.csv", text)
    strategies = {d["placement"]["strategy"] for d in docs}
    if strategies <= {"static", "mobility", "coactivation"} and len(strategies) >= 2:
        _atomic_write(out / "placement_compare.csv", text)
    for row in rows:
        print(
            f"{row['label']:<24} avg {row['avg_token_latency_s'] * 1e3:9.3f} ms  "
            f"bytes {row['bytes_moved']:>12}  utility {row['mean_utility']:.4f}"
        )
    print(f"wrote {out / 'compare.csv'}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_config(args.config)
    for text in args.set or []:
        key, value = parse_override(text)
        apply_override(base, key, value)
    if not args.values:
        raise ConfigError("sweep needs at least one value")
    out = Path(args.out)
    rows = []
    emits = args.emit or []
    for raw_value in args.values:
        value = yaml.safe_load(raw_value)
        doc = clone_config(base)
        apply_override(doc, args.parameter, value)
        scenario = build_scenario(doc)
        result = engine.dispatch(scenario)
        rows.append((value, result.metrics))
        if "thermal_series" in emits:
            tag = str(value).replace("/", "_")
            _write_thermal_series(out, doc, scenario, name=f"thermal_series_{tag}.csv")
    lines = [
        f"# config_sha256={config_hash(base)} seed={base['workload']['seed']} "
        f"parameter={args.parameter}",
        "value," + engine.RunMetrics.csv_columns,
    ]
    for value, metrics in rows:
        lines.append(f"{value},{metrics.to_csv_row()}")
    _atomic_write(out / "sweep.csv", "\n".join(lines) + "\n")
    for value, metrics in rows:
        print(
            f"{args.parameter}={value}: avg latency {metrics.avg_token_latency_s * 1e3:.3f} ms, "
            f"mean utility {metrics.mean_utility:.4f}, degradation "
            f"{metrics.fleet_cumulative_degradation:.3e}"
        )
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satmoe",
        description="Distributed MoE inference simulator for LEO constellations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--set", action="append", metavar="KEY=VAL")
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--emit", action="append", choices=VALID_EMITS)
    run_p.add_argument("--verbose", action="store_true")
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare", help="run several scenarios on one workload")
    cmp_p.add_argument("configs", nargs="+")
    cmp_p.add_argument("--set", action="append", metavar="KEY=VAL")
    cmp_p.add_argument("--out", default="out")
    cmp_p.set_defaults(func=cmd_compare)

    sweep_p = sub.add_parser("sweep", help="sweep one config parameter")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("parameter", help="dotted path, e.g. selection.epsilon")
    sweep_p.add_argument("values", nargs="+", help="values to sweep")
    sweep_p.add_argument("--set", action="append", metavar="KEY=VAL")
    sweep_p.add_argument("--out", default="out")
    sweep_p.add_argument("--emit", action="append", choices=VALID_EMITS)
    sweep_p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
