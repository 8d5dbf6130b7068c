"""
Command-line entry point: uv run -m app.main <command> [options]

Commands
  run            one method, Monte Carlo batch -> rmse.csv, metrics.json, topology.json
  topology       generate (or load) the sensor network and export topology.json
  table1         all five methods plus LC-DPF with exact sums
  iterations     LC-DGPF / R-LC-DGPF over --iteration-list
  low-particles  LC-DPF vs R-LC-DGPF with J = 400

Exit codes: 0 ok, 2 bad input or configuration, 3 run failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List

from app.harness import (
    MetricsReport,
    build_network,
    iterations,
    low_particles,
    run_experiment,
    table1,
    write_experiment,
)
from app.network import TopologyError, metropolis_weights, save_topology
from app.scenario import ConfigError, ExperimentConfig, Method, reference_config, load_experiment_config

DEFAULT_OUT = "results"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="Experiment config JSON (defaults to the reference scenario)")
    p.add_argument("--runs", type=int, help="Monte Carlo runs")
    p.add_argument("--seed", type=int, help="Master seed")
    p.add_argument("--particles", type=int, help="J (R-LC-DGPF: total over sensors)")
    p.add_argument("--iterations", type=int, help="Consensus iterations I")
    p.add_argument("--exact-sums", action="store_true", help="Replace consensus by direct summation")
    p.add_argument("--topology", type=Path, help="Load the sensor network from a topology.json")
    p.add_argument("--workers", type=int, help="Process pool size for Monte Carlo runs")
    p.add_argument("--out", type=Path, help=f"Output directory (default: {DEFAULT_OUT})")
    p.add_argument("--log-level", default="WARNING", help="DEBUG, INFO, WARNING, ERROR")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lc-tracker", description="Likelihood-consensus distributed particle filtering")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Run one method")
    _add_common(p_run)
    p_run.add_argument("--method", help="CPF, CGPF, LC-DPF, LC-DGPF or R-LC-DGPF")
    p_run.add_argument("--trajectory", action="store_true", help="Also write trajectory.csv for run 0")

    p_topo = sub.add_parser("topology", help="Generate and export the sensor network")
    _add_common(p_topo)

    p_t1 = sub.add_parser("table1", help="All methods on one batch")
    _add_common(p_t1)

    p_it = sub.add_parser("iterations", help="Sweep consensus iterations")
    _add_common(p_it)
    p_it.add_argument("--iteration-list", default="4,8,16", help="Comma-separated iteration counts")

    p_lp = sub.add_parser("low-particles", help="J = 400 comparison")
    _add_common(p_lp)
    return ap


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment_config(args.config) if args.config else reference_config()
    top: dict = {}
    filt: dict = {}
    if args.runs is not None:
        top["runs"] = args.runs
    if args.seed is not None:
        top["seed"] = args.seed
    if args.workers is not None:
        top["workers"] = args.workers
    if args.topology is not None:
        if not args.topology.exists():
            raise ConfigError(f"topology not found: {args.topology}")
        top["topology_path"] = str(args.topology)
    if args.out is not None:
        top["out_dir"] = str(args.out)
    if getattr(args, "trajectory", False):
        top["save_trajectory"] = True
    if getattr(args, "method", None):
        filt["method"] = Method.parse(args.method).value
    if args.particles is not None:
        filt["n_particles"] = args.particles
    if args.iterations is not None:
        filt["iterations"] = args.iterations
    if args.exact_sums:
        filt["exact_sums"] = True
    cfg = replace(cfg, filter=replace(cfg.filter, **filt), **top)
    cfg.validate()
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir or DEFAULT_OUT)


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def _print_report(rep: MetricsReport) -> None:
    print(f"  {rep.method:<24} ARMSE {_fmt(rep.armse)} m  adjusted {_fmt(rep.adjusted_armse)} m  "
          f"sigma {_fmt(rep.adjusted_sigma_armse)} m  loss {rep.track_loss_pct:.2f}%  "
          f"tx/step {rep.transmissions_per_step:.0f}")


def _cmd_run(cfg: ExperimentConfig) -> int:
    res = run_experiment(cfg)
    paths = write_experiment(res, _out_dir(cfg))
    _print_report(res.report)
    for p in paths:
        print(f"[OK] wrote {p}")
    return 0


def _cmd_topology(cfg: ExperimentConfig) -> int:
    net = build_network(cfg)
    path = save_topology(net, _out_dir(cfg) / "topology.json")
    edges = net.graph().number_of_edges()
    slem = metropolis_weights(net).second_largest_modulus()
    print(f"[OK] K={net.K} edges={edges} connected={net.is_connected()} second-largest |eig|={slem:.4f}")
    print(f"[OK] wrote {path}")
    return 0


def _cmd_suite(name: str, cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    if name == "table1":
        suite = table1(cfg)
    elif name == "iterations":
        try:
            counts = [int(v) for v in str(args.iteration_list).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"invalid --iteration-list {args.iteration_list!r}") from None
        suite = iterations(cfg, counts)
    else:
        suite = low_particles(cfg)
    print(f"{suite.name} ({cfg.runs} runs):")
    for rep in suite.reports:
        _print_report(rep)
    for p in suite.write(_out_dir(cfg), cfg):
        print(f"[OK] wrote {p}")
    return 0


def main(argv: List[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    level = getattr(logging, str(args.log_level).upper(), None)
    if not isinstance(level, int):
        print(f"Invalid --log-level: {args.log_level}", file=sys.stderr)
        return 2
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        cfg = _load_config(args)
    except ConfigError as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            return _cmd_run(cfg)
        if args.command == "topology":
            return _cmd_topology(cfg)
        return _cmd_suite(args.command, cfg, args)
    except (ConfigError, TopologyError) as e:
        print(f"Invalid input: {e}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, OSError) as e:
        print(f"Run failed: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
