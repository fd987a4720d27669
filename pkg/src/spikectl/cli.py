"""Command-line entry point for running experiments and checking topologies."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigurationError
from .experiments import KINDS, default_config, load_config, run_experiment
from .threeway import build_network, validate_topology, write_topology


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {value!r}")
    return value == "on"


def _float_list(value: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikectl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file mirroring the experiment config")
    seeds = common.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="run a single seed")
    seeds.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    common.add_argument("--kp", type=float, help="proportional gain (deg/s per unit error)")
    common.add_argument("--trace-tau", type=float, help="output trace time constant (s)")
    common.add_argument("--duration", type=float, help="simulated time (s)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--twin", type=_on_off, help="twin hidden layer on|off")
    common.add_argument("--shadow", type=_on_off, help="shadow inhibition on|off")
    common.add_argument("--direction", type=_on_off, help="direction neurons on|off")
    common.add_argument("--jobs", type=int, help="parallel worker processes")
    common.add_argument("--no-spikes", action="store_true", help="skip spikes.csv")

    for kind in KINDS:
        p = sub.add_parser(kind, parents=[common])
        if kind.startswith("sweep"):
            p.add_argument("--values", type=_float_list, help="comma-separated sweep values")
        if kind == "mismatch-study":
            p.add_argument("--sigma", type=float, help="relative mismatch std")
            p.add_argument("--compare", choices=("twin", "shadow"),
                           help="refinement compared on vs off (shadow adds an outlier cell)")
    p = sub.add_parser("validate", parents=[common])
    p.add_argument("--dump", type=Path, help="topology JSON path (default OUT/topology.json)")
    return parser


def resolve_config(args: argparse.Namespace):
    kind = args.command if args.command != "validate" else "step"
    cfg = default_config(kind)
    if args.config is not None:
        cfg = load_config(args.config, cfg)
        if cfg.kind != kind:
            cfg = replace(cfg, kind=kind)
    topo = cfg.topology
    for flag, name in (("twin", "twin_hidden"), ("shadow", "shadow_inhibition"), ("direction", "direction_neurons")):
        if getattr(args, flag) is not None:
            topo = replace(topo, **{name: getattr(args, flag)})
    loop = cfg.loop
    if args.kp is not None:
        loop = replace(loop, kp=args.kp)
    if args.trace_tau is not None:
        loop = replace(loop, trace_tau=args.trace_tau)
    kw = {"topology": topo, "loop": loop}
    if args.seed is not None:
        kw["seeds"] = (args.seed,)
    elif args.seeds is not None:
        if args.seeds < 1:
            raise ConfigurationError("--seeds must be >= 1")
        kw["seeds"] = tuple(range(args.seeds))
    if args.duration is not None:
        kw["duration"] = args.duration
    if args.out is not None:
        kw["out"] = str(args.out)
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    if args.no_spikes:
        kw["record_spikes"] = False
    for name in ("values", "sigma", "compare"):
        if getattr(args, name, None) is not None:
            kw[name] = getattr(args, name)
    return replace(cfg, **kw)


def _validate(cfg, dump: Path | None) -> int:
    graph = build_network(cfg.topology)
    violations = validate_topology(graph)
    path = dump if dump is not None else Path(cfg.out) / "topology.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_topology(graph, path)
    print(f"{graph.n_neurons} neurons, {graph.n_synapses} synapses; topology written to {path}")
    for v in violations:
        print(f"{v.kind}: neuron {v.neuron}: {v.detail}")
    return 1 if violations else 0


def _summary(result: dict) -> str:
    if "study" in result:
        st = result["study"]
        return f"{st['compare']} on: median {st['median_on']:.4f}; off: median {st['median_off']:.4f}"
    agg = result["aggregate"]
    rows = agg if isinstance(agg, list) else [agg]
    lines = []
    for row in rows:
        head = ", ".join(f"{k}={v:g}" for k, v in row.items() if not isinstance(v, dict))
        stats = ", ".join(
            f"{k} {v['mean']:.4f}±{v['std']:.4f}" for k, v in row.items()
            if isinstance(v, dict) and v["n"]
        )
        lines.append(f"{head + ': ' if head else ''}{stats}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "validate":
            return _validate(cfg, args.dump)
        result = run_experiment(cfg)
    except (ConfigurationError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    print(_summary(result))
    print(f"metrics written to {Path(cfg.out) / 'metrics.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
