"""Command-line entry point: ``spatialcsma <command> [options]``.

Every command that produces data writes ``#``-prefixed metadata lines (code
version, the fully resolved configuration, topology fingerprint, column list)
followed by CSV rows. Options can also come from a flat ``key = value`` file
given with ``--config``; keys are option names with or without the leading
dashes, and explicit flags override the file.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import channel, checks, harness
from .glauber import LOG01X, LOGLOG, WeightFunction
from .schedule import ProtocolConfig
from .topology import NetworkConfig, Topology, generate_topology, load_topology, save_topology

log = logging.getLogger("spatialcsma")

REFERENCE = "reference"
NETWORK_KEYS = ("side_length", "density", "link_distance", "path_loss_alpha", "sir_threshold_db",
                "close_in_radius")


class UsageError(Exception):
    pass


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def reference_topology_path() -> Path:
    return Path(str(resources.files("spatialcsma") / "data" / "reference_17.txt"))


def _rate_list(text: str) -> list[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise argparse.ArgumentTypeError("rate list is empty")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}") from exc


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value file; explicit flags win")
    p.add_argument("-o", "--output", type=Path, help="output file (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_network(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("network")
    g.add_argument("--topology", help=f"topology file to load, or '{REFERENCE}' for the bundled 17-link instance")
    g.add_argument("--topology-seed", type=int, default=0, help="seed for generating a topology")
    g.add_argument("--side-length", type=float)
    g.add_argument("--density", type=float)
    g.add_argument("--link-distance", type=float)
    g.add_argument("--path-loss-alpha", type=float)
    g.add_argument("--sir-threshold-db", type=float)
    g.add_argument("--close-in-radius", type=float)


def _add_protocol(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("protocol")
    g.add_argument("--W", type=int, default=32, dest="W", help="backoff mini-slots")
    g.add_argument("--abstain", type=float, default=0.0,
                   help="probability a link sits out the backoff phase (0 = as specified)")


def _add_simulation(p: argparse.ArgumentParser) -> None:
    _add_protocol(p)
    g = p.add_argument_group("simulation")
    g.add_argument("--model", choices=(harness.SIR, harness.GRAPH), default=harness.SIR)
    g.add_argument("--update-mode", choices=(harness.SINGLE, harness.PARALLEL), default=harness.SINGLE)
    g.add_argument("--service-mode", choices=("analytic", "realized", "deterministic"), default="realized")
    g.add_argument("--interference", choices=channel.MODES, default=channel.ALL_LINKS,
                   help="interferers that count in the data slot")
    g.add_argument("--horizon", type=int, default=200_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--weight", choices=(LOG01X, LOGLOG), default=LOG01X)
    g.add_argument("--initial-queue", type=int, default=0)
    g.add_argument("--emit-plot-script", action="store_true",
                   help="also write a matplotlib script next to the CSV (needs --output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialcsma", description="Spatial CSMA simulator and oracle checks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", help="generate, export or import link positions")
    p.add_argument("action", choices=("generate", "export", "import"))
    p.add_argument("--input", type=Path, help="CSV with columns id,x,y[,rx_angle] (import)")
    _add_common(p)
    _add_network(p)

    p = sub.add_parser("sweep", help="average queue against arrival rate")
    p.add_argument("--rates", type=_rate_list, help="comma-separated arrival rates (required)")
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--summary", type=Path, help="also write per-rate aggregates to this CSV")
    _add_common(p)
    _add_network(p)
    _add_simulation(p)

    p = sub.add_parser("converge", help="total-queue series of both models on one topology")
    p.add_argument("--rate", type=float, default=0.2)
    p.add_argument("--stride", type=int, default=1, help="write every stride-th slot")
    _add_common(p)
    _add_network(p)
    _add_simulation(p)

    p = sub.add_parser("verify", help="run the oracle checks; nonzero exit on failure")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--updates", type=int, default=200_000)
    p.add_argument("--burn-in", type=int, default=20_000)
    p.add_argument("--tv-tolerance", type=float, default=0.02)
    p.add_argument("--protocol-runs", type=int, default=100_000)
    p.add_argument("--protocol-topologies", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    _add_protocol(p)
    _add_common(p)

    p = sub.add_parser("rates", help="success-rate vector of every subset (N <= 16)")
    p.add_argument("--mode", choices=channel.MODES, default=channel.CLOSE_IN)
    _add_common(p)
    _add_network(p)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    try:
        lines = args.config.read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{args.config}:{lineno}: expected key = value")
        key, _, value = (s.strip() for s in line.partition("="))
        dest = key.lstrip("-").replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{args.config}:{lineno}: unknown key {key!r} for '{args.command}'")
        action = actions[dest]
        try:
            if isinstance(action, argparse._StoreTrueAction):
                converted = _bool(value)
            elif action.type is not None:
                converted = action.type(value)
            else:
                converted = value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{args.config}:{lineno}: bad value for {key!r}: {exc}") from exc
        if action.choices is not None and converted not in action.choices:
            raise UsageError(f"{args.config}:{lineno}: {key!r} must be one of {sorted(action.choices)}")
        defaults[dest] = converted
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _network_config(args) -> NetworkConfig:
    given = {k: getattr(args, k) for k in NETWORK_KEYS if getattr(args, k) is not None}
    return NetworkConfig(seed=args.topology_seed, **given)


def resolve_topology(args) -> Topology:
    if args.topology is not None:
        explicit = [k for k in NETWORK_KEYS if getattr(args, k) is not None]
        if explicit:
            raise UsageError("network options cannot be combined with --topology: "
                             + ", ".join("--" + k.replace("_", "-") for k in explicit))
        path = reference_topology_path() if args.topology == REFERENCE else Path(args.topology)
        try:
            return load_topology(path)
        except OSError as exc:
            raise UsageError(f"cannot read topology: {exc}") from exc
    config = _network_config(args)
    rng = np.random.default_rng(config.seed)
    topology = generate_topology(config, rng)
    while topology.is_empty:
        topology = generate_topology(config, rng)
    return topology


def run_spec(args, topology: Topology) -> harness.RunSpec:
    return harness.RunSpec(
        model=args.model, update_mode=args.update_mode, service_mode=args.service_mode,
        interference=args.interference, horizon=args.horizon, seed=args.seed,
        network=topology.config, protocol=ProtocolConfig(W=args.W, abstain=args.abstain),
        weight=WeightFunction(args.weight), initial_queue=args.initial_queue)


def _header(args, extra: dict, columns) -> list[str]:
    lines = [f"# spatialcsma {code_version()}", f"# command = {args.command}"]
    skip = {"command", "config", "output", "verbose", "summary"}
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        if value is None:
            continue
        if isinstance(value, list):
            value = ",".join(repr(v) for v in value)
        lines.append(f"# {key} = {value}")
    for key, value in extra.items():
        lines.append(f"# {key} = {value}")
    lines.append("# columns = " + ",".join(columns))
    return lines


def _write_table(args, extra: dict, columns, rows, path: Path | None = None) -> None:
    buf = io.StringIO()
    for line in _header(args, extra, columns):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    path = path if path is not None else args.output
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        path.write_text(buf.getvalue())


def _topology_extra(topology: Topology) -> dict:
    extra = {f"network.{k}": v for k, v in topology.config.as_dict().items()}
    extra["n_links"] = topology.n_links
    extra["topology_fingerprint"] = topology.fingerprint()
    return extra


PLOT_TEMPLATE = '''"""Plot {csv_name}; written by spatialcsma {command} --emit-plot-script."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

path = Path(__file__).with_name("{csv_name}")
with path.open() as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
{body}
plt.tight_layout()
out = path.with_suffix(".png")
plt.savefig(out, dpi=150)
print(out, file=sys.stderr)
'''

SWEEP_PLOT = '''by_rate = {}
for r in rows:
    by_rate.setdefault(float(r["rate"]), []).append(float(r["mean_link_queue"]))
rates = sorted(by_rate)
plt.semilogy(rates, [sum(by_rate[a]) / len(by_rate[a]) for a in rates], "o-")
plt.xlabel("arrival rate per link")
plt.ylabel("average queue per link")
'''

CONVERGE_PLOT = '''slots = [int(r["slot"]) for r in rows]
plt.plot(slots, [float(r["sir_total_queue"]) for r in rows], label="sir")
plt.plot(slots, [float(r["graph_total_queue"]) for r in rows], label="graph")
plt.xlabel("slot")
plt.ylabel("total queue")
plt.legend()
'''


def _emit_plot(args, body: str) -> None:
    if not args.emit_plot_script:
        return
    script = args.output.with_name(args.output.stem + "_plot.py")
    script.write_text(PLOT_TEMPLATE.format(csv_name=args.output.name, command=args.command, body=body))
    log.info("wrote %s", script)


def cmd_topology(args) -> int:
    if args.action == "import":
        if args.input is None:
            raise UsageError("topology import needs --input")
        if args.output is None:
            raise UsageError("topology import needs --output")
        if args.topology is not None:
            raise UsageError("topology import reads --input, not --topology")
        with args.input.open() as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        if not rows or not {"x", "y"} <= set(rows[0]):
            raise UsageError(f"{args.input}: expected columns x,y[,rx_angle]")
        pos = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        angles = np.array([float(r.get("rx_angle") or 0.0) for r in rows])
        topology = Topology.from_positions(pos, _network_config(args), angles)
        save_topology(topology, args.output)
        return 0
    topology = resolve_topology(args)
    if args.action == "generate":
        if args.output is None:
            raise UsageError("topology generate needs --output")
        save_topology(topology, args.output)
        return 0
    rx = topology.receiver_positions
    degree = topology.adjacency.sum(axis=1)
    rows = [(i, repr(float(x)), repr(float(y)), repr(float(a)), repr(float(rx[i, 0])), repr(float(rx[i, 1])),
             int(degree[i])) for i, ((x, y), a) in enumerate(zip(topology.positions, topology.rx_angles))]
    _write_table(args, _topology_extra(topology), ["id", "x", "y", "rx_angle", "rx_x", "rx_y", "degree"], rows)
    return 0


def cmd_sweep(args) -> int:
    if args.rates is None:
        raise UsageError("sweep needs --rates")
    if args.replications < 1:
        raise UsageError("--replications must be at least 1")
    if args.emit_plot_script and args.output is None:
        raise UsageError("--emit-plot-script needs --output")
    topology = resolve_topology(args)
    spec = run_spec(args, topology)
    bad = [a for a in args.rates if not 0.0 <= a < 1.0]
    if bad:
        raise UsageError(f"arrival rates must lie in [0, 1): {bad}")
    results = harness.run_sweep(spec, topology, args.rates, args.replications, workers=args.workers)
    columns = ["rate", "replication", "seed", "topology", "mean_total_queue", "mean_link_queue",
               "trend_slope", "trend_se", "unstable"]
    rows = [(r.rate, r.replication, r.seed, r.topology, r.mean_total_queue, r.mean_link_queue,
             r.trend_slope, r.trend_se, int(r.unstable)) for r in results]
    extra = _topology_extra(topology)
    extra["averaging"] = "final half of horizon; trend = slope of 20 block means over the final half"
    _write_table(args, extra, columns, rows)
    summary = harness.aggregate(results)
    for rate, s in summary.items():
        log.info("a=%g mean link queue %.3f, trend t %.2f, %s", rate, s["mean_link_queue"], s["trend_t"],
                 "unstable" if s["unstable"] else "stable")
    if args.summary is not None:
        keys = ["replications", "mean_total_queue", "std_total_queue", "mean_link_queue", "trend_slope",
                "trend_t", "unstable_runs", "unstable"]
        srows = [[rate] + [int(s[k]) if isinstance(s[k], bool) else s[k] for k in keys] for rate, s in summary.items()]
        _write_table(args, extra, ["rate"] + keys, srows, path=args.summary)
    _emit_plot(args, SWEEP_PLOT)
    return 0


def cmd_converge(args) -> int:
    if args.stride < 1:
        raise UsageError("--stride must be at least 1")
    if args.emit_plot_script and args.output is None:
        raise UsageError("--emit-plot-script needs --output")
    topology = resolve_topology(args)
    spec = replace(run_spec(args, topology), arrival_rate=args.rate)
    series = harness.run_convergence(spec, topology)
    sir, graph = series[harness.SIR], series[harness.GRAPH]
    extra = _topology_extra(topology)
    extra["graph_service_mode"] = "deterministic"
    extra["sir_settling_slot"] = harness.settling_time(sir)
    extra["graph_settling_slot"] = harness.settling_time(graph)
    idx = range(0, len(sir), args.stride)
    rows = [(t, int(sir[t]), int(graph[t])) for t in idx]
    _write_table(args, extra, ["slot", "sir_total_queue", "graph_total_queue"], rows)
    _emit_plot(args, CONVERGE_PLOT)
    return 0


def cmd_verify(args) -> int:
    pc = ProtocolConfig(W=args.W, abstain=args.abstain)
    topology, queues = checks.small_instance(seed=args.seed)
    results = [
        checks.exact_stationarity(instances=args.instances, seed=args.seed),
        checks.empirical_single_site(topology, queues, args.updates, args.burn_in, seed=args.seed + 1,
                                     tol=args.tv_tolerance),
        checks.empirical_parallel(topology, queues, pc, args.updates, args.burn_in, seed=args.seed + 1,
                                  tol=args.tv_tolerance),
        checks.mrf_exact(seed=args.seed),
    ]
    survey = checks.survey_protocol(args.protocol_topologies, args.protocol_runs, pc, seed=args.seed)
    results += checks.protocol_checks(survey)
    out = sys.stdout if args.output is None else args.output.open("w")
    try:
        out.write(f"# spatialcsma {code_version()} verify seed={args.seed} W={args.W} abstain={args.abstain}\n")
        for r in results:
            out.write(r.line() + "\n")
        failed = [r.name for r in results if not r.passed]
        out.write(f"failed: {', '.join(failed)}\n" if failed else "all checks passed\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 1 if failed else 0


def cmd_rates(args) -> int:
    topology = resolve_topology(args)
    n = topology.n_links
    if n > 16:
        raise UsageError(f"rate enumeration is limited to 16 links, topology has {n}")
    columns = ["subset", "members", "size", "sum_rate"] + [f"rate_{i}" for i in range(n)]
    rows = []
    for subset, rates in channel.enumerate_rate_vectors(topology, args.mode):
        members = [i for i in range(n) if (subset >> i) & 1]
        rows.append([subset, " ".join(map(str, members)), len(members), repr(float(rates.sum()))]
                    + [repr(float(r)) for r in rates])
    extra = _topology_extra(topology)
    extra["mode"] = args.mode
    _write_table(args, extra, columns, rows)
    return 0


COMMANDS = {"topology": cmd_topology, "sweep": cmd_sweep, "converge": cmd_converge,
            "verify": cmd_verify, "rates": cmd_rates}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config_file(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except ValueError as exc:
        # invalid parameter values surfaced by the library
        parser.error(str(exc))
    return 2


if __name__ == "__main__":
    sys.exit(main())
