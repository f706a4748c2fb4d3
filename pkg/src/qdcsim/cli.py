"""Command-line entry point: ``qdcsim <subcommand> [flags]``.

Every run emits a result envelope (JSON) or a subcommand-specific CSV.
Exit codes: 0 success, 1 usage or input error, 2 an invariant check failed.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, core, estimator, qram
from .network import Channel, NetworkError, Topology, star_topology
from .protocols import blind, compression, multiparty, qpq, qss

SCHEMA_VERSION = "1.0"
SEED_ENV = "QDC_SIM_SEED"
TOPOLOGY_KEYS = {"nodes", "channels"}


class UsageError(Exception):
    """Raised for bad flags or inputs; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


Check = tuple[str, bool, object]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _jsonable(value):
    """Recursively convert numpy scalars and non-finite floats for strict JSON."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, (complex, np.complexfloating)):
        return [value.real, value.imag]
    if isinstance(value, Path):
        return str(value)
    return value


def resolve_seed(seed: int | None) -> int:
    if seed is None:
        env = os.environ.get(SEED_ENV)
        if env is None:
            return 0
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return seed


def load_topology(path: str) -> Topology:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read topology {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg})") from None
    unknown = set(raw) - TOPOLOGY_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
    return Topology.from_dict(raw)


def load_channel(ref: str) -> Channel:
    """``topo.json#chan0`` picks a channel by name; without ``#`` the first channel."""
    path, _, name = ref.partition("#")
    topo = load_topology(path)
    if not topo.channels:
        raise UsageError(f"{path}: topology has no channels")
    return topo.channel_named(name) if name else topo.channels[0]


def _check(name: str, passed: bool, value) -> Check:
    return (name, bool(passed), value)


def _rows_to_csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _jsonable(row[c]) for c in columns})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands: each returns (payload, checks, csv_text or None)
# ---------------------------------------------------------------------------

METRIC_COLUMNS = ("arch", "N", "m", "lambda", "depth", "width", "t_count", "communicated_qubits")


def _metric_row(acc: qram.QueryAccounting) -> dict:
    return {
        "arch": acc.arch,
        "N": acc.n_cells,
        "m": acc.m,
        "lambda": acc.lam if acc.lam is not None else "",
        "depth": acc.depth,
        "width": acc.width,
        "t_count": acc.t_count,
        "communicated_qubits": acc.communicated_qubits,
    }


def cmd_qram_demo(args, rng):
    arch = args.arch
    memory = qram.random_classical_memory(args.n, args.m, rng)
    acc = qram.query_cost(arch, args.n, args.m, lam=args.lam, memory=memory)
    circuit = qram.build_circuit(arch, memory, acc.lam)
    oracle = qram.oracle_unitary_classical(memory)
    io_layout = qram.oracle_layout(args.n, args.m)
    fids, ancilla = [], []
    for _ in range(args.states):
        psi = core.random_state(io_layout, rng)
        out, pop = qram.run_on_io(circuit, psi.amplitudes)
        want = core.apply_gate(psi, oracle).amplitudes
        fids.append(float(abs(np.vdot(want, out)) ** 2))
        ancilla.append(pop)
    payload = {
        "memory": list(memory.words),
        "metrics": _metric_row(acc),
        "routers_activated": acc.routers_activated,
        "fidelities": fids,
    }
    checks = [
        _check("oracle_fidelity", min(fids) >= 1 - 1e-10, min(fids)),
        _check("ancillas_restored", min(ancilla) >= 1 - 1e-10, min(ancilla)),
    ]
    return payload, checks, _rows_to_csv([_metric_row(acc)], METRIC_COLUMNS)


def cmd_qpq(args, rng):
    memory = qram.random_classical_memory(args.n, args.m, rng)
    mode = None if args.mode == "mixed" else qpq.Mode(args.mode)
    seed = int(rng.integers(2**63))
    report = qpq.run_qpq(memory, args.index, args.rounds, args.bob, seed=seed, mode=mode)
    exact = qpq.qpq_detection_probability(args.bob, memory, args.index, qpq.Mode.SUPERPOSED)
    sup, dire = report.superposed_rounds, report.direct_rounds
    outcomes = {
        "rounds": report.rounds,
        "detections": report.detections,
        "superposed_rounds": sup,
        "superposed_detections": report.superposed_detections,
        "direct_rounds": dire,
        "direct_detections": report.direct_detections,
        "correct_words": report.correct_words,
    }
    payload = {
        "params": {"n": args.n, "m": args.m, "index": args.index, "bob": args.bob, "mode": args.mode},
        "memory": list(memory.words),
        "outcomes": outcomes,
        "fidelities": [],
        "detection_rate": report.detection_rate,
        "superposed_detection_rate": report.superposed_detection_rate,
        "exact_superposed_detection_probability": exact,
        "bell_pairs_used": 0,
        "timeline_ref": None,
    }
    checks = [_check("direct_rounds_undetected", report.direct_detections == 0, report.direct_detections)]
    if args.bob == "honest":
        checks.append(_check("honest_never_flagged", report.detections == 0, report.detection_rate))
    if sup:
        sigma = qpq.binomial_sigma(exact, sup)
        dev = abs(report.superposed_detection_rate - exact)
        checks.append(_check("superposed_rate_within_4sigma", dev <= 4 * sigma + 1e-12, dev))
    if args.bob != "honest" and args.index != 0:
        checks.append(_check("cheating_detectable", exact > 0, exact))
    return payload, checks, None


def cmd_blind(args, rng):
    gates = [core.X, core.Y, core.Z, core.H, core.S, core.T]
    unitaries = [gates[int(k)] for k in rng.integers(len(gates), size=args.n)]
    work = rng.normal(size=2) + 1j * rng.normal(size=2)
    work = work / np.linalg.norm(work)
    if not 0 <= args.index < args.n:
        raise UsageError(f"--index must lie in [0, {args.n})")
    addr = np.zeros(2 ** max(1, math.ceil(math.log2(args.n))), dtype=complex)
    addr[args.index] = 1
    state = blind.blind_select(unitaries, addr, work)
    got = core.reduced_density(state, state.layout["work"])
    want = unitaries[args.index] @ work
    fid = float(np.real(np.vdot(want, got @ want)))
    det = blind.blind_detection_probability(unitaries, args.index, work, args.strategy)
    payload = {
        "params": {"n": args.n, "index": args.index, "strategy": args.strategy},
        "outcomes": {"detection_probability": det},
        "fidelities": [fid],
        "detection_rate": det,
        "bell_pairs_used": 0,
        "timeline_ref": None,
    }
    checks = [_check("select_output_fidelity", fid >= 1 - 1e-10, fid)]
    if args.strategy == "honest":
        checks.append(_check("honest_never_flagged", det <= 1e-10, det))
    return payload, checks, None


def _write_timeline(records: list[dict], path: str | None) -> str | None:
    if path is None:
        return None
    columns = ("time_s", "event", "src", "dst", "qubits")
    _write(path, _rows_to_csv(records, columns))
    return path


def cmd_multiparty(args, rng):
    if args.config:
        topo = load_topology(args.config)
        users = topo.by_role("User")
        qdcs = topo.by_role("QDC")
    else:
        users = [f"A{s}" for s in range(args.senders)] + [f"B{s}" for s in range(args.senders)]
        qdcs = ["C0", "C1", "C2"]
        topo = star_topology(users, qdcs)
    if len(users) < 2 * args.senders:
        raise UsageError(f"need {2 * args.senders} User nodes, topology has {len(users)}")
    senders = [(users[s], qss.random_qutrit(rng)) for s in range(args.senders)]
    receivers = [(users[args.senders + r], (r + 1) % args.senders) for r in range(args.senders)]
    result = multiparty.multiparty_send(senders, qdcs, receivers, topo, seed=int(rng.integers(2**63)))
    payload = {
        "params": {"senders": [n for n, _ in senders], "receivers": [list(r) for r in receivers], "qdcs": qdcs[:3]},
        "outcomes": {"delivered": [list(map(complex, d.amplitudes)) for d in result.delivered]},
        "fidelities": result.fidelities,
        "privacy": result.privacy,
        "detection_rate": None,
        "bell_pairs_used": result.bell_pairs_used,
        "timeline_ref": _write_timeline(result.timeline, args.timeline),
        "timeline_events": len(result.timeline),
    }
    checks = [_check(name, ok, val) for name, ok, val in result.checks]
    columns = ("time_s", "event", "src", "dst", "qubits")
    return payload, checks, _rows_to_csv(result.timeline, columns)


def cmd_compress(args, rng):
    state = compression.random_single_excitation(args.n, rng)
    channel = Channel("U", "QDC", latency=args.latency, bell_rate=args.bell_rate)
    res = compression.transmit_compressed(state, channel, rng)
    fid = core.fidelity(res.delivered, state)
    expected_pairs = compression.address_qubits(args.n) + 1
    payload = {
        "params": {"n": args.n, "latency_s": args.latency, "bell_rate_hz": args.bell_rate},
        "outcomes": {"excitation_probabilities": np.abs(state.amplitudes[[0] + [1 << j for j in range(args.n)]]) ** 2,
                     "arrival_time_s": res.arrival_time,
                     "bell_pairs_uncompressed": res.bell_pairs_uncompressed},
        "fidelities": [fid],
        "detection_rate": None,
        "bell_pairs_used": res.bell_pairs_compressed,
        "timeline_ref": None,
    }
    checks = [
        _check("round_trip_fidelity", fid >= 1 - 1e-10, fid),
        _check("bell_pairs_log_n_plus_one", res.bell_pairs_compressed == expected_pairs, res.bell_pairs_compressed),
    ]
    return payload, checks, None


def _algo(args) -> estimator.AlgoSpec:
    return estimator.AlgoSpec(args.logical, args.tcount, args.p, args.fail)


def cmd_estimate(args, rng):
    algo = _algo(args)
    table = estimator.load_protocol_table(args.table)
    base = estimator.estimate_without_qdc(algo, table)
    if args.channel:
        channel = load_channel(args.channel)
        est = estimator.estimate_with_qdc(algo, channel, table, args.batch, args.buffered)
    else:
        est = estimator.estimate_for_delay(algo, args.delay, table, args.axis, args.batch, baseline=base)
    payload = {
        "params": {"algo": vars(algo), "table": args.table, "channel": args.channel},
        "without_qdc": {
            "total_qubits": base.total_qubits,
            "data_qubits": base.data_qubits,
            "factory_qubits": base.factory.qubits,
            "n_factories": base.factory.n_factories,
            "distance": base.distance,
            "protocol": base.protocol_name,
            "runtime_s": base.runtime_s,
        },
        "with_qdc": est.to_dict(),
    }
    rel = est.relative_qubit_number
    ident = abs(rel - est.user_qubits_with_qdc / est.user_qubits_without_qdc) if math.isfinite(rel) else 0.0
    checks = [_check("relative_is_ratio", ident <= 1e-12, ident)]
    return payload, checks, None


SWEEP_COLUMNS = ("delay_time_s", "relative_qubit_number", "protocol_name", "crossed_one")


def cmd_sweep(args, rng):
    algo = _algo(args)
    table = estimator.load_protocol_table(args.table)
    try:
        grid = estimator.parse_grid(args.delays)
    except ValueError as exc:
        raise UsageError(f"--delays: {exc}") from None
    curve = estimator.sweep_delay(algo, grid, table, args.axis, args.batch)
    rows = curve.to_rows()
    rel = [r["relative_qubit_number"] for r in rows]
    monotone = all(b >= a for a, b in zip(rel, rel[1:]))
    payload = {
        "params": {"algo": vars(algo), "axis": args.axis, "batch": args.batch, "delays": args.delays},
        "curve": rows,
        "critical_delay_s": curve.critical_delay,
        "jumps_s": curve.jumps,
    }
    checks = [_check("curve_non_decreasing", monotone, len(rows))]
    return payload, checks, _rows_to_csv(rows, SWEEP_COLUMNS)


def cmd_cost(args, rng):
    if args.nmin < 2 or args.nmax < args.nmin:
        raise UsageError("need 2 <= --nmin <= --nmax")
    ns = [2**k for k in range(math.ceil(math.log2(args.nmin)), int(math.log2(args.nmax)) + 1)]
    table = estimator.comm_vs_local_cost(ns, args.m)
    rows = []
    for n_cells in ns:
        for arch in args.archs:
            rows.append(_metric_row(qram.query_cost(arch, n_cells, args.m)))
    payload = {
        "params": {"N": ns, "m": args.m, "archs": list(args.archs)},
        "comm_vs_local": [vars(r) for r in table.rows],
        "communicated_slope_per_address_bit": table.communicated_slope_per_address_bit,
        "local_t_loglog_slope": table.local_t_loglog_slope,
        "metrics": rows,
    }
    checks = [
        _check("communicated_is_log_n_plus_m",
               all(r.communicated_qubits == math.ceil(math.log2(r.n_cells)) + args.m for r in table.rows),
               [r.communicated_qubits for r in table.rows]),
    ]
    # the square-root law is asymptotic: only judge the fit over six or more doublings
    if len(ns) >= 7:
        slope = table.local_t_loglog_slope
        checks.append(_check("local_t_slope_near_half", 0.4 <= slope <= 0.6, slope))
    return payload, checks, _rows_to_csv(rows, METRIC_COLUMNS)


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _power_of_two(text: str) -> int:
    value = int(text)
    if value < 2 or value & (value - 1):
        raise argparse.ArgumentTypeError("must be a power of two >= 2")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"64-bit seed (fallback: ${SEED_ENV}, then 0)")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = _Parser(prog="qdcsim", description="Quantum data center simulator")
    parser.add_argument("--version", action="version", version=f"qdcsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.set_defaults(subparsers=sub.choices)

    p = sub.add_parser("qram-demo", parents=[common], help="build a QRAM circuit and check it against the oracle")
    p.add_argument("--arch", choices=("fanout", "bucket", "selectswap"), default="bucket")
    p.add_argument("--n", type=_power_of_two, default=8, help="number of memory cells N")
    p.add_argument("--m", type=_positive_int, default=1, help="word width")
    p.add_argument("--lambda", dest="lam", type=_power_of_two, default=None, help="select-swap group size")
    p.add_argument("--states", type=_positive_int, default=3, help="random input states to check")
    p.set_defaults(func=cmd_qram_demo)

    p = sub.add_parser("qpq", parents=[common], help="quantum private query rounds")
    p.add_argument("--n", type=_power_of_two, default=4, help="number of memory cells N")
    p.add_argument("--m", type=_positive_int, default=1)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--rounds", type=_positive_int, default=1000)
    p.add_argument("--bob", choices=tuple(qpq.STRATEGIES), default="honest")
    p.add_argument("--mode", choices=("mixed", "superposed", "direct"), default="mixed")
    p.set_defaults(func=cmd_qpq)

    p = sub.add_parser("blind", parents=[common], help="select-oracle blind computation")
    p.add_argument("--n", type=_positive_int, default=4, help="number of candidate unitaries")
    p.add_argument("--index", type=int, default=1)
    p.add_argument("--strategy", choices=("honest", "measure"), default="honest")
    p.set_defaults(func=cmd_blind)

    p = sub.add_parser("multiparty", parents=[common], help="secret-shared multi-party transfer")
    p.add_argument("--config", default=None, help="topology JSON (User and QDC roles)")
    p.add_argument("--senders", type=int, choices=range(1, multiparty.MAX_SENDERS + 1), default=2)
    p.add_argument("--timeline", default=None, help="also write the event timeline CSV here")
    p.set_defaults(func=cmd_multiparty)

    p = sub.add_parser("compress", parents=[common], help="single-excitation compression over a channel")
    p.add_argument("--n", type=int, default=8, help="number of qubits")
    p.add_argument("--latency", type=float, default=0.0)
    p.add_argument("--bell-rate", dest="bell_rate", type=float, default=math.inf)
    p.set_defaults(func=cmd_compress)

    algo = argparse.ArgumentParser(add_help=False)
    algo.add_argument("--logical", type=_positive_int, default=100)
    algo.add_argument("--tcount", type=float, default=1e8)
    algo.add_argument("--p", type=float, default=1e-3)
    algo.add_argument("--fail", type=float, default=0.01)
    algo.add_argument("--table", default=None, help="distillation protocol table JSON")
    algo.add_argument("--axis", choices=estimator.AXES, default="per_batch")
    algo.add_argument("--batch", type=_positive_int, default=1, help="T states per offloaded batch")

    p = sub.add_parser("estimate", parents=[common, algo], help="qubit counts with and without a QDC")
    p.add_argument("--channel", default=None, help="topo.json#channel_name for the magic-state link")
    p.add_argument("--delay", type=float, default=0.0, help="delay per batch in seconds when no channel")
    p.add_argument("--buffered", action="store_true", help="Bell pairs pre-distributed")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", parents=[common, algo], help="relative qubit number over a delay grid")
    p.add_argument("--delays", default="1e-6..1e0:log40")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cost", parents=[common], help="communication versus local query cost")
    p.add_argument("--nmin", type=int, default=16)
    p.add_argument("--nmax", type=int, default=1024)
    p.add_argument("--m", type=_positive_int, default=1)
    p.add_argument("--archs", nargs="+", choices=("fanout", "bucket", "selectswap"),
                   default=["bucket", "fanout", "selectswap"])
    p.set_defaults(func=cmd_cost)
    return parser


def _config_echo(args, seed: int) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "command", "seed", "out", "format", "subparsers")}
    return {"subcommand": args.command, "seed": seed, "out": args.out, "format": args.format, "params": params}


def make_envelope(config: dict, payload: dict, checks: list[Check], timestamp: str | None = None) -> dict:
    return {
        "tool_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "payload": payload,
        "checks": [{"name": n, "passed": ok, "value": v} for n, ok, v in checks],
    }


def dumps(envelope: dict) -> str:
    return json.dumps(_jsonable(envelope), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if extra:
            # report against the subcommand so the usage lists its flags
            args.subparsers[args.command].error(f"unrecognized arguments: {' '.join(extra)}")
        seed = resolve_seed(args.seed)
        rng = np.random.default_rng(seed)
        try:
            payload, checks, csv_text = args.func(args, rng)
        except (ValueError, NetworkError) as exc:
            raise UsageError(f"{args.command}: {exc}") from None
        envelope = make_envelope(_config_echo(args, seed), payload, checks)
        if args.format == "csv":
            if csv_text is None:
                raise UsageError(f"{args.command} has no CSV output; use --format json")
            _write(args.out, csv_text)
        else:
            _write(args.out, dumps(envelope))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    return 0 if all(ok for _, ok, _ in checks) else 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
