"""Discrete-event quantum network: Bell-pair links, teleportation, and delay accounting.

Delivered pairs are Werner states with Bell fidelity ``f``:
``f |Phi+><Phi+| + (1 - f)/3 (I - |Phi+><Phi+|)``, i.e. |Phi+> with an X, Y or
Z error on the receiving half, each with probability ``(1 - f)/3``.
"""
from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import core
from .core import PureState, RegisterLayout

ROLES = ("User", "QDC")


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    role: str = "User"

    def __post_init__(self):
        if self.role not in ROLES:
            raise NetworkError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class Channel:
    a: str
    b: str
    latency: float = 0.0
    bell_rate: float = math.inf
    fidelity: float = 1.0
    name: str = ""

    def __post_init__(self):
        if not self.latency >= 0:
            raise NetworkError("latency must be >= 0")
        if not self.bell_rate > 0:
            raise NetworkError("bell_rate must be > 0")
        if not 0.25 < self.fidelity <= 1.0:
            raise NetworkError("fidelity must lie in (0.25, 1]")

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    def connects(self, u: str, v: str) -> bool:
        return {u, v} == {self.a, self.b}


@dataclass
class Topology:
    nodes: dict[str, Node]
    channels: list[Channel]

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        nodes: dict[str, Node] = {}
        for n in data.get("nodes", []):
            if n["id"] in nodes:
                raise NetworkError(f"duplicate node id {n['id']!r}")
            nodes[n["id"]] = Node(n["id"], n.get("role", "User"))
        channels = []
        for idx, c in enumerate(data.get("channels", [])):
            for end in (c["a"], c["b"]):
                if end not in nodes:
                    raise NetworkError(f"channel refers to unknown node {end!r}")
            channels.append(
                Channel(
                    c["a"],
                    c["b"],
                    latency=float(c.get("latency_s", 0.0)),
                    bell_rate=float(c.get("bell_rate_hz", math.inf)),
                    fidelity=float(c.get("fidelity", 1.0)),
                    name=c.get("name", f"chan{idx}"),
                )
            )
        return cls(nodes, channels)

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "role": n.role} for n in self.nodes.values()],
            "channels": [
                {
                    "name": c.name,
                    "a": c.a,
                    "b": c.b,
                    "latency_s": c.latency,
                    "bell_rate_hz": c.bell_rate,
                    "fidelity": c.fidelity,
                }
                for c in self.channels
            ],
        }

    def channel(self, u: str, v: str) -> Channel:
        for c in self.channels:
            if c.connects(u, v):
                return c
        raise NetworkError(f"no channel between {u!r} and {v!r}")

    def channel_named(self, name: str) -> Channel:
        for c in self.channels:
            if c.name == name:
                return c
        raise NetworkError(f"no channel named {name!r}")

    def by_role(self, role: str) -> list[str]:
        return [n.id for n in self.nodes.values() if n.role == role]


def star_topology(users: Sequence[str], qdcs: Sequence[str], latency=0.0, bell_rate=math.inf, fidelity=1.0) -> Topology:
    """Every user linked to every QDC with identical channels."""
    nodes = {u: Node(u, "User") for u in users}
    nodes.update({q: Node(q, "QDC") for q in qdcs})
    channels = [
        Channel(u, q, latency, bell_rate, fidelity, name=f"chan{i}")
        for i, (u, q) in enumerate(itertools.product(users, qdcs))
    ]
    return Topology(nodes, channels)


# ---------------------------------------------------------------------------
# Event timeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    src: str = field(compare=False, default="")
    dst: str = field(compare=False, default="")
    qubits: int = field(compare=False, default=0)
    payload: dict = field(compare=False, default_factory=dict)


class EventTimeline:
    """Single-threaded priority-queue event engine.

    Events are scheduled in any order and released in (time, insertion) order;
    optional handlers run as their event is released.
    """

    def __init__(self):
        self._queue: list[tuple[Event, Callable | None]] = []
        self._seq = itertools.count()
        self.events: list[Event] = []
        self.now = 0.0

    def schedule(self, time: float, kind: str, src: str = "", dst: str = "", qubits: int = 0,
                 handler: Callable[[Event], Any] | None = None, **payload) -> Event:
        if time < self.now:
            raise NetworkError(f"cannot schedule at {time} before current time {self.now}")
        ev = Event(float(time), next(self._seq), kind, src, dst, int(qubits), payload)
        heapq.heappush(self._queue, (ev, handler))
        return ev

    def run(self, until: float = math.inf) -> list[Event]:
        released = []
        while self._queue and self._queue[0][0].time <= until:
            ev, handler = heapq.heappop(self._queue)
            self.now = ev.time
            self.events.append(ev)
            released.append(ev)
            if handler is not None:
                handler(ev)
        return released

    def is_monotone(self) -> bool:
        return all(a.time <= b.time for a, b in zip(self.events, self.events[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "event", "src", "dst", "qubits"])
        for ev in self.events:
            w.writerow([repr(ev.time), ev.kind, ev.src, ev.dst, ev.qubits])
        return buf.getvalue()

    def to_records(self) -> list[dict]:
        return [
            {"time_s": ev.time, "event": ev.kind, "src": ev.src, "dst": ev.dst, "qubits": ev.qubits}
            for ev in self.events
        ]


# ---------------------------------------------------------------------------
# Bell pairs and teleportation
# ---------------------------------------------------------------------------

PAULIS = (core.I2, core.X, core.Y, core.Z)
_BELL_LAYOUT = RegisterLayout.from_segments(("A", 1), ("B", 1))
PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


def werner_branches(f: float) -> list[tuple[float, int]]:
    """(probability, Pauli index on the receiving half); Pauli 0 is identity."""
    if f >= 1.0:
        return [(1.0, 0)]
    e = (1.0 - f) / 3.0
    return [(f, 0), (e, 1), (e, 2), (e, 3)]


def werner_pair(f: float) -> core.MixedEnsemble:
    """Werner pair over sites (A, B) with Bell fidelity ``f``."""
    phi = PureState(_BELL_LAYOUT, PHI_PLUS)
    branches = []
    for p, k in werner_branches(f):
        branches.append((p, core.apply_gate(phi, core.GateOp((1,), PAULIS[k], "P"))))
    return core.MixedEnsemble(tuple(branches))


def transmit_time(n_qubits: int, channel: Channel, buffered: bool = False, queue_wait: float = 0.0) -> float:
    """Time to teleport ``n_qubits``: pair generation at ``bell_rate`` plus one classical latency.

    ``buffered`` models pre-distributed pairs (no generation term);
    ``queue_wait`` is an optional fixed wait at the far end.
    """
    if n_qubits < 0:
        raise NetworkError("n_qubits must be >= 0")
    gen = 0.0 if buffered or n_qubits == 0 else n_qubits / channel.bell_rate
    return gen + channel.latency + queue_wait


@dataclass
class TeleportRecord:
    outcomes: list[tuple[int, int]]
    pauli_errors: list[int]
    pairs_used: int
    arrival_time: float


class QuantumNetwork:
    """Topology plus a timeline, a pair ledger, and a seeded RNG."""

    def __init__(self, topology: Topology, seed=None, buffered: bool = False):
        self.topology = topology
        self.timeline = EventTimeline()
        self.rng = np.random.default_rng(seed)
        self.buffered = buffered
        self.pairs: dict[int, tuple[Channel, core.MixedEnsemble]] = {}
        self._pair_ids = itertools.count()
        self.bell_pairs_used = 0

    def generate_bell_pairs(self, channel: Channel, count: int, start_time: float) -> tuple[float, list[int]]:
        if count < 1:
            raise NetworkError("count must be >= 1")
        done = start_time + count / channel.bell_rate + channel.latency
        ids = []
        for _ in range(count):
            pid = next(self._pair_ids)
            self.pairs[pid] = (channel, werner_pair(channel.fidelity))
            ids.append(pid)
        self.timeline.schedule(start_time, "bell_request", channel.a, channel.b, count)
        self.timeline.schedule(done, "bell_ready", channel.a, channel.b, count, pair_ids=ids)
        return done, ids

    def teleport(self, state: PureState, sites: Sequence[int], src: str, dst: str,
                 start_time: float = 0.0) -> tuple[PureState, float, TeleportRecord]:
        channel = self.topology.channel(src, dst)
        out, record = teleport_state(state, sites, channel, self.rng, start_time, self.buffered)
        self.bell_pairs_used += record.pairs_used
        self.timeline.schedule(start_time, "teleport_start", src, dst, len(sites))
        self.timeline.schedule(record.arrival_time, "teleport_arrive", src, dst, len(sites))
        return out, record.arrival_time, record


def teleport_state(state: PureState, sites: Sequence[int], channel: Channel, rng=None,
                   start_time: float = 0.0, buffered: bool = False,
                   pauli_errors: Sequence[int] | None = None) -> tuple[PureState, TeleportRecord]:
    """Teleport the qubits at ``sites`` through ``channel``, one Werner pair per qubit.

    The delivered qubits keep their site positions, so the returned state has
    the input's layout.  ``pauli_errors`` forces the Werner branch per qubit
    (used by exact averaging); otherwise branches are sampled from ``rng``.
    """
    rng = core._rng(rng)
    sites = list(sites)
    for s in sites:
        if state.layout.dims[s] != 2:
            raise NetworkError("only qubits can be teleported")
    if state.n_sites + 2 > 24:
        raise NetworkError("state too large to append a Bell pair")
    outcomes, errors = [], []
    branches = werner_branches(channel.fidelity)
    for j, s in enumerate(sites):
        if pauli_errors is not None:
            k = pauli_errors[j]
        else:
            probs = np.array([p for p, _ in branches])
            k = branches[int(rng.choice(len(branches), p=probs))][1]
        errors.append(k)
        n0 = state.n_sites
        a, b = n0, n0 + 1
        pair = core.apply_gate(PureState(_BELL_LAYOUT, PHI_PLUS), core.GateOp((1,), PAULIS[k], "P"))
        work = state.tensor(pair, {"A": "_pairA", "B": "_pairB"})
        work = core.apply_gate(work, core.cnot(s, a))
        work = core.apply_gate(work, core.h(s))
        (m1, m2), work, _ = core.measure_sites(work, [s, a], rng)
        if m2:
            work = core.apply_gate(work, core.x(b))
        if m1:
            work = core.apply_gate(work, core.z(b))
        work = core.apply_gate(work, core.swap(s, b))
        state = core.drop_sites(work, [a, b])
        outcomes.append((m1, m2))
    arrival = start_time + transmit_time(len(sites), channel, buffered)
    return state, TeleportRecord(outcomes, errors, len(sites), arrival)
