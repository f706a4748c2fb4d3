"""Multi-party private communication through untrusted QDCs.

Pipeline per run:
  1. each sender encodes its qutrit secret into three ((2,3)) shares;
  2. shares cross the qubit teleporter as two-qubit embeddings, share c going to QDC c;
  3. each receiver pulls two shares with a quantum-memory query (direct address)
     and the QDC teleports the output register back;
  4. the receiver decodes the secret from its two shares.

Privacy checks run on the post-upload state: every QDC's reduced state must
not depend on the secrets, and a decoy query with the address in uniform
superposition must leave each QDC's record symmetric under swapping senders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import core
from ..core import PureState
from ..network import QuantumNetwork, Topology, star_topology
from ..qram import query_quantum
from . import qss

MAX_SENDERS = 2
CELL_QUBITS = 2


class MultipartyError(ValueError):
    pass


def _seg(sender: int, share: int) -> str:
    return f"A{sender}.S{share}"


@dataclass
class MultipartyResult:
    delivered: list[PureState]
    fidelities: list[float]
    privacy: dict
    timeline: list[dict]
    bell_pairs_used: int
    checks: list[tuple[str, bool, float]] = field(default_factory=list)


def _encode_all(secrets: Sequence) -> PureState:
    state = None
    for s, secret in enumerate(secrets):
        enc = qss.qss_encode(secret)
        enc = core.with_segments(enc, {_seg(s, c): (c,) for c in range(3)})
        enc = qss.embed_qutrits(enc, range(3))
        state = enc if state is None else state.tensor(enc)
    return state


def _upload(secrets, names, qdc_nodes, topology, seed):
    net = QuantumNetwork(topology, seed)
    state = _encode_all(secrets)
    arrival = 0.0
    for s, name in enumerate(names):
        for c, qdc in enumerate(qdc_nodes):
            state, t, _ = net.teleport(state, state.layout[_seg(s, c)], name, qdc, 0.0)
            arrival = max(arrival, t)
    return state, net, arrival


def _qdc_record(state: PureState, n_senders: int, qdc: int, order: Sequence[int] | None = None) -> np.ndarray:
    order = range(n_senders) if order is None else order
    sites = [site for s in order for site in state.layout[_seg(s, qdc)]]
    return core.reduced_density(state, sites)


def _address_width(n_senders: int) -> int:
    return max(1, math.ceil(math.log2(n_senders)))


def _query_layout(state: PureState, n_senders: int, qdc: int, address) -> PureState:
    """Append address, output and fresh cells; expose Q1/Q2/D segments for QDC ``qdc``.

    Slots whose share was already retrieved (and dropped as |00>) and the
    power-of-two padding are filled with fresh |00> cells.
    """
    n_addr = _address_width(n_senders)
    n_cells = 2**n_addr
    present = [s for s in range(n_senders) if _seg(s, qdc) in state.layout.segments]
    fresh = n_cells - len(present)
    addr = np.asarray(address, dtype=complex).reshape(-1)
    extra_layout = core.RegisterLayout.from_segments(
        ("Q1", n_addr), ("Q2", CELL_QUBITS), ("fresh", CELL_QUBITS * fresh)
    )
    extra = np.zeros(extra_layout.total_dim, dtype=complex)
    # address occupies the lowest appended sites, everything else starts in |0>
    extra[: 2**n_addr] = addr
    work = state.tensor(PureState.from_vector(extra_layout, extra, normalize=True))
    fresh_sites = list(work.layout.segments.get("fresh", ()))
    cells: list[int] = []
    for s in range(n_cells):
        if s in present:
            cells += list(state.layout[_seg(s, qdc)])
        else:
            cells += fresh_sites[:CELL_QUBITS]
            fresh_sites = fresh_sites[CELL_QUBITS:]
    segs = {k: v for k, v in work.layout.segments.items()
            if k not in {_seg(s, qdc) for s in range(n_senders)} and k != "fresh"}
    segs["D"] = tuple(cells)
    return core.with_segments(work, segs)


def _restore_segments(state: PureState, n_senders: int, qdc: int, skip: int | None) -> dict:
    d = state.layout["D"]
    segs = {k: v for k, v in state.layout.segments.items() if k not in ("D", "Q1")}
    empty: list[int] = []
    for s in range(len(d) // CELL_QUBITS):
        sites = d[CELL_QUBITS * s : CELL_QUBITS * (s + 1)]
        if s < n_senders and s != skip:
            segs[_seg(s, qdc)] = sites
        else:
            empty += sites
    segs["_empty"] = tuple(empty)
    segs["_Q1"] = state.layout["Q1"]
    return {k: v for k, v in segs.items() if v}


def decoy_record(state: PureState, n_senders: int, qdc: int) -> PureState:
    """Run one quantum-memory query with a uniform address superposition on a copy."""
    n_addr = _address_width(n_senders)
    addr = np.zeros(2**n_addr, dtype=complex)
    addr[:n_senders] = 1
    work = _query_layout(state, n_senders, qdc, addr)
    work = query_quantum(work)
    return core.with_segments(work, _restore_segments(work, n_senders, qdc, skip=None))


def privacy_report(state: PureState, reference: PureState, n_senders: int) -> dict:
    secret_independence = []
    for c in range(3):
        secret_independence.append(
            core.trace_distance(_qdc_record(state, n_senders, c), _qdc_record(reference, n_senders, c))
        )
    symmetry = []
    if n_senders >= 2:
        for c in range(3):
            rec = decoy_record(state, n_senders, c)
            fwd = _qdc_record(rec, n_senders, c)
            rev = _qdc_record(rec, n_senders, c, order=list(reversed(range(n_senders))))
            symmetry.append(core.trace_distance(fwd, rev))
    return {
        "secret_independence_trace_distance": secret_independence,
        "sender_symmetry_trace_distance": symmetry,
        "secret_independent": max(secret_independence) <= core.ATOL,
        "sender_symmetric": (max(symmetry) <= core.ATOL) if symmetry else True,
    }


def _retrieve(state: PureState, net: QuantumNetwork, n_senders: int, qdc: int, qdc_name: str,
              sender: int, receiver: str, label: str, start: float) -> tuple[PureState, float]:
    n_addr = _address_width(n_senders)
    addr = np.zeros(2**n_addr, dtype=complex)
    addr[sender] = 1
    work = _query_layout(state, n_senders, qdc, addr)
    work = query_quantum(work)
    net.timeline.schedule(start, "qram_query", receiver, qdc_name, n_addr)
    segs = _restore_segments(work, n_senders, qdc, skip=sender)
    segs[label] = segs.pop("Q2")
    work = core.with_segments(work, segs)
    drop = [s for name in ("_Q1", "_empty") for s in work.layout.segments.get(name, ())]
    work = core.drop_sites(work, drop)
    work, arrival, _ = net.teleport(work, work.layout[label], qdc_name, receiver, start)
    return work, arrival


def multiparty_send(senders: Sequence[tuple[str, object]], qdc_nodes: Sequence[str],
                    receivers: Sequence[tuple[str, int]], topology: Topology | None = None,
                    seed=None, reference_secret=None) -> MultipartyResult:
    """Deliver each sender's qutrit secret to the receiver that asks for it.

    ``receivers`` holds ``(name, sender index)`` pairs; each sender may be
    requested at most once.  Without a topology, noiseless star links are used.
    """
    if len(qdc_nodes) < 3:
        raise MultipartyError("the ((2,3)) scheme needs three QDC nodes")
    if len(qdc_nodes) > 3:
        qdc_nodes = list(qdc_nodes)[:3]
    if not 1 <= len(senders) <= MAX_SENDERS:
        raise MultipartyError(f"between 1 and {MAX_SENDERS} senders are supported")
    wanted = [w for _, w in receivers]
    if len(set(wanted)) != len(wanted) or any(not 0 <= w < len(senders) for w in wanted):
        raise MultipartyError("each receiver must request a distinct existing sender")
    names = [n for n, _ in senders]
    secrets = [np.asarray(s, dtype=complex) for _, s in senders]
    if topology is None:
        topology = star_topology(names + [r for r, _ in receivers], qdc_nodes)

    state, net, t_up = _upload(secrets, names, qdc_nodes, topology, seed)
    ref_secret = np.array([1, 0, 0], dtype=complex) if reference_secret is None else reference_secret
    reference, _, _ = _upload([ref_secret] * len(secrets), names, qdc_nodes, topology, seed)
    privacy = privacy_report(state, reference, len(secrets))

    n_senders = len(secrets)
    labels = []
    t_done = t_up
    for r, (rname, want) in enumerate(receivers):
        pair = sorted({r % 3, (r + 1) % 3})
        got = {}
        for c in pair:
            label = f"B{r}.got{c}"
            state, t = _retrieve(state, net, n_senders, c, qdc_nodes[c], want, rname, label, t_up)
            t_done = max(t_done, t)
            got[c] = label
        labels.append(got)

    pairs = []
    for got in labels:
        for label in got.values():
            lo, hi = state.layout[label]
            pairs.append((lo, hi))
    state = qss.unembed_qubits(state, pairs)

    delivered, fids = [], []
    for (rname, want), got in zip(receivers, labels):
        share_sites = {c + 1: state.layout[label][0] for c, label in got.items()}
        out = qss.qss_reconstruct(state, share_sites)
        delivered.append(out)
        fids.append(core.fidelity(out.amplitudes, secrets[want] / np.linalg.norm(secrets[want])))
        net.timeline.schedule(t_done, "reconstruct", rname, rname, 2)
    net.timeline.run()

    checks = [
        ("delivered_fidelity", min(fids) >= 1 - core.ATOL, min(fids)),
        ("qdc_secret_independent", privacy["secret_independent"],
         max(privacy["secret_independence_trace_distance"])),
        ("qdc_sender_symmetric", privacy["sender_symmetric"],
         max(privacy["sender_symmetry_trace_distance"] or [0.0])),
    ]
    return MultipartyResult(delivered, fids, privacy, net.timeline.to_records(), net.bell_pairs_used, checks)
