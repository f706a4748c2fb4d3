"""QRAM queries: brute-force oracles and explicit router/lookup circuits.

Tree indexing is heap style.  Node 1 is the root, node ``k`` has children
``2k`` (address bit 0, "left") and ``2k + 1`` (address bit 1, "right").  For
``N = 2**n`` cells the routers are nodes ``1 .. N-1`` and the wires are nodes
``1 .. 2N-1``; leaf wire ``N + i`` belongs to cell ``i``.  Tree level ``l`` is
steered by address bit ``n-1-l`` (most-significant first), so with the
little-endian register convention the address qubit for level ``l`` is
``Q1[n-1-l]``.

Routers are plain qubits (route-left = |0>, route-right = |1>), not the
three-level wait/left/right routers of the original bucket-brigade proposal.
Inactive routers sit in |0> and harmlessly route vacuum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import core
from .core import (
    Circuit,
    GateOp,
    PureState,
    RegisterLayout,
    SimulationError,
    circuit_metrics,
    cnot,
    cswap,
    swap,
    toffoli,
    x,
)


class QramError(ValueError):
    pass


def address_width(n_cells: int) -> int:
    n_cells = int(n_cells)
    if n_cells < 2 or n_cells & (n_cells - 1):
        raise QramError(f"memory size must be a power of two >= 2, got {n_cells}")
    return n_cells.bit_length() - 1


@dataclass(frozen=True)
class MemorySpec:
    """Contents of a QRAM: classical ``words`` of ``m`` bits, or quantum ``cells``."""

    words: tuple[int, ...] | None = None
    m: int = 1
    cells: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if (self.words is None) == (self.cells is None):
            raise QramError("give exactly one of words or cells")
        if self.words is not None:
            words = tuple(int(w) for w in self.words)
            address_width(len(words))
            if self.m < 1:
                raise QramError("word width must be >= 1")
            for w in words:
                if not 0 <= w < 2**self.m:
                    raise QramError(f"word {w} does not fit in {self.m} bits")
            object.__setattr__(self, "words", words)
        else:
            cells = tuple(np.asarray(c, dtype=complex).reshape(-1) for c in self.cells)
            address_width(len(cells))
            width = len(cells[0])
            for c in cells:
                if len(c) != width or width & (width - 1) or width < 2:
                    raise QramError("quantum cells must share a qubit-register dimension")
                if abs(np.linalg.norm(c) - 1) > core.ATOL:
                    raise QramError("quantum cells must be normalized")
            object.__setattr__(self, "cells", cells)

    @classmethod
    def classical(cls, words: Sequence[int], m: int) -> "MemorySpec":
        return cls(words=tuple(words), m=m)

    @classmethod
    def quantum(cls, cells: Sequence) -> "MemorySpec":
        return cls(cells=tuple(cells))

    @property
    def is_classical(self) -> bool:
        return self.words is not None

    @property
    def size(self) -> int:
        return len(self.words if self.words is not None else self.cells)

    @property
    def n(self) -> int:
        return address_width(self.size)

    @property
    def cell_qubits(self) -> int:
        return int(len(self.cells[0])).bit_length() - 1


def random_classical_memory(n_cells: int, m: int, rng: np.random.Generator) -> MemorySpec:
    return MemorySpec.classical(rng.integers(0, 2**m, size=n_cells).tolist(), m)


# ---------------------------------------------------------------------------
# Brute-force classical oracle
# ---------------------------------------------------------------------------


def oracle_layout(n_cells: int, m: int) -> RegisterLayout:
    return RegisterLayout.from_segments(("Q1", address_width(n_cells)), ("Q2", m))


def oracle_unitary_classical(memory: MemorySpec, targets: Sequence[int] | None = None) -> GateOp:
    """|i>|b> -> |i>|b XOR x_i> on Q1 (n qubits) followed by Q2 (m qubits)."""
    if not memory.is_classical:
        raise QramError("classical oracle needs classical words")
    n_cells, m = memory.size, memory.m
    perm = [0] * (n_cells * 2**m)
    for b in range(2**m):
        for i, w in enumerate(memory.words):
            perm[i + n_cells * b] = i + n_cells * (b ^ w)
    if targets is None:
        targets = range(memory.n + m)
    return GateOp(tuple(targets), core.permutation_matrix(perm), "QRAM", 0)


# ---------------------------------------------------------------------------
# Tree architectures (fanout and bucket brigade)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeRegisters:
    layout: RegisterLayout
    n: int
    m: int

    @property
    def n_cells(self) -> int:
        return 2**self.n

    def addr(self, level: int) -> int:
        return self.layout["Q1"][self.n - 1 - level]

    def out(self, bit: int) -> int:
        return self.layout["Q2"][bit]

    def router(self, node: int) -> int:
        return self.layout["routers"][node - 1]

    def wire(self, node: int) -> int:
        return self.layout["wires"][node - 1]


def tree_registers(n_cells: int, m: int) -> TreeRegisters:
    n = address_width(n_cells)
    layout = RegisterLayout.from_segments(
        ("Q1", n), ("Q2", m), ("routers", n_cells - 1), ("wires", 2 * n_cells - 1)
    )
    return TreeRegisters(layout, n, m)


def _level_nodes(level: int) -> range:
    return range(2**level, 2 ** (level + 1))


def _route_level(reg: TreeRegisters, level: int) -> list[GateOp]:
    """Move each wire payload at ``level`` one step down, steered by its router."""
    gates = []
    for k in _level_nodes(level):
        gates.append(cswap(reg.router(k), reg.wire(k), reg.wire(2 * k + 1)))
        gates.append(swap(reg.wire(k), reg.wire(2 * k)))
    return gates


def _fanout_load(reg: TreeRegisters) -> list[GateOp]:
    # copy address bit l to every router of level l through a CNOT doubling tree
    gates = []
    for level in range(reg.n):
        nodes = list(_level_nodes(level))
        gates.append(cnot(reg.addr(level), reg.router(nodes[0])))
        filled = 1
        while filled < len(nodes):
            for j in range(filled):
                gates.append(cnot(reg.router(nodes[j]), reg.router(nodes[j + filled])))
            filled *= 2
    return gates


def _bucket_brigade_load(reg: TreeRegisters) -> list[GateOp]:
    # address bit l enters at the root wire, is routed by the already-set
    # routers of levels < l, then is stored in the one router it reaches
    gates = []
    for level in range(reg.n):
        gates.append(swap(reg.addr(level), reg.wire(1)))
        for j in range(level):
            gates.extend(_route_level(reg, j))
        for k in _level_nodes(level):
            gates.append(swap(reg.wire(k), reg.router(k)))
    return gates


def _token_and_readout(reg: TreeRegisters, memory: MemorySpec) -> list[GateOp]:
    """Route a token to the addressed leaf, copy data onto Q2, and uncompute the token."""
    token = [x(reg.wire(1))]
    for level in range(reg.n):
        token.extend(_route_level(reg, level))

    n_cells = reg.n_cells
    readout: list[GateOp] = []
    for bit in range(reg.m):
        copy = [
            cnot(reg.wire(n_cells + i), reg.wire((n_cells + i) // 2))
            for i, w in enumerate(memory.words)
            if (w >> bit) & 1
        ]
        if not copy:
            continue
        collect = []
        for level in range(reg.n - 2, -1, -1):
            for k in _level_nodes(level):
                collect.append(cnot(reg.wire(2 * k), reg.wire(k)))
                collect.append(cnot(reg.wire(2 * k + 1), reg.wire(k)))
        up = copy + collect
        readout.extend(up)
        readout.append(cnot(reg.wire(1), reg.out(bit)))
        readout.extend(reversed(up))
    return token + readout + list(reversed(token))


def _tree_circuit(memory: MemorySpec, load: list[GateOp], reg: TreeRegisters) -> Circuit:
    gates = load + _token_and_readout(reg, memory) + list(reversed(load))
    return Circuit(reg.layout, gates)


def build_fanout(memory: MemorySpec) -> Circuit:
    """Fanout QRAM: every router of level l receives a copy of address bit l."""
    reg = tree_registers(memory.size, memory.m)
    return _tree_circuit(memory, _fanout_load(reg), reg)


def build_bucket_brigade(memory: MemorySpec) -> Circuit:
    """Bucket-brigade QRAM: address bits are routed down and only the path routers are set."""
    reg = tree_registers(memory.size, memory.m)
    return _tree_circuit(memory, _bucket_brigade_load(reg), reg)


# ---------------------------------------------------------------------------
# Select-swap (QROM/QRAM hybrid)
# ---------------------------------------------------------------------------

# T-count of build_select_swap:
#   14 * (N/lam - 1)       one-hot decoder over N/lam groups (Toffoli per internal node, x2 for uncompute)
# + 14 * m * (lam - 1)     controlled-SWAP network over lam registers of m bits (x2 for uncompute)
SELECT_T_PER_GROUP = 2 * core.TOFFOLI_T
SWAP_T_PER_REGISTER_BIT = 2 * core.CSWAP_T


def select_swap_t_count(n_cells: int, m: int, lam: int) -> int:
    """Closed form of the select-swap builder's T-count."""
    return SELECT_T_PER_GROUP * (n_cells // lam - 1) + SWAP_T_PER_REGISTER_BIT * m * (lam - 1)


def _check_lambda(n_cells: int, lam: int) -> int:
    if lam < 1 or lam & (lam - 1) or lam > n_cells:
        raise QramError(f"lambda must be a power of two in [1, {n_cells}], got {lam}")
    return lam.bit_length() - 1


def select_swap_layout(n_cells: int, m: int, lam: int) -> RegisterLayout:
    _check_lambda(n_cells, lam)
    groups = n_cells // lam
    return RegisterLayout.from_segments(
        ("Q1", address_width(n_cells)), ("Q2", m), ("flags", 2 * groups - 1), ("registers", lam * m)
    )


def build_select_swap(memory: MemorySpec, lam: int) -> Circuit:
    """Select stage over N/lam groups followed by a swap network over lam registers.

    The low ``log2(lam)`` address bits drive the swap network; the remaining high
    bits drive a one-hot decoder tree whose leaves load a whole group of ``lam``
    words in parallel.  ``lam = 1`` is a pure select (QROM) and ``lam = N`` is
    pure swap addressing.
    """
    n_cells, m = memory.size, memory.m
    k = _check_lambda(n_cells, lam)
    n = memory.n
    layout = select_swap_layout(n_cells, m, lam)
    q1, q2 = layout["Q1"], layout["Q2"]
    groups = n_cells // lam

    def flag(node: int) -> int:
        return layout["flags"][node - 1]

    def reg(slot: int, bit: int) -> int:
        return layout["registers"][slot * m + bit]

    decoder = [x(flag(1))]
    for level in range(n - k):
        a = q1[n - 1 - level]
        for node in _level_nodes(level):
            decoder.append(toffoli(flag(node), a, flag(2 * node + 1)))
            decoder.append(cnot(flag(node), flag(2 * node)))
            decoder.append(cnot(flag(2 * node + 1), flag(2 * node)))

    load = []
    for g in range(groups):
        leaf = flag(groups + g)
        for slot in range(lam):
            word = memory.words[g * lam + slot]
            for bit in range(m):
                if (word >> bit) & 1:
                    load.append(cnot(leaf, reg(slot, bit)))

    network = []
    for t in range(k):
        step = 2**t
        for p in range(0, lam, 2 * step):
            for bit in range(m):
                network.append(cswap(q1[t], reg(p, bit), reg(p + step, bit)))

    compute = decoder + load + network
    copy_out = [cnot(reg(0, bit), q2[bit]) for bit in range(m)]
    return Circuit(layout, compute + copy_out + list(reversed(compute)))


def optimal_lambda(n_cells: int, m: int) -> tuple[int, int]:
    """Sweep dyadic lambda through the builder; returns ``(lambda, t_count)`` at the minimum.

    Ties go to the smaller lambda (fewer ancilla registers).
    """
    best = None
    zero = MemorySpec.classical([0] * n_cells, m)
    # the T-count does not depend on the stored words
    for k in range(address_width(n_cells) + 1):
        lam = 2**k
        t = circuit_metrics(build_select_swap(zero, lam)).t_count
        if best is None or t < best[1]:
            best = (lam, t)
    return best


# ---------------------------------------------------------------------------
# Verification helpers and instrumentation
# ---------------------------------------------------------------------------


def run_on_io(circuit: Circuit, io_state: np.ndarray) -> tuple[np.ndarray, float]:
    """Run ``circuit`` on ``io_state`` (over Q1 then Q2) with all other sites in |0>.

    Returns the output Q1Q2 vector (projected onto ancillas |0>) and the total
    population found with ancillas returned to |0>.
    """
    layout = circuit.layout
    io_sites = list(layout["Q1"]) + list(layout["Q2"])
    if io_sites != list(range(len(io_sites))):
        raise QramError("Q1 and Q2 must occupy the leading sites")
    io_dim = 2 ** len(io_sites)
    io_state = np.asarray(io_state, dtype=complex).reshape(-1)
    if io_state.shape[0] != io_dim:
        raise QramError("input vector does not match Q1Q2 dimension")
    sparse = {i: a for i, a in enumerate(io_state) if abs(a) > 0}
    out = core.run_circuit_sparse(sparse, circuit)
    vec = np.zeros(io_dim, dtype=complex)
    for idx, amp in out.items():
        if idx < io_dim:
            vec[idx] += amp
    return vec, float(np.vdot(vec, vec).real)


def routers_activated(circuit: Circuit, address: int, router_segment: str = "routers") -> int:
    """Count routers that ever receive address information for a basis address.

    Classical simulation with taint tracking: the Q1 qubits start tainted; CNOT
    and Toffoli taint their target when any control is tainted (and the untainted
    controls are 1); SWAP exchanges taints; CSWAP exchanges them when its
    control is 1.  A router is activated if it is ever tainted.
    """
    layout = circuit.layout
    val = [0] * layout.n_sites
    taint = [False] * layout.n_sites
    q1 = layout["Q1"]
    for j, s in enumerate(q1):
        val[s] = (address >> j) & 1
        taint[s] = True
    routers = set(layout[router_segment])
    hit: set[int] = set()
    for g in circuit.gates:
        t = g.targets
        if g.label == "X":
            val[t[0]] ^= 1
        elif g.label in ("CNOT", "TOFFOLI"):
            *ctrls, tgt = t
            if all(val[c] for c in ctrls):
                val[tgt] ^= 1
            if any(taint[c] for c in ctrls) and all(val[c] or taint[c] for c in ctrls):
                taint[tgt] = True
        elif g.label == "SWAP":
            a, b = t
            val[a], val[b] = val[b], val[a]
            taint[a], taint[b] = taint[b], taint[a]
        elif g.label == "CSWAP":
            c, a, b = t
            if val[c]:
                val[a], val[b] = val[b], val[a]
                taint[a], taint[b] = taint[b], taint[a]
        else:
            raise QramError(f"cannot instrument gate {g.label}")
        hit.update(s for s in t if taint[s] and s in routers)
    return len(hit)


def mean_routers_activated(circuit: Circuit, n_cells: int, samples: int = 8) -> float:
    addresses = sorted(set(np.linspace(0, n_cells - 1, min(samples, n_cells)).astype(int).tolist()))
    return float(np.mean([routers_activated(circuit, a) for a in addresses]))


# ---------------------------------------------------------------------------
# Quantum memory (swap semantics)
# ---------------------------------------------------------------------------


def quantum_memory_state(address, memory: MemorySpec) -> PureState:
    """|address>_Q1 |0>_Q2 (x)_j |psi_j>_Dj as a PureState with segments Q1, Q2, D."""
    if memory.is_classical:
        raise QramError("quantum memory needs quantum cells")
    n, w = memory.n, memory.cell_qubits
    layout = RegisterLayout.from_segments(("Q1", n), ("Q2", w), ("D", w * memory.size))
    address = np.asarray(address, dtype=complex).reshape(-1)
    if address.shape[0] != memory.size:
        raise QramError("address vector must have one amplitude per cell")
    vec = address
    out = np.zeros(2**w, dtype=complex)
    out[0] = 1
    vec = np.kron(out, vec)
    for c in memory.cells:
        vec = np.kron(c, vec)
    return PureState.from_vector(layout, vec)


def _controlled_swap_gate(n: int, w: int, i: int, targets: Sequence[int]) -> GateOp:
    # targets: Q1 (n) + Q2 (w) + D_i (w); swap Q2 <-> D_i when Q1 == i
    dim_a, dim_c = 2**n, 2**w
    perm = []
    for idx in range(dim_a * dim_c * dim_c):
        a, rest = idx % dim_a, idx // dim_a
        q2, d = rest % dim_c, rest // dim_c
        if a == i:
            q2, d = d, q2
        perm.append(a + dim_a * (q2 + dim_c * d))
    return GateOp(tuple(targets), core.permutation_matrix(perm), f"CSWAP_cell{i}", 0)


def quantum_query_circuit(layout: RegisterLayout, n_cells: int) -> Circuit:
    q1, q2, d = layout["Q1"], layout["Q2"], layout["D"]
    w = len(q2)
    gates = [
        _controlled_swap_gate(len(q1), w, i, list(q1) + list(q2) + list(d[i * w : (i + 1) * w]))
        for i in range(n_cells)
    ]
    return Circuit(layout, gates)


def query_quantum(state: PureState, n_cells: int | None = None, require_empty_output: bool = True) -> PureState:
    """Quantum-data query: on branch ``i`` cell ``D_i`` is swapped into Q2, leaving |0> behind.

    The contract only covers Q2 starting in |0>; pass ``require_empty_output=False``
    to apply the underlying controlled-SWAP unitary to other inputs.
    """
    layout = state.layout
    w = len(layout["Q2"])
    if n_cells is None:
        n_cells = len(layout["D"]) // w
    if 2 ** len(layout["Q1"]) != n_cells or len(layout["D"]) != n_cells * w:
        raise QramError("layout does not match the memory size")
    if require_empty_output:
        p0 = core.marginal_probabilities(state, layout["Q2"])[0]
        if p0 < 1 - core.ATOL:
            raise QramError("output register Q2 must start in |0>")
    return core.run_circuit(state, quantum_query_circuit(layout, n_cells))


# ---------------------------------------------------------------------------
# LCU coefficient state preparation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LcuPreparation:
    circuit: Circuit
    n_qubits: int
    n_terms: int

    @property
    def hardware_cost_ratio(self) -> float:
        """log2(L) / L: qubits to hold |G> versus one register slot per term."""
        return math.log2(self.n_terms) / self.n_terms if self.n_terms > 1 else 1.0


def prepare_lcu_state(coefficients: Sequence[complex], n_qubits: int | None = None) -> LcuPreparation:
    """Circuit mapping |0...0> to sum_i g_i/|g| |i> via uniformly controlled Ry rotations.

    Magnitudes are split bit by bit from the most-significant qubit down; one
    diagonal gate fixes the phases at the end.
    """
    g = np.asarray(coefficients, dtype=complex).reshape(-1)
    n_terms = len(g)
    if n_terms == 0 or not np.any(np.abs(g) > 0):
        raise QramError("coefficient vector must be non-zero")
    n = max(1, math.ceil(math.log2(n_terms))) if n_qubits is None else n_qubits
    if n_terms > 2**n:
        raise QramError(f"{n_terms} terms do not fit in {n} qubits")
    amps = np.zeros(2**n, dtype=complex)
    amps[:n_terms] = g / np.linalg.norm(g)
    weights = np.abs(amps) ** 2
    layout = RegisterLayout.from_segments(("G", n))
    gates = []
    for level in range(n):
        target = n - 1 - level
        blocks = []
        # prefix = value of the already-prepared higher bits (sites target+1 .. n-1)
        for prefix in range(2**level):
            lo = prefix << (target + 1)
            span = 2**target
            w0 = weights[lo : lo + span].sum()
            w1 = weights[lo + span : lo + 2 * span].sum()
            theta = 2 * math.atan2(math.sqrt(w1), math.sqrt(w0))
            blocks.append(core.ry_matrix(theta))
        m = np.zeros((2 ** (level + 1),) * 2, dtype=complex)
        for c, b in enumerate(blocks):
            m[2 * c : 2 * c + 2, 2 * c : 2 * c + 2] = b
        gates.append(GateOp(tuple(range(target, n)), m, f"UCRY{level}"))
    phases = np.exp(1j * np.angle(amps))
    if not np.allclose(phases, 1):
        gates.append(GateOp(tuple(range(n)), np.diag(phases), "PHASE"))
    return LcuPreparation(Circuit(layout, gates), n, n_terms)


# ---------------------------------------------------------------------------
# Accounting
# ---------------------------------------------------------------------------

ARCHITECTURES = ("oracle", "fanout", "bucket", "selectswap")


@dataclass(frozen=True)
class QueryAccounting:
    arch: str
    n_cells: int
    m: int
    lam: int | None
    depth: int
    width: int
    t_count: int
    routers_activated: float
    address_qubits: int
    communicated_qubits: int


def communicated_qubits(n_cells: int, m: int, extra: int = 0) -> int:
    """Logical qubits teleported for one remote query: address plus output (plus a config knob)."""
    return math.ceil(math.log2(n_cells)) + m + extra


def build_circuit(arch: str, memory: MemorySpec, lam: int | None = None) -> Circuit:
    if arch == "fanout":
        return build_fanout(memory)
    if arch == "bucket":
        return build_bucket_brigade(memory)
    if arch == "selectswap":
        if lam is None:
            lam = optimal_lambda(memory.size, memory.m)[0]
        return build_select_swap(memory, lam)
    if arch == "oracle":
        layout = oracle_layout(memory.size, memory.m)
        return Circuit(layout, [oracle_unitary_classical(memory)])
    raise QramError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def query_cost(
    arch: str,
    n_cells: int,
    m: int,
    lam: int | None = None,
    memory: MemorySpec | None = None,
    extra_communication: int = 0,
    activation_samples: int = 8,
) -> QueryAccounting:
    n = address_width(n_cells)
    if memory is None:
        # all-ones words: every data-dependent CNOT present, the depth worst case
        memory = MemorySpec.classical([2**m - 1] * n_cells, m)
    if arch == "selectswap" and lam is None:
        lam = optimal_lambda(n_cells, m)[0]
    circuit = build_circuit(arch, memory, lam)
    metrics = circuit_metrics(circuit)
    if arch in ("fanout", "bucket"):
        activated = mean_routers_activated(circuit, n_cells, activation_samples)
    else:
        activated = 0.0
    return QueryAccounting(
        arch=arch,
        n_cells=n_cells,
        m=m,
        lam=lam if arch == "selectswap" else None,
        depth=metrics.depth,
        width=metrics.width,
        t_count=metrics.t_count,
        routers_activated=activated,
        address_qubits=n,
        communicated_qubits=communicated_qubits(n_cells, m, extra_communication),
    )
