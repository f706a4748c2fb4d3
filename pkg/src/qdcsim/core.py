"""Exact pure-state simulation on registers of qubits and qutrits.

Basis convention (used everywhere in the package): little-endian mixed radix.
Site 0 is the least-significant digit, so for a layout with local dimensions
``(d0, d1, ..., dk)`` the basis label ``(j0, j1, ..., jk)`` lives at amplitude
index ``j0 + d0*j1 + d0*d1*j2 + ...``.  Gate matrices follow the same rule over
their own target list: the first target is the least-significant digit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

ATOL = 1e-10
DEFAULT_DENSITY_CAP = 3**6


class SimulationError(ValueError):
    """Raised for invalid states, gates, or measurement requests."""


# ---------------------------------------------------------------------------
# Layout and states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegisterLayout:
    dims: tuple[int, ...]
    segments: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if any(d not in (2, 3) for d in dims):
            raise SimulationError(f"local dimensions must be 2 or 3, got {dims}")
        object.__setattr__(self, "dims", dims)
        segs = {name: tuple(int(s) for s in sites) for name, sites in self.segments.items()}
        seen: set[int] = set()
        for name, sites in segs.items():
            for s in sites:
                if not 0 <= s < len(dims):
                    raise SimulationError(f"segment {name!r} refers to missing site {s}")
                if s in seen:
                    raise SimulationError(f"segments overlap at site {s}")
                seen.add(s)
        object.__setattr__(self, "segments", segs)

    @classmethod
    def from_segments(cls, *parts: tuple[str, int | Sequence[int]]) -> "RegisterLayout":
        """Build a layout from ``(name, dims)`` pairs laid out in order.

        ``dims`` may be a qubit count or an explicit list of local dimensions.
        """
        dims: list[int] = []
        segs: dict[str, tuple[int, ...]] = {}
        for name, spec in parts:
            local = [2] * spec if isinstance(spec, int) else list(spec)
            segs[name] = tuple(range(len(dims), len(dims) + len(local)))
            dims.extend(local)
        return cls(tuple(dims), segs)

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def __getitem__(self, name: str) -> tuple[int, ...]:
        return self.segments[name]

    def strides(self) -> list[int]:
        out, acc = [], 1
        for d in self.dims:
            out.append(acc)
            acc *= d
        return out

    def index(self, digits: Sequence[int]) -> int:
        if len(digits) != self.n_sites:
            raise SimulationError("digit count does not match layout")
        idx = 0
        for digit, d, stride in zip(digits, self.dims, self.strides()):
            if not 0 <= digit < d:
                raise SimulationError(f"digit {digit} out of range for dimension {d}")
            idx += digit * stride
        return idx

    def digits(self, index: int) -> tuple[int, ...]:
        out = []
        for d in self.dims:
            index, r = divmod(index, d)
            out.append(r)
        return tuple(out)

    def extend(self, name: str, spec: int | Sequence[int]) -> "RegisterLayout":
        """Return a layout with a new segment appended after the existing sites."""
        local = [2] * spec if isinstance(spec, int) else list(spec)
        segs = dict(self.segments)
        segs[name] = tuple(range(self.n_sites, self.n_sites + len(local)))
        return RegisterLayout(self.dims + tuple(local), segs)


@dataclass(frozen=True)
class PureState:
    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.layout.total_dim:
            raise SimulationError(
                f"amplitude length {amps.shape[0]} != layout dimension {self.layout.total_dim}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > ATOL:
            raise SimulationError(f"state is not normalized (norm={norm!r})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, layout: RegisterLayout, digits: Sequence[int] | None = None) -> "PureState":
        amps = np.zeros(layout.total_dim, dtype=complex)
        amps[0 if digits is None else layout.index(digits)] = 1.0
        return cls(layout, amps)

    @classmethod
    def from_vector(cls, layout: RegisterLayout, vec, normalize: bool = False) -> "PureState":
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise SimulationError("cannot normalize the zero vector")
            vec = vec / norm
        return cls(layout, vec)

    @classmethod
    def product(cls, layout: RegisterLayout, factors: Sequence) -> "PureState":
        """Tensor product of one local vector per site, in site order."""
        if len(factors) != layout.n_sites:
            raise SimulationError("need one factor per site")
        vec = np.ones(1, dtype=complex)
        for f in factors:
            # site 0 is least significant, so later sites go on the left
            vec = np.kron(np.asarray(f, dtype=complex), vec)
        return cls(layout, vec)

    @property
    def n_sites(self) -> int:
        return self.layout.n_sites

    def tensor(self, other: "PureState", name_map: Mapping[str, str] | None = None) -> "PureState":
        """Append ``other``'s sites after this state's sites."""
        offset = self.n_sites
        segs = dict(self.layout.segments)
        for name, sites in other.layout.segments.items():
            new = (name_map or {}).get(name, name)
            if new in segs:
                raise SimulationError(f"segment name clash: {new!r}")
            segs[new] = tuple(s + offset for s in sites)
        layout = RegisterLayout(self.layout.dims + other.layout.dims, segs)
        return PureState(layout, np.kron(other.amplitudes, self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def random_state(layout: RegisterLayout, rng: np.random.Generator) -> PureState:
    """Haar-random pure state over the full register."""
    vec = rng.normal(size=layout.total_dim) + 1j * rng.normal(size=layout.total_dim)
    return PureState.from_vector(layout, vec, normalize=True)


def fidelity(a, b) -> float:
    """|<a|b>|^2 for two pure states (PureState or raw vectors)."""
    va = a.amplitudes if isinstance(a, PureState) else np.asarray(a, dtype=complex)
    vb = b.amplitudes if isinstance(b, PureState) else np.asarray(b, dtype=complex)
    return float(abs(np.vdot(va, vb)) ** 2)


@dataclass(frozen=True)
class MixedEnsemble:
    branches: tuple[tuple[float, PureState], ...]

    def __post_init__(self):
        branches = tuple((float(p), s) for p, s in self.branches)
        if not branches:
            raise SimulationError("ensemble needs at least one branch")
        layout = branches[0][1].layout
        for p, s in branches:
            if p < -ATOL:
                raise SimulationError("negative branch probability")
            if s.layout.dims != layout.dims:
                raise SimulationError("branches must share one layout")
        total = sum(p for p, _ in branches)
        if abs(total - 1.0) > ATOL:
            raise SimulationError(f"branch probabilities sum to {total}")
        object.__setattr__(self, "branches", branches)

    @classmethod
    def pure(cls, state: PureState) -> "MixedEnsemble":
        return cls(((1.0, state),))

    @property
    def layout(self) -> RegisterLayout:
        return self.branches[0][1].layout

    def density_matrix(self) -> np.ndarray:
        rho = np.zeros((self.layout.total_dim,) * 2, dtype=complex)
        for p, s in self.branches:
            rho += p * np.outer(s.amplitudes, s.amplitudes.conj())
        return rho

    def sample(self, rng: np.random.Generator) -> PureState:
        probs = np.array([p for p, _ in self.branches])
        k = rng.choice(len(probs), p=probs / probs.sum())
        return self.branches[k][1]


# ---------------------------------------------------------------------------
# Gates and circuits
# ---------------------------------------------------------------------------

# ids of library matrices already known to be unitary; skips re-validation
_TRUSTED: dict[int, np.ndarray] = {}


def _trusted(matrix: np.ndarray) -> np.ndarray:
    _check_unitary(matrix)
    matrix.setflags(write=False)
    _TRUSTED[id(matrix)] = matrix
    return matrix


def _check_unitary(matrix: np.ndarray) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise SimulationError(f"gate matrix must be square, got shape {matrix.shape}")
    err = np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0])).max()
    if err > ATOL:
        raise SimulationError(f"gate matrix is not unitary (max deviation {err:.3g})")


@dataclass(frozen=True)
class GateOp:
    targets: tuple[int, ...]
    matrix: np.ndarray
    label: str = "U"
    t_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(set(self.targets)) != len(self.targets):
            raise SimulationError(f"repeated target in {self.targets}")
        if self.t_count < 0:
            raise SimulationError("t_count must be non-negative")
        if id(self.matrix) not in _TRUSTED:
            m = np.asarray(self.matrix, dtype=complex)
            _check_unitary(m)
            object.__setattr__(self, "matrix", m)

    def dagger(self) -> "GateOp":
        m = self.matrix
        inv = m if _is_self_inverse(m) else m.conj().T
        return GateOp(self.targets, inv, self.label if inv is m else self.label + "_dg", self.t_count)

    def check_layout(self, layout: RegisterLayout) -> None:
        for t in self.targets:
            if not 0 <= t < layout.n_sites:
                raise SimulationError(f"gate {self.label} targets missing site {t}")
        dim = math.prod(layout.dims[t] for t in self.targets)
        if dim != self.matrix.shape[0]:
            raise SimulationError(
                f"gate {self.label} has dimension {self.matrix.shape[0]}, targets span {dim}"
            )


_SELF_INVERSE: dict[int, bool] = {}


def _is_self_inverse(m: np.ndarray) -> bool:
    key = id(m)
    if key in _TRUSTED and key in _SELF_INVERSE:
        return _SELF_INVERSE[key]
    val = bool(np.allclose(m @ m, np.eye(m.shape[0]), atol=ATOL))
    if key in _TRUSTED:
        _SELF_INVERSE[key] = val
    return val


def permutation_matrix(perm: Sequence[int]) -> np.ndarray:
    """Unitary sending basis ``j`` to basis ``perm[j]``."""
    dim = len(perm)
    m = np.zeros((dim, dim), dtype=complex)
    m[list(perm), list(range(dim))] = 1.0
    return m


_S2 = 1 / math.sqrt(2)
I2 = _trusted(np.eye(2, dtype=complex))
X = _trusted(np.array([[0, 1], [1, 0]], dtype=complex))
Y = _trusted(np.array([[0, -1j], [1j, 0]], dtype=complex))
Z = _trusted(np.array([[1, 0], [0, -1]], dtype=complex))
H = _trusted(np.array([[1, 1], [1, -1]], dtype=complex) * _S2)
S = _trusted(np.diag([1, 1j]).astype(complex))
T = _trusted(np.diag([1, np.exp(1j * math.pi / 4)]).astype(complex))
# control is the first target (least significant digit)
CNOT = _trusted(permutation_matrix([0, 3, 2, 1]))
SWAP = _trusted(permutation_matrix([0, 2, 1, 3]))
CZ = _trusted(np.diag([1, 1, 1, -1]).astype(complex))
# Toffoli: targets (c0, c1, t); flips t when both controls are 1 (indices 3 <-> 7)
TOFFOLI = _trusted(permutation_matrix([0, 1, 2, 7, 4, 5, 6, 3]))
# Fredkin: targets (c, a, b); swaps a, b when c is 1 (indices 3 <-> 5)
CSWAP = _trusted(permutation_matrix([0, 1, 2, 5, 4, 3, 6, 7]))

# Clifford+T accounting: Toffoli = 7 T, controlled-SWAP = one Toffoli + 2 CNOT = 7 T
TOFFOLI_T = 7
CSWAP_T = 7


def x(q: int) -> GateOp:
    return GateOp((q,), X, "X")


def h(q: int) -> GateOp:
    return GateOp((q,), H, "H")


def z(q: int) -> GateOp:
    return GateOp((q,), Z, "Z")


def t_gate(q: int) -> GateOp:
    return GateOp((q,), T, "T", 1)


def cnot(control: int, target: int) -> GateOp:
    return GateOp((control, target), CNOT, "CNOT")


def cz(a: int, b: int) -> GateOp:
    return GateOp((a, b), CZ, "CZ")


def swap(a: int, b: int) -> GateOp:
    return GateOp((a, b), SWAP, "SWAP")


def toffoli(c0: int, c1: int, target: int) -> GateOp:
    return GateOp((c0, c1, target), TOFFOLI, "TOFFOLI", TOFFOLI_T)


def cswap(control: int, a: int, b: int) -> GateOp:
    return GateOp((control, a, b), CSWAP, "CSWAP", CSWAP_T)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


@dataclass
class Circuit:
    layout: RegisterLayout
    gates: list[GateOp] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            g.check_layout(self.layout)

    def append(self, gate: GateOp) -> "Circuit":
        gate.check_layout(self.layout)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[GateOp]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(self.layout, [g.dagger() for g in reversed(self.gates)])

    def __len__(self) -> int:
        return len(self.gates)

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layout": {
                "dims": list(self.layout.dims),
                "segments": {k: list(v) for k, v in self.layout.segments.items()},
            },
            "gates": [
                {
                    "label": g.label,
                    "targets": list(g.targets),
                    "matrix": [[[float(v.real), float(v.imag)] for v in row] for row in g.matrix],
                    "t_count": g.t_count,
                }
                for g in self.gates
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        layout = RegisterLayout(tuple(data["layout"]["dims"]), data["layout"].get("segments", {}))
        gates = []
        for g in data["gates"]:
            m = np.array([[complex(re, im) for re, im in row] for row in g["matrix"]])
            gates.append(GateOp(tuple(g["targets"]), m, g["label"], int(g["t_count"])))
        return cls(layout, gates)

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _apply_matrix(amps: np.ndarray, dims: tuple[int, ...], targets: Sequence[int], matrix) -> np.ndarray:
    n = len(dims)
    psi = amps.reshape(dims[::-1])
    axes = [n - 1 - t for t in reversed(targets)]
    rest = [a for a in range(n) if a not in axes]
    order = axes + rest
    psi = np.transpose(psi, order)
    shape = psi.shape
    out = (matrix @ psi.reshape(matrix.shape[0], -1)).reshape(shape)
    return np.transpose(out, np.argsort(order)).reshape(-1)


def apply_gate(state: PureState, gate: GateOp) -> PureState:
    gate.check_layout(state.layout)
    out = _apply_matrix(state.amplitudes, state.layout.dims, gate.targets, gate.matrix)
    return PureState(state.layout, out)


def run_circuit(state: PureState, circuit: Circuit) -> PureState:
    if state.layout.dims != circuit.layout.dims:
        raise SimulationError("state and circuit layouts differ")
    amps = state.amplitudes
    dims = state.layout.dims
    for g in circuit.gates:
        amps = _apply_matrix(amps, dims, g.targets, g.matrix)
    return PureState(state.layout, amps)


def _sparse_columns(gate: GateOp) -> list[list[tuple[int, complex]]]:
    m = gate.matrix
    cols = []
    for j in range(m.shape[1]):
        nz = np.flatnonzero(np.abs(m[:, j]) > 0)
        cols.append([(int(i), complex(m[i, j])) for i in nz])
    return cols


def run_circuit_sparse(
    amplitudes: Mapping[int, complex], circuit: Circuit, prune: float = 1e-14
) -> dict[int, complex]:
    """Evolve a sparse amplitude map ``{basis index: amplitude}`` through a circuit.

    Memory scales with the state's support rather than the register size, so
    permutation-heavy circuits (routers, ancilla trees) can be simulated exactly
    at widths far beyond the dense limit.
    """
    layout = circuit.layout
    strides = layout.strides()
    state = {int(k): complex(v) for k, v in amplitudes.items()}
    col_cache: dict[int, list] = {}
    for g in circuit.gates:
        key = id(g.matrix)
        cols = col_cache.get(key)
        if cols is None:
            cols = col_cache[key] = _sparse_columns(g)
        tdims = [layout.dims[t] for t in g.targets]
        tstrides = [strides[t] for t in g.targets]
        local_strides = []
        acc = 1
        for d in tdims:
            local_strides.append(acc)
            acc *= d
        out: dict[int, complex] = {}
        for b, amp in state.items():
            local = 0
            base = b
            for d, st, ls in zip(tdims, tstrides, local_strides):
                digit = (b // st) % d
                local += digit * ls
                base -= digit * st
            for loc_out, m in cols[local]:
                nb = base
                rem = loc_out
                for d, st in zip(tdims, tstrides):
                    rem, digit = divmod(rem, d)
                    nb += digit * st
                out[nb] = out.get(nb, 0j) + m * amp
        state = {k: v for k, v in out.items() if abs(v) > prune}
    return state


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def marginal_probabilities(state: PureState, sites: Sequence[int]) -> np.ndarray:
    """Joint Born distribution over ``sites`` (first site least significant)."""
    n = state.n_sites
    dims = state.layout.dims
    p = state.probabilities().reshape(dims[::-1])
    keep = [n - 1 - s for s in reversed(sites)]
    drop = tuple(a for a in range(n) if a not in keep)
    p = p.sum(axis=drop) if drop else p
    # sum keeps remaining axes in increasing order; reorder to requested order
    remaining = sorted(keep)
    p = np.transpose(p, [remaining.index(a) for a in keep])
    return p.reshape(-1)


def measure_sites(state: PureState, sites: Sequence[int], seed=None, outcome: Sequence[int] | None = None):
    """Projectively measure ``sites`` in the computational basis.

    Returns ``(outcome digits, collapsed state, probability)``.  When ``outcome``
    is given that branch is selected instead of sampled; a zero-probability
    branch raises.
    """
    sites = list(sites)
    for s in sites:
        if not 0 <= s < state.n_sites:
            raise SimulationError(f"cannot measure missing site {s}")
    sub = [state.layout.dims[s] for s in sites]
    probs = marginal_probabilities(state, sites)
    if outcome is None:
        rng = _rng(seed)
        k = int(rng.choice(len(probs), p=probs / probs.sum()))
        digits = []
        rem = k
        for d in sub:
            rem, r = divmod(rem, d)
            digits.append(r)
        outcome = tuple(digits)
    else:
        outcome = tuple(int(o) for o in outcome)
        k = sum(o * math.prod(sub[:j]) for j, o in enumerate(outcome))
    p = float(probs[k])
    if p <= ATOL:
        raise SimulationError(f"outcome {outcome} has zero probability")
    mask = np.ones(state.layout.total_dim, dtype=bool)
    strides = state.layout.strides()
    idx = np.arange(state.layout.total_dim)
    for s, o in zip(sites, outcome):
        mask &= (idx // strides[s]) % state.layout.dims[s] == o
    amps = np.where(mask, state.amplitudes, 0) / math.sqrt(p)
    return outcome, PureState(state.layout, amps), p


def reduced_density(state, sites: Sequence[int], cap: int = DEFAULT_DENSITY_CAP) -> np.ndarray:
    """Density matrix of ``sites`` with everything else traced out.

    Accepts a PureState or a MixedEnsemble.  The result is indexed with the
    first listed site as least-significant digit.
    """
    if isinstance(state, MixedEnsemble):
        rho = None
        for p, s in state.branches:
            part = p * reduced_density(s, sites, cap)
            rho = part if rho is None else rho + part
        return rho
    sites = list(sites)
    n = state.n_sites
    dims = state.layout.dims
    if len(set(sites)) != len(sites) or any(not 0 <= s < n for s in sites):
        raise SimulationError(f"invalid site list {sites}")
    dim = math.prod(dims[s] for s in sites)
    if dim > cap:
        raise SimulationError(f"reduced dimension {dim} exceeds cap {cap}")
    psi = state.amplitudes.reshape(dims[::-1])
    keep = [n - 1 - s for s in reversed(sites)]
    rest = [a for a in range(n) if a not in keep]
    psi = np.transpose(psi, keep + rest).reshape(dim, -1)
    return psi @ psi.conj().T


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(rho - sigma)
    return float(0.5 * np.abs(ev).sum())


def von_neumann_entropy(rho: np.ndarray, base: float = 2.0) -> float:
    ev = np.linalg.eigvalsh(rho)
    ev = ev[ev > 1e-15]
    return float(-(ev * np.log(ev)).sum() / math.log(base))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CircuitMetrics:
    depth: int
    width: int
    t_count: int
    gate_count: int


def circuit_metrics(circuit: Circuit) -> CircuitMetrics:
    """Greedy ASAP layering: each gate sits one layer after the latest gate sharing a site."""
    level: dict[int, int] = {}
    depth = 0
    t_count = 0
    for g in circuit.gates:
        layer = 1 + max((level.get(t, 0) for t in g.targets), default=0)
        for t in g.targets:
            level[t] = layer
        depth = max(depth, layer)
        t_count += g.t_count
    return CircuitMetrics(depth=depth, width=len(level), t_count=t_count, gate_count=len(circuit.gates))


# ---------------------------------------------------------------------------
# Register surgery
# ---------------------------------------------------------------------------


def drop_sites(state: PureState, sites: Sequence[int]) -> PureState:
    """Remove ``sites`` that are in a definite computational-basis product state.

    Raises if the sites are entangled with the rest or in superposition.
    """
    sites = sorted(set(int(s) for s in sites))
    if not sites:
        return state
    probs = marginal_probabilities(state, sites)
    k = int(np.argmax(probs))
    if probs[k] < 1 - ATOL:
        raise SimulationError(f"sites {sites} are not in a definite basis state")
    sub = [state.layout.dims[s] for s in sites]
    outcome, rem = [], k
    for d in sub:
        rem, r = divmod(rem, d)
        outcome.append(r)
    n = state.n_sites
    psi = state.amplitudes.reshape(state.layout.dims[::-1])
    index = [slice(None)] * n
    for s, o in zip(sites, outcome):
        index[n - 1 - s] = o
    amps = psi[tuple(index)].reshape(-1)
    keep = [s for s in range(n) if s not in sites]
    remap = {old: new for new, old in enumerate(keep)}
    segs = {}
    for name, segsites in state.layout.segments.items():
        left = tuple(remap[s] for s in segsites if s in remap)
        if left:
            segs[name] = left
    layout = RegisterLayout(tuple(state.layout.dims[s] for s in keep), segs)
    return PureState(layout, amps / np.linalg.norm(amps))


def with_segments(state: PureState, segments: Mapping[str, Sequence[int]]) -> PureState:
    """Same amplitudes, different segment naming."""
    return PureState(RegisterLayout(state.layout.dims, segments), state.amplitudes)


def append_zeros(state: PureState, name: str, count: int) -> PureState:
    """Append ``count`` qubits in |0> as a new segment."""
    zero = np.zeros(2**count, dtype=complex)
    zero[0] = 1
    layout = state.layout.extend(name, count)
    return PureState(layout, np.kron(zero, state.amplitudes))
