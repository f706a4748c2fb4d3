"""Single-excitation data compression for network transmission.

An N-qubit state supported on the vacuum and the N single-excitation basis
states is mapped unitarily to ``ceil(log2 N)`` address qubits plus a presence
flag; the remaining qubits end in |0> and are not transmitted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import core
from ..core import PureState, RegisterLayout
from ..network import Channel, teleport_state


class CompressionError(ValueError):
    pass


def address_qubits(n_qubits: int) -> int:
    return max(1, math.ceil(math.log2(n_qubits)))


@lru_cache(maxsize=None)
def compression_permutation(n_qubits: int) -> np.ndarray:
    """Basis permutation: vacuum -> |flag=0, addr=0>, excitation at qubit j -> |flag=1, addr=j>.

    Address occupies sites 0..a-1, the flag site a, all others stay 0.  Every
    other basis state is assigned to the leftover targets in increasing order.
    """
    if n_qubits < 2:
        raise CompressionError("need at least two qubits")
    a = address_qubits(n_qubits)
    dim = 2**n_qubits
    perm = np.full(dim, -1, dtype=np.int64)
    perm[0] = 0
    for j in range(n_qubits):
        perm[1 << j] = j + (1 << a)
    used = set(perm[perm >= 0].tolist())
    free = (t for t in range(dim) if t not in used)
    for idx in range(dim):
        if perm[idx] < 0:
            perm[idx] = next(free)
    perm.setflags(write=False)
    return perm


@dataclass(frozen=True)
class CompressedExcitation:
    state: PureState  # segments "address" and "flag"
    n_qubits: int

    @property
    def transmitted_qubits(self) -> int:
        return self.state.n_sites


def admissible_population(state: PureState) -> float:
    amps = state.amplitudes
    idx = [0] + [1 << j for j in range(state.n_sites)]
    return float(np.sum(np.abs(amps[idx]) ** 2))


def compress_single_excitation(state: PureState) -> CompressedExcitation:
    n = state.n_sites
    if any(d != 2 for d in state.layout.dims):
        raise CompressionError("compression acts on qubits")
    leak = 1.0 - admissible_population(state)
    if leak > core.ATOL:
        raise CompressionError(f"population {leak:.3g} outside the vacuum + single-excitation subspace")
    perm = compression_permutation(n)
    out = np.zeros_like(state.amplitudes)
    out[perm] = state.amplitudes
    a = address_qubits(n)
    layout = RegisterLayout.from_segments(("address", a), ("flag", 1), ("idle", n - a - 1))
    full = PureState(layout, out)
    compact = core.drop_sites(full, layout.segments.get("idle", ()))
    return CompressedExcitation(compact, n)


def decompress(compressed: CompressedExcitation) -> PureState:
    n = compressed.n_qubits
    a = address_qubits(n)
    state = compressed.state
    if n - a - 1:
        state = core.append_zeros(state, "idle", n - a - 1)
    perm = compression_permutation(n)
    out = state.amplitudes[perm]
    return PureState(RegisterLayout.from_segments(("q", n)), out)


def single_excitation_state(coefficients, vacuum: complex = 0.0) -> PureState:
    """sum_j c_j |e_j> + vacuum |0...0>, normalized; e_j has qubit j excited."""
    c = np.asarray(coefficients, dtype=complex).reshape(-1)
    n = len(c)
    vec = np.zeros(2**n, dtype=complex)
    vec[0] = vacuum
    for j, cj in enumerate(c):
        vec[1 << j] = cj
    return PureState.from_vector(RegisterLayout.from_segments(("q", n)), vec, normalize=True)


def random_single_excitation(n_qubits: int, rng: np.random.Generator, with_vacuum: bool = True) -> PureState:
    c = rng.normal(size=n_qubits) + 1j * rng.normal(size=n_qubits)
    vac = complex(rng.normal(), rng.normal()) if with_vacuum else 0.0
    return single_excitation_state(c, vac)


@dataclass(frozen=True)
class TransmissionResult:
    delivered: PureState
    bell_pairs_compressed: int
    bell_pairs_uncompressed: int
    arrival_time: float


def transmit_compressed(state: PureState, channel: Channel, rng=None, start_time: float = 0.0) -> TransmissionResult:
    """Compress, teleport only the address and flag, and decompress at the far end."""
    comp = compress_single_excitation(state)
    moved, record = teleport_state(comp.state, range(comp.state.n_sites), channel, rng, start_time)
    delivered = decompress(CompressedExcitation(moved, comp.n_qubits))
    return TransmissionResult(delivered, record.pairs_used, state.n_sites, record.arrival_time)
