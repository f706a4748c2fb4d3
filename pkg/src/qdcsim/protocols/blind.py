"""Blind computation through a select oracle sum_i |i><i| (x) U_i."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .. import core
from ..core import GateOp, MixedEnsemble, PureState, RegisterLayout


def select_oracle(unitaries: Sequence[np.ndarray], n_address: int | None = None) -> tuple[GateOp, int, int]:
    """Block-diagonal select gate over (address, work); returns (gate, n_address, n_work).

    Address slots beyond ``len(unitaries)`` act as identity.
    """
    mats = [np.asarray(u, dtype=complex) for u in unitaries]
    if not mats:
        raise ValueError("need at least one unitary")
    dim_w = mats[0].shape[0]
    if any(u.shape != (dim_w, dim_w) for u in mats):
        raise ValueError("all U_i must act on the same number of qubits")
    n_work = int(math.log2(dim_w))
    if 2**n_work != dim_w or n_work not in (1, 2):
        raise ValueError("U_i must be single- or two-qubit unitaries")
    n = max(1, math.ceil(math.log2(len(mats)))) if n_address is None else n_address
    if len(mats) > 2**n:
        raise ValueError(f"{len(mats)} unitaries do not fit {n} address qubits")
    dim_a = 2**n
    big = np.zeros((dim_a * dim_w,) * 2, dtype=complex)
    for a in range(dim_a):
        u = mats[a] if a < len(mats) else np.eye(dim_w)
        # index = address + dim_a * work (address sites are least significant)
        big[a::dim_a, a::dim_a] = u
    gate = GateOp(tuple(range(n + n_work)), big, "SELECT")
    return gate, n, n_work


def blind_select(unitaries: Sequence[np.ndarray], address_state, work_state) -> PureState:
    gate, n, n_work = select_oracle(unitaries)
    address = np.asarray(address_state, dtype=complex).reshape(-1)
    work = np.asarray(work_state, dtype=complex).reshape(-1)
    if address.shape[0] != 2**n or work.shape[0] != 2**n_work:
        raise ValueError("address/work dimensions do not match the select oracle")
    layout = RegisterLayout.from_segments(("addr", n), ("work", n_work))
    state = PureState.from_vector(layout, np.kron(work, address))
    return core.apply_gate(state, gate)


def blind_detection_probability(unitaries: Sequence[np.ndarray], index: int, work_state,
                                strategy: str = "measure") -> float:
    """Cheat-detection probability for a superposed request (|i> + |0>)/sqrt(2).

    ``strategy`` is ``"honest"`` or ``"measure"`` (Bob measures the address
    before applying the select oracle).  Alice projects onto the honest output.
    """
    gate, n, n_work = select_oracle(unitaries)
    addr = np.zeros(2**n, dtype=complex)
    addr[index] += 1
    addr[0] += 1
    addr /= np.linalg.norm(addr)
    work = np.asarray(work_state, dtype=complex).reshape(-1)
    layout = RegisterLayout.from_segments(("addr", n), ("work", n_work))
    query = PureState.from_vector(layout, np.kron(work, addr))
    expected = core.apply_gate(query, gate)
    if strategy == "honest":
        returned = MixedEnsemble.pure(expected)
    elif strategy == "measure":
        probs = core.marginal_probabilities(query, layout["addr"])
        branches = []
        for a, p in enumerate(probs):
            if p > core.ATOL:
                _, collapsed, prob = core.measure_sites(
                    query, layout["addr"], outcome=[(a >> j) & 1 for j in range(n)]
                )
                branches.append((prob, core.apply_gate(collapsed, gate)))
        returned = MixedEnsemble(tuple(branches))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    passed = sum(p * core.fidelity(expected, s) for p, s in returned.branches)
    return max(0.0, 1.0 - passed)
