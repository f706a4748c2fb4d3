"""Quantum private query with superposition decoys.

Alice sends either ``|i>`` (direct) or ``(|i> + |0>)/sqrt(2)`` (superposed) as the
address.  Row 0 of the memory is public, so in superposed rounds Alice knows
the honest answer ``(|i>|x_i> + |0>|x_0>)/sqrt(2)`` and projects onto it; any
orthogonal outcome flags cheating.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import core
from ..core import MixedEnsemble, PureState
from ..qram import MemorySpec, oracle_layout, oracle_unitary_classical


class Mode(enum.Enum):
    DIRECT = "direct"
    SUPERPOSED = "superposed"


class Verdict(enum.Enum):
    PASS = "pass"
    CHEAT_DETECTED = "cheat_detected"


# A strategy maps Alice's query state (over Q1 then Q2) to what Bob sends back.
Strategy = Callable[[PureState, MemorySpec], MixedEnsemble]


def honest(query: PureState, memory: MemorySpec) -> MixedEnsemble:
    return MixedEnsemble.pure(core.apply_gate(query, oracle_unitary_classical(memory)))


def measure_address(query: PureState, memory: MemorySpec) -> MixedEnsemble:
    """Bob measures Q1 in the computational basis, then answers honestly."""
    q1 = list(query.layout["Q1"])
    probs = core.marginal_probabilities(query, q1)
    oracle = oracle_unitary_classical(memory)
    branches = []
    for a, p in enumerate(probs):
        if p <= core.ATOL:
            continue
        digits = [(a >> j) & 1 for j in range(len(q1))]
        _, collapsed, prob = core.measure_sites(query, q1, outcome=digits)
        branches.append((prob, core.apply_gate(collapsed, oracle)))
    total = sum(p for p, _ in branches)
    return MixedEnsemble(tuple((p / total, s) for p, s in branches))


def garbage(query: PureState, memory: MemorySpec) -> MixedEnsemble:
    """Bob discards the address and returns a uniformly random basis state."""
    dim = query.layout.total_dim
    return MixedEnsemble(tuple((1.0 / dim, PureState.basis(query.layout, query.layout.digits(k))) for k in range(dim)))


STRATEGIES: dict[str, Strategy] = {"honest": honest, "measure": measure_address, "garbage": garbage}


def query_state(memory: MemorySpec, index: int, mode: Mode) -> PureState:
    n_cells = memory.size
    if not 0 <= index < n_cells:
        raise ValueError(f"index {index} outside [0, {n_cells})")
    layout = oracle_layout(n_cells, memory.m)
    vec = np.zeros(layout.total_dim, dtype=complex)
    vec[index] += 1
    if mode is Mode.SUPERPOSED:
        vec[0] += 1
    return PureState.from_vector(layout, vec, normalize=True)


def expected_answer(memory: MemorySpec, index: int, mode: Mode) -> PureState:
    return honest(query_state(memory, index, mode), memory).branches[0][1]


def pass_probability(expected: PureState, returned: MixedEnsemble) -> float:
    """Probability that projecting onto ``expected`` succeeds."""
    return float(sum(p * core.fidelity(expected, s) for p, s in returned.branches))


def qpq_detection_probability(strategy: Strategy | str, memory: MemorySpec, index: int,
                              mode: Mode = Mode.SUPERPOSED, max_dim: int = 2**12) -> float:
    """Exact probability that Alice's verification flags ``strategy``."""
    if isinstance(strategy, str):
        strategy = STRATEGIES[strategy]
    layout = oracle_layout(memory.size, memory.m)
    if layout.total_dim > max_dim:
        raise ValueError(f"system dimension {layout.total_dim} exceeds {max_dim}")
    query = query_state(memory, index, mode)
    returned = strategy(query, memory)
    return max(0.0, 1.0 - pass_probability(expected_answer(memory, index, mode), returned))


@dataclass
class QpqSession:
    index: int
    strategy: str = "honest"
    mode: Mode | None = None  # None: seeded coin per round
    seed: int | None = None
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.rng = np.random.default_rng(self.seed)


@dataclass(frozen=True)
class RoundResult:
    mode: Mode
    retrieved_word: int | None
    verdict: Verdict


class _Prepared:
    """Per-mode ensemble and verification statistics, computed once per session."""

    def __init__(self, session: QpqSession, memory: MemorySpec):
        self.by_mode = {}
        n = memory.n
        for mode in Mode:
            query = query_state(memory, session.index, mode)
            returned = STRATEGIES[session.strategy](query, memory)
            expected = expected_answer(memory, session.index, mode)
            probs = np.array([p for p, _ in returned.branches])
            passes = np.array([core.fidelity(expected, s) for _, s in returned.branches])
            words = [core.marginal_probabilities(s, s.layout["Q2"]) for _, s in returned.branches]
            self.by_mode[mode] = (probs / probs.sum(), passes, words)
        self.n = n


def qpq_round(session: QpqSession, memory: MemorySpec, prepared: _Prepared | None = None) -> RoundResult:
    rng = session.rng
    mode = session.mode
    if mode is None:
        mode = Mode.SUPERPOSED if rng.random() < 0.5 else Mode.DIRECT
    if prepared is None:
        prepared = _Prepared(session, memory)
    probs, passes, words = prepared.by_mode[mode]
    k = int(rng.choice(len(probs), p=probs))
    if mode is Mode.DIRECT:
        # Alice cannot verify a direct answer; she just reads the word
        dist = words[k]
        word = int(rng.choice(len(dist), p=dist / dist.sum()))
        return RoundResult(mode, word, Verdict.PASS)
    verdict = Verdict.PASS if rng.random() < passes[k] else Verdict.CHEAT_DETECTED
    return RoundResult(mode, None, verdict)


@dataclass(frozen=True)
class QpqReport:
    rounds: int
    detections: int
    superposed_rounds: int
    superposed_detections: int
    direct_rounds: int
    direct_detections: int
    correct_words: int

    @property
    def detection_rate(self) -> float:
        return self.detections / self.rounds if self.rounds else 0.0

    @property
    def superposed_detection_rate(self) -> float:
        return self.superposed_detections / self.superposed_rounds if self.superposed_rounds else 0.0


def run_qpq(memory: MemorySpec, index: int, rounds: int, strategy: str = "honest",
            seed: int | None = None, mode: Mode | None = None) -> QpqReport:
    session = QpqSession(index, strategy, mode, seed)
    prepared = _Prepared(session, memory)
    counts = {Mode.DIRECT: [0, 0], Mode.SUPERPOSED: [0, 0]}
    correct = 0
    for _ in range(rounds):
        r = qpq_round(session, memory, prepared)
        counts[r.mode][0] += 1
        counts[r.mode][1] += r.verdict is Verdict.CHEAT_DETECTED
        correct += r.retrieved_word == memory.words[index]
    detections = counts[Mode.DIRECT][1] + counts[Mode.SUPERPOSED][1]
    return QpqReport(
        rounds=rounds,
        detections=detections,
        superposed_rounds=counts[Mode.SUPERPOSED][0],
        superposed_detections=counts[Mode.SUPERPOSED][1],
        direct_rounds=counts[Mode.DIRECT][0],
        direct_detections=counts[Mode.DIRECT][1],
        correct_words=correct,
    )


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else math.inf
