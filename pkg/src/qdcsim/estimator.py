"""Surface-code resource model for offloading magic-state distillation.

Model (all quantities documented model choices, see README):

* data block: ``2L + ceil(sqrt(8L)) + 1`` tiles of ``2 d^2`` physical qubits;
* logical error per tile per code cycle: ``0.1 * (100 p) ** ((d + 1) / 2)``;
* one T gate consumed every ``d`` code cycles, so a bare run lasts ``t_count * d`` cycles;
* the failure budget is split evenly between distillation and the data block;
* without a QDC the user hosts ``ceil(cycles_per_state / d)`` factories of the
  chosen protocol, with ``d`` picked to minimize the total;
* with a QDC the user keeps the data block only, and every magic-state batch
  waits ``delay_time`` seconds, stretching the run and possibly forcing a
  larger ``d``.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .network import Channel, transmit_time
from .qram import communicated_qubits, query_cost

DEFAULT_CYCLE_TIME = 1e-6  # seconds per surface-code cycle
MAX_DISTANCE = 301
AXES = ("per_batch", "total")


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class AlgoSpec:
    logical_qubits: int = 100
    t_count: float = 1e8
    p: float = 1e-3
    target_failure: float = 0.01

    def __post_init__(self):
        if self.logical_qubits <= 0:
            raise EstimatorError("logical_qubits must be positive")
        if self.t_count < 0:
            raise EstimatorError("t_count must be non-negative")
        if not 0 < self.p < 0.01:
            raise EstimatorError("p must lie in (0, 1e-2), below the surface-code threshold")
        if not 0 < self.target_failure < 1:
            raise EstimatorError("target_failure must lie in (0, 1)")


@dataclass(frozen=True)
class DistillationProtocol:
    name: str
    footprint: int
    cycles: float
    p_out_ref: float
    exponent: float
    p_ref: float = 1e-3

    def __post_init__(self):
        if self.footprint <= 0 or self.cycles <= 0:
            raise EstimatorError(f"{self.name}: footprint and cycles must be positive")
        if self.p_out_ref <= 0 or self.exponent <= 0:
            raise EstimatorError(f"{self.name}: output error model must be increasing in p")

    def eps_out(self, p: float) -> float:
        return self.p_out_ref * (p / self.p_ref) ** self.exponent


def load_protocol_table(path: str | Path | None = None) -> list[DistillationProtocol]:
    """Read a protocol table; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("qdcsim.data").joinpath("distillation_protocols.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    p_ref = float(raw.get("p_ref", 1e-3))
    table = [
        DistillationProtocol(
            name=e["name"],
            footprint=int(e["footprint"]),
            cycles=float(e["cycles"]),
            p_out_ref=float(e["p_out_ref"]),
            exponent=float(e["exponent"]),
            p_ref=float(e.get("p_ref", p_ref)),
        )
        for e in raw["protocols"]
    ]
    if not table:
        raise EstimatorError("protocol table is empty")
    return table


def data_tiles(logical_qubits: int) -> int:
    return 2 * logical_qubits + math.ceil(math.sqrt(8 * logical_qubits)) + 1


def data_block_qubits(logical_qubits: int, d: int) -> int:
    return data_tiles(logical_qubits) * 2 * d * d


def logical_error_per_cycle(p: float, d: int) -> float:
    return 0.1 * (100 * p) ** ((d + 1) / 2)


def min_distance(algo: AlgoSpec, cycles: float) -> int:
    """Smallest odd d keeping the data block within half the failure budget."""
    budget = algo.target_failure / 2
    tiles = data_tiles(algo.logical_qubits)
    for d in range(3, MAX_DISTANCE + 1, 2):
        if tiles * cycles * logical_error_per_cycle(algo.p, d) <= budget:
            return d
    raise EstimatorError(f"no code distance up to {MAX_DISTANCE} meets the budget for {cycles:.3g} cycles")


def _distance_for_runtime(algo: AlgoSpec, extra_cycles_per_d) -> int:
    """Fixed point d = min_distance(t*d + extra); extra may depend on d."""
    for d in range(3, MAX_DISTANCE + 1, 2):
        if min_distance(algo, algo.t_count * d + extra_cycles_per_d(d)) <= d:
            return d
    raise EstimatorError("no consistent code distance")


@dataclass(frozen=True)
class FactoryChoice:
    protocol: DistillationProtocol | None
    n_factories: int

    @property
    def qubits(self) -> int:
        return 0 if self.protocol is None else self.protocol.footprint * self.n_factories

    @property
    def name(self) -> str:
        return "none" if self.protocol is None else self.protocol.name


def choose_factory(algo: AlgoSpec, table: Sequence[DistillationProtocol], d: int) -> FactoryChoice:
    """Cheapest protocol meeting the distillation budget; ties go to fewer cycles."""
    if algo.t_count == 0:
        return FactoryChoice(None, 0)
    budget = algo.target_failure / 2
    eligible = [pr for pr in table if pr.eps_out(algo.p) * algo.t_count <= budget]
    if not eligible:
        raise EstimatorError("no distillation protocol meets the error budget")
    options = [FactoryChoice(pr, math.ceil(pr.cycles / d)) for pr in eligible]
    return min(options, key=lambda f: (f.qubits, f.protocol.cycles, f.protocol.name))


@dataclass(frozen=True)
class LocalEstimate:
    distance: int
    data_qubits: int
    factory: FactoryChoice
    cycles: float
    runtime_s: float

    @property
    def total_qubits(self) -> int:
        return self.data_qubits + self.factory.qubits

    @property
    def protocol_name(self) -> str:
        return self.factory.name


def estimate_without_qdc(algo: AlgoSpec, table: Sequence[DistillationProtocol] | None = None,
                         cycle_time: float = DEFAULT_CYCLE_TIME) -> LocalEstimate:
    """Cheapest (data block + factories) over every feasible code distance.

    Any distance above the minimal one also meets the data budget, and larger
    d slows T consumption so fewer factories are needed; scanning all of them
    keeps the total monotone in the inputs.  Ties go to the smaller d.
    """
    table = load_protocol_table() if table is None else table
    best = None
    d = _distance_for_runtime(algo, lambda d: 0.0)
    while d <= MAX_DISTANCE:
        data = data_block_qubits(algo.logical_qubits, d)
        if best is not None and data >= best.total_qubits:
            break
        factory = choose_factory(algo, table, d)
        cycles = algo.t_count * d
        cand = LocalEstimate(d, data, factory, cycles, cycles * cycle_time)
        if best is None or cand.total_qubits < best.total_qubits:
            best = cand
        d += 2
    return best


@dataclass(frozen=True)
class ResourceEstimate:
    user_qubits_with_qdc: float
    user_qubits_without_qdc: int
    relative_qubit_number: float
    delay_time: float
    delay_factor: float
    distance_with_qdc: float
    distance_without_qdc: int
    protocol_without_qdc: str
    protocol_with_qdc: str
    axis: str = "per_batch"
    batch_size: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        d = self.distance_with_qdc
        return f"{self.protocol_with_qdc}/d={d if math.isinf(d) else int(d)}"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["label"] = self.label
        return out


def _waiting_cycles(algo: AlgoSpec, delay_time: float, axis: str, batch_size: int, cycle_time: float) -> float:
    if axis == "total":
        return delay_time / cycle_time
    return math.ceil(algo.t_count / batch_size) * delay_time / cycle_time


def estimate_for_delay(algo: AlgoSpec, delay_time: float, table: Sequence[DistillationProtocol] | None = None,
                       axis: str = "per_batch", batch_size: int = 1,
                       cycle_time: float = DEFAULT_CYCLE_TIME,
                       baseline: LocalEstimate | None = None) -> ResourceEstimate:
    """Offloaded estimate for a given delay.

    ``axis="per_batch"``: ``delay_time`` is added per magic-state batch of
    ``batch_size`` T states; ``axis="total"``: it is the total added wall-clock.
    """
    if axis not in AXES:
        raise EstimatorError(f"axis must be one of {AXES}")
    if delay_time < 0 or math.isnan(delay_time):
        raise EstimatorError("delay_time must be >= 0")
    if batch_size < 1:
        raise EstimatorError("batch_size must be >= 1")
    table = load_protocol_table() if table is None else table
    base = estimate_without_qdc(algo, table, cycle_time) if baseline is None else baseline
    if math.isinf(delay_time):
        inf = math.inf
        return ResourceEstimate(inf, base.total_qubits, inf, delay_time, inf, inf, base.distance,
                                base.protocol_name, base.protocol_name, axis, batch_size)
    wait = _waiting_cycles(algo, delay_time, axis, batch_size, cycle_time)
    d = _distance_for_runtime(algo, lambda _d: wait)
    user = data_block_qubits(algo.logical_qubits, d)
    bare = algo.t_count * d
    factor = (bare + wait) / bare if bare else 1.0
    # the remote factory still has to meet the distillation budget
    remote = choose_factory(algo, table, d)
    return ResourceEstimate(
        user_qubits_with_qdc=user,
        user_qubits_without_qdc=base.total_qubits,
        relative_qubit_number=user / base.total_qubits,
        delay_time=delay_time,
        delay_factor=factor,
        distance_with_qdc=d,
        distance_without_qdc=base.distance,
        protocol_without_qdc=base.protocol_name,
        protocol_with_qdc=remote.name,
        axis=axis,
        batch_size=batch_size,
    )


def estimate_with_qdc(algo: AlgoSpec, channel: Channel, table: Sequence[DistillationProtocol] | None = None,
                      batch_size: int = 1, buffered: bool = False,
                      cycle_time: float = DEFAULT_CYCLE_TIME) -> ResourceEstimate:
    """Delay per batch taken from the network transmit time of ``batch_size`` magic states."""
    delay = transmit_time(batch_size, channel, buffered=buffered)
    return estimate_for_delay(algo, delay, table, "per_batch", batch_size, cycle_time)


@dataclass(frozen=True)
class SweepPoint:
    delay_time_s: float
    relative_qubit_number: float
    protocol_name: str
    crossed_one: bool


@dataclass(frozen=True)
class DelayCurve:
    points: list[SweepPoint]
    critical_delay: float | None
    jumps: list[float]

    def to_rows(self) -> list[dict]:
        return [asdict(pt) for pt in self.points]


def sweep_delay(algo: AlgoSpec, delays: Iterable[float], table: Sequence[DistillationProtocol] | None = None,
                axis: str = "per_batch", batch_size: int = 1,
                cycle_time: float = DEFAULT_CYCLE_TIME) -> DelayCurve:
    """Relative qubit number over a delay grid, sorted by delay.

    ``jumps`` lists the delays where the step label changes; ``critical_delay``
    is the smallest grid delay with relative qubit number >= 1.
    """
    grid = sorted(float(x) for x in delays)
    if not grid:
        raise EstimatorError("delay grid is empty")
    table = load_protocol_table() if table is None else table
    base = estimate_without_qdc(algo, table, cycle_time)
    points, jumps = [], []
    prev_label = None
    for delay in grid:
        est = estimate_for_delay(algo, delay, table, axis, batch_size, cycle_time, baseline=base)
        rel = est.relative_qubit_number
        points.append(SweepPoint(delay, rel, est.label, rel >= 1.0))
        if prev_label is not None and est.label != prev_label:
            jumps.append(delay)
        prev_label = est.label
    critical = next((pt.delay_time_s for pt in points if pt.crossed_one), None)
    return DelayCurve(points, critical, jumps)


_GRID = re.compile(r"^\s*([^.:][^:]*?)\.\.([^:]+?)\s*(?::\s*(log|lin)(\d+))?\s*$")


def parse_grid(text: str) -> list[float]:
    """``"1e-6..1e0:log40"`` (log-spaced), ``"0..1:lin11"`` or a comma list."""
    if ".." not in text:
        try:
            return [float(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise EstimatorError(f"cannot parse grid {text!r}") from None
    match = _GRID.match(text)
    if match is None:
        raise EstimatorError(f"cannot parse grid {text!r}; expected lo..hi:logN or lo..hi:linN")
    try:
        lo, hi = float(match.group(1)), float(match.group(2))
    except ValueError:
        raise EstimatorError(f"cannot parse grid bounds in {text!r}") from None
    kind, count = match.group(3) or "lin", int(match.group(4) or 10)
    if count < 1:
        raise EstimatorError("grid needs at least one point")
    if kind == "log":
        if lo <= 0 or hi <= 0:
            raise EstimatorError("log grid bounds must be positive")
        return np.logspace(math.log10(lo), math.log10(hi), count).tolist()
    return np.linspace(lo, hi, count).tolist()


@dataclass(frozen=True)
class CostRow:
    n_cells: int
    communicated_qubits: int
    local_t_count: int
    lam: int


@dataclass(frozen=True)
class CostTable:
    rows: list[CostRow]
    communicated_slope_per_address_bit: float
    local_t_loglog_slope: float


def comm_vs_local_cost(n_values: Sequence[int], m: int = 1) -> CostTable:
    """Remote query (address + output qubits) versus local select-swap T-count at optimal lambda."""
    rows = []
    for n_cells in n_values:
        if n_cells < 2 or n_cells & (n_cells - 1):
            raise EstimatorError(f"N={n_cells} is not a power of two >= 2")
        acc = query_cost("selectswap", n_cells, m)
        rows.append(CostRow(n_cells, communicated_qubits(n_cells, m), acc.t_count, acc.lam))
    logs = np.log2([r.n_cells for r in rows])
    if len(rows) >= 2:
        comm_slope = float(np.polyfit(logs, [r.communicated_qubits for r in rows], 1)[0])
        t_slope = float(np.polyfit(logs, np.log2([max(r.local_t_count, 1) for r in rows]), 1)[0])
    else:
        comm_slope = t_slope = math.nan
    return CostTable(rows, comm_slope, t_slope)
