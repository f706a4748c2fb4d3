import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qdcsim import core
from qdcsim.core import Circuit, GateOp, PureState, RegisterLayout

SQ2 = 1 / math.sqrt(2)


def qubits(n, name="q"):
    return RegisterLayout.from_segments((name, n))


def test_layout_index_roundtrip_mixed_radix():
    layout = RegisterLayout.from_segments(("a", [2, 3]), ("b", [3]))
    assert layout.total_dim == 18
    for idx in range(18):
        assert layout.index(layout.digits(idx)) == idx
    # site 0 is least significant
    assert layout.index([1, 0, 0]) == 1
    assert layout.index([0, 1, 0]) == 2
    assert layout.index([0, 0, 1]) == 6


def test_layout_rejects_overlap_and_bad_dims():
    with pytest.raises(core.SimulationError):
        RegisterLayout((2, 2), {"a": (0,), "b": (0, 1)})
    with pytest.raises(core.SimulationError):
        RegisterLayout((2, 4))
    with pytest.raises(core.SimulationError):
        RegisterLayout((2,), {"a": (1,)})


def test_state_must_be_normalized():
    with pytest.raises(core.SimulationError):
        PureState(qubits(1), np.array([1, 1], dtype=complex))
    s = PureState.from_vector(qubits(1), [3, 4], normalize=True)
    assert np.allclose(s.amplitudes, [0.6, 0.8])


def test_x_flips_zero():
    s = core.apply_gate(PureState.basis(qubits(1)), core.x(0))
    assert np.allclose(s.amplitudes, [0, 1])


def test_identity_preserves_random_state():
    rng = np.random.default_rng(1)
    s = core.random_state(RegisterLayout((2, 3, 2)), rng)
    out = core.apply_gate(s, GateOp((1,), np.eye(3), "I3"))
    assert core.fidelity(s, out) == pytest.approx(1, abs=1e-12)


def test_bell_from_h_then_cnot():
    s = PureState.basis(qubits(2))
    s = core.apply_gate(s, core.h(0))
    s = core.apply_gate(s, core.cnot(0, 1))
    assert np.allclose(s.amplitudes, [SQ2, 0, 0, SQ2])


def test_non_unitary_gate_rejected():
    with pytest.raises(core.SimulationError):
        GateOp((0,), np.array([[1, 1], [0, 1]]), "bad")


def test_gate_dimension_mismatch_rejected():
    s = PureState.basis(RegisterLayout((3,)))
    with pytest.raises(core.SimulationError):
        core.apply_gate(s, core.x(0))


@pytest.mark.parametrize(
    "gate,targets",
    [(core.CNOT, (0, 1)), (core.CNOT, (2, 0)), (core.TOFFOLI, (2, 0, 1)), (core.CSWAP, (1, 2, 0)), (core.CZ, (0, 2))],
)
def test_gate_library_matches_kron_oracle(gate, targets):
    rng = np.random.default_rng(2)
    dims = (2, 2, 2)
    s = core.random_state(RegisterLayout(dims), rng)
    want = oracles.embed_gate(gate, targets, dims) @ s.amplitudes
    got = core.apply_gate(s, GateOp(targets, gate, "g")).amplitudes
    assert np.allclose(got, want, atol=1e-12)


def test_named_gate_semantics():
    # control is the first target: CNOT(0 -> 1) maps |q0=1, q1=0> to |1, 1>
    s = PureState.basis(qubits(2), [1, 0])
    assert np.allclose(core.apply_gate(s, core.cnot(0, 1)).amplitudes, [0, 0, 0, 1])
    s = PureState.basis(qubits(3), [1, 1, 0])
    assert core.apply_gate(s, core.toffoli(0, 1, 2)).amplitudes[7] == pytest.approx(1)
    s = PureState.basis(qubits(3), [1, 1, 0])
    assert core.apply_gate(s, core.cswap(0, 1, 2)).amplitudes[0b101] == pytest.approx(1)


def test_apply_on_qutrits_matches_oracle():
    rng = np.random.default_rng(3)
    dims = (3, 2, 3)
    u = np.linalg.qr(rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9)))[0]
    s = core.random_state(RegisterLayout(dims), rng)
    want = oracles.embed_gate(u, (2, 0), dims) @ s.amplitudes
    got = core.apply_gate(s, GateOp((2, 0), u, "U")).amplitudes
    assert np.allclose(got, want, atol=1e-12)


def test_empty_circuit_is_identity():
    rng = np.random.default_rng(4)
    s = core.random_state(qubits(3), rng)
    c = Circuit(qubits(3))
    assert np.array_equal(core.run_circuit(s, c).amplitudes, s.amplitudes)
    m = core.circuit_metrics(c)
    assert (m.depth, m.t_count) == (0, 0)


def _random_circuit(rng, n, length):
    c = Circuit(qubits(n))
    pool = [lambda: core.h(int(rng.integers(n))), lambda: core.t_gate(int(rng.integers(n)))]
    for _ in range(length):
        kind = rng.integers(4)
        if kind < 2:
            c.append(pool[kind]())
        else:
            a, b, t = rng.permutation(n)[:3]
            c.append(core.cnot(int(a), int(b)) if kind == 2 else core.toffoli(int(a), int(b), int(t)))
    return c


def test_circuit_then_inverse_is_identity():
    rng = np.random.default_rng(5)
    c = _random_circuit(rng, 4, 30)
    s = core.random_state(qubits(4), rng)
    back = core.run_circuit(core.run_circuit(s, c), c.inverse())
    assert core.fidelity(s, back) >= 1 - 1e-10


def test_run_circuit_matches_oracle_unitary():
    rng = np.random.default_rng(6)
    c = _random_circuit(rng, 4, 20)
    s = core.random_state(qubits(4), rng)
    u = oracles.circuit_unitary([(g.targets, g.matrix) for g in c.gates], (2,) * 4)
    assert np.allclose(core.run_circuit(s, c).amplitudes, u @ s.amplitudes, atol=1e-10)


def test_ghz_builder():
    c = Circuit(qubits(3), [core.h(0), core.cnot(0, 1), core.cnot(1, 2)])
    out = core.run_circuit(PureState.basis(qubits(3)), c)
    want = np.zeros(8)
    want[0] = want[7] = SQ2
    assert np.allclose(out.amplitudes, want)


def test_sparse_runner_agrees_with_dense():
    rng = np.random.default_rng(7)
    c = Circuit(qubits(5))
    for _ in range(40):
        a, b, t = (int(v) for v in rng.permutation(5)[:3])
        c.append([core.x(a), core.cnot(a, b), core.toffoli(a, b, t), core.cswap(a, b, t)][int(rng.integers(4))])
    s = core.random_state(qubits(5), rng)
    sparse = core.run_circuit_sparse({i: a for i, a in enumerate(s.amplitudes)}, c)
    dense = core.run_circuit(s, c).amplitudes
    vec = np.zeros(32, dtype=complex)
    for i, a in sparse.items():
        vec[i] = a
    assert np.allclose(vec, dense, atol=1e-12)


def test_circuit_json_roundtrip():
    rng = np.random.default_rng(8)
    c = _random_circuit(rng, 3, 10)
    back = Circuit.from_json(c.to_json())
    assert back.layout == c.layout
    assert [g.targets for g in back.gates] == [g.targets for g in c.gates]
    assert all(np.allclose(a.matrix, b.matrix) for a, b in zip(back.gates, c.gates))
    assert [g.t_count for g in back.gates] == [g.t_count for g in c.gates]


def test_measure_basis_one():
    outcome, post, p = core.measure_sites(PureState.basis(qubits(1), [1]), [0], seed=0)
    assert outcome == (1,) and p == pytest.approx(1)


def test_measure_bell_outcome_zero():
    bell = PureState(qubits(2), np.array([SQ2, 0, 0, SQ2], dtype=complex))
    outcome, post, p = core.measure_sites(bell, [0], outcome=[0])
    assert p == pytest.approx(0.5)
    assert np.allclose(post.amplitudes, [1, 0, 0, 0])


def test_measure_zero_probability_branch_rejected():
    with pytest.raises(core.SimulationError):
        core.measure_sites(PureState.basis(qubits(1)), [0], outcome=[1])


def test_born_statistics_of_plus_state():
    plus = core.apply_gate(PureState.basis(qubits(1)), core.h(0))
    rng = np.random.default_rng(9)
    n = 100_000
    ones = sum(core.measure_sites(plus, [0], rng)[0][0] for _ in range(n))
    sigma = math.sqrt(0.25 / n)
    assert abs(ones / n - 0.5) <= 3 * sigma


def test_reduced_density_bell_and_product():
    bell = PureState(qubits(2), np.array([SQ2, 0, 0, SQ2], dtype=complex))
    for site in (0, 1):
        assert core.trace_distance(core.reduced_density(bell, [site]), np.eye(2) / 2) <= 1e-10
    prod = PureState.product(qubits(2), [[1, 0], [SQ2, SQ2]])
    assert np.allclose(core.reduced_density(prod, [1]), np.full((2, 2), 0.5))


def test_reduced_density_cap():
    s = PureState.basis(qubits(8))
    with pytest.raises(core.SimulationError):
        core.reduced_density(s, range(8), cap=16)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), keep=st.lists(st.integers(0, 3), min_size=1, max_size=3, unique=True))
def test_reduced_density_matches_explicit_partial_trace(seed, keep):
    rng = np.random.default_rng(seed)
    dims = (2, 3, 2, 3)
    s = core.random_state(RegisterLayout(dims), rng)
    want = oracles.partial_trace(s.amplitudes, dims, keep)
    assert np.allclose(core.reduced_density(s, keep), want, atol=1e-12)


def test_mixed_ensemble_density_matches_reduced():
    bell = PureState(qubits(2), np.array([SQ2, 0, 0, SQ2], dtype=complex))
    zero = PureState.basis(qubits(2))
    ens = core.MixedEnsemble(((0.25, bell), (0.75, zero)))
    rho = ens.density_matrix()
    assert np.trace(rho).real == pytest.approx(1)
    assert np.allclose(core.reduced_density(ens, [0]), [[0.875, 0], [0, 0.125]])


def test_metrics_parallel_layer_and_toffoli_t():
    c = Circuit(qubits(3), [core.x(0), core.x(1)])
    assert core.circuit_metrics(c).depth == 1
    c = Circuit(qubits(3), [core.toffoli(0, 1, 2)])
    assert core.circuit_metrics(c).t_count == 7
    c = Circuit(qubits(3), [core.toffoli(0, 1, 2), core.cswap(0, 1, 2), core.t_gate(0)])
    m = core.circuit_metrics(c)
    assert (m.depth, m.width, m.t_count, m.gate_count) == (3, 3, 15, 3)


def test_drop_sites_requires_definite_basis():
    s = PureState.product(qubits(3), [[0, 1], [SQ2, SQ2], [1, 0]])
    kept = core.drop_sites(s, [0, 2])
    assert kept.n_sites == 1
    assert np.allclose(kept.amplitudes, [SQ2, SQ2])
    with pytest.raises(core.SimulationError):
        core.drop_sites(s, [1])


def test_entropy_of_bell_half():
    bell = PureState(qubits(2), np.array([SQ2, 0, 0, SQ2], dtype=complex))
    assert core.von_neumann_entropy(core.reduced_density(bell, [0])) == pytest.approx(1, abs=1e-12)
