import math

import numpy as np
import pytest

import oracles
from qdcsim import core, qram
from qdcsim.qram import MemorySpec

BUILDERS = {
    "fanout": qram.build_fanout,
    "bucket": qram.build_bucket_brigade,
    "selectswap": lambda mem: qram.build_select_swap(mem, qram.optimal_lambda(mem.size, mem.m)[0]),
}


def test_memory_spec_validation():
    with pytest.raises(qram.QramError):
        MemorySpec.classical([0, 4], m=2)
    with pytest.raises(qram.QramError):
        MemorySpec.classical([0, 1, 0], m=1)
    with pytest.raises(qram.QramError):
        MemorySpec(words=(0, 1), cells=([1, 0], [0, 1]))


def test_oracle_all_zero_is_identity():
    g = qram.oracle_unitary_classical(MemorySpec.classical([0, 0], 1))
    assert np.allclose(g.matrix, np.eye(4))


def test_oracle_n2_is_cnot():
    g = qram.oracle_unitary_classical(MemorySpec.classical([0, 1], 1))
    assert np.allclose(g.matrix, core.CNOT)


def test_oracle_n4_m2_uniform_input():
    mem = MemorySpec.classical([3, 0, 1, 2], 2)
    layout = qram.oracle_layout(4, 2)
    vec = np.zeros(16, dtype=complex)
    vec[:4] = 0.5
    out = core.apply_gate(core.PureState(layout, vec), qram.oracle_unitary_classical(mem)).amplitudes
    want = np.zeros(16, dtype=complex)
    for i, word in enumerate([3, 0, 1, 2]):
        want[i + 4 * word] = 0.5
    assert np.allclose(out, want)


@pytest.mark.parametrize("n_cells,m", [(2, 1), (4, 2), (8, 1), (4, 3)])
def test_oracle_matches_reference(n_cells, m):
    rng = np.random.default_rng(n_cells * 10 + m)
    mem = qram.random_classical_memory(n_cells, m, rng)
    assert np.allclose(qram.oracle_unitary_classical(mem).matrix, oracles.classical_qram_unitary(mem.words, m))


@pytest.mark.parametrize("arch", sorted(BUILDERS))
@pytest.mark.parametrize("n_cells,m", [(2, 1), (4, 1), (4, 2), (8, 1), (16, 1), (8, 2)])
def test_builders_match_oracle_on_random_states(arch, n_cells, m):
    rng = np.random.default_rng(hash((arch, n_cells, m)) % 2**32)
    ref = None
    for _ in range(3):
        mem = qram.random_classical_memory(n_cells, m, rng)
        ref = oracles.classical_qram_unitary(mem.words, m)
        circuit = BUILDERS[arch](mem)
        psi = core.random_state(qram.oracle_layout(n_cells, m), rng).amplitudes
        out, restored = qram.run_on_io(circuit, psi)
        assert restored >= 1 - 1e-10
        assert abs(np.vdot(ref @ psi, out)) ** 2 >= 1 - 1e-10


@pytest.mark.parametrize("arch", sorted(BUILDERS))
def test_small_builders_full_dense_unitary(arch):
    """At N=2 and N=4 the whole circuit fits a dense simulation: check every basis input."""
    for words in ([0, 1], [1, 0, 1, 1]):
        mem = MemorySpec.classical(words, 1)
        circuit = BUILDERS[arch](mem)
        layout = circuit.layout
        ref = oracles.classical_qram_unitary(words, 1)
        io = len(layout["Q1"]) + 1
        for k in range(2**io):
            digits = [(k >> j) & 1 for j in range(io)] + [0] * (layout.n_sites - io)
            out = core.run_circuit(core.PureState.basis(layout, digits), circuit).amplitudes
            target = int(np.argmax(ref[:, k]))
            assert abs(out[target]) == pytest.approx(1, abs=1e-12)


def test_fanout_and_bucket_agree_at_n2():
    mem = MemorySpec.classical([1, 0], 1)
    rng = np.random.default_rng(0)
    psi = core.random_state(qram.oracle_layout(2, 1), rng).amplitudes
    a, _ = qram.run_on_io(qram.build_fanout(mem), psi)
    b, _ = qram.run_on_io(qram.build_bucket_brigade(mem), psi)
    assert np.allclose(a, b, atol=1e-12)


def test_widths_equal_between_tree_architectures():
    for n_cells in (4, 16, 64):
        mem = MemorySpec.classical([1] * n_cells, 1)
        wf = core.circuit_metrics(qram.build_fanout(mem)).width
        wb = core.circuit_metrics(qram.build_bucket_brigade(mem)).width
        assert wf == wb


def test_router_activation_counts():
    for n in range(2, 7):
        n_cells = 2**n
        mem = MemorySpec.classical([0] * n_cells, 1)
        bb, fo = qram.build_bucket_brigade(mem), qram.build_fanout(mem)
        for address in (0, n_cells - 1, n_cells // 3):
            assert qram.routers_activated(bb, address) == n
            assert qram.routers_activated(fo, address) == n_cells - 1


def test_activation_ratio_is_log_n_over_n_minus_1():
    for n in range(2, 7):
        n_cells = 2**n
        acc_b = qram.query_cost("bucket", n_cells, 1)
        acc_f = qram.query_cost("fanout", n_cells, 1)
        assert acc_b.routers_activated / acc_f.routers_activated == pytest.approx(n / (n_cells - 1))


@pytest.mark.parametrize("n_cells,m", [(4, 1), (8, 2), (16, 1), (64, 1), (64, 3)])
def test_select_swap_t_count_matches_hand_count(n_cells, m):
    mem = MemorySpec.classical([0] * n_cells, m)
    lam = 1
    while lam <= n_cells:
        t = core.circuit_metrics(qram.build_select_swap(mem, lam)).t_count
        assert t == oracles.select_swap_t_reference(n_cells, m, lam) == qram.select_swap_t_count(n_cells, m, lam)
        lam *= 2


def test_select_swap_degenerate_lambdas():
    n_cells = 16
    ts = [qram.select_swap_t_count(n_cells, 1, 1) for n_cells in (4, 8, 16, 32)]
    # lambda = 1: pure select, T-count linear in N
    assert np.allclose(np.diff(ts) / np.array([4, 8, 16]), 14)
    mem = MemorySpec.classical([1, 0] * 8, 1)
    pure_swap = qram.build_select_swap(mem, 16)
    assert "flags" in pure_swap.layout.segments and len(pure_swap.layout["flags"]) == 1
    psi = core.random_state(qram.oracle_layout(16, 1), np.random.default_rng(1)).amplitudes
    out, _ = qram.run_on_io(pure_swap, psi)
    assert abs(np.vdot(oracles.classical_qram_unitary(mem.words, 1) @ psi, out)) ** 2 >= 1 - 1e-10


def test_select_swap_invalid_lambda():
    mem = MemorySpec.classical([0] * 8, 1)
    for lam in (0, 3, 16):
        with pytest.raises(qram.QramError):
            qram.build_select_swap(mem, lam)


def test_optimal_lambda_n64():
    lam, t = qram.optimal_lambda(64, 1)
    assert lam in (4, 8, 16)
    assert lam == 8 and t == 196


def test_depth_is_logarithmic_for_trees():
    for arch in ("bucket", "fanout"):
        ns = np.arange(2, 11)
        depths = [qram.query_cost(arch, 2**n, 1).depth for n in ns]
        slope, intercept = np.polyfit(ns, depths, 1)
        resid = np.array(depths) - (slope * ns + intercept)
        r2 = 1 - resid.var() / np.var(depths)
        assert r2 >= 0.98


def test_query_quantum_single_branch():
    plus = np.array([1, 1]) / math.sqrt(2)
    minus = np.array([1, -1]) / math.sqrt(2)
    mem = MemorySpec.quantum([plus, minus])
    out = qram.query_quantum(qram.quantum_memory_state([1, 0], mem))
    q2 = core.reduced_density(out, out.layout["Q2"])
    assert np.allclose(q2, np.outer(plus, plus))
    d = out.layout["D"]
    assert np.allclose(core.reduced_density(out, [d[0]]), [[1, 0], [0, 0]])
    assert np.allclose(core.reduced_density(out, [d[1]]), np.outer(minus, minus))


def test_query_quantum_superposed_address():
    mem = MemorySpec.quantum([[1, 0], [0, 1]])
    out = qram.query_quantum(qram.quantum_memory_state(np.array([1, 1]) / math.sqrt(2), mem))
    layout = out.layout
    want = np.zeros(layout.total_dim, dtype=complex)
    # |0>_Q1 |0>_Q2 |0,1>_D  and  |1>_Q1 |1>_Q2 |0,0>_D
    want[layout.index([0, 0, 0, 1])] = 1 / math.sqrt(2)
    want[layout.index([1, 1, 0, 0])] = 1 / math.sqrt(2)
    assert np.allclose(out.amplitudes, want)


@pytest.mark.parametrize("n_cells,w", [(2, 1), (4, 1), (2, 2)])
def test_query_quantum_matches_brute_force(n_cells, w):
    rng = np.random.default_rng(n_cells + 10 * w)
    for _ in range(5):
        cells = [core.random_state(core.RegisterLayout((2,) * w), rng).amplitudes for _ in range(n_cells)]
        address = core.random_state(core.RegisterLayout((2,) * int(math.log2(n_cells))), rng).amplitudes
        state = qram.quantum_memory_state(address, MemorySpec.quantum(cells))
        out = qram.query_quantum(state)
        want = oracles.quantum_memory_unitary(n_cells, w) @ state.amplitudes
        assert core.fidelity(out.amplitudes, want) >= 1 - 1e-10


def test_query_quantum_leaves_addressed_cell_empty():
    rng = np.random.default_rng(3)
    cells = [core.random_state(core.RegisterLayout((2,)), rng).amplitudes for _ in range(4)]
    for a in range(4):
        address = np.zeros(4)
        address[a] = 1
        out = qram.query_quantum(qram.quantum_memory_state(address, MemorySpec.quantum(cells)))
        cell = out.layout["D"][a]
        assert core.marginal_probabilities(out, [cell])[0] == pytest.approx(1, abs=1e-12)


def test_query_quantum_rejects_occupied_output():
    mem = MemorySpec.quantum([[1, 0], [0, 1]])
    state = qram.quantum_memory_state([1, 0], mem)
    state = core.apply_gate(state, core.x(state.layout["Q2"][0]))
    with pytest.raises(qram.QramError):
        qram.query_quantum(state)
    out = qram.query_quantum(state, require_empty_output=False)
    assert core.fidelity(qram.query_quantum(out, require_empty_output=False), state) == pytest.approx(1)


@pytest.mark.parametrize(
    "coeffs,want",
    [
        ([1, 1, 1, 1], [0.5, 0.5, 0.5, 0.5]),
        ([1, 0, 0, 0], [1, 0, 0, 0]),
        ([3, 4], [0.6, 0.8]),
        ([1j, -2, 0, 2, 0.5], None),
    ],
)
def test_lcu_state_preparation(coeffs, want):
    prep = qram.prepare_lcu_state(coeffs)
    layout = prep.circuit.layout
    out = core.run_circuit(core.PureState.basis(layout), prep.circuit).amplitudes
    if want is None:
        want = np.zeros(2**prep.n_qubits, dtype=complex)
        want[: len(coeffs)] = coeffs
        want /= np.linalg.norm(want)
    assert np.allclose(out, want, atol=1e-10)


def test_lcu_zero_vector_rejected():
    with pytest.raises(qram.QramError):
        qram.prepare_lcu_state([0, 0])


def test_lcu_hardware_ratio():
    assert qram.prepare_lcu_state(np.ones(16)).hardware_cost_ratio == pytest.approx(4 / 16)


def test_query_cost_communication():
    acc = qram.query_cost("selectswap", 1024, 1)
    assert acc.communicated_qubits == 11
    assert acc.lam == 32
    assert qram.communicated_qubits(1024, 1, extra=2) == 13
