import numpy as np
import pytest
from hypothesis import given, settings
from test_circuit import unitary_circuits

from qsat.circuit import Circuit, Gate, GateKind
from qsat.sim import (
    ResourceLimitError,
    SimulationError,
    SparseState,
    StateVector,
    apply_gate,
    enumerate_branches,
    marginal,
    run_exact,
    run_shots,
    sample_branches,
    statevector_of,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def dense(c: Circuit) -> np.ndarray:
    """Full unitary by explicit basis-state action; independent of the kernels."""
    n = c.qubit_count
    dim = 1 << n
    U = np.eye(dim, dtype=complex)
    for g in c.gates:
        G = np.zeros((dim, dim), dtype=complex)
        for k in range(dim):
            bits = [(k >> q) & 1 for q in range(n)]
            if g.kind in (GateKind.X, GateKind.H, GateKind.Z):
                q = g.qubits[0]
                M = {GateKind.X: X, GateKind.H: H, GateKind.Z: Z}[g.kind]
                for out in (0, 1):
                    j = k & ~(1 << q) | (out << q)
                    G[j, k] += M[out, bits[q]]
            elif g.kind in (GateKind.CX, GateKind.MCX):
                *cs, t = g.qubits
                G[k ^ (1 << t) if all(bits[q] for q in cs) else k, k] = 1
            elif g.kind is GateKind.MCZ:
                G[k, k] = -1 if all(bits[q] for q in g.qubits) else 1
            elif g.kind is GateKind.FANOUT:
                j = k
                if bits[g.qubits[0]]:
                    for t in g.qubits[1:]:
                        j ^= 1 << t
                G[j, k] = 1
        U = G @ U
    return U


@settings(max_examples=60, deadline=None)
@given(unitary_circuits(max_qubits=4, max_gates=12))
def test_kernels_match_dense_matrices(c):
    rng = np.random.default_rng(len(c))
    v = rng.normal(size=1 << c.qubit_count) + 1j * rng.normal(size=1 << c.qubit_count)
    v /= np.linalg.norm(v)
    got = statevector_of(c, StateVector.from_amplitudes(v)).amplitudes
    np.testing.assert_allclose(got, dense(c) @ v, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(unitary_circuits())
def test_unitaries_preserve_norm(c):
    s = statevector_of(c, check_norm=True)
    assert abs(s.norm() - 1) < 1e-12


def test_little_endian_indexing():
    c = Circuit.with_qubits(["a", "b", "c"])
    c.add(GateKind.X, 0)
    s = statevector_of(c)
    assert s[1] == 1 and s["100"] == 1


def test_bell_state_exact_and_marginal():
    c = Circuit.with_qubits(["a", "b"])
    c.add(GateKind.H, 0)
    c.add(GateKind.CX, 0, 1)
    out = run_exact(c, (0, 1))
    assert out.exact_distribution == pytest.approx({"00": 0.5, "01": 0.0, "10": 0.0, "11": 0.5})
    s = statevector_of(c)
    np.testing.assert_allclose(marginal(s, (1,)), [0.5, 0.5])


def test_marginal_orders_readout_most_significant_first():
    c = Circuit.with_qubits(["a", "b"])
    c.add(GateKind.X, 1)
    s = statevector_of(c)
    np.testing.assert_allclose(marginal(s, (0, 1)), [0, 1, 0, 0])
    np.testing.assert_allclose(marginal(s, (1, 0)), [0, 0, 1, 0])


def test_measure_x_of_plus_is_zero():
    c = Circuit.with_qubits(["a"])
    c.add(GateKind.H, 0)
    b = c.measure(0, "x")
    branches, records = enumerate_branches(c)
    assert len(branches) == 1 and branches[0].bits[b] == 0
    assert records[0].p0 == pytest.approx(1.0)


def test_teleportation_with_conditioned_corrections():
    # teleport qubit 0 onto qubit 2
    c = Circuit.with_qubits(["psi", "a", "b"])
    c.add(GateKind.H, 1)
    c.add(GateKind.CX, 1, 2)
    c.add(GateKind.CX, 0, 1)
    c.add(GateKind.H, 0)
    m0 = c.measure(0)
    m1 = c.measure(1)
    c.add(GateKind.COND_X, 2, condition=m1)
    c.add(GateKind.COND_Z, 2, condition=m0)
    psi = np.array([0.6, 0.8j])
    init = np.zeros(8, dtype=complex)
    init[:2] = psi
    branches, _ = enumerate_branches(c, initial=init)
    assert len(branches) == 4
    for br in branches:
        assert br.prob == pytest.approx(0.25)
        amps = br.state.amplitudes
        lo = int(br.bits[m0]) | int(br.bits[m1]) << 1
        np.testing.assert_allclose([amps[lo], amps[lo | 4]], psi, atol=1e-12)


def test_reset_returns_to_zero_and_branches_only_when_entangled():
    c = Circuit.with_qubits(["a", "b"])
    c.add(GateKind.H, 0)
    c.add(GateKind.RESET, 0)
    branches, _ = enumerate_branches(c)
    assert len(branches) == 1
    assert abs(branches[0].state[0]) == pytest.approx(1.0)

    c = Circuit.with_qubits(["a", "b"])
    c.add(GateKind.H, 0)
    c.add(GateKind.CX, 0, 1)
    c.add(GateKind.RESET, 0)
    branches, _ = enumerate_branches(c)
    assert len(branches) == 2
    for br in branches:
        assert br.state.probabilities()[[1, 3]].sum() == pytest.approx(0.0)


def test_merge_does_not_change_distribution():
    c = Circuit.with_qubits(["a", "b", "c"])
    c.add(GateKind.H, 0)
    c.add(GateKind.H, 1)
    b = c.measure(0)
    c.add(GateKind.COND_X, 2, condition=b)
    c.add(GateKind.RESET, 0)
    c.add(GateKind.H, 2)
    merged = run_exact(c, (1, 2), merge=True).exact_distribution
    plain = run_exact(c, (1, 2), merge=False).exact_distribution
    assert merged == pytest.approx(plain, abs=1e-12)


def test_apply_gate_requires_condition_and_draw():
    c = Circuit.with_qubits(["a"])
    c.add(GateKind.H, 0)
    s = statevector_of(c)
    b = Circuit.with_qubits(["a"]).measure(0)
    with pytest.raises(SimulationError):
        apply_gate(s, Gate(GateKind.MEASURE_Z, (0,), b), {})
    with pytest.raises(SimulationError):
        apply_gate(s, Gate(GateKind.COND_X, (0,), None, 3), {})


def _noisy_circuit() -> Circuit:
    c = Circuit.with_qubits(["a", "b", "c"])
    for q in range(3):
        c.add(GateKind.H, q)
    b = c.measure(0)
    c.add(GateKind.COND_X, 1, condition=b)
    c.add(GateKind.H, 1)
    c.measure(1)
    return c


def test_shots_reproducible_and_independent_of_workers():
    c = _noisy_circuit()
    a = run_shots(c, 500, 7, (0, 1, 2))
    b = run_shots(c, 500, 7, (0, 1, 2), workers=3)
    assert a.histogram == b.histogram
    assert np.array_equal(a.classical_records, b.classical_records)
    assert sum(a.histogram.values()) == 500
    assert a.histogram != run_shots(c, 500, 8, (0, 1, 2)).histogram


def test_shot_prefix_is_stable():
    # shot s uses its own stream, so the first 100 shots agree across run sizes
    c = _noisy_circuit()
    _, small = sample_branches(c, 100, 3)
    _, big = sample_branches(c, 400, 3)
    assert np.array_equal(small, big[:100])


def test_shots_follow_exact_distribution():
    c = _noisy_circuit()
    exact = run_exact(c, (0, 1, 2)).exact_distribution
    shots = run_shots(c, 20000, 1, (0, 1, 2)).histogram
    for k, p in exact.items():
        assert abs(shots[k] / 20000 - p) < 5 * np.sqrt(p * (1 - p) / 20000) + 1e-9


def test_qubit_cap(monkeypatch):
    monkeypatch.setenv("QSAT_MAX_QUBITS", "3")
    with pytest.raises(ResourceLimitError):
        StateVector.zero(4)


def test_branch_cap():
    c = Circuit.with_qubits(["a", "b", "c"])
    for q in range(3):
        c.add(GateKind.H, q)
        c.measure(q)
    with pytest.raises(ResourceLimitError):
        run_exact(c, (0,), merge=False, branch_cap=4)


def test_initial_state_size_checked():
    c = Circuit.with_qubits(["a"])
    with pytest.raises(SimulationError):
        statevector_of(c, np.ones(4) / 2)


def test_outcome_serializers():
    c = _noisy_circuit()
    out = run_shots(c, 64, 0, (0, 1))
    assert out.to_csv().splitlines()[0] == "bitstring,count"
    ex = run_exact(c, (0, 1))
    assert ex.to_csv().splitlines()[0] == "bitstring,probability"
    assert '"seed"' in ex.to_json()


@settings(max_examples=60, deadline=None)
@given(unitary_circuits(max_qubits=5, max_gates=15))
def test_sparse_kernels_match_dense(c):
    rng = np.random.default_rng(len(c) + 1)
    v = rng.normal(size=1 << c.qubit_count) + 1j * rng.normal(size=1 << c.qubit_count)
    v /= np.linalg.norm(v)
    dense_state = StateVector.from_amplitudes(v)
    sparse_state = SparseState.from_dense(dense_state)
    for g in c.gates:
        dense_state.apply(g)
        sparse_state.apply(g)
    np.testing.assert_allclose(sparse_state.to_dense().amplitudes, dense_state.amplitudes,
                               atol=1e-12)


def test_sparse_drops_cancelled_amplitudes():
    c = Circuit.with_qubits(["a", "b"])
    c.add(GateKind.H, 0)
    c.add(GateKind.H, 0)
    s = SparseState.zero(2)
    for g in c.gates:
        s.apply(g)
    assert list(s.indices) == [0]


@pytest.mark.parametrize("merge", [False, True])
def test_sparse_branches_match_dense(merge):
    c = _noisy_circuit()
    c.add(GateKind.RESET, 0)
    dense_out = run_exact(c, (0, 1, 2), merge=merge).exact_distribution
    sparse_out = run_exact(c, (0, 1, 2), merge=merge,
                           initial=SparseState.zero(3)).exact_distribution
    assert sparse_out == pytest.approx(dense_out, abs=1e-12)


def test_sparse_shots_match_dense():
    c = _noisy_circuit()
    a = run_shots(c, 300, 4, (0, 1, 2))
    b = run_shots(c, 300, 4, (0, 1, 2), initial=SparseState.zero(3))
    assert a.histogram == b.histogram


def test_sparse_teleportation():
    c = Circuit.with_qubits(["psi", "a", "b"])
    c.add(GateKind.H, 1)
    c.add(GateKind.CX, 1, 2)
    c.add(GateKind.CX, 0, 1)
    c.add(GateKind.H, 0)
    m0 = c.measure(0)
    m1 = c.measure(1)
    c.add(GateKind.COND_X, 2, condition=m1)
    c.add(GateKind.COND_Z, 2, condition=m0)
    c.add(GateKind.RESET, 0)
    c.add(GateKind.RESET, 1)
    branches, _ = enumerate_branches(c, initial=SparseState(3, [0, 1], [0.6, 0.8j]))
    for br in branches:
        np.testing.assert_allclose(br.state.amplitudes_at([0, 4]), [0.6, 0.8j], atol=1e-12)


def test_sparse_skips_dense_cap(monkeypatch):
    monkeypatch.setenv("QSAT_MAX_QUBITS", "4")
    c = Circuit.with_qubits([f"q{i}" for i in range(40)])
    c.add(GateKind.H, 0)
    c.add(GateKind.CX, 0, 39)
    out = run_exact(c, (0, 39), initial=SparseState.zero(40))
    assert out.probability("11") == pytest.approx(0.5)
    with pytest.raises(ResourceLimitError):
        run_exact(c, (0, 39))
