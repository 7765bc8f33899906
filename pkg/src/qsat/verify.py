"""Independent checks: brute-force solutions, oracle phases, diffuser and
protocol equivalence.

Every reference value here is computed straight from the definitions with
numpy, never by running the compiled circuits a second way.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .circuit import MEASUREMENTS, Circuit, Gate
from .formula import ExpandedFormula, Formula, expand
from .grover import (
    DISTRIBUTED,
    PARALLEL,
    SEQUENTIAL,
    QubitLayout,
    build_diffuser,
    build_naive_diffuser,
    build_oracle,
    make_layout,
)
from .sim import (
    ResourceLimitError,
    SparseState,
    StateVector,
    enumerate_branches,
    qubit_cap,
    sample_branches,
    statevector_of,
)

BRUTE_FORCE_LIMIT = 24
TOLERANCE = 1e-9
DENSE_AUTO_LIMIT = 12


def solution_mask(f: Formula) -> np.ndarray:
    """Boolean array over assignment indices; variable 1 is the most significant bit."""
    d = f.variable_count
    if d > BRUTE_FORCE_LIMIT:
        raise ResourceLimitError(f"brute force limited to {BRUTE_FORCE_LIMIT} variables, got {d}")
    idx = np.arange(1 << d, dtype=np.int64)
    ok = np.ones(idx.shape, dtype=bool)
    for clause in f.clauses:
        sat = np.zeros(idx.shape, dtype=bool)
        for lit in clause:
            bit = ((idx >> (d - 1 - lit.variable)) & 1).astype(bool)
            sat |= ~bit if lit.negated else bit
        ok &= sat
    return ok


def brute_force_solutions(f: Formula) -> list[tuple[int, ...]]:
    """All satisfying assignments in ascending order (variable 1 most significant)."""
    d = f.variable_count
    return [tuple((int(i) >> (d - 1 - j)) & 1 for j in range(d)) for i in np.flatnonzero(solution_mask(f))]


def assignment_bits(index: int, d: int) -> tuple[int, ...]:
    return tuple((index >> (d - 1 - j)) & 1 for j in range(d))


def use_sparse(n: int, backend: str = "auto") -> bool:
    if backend not in ("auto", "dense", "sparse"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend == "sparse" or (backend == "auto" and n > min(qubit_cap(), DENSE_AUTO_LIMIT))


def embed(layout: QubitLayout, vec: np.ndarray, total_qubits: int | None = None,
          backend: str = "auto") -> StateVector | SparseState:
    """Place a vector over assignments into the copy-consistent subspace of ``layout``.

    Registers wider than the dense cap get a sparse state when ``backend`` is
    ``auto``.
    """
    d = layout.formula.variable_count
    n = total_qubits or layout.qubit_count
    idx = np.array([layout.basis_index(assignment_bits(i, d)) for i in range(len(vec))],
                   dtype=np.int64)
    if use_sparse(n, backend):
        return SparseState(n, idx, np.asarray(vec, dtype=np.complex128))
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[idx] = vec
    return StateVector(n, amps)


def restrict(layout: QubitLayout, state: StateVector | SparseState) -> tuple[np.ndarray, float]:
    """Amplitudes on the copy-consistent subspace, plus the probability left outside it."""
    d = layout.formula.variable_count
    idx = [layout.basis_index(assignment_bits(i, d)) for i in range(1 << d)]
    vec = state.amplitudes_at(idx)
    leak = max(0.0, 1.0 - float(np.vdot(vec, vec).real))
    return vec, leak


def _phase_align(got: np.ndarray, want: np.ndarray) -> np.ndarray:
    """``got`` rotated by the global phase that best matches ``want``."""
    overlap = np.vdot(got, want)
    if abs(overlap) < 1e-15:
        return got
    return got * (overlap / abs(overlap))


def _anchor_phase(got: np.ndarray, want: np.ndarray, anchor: int) -> np.ndarray:
    """Remove a global phase by matching one reference amplitude."""
    if abs(got[anchor]) < 1e-12 or abs(want[anchor]) < 1e-12:
        return _phase_align(got, want)
    ratio = want[anchor] / got[anchor]
    return got * (ratio / abs(ratio))


def _final_states(c: Circuit, initial) -> list[tuple[float, StateVector | SparseState]]:
    if c.is_unitary() and isinstance(initial, StateVector):
        return [(1.0, statevector_of(c, initial))]
    branches, _ = enumerate_branches(c, initial=initial, merge=True)
    return [(b.prob, b.state) for b in branches]


def _oracle_circuit(f: Formula, mode: str, delete_phase: bool = False) -> tuple[QubitLayout, Circuit]:
    if mode == DISTRIBUTED:
        from .distnet import build_distributed_oracle

        prog = build_distributed_oracle(f)
        layout, c = prog.layout, prog.circuit
    else:
        layout = make_layout(f, mode)
        c = build_oracle(layout.expanded, layout)
    if delete_phase:
        c = _drop_phase(c)
    return layout, c


def _drop_phase(c: Circuit) -> Circuit:
    seg = c.segment(next(n for n in c.segment_names() if n.endswith("phase")))
    out = Circuit.with_qubits(c.labels)
    bitmap = {b: out.add_clbit() for b in range(c.classical_bit_count)}
    for i, g in enumerate(c.gates):
        if seg.start <= i < seg.stop:
            continue
        out.append(Gate(g.kind, g.qubits,
                        None if g.clbit is None else bitmap[g.clbit],
                        None if g.condition is None else bitmap[g.condition]))
    return out


# --------------------------------------------------------------------------- reports


@dataclass
class Report:
    check: str
    mode: str
    ok: bool
    details: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        lines = [f"{self.check} [{self.mode}]: {'PASS' if self.ok else 'FAIL'}"]
        for k in sorted(self.details):
            lines.append(f"  {k}: {self.details[k]}")
        for item in self.failures[:20]:
            lines.append(f"  failure: {item}")
        if len(self.failures) > 20:
            lines.append(f"  ... {len(self.failures) - 20} more")
        return "\n".join(lines)


def check_oracle_phases(f: Formula, mode: str = PARALLEL, circuit: Circuit | None = None,
                        layout: QubitLayout | None = None, tol: float = TOLERANCE,
                        backend: str = "auto") -> Report:
    """Each assignment's amplitude is negated exactly when it satisfies ``f``
    and every ancilla returns to |0>.

    The input is the uniform superposition over copy-consistent assignments.
    Circuits with mid-circuit measurements are checked branch by branch, up to
    a global phase per branch.
    """
    if circuit is None:
        layout, circuit = _oracle_circuit(f, mode)
    elif layout is None:
        layout = make_layout(f, mode)
    d = f.variable_count
    mask = solution_mask(f)
    N = 1 << d
    uniform = np.full(N, 1 / np.sqrt(N), dtype=np.complex128)
    want = np.where(mask, -uniform, uniform)
    initial = embed(layout, uniform, circuit.qubit_count, backend)
    # anchor the global phase on an assignment the oracle must leave alone
    anchor = int(np.argmin(mask))
    bad: set[int] = set()
    worst_leak = 0.0
    worst_err = 0.0
    states = _final_states(circuit, initial)
    for _prob, state in states:
        got, leak = restrict(layout, state)
        worst_leak = max(worst_leak, leak)
        err = np.abs(_anchor_phase(got, want, anchor) - want)
        worst_err = max(worst_err, float(err.max()))
        for i in np.flatnonzero(err > tol):
            bad.add(int(i))
    failures = ["".join(map(str, assignment_bits(i, d))) for i in sorted(bad)]
    if worst_leak > tol:
        failures.append(f"ancilla or copy leakage {worst_leak:.3e}")
    return Report(
        "oracle-phases", mode, not failures,
        {"assignments": N, "solutions": int(mask.sum()), "mismatches": len(bad),
         "branches": len(states), "max_error": worst_err, "max_leakage": worst_leak,
         "qubits": circuit.qubit_count, "backend": type(initial).__name__},
        failures,
    )


def classic_diffusion(vec: np.ndarray) -> np.ndarray:
    """(I - 2|s><s|) v, the action of H X MCZ X H on d qubits."""
    N = vec.shape[0]
    s = np.full(N, 1 / np.sqrt(N))
    return vec - 2 * s * np.dot(s, vec)


def random_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def check_diffuser_equivalence(f: Formula | ExpandedFormula, trials: int = 100, seed: int = 0,
                               diffuser: str = "parallel", tol: float = TOLERANCE,
                               reverse_companions: bool = False, backend: str = "auto") -> Report:
    """Compare a diffuser on random copy-consistent states with the classic one.

    ``diffuser`` is ``parallel``, ``naive`` (classic diffuser on every copy),
    ``sequential`` or ``distributed``.
    """
    ef = f if isinstance(f, ExpandedFormula) else expand(f)
    if diffuser == "distributed":
        from .distnet import build_distributed_diffuser

        prog = build_distributed_diffuser(ef, reverse_companions=reverse_companions)
        layout, c = prog.layout, prog.circuit
    elif diffuser == "sequential":
        layout = make_layout(ef, SEQUENTIAL)
        c = build_diffuser(layout)
    elif diffuser in ("parallel", "naive"):
        layout = make_layout(ef, PARALLEL)
        c = build_diffuser(layout) if diffuser == "parallel" else build_naive_diffuser(layout)
    else:
        raise ValueError(f"unknown diffuser {diffuser!r}")
    rng = np.random.default_rng(seed)
    N = 1 << ef.base.variable_count
    worst = 0.0
    failures = []
    for t in range(trials):
        vec = random_state(rng, N)
        want = classic_diffusion(vec)
        for _prob, state in _final_states(c, embed(layout, vec, c.qubit_count, backend)):
            got, leak = restrict(layout, state)
            dist = float(np.linalg.norm(_phase_align(got, want) - want)) + leak
            worst = max(worst, dist)
            if dist > tol:
                failures.append(f"trial {t}: distance {dist:.3e}")
    return Report("diffuser-equivalence", diffuser, not failures,
                  {"trials": trials, "seed": seed, "max_distance": worst,
                   "qubits": c.qubit_count}, failures)


def ideal_mcu(vec: np.ndarray, m: int, u: str) -> np.ndarray:
    """Multi-controlled X or Z on qubits 0..m-1 (controls) and m (target)."""
    out = vec.copy()
    all_on = (1 << m) - 1
    idx = np.arange(vec.shape[0])
    on = (idx & all_on) == all_on
    if u == "z":
        out[on & ((idx >> m) & 1).astype(bool)] *= -1
    else:
        src = idx[on]
        out[src] = vec[src ^ (1 << m)]
    return out


def check_protocol_equivalence(control_nodes: Sequence[str], u: str = "x", trials: int = 100,
                               seed: int = 0, shots: int = 0, tol: float = TOLERANCE,
                               target_node: str = "master") -> Report:
    """Distributed m-controlled gate against the ideal one on random states.

    Every measurement branch is enumerated without merging; each must match
    the ideal output up to global phase with communication qubits back in |0>.
    Protocol measurement outcomes must each be equally likely. With ``shots``
    > 0 the same comparison is repeated on that many seeded sampled shots per
    trial.
    """
    from .distnet import build_distributed_mcu

    prog = build_distributed_mcu(control_nodes, u, target_node)
    c = prog.circuit
    m = len(control_nodes)
    k = m + 1
    n = c.qubit_count
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_bias = 0.0
    branch_counts = set()
    failures = []
    for t in range(trials):
        vec = random_state(rng, 1 << k)
        want = ideal_mcu(vec, m, u)
        amps = np.zeros(1 << n, dtype=np.complex128)
        amps[: 1 << k] = vec
        initial = StateVector(n, amps)
        branches, records = enumerate_branches(c, initial=initial, merge=False)
        branch_counts.add(len(branches))
        for rec in records:
            if c.gates[rec.gate].kind in MEASUREMENTS:
                worst_bias = max(worst_bias, abs(rec.p0 - 0.5), abs(rec.p1 - 0.5))
        sampled = []
        if shots:
            sbranches, _ = sample_branches(c, shots, seed * 1_000_003 + t, initial=initial, merge=False)
            sampled = [b.state for b in sbranches]
        for state in [b.state for b in branches] + sampled:
            got = state.amplitudes_at(np.arange(1 << k))
            leak = max(0.0, 1.0 - float(np.vdot(got, got).real))
            dist = float(np.linalg.norm(_phase_align(got, want) - want)) + leak
            worst = max(worst, dist)
            if dist > tol:
                failures.append(f"trial {t}: distance {dist:.3e}")
    if worst_bias > tol:
        failures.append(f"measurement outcome bias {worst_bias:.3e}")
    return Report("protocol-equivalence", f"m={m},u={u}", not failures,
                  {"trials": trials, "seed": seed, "max_distance": worst,
                   "max_outcome_bias": worst_bias, "branches_per_trial": sorted(branch_counts),
                   "remote_controls": len(prog.invocations[0].remote_controls) if prog.invocations else 0,
                   "shots_per_trial": shots},
                  failures)


def verify_all(f: Formula, mode: str, trials: int = 20, seed: int = 0) -> list[Report]:
    """Oracle phase check and diffuser equivalence for one mode."""
    return [
        check_oracle_phases(f, mode),
        check_diffuser_equivalence(f, trials=trials, seed=seed, diffuser=mode),
    ]
