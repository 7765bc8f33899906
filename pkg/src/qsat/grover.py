"""Grover circuits for CNF formulas.

Two layouts are supported:

* ``sequential``: one qubit per variable, clauses evaluated one after another
  on the shared variable wires (the conventional construction);
* ``parallel``: one qubit per literal occurrence, copies of a variable kept in
  a GHZ state so every clause can be evaluated at the same time.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

from .circuit import Circuit, GateKind, controlled_x, invert
from .formula import Clause, ExpandedFormula, Formula, expand
from .sim import ResourceLimitError, qubit_cap

log = logging.getLogger(__name__)

SEQUENTIAL = "sequential"
PARALLEL = "parallel"
DISTRIBUTED = "distributed"
MODES = (SEQUENTIAL, PARALLEL, DISTRIBUTED)


def var_label(v: int, copy: int = 1) -> str:
    return f"v{v + 1}" if copy == 1 else f"v{v + 1}[e{copy}]"


@dataclass(frozen=True)
class QubitLayout:
    """Wire assignment for one formula in one mode.

    ``variable_qubits[v]`` lists the wires carrying variable ``v``: a single
    wire in sequential mode, one wire per occurrence (representative first)
    in parallel mode. ``slot_qubits[(i, j)]`` is the wire read by literal j
    of clause i.
    """

    mode: str
    expanded: ExpandedFormula
    labels: tuple[str, ...]
    variable_qubits: tuple[tuple[int, ...], ...]
    slot_qubits: dict
    clause_qubits: tuple[int, ...]
    formula_qubit: int

    @property
    def formula(self) -> Formula:
        return self.expanded.base

    @property
    def qubit_count(self) -> int:
        return len(self.labels)

    @property
    def representatives(self) -> tuple[int, ...]:
        return tuple(qs[0] for qs in self.variable_qubits)

    @property
    def companions(self) -> tuple[tuple[int, ...], ...]:
        return tuple(qs[1:] for qs in self.variable_qubits)

    @property
    def ancillas(self) -> tuple[int, ...]:
        return self.clause_qubits + (self.formula_qubit,)

    def circuit(self) -> Circuit:
        return Circuit.with_qubits(self.labels)

    def basis_index(self, assignment: Sequence[int]) -> int:
        """Basis state with every copy of each variable set from ``assignment``."""
        idx = 0
        for v, qs in enumerate(self.variable_qubits):
            if assignment[v]:
                for q in qs:
                    idx |= 1 << q
        return idx


def make_layout(f: Formula | ExpandedFormula, mode: str) -> QubitLayout:
    ef = f if isinstance(f, ExpandedFormula) else expand(f)
    base = ef.base
    labels: list[str] = []
    slot_qubits: dict = {}

    def add(label: str) -> int:
        labels.append(label)
        return len(labels) - 1

    if mode == SEQUENTIAL:
        var_qs = [(add(var_label(v)),) for v in range(base.variable_count)]
        for ci, clause in enumerate(base.clauses):
            for li, lit in enumerate(clause.literals):
                slot_qubits[(ci, li)] = var_qs[lit.variable][0]
        clause_qs = tuple(add(f"C{i + 1}") for i in range(base.clause_count))
    elif mode in (PARALLEL, DISTRIBUTED):
        copies = [0] * base.variable_count
        per_var: list[list[int]] = [[] for _ in range(base.variable_count)]
        clause_list = []
        for ci, clause in enumerate(base.clauses):
            for li, lit in enumerate(clause.literals):
                copies[lit.variable] += 1
                q = add(var_label(lit.variable, copies[lit.variable]))
                slot_qubits[(ci, li)] = q
                per_var[lit.variable].append(q)
            clause_list.append(add(f"C{ci + 1}^e"))
        for v in range(base.variable_count):
            if not per_var[v]:  # variable never occurs; still searched over
                per_var[v].append(add(var_label(v)))
        var_qs = [tuple(qs) for qs in per_var]
        clause_qs = tuple(clause_list)
        mode = PARALLEL if mode == PARALLEL else DISTRIBUTED
    else:
        raise ValueError(f"unknown mode {mode!r}")
    fq = add("F^e" if mode != SEQUENTIAL else "F")
    return QubitLayout(mode, ef, tuple(labels), tuple(var_qs), slot_qubits, clause_qs, fq)


# --------------------------------------------------------------------------- blocks


def build_ghz_prep(layout: QubitLayout) -> Circuit:
    """H on each representative, then fan it out onto the variable's copies."""
    c = layout.circuit()
    for qs in layout.variable_qubits:
        c.add(GateKind.H, qs[0])
        if len(qs) > 1:
            c.add(GateKind.FANOUT, *qs)
    c.mark("state_prep", 0)
    return c


def build_uniform_prep(layout: QubitLayout) -> Circuit:
    c = layout.circuit()
    for q in layout.representatives:
        c.add(GateKind.H, q)
    c.mark("state_prep", 0)
    return c


def clause_wires(clause_index: int, clause: Clause, layout: QubitLayout) -> list[int]:
    return [layout.slot_qubits[(clause_index, li)] for li in range(len(clause))]


def build_clause_circuit(clause_index: int, layout: QubitLayout, mode: str | None = None) -> Circuit:
    """Clause qubit ends in |1> iff the clause holds.

    X on the wire of each positive literal, X on the clause qubit, then a
    multi-controlled X from the literal wires. In sequential mode the literal
    flips are undone right away so the shared wires are clean for the next
    clause.
    """
    mode = mode or layout.mode
    clause = layout.formula.clauses[clause_index]
    wires = clause_wires(clause_index, clause, layout)
    target = layout.clause_qubits[clause_index]
    c = layout.circuit()
    flips = [q for q, lit in zip(wires, clause.literals) if not lit.negated]
    for q in flips:
        c.add(GateKind.X, q)
    c.add(GateKind.X, target)
    controlled_x(c, wires, target)
    if mode == SEQUENTIAL:
        for q in flips:
            c.add(GateKind.X, q)
    return c


def build_omega(layout: QubitLayout) -> Circuit:
    """Clause evaluation followed by the conjunction onto the formula qubit."""
    c = layout.circuit()
    for ci in range(layout.formula.clause_count):
        c.extend(build_clause_circuit(ci, layout))
    c.mark("clauses", 0)
    start = len(c)
    controlled_x(c, layout.clause_qubits, layout.formula_qubit)
    c.mark("conjunction", start)
    return c


def build_oracle(f: Formula | ExpandedFormula, layout: QubitLayout | None = None,
                 mode: str = PARALLEL) -> Circuit:
    """Phase oracle: Omega, Z on the formula qubit, Omega reversed."""
    layout = layout or make_layout(f, mode)
    omega = build_omega(layout)
    c = layout.circuit()
    c.extend(omega, prefix="omega")
    c.mark("omega", 0)
    start = len(c)
    c.add(GateKind.Z, layout.formula_qubit)
    c.mark("phase", start)
    start = len(c)
    c.extend(invert(omega), prefix="omega_inv")
    c.mark("omega_inv", start)
    return c


def build_classic_diffuser(qubits: Sequence[int], n: int | None = None,
                           labels: Sequence[str] | None = None) -> Circuit:
    """H, X, multi-controlled Z, X, H over ``qubits``."""
    qubits = list(qubits)
    if not qubits:
        raise ValueError("diffuser needs at least one qubit")
    if labels is None:
        n = max(qubits) + 1 if n is None else n
        labels = [f"q{i}" for i in range(n)]
    c = Circuit.with_qubits(labels)
    for q in qubits:
        c.add(GateKind.H, q)
    for q in qubits:
        c.add(GateKind.X, q)
    if len(qubits) == 1:
        c.add(GateKind.Z, qubits[0])
    else:
        c.add(GateKind.MCZ, *qubits)
    for q in qubits:
        c.add(GateKind.X, q)
    for q in qubits:
        c.add(GateKind.H, q)
    return c


def build_parallel_diffuser(layout: QubitLayout) -> Circuit:
    """Disentangle copies, diffuse the representatives, re-entangle."""
    c = layout.circuit()
    fans = [qs for qs in layout.variable_qubits if len(qs) > 1]
    for qs in fans:
        c.add(GateKind.FANOUT, *qs)
    c.mark("disentangle", 0)
    start = len(c)
    c.extend(build_classic_diffuser(layout.representatives, labels=layout.labels))
    c.mark("diffuse", start)
    start = len(c)
    for qs in fans:
        c.add(GateKind.FANOUT, *qs)
    c.mark("entangle", start)
    return c


def build_naive_diffuser(layout: QubitLayout) -> Circuit:
    """Classic diffuser over every variable copy. Breaks the GHZ invariant;
    kept as a negative control."""
    wires = [q for qs in layout.variable_qubits for q in qs]
    return build_classic_diffuser(wires, labels=layout.labels)


def build_diffuser(layout: QubitLayout) -> Circuit:
    if layout.mode == SEQUENTIAL:
        c = build_classic_diffuser(layout.representatives, labels=layout.labels)
        c.mark("diffuse", 0)
        return c
    return build_parallel_diffuser(layout)


# --------------------------------------------------------------------------- planning


@dataclass(frozen=True)
class GroverPlan:
    N: int
    M: int
    iterations: int
    mode: str = PARALLEL
    diagnostic: str | None = None

    @property
    def success_probability(self) -> float:
        """Ideal probability of reading a solution after ``iterations`` rounds."""
        if self.M == 0:
            return 0.0
        theta = math.asin(math.sqrt(self.M / self.N))
        return math.sin((2 * self.iterations + 1) * theta) ** 2


def plan_iterations(N: int, M: int, override: int | None = None, mode: str = PARALLEL) -> GroverPlan:
    if N < 1 or N & (N - 1):
        raise ValueError(f"N must be a power of two, got {N}")
    if not 0 <= M <= N:
        raise ValueError(f"M must lie in [0, N], got {M}")
    if override is not None and override < 0:
        raise ValueError("iteration override must be >= 0")
    diagnostic = None
    if M == 0:
        diagnostic = "formula is unsatisfiable (M = 0); amplitude amplification has nothing to mark"
        iterations = 0
    elif M == N:
        diagnostic = "every assignment is a solution (M = N); no amplification needed"
        iterations = 0
    else:
        iterations = max(1, math.floor(math.pi / 4 * math.sqrt(N / M)))
    if diagnostic:
        log.warning(diagnostic)
    if override is not None:
        iterations = override
    return GroverPlan(N, M, iterations, mode, diagnostic)


def plan_for(f: Formula, override: int | None = None, mode: str = PARALLEL) -> GroverPlan:
    from .verify import brute_force_solutions

    M = len(brute_force_solutions(f))
    return plan_iterations(2**f.variable_count, M, override, mode)


# --------------------------------------------------------------------------- full circuits


def check_budget(qubits: int) -> None:
    cap = qubit_cap()
    if qubits > cap:
        raise ResourceLimitError(f"circuit needs {qubits} qubits, cap is {cap}")


def build_grover(f: Formula, mode: str = PARALLEL, plan: GroverPlan | None = None,
                 measure: bool = True) -> Circuit:
    """State preparation, ``plan.iterations`` rounds of oracle + diffuser, and a
    Z measurement of each representative (variable 1 first)."""
    if mode == DISTRIBUTED:
        from .distnet import build_distributed_grover

        return build_distributed_grover(f, plan=plan, measure=measure).circuit
    layout = make_layout(f, mode)
    check_budget(layout.qubit_count)
    plan = plan or plan_for(f, mode=mode)
    c = layout.circuit()
    prep = build_ghz_prep(layout) if mode == PARALLEL else build_uniform_prep(layout)
    c.extend(prep)
    oracle = build_oracle(layout.expanded, layout)
    diffuser = build_diffuser(layout)
    for it in range(plan.iterations):
        start = len(c)
        c.extend(oracle, prefix=f"iter{it + 1}.oracle")
        c.mark(f"iter{it + 1}.oracle", start)
        start = len(c)
        c.extend(diffuser, prefix=f"iter{it + 1}.diffuser")
        c.mark(f"iter{it + 1}.diffuser", start)
    if measure:
        start = len(c)
        for q in layout.representatives:
            c.measure(q)
        c.mark("readout", start)
    return c


def readout_qubits(f: Formula, mode: str) -> tuple[int, ...]:
    return make_layout(f, mode).representatives
