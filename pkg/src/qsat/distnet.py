"""Distributed compilation over several nodes.

The whole network is simulated as one state vector; every qubit carries an
owning node and the only cross-node quantum operation allowed is preparing
an EPR pair. Multi-controlled gates whose controls live on other nodes are
lowered to the teleportation-style protocol:

1. each remote control ``C`` is copied onto the master's EPR half: CX(C -> e),
   measure ``e``, send the bit, master applies X to ``e^`` if it was 1;
2. the master applies the controlled gate using the ``e^`` halves;
3. master measures each ``e^`` in the X basis, sends the bit back, and the
   control node applies Z to ``C`` if it was 1.

Used halves are reset and, with reuse on, returned to their node's pool of
communication qubits.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace

from .circuit import Circuit, GateKind, Message, controlled_x, invert
from .formula import ExpandedFormula, Formula, expand
from .grover import (
    DISTRIBUTED,
    GroverPlan,
    QubitLayout,
    build_clause_circuit,
    check_budget,
    make_layout,
    plan_for,
)

MASTER = "master"


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class EprPair:
    local: int
    remote: int
    local_node: str
    remote_node: str
    invocation: int
    state: str = "fresh"


@dataclass
class Partition:
    """Qubit ownership. ``master`` owns the formula qubit; ``diffuser_master``
    hosts the target of the diffuser's multi-controlled Z."""

    owner: dict[int, str]
    master: str = MASTER
    diffuser_master: str | None = None
    epr_pool: list[EprPair] = field(default_factory=list)

    def nodes(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for q in sorted(self.owner):
            out.setdefault(self.owner[q], []).append(q)
        return out

    def to_spec(self, labels: Sequence[str]) -> dict:
        return {
            "nodes": {n: [labels[q] for q in qs] for n, qs in self.nodes().items()},
            "master": self.master,
            "diffuser_master": self.diffuser_master,
        }


def default_partition(layout: QubitLayout) -> Partition:
    """Clause i and its literal copies on ``node{i+1}``; formula qubit on the master."""
    owner: dict[int, str] = {}
    for (ci, _li), q in layout.slot_qubits.items():
        owner[q] = f"node{ci + 1}"
    for ci, q in enumerate(layout.clause_qubits):
        owner[q] = f"node{ci + 1}"
    for q in range(layout.qubit_count):
        owner.setdefault(q, MASTER)
    p = Partition(owner, MASTER)
    p.diffuser_master = owner[layout.representatives[-1]]
    return p


def _is_own_comm(label: str, node: str) -> bool:
    prefix = f"{node}.comm"
    return isinstance(label, str) and label.startswith(prefix) and label[len(prefix):].isdigit()


def partition_from_spec(layout: QubitLayout, spec: dict) -> Partition:
    """Read ``{"nodes": {node: [labels]}, "master"?, "diffuser_master"?}``.

    A bare ``{node: [labels]}`` mapping is accepted too. A node's own
    communication qubits (``<node>.comm<k>``) are skipped, since the builder
    allocates those itself; this lets a printed partition be read back.
    """
    if not isinstance(spec, dict):
        raise PartitionError("partition spec must be a JSON object")
    nested = "nodes" in spec
    nodes = spec["nodes"] if nested else spec
    options = spec if nested else {}
    if not isinstance(nodes, dict):
        raise PartitionError("partition spec must map node ids to lists of qubit labels")
    index = {label: i for i, label in enumerate(layout.labels)}
    owner: dict[int, str] = {}
    for node, labels in nodes.items():
        if not isinstance(labels, list):
            raise PartitionError(f"node {node!r}: expected a list of qubit labels")
        for label in labels:
            if label not in index and _is_own_comm(label, str(node)):
                continue
            if label not in index:
                raise PartitionError(f"node {node!r}: unknown qubit label {label!r}")
            q = index[label]
            if q in owner:
                raise PartitionError(f"qubit {label!r} assigned to both {owner[q]!r} and {node!r}")
            owner[q] = str(node)
    missing = [layout.labels[q] for q in range(layout.qubit_count) if q not in owner]
    if missing:
        raise PartitionError(f"qubits without an owner: {', '.join(missing)}")
    master = owner[layout.formula_qubit]
    if options.get("master", master) != master:
        raise PartitionError(f"master {options['master']!r} must own the formula qubit")
    dm = options.get("diffuser_master") or owner[layout.representatives[-1]]
    return Partition(owner, master, dm)


def validate_partition(layout: QubitLayout, partition: Partition) -> None:
    for q in range(layout.qubit_count):
        if q not in partition.owner:
            raise PartitionError(f"qubit {layout.labels[q]} has no owner")
    for ci, clause in enumerate(layout.formula.clauses):
        wires = [layout.slot_qubits[(ci, li)] for li in range(len(clause))]
        wires.append(layout.clause_qubits[ci])
        nodes = {partition.owner[q] for q in wires}
        if len(nodes) != 1:
            raise PartitionError(
                f"clause {ci + 1} is split across nodes {sorted(nodes)}; "
                "its literal copies and clause qubit must be co-located"
            )
    if partition.owner[layout.formula_qubit] != partition.master:
        raise PartitionError("the master node must own the formula qubit")
    dm = partition.diffuser_master
    if dm is not None and not any(partition.owner[q] == dm for q in layout.representatives):
        raise PartitionError(f"diffuser master {dm!r} owns no representative qubit")


# --------------------------------------------------------------------------- builder


@dataclass
class Invocation:
    index: int
    context: str
    gate: str  # "x" or "z"
    master: str
    target: int
    remote_controls: tuple[int, ...]
    local_controls: tuple[int, ...]
    pairs: list[EprPair] = field(default_factory=list)
    step2_gate: int = -1


@dataclass
class DistributedProgram:
    circuit: Circuit
    layout: QubitLayout | None
    partition: Partition
    invocations: list[Invocation]

    def invocation_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for inv in self.invocations:
            out[inv.context] = out.get(inv.context, 0) + 1
        return out

    def pair_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for inv in self.invocations:
            out[inv.context] = out.get(inv.context, 0) + len(inv.pairs)
        return out


class DistributedBuilder:
    def __init__(self, circuit: Circuit, owner: dict[int, str], reuse: bool = True):
        self.c = circuit
        self.owner = dict(owner)
        self.reuse = reuse
        self.free: dict[str, list[int]] = {}
        self.comm_count: dict[str, int] = {}
        self.pairs: list[EprPair] = []
        self.invocations: list[Invocation] = []

    def _comm(self, node: str) -> int:
        pool = self.free.get(node)
        if self.reuse and pool:
            return pool.pop(0)
        k = self.comm_count.get(node, 0)
        self.comm_count[node] = k + 1
        q = self.c.add_qubit(f"{node}.comm{k}")
        self.owner[q] = node
        return q

    def _release(self, q: int) -> None:
        self.c.add(GateKind.RESET, q)
        if self.reuse:
            pool = self.free.setdefault(self.owner[q], [])
            pool.append(q)
            pool.sort()

    def _local(self, controls: Sequence[int], target: int, u: str) -> None:
        if u == "x":
            controlled_x(self.c, list(controls), target)
        elif u == "z":
            if controls:
                self.c.add(GateKind.MCZ, *controls, target)
            else:
                self.c.add(GateKind.Z, target)
        else:
            raise ValueError(f"unsupported controlled gate {u!r} (expected 'x' or 'z')")

    def mcu(self, controls: Sequence[int], target: int, u: str, context: str) -> Invocation | None:
        """Multi-controlled X or Z; remote controls go through the protocol."""
        if u not in ("x", "z"):
            raise ValueError(f"unsupported controlled gate {u!r} (expected 'x' or 'z')")
        master = self.owner[target]
        local = tuple(q for q in controls if self.owner[q] == master)
        remote = tuple(q for q in controls if self.owner[q] != master)
        if not remote:
            self._local(controls, target, u)
            return None
        c = self.c
        inv = Invocation(len(self.invocations), context, u, master, target, remote, local)
        self.invocations.append(inv)
        for q in remote:
            node = self.owner[q]
            e, e_hat = self._comm(node), self._comm(master)
            c.add(GateKind.H, e)
            c.add(GateKind.CX, e, e_hat)
            pair = EprPair(e, e_hat, node, master, inv.index)
            inv.pairs.append(pair)
            self.pairs.append(pair)
        for q, pair in zip(remote, inv.pairs):
            c.add(GateKind.CX, q, pair.local)
            bit = c.measure(pair.local, "z")
            c.messages.append(Message(inv.index, 1, pair.local_node, master, bit))
            c.add(GateKind.COND_X, pair.remote, condition=bit)
            self._release(pair.local)
        inv.step2_gate = len(c.gates)
        self._local([p.remote for p in inv.pairs] + list(local), target, u)
        for k, (q, pair) in enumerate(zip(remote, inv.pairs)):
            bit = c.measure(pair.remote, "x")
            c.messages.append(Message(inv.index, 3, master, pair.local_node, bit))
            c.add(GateKind.COND_Z, q, condition=bit)
            self._release(pair.remote)
            consumed = replace(pair, state="consumed")
            inv.pairs[k] = consumed
            self.pairs[self.pairs.index(pair)] = consumed
        return inv

    def cx(self, control: int, target: int, context: str) -> Invocation | None:
        return self.mcu([control], target, "x", context)

    # ---------------------------------------------------------------- formula blocks

    def ghz_prep(self, layout: QubitLayout, reverse_companions: bool = False) -> None:
        start = len(self.c)
        for qs in layout.variable_qubits:
            self.c.add(GateKind.H, qs[0])
        for qs in layout.variable_qubits:
            comps = qs[1:][::-1] if reverse_companions else qs[1:]
            for q in comps:
                self.cx(qs[0], q, "state_prep")
        self.c.mark("state_prep", start)

    def oracle(self, layout: QubitLayout, prefix: str = "") -> None:
        c = self.c
        m = layout.formula.clause_count
        base = len(c)
        for ci in range(m):
            c.extend(build_clause_circuit(ci, layout, DISTRIBUTED))
        c.mark(prefix + "omega.clauses", base)
        start = len(c)
        self.mcu(layout.clause_qubits, layout.formula_qubit, "x", "oracle.conjunction")
        c.mark(prefix + "omega.conjunction", start)
        c.mark(prefix + "omega", base)
        start = len(c)
        c.add(GateKind.Z, layout.formula_qubit)
        c.mark(prefix + "phase", start)
        start = len(c)
        self.mcu(layout.clause_qubits, layout.formula_qubit, "x", "oracle.conjunction_inverse")
        c.mark(prefix + "omega_inv.conjunction", start)
        start2 = len(c)
        for ci in reversed(range(m)):
            c.extend(invert(build_clause_circuit(ci, layout, DISTRIBUTED)))
        c.mark(prefix + "omega_inv.clauses", start2)
        c.mark(prefix + "omega_inv", start)

    def diffuser(self, layout: QubitLayout, diffuser_master: str | None,
                 reverse_companions: bool = False, prefix: str = "") -> None:
        c = self.c
        reps = list(layout.representatives)

        def fan(context: str) -> None:
            for qs in layout.variable_qubits:
                comps = qs[1:][::-1] if reverse_companions else qs[1:]
                for q in comps:
                    self.cx(qs[0], q, context)

        start = len(c)
        fan("diffuser.disentangle")
        c.mark(prefix + "disentangle", start)
        core = len(c)
        for q in reps:
            c.add(GateKind.H, q)
        for q in reps:
            c.add(GateKind.X, q)
        owned = [q for q in reps if self.owner[q] == diffuser_master] if diffuser_master else []
        target = owned[-1] if owned else reps[-1]
        self.mcu([q for q in reps if q != target], target, "z", "diffuser.mcz")
        for q in reps:
            c.add(GateKind.X, q)
        for q in reps:
            c.add(GateKind.H, q)
        c.mark(prefix + "diffuse", core)
        start = len(c)
        fan("diffuser.entangle")
        c.mark(prefix + "entangle", start)

    def program(self, layout: QubitLayout | None, partition: Partition | None) -> DistributedProgram:
        p = Partition(dict(self.owner),
                      partition.master if partition else MASTER,
                      partition.diffuser_master if partition else None,
                      list(self.pairs))
        return DistributedProgram(self.c, layout, p, list(self.invocations))


def _setup(f, partition: Partition | dict | None) -> tuple[QubitLayout, Partition]:
    ef = f if isinstance(f, ExpandedFormula) else expand(f)
    layout = make_layout(ef, DISTRIBUTED)
    if partition is None:
        partition = default_partition(layout)
    elif isinstance(partition, dict):
        partition = partition_from_spec(layout, partition)
    validate_partition(layout, partition)
    return layout, partition


def build_distributed_mcu(control_nodes: Sequence[str], u: str = "x", target_node: str = MASTER,
                          reuse: bool = True) -> DistributedProgram:
    """Stand-alone protocol circuit: qubits C1..Cm (on ``control_nodes``), then t."""
    if u not in ("x", "z"):
        raise ValueError(f"unsupported controlled gate {u!r}")
    labels = [f"C{i + 1}" for i in range(len(control_nodes))] + ["t"]
    c = Circuit.with_qubits(labels)
    owner = {i: str(n) for i, n in enumerate(control_nodes)}
    owner[len(control_nodes)] = target_node
    b = DistributedBuilder(c, owner, reuse)
    b.mcu(list(range(len(control_nodes))), len(control_nodes), u, "mcu")
    c.mark("protocol", 0)
    return b.program(None, Partition(owner, target_node))


def build_distributed_oracle(f: Formula | ExpandedFormula, partition: Partition | dict | None = None,
                             reuse: bool = True) -> DistributedProgram:
    layout, partition = _setup(f, partition)
    b = DistributedBuilder(layout.circuit(), partition.owner, reuse)
    b.oracle(layout)
    return b.program(layout, partition)


def build_distributed_diffuser(f: Formula | ExpandedFormula, partition: Partition | dict | None = None,
                               reuse: bool = True, reverse_companions: bool = False) -> DistributedProgram:
    layout, partition = _setup(f, partition)
    b = DistributedBuilder(layout.circuit(), partition.owner, reuse)
    b.diffuser(layout, partition.diffuser_master, reverse_companions)
    return b.program(layout, partition)


def build_distributed_grover(f: Formula, plan: GroverPlan | None = None,
                             partition: Partition | dict | None = None, reuse: bool = True,
                             measure: bool = True, enforce_cap: bool = True) -> DistributedProgram:
    layout, partition = _setup(f, partition)
    plan = plan or plan_for(layout.formula, mode=DISTRIBUTED)
    b = DistributedBuilder(layout.circuit(), partition.owner, reuse)
    b.ghz_prep(layout)
    for it in range(plan.iterations):
        start = len(b.c)
        b.oracle(layout, prefix=f"iter{it + 1}.oracle.")
        b.c.mark(f"iter{it + 1}.oracle", start)
        start = len(b.c)
        b.diffuser(layout, partition.diffuser_master, prefix=f"iter{it + 1}.diffuser.")
        b.c.mark(f"iter{it + 1}.diffuser", start)
    if measure:
        start = len(b.c)
        for q in layout.representatives:
            b.c.measure(q)
        b.c.mark("readout", start)
    if enforce_cap:
        check_budget(b.c.qubit_count)
    return b.program(layout, partition)


# --------------------------------------------------------------------------- checks


@dataclass(frozen=True)
class LocalityViolation:
    gate: int
    description: str
    nodes: tuple[str, ...]


def check_locality(c: Circuit, partition: Partition) -> list[LocalityViolation]:
    """Multi-qubit gates spanning nodes, other than EPR-pair preparation."""
    missing = [q for q in range(c.qubit_count) if q not in partition.owner]
    if missing:
        raise PartitionError(f"qubits without an owner: {missing}")
    epr = {(p.local, p.remote) for p in partition.epr_pool}
    out = []
    for i, g in enumerate(c.gates):
        if len(g.qubits) < 2:
            continue
        nodes = tuple(sorted({partition.owner[q] for q in g.qubits}))
        if len(nodes) == 1:
            continue
        if g.kind is GateKind.CX and tuple(g.qubits) in epr:
            continue
        out.append(LocalityViolation(i, str(g), nodes))
    return out


def check_message_discipline(program: DistributedProgram) -> list[str]:
    """Two messages per remote control per invocation, correctly ordered and routed."""
    c = program.circuit
    owner = program.partition.owner
    writer = {g.clbit: i for i, g in enumerate(c.gates) if g.clbit is not None}
    readers: dict[int, list[int]] = {}
    for i, g in enumerate(c.gates):
        if g.condition is not None:
            readers.setdefault(g.condition, []).append(i)
    problems: list[str] = []
    by_inv: dict[int, list[Message]] = {}
    for m in c.messages:
        by_inv.setdefault(m.invocation, []).append(m)
    for inv in program.invocations:
        msgs = by_inv.get(inv.index, [])
        step1 = [m for m in msgs if m.step == 1]
        step3 = [m for m in msgs if m.step == 3]
        n = len(inv.remote_controls)
        if len(step1) != n or len(step3) != n or len(msgs) != 2 * n:
            problems.append(f"invocation {inv.index}: {len(msgs)} messages for {n} remote controls")
        for q, m in zip(inv.remote_controls, step1):
            if (m.sender, m.receiver) != (owner[q], inv.master):
                problems.append(f"invocation {inv.index}: step-1 message routed {m.sender}->{m.receiver}")
            if writer.get(m.bit, 1 << 60) >= inv.step2_gate:
                problems.append(f"invocation {inv.index}: step-1 bit c{m.bit} not sent before step 2")
            for r in readers.get(m.bit, []):
                if owner[c.gates[r].qubits[0]] != m.receiver or r >= inv.step2_gate:
                    problems.append(f"invocation {inv.index}: step-1 correction misplaced")
        for q, m in zip(inv.remote_controls, step3):
            if (m.sender, m.receiver) != (inv.master, owner[q]):
                problems.append(f"invocation {inv.index}: step-3 message routed {m.sender}->{m.receiver}")
            if writer.get(m.bit, -1) <= inv.step2_gate:
                problems.append(f"invocation {inv.index}: step-3 bit c{m.bit} not after step 2")
            for r in readers.get(m.bit, []):
                if owner[c.gates[r].qubits[0]] != m.receiver:
                    problems.append(f"invocation {inv.index}: step-3 correction on wrong node")
    return problems


# --------------------------------------------------------------------------- accounting


@dataclass
class QubitBudget:
    formula_qubits: int
    comm_qubits: int
    per_node: dict[str, dict[str, int]]
    pairs: dict[str, int]
    invocations: dict[str, int]
    reuse: bool

    @property
    def total(self) -> int:
        return self.formula_qubits + self.comm_qubits

    @property
    def epr_halves(self) -> int:
        return 2 * sum(self.pairs.values())

    def to_dict(self) -> dict:
        return {
            "formula_qubits": self.formula_qubits,
            "comm_qubits": self.comm_qubits,
            "total": self.total,
            "epr_pairs_prepared": sum(self.pairs.values()),
            "reuse": self.reuse,
            "per_node": self.per_node,
            "pairs_by_context": self.pairs,
            "invocations_by_context": self.invocations,
        }


def qubit_budget(f: Formula | ExpandedFormula, partition: Partition | dict | None = None,
                 reuse: bool = True, iterations: int = 1) -> QubitBudget:
    """Itemized qubit count for state preparation plus ``iterations`` Grover rounds."""
    ef = f if isinstance(f, ExpandedFormula) else expand(f)
    plan = GroverPlan(2**ef.base.variable_count, 0, iterations)
    prog = build_distributed_grover(ef.base, plan, partition, reuse, measure=False,
                                    enforce_cap=False)
    layout = prog.layout
    per_node: dict[str, dict[str, int]] = {}
    for q, node in sorted(prog.partition.owner.items()):
        slot = per_node.setdefault(node, {"formula": 0, "comm": 0})
        slot["formula" if q < layout.qubit_count else "comm"] += 1
    return QubitBudget(
        formula_qubits=layout.qubit_count,
        comm_qubits=prog.circuit.qubit_count - layout.qubit_count,
        per_node=dict(sorted(per_node.items())),
        pairs=prog.pair_counts(),
        invocations=prog.invocation_counts(),
        reuse=reuse,
    )


# --------------------------------------------------------------------------- traces


def message_trace(c: Circuit, record: Sequence[int]) -> list[dict]:
    """Concrete message log for one shot, given its classical record."""
    return [{**m.to_dict(), "value": int(record[m.bit])} for m in c.messages]


def trace_jsonl(events: Iterable[dict]) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in events)
