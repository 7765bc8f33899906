"""Gate-level circuit IR with classical bits, named segments and JSON I/O.

Multi-controlled gates are primitive. Qubit operand order for controlled
kinds is ``controls..., target``; for ``FANOUT`` it is ``control, targets...``.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum

FORMAT_NAME = "qsat-circuit"
FORMAT_VERSION = "v1"


class CircuitError(ValueError):
    pass


class GateKind(str, Enum):
    X = "x"
    H = "h"
    Z = "z"
    CX = "cx"
    MCX = "mcx"
    MCZ = "mcz"
    FANOUT = "fanout"
    MEASURE_Z = "measure_z"
    MEASURE_X = "measure_x"
    COND_X = "cond_x"
    COND_Z = "cond_z"
    RESET = "reset"


SINGLE_QUBIT = {GateKind.X, GateKind.H, GateKind.Z, GateKind.COND_X, GateKind.COND_Z,
                GateKind.RESET, GateKind.MEASURE_Z, GateKind.MEASURE_X}
MEASUREMENTS = {GateKind.MEASURE_Z, GateKind.MEASURE_X}
CONDITIONED = {GateKind.COND_X, GateKind.COND_Z}
NON_UNITARY = MEASUREMENTS | CONDITIONED | {GateKind.RESET}


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple[int, ...]
    clbit: int | None = None  # written by measurements
    condition: int | None = None  # read by conditioned gates

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        k, qs = self.kind, self.qubits
        if len(set(qs)) != len(qs):
            raise CircuitError(f"{k.value}: duplicate qubit operands {qs}")
        if k in SINGLE_QUBIT and len(qs) != 1:
            raise CircuitError(f"{k.value} acts on exactly one qubit, got {qs}")
        if k is GateKind.CX and len(qs) != 2:
            raise CircuitError(f"cx needs one control and one target, got {qs}")
        if k in (GateKind.MCX, GateKind.MCZ, GateKind.FANOUT) and len(qs) < 1:
            raise CircuitError(f"{k.value} needs at least one qubit")
        if k is GateKind.FANOUT and len(qs) < 2:
            raise CircuitError("fanout needs a control and at least one target")
        if (k in MEASUREMENTS) != (self.clbit is not None):
            raise CircuitError(f"{k.value}: classical output bit mismatch")
        if (k in CONDITIONED) != (self.condition is not None):
            raise CircuitError(f"{k.value}: condition bit mismatch")

    @property
    def controls(self) -> tuple[int, ...]:
        if self.kind in (GateKind.CX, GateKind.MCX, GateKind.MCZ):
            return self.qubits[:-1]
        if self.kind is GateKind.FANOUT:
            return self.qubits[:1]
        return ()

    @property
    def targets(self) -> tuple[int, ...]:
        if self.kind is GateKind.FANOUT:
            return self.qubits[1:]
        return self.qubits[-1:]

    def is_unitary(self) -> bool:
        return self.kind not in NON_UNITARY

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "qubits": list(self.qubits)}
        if self.clbit is not None:
            d["clbit"] = self.clbit
        if self.condition is not None:
            d["condition"] = self.condition
        return d

    def __str__(self) -> str:
        s = f"{self.kind.value} " + ",".join(f"q{q}" for q in self.qubits)
        if self.clbit is not None:
            s += f" -> c{self.clbit}"
        if self.condition is not None:
            s += f" if c{self.condition}"
        return s


@dataclass(frozen=True)
class QubitRef:
    index: int
    label: str


@dataclass(frozen=True)
class Segment:
    name: str
    start: int
    stop: int  # exclusive


@dataclass(frozen=True)
class Message:
    """A classical-channel event: ``bit`` travels from ``sender`` to ``receiver``."""

    invocation: int
    step: int
    sender: str
    receiver: str
    bit: int

    def to_dict(self) -> dict:
        return {"invocation": self.invocation, "step": self.step, "sender": self.sender,
                "receiver": self.receiver, "bit": self.bit}


@dataclass
class Circuit:
    qubits: list[QubitRef] = field(default_factory=list)
    classical_bit_count: int = 0
    gates: list[Gate] = field(default_factory=list)
    segments: list[Segment] = field(default_factory=list)
    messages: list[Message] = field(default_factory=list)
    _written: set = field(default_factory=set, repr=False, compare=False)

    @classmethod
    def with_qubits(cls, labels: Iterable[str]) -> Circuit:
        c = cls()
        for label in labels:
            c.add_qubit(label)
        return c

    @property
    def qubit_count(self) -> int:
        return len(self.qubits)

    @property
    def labels(self) -> list[str]:
        return [q.label for q in self.qubits]

    def add_qubit(self, label: str) -> int:
        idx = len(self.qubits)
        self.qubits.append(QubitRef(idx, label))
        return idx

    def add_clbit(self) -> int:
        self.classical_bit_count += 1
        return self.classical_bit_count - 1

    def append(self, gate: Gate) -> Circuit:
        for q in gate.qubits:
            if not 0 <= q < self.qubit_count:
                raise CircuitError(f"{gate}: qubit {q} out of range (0..{self.qubit_count - 1})")
        if gate.clbit is not None:
            if not 0 <= gate.clbit < self.classical_bit_count:
                raise CircuitError(f"{gate}: classical bit {gate.clbit} out of range")
            if gate.clbit in self._written:
                raise CircuitError(f"{gate}: classical bit c{gate.clbit} already written")
            self._written.add(gate.clbit)
        if gate.condition is not None and gate.condition not in self._written:
            raise CircuitError(f"{gate}: reads classical bit c{gate.condition} before it is written")
        self.gates.append(gate)
        return self

    def add(self, kind, *qubits: int, clbit: int | None = None,
            condition: int | None = None) -> Circuit:
        return self.append(Gate(GateKind(kind), tuple(qubits), clbit, condition))

    def measure(self, qubit: int, basis: str = "z") -> int:
        bit = self.add_clbit()
        kind = GateKind.MEASURE_Z if basis == "z" else GateKind.MEASURE_X
        self.add(kind, qubit, clbit=bit)
        return bit

    def mark(self, name: str, start: int, stop: int | None = None) -> None:
        self.segments.append(Segment(name, start, len(self.gates) if stop is None else stop))

    def extend(self, other: Circuit, prefix: str | None = None) -> Circuit:
        """Append another circuit over the same qubits, remapping its classical bits."""
        if other.qubit_count > self.qubit_count:
            raise CircuitError("cannot extend with a circuit on more qubits")
        offset_g = len(self.gates)
        bitmap = {b: self.add_clbit() for b in range(other.classical_bit_count)}
        for g in other.gates:
            self.append(Gate(g.kind, g.qubits,
                             None if g.clbit is None else bitmap[g.clbit],
                             None if g.condition is None else bitmap[g.condition]))
        for s in other.segments:
            name = f"{prefix}.{s.name}" if prefix else s.name
            self.segments.append(Segment(name, s.start + offset_g, s.stop + offset_g))
        for m in other.messages:
            self.messages.append(Message(m.invocation, m.step, m.sender, m.receiver, bitmap[m.bit]))
        return self

    def segment(self, name: str) -> Segment:
        for s in self.segments:
            if s.name == name:
                return s
        raise KeyError(f"no segment named {name!r}")

    def segment_names(self) -> list[str]:
        return [s.name for s in self.segments]

    def subcircuit(self, start: int, stop: int) -> Circuit:
        """Gates ``start:stop`` over the same wires; classical bits kept as-is."""
        sub = Circuit(list(self.qubits), self.classical_bit_count)
        sub._written = {g.clbit for g in self.gates[:start] if g.clbit is not None}
        for g in self.gates[start:stop]:
            sub.append(g)
        return sub

    def is_unitary(self) -> bool:
        return all(g.is_unitary() for g in self.gates)

    def count(self, kind) -> int:
        kind = GateKind(kind)
        return sum(1 for g in self.gates if g.kind is kind)

    def structure(self) -> tuple:
        """Hashable structural fingerprint used for equality after round-trips."""
        return (tuple(self.qubits), self.classical_bit_count, tuple(self.gates),
                tuple(self.segments), tuple(self.messages))

    def __eq__(self, other) -> bool:
        return isinstance(other, Circuit) and self.structure() == other.structure()

    def __len__(self) -> int:
        return len(self.gates)


def append(c: Circuit, g: Gate) -> Circuit:
    return c.append(g)


def controlled_x(c: Circuit, controls: Sequence[int], target: int) -> Circuit:
    """Emit X, CX or MCX depending on the number of controls."""
    if not controls:
        return c.add(GateKind.X, target)
    if len(controls) == 1:
        return c.add(GateKind.CX, controls[0], target)
    return c.add(GateKind.MCX, *controls, target)


def invert(c: Circuit) -> Circuit:
    """Reverse a measurement-free circuit. Every primitive here is self-inverse."""
    for g in c.gates:
        if not g.is_unitary():
            raise CircuitError(f"cannot invert non-unitary gate {g}")
    out = Circuit(list(c.qubits), c.classical_bit_count)
    for g in reversed(c.gates):
        out.append(g)
    n = len(c.gates)
    for s in c.segments:
        out.segments.append(Segment(s.name, n - s.stop, n - s.start))
    return out


def layers(c: Circuit, start: int = 0, stop: int | None = None) -> list[list[int]]:
    """ASAP layering of gates ``start:stop``; returns gate indices per layer."""
    stop = len(c.gates) if stop is None else stop
    q_level: dict[int, int] = {}
    b_level: dict[int, int] = {}
    out: list[list[int]] = []
    for i in range(start, stop):
        g = c.gates[i]
        bits = [b for b in (g.clbit, g.condition) if b is not None]
        lvl = 1 + max([q_level.get(q, 0) for q in g.qubits] + [b_level.get(b, 0) for b in bits])
        for q in g.qubits:
            q_level[q] = lvl
        for b in bits:
            b_level[b] = lvl
        if lvl > len(out):
            out.append([])
        out[lvl - 1].append(i)
    return out


def depth(c: Circuit, segment: str | None = None) -> int:
    if segment is None:
        return len(layers(c))
    s = c.segment(segment)
    return len(layers(c, s.start, s.stop))


# --------------------------------------------------------------------------- serialization


def to_dict(c: Circuit) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "qubits": [{"index": q.index, "label": q.label} for q in c.qubits],
        "classical_bits": c.classical_bit_count,
        "gates": [g.to_dict() for g in c.gates],
        "segments": [{"name": s.name, "start": s.start, "stop": s.stop} for s in c.segments],
        "messages": [m.to_dict() for m in c.messages],
    }


def serialize(c: Circuit, indent: int | None = None) -> str:
    return json.dumps(to_dict(c), indent=indent, sort_keys=True)


def from_dict(doc: dict) -> Circuit:
    if not isinstance(doc, dict):
        raise CircuitError("circuit document must be a JSON object")
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise CircuitError(f"not a {FORMAT_NAME} {FORMAT_VERSION} document")
    try:
        qubits = doc["qubits"]
        c = Circuit()
        for pos, q in enumerate(qubits):
            if q["index"] != pos:
                raise CircuitError(f"qubit entries must be listed in index order (at {pos})")
            c.add_qubit(str(q["label"]))
        c.classical_bit_count = int(doc["classical_bits"])
        for g in doc["gates"]:
            c.append(Gate(GateKind(g["kind"]), tuple(g["qubits"]),
                          g.get("clbit"), g.get("condition")))
        for s in doc.get("segments", []):
            seg = Segment(str(s["name"]), int(s["start"]), int(s["stop"]))
            if not 0 <= seg.start <= seg.stop <= len(c.gates):
                raise CircuitError(f"segment {seg.name!r} out of range")
            c.segments.append(seg)
        for m in doc.get("messages", []):
            msg = Message(int(m["invocation"]), int(m["step"]), str(m["sender"]),
                          str(m["receiver"]), int(m["bit"]))
            if not 0 <= msg.bit < c.classical_bit_count:
                raise CircuitError(f"message references unknown bit c{msg.bit}")
            c.messages.append(msg)
    except (KeyError, TypeError) as exc:
        raise CircuitError(f"malformed circuit document: {exc!r}") from None
    except ValueError as exc:
        if isinstance(exc, CircuitError):
            raise
        raise CircuitError(f"malformed circuit document: {exc}") from None
    return c


def parse(text: str) -> Circuit:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CircuitError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CircuitError("circuit document must be a JSON object")
    return from_dict(doc)


def disassemble(c: Circuit) -> str:
    """Flat one-gate-per-line listing, handy for diffs."""
    lines = [f"; qubits={c.qubit_count} clbits={c.classical_bit_count}"]
    lines += [f"; q{q.index} = {q.label}" for q in c.qubits]
    starts: dict[int, list[str]] = {}
    for s in c.segments:
        starts.setdefault(s.start, []).append(s.name)
    for i, g in enumerate(c.gates):
        for name in starts.get(i, []):
            lines.append(f"[{name}]")
        lines.append(f"{i:5d}  {g}")
    return "\n".join(lines) + "\n"
