"""CNF formulas, DIMACS I/O and equivalently expanded formulas.

Variables are 0-based internally; DIMACS files use 1-based signed integers.
"""

from __future__ import annotations

import io
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import TextIO


class DimacsError(ValueError):
    """Malformed DIMACS input. ``line`` is the 1-based line number, if known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DimacsWarning(UserWarning):
    pass


@dataclass(frozen=True, order=True)
class Literal:
    variable: int
    negated: bool = False

    def __post_init__(self):
        if self.variable < 0:
            raise ValueError(f"variable index must be >= 0, got {self.variable}")

    def value(self, assignment: Sequence[int]) -> bool:
        return bool(assignment[self.variable]) != self.negated

    def to_dimacs(self) -> int:
        return -(self.variable + 1) if self.negated else self.variable + 1

    @classmethod
    def from_dimacs(cls, token: int) -> Literal:
        if token == 0:
            raise ValueError("0 is not a literal")
        return cls(abs(token) - 1, token < 0)

    def __str__(self) -> str:
        return f"~v{self.variable + 1}" if self.negated else f"v{self.variable + 1}"


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]

    def __post_init__(self):
        lits = tuple(self.literals)
        object.__setattr__(self, "literals", lits)
        if not lits:
            raise ValueError("empty clause")
        if len(set(lits)) != len(lits):
            raise ValueError(f"duplicate literal in clause {self}")
        variables = [lit.variable for lit in lits]
        if len(set(variables)) != len(variables):
            raise ValueError(f"tautological clause {self}")

    @classmethod
    def of(cls, *tokens: int) -> Clause:
        """Build a clause from DIMACS-style signed integers, e.g. ``Clause.of(-1, 2)``."""
        return cls(tuple(Literal.from_dimacs(t) for t in tokens))

    def __len__(self) -> int:
        return len(self.literals)

    def __iter__(self):
        return iter(self.literals)

    def satisfied(self, assignment: Sequence[int]) -> bool:
        return any(lit.value(assignment) for lit in self.literals)

    def __str__(self) -> str:
        return "(" + " | ".join(str(lit) for lit in self.literals) + ")"


@dataclass(frozen=True)
class Formula:
    variable_count: int
    clauses: tuple[Clause, ...]

    def __post_init__(self):
        clauses = tuple(self.clauses)
        object.__setattr__(self, "clauses", clauses)
        if self.variable_count < 1:
            raise ValueError("formula needs at least one variable")
        if not clauses:
            raise ValueError("formula needs at least one clause")
        for i, clause in enumerate(clauses):
            for lit in clause:
                if lit.variable >= self.variable_count:
                    raise ValueError(
                        f"clause {i + 1} references v{lit.variable + 1} "
                        f"but only {self.variable_count} variables declared"
                    )

    @classmethod
    def from_lists(cls, variable_count: int, clauses: Iterable[Iterable[int]]) -> Formula:
        return cls(variable_count, tuple(Clause.of(*c) for c in clauses))

    @property
    def clause_count(self) -> int:
        return len(self.clauses)

    def __str__(self) -> str:
        return " & ".join(str(c) for c in self.clauses)


def evaluate(f: Formula, assignment: Sequence[int]) -> bool:
    """Classical CNF semantics; ``assignment[j]`` is the value of variable j."""
    if len(assignment) != f.variable_count:
        raise ValueError(
            f"assignment has {len(assignment)} values, formula has {f.variable_count} variables"
        )
    return all(clause.satisfied(assignment) for clause in f.clauses)


# --------------------------------------------------------------------------- DIMACS


def parse_dimacs(source: str | TextIO) -> Formula:
    """Parse a DIMACS CNF document from a string or text stream.

    Clauses may span lines. A ``%`` line (SATLIB convention) ends the clause
    section. Repeated identical literals inside a clause are dropped with a
    :class:`DimacsWarning`; tautological and empty clauses are errors.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source

    header: tuple[int, int] | None = None
    header_line = None
    clauses: list[Clause] = []
    current: list[int] = []
    current_start: int | None = None
    lineno = 0

    def close_clause(end_line: int) -> None:
        nonlocal current, current_start
        start = current_start if current_start is not None else end_line
        if not current:
            raise DimacsError("empty clause", end_line)
        seen: list[int] = []
        for tok in current:
            if tok in seen:
                warnings.warn(
                    f"line {start}: duplicate literal {tok} dropped", DimacsWarning, stacklevel=3
                )
                continue
            if -tok in seen:
                raise DimacsError(f"tautological clause (contains {abs(tok)} and {-abs(tok)})", start)
            seen.append(tok)
        clauses.append(Clause.of(*seen))
        current = []
        current_start = None

    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            if header is not None:
                raise DimacsError("duplicate problem line", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"malformed problem line {line!r}", lineno)
            try:
                nvars, nclauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"malformed problem line {line!r}", lineno) from None
            if nvars < 1 or nclauses < 1:
                raise DimacsError("problem line needs positive variable and clause counts", lineno)
            header, header_line = (nvars, nclauses), lineno
            continue
        if header is None:
            raise DimacsError("clause data before problem line", lineno)
        for tok_text in line.split():
            try:
                tok = int(tok_text)
            except ValueError:
                raise DimacsError(f"not an integer: {tok_text!r}", lineno) from None
            if tok == 0:
                close_clause(lineno)
                continue
            if abs(tok) > header[0]:
                raise DimacsError(
                    f"variable {abs(tok)} out of range (header declares {header[0]})", lineno
                )
            if current_start is None:
                current_start = lineno
            current.append(tok)

    if header is None:
        raise DimacsError("missing problem line 'p cnf <vars> <clauses>'", lineno or None)
    if current:
        raise DimacsError("unterminated clause (missing trailing 0)", current_start)
    if len(clauses) != header[1]:
        raise DimacsError(
            f"header declares {header[1]} clauses, found {len(clauses)}", header_line
        )
    return Formula(header[0], tuple(clauses))


def to_dimacs(f: Formula) -> str:
    """Canonical DIMACS text: header, then one clause per line."""
    lines = [f"p cnf {f.variable_count} {f.clause_count}"]
    for clause in f.clauses:
        lines.append(" ".join(str(lit.to_dimacs()) for lit in clause) + " 0")
    return "\n".join(lines) + "\n"


def read_dimacs(path) -> Formula:
    with open(path, encoding="utf-8") as fh:
        return parse_dimacs(fh)


# --------------------------------------------------------------------------- expansion

Slot = tuple[int, int]  # (clause index, literal index)


@dataclass(frozen=True)
class ExpandedFormula:
    """A formula where every literal occurrence owns a fresh copy of its variable.

    ``occurrence_map[v]`` lists the slots of variable ``v`` in clause order;
    the first slot is the representative copy (the variable itself).
    Expanded variables are numbered by slot in clause order, so
    ``slot_ids[(i, j)]`` is the expanded-variable index of literal j of clause i.
    """

    base: Formula
    occurrence_map: tuple[tuple[Slot, ...], ...]
    slot_ids: dict = field(compare=False, repr=False)

    @property
    def expanded_variable_count(self) -> int:
        return sum(len(occ) for occ in self.occurrence_map)

    @property
    def occurrence_counts(self) -> tuple[int, ...]:
        return tuple(len(occ) for occ in self.occurrence_map)

    @property
    def k_max(self) -> int:
        return max(self.occurrence_counts)

    def representative(self, variable: int) -> Slot | None:
        occ = self.occurrence_map[variable]
        return occ[0] if occ else None

    def companions(self, variable: int) -> tuple[Slot, ...]:
        return self.occurrence_map[variable][1:]

    def expand_assignment(self, assignment: Sequence[int]) -> list[int]:
        """Lift an assignment of the base variables to the expanded ones."""
        out = [0] * self.expanded_variable_count
        for (ci, li), eid in self.slot_ids.items():
            out[eid] = int(assignment[self.base.clauses[ci].literals[li].variable])
        return out


def expand(f: Formula) -> ExpandedFormula:
    occurrences: list[list[Slot]] = [[] for _ in range(f.variable_count)]
    slot_ids: dict[Slot, int] = {}
    for ci, clause in enumerate(f.clauses):
        for li, lit in enumerate(clause.literals):
            occurrences[lit.variable].append((ci, li))
            slot_ids[(ci, li)] = len(slot_ids)
    return ExpandedFormula(f, tuple(tuple(o) for o in occurrences), slot_ids)


def evaluate_expanded(ef: ExpandedFormula, values: Sequence[int]) -> bool:
    """Evaluate the expanded formula on a value per expanded variable."""
    if len(values) != ef.expanded_variable_count:
        raise ValueError(
            f"expected {ef.expanded_variable_count} expanded values, got {len(values)}"
        )
    for ci, clause in enumerate(ef.base.clauses):
        if not any(
            bool(values[ef.slot_ids[(ci, li)]]) != lit.negated
            for li, lit in enumerate(clause.literals)
        ):
            return False
    return True
