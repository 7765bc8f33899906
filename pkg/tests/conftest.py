import itertools
import pathlib
import warnings

import numpy as np
import pytest
from hypothesis import strategies as st

from qsat.formula import Clause, Formula, Literal, read_dimacs

CORPUS = pathlib.Path(__file__).parent / "corpus"


def running_example() -> Formula:
    """(a) & (~a | b) & (~a | c)."""
    return Formula.from_lists(3, [[1], [-1, 2], [-1, 3]])


@pytest.fixture
def F() -> Formula:
    return running_example()


def corpus_paths() -> list[pathlib.Path]:
    return sorted(CORPUS.glob("*.cnf"))


def load_corpus() -> dict[str, Formula]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {p.stem: read_dimacs(p) for p in corpus_paths()}


def truth_table(f: Formula) -> list[tuple[int, ...]]:
    """Satisfying assignments by plain iteration, v1 first."""
    out = []
    for bits in itertools.product((0, 1), repeat=f.variable_count):
        if all(any(bits[lit.variable] != lit.negated for lit in c.literals) for c in f.clauses):
            out.append(bits)
    return out


@st.composite
def clauses(draw, d: int, max_len: int = 3):
    k = draw(st.integers(1, min(d, max_len)))
    variables = draw(st.lists(st.integers(0, d - 1), min_size=k, max_size=k, unique=True))
    signs = draw(st.lists(st.booleans(), min_size=k, max_size=k))
    return Clause(tuple(Literal(v, s) for v, s in zip(variables, signs)))


@st.composite
def formulas(draw, max_vars: int = 4, max_clauses: int = 5, max_len: int = 3):
    d = draw(st.integers(1, max_vars))
    m = draw(st.integers(1, max_clauses))
    return Formula(d, tuple(draw(clauses(d, max_len)) for _ in range(m)))


def random_formula(rng: np.random.Generator, max_vars: int = 4, max_clauses: int = 5,
                   max_len: int = 3) -> Formula:
    d = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(1, max_clauses + 1))
    cls = []
    for _ in range(m):
        k = int(rng.integers(1, min(d, max_len) + 1))
        vs = rng.choice(d, size=k, replace=False)
        cls.append(Clause(tuple(Literal(int(v), bool(rng.integers(2))) for v in vs)))
    return Formula(d, tuple(cls))


def all_two_variable_formulas() -> list[Formula]:
    """Every formula over 2 variables with 1 or 2 distinct clauses."""
    lits = [Literal(v, s) for v in range(2) for s in (False, True)]
    cl = [Clause((a,)) for a in lits]
    cl += [Clause((a, b)) for a in lits for b in lits if a.variable < b.variable]
    out = [Formula(2, (c,)) for c in cl]
    out += [Formula(2, (a, b)) for a, b in itertools.combinations(cl, 2)]
    return out


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
