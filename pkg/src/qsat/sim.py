"""Dense state-vector simulator with mid-circuit measurement.

Bit convention: basis index ``k`` has qubit ``j`` equal to ``(k >> j) & 1``
(qubit 0 is the least significant bit). Readout strings are rendered with the
first readout qubit leftmost.

Execution is organised around *branches*: a branch is a pure state plus the
classical bits written so far. Exact runs split a branch at every measurement
with its Born weights; sampled runs split the set of shots riding on a branch
according to each shot's own random stream. Branches whose future cannot be
told apart (same live classical bits, same state up to global phase) are
merged. Merging never changes the per-shot outcome sequence or the exact
distribution, it only avoids redundant work.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuit import MEASUREMENTS, Circuit, Gate, GateKind

DEFAULT_QUBIT_CAP = 26
DEFAULT_BRANCH_CAP = 2**20
_SQRT_HALF = 1.0 / math.sqrt(2.0)
_ZERO_PROB = 1e-14


class SimulationError(RuntimeError):
    pass


class ResourceLimitError(SimulationError):
    """A configured qubit or branch cap was exceeded."""


def qubit_cap() -> int:
    return int(os.environ.get("QSAT_MAX_QUBITS", DEFAULT_QUBIT_CAP))


def _check_cap(n: int) -> None:
    cap = qubit_cap()
    if n > cap:
        raise ResourceLimitError(
            f"{n} qubits exceed the simulator cap of {cap} (set QSAT_MAX_QUBITS to raise it)"
        )


# --------------------------------------------------------------------------- state


@dataclass
class StateVector:
    n: int
    amplitudes: np.ndarray

    @classmethod
    def zero(cls, n: int) -> StateVector:
        _check_cap(n)
        amps = np.zeros(1 << n, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n, amps)

    @classmethod
    def from_amplitudes(cls, amps, normalize: bool = False) -> StateVector:
        amps = np.array(amps, dtype=np.complex128).ravel()
        n = int(round(math.log2(amps.size)))
        if 1 << n != amps.size:
            raise ValueError("amplitude count must be a power of two")
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(n, amps)

    def copy(self) -> StateVector:
        return StateVector(self.n, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        a = self.amplitudes
        return a.real**2 + a.imag**2

    def __getitem__(self, bits: str | int) -> complex:
        """Amplitude by index, or by a bit string written qubit 0 first."""
        if isinstance(bits, str):
            return complex(self.amplitudes[sum(int(b) << j for j, b in enumerate(bits))])
        return complex(self.amplitudes[bits])

    # backend interface shared with SparseState; the branch engine only uses these
    def apply(self, g: Gate) -> None:
        _apply_unitary(self.amplitudes, self.n, g)

    def prob_one(self, q: int) -> float:
        return _prob_one(self.amplitudes, self.n, q)

    def collapse(self, q: int, outcome: int, prob: float) -> None:
        _collapse(self.amplitudes, self.n, q, outcome, prob)

    def reset_if_separable(self, q: int) -> bool:
        return _reset_if_separable(self.amplitudes, self.n, q)

    def same_ray(self, other: StateVector) -> bool:
        return _same_ray(self.amplitudes, other.amplitudes)

    def amplitudes_at(self, indices) -> np.ndarray:
        return self.amplitudes[np.asarray(indices, dtype=np.int64)].copy()

    def marginal(self, readout: Sequence[int]) -> np.ndarray:
        """Readout distribution indexed with ``readout[0]`` as the most significant bit."""
        n = self.n
        p = self.probabilities().reshape((2,) * n)
        keep = [_axis(n, q) for q in readout]
        others = tuple(a for a in range(n) if a not in keep)
        p = p.sum(axis=others) if others else p
        remaining = sorted(keep)
        p = np.transpose(p, [remaining.index(a) for a in keep]) if keep else p
        return np.asarray(p).ravel()


class SparseState:
    """Sorted (basis index, amplitude) pairs with zeros dropped.

    Same interface as :class:`StateVector`. Meant for wide registers whose
    states stay close to basis states, such as distributed circuits checked
    on copy-consistent inputs; memory grows with the support, not with 2^n.
    """

    _DROP = 1e-15

    def __init__(self, n: int, indices, amps, canonical: bool = False):
        if n > 62:
            raise ResourceLimitError(f"sparse states support at most 62 qubits, got {n}")
        self.n = n
        self.indices = np.asarray(indices, dtype=np.int64)
        self.amps = np.asarray(amps, dtype=np.complex128)
        if not canonical:
            self._combine()

    @classmethod
    def zero(cls, n: int) -> SparseState:
        return cls(n, [0], [1.0], canonical=True)

    @classmethod
    def from_dense(cls, s: StateVector) -> SparseState:
        nz = np.flatnonzero(np.abs(s.amplitudes) > cls._DROP)
        return cls(s.n, nz, s.amplitudes[nz], canonical=True)

    def to_dense(self) -> StateVector:
        _check_cap(self.n)
        amps = np.zeros(1 << self.n, dtype=np.complex128)
        amps[self.indices] = self.amps
        return StateVector(self.n, amps)

    def _combine(self) -> None:
        uniq, inv = np.unique(self.indices, return_inverse=True)
        out = np.zeros(uniq.shape[0], dtype=np.complex128)
        np.add.at(out, inv, self.amps)
        keep = np.abs(out) > self._DROP
        self.indices, self.amps = uniq[keep], out[keep]

    def _sort(self) -> None:
        order = np.argsort(self.indices, kind="stable")
        self.indices, self.amps = self.indices[order], self.amps[order]

    def copy(self) -> SparseState:
        return SparseState(self.n, self.indices.copy(), self.amps.copy(), canonical=True)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def __getitem__(self, k: int) -> complex:
        return complex(self.amplitudes_at([k])[0])

    @staticmethod
    def _mask(qubits: Sequence[int]) -> int:
        m = 0
        for q in qubits:
            m |= 1 << q
        return m

    def apply(self, g: Gate) -> None:
        k = g.kind
        idx = self.indices
        if k is GateKind.FANOUT:
            sel = ((idx >> g.qubits[0]) & 1) == 1
            idx[sel] ^= self._mask(g.qubits[1:])
            self._sort()
        elif k in (GateKind.X, GateKind.CX, GateKind.MCX):
            cm = self._mask(g.controls)
            sel = (idx & cm) == cm
            idx[sel] ^= 1 << g.qubits[-1]
            self._sort()
        elif k in (GateKind.Z, GateKind.MCZ):
            m = self._mask(g.qubits)
            self.amps[(idx & m) == m] *= -1
        elif k is GateKind.H:
            b = 1 << g.qubits[0]
            bit = (idx & b) != 0
            base = idx & ~b
            self.indices = np.concatenate([base, base | b])
            self.amps = np.concatenate([self.amps, np.where(bit, -self.amps, self.amps)]) * _SQRT_HALF
            self._combine()
        else:
            raise SimulationError(f"{k.value} is not a unitary primitive")

    def prob_one(self, q: int) -> float:
        sel = ((self.indices >> q) & 1) == 1
        a = self.amps[sel]
        return float(np.sum(a.real**2 + a.imag**2))

    def collapse(self, q: int, outcome: int, prob: float) -> None:
        keep = ((self.indices >> q) & 1) == outcome
        self.indices = self.indices[keep]
        self.amps = self.amps[keep] / math.sqrt(prob)

    def reset_if_separable(self, q: int) -> bool:
        b = 1 << q
        one = (self.indices & b) != 0
        a0, a1 = self.amps[~one], self.amps[one]
        p0 = float(np.sum(a0.real**2 + a0.imag**2))
        p1 = float(np.sum(a1.real**2 + a1.imag**2))
        if p1 <= _ZERO_PROB:
            self.indices, self.amps = self.indices[~one], a0 / math.sqrt(p0)
            return True
        if p0 <= _ZERO_PROB:
            self.indices, self.amps = self.indices[one] ^ b, a1 / math.sqrt(p1)
            self._sort()
            return True
        _, x, y = np.intersect1d(self.indices[~one], self.indices[one] ^ b, return_indices=True)
        overlap = abs(np.vdot(a0[x], a1[y])) ** 2
        if overlap >= p0 * p1 * (1.0 - 1e-12):
            self.indices, self.amps = self.indices[~one], a0 / math.sqrt(p0)
            return True
        return False

    def same_ray(self, other: SparseState) -> bool:
        _, x, y = np.intersect1d(self.indices, other.indices, return_indices=True)
        return abs(abs(np.vdot(self.amps[x], other.amps[y])) - 1.0) < 1e-12

    def amplitudes_at(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        pos = np.searchsorted(self.indices, indices)
        pos = np.minimum(pos, max(0, self.indices.shape[0] - 1))
        out = np.zeros(indices.shape, dtype=np.complex128)
        if self.indices.shape[0]:
            hit = self.indices[pos] == indices
            out[hit] = self.amps[pos[hit]]
        return out

    def marginal(self, readout: Sequence[int]) -> np.ndarray:
        r = len(readout)
        key = np.zeros(self.indices.shape, dtype=np.int64)
        for pos, q in enumerate(readout):
            key |= ((self.indices >> q) & 1) << (r - 1 - pos)
        w = self.amps.real**2 + self.amps.imag**2
        return np.bincount(key, weights=w, minlength=1 << r).astype(float)


def _axis(n: int, q: int) -> int:
    return n - 1 - q


def _index(n: int, fixed: dict[int, int]) -> tuple:
    idx: list = [slice(None)] * n
    for q, v in fixed.items():
        idx[_axis(n, q)] = slice(v, v + 1)
    return tuple(idx)


def _apply_unitary(amps: np.ndarray, n: int, gate: Gate) -> None:
    """In-place action of a unitary primitive on a flat amplitude array."""
    view = amps.reshape((2,) * n)
    k = gate.kind
    if k is GateKind.FANOUT:
        ctrl = gate.qubits[0]
        for t in gate.qubits[1:]:
            _flip(view, n, (ctrl,), t)
    elif k in (GateKind.X, GateKind.CX, GateKind.MCX):
        _flip(view, n, gate.controls, gate.qubits[-1])
    elif k in (GateKind.Z, GateKind.MCZ):
        view[_index(n, {q: 1 for q in gate.qubits})] *= -1
    elif k is GateKind.H:
        q = gate.qubits[0]
        s0 = view[_index(n, {q: 0})]
        s1 = view[_index(n, {q: 1})]
        a = s0.copy()
        s0 += s1
        s0 *= _SQRT_HALF
        a -= s1
        a *= _SQRT_HALF
        s1[...] = a
    else:
        raise SimulationError(f"{k.value} is not a unitary primitive")


def _flip(view: np.ndarray, n: int, controls: Sequence[int], target: int) -> None:
    fixed = {c: 1 for c in controls}
    s0 = view[_index(n, {**fixed, target: 0})]
    s1 = view[_index(n, {**fixed, target: 1})]
    tmp = s0.copy()
    s0[...] = s1
    s1[...] = tmp


def _prob_one(amps: np.ndarray, n: int, q: int) -> float:
    s1 = amps.reshape((2,) * n)[_index(n, {q: 1})]
    return float(np.sum(s1.real**2 + s1.imag**2))


def _collapse(amps: np.ndarray, n: int, q: int, outcome: int, prob: float) -> None:
    view = amps.reshape((2,) * n)
    view[_index(n, {q: 1 - outcome})] = 0.0
    view[_index(n, {q: outcome})] /= math.sqrt(prob)


def _reset_if_separable(amps: np.ndarray, n: int, q: int) -> bool:
    """Reset ``q`` to |0> without branching when the outcome cannot matter.

    That is the case when one measurement outcome has zero weight or when
    both conditional states are parallel (the qubit is unentangled). Returns
    False if a genuine branch is needed.
    """
    view = amps.reshape((2,) * n)
    s0 = view[_index(n, {q: 0})]
    s1 = view[_index(n, {q: 1})]
    p0 = float(np.sum(s0.real**2 + s0.imag**2))
    p1 = float(np.sum(s1.real**2 + s1.imag**2))
    if p1 <= _ZERO_PROB:
        s1[...] = 0.0
        s0 /= math.sqrt(p0)
        return True
    if p0 <= _ZERO_PROB:
        s0[...] = s1 / math.sqrt(p1)
        s1[...] = 0.0
        return True
    overlap = abs(np.vdot(s0, s1)) ** 2
    if overlap >= p0 * p1 * (1.0 - 1e-12):
        s0 /= math.sqrt(p0)
        s1[...] = 0.0
        return True
    return False


def apply_gate(s: StateVector, g: Gate, classical: dict[int, int],
               draw: Callable[[], float] | None = None, check_norm: bool = False) -> StateVector:
    """Apply one gate in place and return the state.

    Measurements and genuine resets need ``draw`` (uniform in [0, 1)); the
    outcome is 1 when the draw falls below the Born weight of |1>.
    """
    k = g.kind
    if k in (GateKind.COND_X, GateKind.COND_Z):
        if g.condition not in classical:
            raise SimulationError(f"{g}: condition bit c{g.condition} undefined")
        if classical[g.condition]:
            s.apply(Gate(GateKind.X if k is GateKind.COND_X else GateKind.Z, g.qubits))
    elif k in MEASUREMENTS:
        q = g.qubits[0]
        if k is GateKind.MEASURE_X:
            s.apply(Gate(GateKind.H, (q,)))
        p1 = s.prob_one(q)
        outcome = _sample_outcome(p1, draw)
        s.collapse(q, outcome, p1 if outcome else 1 - p1)
        if k is GateKind.MEASURE_X:
            s.apply(Gate(GateKind.H, (q,)))
        classical[g.clbit] = outcome
    elif k is GateKind.RESET:
        q = g.qubits[0]
        if not s.reset_if_separable(q):
            p1 = s.prob_one(q)
            outcome = _sample_outcome(p1, draw)
            s.collapse(q, outcome, p1 if outcome else 1 - p1)
            if outcome:
                s.apply(Gate(GateKind.X, (q,)))
    else:
        s.apply(g)
    if check_norm:
        drift = abs(s.norm() - 1.0)
        if drift > 1e-6:
            raise SimulationError(f"norm drift {drift:.3e} after {g}")
    return s


def _sample_outcome(p1: float, draw: Callable[[], float] | None) -> int:
    if p1 <= _ZERO_PROB:
        return 0
    if p1 >= 1.0 - _ZERO_PROB:
        return 1
    if draw is None:
        raise SimulationError("a random draw is needed for this measurement")
    return 1 if draw() < p1 else 0


def statevector_of(c: Circuit, initial: StateVector | np.ndarray | None = None,
                   check_norm: bool = False) -> StateVector:
    """Final state of a measurement-free circuit, starting from |0...0> by default."""
    for g in c.gates:
        if not g.is_unitary():
            raise SimulationError(f"statevector_of needs a measurement-free circuit, found {g}")
    s = _initial(c, initial)
    for g in c.gates:
        s.apply(g)
        if check_norm and abs(s.norm() - 1.0) > 1e-9:
            raise SimulationError(f"norm drift after {g}")
    return s


def _initial(c: Circuit, initial) -> StateVector:
    if initial is None:
        return StateVector.zero(c.qubit_count)
    if isinstance(initial, (StateVector, SparseState)):
        s = initial.copy()
    else:
        s = StateVector.from_amplitudes(initial)
    if s.n != c.qubit_count:
        raise SimulationError(f"initial state has {s.n} qubits, circuit has {c.qubit_count}")
    return s


# --------------------------------------------------------------------------- branch engine


@dataclass
class Branch:
    state: StateVector
    bits: dict[int, int]
    prob: float = 1.0
    shots: np.ndarray | None = None


@dataclass(frozen=True)
class MeasurementRecord:
    """Born weights seen by one branch at one measurement gate."""

    gate: int
    kind: str
    branch_prob: float
    p0: float
    p1: float


def _last_reads(c: Circuit) -> dict[int, int]:
    last: dict[int, int] = {}
    for i, g in enumerate(c.gates):
        if g.condition is not None:
            last[g.condition] = i
    return last


def _same_ray(a: np.ndarray, b: np.ndarray) -> bool:
    return abs(abs(np.vdot(a, b)) - 1.0) < 1e-12


class _Engine:
    def __init__(self, c: Circuit, initial, *, merge: bool, branch_cap: int, workers: int,
                 check_norm: bool):
        self.c = c
        self.merge = merge
        self.branch_cap = branch_cap
        self.workers = max(1, int(workers))
        self.check_norm = check_norm
        self.last_read = _last_reads(c)
        self.branches = [Branch(_initial(c, initial), {})]
        self.records: list[MeasurementRecord] = []

    # hooks for the sampled/exact variants
    def split(self, i: int, g: Gate, br: Branch, p1: float) -> list[Branch]:
        raise NotImplementedError

    def run(self) -> list[Branch]:
        executor = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        try:
            for i, g in enumerate(self.c.gates):
                self._step(i, g, executor)
        finally:
            if executor is not None:
                executor.shutdown()
        return self.branches

    def _step(self, i: int, g: Gate, executor) -> None:
        k = g.kind
        if g.is_unitary() or k in (GateKind.COND_X, GateKind.COND_Z):
            def work(br: Branch) -> None:
                apply_gate(br.state, g, br.bits, check_norm=self.check_norm)
            if executor is not None and len(self.branches) > 1:
                list(executor.map(work, self.branches))
            else:
                for br in self.branches:
                    work(br)
        elif k in MEASUREMENTS or k is GateKind.RESET:
            q = g.qubits[0]
            out: list[Branch] = []
            for br in self.branches:
                if k is GateKind.RESET and br.state.reset_if_separable(q):
                    out.append(br)
                    continue
                if k is GateKind.MEASURE_X:
                    br.state.apply(Gate(GateKind.H, (q,)))
                p1 = br.state.prob_one(q)
                if k in MEASUREMENTS:
                    self.records.append(MeasurementRecord(i, k.value, br.prob, 1.0 - p1, p1))
                out.extend(self.split(i, g, br, p1))
            self.branches = out
            if len(self.branches) > self.branch_cap:
                raise ResourceLimitError(
                    f"{len(self.branches)} live branches exceed the cap of {self.branch_cap}"
                )
        else:  # pragma: no cover - every kind is handled above
            raise SimulationError(f"unhandled gate {g}")
        if self.merge and (k in MEASUREMENTS or k is GateKind.RESET or g.condition is not None):
            self._merge(i)

    def _outcome_branch(self, g: Gate, br: Branch, outcome: int, prob: float,
                        reuse_state: bool) -> Branch:
        q = g.qubits[0]
        state = br.state if reuse_state else br.state.copy()
        state.collapse(q, outcome, prob)
        bits = dict(br.bits)
        if g.kind is GateKind.MEASURE_X:
            state.apply(Gate(GateKind.H, (q,)))
        if g.kind in MEASUREMENTS:
            bits[g.clbit] = outcome
        elif outcome:  # reset
            state.apply(Gate(GateKind.X, (q,)))
        return Branch(state, bits, br.prob * prob, None)

    def _live_key(self, br: Branch, i: int) -> tuple:
        return tuple(sorted((b, v) for b, v in br.bits.items() if self.last_read.get(b, -1) > i))

    def _merge(self, i: int) -> None:
        if len(self.branches) < 2:
            return
        groups: dict[tuple, list[Branch]] = {}
        for br in self.branches:
            groups.setdefault(self._live_key(br, i), []).append(br)
        merged: list[Branch] = []
        for members in groups.values():
            reps: list[Branch] = []
            for br in members:
                for rep in reps:
                    if rep.state.same_ray(br.state):
                        self.absorb(rep, br)
                        break
                else:
                    reps.append(br)
            merged.extend(reps)
        self.branches = merged

    def absorb(self, rep: Branch, other: Branch) -> None:
        rep.prob += other.prob


class _ExactEngine(_Engine):
    def split(self, i, g, br, p1):
        out = []
        p0 = 1.0 - p1
        if p0 > _ZERO_PROB and p1 > _ZERO_PROB:
            out.append(self._outcome_branch(g, br, 0, p0, reuse_state=False))
            out.append(self._outcome_branch(g, br, 1, p1, reuse_state=True))
        else:
            outcome = 1 if p1 > _ZERO_PROB else 0
            out.append(self._outcome_branch(g, br, outcome, p1 if outcome else p0, reuse_state=True))
            out[-1].prob = br.prob
        return out


class _ShotEngine(_Engine):
    def __init__(self, c, initial, shots: int, seed: int, **kw):
        super().__init__(c, initial, **kw)
        self.seed = int(seed)
        self.branches[0].shots = np.arange(shots)
        self.streams: dict[int, np.random.Generator] = {}
        self.record_bits = np.full((shots, max(1, c.classical_bit_count)), -1, dtype=np.int8)

    def stream(self, shot: int) -> np.random.Generator:
        gen = self.streams.get(shot)
        if gen is None:
            gen = shot_stream(self.seed, shot)
            self.streams[shot] = gen
        return gen

    def draws(self, shots: np.ndarray) -> np.ndarray:
        return np.array([self.stream(int(s)).random() for s in shots])

    def split(self, i, g, br, p1):
        p0 = 1.0 - p1
        if p1 <= _ZERO_PROB or p0 <= _ZERO_PROB:
            outcome = 1 if p1 > _ZERO_PROB else 0
            ones = br.shots if outcome else br.shots[:0]
            zeros = br.shots[:0] if outcome else br.shots
        else:
            hit = self.draws(br.shots) < p1
            ones, zeros = br.shots[hit], br.shots[~hit]
        out = []
        for outcome, members, prob in ((0, zeros, p0), (1, ones, p1)):
            if members.size == 0:
                continue
            last = outcome == 1 or ones.size == 0
            nb = self._outcome_branch(g, br, outcome, prob, reuse_state=last)
            nb.shots = members
            nb.prob = 1.0
            if g.clbit is not None:
                self.record_bits[members, g.clbit] = outcome
            out.append(nb)
        return out

    def absorb(self, rep, other):
        rep.shots = np.sort(np.concatenate([rep.shots, other.shots]))


def shot_stream(seed: int, shot: int) -> np.random.Generator:
    """Counter-based random stream for one shot, keyed by (seed, shot index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(shot),))))


# --------------------------------------------------------------------------- outcomes


@dataclass
class RunOutcome:
    readout: tuple[int, ...]
    shots: int = 0
    seed: int | None = None
    histogram: dict[str, int] = field(default_factory=dict)
    exact_distribution: dict[str, float] | None = None
    measurements: list[MeasurementRecord] = field(default_factory=list, repr=False)
    classical_records: np.ndarray | None = field(default=None, repr=False)

    def probability(self, bits: str) -> float:
        if self.exact_distribution is None:
            raise ValueError("no exact distribution on this outcome")
        return self.exact_distribution.get(bits, 0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.histogram:
            w.writerow(["bitstring", "count"])
            for k in sorted(self.histogram):
                w.writerow([k, self.histogram[k]])
        else:
            w.writerow(["bitstring", "probability"])
            for k in sorted(self.exact_distribution or {}):
                w.writerow([k, repr(self.exact_distribution[k])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        d: dict = {"readout": list(self.readout), "shots": self.shots, "seed": self.seed}
        if self.histogram:
            d["histogram"] = dict(sorted(self.histogram.items()))
        if self.exact_distribution is not None:
            d["exact_distribution"] = dict(sorted(self.exact_distribution.items()))
        return d

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, sort_keys=True, indent=2)


def _check_readout(c: Circuit, readout: Sequence[int]) -> tuple[int, ...]:
    readout = tuple(int(q) for q in readout)
    for q in readout:
        if not 0 <= q < c.qubit_count:
            raise SimulationError(f"readout qubit {q} out of range")
    if len(set(readout)) != len(readout):
        raise SimulationError("readout qubits must be distinct")
    return readout


def marginal(state: StateVector | SparseState, readout: Sequence[int]) -> np.ndarray:
    """Readout distribution indexed with ``readout[0]`` as the most significant bit."""
    return state.marginal(readout)


def _check_dense_cap(c: Circuit, initial) -> None:
    if not isinstance(initial, SparseState):
        _check_cap(c.qubit_count)


def _bitstrings(r: int) -> list[str]:
    return [format(i, f"0{r}b") if r else "" for i in range(1 << r)]


def run_exact(c: Circuit, readout: Sequence[int], *, initial=None, merge: bool = True,
              branch_cap: int = DEFAULT_BRANCH_CAP, workers: int = 1,
              check_norm: bool = False) -> RunOutcome:
    """Exact readout distribution, summing over every measurement branch."""
    readout = _check_readout(c, readout)
    _check_dense_cap(c, initial)
    eng = _ExactEngine(c, initial, merge=merge, branch_cap=branch_cap, workers=workers,
                       check_norm=check_norm)
    total = np.zeros(1 << len(readout))
    for br in eng.run():
        total += br.prob * marginal(br.state, readout)
    dist = {k: float(v) for k, v in zip(_bitstrings(len(readout)), total)}
    return RunOutcome(readout, exact_distribution=dist, measurements=eng.records)


def enumerate_branches(c: Circuit, *, initial=None, merge: bool = False,
                       branch_cap: int = DEFAULT_BRANCH_CAP) -> tuple[list[Branch], list[MeasurementRecord]]:
    """All final branches with their Born weights (unmerged by default)."""
    _check_dense_cap(c, initial)
    eng = _ExactEngine(c, initial, merge=merge, branch_cap=branch_cap, workers=1, check_norm=False)
    return eng.run(), eng.records


def sample_branches(c: Circuit, shots: int, seed: int, *, initial=None, merge: bool = True,
                    workers: int = 1) -> tuple[list[Branch], np.ndarray]:
    """Run ``shots`` seeded shots; returns final branches (with their shot indices)
    and the per-shot classical record (-1 for bits never written)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    _check_dense_cap(c, initial)
    eng = _ShotEngine(c, initial, shots, seed, merge=merge, branch_cap=max(DEFAULT_BRANCH_CAP, shots),
                      workers=workers, check_norm=False)
    return eng.run(), eng.record_bits[:, : c.classical_bit_count]


def run_shots(c: Circuit, shots: int, seed: int, readout: Sequence[int], *, initial=None,
              workers: int = 1) -> RunOutcome:
    """Sample ``shots`` executions from |0...0>; shot ``s`` uses stream (seed, s)."""
    readout = _check_readout(c, readout)
    branches, records = sample_branches(c, shots, seed, initial=initial, workers=workers)
    r = len(readout)
    outcomes = np.zeros(shots, dtype=np.int64)
    for br in branches:
        p = marginal(br.state, readout)
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        top = int(np.argmax(p))
        if p[top] >= 1.0 - _ZERO_PROB:
            outcomes[br.shots] = top
            continue
        for s in br.shots:
            u = shot_stream_readout(seed, int(s))
            outcomes[s] = min(int(np.searchsorted(cdf, u, side="right")), len(p) - 1)
    counts = np.bincount(outcomes, minlength=1 << r)
    hist = {k: int(v) for k, v in zip(_bitstrings(r), counts)}
    return RunOutcome(readout, shots=shots, seed=seed, histogram=hist, classical_records=records)


def shot_stream_readout(seed: int, shot: int) -> float:
    # separate stream so final readout never perturbs mid-circuit draws
    return float(np.random.Generator(np.random.Philox(
        np.random.SeedSequence(int(seed), spawn_key=(int(shot), 1)))).random())
