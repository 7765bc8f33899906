"""Command-line front end: ``qsat compile | solve | verify``.

Exit codes: 0 ok, 1 verification failure, 2 usage or I/O error, 3 resource cap.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence

from . import __version__
from .circuit import Circuit, CircuitError, depth, from_dict, to_dict
from .distnet import (
    DistributedProgram,
    PartitionError,
    build_distributed_diffuser,
    build_distributed_grover,
    build_distributed_oracle,
    check_locality,
    check_message_discipline,
    message_trace,
    trace_jsonl,
)
from .formula import DimacsError, Formula, read_dimacs
from .grover import (
    DISTRIBUTED,
    MODES,
    PARALLEL,
    GroverPlan,
    build_diffuser,
    build_grover,
    build_oracle,
    make_layout,
    plan_for,
)
from .sim import ResourceLimitError, SimulationError, run_exact, run_shots
from .verify import (
    Report,
    check_diffuser_equivalence,
    check_oracle_phases,
    check_protocol_equivalence,
)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3

log = logging.getLogger("qsat")


class UsageError(Exception):
    pass


def _load_formula(path: str) -> Formula:
    try:
        return read_dimacs(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror or e}") from None
    except DimacsError as e:
        raise UsageError(f"{path}: {e}") from None


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror or e}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON ({e})") from None


def _emit(text: str, path: str | None) -> None:
    if path:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as e:
            raise UsageError(f"cannot write {path}: {e.strerror or e}") from None
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- building


def _build(f: Formula, mode: str, component: str, plan: GroverPlan | None,
           partition: dict | None, measure: bool = True) -> tuple[Circuit, DistributedProgram | None]:
    if mode == DISTRIBUTED:
        if component == "oracle":
            prog = build_distributed_oracle(f, partition)
        elif component == "diffuser":
            prog = build_distributed_diffuser(f, partition)
        else:
            prog = build_distributed_grover(f, plan, partition, measure=measure)
        return prog.circuit, prog
    if partition is not None:
        raise UsageError("--partition only applies to distributed mode")
    if component == "grover":
        return build_grover(f, mode, plan, measure=measure), None
    layout = make_layout(f, mode)
    if component == "oracle":
        return build_oracle(layout.expanded, layout), None
    return build_diffuser(layout), None


def _stats(c: Circuit, prog: DistributedProgram | None, plan: GroverPlan | None) -> dict:
    stats: dict = {
        "qubits": c.qubit_count,
        "gates": len(c),
        "classical_bits": c.classical_bit_count,
        "depth": depth(c),
        "segment_depth": {name: depth(c, name) for name in sorted(set(c.segment_names()))},
    }
    if plan is not None:
        stats["iterations"] = plan.iterations
        stats["solutions"] = plan.M
        stats["search_space"] = plan.N
    if prog is not None:
        stats["protocol_invocations"] = dict(sorted(prog.invocation_counts().items()))
        stats["epr_pairs"] = dict(sorted(prog.pair_counts().items()))
        stats["messages"] = len(c.messages)
        stats["partition"] = prog.partition.to_spec(c.labels)
    return stats


def _stats_text(stats: dict) -> str:
    lines = []
    for k in ("qubits", "gates", "classical_bits", "depth", "iterations", "messages"):
        if k in stats:
            lines.append(f"{k}: {stats[k]}")
    for name, d in stats["segment_depth"].items():
        lines.append(f"depth[{name}]: {d}")
    for ctx, n in stats.get("protocol_invocations", {}).items():
        lines.append(f"invocations[{ctx}]: {n}")
    return "\n".join(lines) + "\n"


def _plan(f: Formula, mode: str, iterations: int | None) -> GroverPlan:
    # degenerate M = 0 or M = N cases are reported by the planner's logger
    return plan_for(f, iterations, mode)


def _setup_logging() -> None:
    log.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING)
    log.propagate = False


# --------------------------------------------------------------------------- commands


def cmd_compile(args) -> int:
    f = _load_formula(args.input)
    partition = _load_json(args.partition) if args.partition else None
    plan = _plan(f, args.mode, args.iterations) if args.component == "grover" else None
    c, prog = _build(f, args.mode, args.component, plan, partition)
    stats = _stats(c, prog, plan)
    doc = {"circuit": to_dict(c), "mode": args.mode, "component": args.component, "stats": stats}
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", args.output)
    sys.stderr.write(_stats_text(stats))
    return EXIT_OK


def cmd_solve(args) -> int:
    f = _load_formula(args.input)
    partition = _load_json(args.partition) if args.partition else None
    if args.shots < 1:
        raise UsageError("--shots must be >= 1")
    plan = _plan(f, args.mode, args.iterations)
    c, prog = _build(f, args.mode, "grover", plan, partition, measure=not args.exact)
    readout = make_layout(f, args.mode).representatives
    if args.exact:
        out = run_exact(c, readout, workers=args.workers)
    else:
        out = run_shots(c, args.shots, args.seed, readout, workers=args.workers)
    if args.trace:
        if prog is None:
            raise UsageError("--trace only applies to distributed mode")
        events = []
        if out.classical_records is not None:
            for shot, record in enumerate(out.classical_records):
                events.extend({"shot": shot, **e} for e in message_trace(c, record))
        _emit(trace_jsonl(events), args.trace)
    if args.format == "csv":
        _emit(out.to_csv(), args.output)
    else:
        extra = {"mode": args.mode, "iterations": plan.iterations, "solutions": plan.M,
                 "search_space": plan.N, "stats": {"qubits": c.qubit_count, "gates": len(c),
                                                   "messages": len(c.messages)}}
        if plan.diagnostic:
            extra["diagnostic"] = plan.diagnostic
        _emit(out.to_json(**extra) + "\n", args.output)
    return EXIT_OK


def _distributed_reports(f: Formula, trials: int, seed: int) -> list[Report]:
    prog = build_distributed_grover(f, plan_for(f, 1, DISTRIBUTED), measure=False)
    c = prog.circuit
    local = check_locality(c, prog.partition)
    msgs = check_message_discipline(prog)
    reports = [
        Report("locality", DISTRIBUTED, not local, {"gates": len(c)}, [str(v) for v in local]),
        Report("message-discipline", DISTRIBUTED, not msgs,
               {"messages": len(c.messages), "invocations": len(prog.invocations)}, msgs),
    ]
    shapes = sorted({
        (tuple(prog.partition.owner[q] for q in inv.remote_controls + inv.local_controls),
         inv.gate, inv.master)
        for inv in prog.invocations
    })
    for nodes, u, master in shapes:
        reports.append(check_protocol_equivalence(list(nodes), u, trials=trials, seed=seed,
                                                  target_node=master))
    return reports


def cmd_verify(args) -> int:
    f = _load_formula(args.input)
    modes = MODES if args.mode == "all" else (args.mode,)
    reports: list[Report] = []
    if args.circuit:
        if len(modes) != 1:
            raise UsageError("--circuit needs a single --mode")
        doc = _load_json(args.circuit)
        try:
            c = from_dict(doc.get("circuit", doc) if isinstance(doc, dict) else doc)
            layout = make_layout(f, modes[0])
            if c.labels[: layout.qubit_count] != list(layout.labels):
                raise CircuitError("qubit labels do not match the formula's layout")
            if not c.is_unitary() and modes[0] != DISTRIBUTED:
                raise CircuitError("oracle contains non-unitary operations")
            reports.append(check_oracle_phases(f, modes[0], circuit=c, layout=layout))
        except (CircuitError, SimulationError, KeyError, TypeError, ValueError) as e:
            if isinstance(e, ResourceLimitError):
                raise
            reports.append(Report("circuit-load", modes[0], False, {"path": args.circuit}, [str(e)]))
    else:
        for mode in modes:
            reports.append(check_oracle_phases(f, mode))
            reports.append(check_diffuser_equivalence(f, trials=args.trials, seed=args.seed,
                                                      diffuser=mode))
            if mode == DISTRIBUTED:
                reports.extend(_distributed_reports(f, args.trials, args.seed))
    ok = all(r.ok for r in reports)
    if args.format == "json":
        text = json.dumps({"ok": ok, "reports": [r.to_dict() for r in reports]},
                          sort_keys=True, indent=2) + "\n"
    else:
        text = "\n".join(r.to_text() for r in reports) + f"\n{'PASS' if ok else 'FAIL'}\n"
    _emit(text, args.output)
    return EXIT_OK if ok else EXIT_VERIFY


# --------------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qsat", description="Grover-based SAT solving on a simulated quantum machine.")
    p.add_argument("--version", action="version", version=f"qsat {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, all_modes: bool = False):
        sp.add_argument("input", help="DIMACS CNF file")
        choices = MODES + ("all",) if all_modes else MODES
        sp.add_argument("--mode", choices=choices, default="all" if all_modes else PARALLEL)
        sp.add_argument("-o", "--output", help="write to this file instead of stdout")

    sp = sub.add_parser("compile", help="compile a formula to circuit JSON")
    common(sp)
    sp.add_argument("--component", choices=("grover", "oracle", "diffuser"), default="grover")
    sp.add_argument("--iterations", type=int, help="override the planned Grover iteration count")
    sp.add_argument("--partition", help="node partition JSON (distributed mode)")
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("solve", help="run Grover search and print the readout histogram")
    common(sp)
    sp.add_argument("--shots", type=int, default=8192)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--iterations", type=int, help="override the planned Grover iteration count")
    sp.add_argument("--exact", action="store_true", help="exact distribution instead of sampling")
    sp.add_argument("--partition", help="node partition JSON (distributed mode)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--trace", help="write the per-shot message trace as JSON lines")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="check oracle, diffuser and protocol correctness")
    common(sp, all_modes=True)
    sp.add_argument("--circuit", help="check this compiled oracle JSON instead of compiling")
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "iterations", None) is not None and args.iterations < 0:
            raise UsageError("--iterations must be >= 0")
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        return args.func(args)
    except UsageError as e:
        print(f"qsat: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PartitionError as e:
        print(f"qsat: partition error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimitError as e:
        print(f"qsat: resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE
