"""Command-line interface.

Exit codes: 0 success, 1 negative analysis result (no explanation, theory
disagrees, journal not ok), 2 usage / parse / validation error, 3 internal
error.  Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .dsl import (
    RANK_MODES,
    CaseError,
    CaseSpec,
    check_against_model,
    parse_case,
    render_case,
    render_weight,
    validate,
)
from .journal import (
    JournalError,
    JournalIOError,
    Journal,
    SensorConfig,
    ingest,
    scan,
    statement_name,
    verify,
    verify_mirrors,
)
from .reconstruct import agrees, rank_theories, reconstruct
from .simulator import FaultSpec, SimulationError, parse_faults, simulate

OK, NEGATIVE, USAGE, INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _dumps(doc) -> str:
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


def _err(*lines: str) -> None:
    for line in lines:
        print(line, file=sys.stderr)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def load_case(paths: list[str]) -> CaseSpec:
    """Parse one or more case files and merge them into one case."""
    specs = []
    failed = False
    for path in paths:
        try:
            specs.append(parse_case(_read_text(path)))
        except CaseError as exc:
            _err(*(f"{path}:{d}" for d in exc.diagnostics))
            failed = True
    if failed:
        raise UsageError(None)
    if len(specs) == 1:
        return specs[0]
    settings: dict = {}
    for s in specs:
        settings.update(s.settings)
    merged = CaseSpec(
        tuple(m for s in specs for m in s.models),
        tuple(q for s in specs for q in s.sequences),
        tuple(e for s in specs for e in s.evidence),
        settings,
    )
    errors = [d for d in validate(merged) if d.severity == "error"]
    if errors:
        _err(*(f"<merged>:{d}" for d in errors))
        raise UsageError(None)
    return merged


def _pick_model(spec: CaseSpec, name: str | None):
    if name is None:
        if len(spec.models) != 1:
            raise UsageError("--model is required when the case declares several models (or none)")
        return spec.models[0]
    try:
        return spec.model(name)
    except KeyError:
        raise UsageError(f"unknown model {name}") from None


def _evidence(spec: CaseSpec, name: str | None, model):
    if name is None:
        raise UsageError("--evidence is required")
    try:
        seqs = spec.resolve(name)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    _check_model(seqs, model)
    return seqs


def _check_model(seqs, model) -> None:
    problems = check_against_model(seqs, model)
    if problems:
        _err(*(str(d) for d in problems))
        raise UsageError(None)


def _max_len(spec: CaseSpec, value: int | None) -> int:
    if value is None:
        value = spec.settings.get("max_len")
        if value is None:
            raise UsageError("--max-len is required (or set max_len in the case)")
    if value < 0:
        raise UsageError("--max-len must be non-negative")
    return value


# --------------------------------------------------------------------------
# output


def _explanation_text(index: int, e) -> list[str]:
    lines = [f"explanation {index} (points {e.length}, transitions {e.run.length})"]
    run = e.run
    if not run.events:
        lines.append(f"  {run.states[0]}")
    for src, event, dst in run.steps():
        lines.append(f"  {src} --{event}--> {dst}")
    for name, ranges in e.partitions:
        spans = " ".join(f"[{a},{b})" for a, b in ranges)
        lines.append(f"  {name}: {spans}")
    return lines


def _explanation_doc(index: int, e) -> dict:
    return {"index": index, **e.to_dict()}


# --------------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    for path in args.case:
        try:
            spec = parse_case(_read_text(path))
        except CaseError as exc:
            _err(*(f"{path}:{d}" for d in exc.diagnostics))
            return USAGE
        for d in validate(spec):
            _err(f"{path}:{d}")
    spec = load_case(args.case)
    print(f"ok: {len(spec.models)} models, {len(spec.sequences)} sequences, {len(spec.evidence)} evidential statements")
    return OK


def cmd_reconstruct(args) -> int:
    spec = load_case(args.case)
    model = _pick_model(spec, args.model)
    seqs = _evidence(spec, args.evidence, model)
    max_len = _max_len(spec, args.max_len)
    result = reconstruct(model, seqs, max_len, args.limit)
    if args.format == "structured":
        print(_dumps({"command": "reconstruct", "model": model.name, "evidence": args.evidence,
                      "max_len": max_len, "count": len(result), "truncated": result.truncated}))
        for i, e in enumerate(result, 1):
            print(_dumps(_explanation_doc(i, e)))
    else:
        print(f"model {model.name}, evidence {args.evidence}, max-len {max_len}: "
              f"{len(result)} explanation(s){' (truncated)' if result.truncated else ''}")
        for i, e in enumerate(result, 1):
            print("\n".join(_explanation_text(i, e)))
    return OK if result else NEGATIVE


def cmd_eval(args) -> int:
    spec = load_case(args.case)
    model = _pick_model(spec, args.model)
    seqs = _evidence(spec, args.evidence, model)
    try:
        theory = spec.sequence(args.theory)
    except KeyError:
        raise UsageError(f"unknown theory {args.theory}") from None
    _check_model([theory], model)
    max_len = _max_len(spec, args.max_len)
    ok, witness = agrees(model, seqs, theory, max_len)
    if args.format == "structured":
        doc = {"command": "eval", "theory": theory.name, "agrees": ok, "max_len": max_len,
               "witness": witness.to_dict() if witness else None}
        print(_dumps(doc))
    else:
        print(f"{'AGREES' if ok else 'DISAGREES'}: theory {theory.name} vs evidence {args.evidence} (max-len {max_len})")
        if witness:
            print("\n".join(_explanation_text(1, witness)[1:]))
    return OK if ok else NEGATIVE


def cmd_rank(args) -> int:
    spec = load_case(args.case)
    model = _pick_model(spec, args.model)
    seqs = _evidence(spec, args.evidence, model)
    if args.theories:
        names = [n.strip() for n in args.theories.split(",") if n.strip()]
    else:
        names = [t.name for t in spec.theories()]
    if not names:
        raise UsageError("no theories to rank")
    try:
        theories = [spec.sequence(n) for n in names]
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    _check_model(theories, model)
    mode = args.rank or spec.settings.get("rank", "sum")
    max_len = _max_len(spec, args.max_len)
    ranked = rank_theories(model, seqs, theories, max_len, mode)
    if args.format == "structured":
        print(_dumps({"command": "rank", "mode": mode, "evidence": args.evidence, "max_len": max_len}))
        for i, r in enumerate(ranked, 1):
            print(_dumps({"rank": i, "theory": r.name, "agrees": r.agrees, "observations": r.observations,
                          "weight": render_weight(r.weight),
                          "witness": r.witness.to_dict() if r.witness else None}))
    else:
        print(f"rank mode: {mode}, evidence {args.evidence}, max-len {max_len}")
        width = max(len("theory"), *(len(r.name) for r in ranked))
        print(f"{'#':>3}  {'theory':<{width}}  {'agrees':<9}  {'n':>3}  weight")
        for i, r in enumerate(ranked, 1):
            flag = "yes" if r.agrees else "DISAGREES"
            print(f"{i:>3}  {r.name:<{width}}  {flag:<9}  {r.observations:>3}  {render_weight(r.weight)}")
    return OK if any(r.agrees for r in ranked) else NEGATIVE


def cmd_ingest(args) -> int:
    spec = load_case(args.case)
    model = _pick_model(spec, args.model)
    settings = dict(spec.settings)
    if args.sensors:
        settings.update(load_case([args.sensors]).settings)
    try:
        sensors = SensorConfig.from_settings(settings)
    except JournalError as exc:
        raise UsageError(str(exc)) from None
    report, records = scan(_journal_bytes(args.journal))
    if not report.ok:
        _print_report(report, args.journal, "text")
        return NEGATIVE
    name = args.name or statement_name(args.journal)
    try:
        stories, statement = ingest(records, model, sensors, name)
    except JournalError as exc:
        raise UsageError(str(exc)) from None
    fragment = CaseSpec(sequences=tuple(stories), evidence=(statement,))
    text = f"# stories ingested from {Path(args.journal).name} ({report.records_ok} records)\n" + render_case(fragment)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {len(stories)} stories and evidence {name} to {args.output}")
    return OK


def _journal_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read journal {path}: {exc}") from None


def _print_report(report, path: str, fmt: str) -> None:
    if fmt == "structured":
        print(_dumps({"journal": str(path), **report.to_dict()}))
        return
    line = f"{path}: {report.status}, {report.records_ok} records ok"
    if report.first_bad_seq is not None:
        line += f", first bad seq {report.first_bad_seq}"
    print(line)
    if report.detail and not report.ok:
        print(f"  {report.detail}")


def cmd_verify(args) -> int:
    try:
        report = verify_mirrors(args.journal, args.mirror) if args.mirror else verify(args.journal)
    except JournalIOError as exc:
        raise UsageError(str(exc)) from None
    _print_report(report, args.journal, args.format)
    return OK if report.ok else NEGATIVE


def cmd_simulate(args) -> int:
    spec = load_case(args.case)
    model = _pick_model(spec, args.model)
    faults = FaultSpec()
    try:
        if args.faults:
            faults = faults + parse_faults(_read_text(args.faults))
        for text in args.inject or ():
            faults = faults + parse_faults(text if text.rstrip().endswith(";") else text + ";")
    except CaseError as exc:
        _err(*(f"--inject:{d}" for d in exc.diagnostics))
        return USAGE
    try:
        payloads = simulate(model, args.steps, args.seed, faults, sensor=args.sensor,
                            subsystem=args.subsystem, start_ts=args.start_ts, period=args.period)
    except SimulationError as exc:
        raise UsageError(f"simulation failed: {exc}") from None
    try:
        journal = Journal(args.output, args.mirror)
    except JournalIOError as exc:
        raise UsageError(str(exc)) from None
    except JournalError as exc:
        _err(str(exc))
        return NEGATIVE
    records = journal.extend(payloads)
    print(f"appended {len(records)} records (seq {records[0].seq}..{records[-1].seq}) to {args.output}")
    return OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfforensics", description="Forensic event reconstruction toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def analysis(name: str, help: str):
        p = sub.add_parser(name, help=help)
        p.add_argument("case", nargs="+", help="case file(s); several files are merged")
        p.add_argument("--model", help="model name (optional when the case has one model)")
        p.add_argument("--evidence", help="evidential statement name")
        p.add_argument("--max-len", type=int, help="maximum run length in transitions")
        p.add_argument("--format", choices=("text", "structured"), default="text")
        return p

    p = sub.add_parser("check", help="parse and validate case files")
    p.add_argument("case", nargs="+")
    p.set_defaults(func=cmd_check)

    p = analysis("reconstruct", "enumerate runs consistent with the evidence")
    p.add_argument("--limit", type=int, help="stop after this many explanations")
    p.set_defaults(func=cmd_reconstruct)

    p = analysis("eval", "check whether a theory agrees with the evidence")
    p.add_argument("--theory", required=True)
    p.set_defaults(func=cmd_eval)

    p = analysis("rank", "rank theories against the evidence")
    p.add_argument("--theories", help="comma-separated theory names (default: all theories)")
    p.add_argument("--rank", choices=RANK_MODES, help="cumulative weight mode (default: case setting or sum)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("ingest", help="turn a journal into stories and an evidential statement")
    p.add_argument("journal")
    p.add_argument("--case", nargs="+", required=True, help="case file(s) holding the model")
    p.add_argument("--model")
    p.add_argument("--sensors", help="sensor config file of set statements")
    p.add_argument("--name", help="evidential statement name (default: journal file stem)")
    p.add_argument("-o", "--output", default="-", help="output case fragment (default stdout)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("verify", help="verify a journal's hash chain")
    p.add_argument("journal")
    p.add_argument("--mirror", help="mirror copy to compare against")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="random walk with fault injection, appended to a journal")
    p.add_argument("--case", nargs="+", required=True)
    p.add_argument("--model")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject", action="append", help='e.g. "inject at 2 event go;" (repeatable)')
    p.add_argument("--faults", help="file of inject statements")
    p.add_argument("--sensor", default="S1")
    p.add_argument("--subsystem")
    p.add_argument("--start-ts", type=int, default=0)
    p.add_argument("--period", type=int, default=1000, help="microseconds between records")
    p.add_argument("--mirror", help="also write every record to this mirror journal")
    p.add_argument("-o", "--output", required=True, help="journal file (created or appended)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except UsageError as exc:
        if exc.args and exc.args[0]:
            _err(f"error: {exc.args[0]}")
        return USAGE
    except Exception as exc:  # noqa: BLE001
        _err(f"internal error: {type(exc).__name__}: {exc}")
        return INTERNAL


if __name__ == "__main__":
    sys.exit(main())
