"""Command line entry point: ``check``, ``replay`` and ``fmt``."""

from __future__ import annotations

import argparse
import json
import sys

from .dsl import ModelError, build_model, emit_report, format_model, parse_model, replay_witness, run_checks

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ModelError(f"cannot read {path}: {exc}", 1, 1, "input") from None


def _cmd_check(args, out):
    model = build_model(_read(args.file))
    report = run_checks(
        model, degree=args.degree, seed=args.seed, samples=args.samples, jobs=args.jobs, timings=args.timings
    )
    out.write(emit_report(report, "json" if args.json else "text"))
    return report.exit_code


def _cmd_fmt(args, out):
    doc = parse_model(_read(args.file))
    text = format_model(doc)
    if args.write:
        with open(args.file, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def _witness_entries(data):
    if isinstance(data, dict) and "checks" in data:
        return [c for c in data["checks"] if "sections" in (c.get("witness") or {})]
    if isinstance(data, dict) and "name" in data:
        return [data]
    raise ModelError("witness file must hold a report or one check entry", 1, 1, "input")


def _cmd_replay(args, out):
    model = build_model(_read(args.file))
    try:
        data = json.loads(_read(args.witness))
    except json.JSONDecodeError as exc:
        raise ModelError(f"witness file is not json: {exc.msg}", exc.lineno, exc.colno, "input") from None
    entries = _witness_entries(data)
    if not entries:
        out.write("no witnesses to replay\n")
        return EXIT_OK
    code = EXIT_OK
    for entry in entries:
        residual, matches, nonzero = replay_witness(model, entry)
        status = "reproduced" if nonzero and matches else ("nonzero, differs from record" if nonzero else "zero")
        out.write(f"{entry['name']} [{entry['witness']['axiom']}]: residual [{', '.join(residual)}] ({status})\n")
        if not (nonzero and matches):
            code = EXIT_FAILED
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="bourbaki", description="Check algebroid axioms for models written in .alg files.")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", help="run the check directives of a model")
    c.add_argument("file")
    c.add_argument("--degree", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--samples", type=int)
    c.add_argument("--json", action="store_true")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--timings", action="store_true", help="record wall time per check (breaks byte-identical output)")
    c.set_defaults(func=_cmd_check)
    r = sub.add_parser("replay", help="re-evaluate witnesses from a json report")
    r.add_argument("file")
    r.add_argument("witness")
    r.set_defaults(func=_cmd_replay)
    f = sub.add_parser("fmt", help="print the canonical form of a model")
    f.add_argument("file")
    f.add_argument("--write", action="store_true", help="rewrite the file in place")
    f.set_defaults(func=_cmd_fmt)
    return p


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        err.write("--jobs must be at least 1\n")
        return EXIT_INPUT
    try:
        return args.func(args, out)
    except ModelError as exc:
        err.write(exc.render(getattr(args, "file", "<input>")) + "\n")
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - last resort
        err.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
