"""Command-line interface: audit a split, search for better ones, export the
UI view model, or serve the interactive API.

Exit codes: 0 success, 1 I/O or parse failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

from . import splits
from .coverage import coverage_report, report_to_json_dict, report_to_text_table
from .ingest import (
    CHOLEC80_PHASES,
    FORMATS,
    IngestConfig,
    IngestError,
    LoadReport,
    load_dataset,
)
from .model import Dataset, SetLabel, SplitAssignment
from .optimizer import Objective, SearchConfig, objective_from_json_dict, optimize
from .stats import CriteriaError, compute_set_sizes
from .viewmodel import build_view_model, criteria_from_json_dict

PORT_ENV = "SPLITSCOPE_PORT"


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="annotation root (or file for generic formats)")
    parser.add_argument("--data-format", choices=FORMATS, default="cholec80")
    parser.add_argument("--phase-fps", type=int, default=None, help="native rate of the phase stream")
    parser.add_argument("--tool-fps", type=int, default=None, help="row rate of the tool stream")
    parser.add_argument("--target-fps", type=int, default=1, help="working sampling rate")
    parser.add_argument("--phases", default=None, help="comma-separated canonical phase order")


def _ingest_config(args) -> IngestConfig:
    if args.data_format == "cholec80":
        phase_fps = args.phase_fps if args.phase_fps is not None else 25
        tool_fps = args.tool_fps if args.tool_fps is not None else 1
    else:
        phase_fps = args.phase_fps if args.phase_fps is not None else args.target_fps
        tool_fps = args.tool_fps if args.tool_fps is not None else args.target_fps
    if args.phases:
        phases = tuple(name.strip() for name in args.phases.split(",") if name.strip())
        aliases: dict[str, str] = {}
    else:
        phases = CHOLEC80_PHASES
        aliases = None  # keep the preset aliases
    kwargs = dict(
        format=args.data_format,
        phase_fps=phase_fps,
        tool_fps=tool_fps,
        target_fps=args.target_fps,
        phases=phases,
    )
    if aliases is not None:
        kwargs["phase_aliases"] = aliases
    return IngestConfig(**kwargs)


def _load(args) -> tuple[Dataset, LoadReport]:
    dataset, report = load_dataset(args.data, _ingest_config(args))
    for surgery_id, message in sorted(report.errors.items()):
        print(f"warning: {surgery_id}: {message}", file=sys.stderr)
    return dataset, report


def _resolve_split(spec: str, dataset: Dataset) -> tuple[Optional[SplitAssignment], list[str]]:
    assignment, violations = splits.resolve_split(spec)
    if assignment is None:
        return None, violations
    violations = splits.validate(assignment, dataset)
    if violations:
        return None, violations
    return assignment, []


def _write_output(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _set_sizes_json(dataset: Dataset, assignment: SplitAssignment) -> dict:
    sizes = compute_set_sizes(dataset, assignment)
    per_set = {}
    for label, size in sizes.per_set.items():
        entry: dict = {"surgery_count": size.surgery_count, "frame_count": size.frame_count}
        if size.mean_frames is not None:
            entry["mean_frames"] = size.mean_frames
        per_set[label.value] = entry
    return {"per_set": per_set, "per_surgery": sizes.per_surgery}


def cmd_audit(args) -> int:
    try:
        dataset, _ = _load(args)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    assignment, violations = _resolve_split(args.split, dataset)
    if assignment is None:
        for violation in violations:
            print(f"violation: {violation}", file=sys.stderr)
        return 2
    report = coverage_report(dataset, assignment)
    if args.format == "json":
        payload = {
            "schema_version": "1",
            "split": args.split,
            "fingerprint": dataset.fingerprint(),
            "coverage": report_to_json_dict(report),
            "set_sizes": _set_sizes_json(dataset, assignment),
        }
        _write_output(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    else:
        sizes = compute_set_sizes(dataset, assignment)
        lines = [report_to_text_table(report, split_name=args.split)]
        lines.append("Set sizes\n")
        for label, size in sizes.per_set.items():
            mean = size.mean_frames
            mean_text = f", mean {mean:.3f} frames/surgery" if mean is not None else ""
            lines.append(
                f"  {label.value}: {size.surgery_count} surgeries, "
                f"{size.frame_count} frames{mean_text}\n"
            )
        _write_output("".join(lines), args.out)
    return 0


def cmd_optimize(args) -> int:
    try:
        dataset, _ = _load(args)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        parts = args.sizes.split("/")
        if len(parts) != 3:
            raise ValueError(f"--sizes must look like '32/8/40', got {args.sizes!r}")
        train, val, test = (0 if p.strip() == "-" else int(p) for p in parts)
        sizes = {SetLabel.TRAIN: train, SetLabel.TEST: test}
        if val:
            sizes[SetLabel.VAL] = val
        objective = Objective()
        if args.objective:
            objective = objective_from_json_dict(
                json.loads(Path(args.objective).read_text(encoding="utf-8"))
            )
        initial = None
        if args.initial:
            initial, violations = _resolve_split(args.initial, dataset)
            if initial is None:
                for violation in violations:
                    print(f"violation: {violation}", file=sys.stderr)
                return 2
        config = SearchConfig(
            sizes=sizes, seed=args.seed, budget=args.budget, restarts=args.restarts
        )
        result = optimize(dataset, config, objective, initial)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return 2

    splits.save_assignment(result.assignment, args.out)
    if args.trace:
        rows = ["evaluation,score\n"]
        rows += [f"{evaluation},{value}\n" for evaluation, value in result.trace]
        Path(args.trace).write_text("".join(rows), encoding="utf-8")
    print(
        f"best score {result.score} after {result.evaluations} evaluations "
        f"({result.restarts_completed} restarts); assignment written to {args.out}"
    )
    return 0


def cmd_export_viewmodel(args) -> int:
    try:
        dataset, _ = _load(args)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    assignment, violations = _resolve_split(args.split, dataset)
    if assignment is None:
        for violation in violations:
            print(f"violation: {violation}", file=sys.stderr)
        return 2
    criteria = None
    if args.filter:
        try:
            criteria = criteria_from_json_dict(
                json.loads(Path(args.filter).read_text(encoding="utf-8"))
            )
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    try:
        vm = build_view_model(dataset, assignment, criteria)
    except CriteriaError as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return 2
    _write_output(json.dumps(vm, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    try:
        dataset, _ = _load(args)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.split:
        assignment, violations = _resolve_split(args.split, dataset)
        if assignment is None:
            for violation in violations:
                print(f"violation: {violation}", file=sys.stderr)
            return 2
    else:
        assignment, _ = _resolve_split("40/-/40", dataset)
        if assignment is None:
            # Not a Cholec80-shaped dataset: start with everything in train.
            assignment = SplitAssignment(
                {s: SetLabel.TRAIN for s in dataset.surgery_ids}, has_validation=False
            )
            print("note: no --split given; starting with all surgeries in train", file=sys.stderr)
    port = args.port if args.port is not None else int(os.environ.get(PORT_ENV, "8000"))
    app = create_app(dataset, assignment)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitscope",
        description="Audit, repartition and optimize dataset splits of surgical "
        "phase/instrument annotations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    audit = sub.add_parser("audit", help="write the unrepresented-case report for a split")
    _add_data_args(audit)
    audit.add_argument("--split", required=True, help="preset name or assignment JSON file")
    audit.add_argument("--format", choices=("json", "text-table"), default="json")
    audit.add_argument("--out", default=None, help="output path (default stdout)")
    audit.set_defaults(func=cmd_audit)

    opt = sub.add_parser("optimize", help="search for a split minimizing unrepresented cases")
    _add_data_args(opt)
    opt.add_argument("--sizes", required=True, help="set sizes as train/val/test, e.g. 32/8/40 or 40/-/40")
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--budget", type=int, default=5000, help="max objective evaluations")
    opt.add_argument("--restarts", type=int, default=4)
    opt.add_argument("--objective", default=None, help="objective weights JSON file")
    opt.add_argument("--initial", default=None, help="starting split (preset name or file)")
    opt.add_argument("--out", required=True, help="where to write the best assignment JSON")
    opt.add_argument("--trace", default=None, help="where to write the improvement trace CSV")
    opt.set_defaults(func=cmd_optimize)

    export = sub.add_parser("export-viewmodel", help="write the UI view model for static hosting")
    _add_data_args(export)
    export.add_argument("--split", required=True, help="preset name or assignment JSON file")
    export.add_argument("--filter", default=None, help="filter criteria JSON file")
    export.add_argument("--out", default=None, help="output path (default stdout)")
    export.set_defaults(func=cmd_export_viewmodel)

    serve = sub.add_parser("serve", help="run the interactive HTTP/JSON service")
    _add_data_args(serve)
    serve.add_argument("--split", default=None, help="initial split (preset name or file)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=None, help=f"port (or ${PORT_ENV})")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
