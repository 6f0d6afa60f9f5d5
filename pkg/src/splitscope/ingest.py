"""Annotation ingestion: parse per-surgery phase/tool timelines, align the two
streams to one working sampling rate, and assemble a Dataset.

Supported layouts:
  cholec80     - per-surgery ``*-phase.txt`` (header line, then one
                 ``frame<TAB>phase`` row per native video frame) and
                 ``*-tool.txt`` (header of instrument names, then one
                 binary-presence row per sampled frame; frame numbers stay on
                 the native clock).
  generic-csv  - one joint stream: ``surgery_id,time_index,phase,instr;instr``.
  generic-json - the serialized Dataset produced by ``dataset_to_json_dict``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .model import Dataset, FrameRecord, InstrumentId, PhaseId, Surgery


class IngestError(Exception):
    """Base class for ingestion failures."""


class ParseError(IngestError):
    """A malformed row or token; message names the offending line."""


class StructuralError(IngestError):
    """Well-formed rows arranged inconsistently (order, width, empty join)."""


CHOLEC80_PHASES = (
    "Preparation",
    "Calot triangle dissection",
    "Clipping and cutting",
    "Gallbladder dissection",
    "Gallbladder packaging",
    "Cleaning coagulation",
    "Gallbladder retraction",
)

# Annotation files spell phases without spaces; map tokens to display names.
CHOLEC80_PHASE_ALIASES = {
    "Preparation": "Preparation",
    "CalotTriangleDissection": "Calot triangle dissection",
    "ClippingCutting": "Clipping and cutting",
    "GallbladderDissection": "Gallbladder dissection",
    "GallbladderPackaging": "Gallbladder packaging",
    "CleaningCoagulation": "Cleaning coagulation",
    "GallbladderRetraction": "Gallbladder retraction",
}

FORMATS = ("cholec80", "generic-csv", "generic-json")


@dataclass(frozen=True)
class IngestConfig:
    format: str = "cholec80"
    phase_fps: int = 25
    tool_fps: int = 1
    target_fps: int = 1
    phases: tuple[str, ...] = CHOLEC80_PHASES
    phase_aliases: dict[str, str] = field(default_factory=lambda: dict(CHOLEC80_PHASE_ALIASES))
    phase_glob: str = "**/*-phase.txt"
    tool_glob: str = "**/*-tool.txt"

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}; expected one of {FORMATS}")
        if self.target_fps < 1:
            raise ValueError("target_fps must be >= 1")
        for name, fps in (("phase_fps", self.phase_fps), ("tool_fps", self.tool_fps)):
            if fps < 1:
                raise ValueError(f"{name} must be >= 1")
            if fps % self.target_fps != 0:
                raise ValueError(
                    f"target_fps={self.target_fps} must divide {name}={fps} or equal it"
                )
        if len(set(self.phases)) != len(self.phases):
            raise ValueError("duplicate phase names in canonical order")

    @property
    def frame_stride(self) -> int:
        """Native frame numbers per target-rate sample."""
        return self.phase_fps // self.target_fps

    def resolve_phase_name(self, token: str) -> Optional[str]:
        name = self.phase_aliases.get(token, token)
        return name if name in self.phases else None


@dataclass
class JoinDiagnostics:
    dropped_phase_only: int = 0
    dropped_tool_only: int = 0


@dataclass
class LoadReport:
    """Per-surgery problems collected while assembling a dataset."""

    errors: dict[str, str] = field(default_factory=dict)
    diagnostics: dict[str, JoinDiagnostics] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def _split_lines(text: str) -> list[str]:
    # Accept LF and CRLF; a trailing newline must not yield a phantom row.
    return text.replace("\r\n", "\n").replace("\r", "\n").split("\n")


def parse_phase_stream(text: str, config: IngestConfig) -> list[tuple[int, str]]:
    """Parse one phase timeline into (time_index, phase token) rows at the
    target rate. Tokens are resolved against the vocabulary later.
    """
    lines = _split_lines(text)
    if not lines or not lines[0].strip():
        raise ParseError("line 1: missing header")
    stride = config.frame_stride
    rows: list[tuple[int, str]] = []
    append = rows.append
    last_frame = -1
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 2:
            if not parts:
                continue
            raise ParseError(f"line {lineno}: expected 2 columns, got {len(parts)}")
        try:
            frame = int(parts[0])
        except ValueError:
            raise ParseError(f"line {lineno}: bad frame index {parts[0]!r}") from None
        if frame <= last_frame:
            raise StructuralError(
                f"line {lineno}: frame index {frame} not increasing (previous {last_frame})"
            )
        last_frame = frame
        if not frame % stride:
            append((frame // stride, parts[1]))
    return rows


def parse_tool_stream(
    text: str, config: IngestConfig
) -> tuple[list[str], list[tuple[int, frozenset[str]]]]:
    """Parse one instrument-presence timeline.

    Returns the header's instrument names and (time_index, visible names) rows
    at the target rate. Frame numbers are on the native clock, so the stride
    conversion is the same as for the phase stream.
    """
    lines = _split_lines(text)
    if not lines or not lines[0].strip():
        raise ParseError("line 1: missing header")
    header = lines[0].split()
    if len(header) < 2:
        raise ParseError("line 1: header must name at least one instrument")
    instruments = header[1:]
    stride = config.frame_stride
    rows: list[tuple[int, frozenset[str]]] = []
    last_frame = -1
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != len(header):
            raise StructuralError(
                f"line {lineno}: expected {len(header)} columns, got {len(parts)}"
            )
        try:
            frame = int(parts[0])
        except ValueError:
            raise ParseError(f"line {lineno}: bad frame index {parts[0]!r}") from None
        if frame <= last_frame:
            raise StructuralError(
                f"line {lineno}: frame index {frame} not increasing (previous {last_frame})"
            )
        last_frame = frame
        visible = []
        for name, flag in zip(instruments, parts[1:]):
            if flag == "1":
                visible.append(name)
            elif flag != "0":
                raise ParseError(f"line {lineno}: invalid presence flag {flag!r} for {name}")
        if frame % stride == 0:
            rows.append((frame // stride, frozenset(visible)))
    return instruments, rows


def join_streams(
    surgery_id: str,
    phase_rows: Sequence[tuple[int, str]],
    tool_rows: Sequence[tuple[int, frozenset[str]]],
    phases: Sequence[PhaseId],
    instruments: Sequence[InstrumentId],
    config: IngestConfig,
) -> tuple[Surgery, JoinDiagnostics]:
    """One FrameRecord per time index present in both streams; one-sided
    indices are dropped and counted."""
    phase_by_name = {p.name: p for p in phases}
    instrument_by_name = {i.name: i for i in instruments}
    tools_by_time = dict(tool_rows)
    phase_times = {t for t, _ in phase_rows}

    frames = []
    dropped_phase_only = 0
    for time_index, token in phase_rows:
        if time_index not in tools_by_time:
            dropped_phase_only += 1
            continue
        name = config.resolve_phase_name(token)
        if name is None:
            raise ParseError(f"surgery {surgery_id!r}: unknown phase {token!r} at t={time_index}")
        visible = frozenset(instrument_by_name[n] for n in tools_by_time[time_index])
        frames.append(FrameRecord(time_index, phase_by_name[name], visible))
    dropped_tool_only = sum(1 for t in tools_by_time if t not in phase_times)

    if not frames:
        raise StructuralError(f"surgery {surgery_id!r}: no joinable frames")
    return Surgery(surgery_id, tuple(frames)), JoinDiagnostics(dropped_phase_only, dropped_tool_only)


def _surgery_id_from_path(path: Path, suffix: str) -> str:
    stem = path.stem
    return stem[: -len(suffix)] if stem.endswith(suffix) else stem


def _load_cholec80(root: Path, config: IngestConfig) -> tuple[Dataset, LoadReport]:
    phase_files = {
        _surgery_id_from_path(p, "-phase"): p for p in sorted(root.glob(config.phase_glob))
    }
    tool_files = {
        _surgery_id_from_path(p, "-tool"): p for p in sorted(root.glob(config.tool_glob))
    }
    report = LoadReport()
    phases = tuple(PhaseId(i, name) for i, name in enumerate(config.phases))

    # Instrument vocabulary comes from the tool headers; all files must agree.
    instrument_names: Optional[list[str]] = None
    parsed: dict[str, tuple[list[tuple[int, str]], list[tuple[int, frozenset[str]]]]] = {}
    for surgery_id in sorted(phase_files.keys() | tool_files.keys()):
        if surgery_id not in tool_files:
            report.errors[surgery_id] = "missing tool annotation file"
            continue
        if surgery_id not in phase_files:
            report.errors[surgery_id] = "missing phase annotation file"
            continue
        try:
            phase_rows = parse_phase_stream(
                phase_files[surgery_id].read_text(encoding="utf-8"), config
            )
            names, tool_rows = parse_tool_stream(
                tool_files[surgery_id].read_text(encoding="utf-8"), config
            )
        except IngestError as exc:
            report.errors[surgery_id] = str(exc)
            continue
        if instrument_names is None:
            instrument_names = names
        elif names != instrument_names:
            report.errors[surgery_id] = (
                f"instrument header {names} disagrees with {instrument_names}"
            )
            continue
        parsed[surgery_id] = (phase_rows, tool_rows)

    if not parsed:
        raise StructuralError(f"no loadable surgeries under {root}")
    instruments = tuple(InstrumentId(i, n) for i, n in enumerate(instrument_names or []))

    surgeries = []
    for surgery_id, (phase_rows, tool_rows) in sorted(parsed.items()):
        try:
            surgery, diag = join_streams(
                surgery_id, phase_rows, tool_rows, phases, instruments, config
            )
        except IngestError as exc:
            report.errors[surgery_id] = str(exc)
            continue
        surgeries.append(surgery)
        if diag.dropped_phase_only or diag.dropped_tool_only:
            report.diagnostics[surgery_id] = diag

    if not surgeries:
        raise StructuralError(f"no loadable surgeries under {root}")
    return Dataset(phases, instruments, tuple(surgeries)), report


def _load_generic_csv(root: Path, config: IngestConfig) -> tuple[Dataset, LoadReport]:
    paths = [root] if root.is_file() else sorted(root.glob("*.csv"))
    if not paths:
        raise StructuralError(f"no csv files under {root}")
    stride = config.frame_stride
    phases = tuple(PhaseId(i, name) for i, name in enumerate(config.phases))
    phase_by_name = {p.name: p for p in phases}

    rows_by_surgery: dict[str, list[tuple[int, str, frozenset[str]]]] = {}
    instrument_names: list[str] = []
    seen_instruments = set()
    for path in paths:
        reader = csv.reader(io.StringIO(path.read_text(encoding="utf-8")))
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and row[0].strip() == "surgery_id"):
                continue
            if len(row) != 4:
                raise ParseError(f"{path.name} line {lineno}: expected 4 columns, got {len(row)}")
            surgery_id, time_text, token, instr_text = (c.strip() for c in row)
            try:
                time_index = int(time_text)
            except ValueError:
                raise ParseError(f"{path.name} line {lineno}: bad time_index {time_text!r}") from None
            if time_index % stride != 0:
                continue
            name = config.resolve_phase_name(token)
            if name is None:
                raise ParseError(f"{path.name} line {lineno}: unknown phase {token!r}")
            visible = frozenset(p for p in instr_text.split(";") if p)
            for instr in sorted(visible):
                if instr not in seen_instruments:
                    seen_instruments.add(instr)
                    instrument_names.append(instr)
            rows_by_surgery.setdefault(surgery_id, []).append(
                (time_index // stride, name, visible)
            )

    if not rows_by_surgery:
        raise StructuralError(f"no data rows under {root}")
    instruments = tuple(InstrumentId(i, n) for i, n in enumerate(instrument_names))
    instrument_by_name = {i.name: i for i in instruments}

    report = LoadReport()
    surgeries = []
    for surgery_id in sorted(rows_by_surgery):
        rows = sorted(rows_by_surgery[surgery_id])
        frames = tuple(
            FrameRecord(t, phase_by_name[name], frozenset(instrument_by_name[n] for n in vis))
            for t, name, vis in rows
        )
        try:
            surgeries.append(Surgery(surgery_id, frames))
        except ValueError as exc:
            report.errors[surgery_id] = str(exc)
    if not surgeries:
        raise StructuralError(f"no loadable surgeries under {root}")
    return Dataset(phases, instruments, tuple(surgeries)), report


def dataset_to_json_dict(dataset: Dataset) -> dict:
    return {
        "schema_version": "1",
        "phases": [p.name for p in dataset.phases],
        "instruments": [i.name for i in sorted(dataset.instruments)],
        "surgeries": [
            {
                "id": s.id,
                "frames": [
                    {
                        "t": f.time_index,
                        "phase": f.phase.name,
                        "instruments": sorted(i.name for i in f.instruments),
                    }
                    for f in s.frames
                ],
            }
            for s in dataset.surgeries
        ],
    }


def dataset_from_json_dict(payload: dict) -> Dataset:
    try:
        phases = tuple(PhaseId(i, n) for i, n in enumerate(payload["phases"]))
        instruments = tuple(InstrumentId(i, n) for i, n in enumerate(payload["instruments"]))
        phase_by_name = {p.name: p for p in phases}
        instrument_by_name = {i.name: i for i in instruments}
        surgeries = tuple(
            Surgery(
                entry["id"],
                tuple(
                    FrameRecord(
                        frame["t"],
                        phase_by_name[frame["phase"]],
                        frozenset(instrument_by_name[n] for n in frame["instruments"]),
                    )
                    for frame in entry["frames"]
                ),
            )
            for entry in payload["surgeries"]
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed dataset JSON: {exc}") from exc
    return Dataset(phases, instruments, surgeries)


def _load_generic_json(root: Path, config: IngestConfig) -> tuple[Dataset, LoadReport]:
    path = root if root.is_file() else root / "dataset.json"
    if not path.exists():
        raise StructuralError(f"no dataset JSON at {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: invalid JSON ({exc})") from exc
    dataset = dataset_from_json_dict(payload)
    surgeries = tuple(sorted(dataset.surgeries, key=lambda s: s.id))
    return Dataset(dataset.phases, dataset.instruments, surgeries), LoadReport()


def load_dataset(root: str | Path, config: Optional[IngestConfig] = None) -> tuple[Dataset, LoadReport]:
    """Assemble a Dataset from annotation files under ``root``.

    Surgeries are sorted by id; per-surgery failures are collected in the
    returned LoadReport, and zero loadable surgeries is fatal.
    """
    config = config or IngestConfig()
    root = Path(root)
    if not root.exists():
        raise StructuralError(f"data root {root} does not exist")
    if config.format == "cholec80":
        return _load_cholec80(root, config)
    if config.format == "generic-csv":
        return _load_generic_csv(root, config)
    return _load_generic_json(root, config)
