"""Domain model: surgeries as frame sequences, vocabularies, splits and the
derived entities (phase transitions, phase-instrument pairs, co-occurrence sets)
that every other module counts."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional


class SetLabel(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"

    def __str__(self) -> str:
        return self.value


class Direction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True, order=True)
class PhaseId:
    index: int
    name: str


@dataclass(frozen=True, order=True)
class InstrumentId:
    index: int
    name: str


# Exact set of simultaneously visible instruments, cardinality >= 2.
# frozenset gives order-insensitive equality and hashing.
CooccurrenceKey = frozenset[InstrumentId]


@dataclass(frozen=True)
class FrameRecord:
    time_index: int
    phase: PhaseId
    instruments: frozenset[InstrumentId] = frozenset()

    def __post_init__(self):
        if self.time_index < 0:
            raise ValueError(f"negative time_index: {self.time_index}")
        if not isinstance(self.instruments, frozenset):
            object.__setattr__(self, "instruments", frozenset(self.instruments))

    @property
    def is_idle(self) -> bool:
        return not self.instruments


@dataclass(frozen=True)
class Surgery:
    id: str
    frames: tuple[FrameRecord, ...]

    def __post_init__(self):
        if not isinstance(self.frames, tuple):
            object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ValueError(f"surgery {self.id!r} has no frames")
        for prev, cur in zip(self.frames, self.frames[1:]):
            if cur.time_index <= prev.time_index:
                raise ValueError(
                    f"surgery {self.id!r}: time_index not strictly increasing "
                    f"({prev.time_index} -> {cur.time_index})"
                )

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class Dataset:
    phases: tuple[PhaseId, ...]
    instruments: tuple[InstrumentId, ...]
    surgeries: tuple[Surgery, ...]

    def __post_init__(self):
        for attr in ("phases", "instruments", "surgeries"):
            value = getattr(self, attr)
            if not isinstance(value, tuple):
                object.__setattr__(self, attr, tuple(value))
        if [p.index for p in self.phases] != list(range(len(self.phases))):
            raise ValueError("phase indices must be 0..n-1 in canonical order")
        if sorted(i.index for i in self.instruments) != list(range(len(self.instruments))):
            raise ValueError("instrument indices must be unique 0..n-1")
        ids = [s.id for s in self.surgeries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate surgery ids: {dupes}")
        phase_set = set(self.phases)
        instrument_set = set(self.instruments)
        for surgery in self.surgeries:
            for frame in surgery.frames:
                if frame.phase not in phase_set:
                    raise ValueError(
                        f"surgery {surgery.id!r} references unknown phase {frame.phase}"
                    )
                unknown = frame.instruments - instrument_set
                if unknown:
                    raise ValueError(
                        f"surgery {surgery.id!r} references unknown instruments {sorted(unknown)}"
                    )

    @property
    def surgery_ids(self) -> list[str]:
        return [s.id for s in self.surgeries]

    @property
    def total_frames(self) -> int:
        return sum(s.frame_count for s in self.surgeries)

    def surgery(self, surgery_id: str) -> Surgery:
        for s in self.surgeries:
            if s.id == surgery_id:
                return s
        raise KeyError(surgery_id)

    def phase_by_name(self, name: str) -> PhaseId:
        for p in self.phases:
            if p.name == name:
                return p
        raise KeyError(name)

    def instrument_by_name(self, name: str) -> InstrumentId:
        for i in self.instruments:
            if i.name == name:
                return i
        raise KeyError(name)

    def fingerprint(self) -> str:
        """Stable content hash used to tie reports and view models to the data."""
        payload = {
            "phases": [p.name for p in self.phases],
            "instruments": [i.name for i in sorted(self.instruments)],
            "surgeries": [
                {
                    "id": s.id,
                    "frames": [
                        [f.time_index, f.phase.index, sorted(i.index for i in f.instruments)]
                        for f in s.frames
                    ],
                }
                for s in sorted(self.surgeries, key=lambda s: s.id)
            ],
        }
        digest = hashlib.sha256(json.dumps(payload, separators=(",", ":")).encode())
        return digest.hexdigest()[:16]


@dataclass(frozen=True)
class Transition:
    from_phase: PhaseId
    to_phase: PhaseId

    def __post_init__(self):
        if self.from_phase == self.to_phase:
            raise ValueError(f"self-transition on {self.from_phase.name!r}")

    @property
    def direction(self) -> Direction:
        if self.to_phase.index > self.from_phase.index:
            return Direction.FORWARD
        return Direction.BACKWARD


@dataclass(frozen=True)
class SplitAssignment:
    """Total mapping surgery id -> set. Immutable; edits produce new values."""

    assignments: Mapping[str, SetLabel]
    has_validation: bool

    def __post_init__(self):
        object.__setattr__(self, "assignments", dict(self.assignments))
        if not self.has_validation:
            in_val = sorted(i for i, s in self.assignments.items() if s is SetLabel.VAL)
            if in_val:
                raise ValueError(f"no validation set declared but surgeries map to val: {in_val}")

    def set_of(self, surgery_id: str) -> SetLabel:
        return self.assignments[surgery_id]

    def ids_in(self, label: SetLabel) -> list[str]:
        return [i for i, s in self.assignments.items() if s is label]

    def declared_sets(self) -> tuple[SetLabel, ...]:
        if self.has_validation:
            return (SetLabel.TRAIN, SetLabel.VAL, SetLabel.TEST)
        return (SetLabel.TRAIN, SetLabel.TEST)

    def size_of(self, label: SetLabel) -> int:
        return sum(1 for s in self.assignments.values() if s is label)


def derive_transitions(surgery: Surgery) -> list[Transition]:
    """Transitions at every adjacent frame pair whose phase differs, in order."""
    out = []
    for prev, cur in zip(surgery.frames, surgery.frames[1:]):
        if cur.phase != prev.phase:
            out.append(Transition(prev.phase, cur.phase))
    return out


def first_phase(surgery: Surgery) -> PhaseId:
    """Phase of the earliest frame; frames are ordered by construction."""
    return surgery.frames[0].phase


def last_phase(surgery: Surgery) -> PhaseId:
    return surgery.frames[-1].phase


def cooccurrence_key(frame: FrameRecord) -> Optional[CooccurrenceKey]:
    """The frame's instrument set when two or more are visible, else None.

    Idle frames and single-instrument frames carry no co-occurrence
    information; they are tallied by the idle and per-instrument counters.
    """
    if len(frame.instruments) >= 2:
        return frozenset(frame.instruments)
    return None


def instrument_key_label(key: Iterable[InstrumentId]) -> str:
    return "+".join(i.name for i in sorted(key))
