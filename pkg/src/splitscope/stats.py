"""Per-set aggregates behind every view: phase frame counts, transition
counts, instrument usage per phase, co-occurrence tallies and set sizes.

All statistics are exact single-pass counts over the (optionally filtered)
frames of a dataset, attributed to sets through a SplitAssignment. Frame-level
criteria (phase / instrument / co-occurrence selections) restrict individual
frames; the transition criterion restricts whole surgeries.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .model import (
    Dataset,
    FrameRecord,
    SetLabel,
    SplitAssignment,
    Surgery,
    cooccurrence_key,
    derive_transitions,
)


class CriteriaError(ValueError):
    """Filter criteria referencing unknown phases or instruments."""


@dataclass(frozen=True)
class FilterCriteria:
    """Conjunction of frame and surgery selectors, all optional.

    ``phases``: frame's phase is one of these names.
    ``instruments``: every named instrument is visible in the frame.
    ``cooccurrence``: the frame's instrument set equals exactly this key.
    ``transition``: the frame's surgery contains this (from, to) transition.
    """

    phases: frozenset[str] = frozenset()
    instruments: frozenset[str] = frozenset()
    cooccurrence: Optional[frozenset[str]] = None
    transition: Optional[tuple[str, str]] = None

    def __post_init__(self):
        object.__setattr__(self, "phases", frozenset(self.phases))
        object.__setattr__(self, "instruments", frozenset(self.instruments))
        if self.cooccurrence is not None:
            object.__setattr__(self, "cooccurrence", frozenset(self.cooccurrence))

    @property
    def is_empty(self) -> bool:
        return (
            not self.phases
            and not self.instruments
            and self.cooccurrence is None
            and self.transition is None
        )


class FramePredicate:
    """Compiled filter: resolves names once, then tests frames and surgeries."""

    def __init__(self, dataset: Dataset, criteria: FilterCriteria):
        self.criteria = criteria
        known_phases = {p.name for p in dataset.phases}
        known_instruments = {i.name for i in dataset.instruments}
        for name in sorted(criteria.phases - known_phases):
            raise CriteriaError(f"unknown phase {name!r}")
        for name in sorted(criteria.instruments - known_instruments):
            raise CriteriaError(f"unknown instrument {name!r}")
        if criteria.cooccurrence is not None:
            for name in sorted(criteria.cooccurrence - known_instruments):
                raise CriteriaError(f"unknown instrument {name!r}")
        self._phase_names = criteria.phases or None
        self._instrument_names = criteria.instruments
        self._cooccurrence = criteria.cooccurrence
        self._transition_surgeries: Optional[frozenset[str]] = None
        if criteria.transition is not None:
            from_name, to_name = criteria.transition
            for name in (from_name, to_name):
                if name not in known_phases:
                    raise CriteriaError(f"unknown phase {name!r}")
            if from_name == to_name:
                raise CriteriaError("transition endpoints must differ")
            self._transition_surgeries = frozenset(
                s.id
                for s in dataset.surgeries
                if any(
                    t.from_phase.name == from_name and t.to_phase.name == to_name
                    for t in derive_transitions(s)
                )
            )

    def surgery_ok(self, surgery: Surgery) -> bool:
        if self._transition_surgeries is None:
            return True
        return surgery.id in self._transition_surgeries

    def frame_ok(self, surgery: Surgery, frame: FrameRecord) -> bool:
        if not self.surgery_ok(surgery):
            return False
        if self._phase_names is not None and frame.phase.name not in self._phase_names:
            return False
        if self._instrument_names:
            visible = {i.name for i in frame.instruments}
            if not self._instrument_names <= visible:
                return False
        if self._cooccurrence is not None:
            if {i.name for i in frame.instruments} != set(self._cooccurrence):
                return False
        return True


def filter_frames(dataset: Dataset, criteria: Optional[FilterCriteria]) -> FramePredicate:
    """Compile criteria into a predicate usable by every compute_* operation."""
    return FramePredicate(dataset, criteria or FilterCriteria())


def _active_sets(assignment: SplitAssignment) -> tuple[SetLabel, ...]:
    return assignment.declared_sets()


def _zero_by_set(assignment: SplitAssignment) -> dict[SetLabel, int]:
    return {label: 0 for label in _active_sets(assignment)}


@dataclass
class PhaseStats:
    # frame_counts[phase_index][set] -> frames of that phase in that set
    frame_counts: dict[int, dict[SetLabel, int]]
    # surgery_occurrence[phase_index] -> surgeries with >=1 (filtered) frame of the phase
    surgery_occurrence: dict[int, int]


@dataclass
class TransitionStats:
    # counts[(from_index, to_index)][set] -> transition occurrences
    counts: dict[tuple[int, int], dict[SetLabel, int]]
    # surgeries[(from_index, to_index)] -> sorted unique surgery ids containing it
    surgeries: dict[tuple[int, int], list[str]]


@dataclass
class InstrumentPhaseStats:
    # counts[(phase_index, instrument_index)][set] -> frames where the
    # instrument is visible during the phase
    counts: dict[tuple[int, int], dict[SetLabel, int]]
    # idle_counts[phase_index][set] -> frames of the phase with no instruments
    idle_counts: dict[int, dict[SetLabel, int]]


@dataclass
class CooccurrenceStats:
    # key_counts[frozenset of instrument indices][set] -> frames with exactly that set
    key_counts: dict[frozenset[int], dict[SetLabel, int]]
    # instrument_totals[instrument_index][set] -> frames where visible
    instrument_totals: dict[int, dict[SetLabel, int]]
    idle_counts: dict[SetLabel, int]
    total_frames: dict[SetLabel, int]


@dataclass
class SetSize:
    surgery_count: int = 0
    frame_count: int = 0

    @property
    def mean_frames(self) -> Optional[float]:
        # Undefined (absent), not zero, for an empty set.
        if self.surgery_count == 0:
            return None
        return self.frame_count / self.surgery_count


@dataclass
class SetSizeStats:
    per_set: dict[SetLabel, SetSize]
    per_surgery: dict[str, int]


def compute_phase_stats(
    dataset: Dataset,
    assignment: SplitAssignment,
    predicate: Optional[FramePredicate] = None,
) -> PhaseStats:
    predicate = predicate or filter_frames(dataset, None)
    frame_counts = {p.index: _zero_by_set(assignment) for p in dataset.phases}
    occurrence = {p.index: 0 for p in dataset.phases}
    for surgery in dataset.surgeries:
        label = assignment.set_of(surgery.id)
        seen: set[int] = set()
        for frame in surgery.frames:
            if not predicate.frame_ok(surgery, frame):
                continue
            frame_counts[frame.phase.index][label] += 1
            seen.add(frame.phase.index)
        for index in seen:
            occurrence[index] += 1
    return PhaseStats(frame_counts, occurrence)


def compute_transition_stats(
    dataset: Dataset,
    assignment: SplitAssignment,
    predicate: Optional[FramePredicate] = None,
) -> TransitionStats:
    """Transitions attributed to the set of their surgery.

    Only the surgery-level part of the filter applies: a transition is an
    adjacency fact about a surgery, not an individual frame.
    """
    predicate = predicate or filter_frames(dataset, None)
    counts: dict[tuple[int, int], dict[SetLabel, int]] = {}
    surgeries: dict[tuple[int, int], set[str]] = {}
    for surgery in dataset.surgeries:
        if not predicate.surgery_ok(surgery):
            continue
        label = assignment.set_of(surgery.id)
        for transition in derive_transitions(surgery):
            pair = (transition.from_phase.index, transition.to_phase.index)
            if pair not in counts:
                counts[pair] = _zero_by_set(assignment)
                surgeries[pair] = set()
            counts[pair][label] += 1
            surgeries[pair].add(surgery.id)
    return TransitionStats(counts, {pair: sorted(ids) for pair, ids in surgeries.items()})


def compute_instrument_phase_stats(
    dataset: Dataset,
    assignment: SplitAssignment,
    predicate: Optional[FramePredicate] = None,
) -> InstrumentPhaseStats:
    predicate = predicate or filter_frames(dataset, None)
    counts = {
        (p.index, i.index): _zero_by_set(assignment)
        for p in dataset.phases
        for i in dataset.instruments
    }
    idle = {p.index: _zero_by_set(assignment) for p in dataset.phases}
    for surgery in dataset.surgeries:
        label = assignment.set_of(surgery.id)
        for frame in surgery.frames:
            if not predicate.frame_ok(surgery, frame):
                continue
            if frame.is_idle:
                idle[frame.phase.index][label] += 1
            for instrument in frame.instruments:
                counts[(frame.phase.index, instrument.index)][label] += 1
    return InstrumentPhaseStats(counts, idle)


def compute_cooccurrence_stats(
    dataset: Dataset,
    assignment: SplitAssignment,
    predicate: Optional[FramePredicate] = None,
) -> CooccurrenceStats:
    predicate = predicate or filter_frames(dataset, None)
    key_counts: dict[frozenset[int], dict[SetLabel, int]] = {}
    instrument_totals = {i.index: _zero_by_set(assignment) for i in dataset.instruments}
    idle_counts = _zero_by_set(assignment)
    total_frames = _zero_by_set(assignment)
    for surgery in dataset.surgeries:
        label = assignment.set_of(surgery.id)
        for frame in surgery.frames:
            if not predicate.frame_ok(surgery, frame):
                continue
            total_frames[label] += 1
            if frame.is_idle:
                idle_counts[label] += 1
            for instrument in frame.instruments:
                instrument_totals[instrument.index][label] += 1
            key = cooccurrence_key(frame)
            if key is not None:
                indices = frozenset(i.index for i in key)
                if indices not in key_counts:
                    key_counts[indices] = _zero_by_set(assignment)
                key_counts[indices][label] += 1
    return CooccurrenceStats(key_counts, instrument_totals, idle_counts, total_frames)


def compute_set_sizes(dataset: Dataset, assignment: SplitAssignment) -> SetSizeStats:
    per_set = {label: SetSize() for label in _active_sets(assignment)}
    per_surgery: dict[str, int] = {}
    for surgery in dataset.surgeries:
        label = assignment.set_of(surgery.id)
        per_set[label].surgery_count += 1
        per_set[label].frame_count += surgery.frame_count
        per_surgery[surgery.id] = surgery.frame_count
    return SetSizeStats(per_set, per_surgery)
