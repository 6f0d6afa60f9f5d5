"""Unrepresented-case detection: which phase transitions, phase-instrument
pairs and instrument combinations occur somewhere in the dataset but never in
a given set, plus an informational section on surgery start phases."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .model import (
    Dataset,
    SetLabel,
    SplitAssignment,
    cooccurrence_key,
    derive_transitions,
    first_phase,
)


class EntityCategory(Enum):
    PHASE_TRANSITION = "phase_transition"
    INSTRUMENT_DURING_PHASE = "instrument_during_phase"
    INSTRUMENT_COMBINATION = "instrument_combination"


CATEGORY_TITLES = {
    EntityCategory.PHASE_TRANSITION: "Phase transition",
    EntityCategory.INSTRUMENT_DURING_PHASE: "Instrument during phase",
    EntityCategory.INSTRUMENT_COMBINATION: "Instrument combination",
}

# Entity shapes per category:
#   PHASE_TRANSITION         (from_phase_index, to_phase_index)
#   INSTRUMENT_DURING_PHASE  (phase_index, instrument_index)
#   INSTRUMENT_COMBINATION   frozenset of instrument indices, cardinality >= 2
Entity = object


def entity_sort_key(entity):
    if isinstance(entity, frozenset):
        return (len(entity), tuple(sorted(entity)))
    return entity


def _surgery_entities(surgery, category: EntityCategory) -> Iterable[Entity]:
    frames = surgery.frames
    if category is EntityCategory.PHASE_TRANSITION:
        for prev, cur in zip(frames, frames[1:]):
            if prev.phase.index != cur.phase.index:
                yield (prev.phase.index, cur.phase.index)
    elif category is EntityCategory.INSTRUMENT_DURING_PHASE:
        for frame in frames:
            for instrument in frame.instruments:
                yield (frame.phase.index, instrument.index)
    else:
        for frame in frames:
            key = cooccurrence_key(frame)
            if key is not None:
                yield frozenset(i.index for i in key)


def reported_sets(assignment: SplitAssignment) -> tuple[SetLabel, ...]:
    """Sets that actually hold surgeries; an empty set gets no report column
    rather than a spurious all-unrepresented one."""
    return tuple(s for s in assignment.declared_sets() if assignment.size_of(s) > 0)


def entity_universe(dataset: Dataset, category: EntityCategory) -> set[Entity]:
    """All entities of the category occurring at least once anywhere."""
    universe: set[Entity] = set()
    for surgery in dataset.surgeries:
        universe.update(_surgery_entities(surgery, category))
    return universe


def _tally_categories(
    dataset: Dataset, assignment: SplitAssignment
) -> dict[EntityCategory, dict[Entity, dict[SetLabel, int]]]:
    """One pass over all frames counting every category's entities per set."""
    sets = reported_sets(assignment)
    zero = {label: 0 for label in sets}
    transitions: dict = {}
    during_phase: dict = {}
    combinations: dict = {}
    # distinct instrument sets repeat heavily; cache their index forms
    index_cache: dict[frozenset, tuple[tuple[int, ...], Optional[frozenset]]] = {}
    for surgery in dataset.surgeries:
        label = assignment.set_of(surgery.id)
        prev_index = None
        for frame in surgery.frames:
            phase_index = frame.phase.index
            if prev_index is not None and prev_index != phase_index:
                pair = (prev_index, phase_index)
                by_set = transitions.get(pair)
                if by_set is None:
                    by_set = transitions[pair] = dict(zero)
                by_set[label] += 1
            prev_index = phase_index
            instruments = frame.instruments
            if not instruments:
                continue
            cached = index_cache.get(instruments)
            if cached is None:
                indices = tuple(sorted(i.index for i in instruments))
                combo = frozenset(indices) if len(indices) >= 2 else None
                cached = index_cache[instruments] = (indices, combo)
            indices, combo = cached
            for index in indices:
                pair = (phase_index, index)
                by_set = during_phase.get(pair)
                if by_set is None:
                    by_set = during_phase[pair] = dict(zero)
                by_set[label] += 1
            if combo is not None:
                by_set = combinations.get(combo)
                if by_set is None:
                    by_set = combinations[combo] = dict(zero)
                by_set[label] += 1
    return {
        EntityCategory.PHASE_TRANSITION: transitions,
        EntityCategory.INSTRUMENT_DURING_PHASE: during_phase,
        EntityCategory.INSTRUMENT_COMBINATION: combinations,
    }


def entity_occurrences(
    dataset: Dataset, assignment: SplitAssignment, category: EntityCategory
) -> dict[Entity, dict[SetLabel, int]]:
    """Occurrence counts per universe entity per reported set (zeros included)."""
    return _tally_categories(dataset, assignment)[category]


def unrepresented(
    dataset: Dataset, assignment: SplitAssignment, category: EntityCategory
) -> dict[SetLabel, list[Entity]]:
    """Per set: universe entities with zero occurrences in that set."""
    occurrences = entity_occurrences(dataset, assignment, category)
    out: dict[SetLabel, list[Entity]] = {label: [] for label in reported_sets(assignment)}
    for entity in sorted(occurrences, key=entity_sort_key):
        for label, count in occurrences[entity].items():
            if count == 0:
                out[label].append(entity)
    return out


@dataclass
class CategoryCoverage:
    universe: list[Entity]
    occurrences: dict[Entity, dict[SetLabel, int]]
    unrepresented: dict[SetLabel, list[Entity]]

    def counts(self) -> dict[SetLabel, int]:
        return {label: len(entities) for label, entities in self.unrepresented.items()}


@dataclass
class StartPhaseSection:
    """Which phases surgeries start in, per set. Informational: start-phase
    patterns are a finding in their own right but not a Table category."""

    universe: list[int]
    per_set_surgeries: dict[SetLabel, dict[int, list[str]]]
    unrepresented: dict[SetLabel, list[int]]


@dataclass
class CoverageReport:
    fingerprint: str
    sets: tuple[SetLabel, ...]
    categories: dict[EntityCategory, CategoryCoverage]
    start_phases: StartPhaseSection
    phase_names: dict[int, str]
    instrument_names: dict[int, str]

    def unrepresented_counts(self) -> dict[EntityCategory, dict[SetLabel, int]]:
        return {category: cov.counts() for category, cov in self.categories.items()}


def _start_phase_section(dataset: Dataset, assignment: SplitAssignment) -> StartPhaseSection:
    sets = reported_sets(assignment)
    per_set: dict[SetLabel, dict[int, list[str]]] = {label: {} for label in sets}
    universe: set[int] = set()
    for surgery in dataset.surgeries:
        start = first_phase(surgery).index
        universe.add(start)
        label = assignment.set_of(surgery.id)
        if label in per_set:
            per_set[label].setdefault(start, []).append(surgery.id)
    for by_phase in per_set.values():
        for ids in by_phase.values():
            ids.sort()
    missing = {
        label: sorted(p for p in universe if p not in per_set[label]) for label in sets
    }
    return StartPhaseSection(sorted(universe), per_set, missing)


def coverage_report(dataset: Dataset, assignment: SplitAssignment) -> CoverageReport:
    tally = _tally_categories(dataset, assignment)
    categories = {}
    for category, occurrences in tally.items():
        universe = sorted(occurrences, key=entity_sort_key)
        missing: dict[SetLabel, list[Entity]] = {
            label: [] for label in reported_sets(assignment)
        }
        for entity in universe:
            for label, count in occurrences[entity].items():
                if count == 0:
                    missing[label].append(entity)
        categories[category] = CategoryCoverage(universe, occurrences, missing)
    return CoverageReport(
        fingerprint=dataset.fingerprint(),
        sets=reported_sets(assignment),
        categories=categories,
        start_phases=_start_phase_section(dataset, assignment),
        phase_names={p.index: p.name for p in dataset.phases},
        instrument_names={i.index: i.name for i in dataset.instruments},
    )


@dataclass
class SetDelta:
    newly_covered: list[Entity] = field(default_factory=list)
    newly_uncovered: list[Entity] = field(default_factory=list)


@dataclass
class CoverageDelta:
    categories: dict[EntityCategory, dict[SetLabel, SetDelta]]
    start_phases: dict[SetLabel, SetDelta]


def diff_reports(before: CoverageReport, after: CoverageReport) -> CoverageDelta:
    """Entities newly covered / newly uncovered per category and set.

    Only sets reported on both sides are compared; reports over different
    datasets cannot be diffed.
    """
    if before.fingerprint != after.fingerprint:
        raise ValueError(
            f"reports cover different datasets ({before.fingerprint} vs {after.fingerprint})"
        )
    shared = [label for label in before.sets if label in after.sets]
    categories: dict[EntityCategory, dict[SetLabel, SetDelta]] = {}
    for category in EntityCategory:
        categories[category] = {}
        for label in shared:
            was = set(before.categories[category].unrepresented[label])
            now = set(after.categories[category].unrepresented[label])
            categories[category][label] = SetDelta(
                newly_covered=sorted(was - now, key=entity_sort_key),
                newly_uncovered=sorted(now - was, key=entity_sort_key),
            )
    start_deltas = {}
    for label in shared:
        was = set(before.start_phases.unrepresented[label])
        now = set(after.start_phases.unrepresented[label])
        start_deltas[label] = SetDelta(
            newly_covered=sorted(was - now), newly_uncovered=sorted(now - was)
        )
    return CoverageDelta(categories, start_deltas)


def _entity_names(report: CoverageReport, category: EntityCategory, entity) -> list[str]:
    if category is EntityCategory.PHASE_TRANSITION:
        return [report.phase_names[entity[0]], report.phase_names[entity[1]]]
    if category is EntityCategory.INSTRUMENT_DURING_PHASE:
        return [report.phase_names[entity[0]], report.instrument_names[entity[1]]]
    return [report.instrument_names[i] for i in sorted(entity)]


def report_to_json_dict(report: CoverageReport) -> dict:
    payload = {
        "schema_version": "1",
        "fingerprint": report.fingerprint,
        "sets": [label.value for label in report.sets],
        "categories": {},
        "start_phases": {
            "universe": [report.phase_names[p] for p in report.start_phases.universe],
            "per_set": {
                label.value: {
                    "surgeries": {
                        report.phase_names[p]: ids
                        for p, ids in sorted(report.start_phases.per_set_surgeries[label].items())
                    },
                    "unrepresented": [
                        report.phase_names[p] for p in report.start_phases.unrepresented[label]
                    ],
                }
                for label in report.sets
            },
        },
    }
    for category, cov in report.categories.items():
        payload["categories"][category.value] = {
            "universe_size": len(cov.universe),
            "per_set": {
                label.value: {
                    "count": len(entities),
                    "entities": [_entity_names(report, category, e) for e in entities],
                }
                for label, entities in cov.unrepresented.items()
            },
            "occurrences": [
                {
                    "entity": _entity_names(report, category, entity),
                    "counts": {label.value: c for label, c in counts.items()},
                }
                for entity, counts in sorted(
                    cov.occurrences.items(), key=lambda kv: entity_sort_key(kv[0])
                )
            ],
        }
    return payload


def delta_to_json_dict(report: CoverageReport, delta: CoverageDelta) -> dict:
    payload = {"schema_version": "1", "categories": {}, "start_phases": {}}
    for category, per_set in delta.categories.items():
        payload["categories"][category.value] = {
            label.value: {
                "newly_covered": [_entity_names(report, category, e) for e in d.newly_covered],
                "newly_uncovered": [_entity_names(report, category, e) for e in d.newly_uncovered],
            }
            for label, d in per_set.items()
        }
    for label, d in delta.start_phases.items():
        payload["start_phases"][label.value] = {
            "newly_covered": [report.phase_names[p] for p in d.newly_covered],
            "newly_uncovered": [report.phase_names[p] for p in d.newly_uncovered],
        }
    return payload


def report_to_text_table(report: CoverageReport, split_name: str = "custom") -> str:
    """Single-split table with the nine unrepresented-case cells; a set
    absent from the split renders as '-'."""
    columns = (SetLabel.TRAIN, SetLabel.VAL, SetLabel.TEST)
    lines = []
    header_groups = "".join(f"{CATEGORY_TITLES[c]:^26}" for c in EntityCategory)
    lines.append(f"{'':14}{header_groups}")
    sub = "".join(f"{l.value.capitalize():>8}" for l in columns)
    lines.append(f"{'Split':14}{sub}  {sub}  {sub}")
    cells = []
    for category in EntityCategory:
        counts = report.categories[category].counts()
        group = "".join(
            f"{counts[label]:>8}" if label in counts else f"{'-':>8}" for label in columns
        )
        cells.append(group)
    lines.append(f"{split_name:14}" + "  ".join(cells))
    return "\n".join(lines) + "\n"
