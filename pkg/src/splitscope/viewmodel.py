"""Serialized view model: everything the explorer UI draws for one
(dataset, assignment, filter) state, reproducible from stats and coverage."""

from __future__ import annotations

from typing import Optional

from .coverage import coverage_report, entity_sort_key, report_to_json_dict
from .model import Dataset, SetLabel, SplitAssignment, instrument_key_label, last_phase
from .stats import (
    FilterCriteria,
    compute_cooccurrence_stats,
    compute_instrument_phase_stats,
    compute_phase_stats,
    compute_set_sizes,
    compute_transition_stats,
    filter_frames,
)

SCHEMA_VERSION = "1"


def criteria_to_json_dict(criteria: Optional[FilterCriteria]) -> Optional[dict]:
    if criteria is None or criteria.is_empty:
        return None
    return {
        "phases": sorted(criteria.phases),
        "instruments": sorted(criteria.instruments),
        "cooccurrence": sorted(criteria.cooccurrence) if criteria.cooccurrence is not None else None,
        "transition": list(criteria.transition) if criteria.transition is not None else None,
    }


def criteria_from_json_dict(payload: Optional[dict]) -> Optional[FilterCriteria]:
    if not payload:
        return None
    if not isinstance(payload, dict):
        raise ValueError("filter criteria must be a JSON object")
    unknown = set(payload) - {"phases", "instruments", "cooccurrence", "transition"}
    if unknown:
        raise ValueError(f"unknown criteria fields: {sorted(unknown)}")
    transition = payload.get("transition")
    if transition is not None:
        if not isinstance(transition, (list, tuple)) or len(transition) != 2:
            raise ValueError("transition criterion must be a [from, to] pair")
        transition = (transition[0], transition[1])
    cooccurrence = payload.get("cooccurrence")
    return FilterCriteria(
        phases=frozenset(payload.get("phases") or ()),
        instruments=frozenset(payload.get("instruments") or ()),
        cooccurrence=frozenset(cooccurrence) if cooccurrence is not None else None,
        transition=transition,
    )


def _counts_json(by_set: dict[SetLabel, int]) -> dict[str, int]:
    return {label.value: count for label, count in by_set.items()}


def build_view_model(
    dataset: Dataset,
    assignment: SplitAssignment,
    criteria: Optional[FilterCriteria] = None,
) -> dict:
    predicate = filter_frames(dataset, criteria)
    phase_stats = compute_phase_stats(dataset, assignment, predicate)
    transition_stats = compute_transition_stats(dataset, assignment, predicate)
    instrument_phase = compute_instrument_phase_stats(dataset, assignment, predicate)
    cooccurrence = compute_cooccurrence_stats(dataset, assignment, predicate)
    set_sizes = compute_set_sizes(dataset, assignment)
    report = coverage_report(dataset, assignment)

    nodes = [
        {
            "phase": p.index,
            "frame_counts": _counts_json(phase_stats.frame_counts[p.index]),
            "surgery_occurrence": phase_stats.surgery_occurrence[p.index],
        }
        for p in dataset.phases
    ]
    arcs = [
        {
            "from": pair[0],
            "to": pair[1],
            "direction": "forward" if pair[1] > pair[0] else "backward",
            "counts": _counts_json(by_set),
            "surgeries": transition_stats.surgeries[pair],
        }
        for pair, by_set in sorted(transition_stats.counts.items())
    ]
    instrument_bars = [
        {
            "phase": p.index,
            "instrument": i.index,
            "counts": _counts_json(instrument_phase.counts[(p.index, i.index)]),
        }
        for p in dataset.phases
        for i in dataset.instruments
    ]
    idle_bars = [
        {"phase": p.index, "counts": _counts_json(instrument_phase.idle_counts[p.index])}
        for p in dataset.phases
    ]

    instrument_index = {i.index: i for i in dataset.instruments}
    cooccurrence_nodes = [
        {
            "instruments": sorted(key),
            "label": instrument_key_label(instrument_index[i] for i in key),
            "counts": _counts_json(by_set),
        }
        for key, by_set in sorted(cooccurrence.key_counts.items(), key=lambda kv: entity_sort_key(kv[0]))
    ]

    per_set_sizes = {}
    for label, size in set_sizes.per_set.items():
        entry: dict = {"surgery_count": size.surgery_count, "frame_count": size.frame_count}
        if size.mean_frames is not None:
            entry["mean_frames"] = size.mean_frames
        per_set_sizes[label.value] = entry
    surgeries = [
        {
            "id": s.id,
            "set": assignment.set_of(s.id).value,
            "frame_count": s.frame_count,
            "first_phase": s.frames[0].phase.index,
            "last_phase": last_phase(s).index,
        }
        for s in dataset.surgeries
    ]

    return {
        "schema_version": SCHEMA_VERSION,
        "fingerprint": dataset.fingerprint(),
        "has_validation": assignment.has_validation,
        "sets": [label.value for label in assignment.declared_sets()],
        "phases": [{"index": p.index, "name": p.name} for p in dataset.phases],
        "instruments": [{"index": i.index, "name": i.name} for i in sorted(dataset.instruments)],
        "phase_view": {
            "nodes": nodes,
            "arcs": arcs,
            "instrument_bars": instrument_bars,
            "idle_bars": idle_bars,
        },
        "instrument_view": {
            "instrument_totals": [
                {"instrument": i.index, "counts": _counts_json(cooccurrence.instrument_totals[i.index])}
                for i in sorted(dataset.instruments)
            ],
            "idle_counts": _counts_json(cooccurrence.idle_counts),
            "total_frames": _counts_json(cooccurrence.total_frames),
            "cooccurrence_nodes": cooccurrence_nodes,
        },
        "supplementary": {
            "assignment": {
                "train": assignment.ids_in(SetLabel.TRAIN),
                "val": assignment.ids_in(SetLabel.VAL),
                "test": assignment.ids_in(SetLabel.TEST),
            },
            "set_sizes": per_set_sizes,
            "surgeries": surgeries,
        },
        "coverage": report_to_json_dict(report),
        "filter_state": criteria_to_json_dict(criteria),
    }
