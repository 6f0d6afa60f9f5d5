"""Split management: the common Cholec80 presets, validation against a
dataset, interactive re-assignment and the JSON exchange format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .model import Dataset, SetLabel, SplitAssignment


def _video_ids(start: int, stop: int) -> tuple[str, ...]:
    return tuple(f"video{i:02d}" for i in range(start, stop + 1))


@dataclass(frozen=True)
class SplitPreset:
    name: str
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    @property
    def has_validation(self) -> bool:
        return bool(self.val)


PRESETS = {
    p.name: p
    for p in (
        SplitPreset("40/-/40", _video_ids(1, 40), (), _video_ids(41, 80)),
        SplitPreset("32/8/40", _video_ids(1, 32), _video_ids(33, 40), _video_ids(41, 80)),
        SplitPreset("40/8/32", _video_ids(1, 40), _video_ids(41, 48), _video_ids(49, 80)),
        SplitPreset("40/24/16", _video_ids(1, 40), _video_ids(41, 64), _video_ids(65, 80)),
    )
}


def preset(name: str) -> SplitAssignment:
    if name not in PRESETS:
        raise KeyError(f"unknown split preset {name!r}; known: {sorted(PRESETS)}")
    p = PRESETS[name]
    assignments: dict[str, SetLabel] = {}
    for label, ids in ((SetLabel.TRAIN, p.train), (SetLabel.VAL, p.val), (SetLabel.TEST, p.test)):
        for surgery_id in ids:
            assignments[surgery_id] = label
    return SplitAssignment(assignments, has_validation=p.has_validation)


def reassign(assignment: SplitAssignment, surgery_id: str, target: SetLabel) -> SplitAssignment:
    """New assignment with one surgery moved; the original is untouched."""
    if surgery_id not in assignment.assignments:
        raise KeyError(f"unknown surgery {surgery_id!r}")
    if target is SetLabel.VAL and not assignment.has_validation:
        raise ValueError("this split has no validation set")
    updated = dict(assignment.assignments)
    updated[surgery_id] = target
    return SplitAssignment(updated, has_validation=assignment.has_validation)


def from_lists(
    train: Iterable[str],
    test: Iterable[str],
    val: Iterable[str] = (),
    has_validation: Optional[bool] = None,
) -> tuple[Optional[SplitAssignment], list[str]]:
    """Build an assignment from per-set id lists, reporting violations
    (duplicate membership, val ids without a declared validation set)
    instead of raising."""
    train, val, test = list(train), list(val), list(test)
    if has_validation is None:
        has_validation = bool(val)
    violations = []
    if val and not has_validation:
        violations.append(f"surgeries assigned to val but has_validation is false: {sorted(val)}")
    seen: dict[str, SetLabel] = {}
    assignments: dict[str, SetLabel] = {}
    for label, ids in ((SetLabel.TRAIN, train), (SetLabel.VAL, val), (SetLabel.TEST, test)):
        for surgery_id in ids:
            if surgery_id in seen:
                violations.append(
                    f"surgery {surgery_id!r} in both {seen[surgery_id].value} and {label.value}"
                )
                continue
            seen[surgery_id] = label
            assignments[surgery_id] = label
    if violations:
        return None, violations
    return SplitAssignment(assignments, has_validation=has_validation), []


def validate(assignment: SplitAssignment, dataset: Dataset) -> list[str]:
    """Totality over the dataset, no unknown ids, non-empty train and test."""
    violations = []
    dataset_ids = set(dataset.surgery_ids)
    assigned = set(assignment.assignments)
    for surgery_id in sorted(dataset_ids - assigned):
        violations.append(f"surgery {surgery_id!r} is not assigned to any set")
    for surgery_id in sorted(assigned - dataset_ids):
        violations.append(f"assigned surgery {surgery_id!r} is not in the dataset")
    if assignment.size_of(SetLabel.TRAIN) == 0:
        violations.append("train set is empty")
    if assignment.size_of(SetLabel.TEST) == 0:
        violations.append("test set is empty")
    if assignment.has_validation and assignment.size_of(SetLabel.VAL) == 0:
        violations.append("validation set declared but empty")
    return violations


def assignment_to_json_dict(assignment: SplitAssignment) -> dict:
    return {
        "has_validation": assignment.has_validation,
        "train": assignment.ids_in(SetLabel.TRAIN),
        "val": assignment.ids_in(SetLabel.VAL),
        "test": assignment.ids_in(SetLabel.TEST),
    }


def assignment_from_json_dict(payload: dict) -> tuple[Optional[SplitAssignment], list[str]]:
    if not isinstance(payload, dict):
        return None, ["assignment must be a JSON object"]
    for key in ("train", "test"):
        if not isinstance(payload.get(key), list):
            return None, [f"assignment field {key!r} must be a list of surgery ids"]
    val = payload.get("val", [])
    if not isinstance(val, list):
        return None, ["assignment field 'val' must be a list of surgery ids"]
    has_validation = payload.get("has_validation")
    if has_validation is not None and not isinstance(has_validation, bool):
        return None, ["assignment field 'has_validation' must be a boolean"]
    return from_lists(payload["train"], payload["test"], val, has_validation)


def load_assignment(path: str | Path) -> tuple[Optional[SplitAssignment], list[str]]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return assignment_from_json_dict(payload)


def save_assignment(assignment: SplitAssignment, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(assignment_to_json_dict(assignment), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def resolve_split(spec: str) -> tuple[Optional[SplitAssignment], list[str]]:
    """A preset name or a path to an assignment JSON file."""
    if spec in PRESETS:
        return preset(spec), []
    path = Path(spec)
    if path.exists():
        return load_assignment(path)
    return None, [f"{spec!r} is neither a known preset nor an existing file"]
