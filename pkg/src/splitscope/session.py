"""Session state for interactive use: current assignment, active filter and
undo/redo stacks of assignment snapshots."""

from __future__ import annotations

import threading
from typing import Optional

from . import splits
from .model import Dataset, SetLabel, SplitAssignment
from .stats import FilterCriteria, filter_frames
from .viewmodel import build_view_model


class Session:
    """Owns one user's split-editing state over a shared immutable dataset.

    Mutations are serialized by a per-session lock; assignments are immutable
    values, so undo/redo are plain stack pushes.
    """

    def __init__(self, dataset: Dataset, assignment: SplitAssignment):
        self.dataset = dataset
        self.fingerprint = dataset.fingerprint()
        self.assignment = assignment
        self.criteria: Optional[FilterCriteria] = None
        self._undo: list[SplitAssignment] = []
        self._redo: list[SplitAssignment] = []
        self.lock = threading.RLock()

    def _push_undo(self, previous: SplitAssignment) -> None:
        self._undo.append(previous)
        self._redo.clear()

    def put_assignment(self, assignment: SplitAssignment) -> list[str]:
        with self.lock:
            violations = splits.validate(assignment, self.dataset)
            if violations:
                return violations
            self._push_undo(self.assignment)
            self.assignment = assignment
            return []

    def reassign(self, surgery_id: str, target: SetLabel) -> None:
        with self.lock:
            updated = splits.reassign(self.assignment, surgery_id, target)
            self._push_undo(self.assignment)
            self.assignment = updated

    def undo(self) -> bool:
        with self.lock:
            if not self._undo:
                return False
            self._redo.append(self.assignment)
            self.assignment = self._undo.pop()
            return True

    def redo(self) -> bool:
        with self.lock:
            if not self._redo:
                return False
            self._undo.append(self.assignment)
            self.assignment = self._redo.pop()
            return True

    def set_filter(self, criteria: Optional[FilterCriteria]) -> None:
        with self.lock:
            if criteria is not None:
                filter_frames(self.dataset, criteria)  # validates names
            self.criteria = criteria if criteria and not criteria.is_empty else None

    def clear_filter(self) -> None:
        with self.lock:
            self.criteria = None

    def view_model(self) -> dict:
        with self.lock:
            return build_view_model(self.dataset, self.assignment, self.criteria)
