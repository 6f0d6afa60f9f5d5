"""splitscope: audit, repartition and optimize dataset splits for surgical
phase and instrument annotations."""

from .model import (
    CooccurrenceKey,
    Dataset,
    Direction,
    FrameRecord,
    InstrumentId,
    PhaseId,
    SetLabel,
    SplitAssignment,
    Surgery,
    Transition,
    cooccurrence_key,
    derive_transitions,
    first_phase,
)

__all__ = [
    "CooccurrenceKey",
    "Dataset",
    "Direction",
    "FrameRecord",
    "InstrumentId",
    "PhaseId",
    "SetLabel",
    "SplitAssignment",
    "Surgery",
    "Transition",
    "cooccurrence_key",
    "derive_transitions",
    "first_phase",
]

__version__ = "0.1.0"
