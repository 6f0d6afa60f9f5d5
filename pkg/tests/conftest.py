from __future__ import annotations

import random

import pytest

from splitscope.ingest import CHOLEC80_PHASE_ALIASES, CHOLEC80_PHASES
from splitscope.model import (
    Dataset,
    FrameRecord,
    InstrumentId,
    PhaseId,
    SetLabel,
    SplitAssignment,
    Surgery,
)

from .synth import write_cholec80_tree

CHOLEC80_INSTRUMENTS = (
    "Grasper",
    "Bipolar",
    "Hook",
    "Scissors",
    "Clipper",
    "Irrigator",
    "SpecimenBag",
)

# display name -> annotation-file token
PHASE_TOKENS = {v: k for k, v in CHOLEC80_PHASE_ALIASES.items()}


def _cholec_vocab():
    phases = tuple(PhaseId(i, n) for i, n in enumerate(CHOLEC80_PHASES))
    instruments = tuple(InstrumentId(i, n) for i, n in enumerate(CHOLEC80_INSTRUMENTS))
    return phases, instruments


def make_cholec_like_dataset(n_surgeries: int = 8, seed: int = 7) -> Dataset:
    """Small dataset with the Cholec80 vocabulary: mostly-forward workflows,
    one phase-skipping start and one backward ending so coverage has texture."""
    rng = random.Random(seed)
    phases, instruments = _cholec_vocab()
    surgeries = []
    for k in range(n_surgeries):
        frames = []
        t = 0
        start = 1 if k == 0 else 0  # one surgery skips the first phase
        sequence = list(range(start, 7))
        if k == 1:
            sequence = [0, 1, 2, 3, 4, 6, 5]  # skip cleaning, then return to it
        for phase_index in sequence:
            for _ in range(rng.randint(2, 6)):
                size = rng.choices([0, 1, 2, 3], weights=[2, 4, 3, 1])[0]
                visible = frozenset(
                    instruments[i] for i in rng.sample(range(len(instruments)), size)
                )
                frames.append(FrameRecord(t, phases[phase_index], visible))
                t += 1
        surgeries.append(Surgery(f"video{k + 1:02d}", tuple(frames)))
    return Dataset(phases, instruments, tuple(surgeries))


@pytest.fixture(scope="session")
def cholec_like() -> Dataset:
    return make_cholec_like_dataset()


@pytest.fixture(scope="session")
def cholec_like_split(cholec_like) -> SplitAssignment:
    ids = cholec_like.surgery_ids
    half = len(ids) // 2
    return SplitAssignment(
        {i: (SetLabel.TRAIN if n < half else SetLabel.TEST) for n, i in enumerate(ids)},
        has_validation=False,
    )


@pytest.fixture(scope="session")
def cholec_tree(cholec_like, tmp_path_factory):
    root = tmp_path_factory.mktemp("cholec_tree")
    write_cholec80_tree(root, cholec_like, token_of=PHASE_TOKENS.get)
    return root
