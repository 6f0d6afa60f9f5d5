"""Acceptance suite. One test per criterion; each prints a PASS line when it
holds (run with ``pytest -v -s tests/test_acceptance.py``).

The Cholec80-dependent criteria need the real annotation files (directories
``phase_annotations/`` and ``tool_annotations/`` with per-video files). Point
CHOLEC80_DIR at the dataset root to enable them; without it they are skipped,
not silently weakened.
"""

import json
import os
import random
import time
from collections import Counter
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from splitscope.cli import main
from splitscope.coverage import (
    EntityCategory,
    coverage_report,
    diff_reports,
    entity_universe,
    unrepresented,
)
from splitscope.ingest import IngestConfig, load_dataset
from splitscope.model import SetLabel, SplitAssignment
from splitscope.optimizer import Objective, SearchConfig, optimize, score
from splitscope.service import create_app
from splitscope.splits import preset, reassign, save_assignment
from splitscope.stats import (
    FilterCriteria,
    compute_cooccurrence_stats,
    compute_instrument_phase_stats,
    compute_phase_stats,
    compute_set_sizes,
    compute_transition_stats,
    filter_frames,
)

from . import oracles
from .synth import make_random_assignment, make_random_dataset, make_twin_dataset

CHOLEC80_ENV = "CHOLEC80_DIR"

# Table of unrepresented-case counts per split: category -> (train, val, test);
# None marks the absent validation column.
TABLE_1 = {
    "40/-/40": {
        EntityCategory.PHASE_TRANSITION: (0, None, 3),
        EntityCategory.INSTRUMENT_DURING_PHASE: (4, None, 3),
        EntityCategory.INSTRUMENT_COMBINATION: (4, None, 4),
    },
    "32/8/40": {
        EntityCategory.PHASE_TRANSITION: (0, 2, 3),
        EntityCategory.INSTRUMENT_DURING_PHASE: (4, 17, 3),
        EntityCategory.INSTRUMENT_COMBINATION: (4, 14, 4),
    },
    "40/8/32": {
        EntityCategory.PHASE_TRANSITION: (0, 3, 3),
        EntityCategory.INSTRUMENT_DURING_PHASE: (4, 11, 6),
        EntityCategory.INSTRUMENT_COMBINATION: (4, 9, 6),
    },
    "40/24/16": {
        EntityCategory.PHASE_TRANSITION: (0, 3, 3),
        EntityCategory.INSTRUMENT_DURING_PHASE: (4, 4, 14),
        EntityCategory.INSTRUMENT_COMBINATION: (4, 6, 9),
    },
}

NINE_PHASE_SKIPPING = {f"video{i:02d}" for i in (10, 13, 19, 22, 23, 29, 32, 33, 38)}


def _cholec80_root():
    root = os.environ.get(CHOLEC80_ENV)
    if not root:
        pytest.skip(f"set {CHOLEC80_ENV} to the Cholec80 annotation root to run this criterion")
    path = Path(root)
    if not path.exists():
        pytest.skip(f"{CHOLEC80_ENV}={root} does not exist")
    return path


@pytest.fixture(scope="module")
def cholec80():
    root = _cholec80_root()
    started = time.monotonic()
    dataset, report = load_dataset(root, IngestConfig())
    elapsed = time.monotonic() - started
    if len(dataset.surgeries) != 80:
        pytest.skip(f"expected 80 surgeries under {root}, found {len(dataset.surgeries)}")
    assert report.ok, f"load errors: {report.errors}"
    return dataset, elapsed


def _singleton_included_missing_counts(dataset, assignment):
    """Alternate combination rule (cardinality >= 1) used only to document a
    mismatch: which rule reproduces the published counts."""
    sets = assignment.declared_sets()
    universe = set()
    present = {label: set() for label in sets}
    for surgery in dataset.surgeries:
        label = assignment.set_of(surgery.id)
        for frame in surgery.frames:
            if frame.instruments:
                key = frozenset(i.index for i in frame.instruments)
                universe.add(key)
                present[label].add(key)
    return {label: len(universe - present[label]) for label in sets}


def test_criterion_table_1_reproduction(cholec80):
    dataset, load_seconds = cholec80
    started = time.monotonic()
    for split_name, expected in TABLE_1.items():
        assignment = preset(split_name)
        report = coverage_report(dataset, assignment)
        counts = report.unrepresented_counts()
        for category, (train, val, test) in expected.items():
            got = counts[category]
            cells = {
                SetLabel.TRAIN: train,
                SetLabel.VAL: val,
                SetLabel.TEST: test,
            }
            for label, expected_count in cells.items():
                if expected_count is None:
                    assert label not in got, f"{split_name}: unexpected {label} column"
                    continue
                if (
                    category is EntityCategory.INSTRUMENT_COMBINATION
                    and got[label] != expected_count
                ):
                    alternate = _singleton_included_missing_counts(dataset, assignment)
                    pytest.fail(
                        f"{split_name} combination cell {label.value}: got {got[label]} "
                        f"(cardinality >= 2 rule), published {expected_count}; "
                        f"cardinality >= 1 rule gives {alternate[label]}"
                    )
                assert got[label] == expected_count, (
                    f"{split_name} {category.value} {label.value}: "
                    f"got {got[label]}, published {expected_count}"
                )
    elapsed = load_seconds + (time.monotonic() - started)
    assert elapsed < 10.0, f"full-audit runtime {elapsed:.2f}s exceeds 10s"
    print(f"ACCEPTANCE PASS: Table 1 reproduction ({elapsed:.2f}s for 80 videos)")


def test_criterion_cited_counts(cholec80):
    dataset, _ = cholec80
    key = frozenset(
        dataset.instrument_by_name(n).index for n in ("Grasper", "Bipolar", "Irrigator")
    )

    assignment = preset("32/8/40")
    cooc = compute_cooccurrence_stats(dataset, assignment)
    counts = cooc.key_counts[key]
    assert counts[SetLabel.TRAIN] == 503
    assert counts[SetLabel.TEST] == 154
    assert counts[SetLabel.VAL] == 0

    cooc_alt = compute_cooccurrence_stats(dataset, preset("40/8/32"))
    assert cooc_alt.key_counts[key][SetLabel.VAL] == 47

    sizes = compute_set_sizes(dataset, assignment)
    for label, published in (
        (SetLabel.VAL, 1900),
        (SetLabel.TRAIN, 2200),
        (SetLabel.TEST, 2500),
    ):
        mean = sizes.per_set[label].mean_frames
        assert abs(mean - published) <= 100, f"{label.value} mean {mean:.1f} vs {published}±100"

    # 40/-/40: every phase represented in both sets
    phase_stats = compute_phase_stats(dataset, preset("40/-/40"))
    for p in dataset.phases:
        assert all(c > 0 for c in phase_stats.frame_counts[p.index].values())
    print("ACCEPTANCE PASS: cited counts (503/154 train/test, 47 val, set means)")


def test_criterion_repartition_findings(cholec80):
    dataset, _ = cholec80
    calot = dataset.phase_by_name("Calot triangle dissection")
    skippers = {s.id for s in dataset.surgeries if s.frames[0].phase == calot}
    assert skippers == NINE_PHASE_SKIPPING

    assignment = preset("40/-/40")
    before = coverage_report(dataset, assignment)
    for surgery_id in ("video32", "video33", "video38"):
        assignment = reassign(assignment, surgery_id, SetLabel.TEST)
    for surgery_id in ("video58", "video66", "video71"):
        assignment = reassign(assignment, surgery_id, SetLabel.TRAIN)
    after = coverage_report(dataset, assignment)
    delta = diff_reports(before, after)

    assert calot.index in delta.start_phases[SetLabel.TEST].newly_covered
    retraction = dataset.phase_by_name("Gallbladder retraction").index
    cleaning = dataset.phase_by_name("Cleaning coagulation").index
    newly = delta.categories[EntityCategory.PHASE_TRANSITION][SetLabel.TEST].newly_covered
    assert (retraction, cleaning) in newly
    print("ACCEPTANCE PASS: repartition findings (phase-skip starts, backward ending)")


def test_criterion_oracle_equivalence():
    rng = random.Random(20260810)
    for index in range(200):
        dataset = make_random_dataset(rng)
        assignment = make_random_assignment(rng, dataset)
        labels = assignment.declared_sets()
        predicate = filter_frames(dataset, None)

        phase = compute_phase_stats(dataset, assignment, predicate)
        expected_frames = oracles.oracle_phase_frame_counts(dataset, assignment)
        for p in dataset.phases:
            for label in labels:
                assert phase.frame_counts[p.index][label] == expected_frames.get(
                    (p.index, label), 0
                )
        expected_occurrence = oracles.oracle_phase_surgery_occurrence(dataset)
        for p in dataset.phases:
            assert phase.surgery_occurrence[p.index] == expected_occurrence.get(p.index, 0)

        transitions = compute_transition_stats(dataset, assignment, predicate)
        got = {
            (pair[0], pair[1], label): c
            for pair, by_set in transitions.counts.items()
            for label, c in by_set.items()
            if c
        }
        assert got == oracles.oracle_transition_counts(dataset, assignment)

        instrument_phase = compute_instrument_phase_stats(dataset, assignment, predicate)
        got = {
            (p, i, label): c
            for (p, i), by_set in instrument_phase.counts.items()
            for label, c in by_set.items()
            if c
        }
        assert got == oracles.oracle_instrument_phase_counts(dataset, assignment)

        cooc = compute_cooccurrence_stats(dataset, assignment, predicate)
        got = {
            (key, label): c
            for key, by_set in cooc.key_counts.items()
            for label, c in by_set.items()
            if c
        }
        assert got == oracles.oracle_cooccurrence_counts(dataset, assignment)
        expected_idle = oracles.oracle_idle_counts(dataset, assignment)
        for label in labels:
            assert cooc.idle_counts[label] == expected_idle.get(label, 0)

        sizes = compute_set_sizes(dataset, assignment)
        surgery_counts, frame_counts = oracles.oracle_set_sizes(dataset, assignment)
        for label in labels:
            assert sizes.per_set[label].surgery_count == surgery_counts.get(label, 0)
            assert sizes.per_set[label].frame_count == frame_counts.get(label, 0)

        for category in EntityCategory:
            assert entity_universe(dataset, category) == oracles.oracle_universe(
                dataset, category
            )
            got_missing = unrepresented(dataset, assignment, category)
            expected_missing = oracles.oracle_unrepresented(dataset, assignment, category)
            assert {
                label: set(entities) for label, entities in got_missing.items()
            } == expected_missing

        # partition property: per-set values sum to the unsplit totals
        assert sum(cooc.total_frames.values()) == dataset.total_frames
        for p in dataset.phases:
            unsplit = sum(1 for s in dataset.surgeries for f in s.frames if f.phase == p)
            assert sum(phase.frame_counts[p.index].values()) == unsplit

        # monotonicity: any conjunct only shrinks counts
        name = dataset.phases[0].name
        tightened = compute_phase_stats(
            dataset, assignment, filter_frames(dataset, FilterCriteria(phases={name}))
        )
        for p in dataset.phases:
            for label in labels:
                assert tightened.frame_counts[p.index][label] <= phase.frame_counts[p.index][label]
    print("ACCEPTANCE PASS: oracle equivalence on 200 randomized datasets")


def test_criterion_optimizer():
    dataset, sizes, _ = make_twin_dataset()
    successes = 0
    for seed in range(20):
        config = SearchConfig(sizes=sizes, seed=seed, budget=5000, restarts=4)
        snapshots = []
        result = optimize(dataset, config, _observer=snapshots.append)
        if result.score == 0.0 and result.evaluations <= 5000:
            successes += 1
        scores = [s for _, s in result.trace]
        assert scores == sorted(scores, reverse=True) and len(set(scores)) == len(scores)
        for membership in snapshots:
            for label, n in config.sizes.items():
                assert sum(1 for v in membership.values() if v is label) == n
    assert successes >= 19, f"planted optimum found in only {successes}/20 seeds"

    config = SearchConfig(sizes=sizes, seed=123, budget=5000, restarts=4)
    runs = []
    for _ in range(2):
        result = optimize(dataset, config)
        runs.append(
            json.dumps(
                {
                    "assignment": {k: v.value for k, v in result.assignment.assignments.items()},
                    "trace": result.trace,
                    "score": result.score,
                    "evaluations": result.evaluations,
                },
                sort_keys=True,
            )
        )
    assert runs[0] == runs[1]
    print(f"ACCEPTANCE PASS: optimizer ({successes}/20 seeds reached the planted optimum)")


def test_criterion_cli_service_determinism(cholec_like, cholec_like_split, cholec_tree, tmp_path):
    split_path = tmp_path / "split.json"
    save_assignment(cholec_like_split, split_path)
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.json"
        code = main(
            ["audit", "--data", str(cholec_tree), "--split", str(split_path), "--out", str(out)]
        )
        assert code == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]

    app = create_app(cholec_like, cholec_like_split)
    with TestClient(app) as client:
        before = client.get("/api/viewmodel").json()
        response = client.post(
            "/api/split/reassign", json={"surgery_id": "video01", "set": "test"}
        )
        assert response.status_code == 200
        undone = client.post("/api/split/undo").json()
        undone.pop("changed")
        assert undone == before
    print("ACCEPTANCE PASS: CLI/service determinism (byte-identical audit, undo round-trip)")
