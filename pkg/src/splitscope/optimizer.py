"""Split search: greedy swap-based local search over fixed set sizes,
minimizing unrepresented cases plus optional distribution-skew terms.

The notion of an "optimal" split is our construction: the paper-derived
quantities only define what counts as unrepresented; the objective combining
them is defined here and documented as such.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import splits
from .coverage import EntityCategory, _surgery_entities, entity_universe, unrepresented
from .model import Dataset, SetLabel, SplitAssignment
from .stats import compute_phase_stats, compute_set_sizes

_SET_ORDER = (SetLabel.TRAIN, SetLabel.VAL, SetLabel.TEST)


def _full_weights(value) -> dict[SetLabel, float]:
    if isinstance(value, dict):
        return {label: float(value.get(label, value.get(label.value, 0.0))) for label in _SET_ORDER}
    return {label: float(value) for label in _SET_ORDER}


@dataclass(frozen=True)
class Objective:
    """Weighted sum of per-category per-set unrepresented counts, plus a
    phase-distribution divergence term and a mean-frame disparity term."""

    category_weights: dict[EntityCategory, dict[SetLabel, float]] = field(
        default_factory=lambda: {c: _full_weights(1.0) for c in EntityCategory}
    )
    divergence_weight: float = 0.0
    disparity_weight: float = 0.0

    def __post_init__(self):
        weights = [w for per_set in self.category_weights.values() for w in per_set.values()]
        weights += [self.divergence_weight, self.disparity_weight]
        if any(w < 0 for w in weights):
            raise ValueError("objective weights must be non-negative")
        if all(w == 0 for w in weights):
            raise ValueError("at least one objective weight must be positive")


def objective_from_json_dict(payload: dict) -> Objective:
    categories = {c: _full_weights(1.0) for c in EntityCategory}
    for key, value in payload.get("category_weights", {}).items():
        category = EntityCategory(key)
        categories[category] = _full_weights(value)
    return Objective(
        category_weights=categories,
        divergence_weight=float(payload.get("divergence_weight", 0.0)),
        disparity_weight=float(payload.get("disparity_weight", 0.0)),
    )


@dataclass(frozen=True)
class SearchConfig:
    sizes: dict[SetLabel, int]
    seed: int = 0
    budget: int = 5000
    restarts: int = 1
    swap_sample_size: int = 64

    def __post_init__(self):
        sizes = {
            label: int(n) for label, n in self.sizes.items() if not (label is SetLabel.VAL and n == 0)
        }
        object.__setattr__(self, "sizes", sizes)
        if any(n < 0 for n in sizes.values()):
            raise ValueError("set sizes must be non-negative")
        for label in (SetLabel.TRAIN, SetLabel.TEST):
            if sizes.get(label, 0) < 1:
                raise ValueError(f"{label.value} size must be >= 1")
        if self.budget < 1:
            raise ValueError("evaluation budget must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.swap_sample_size < 1:
            raise ValueError("swap_sample_size must be >= 1")

    @property
    def has_validation(self) -> bool:
        return SetLabel.VAL in self.sizes

    @property
    def active_sets(self) -> tuple[SetLabel, ...]:
        return tuple(label for label in _SET_ORDER if label in self.sizes)


@dataclass
class OptimizeResult:
    assignment: SplitAssignment
    score: float
    trace: list[tuple[int, float]]
    evaluations: int
    restarts_completed: int


def score(dataset: Dataset, assignment: SplitAssignment, objective: Objective) -> float:
    """Reference scorer; recomputes everything from scratch."""
    violations = splits.validate(assignment, dataset)
    if violations:
        raise ValueError("invalid assignment: " + "; ".join(violations))
    sets = tuple(s for s in assignment.declared_sets() if assignment.size_of(s) > 0)

    total = 0.0
    for category in EntityCategory:
        missing = unrepresented(dataset, assignment, category)
        for label in sets:
            total += objective.category_weights[category][label] * len(missing[label])

    if objective.divergence_weight > 0:
        phase_stats = compute_phase_stats(dataset, assignment)
        total += objective.divergence_weight * _phase_divergence(
            dataset, sets, {p: dict(by_set) for p, by_set in phase_stats.frame_counts.items()}
        )
    if objective.disparity_weight > 0:
        size_stats = compute_set_sizes(dataset, assignment)
        means = [size_stats.per_set[label].mean_frames for label in sets]
        total += objective.disparity_weight * _mean_disparity(dataset, means)
    return total


def _phase_divergence(dataset, sets, frame_counts) -> float:
    """Mean over sets of total-variation distance between the set's phase
    distribution and the whole-dataset distribution."""
    dataset_totals = Counter()
    for surgery in dataset.surgeries:
        for frame in surgery.frames:
            dataset_totals[frame.phase.index] += 1
    overall = dataset.total_frames
    distances = []
    for label in sets:
        set_total = sum(frame_counts[p.index][label] for p in dataset.phases)
        tv = 0.0
        for p in dataset.phases:
            share = frame_counts[p.index][label] / set_total if set_total else 0.0
            tv += abs(share - dataset_totals[p.index] / overall)
        distances.append(0.5 * tv)
    return sum(distances) / len(distances)


def _mean_disparity(dataset, means) -> float:
    overall = dataset.total_frames / len(dataset.surgeries)
    return (max(means) - min(means)) / overall


class _SwapState:
    """Per-set entity tallies with O(signature) swap updates.

    Keeps, per set and category, an occurrence counter over entities and the
    count of universe entities currently absent, so candidate swaps re-score
    in time proportional to the two surgeries' entity signatures.
    """

    def __init__(self, dataset: Dataset, config: SearchConfig, objective: Objective):
        self.dataset = dataset
        self.objective = objective
        self.sets = config.active_sets
        self.universe_sizes = {
            category: len(entity_universe(dataset, category)) for category in EntityCategory
        }
        self.signatures = {
            surgery.id: {
                category: Counter(_surgery_entities(surgery, category))
                for category in EntityCategory
            }
            for surgery in dataset.surgeries
        }
        self.phase_signatures = {
            surgery.id: Counter(f.phase.index for f in surgery.frames)
            for surgery in dataset.surgeries
        }
        self.frame_counts = {s.id: s.frame_count for s in dataset.surgeries}

        dataset_totals = Counter()
        for counter in self.phase_signatures.values():
            dataset_totals.update(counter)
        self.dataset_phase_totals = dataset_totals
        self.dataset_total_frames = dataset.total_frames
        self.overall_mean = self.dataset_total_frames / len(dataset.surgeries)

        self.membership: dict[str, SetLabel] = {}
        self.entity_counts = {
            label: {category: Counter() for category in EntityCategory} for label in self.sets
        }
        self.missing = {
            label: dict(self.universe_sizes) for label in self.sets
        }
        self.set_phase_counts = {label: Counter() for label in self.sets}
        self.set_frames = {label: 0 for label in self.sets}
        self.set_surgeries = {label: 0 for label in self.sets}

    def load(self, assignment: SplitAssignment) -> None:
        for label in self.sets:
            for category in EntityCategory:
                self.entity_counts[label][category].clear()
            self.missing[label] = dict(self.universe_sizes)
            self.set_phase_counts[label].clear()
            self.set_frames[label] = 0
            self.set_surgeries[label] = 0
        self.membership = {}
        for surgery_id, label in assignment.assignments.items():
            self._add(surgery_id, label)

    def _add(self, surgery_id: str, label: SetLabel) -> None:
        self.membership[surgery_id] = label
        for category in EntityCategory:
            counts = self.entity_counts[label][category]
            for entity, n in self.signatures[surgery_id][category].items():
                if counts[entity] == 0:
                    self.missing[label][category] -= 1
                counts[entity] += n
        self.set_phase_counts[label].update(self.phase_signatures[surgery_id])
        self.set_frames[label] += self.frame_counts[surgery_id]
        self.set_surgeries[label] += 1

    def _remove(self, surgery_id: str) -> None:
        label = self.membership.pop(surgery_id)
        for category in EntityCategory:
            counts = self.entity_counts[label][category]
            for entity, n in self.signatures[surgery_id][category].items():
                counts[entity] -= n
                if counts[entity] == 0:
                    del counts[entity]
                    self.missing[label][category] += 1
        self.set_phase_counts[label].subtract(self.phase_signatures[surgery_id])
        self.set_frames[label] -= self.frame_counts[surgery_id]
        self.set_surgeries[label] -= 1

    def swap(self, id_a: str, id_b: str) -> None:
        label_a, label_b = self.membership[id_a], self.membership[id_b]
        self._remove(id_a)
        self._remove(id_b)
        self._add(id_a, label_b)
        self._add(id_b, label_a)

    def score(self) -> float:
        objective = self.objective
        total = 0.0
        for category in EntityCategory:
            for label in self.sets:
                total += (
                    objective.category_weights[category][label] * self.missing[label][category]
                )
        if objective.divergence_weight > 0:
            distances = []
            for label in self.sets:
                set_total = self.set_frames[label]
                tv = 0.0
                for p in self.dataset.phases:
                    share = self.set_phase_counts[label][p.index] / set_total if set_total else 0.0
                    tv += abs(share - self.dataset_phase_totals[p.index] / self.dataset_total_frames)
                distances.append(0.5 * tv)
            total += objective.divergence_weight * (sum(distances) / len(distances))
        if objective.disparity_weight > 0:
            means = [self.set_frames[l] / self.set_surgeries[l] for l in self.sets]
            total += objective.disparity_weight * ((max(means) - min(means)) / self.overall_mean)
        return total

    def to_assignment(self, has_validation: bool) -> SplitAssignment:
        ordered = {i: self.membership[i] for i in sorted(self.membership)}
        return SplitAssignment(ordered, has_validation=has_validation)


def _random_assignment(dataset: Dataset, config: SearchConfig, rng: random.Random) -> SplitAssignment:
    ids = sorted(dataset.surgery_ids)
    rng.shuffle(ids)
    assignments: dict[str, SetLabel] = {}
    cursor = 0
    for label in config.active_sets:
        for surgery_id in ids[cursor : cursor + config.sizes[label]]:
            assignments[surgery_id] = label
        cursor += config.sizes[label]
    return SplitAssignment(
        {i: assignments[i] for i in sorted(assignments)}, has_validation=config.has_validation
    )


def _cross_set_pairs(state: _SwapState) -> list[tuple[str, str]]:
    by_set = {label: sorted(i for i, l in state.membership.items() if l is label) for label in state.sets}
    pairs = []
    for i, label_a in enumerate(state.sets):
        for label_b in state.sets[i + 1 :]:
            for id_a in by_set[label_a]:
                for id_b in by_set[label_b]:
                    pairs.append((id_a, id_b))
    return pairs


def optimize(
    dataset: Dataset,
    config: SearchConfig,
    objective: Optional[Objective] = None,
    initial: Optional[SplitAssignment] = None,
    _observer=None,
) -> OptimizeResult:
    """Steepest-descent swap search with restarts.

    Each step samples up to ``swap_sample_size`` cross-set swaps, commits the
    best strictly-improving one (ties broken by lexicographic id pair) and
    stops the restart at a sampled local minimum. Deterministic for a fixed
    seed; set sizes are preserved by construction.
    """
    objective = objective or Objective()
    if sum(config.sizes.values()) != len(dataset.surgeries):
        raise ValueError(
            f"set sizes sum to {sum(config.sizes.values())} "
            f"but the dataset has {len(dataset.surgeries)} surgeries"
        )
    if initial is not None:
        if initial.has_validation != config.has_validation:
            raise ValueError("initial assignment disagrees with configured sets")
        for label in config.active_sets:
            if initial.size_of(label) != config.sizes[label]:
                raise ValueError(
                    f"initial assignment has {initial.size_of(label)} {label.value} surgeries, "
                    f"expected {config.sizes[label]}"
                )
        violations = splits.validate(initial, dataset)
        if violations:
            raise ValueError("invalid initial assignment: " + "; ".join(violations))

    rng = random.Random(config.seed)
    state = _SwapState(dataset, config, objective)

    evaluations = 0
    trace: list[tuple[int, float]] = []
    best_assignment: Optional[SplitAssignment] = None
    best_score: Optional[float] = None
    restarts_completed = 0

    for restart in range(config.restarts):
        if evaluations >= config.budget:
            break
        if restart == 0 and initial is not None:
            start = initial
        else:
            start = _random_assignment(dataset, config, rng)
        state.load(start)
        if _observer is not None:
            _observer(dict(state.membership))

        current = state.score()
        evaluations += 1
        if best_score is None or current < best_score:
            best_score = current
            best_assignment = state.to_assignment(config.has_validation)
            trace.append((evaluations, current))

        while evaluations < config.budget:
            pairs = _cross_set_pairs(state)
            if len(pairs) > config.swap_sample_size:
                pairs = sorted(rng.sample(pairs, config.swap_sample_size))
            best_pair = None
            best_pair_score = current
            for pair in pairs:
                if evaluations >= config.budget:
                    break
                state.swap(*pair)
                candidate = state.score()
                evaluations += 1
                state.swap(*pair)  # revert
                if candidate < best_pair_score or (
                    candidate == best_pair_score
                    and best_pair is not None
                    and pair < best_pair
                ):
                    best_pair = pair
                    best_pair_score = candidate
            if best_pair is None:
                break  # local minimum under the sampled neighborhood
            state.swap(*best_pair)
            if _observer is not None:
                _observer(dict(state.membership))
            current = best_pair_score
            if current < best_score:
                best_score = current
                best_assignment = state.to_assignment(config.has_validation)
                trace.append((evaluations, current))
        restarts_completed = restart + 1
        if best_score == 0:
            break

    assert best_assignment is not None and best_score is not None
    return OptimizeResult(
        assignment=best_assignment,
        score=best_score,
        trace=trace,
        evaluations=evaluations,
        restarts_completed=restarts_completed,
    )
