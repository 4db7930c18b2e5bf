"""
Evasion against a compiled ruleset: label-preserving record mutation and rule ablation.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from math import ceil, floor, isfinite
import json

import numpy as np

from snortmine.dataset import ATTACK_CATEGORIES, BINARY, CATEGORICAL, CONTINUOUS, format_value
from snortmine.signature import RuleSet, detect, match
from snortmine.subclass import Subclass, open_text

MAX_EXPANSIONS = 5000


@dataclass(frozen=True)
class MutationBudget:
    max_features_changed: int = 1
    numeric_step: float = 1.0
    categorical_swaps_allowed: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_features_changed < 1:
            raise ValueError("max_features_changed must be >= 1")
        if not 0 < self.numeric_step <= 1:
            raise ValueError("numeric_step must be in (0, 1]")

    def dominates(self, other):
        return (
            self.max_features_changed >= other.max_features_changed
            and self.numeric_step >= other.numeric_step
            and (self.categorical_swaps_allowed or not other.categorical_swaps_allowed)
        )


class ClassRanges(object):
    """
    Feasibility envelope per attack label: numeric min/max and the categorical
    values observed for that label.
    """

    def __init__(self, numeric, observed):
        self.numeric = numeric
        self.observed = observed

    @classmethod
    def from_dataset(cls, dataset):
        df = dataset.to_df()
        numeric_names = [f.name for f in dataset.schema.features if f.kind == CONTINUOUS]
        discrete_names = [f.name for f in dataset.schema.features if f.kind in (CATEGORICAL, BINARY)]
        numeric, observed = {}, {}
        if not len(df):
            return cls(numeric, observed)
        grouped = df.groupby("label", sort=True)
        lows, highs = grouped[numeric_names].min(), grouped[numeric_names].max()
        for label in lows.index:
            numeric[label] = {
                name: (float(lows.at[label, name]), float(highs.at[label, name])) for name in numeric_names
            }
            observed[label] = {}
        for name in discrete_names:
            for label, values in grouped[name].unique().items():
                observed[label][name] = tuple(sorted({format_value(v) for v in values}))
        return cls(numeric, observed)

    def range(self, label, feature):
        return self.numeric.get(label, {}).get(feature)

    def values(self, label, feature):
        return self.observed.get(label, {}).get(feature, ())


@dataclass(frozen=True)
class EvasionResult:
    original: object
    mutated: object
    originally_matched_sid: int
    evaded: bool
    features_changed: int
    applicable: bool = True


def _exit_values(p, resolution):
    # nearest values on either side of [lo, hi) at the feature's resolution
    below = above = None
    if isfinite(p.lo):
        below = (ceil(round(p.lo / resolution, 9)) - 1) * resolution
        below = round(below, 2) if resolution < 1 else int(below)
    if isfinite(p.hi):
        above = ceil(round(p.hi / resolution, 9)) * resolution
        above = round(above, 2) if resolution < 1 else int(above)
    return below, above


def _numeric_moves(p, feature, value, envelope, budget):
    if envelope is None:
        return []
    low, high = envelope
    span = high - low
    if span <= 0:
        return []
    limit = budget.numeric_step * span
    moves = []
    for direction, target in enumerate(_exit_values(p, feature.resolution)):
        if target is None or target < 0 or not low <= target <= high:
            continue
        delta = abs(target - value)
        if delta == 0 or delta > limit + 1e-12:
            continue
        moves.append((delta / span, p.index, direction, target))
    return moves


def _changed(original, values):
    return {i for i, (a, b) in enumerate(zip(original, values)) if a != b}


def _swap_orders(record, class_ranges, schema, rng):
    # drawn once per record for every discrete feature, so the order never depends on the budget
    orders = {}
    for i, f in enumerate(schema.features):
        if f.kind == CONTINUOUS:
            continue
        observed = class_ranges.values(record.label, f.name)
        orders[i] = [observed[j] for j in rng.permutation(len(observed))]
    return orders


def _moves(current, rule, changed, budget, class_ranges, schema, orders, label):
    """
    Candidate (feature index, new value) moves that falsify one predicate of rule:
    numeric moves cheapest first, then categorical swaps.
    """
    numeric, swaps = [], []
    for p in rule.predicates:
        if p.index not in changed and len(changed) >= budget.max_features_changed:
            continue
        feature = schema.features[p.index]
        if p.op == "in_range":
            envelope = class_ranges.range(label, feature.name)
            numeric.extend(_numeric_moves(p, feature, current.values[p.index], envelope, budget))
        elif budget.categorical_swaps_allowed:
            for value in orders.get(p.index, ()):
                if value != p.value:
                    swaps.append((p.index, int(value) if feature.kind == BINARY else value))
    numeric.sort(key=lambda m: m[:3])
    return [(index, target) for _, index, _, target in numeric] + swaps


def evade_record(record, rs, budget, class_ranges, schema, record_index=0):
    """
    Mutates an attack record until no rule matches
        - record (ConnectionRecord): a record matched by some rule
        - rs (RuleSet): the signatures to evade
        - budget (MutationBudget): how far the mutation may go
        - class_ranges (ClassRanges): per-label feasible values
        - schema (FeatureSchema): feature kinds and resolutions
        - record_index (int): mixed into the seed so each record draws independently
    Each step falsifies one predicate of the currently matching rule. Numeric values move to
    the nearest value outside the violated interval, cheapest move first; categorical values
    swap to another value observed for the record's label. Dead ends backtrack, up to
    2 * max_features_changed steps deep.
    """
    first = match(rs, record)
    if not first.matched:
        return EvasionResult(record, record, None, False, 0, applicable=False)
    rng = np.random.RandomState((budget.seed ^ record_index) & 0xFFFFFFFF)
    orders = _swap_orders(record, class_ranges, schema, rng)
    depth_limit = 2 * budget.max_features_changed
    reached = {record.values: 0}
    expansions = 0

    def search(current, depth):
        nonlocal expansions
        verdict = match(rs, current)
        if not verdict.matched:
            return current
        if depth >= depth_limit or expansions >= MAX_EXPANSIONS:
            return None
        expansions += 1
        changed = _changed(record.values, current.values)
        for index, target in _moves(current, verdict.rule, changed, budget, class_ranges, schema, orders, record.label):
            candidate = current.with_values({index: target})
            if reached.get(candidate.values, depth_limit + 1) <= depth + 1:
                continue
            reached[candidate.values] = depth + 1
            found = search(candidate, depth + 1)
            if found is not None:
                return found
        return None

    mutated = search(record, 0)
    if mutated is None:
        return EvasionResult(record, record, first.sid, False, 0)
    return EvasionResult(record, mutated, first.sid, True, len(_changed(record.values, mutated.values)))


def ablate_rules(rs, fraction, seed):
    """
    Removes floor(fraction * |rules|) rules chosen uniformly with the given seed.
    """
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be in [0, 1]")
    n = len(rs.rules)
    k = int(floor(fraction * n))
    removed = set(np.random.RandomState(seed).choice(n, k, replace=False).tolist()) if k else set()
    kept = tuple(r for i, r in enumerate(rs.rules) if i not in removed)
    return RuleSet(kept, rs.fingerprint, rs.discretization)


@dataclass
class EvasionReport:
    attempted: int
    evaded: int
    not_applicable: int
    per_category: dict
    budget: MutationBudget
    details: list = field(default_factory=list)
    results: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def evasion_rate(self):
        return self.evaded / self.attempted if self.attempted else 0.0

    def mutated_dataset(self, dataset):
        """
        The dataset with every attempted record replaced by its mutated form.
        """
        records = list(dataset.records)
        for i, result in self.results.items():
            records[i] = result.mutated
        return dataset.with_records(records)

    def to_dict(self):
        return {
            "attempted": self.attempted,
            "evaded": self.evaded,
            "not_applicable": self.not_applicable,
            "evasion_rate": self.evasion_rate,
            "per_category": self.per_category,
            "budget": asdict(self.budget),
            "details": [{"index": i, "sid": sid, "features_changed": n} for i, sid, n in self.details],
        }

    def save(self, sink):
        with open_text(sink, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")


def _evade_chunk(records, indices, rs, budget, class_ranges, schema):
    return [evade_record(r, rs, budget, class_ranges, schema, i) for r, i in zip(records, indices)]


class EvasionCampaign(Subclass):
    """
    Runs evade_record over every matched attack record of a dataset
        - rs (RuleSet): the signatures under attack
        - budget (MutationBudget): mutation limits and seed
        - class_ranges (ClassRanges): feasibility envelope, computed from the data when omitted
        - workers (int): processes; results are merged in record order
    """

    def __init__(self, rs, budget, class_ranges=None, workers=1, verbose=0):
        super().__init__(verbose=verbose)
        self.rs = rs
        self.budget = budget
        self.class_ranges = class_ranges
        self.workers = workers

    def run(self, test):
        ranges = self.class_ranges or ClassRanges.from_dataset(test)
        verdicts = detect(self.rs, test)
        attacks = [i for i, r in enumerate(test) if r.category.is_attack]
        indices = [i for i in attacks if verdicts[i].matched]
        records = [test[i] for i in indices]

        if self.workers > 1 and len(indices) >= 2 * self.workers:
            size = ceil(len(indices) / self.workers)
            spans = [(s, s + size) for s in range(0, len(indices), size)]
            with ProcessPoolExecutor(max_workers=self.workers) as executor:
                futures = [
                    executor.submit(
                        _evade_chunk, records[a:b], indices[a:b], self.rs, self.budget, ranges, test.schema
                    )
                    for a, b in spans
                ]
                outcomes = [result for future in futures for result in future.result()]
        else:
            outcomes = _evade_chunk(records, indices, self.rs, self.budget, ranges, test.schema)

        per_category = {c.value: {"attempted": 0, "evaded": 0} for c in ATTACK_CATEGORIES}
        details, results = [], {}
        for i, result in zip(indices, outcomes):
            stats = per_category[test[i].category.value]
            stats["attempted"] += 1
            results[i] = result
            if result.evaded:
                stats["evaded"] += 1
                details.append((i, result.originally_matched_sid, result.features_changed))
        report = EvasionReport(
            attempted=len(indices),
            evaded=len(details),
            not_applicable=len(attacks) - len(indices),
            per_category=per_category,
            budget=self.budget,
            details=details,
            results=results,
        )
        self.vprint(f"Evasion: {report.evaded}/{report.attempted} matched attacks evaded ({report.evasion_rate:.4f})")
        return report


def run_evasion_campaign(test, rs, budget, class_ranges=None, workers=1):
    return EvasionCampaign(rs, budget, class_ranges=class_ranges, workers=workers).run(test)
