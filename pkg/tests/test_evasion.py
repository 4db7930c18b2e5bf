import io
import json
import unittest

from fixtures import dataset_from_lines, kdd_line, mixed_dataset, smurf_line
from snortmine.apriori import MiningParams, apriori, generate_rules
from snortmine.dataset import CONTINUOUS, AttackCategory, Discretization, FeatureSchema, discretize
from snortmine.evaluation import evaluate
from snortmine.evasion import (
    ClassRanges,
    EvasionCampaign,
    MutationBudget,
    ablate_rules,
    evade_record,
    run_evasion_campaign,
)
from snortmine.signature import BASE_SID, Predicate, RuleSet, SignatureRule, compile_rules, detect, match

SCHEMA = FeatureSchema.kdd99()
PROTOCOL = Predicate("protocol_type", 1, "equals", value="icmp")
SERVICE = Predicate("service", 2, "equals", value="ecr_i")


def _bytes(lo, hi):
    return Predicate("src_bytes", 4, "in_range", lo=lo, hi=hi)


def _signature(sid, predicates, confidence):
    return SignatureRule(sid, tuple(predicates), AttackCategory.DOS, 0.1, confidence)


LARGE_ICMP = _signature(BASE_SID, [PROTOCOL, _bytes(1000, float("inf"))], 0.98)
MEDIUM_ECR = _signature(BASE_SID + 1, [SERVICE, _bytes(500, 1000)], 0.9)


def _smurfs():
    return dataset_from_lines(
        [smurf_line(520), smurf_line(1032), smurf_line(1480, service="eco_i")]
    )


def _mined_ruleset(data, max_size=2):
    cuts = Discretization.fit(data)
    params = MiningParams(min_sup=3, min_conf=0.9, max_size=max_size)
    rules = generate_rules(apriori(discretize(data, discretization=cuts), params), params)
    return compile_rules(rules, cuts)


class TestBudget(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ValueError):
            MutationBudget(max_features_changed=0)
        with self.assertRaises(ValueError):
            MutationBudget(numeric_step=0)
        with self.assertRaises(ValueError):
            MutationBudget(numeric_step=1.5)

    def test_dominates(self):
        small = MutationBudget(1, 0.5, False)
        self.assertTrue(MutationBudget(2, 1.0, True).dominates(small))
        self.assertFalse(small.dominates(MutationBudget(2, 0.5, False)))


class TestClassRanges(unittest.TestCase):
    def test_per_label_envelope(self):
        ranges = ClassRanges.from_dataset(_smurfs())
        self.assertEqual(ranges.range("smurf", "src_bytes"), (520.0, 1480.0))
        self.assertEqual(ranges.values("smurf", "service"), ("eco_i", "ecr_i"))
        self.assertIsNone(ranges.range("neptune", "src_bytes"))
        self.assertEqual(ranges.values("neptune", "service"), ())


class TestEvadeRecord(unittest.TestCase):
    def test_step_just_below_range(self):
        data = _smurfs()
        rs = RuleSet((LARGE_ICMP,))
        result = evade_record(data[1], rs, MutationBudget(), ClassRanges.from_dataset(data), SCHEMA)
        self.assertTrue(result.evaded)
        self.assertEqual(result.originally_matched_sid, BASE_SID)
        self.assertEqual(result.features_changed, 1)
        self.assertEqual(result.mutated.values[4], 999)
        self.assertFalse(match(rs, result.mutated).matched)
        self.assertEqual(result.mutated.label, "smurf")

    def test_no_feasible_move(self):
        data = dataset_from_lines([smurf_line()])
        rs = RuleSet((LARGE_ICMP,))
        result = evade_record(data[0], rs, MutationBudget(3), ClassRanges.from_dataset(data), SCHEMA)
        self.assertFalse(result.evaded)
        self.assertEqual(result.mutated, data[0])
        self.assertEqual(result.features_changed, 0)

    def test_unmatched_record_not_applicable(self):
        data = dataset_from_lines([kdd_line("neptune")])
        result = evade_record(data[0], RuleSet((LARGE_ICMP,)), MutationBudget(), ClassRanges.from_dataset(data), SCHEMA)
        self.assertFalse(result.applicable)
        self.assertIsNone(result.originally_matched_sid)

    def test_second_rule_needs_second_feature(self):
        data = _smurfs()
        rs = RuleSet((LARGE_ICMP, MEDIUM_ECR))
        ranges = ClassRanges.from_dataset(data)
        one = evade_record(data[1], rs, MutationBudget(1), ranges, SCHEMA)
        self.assertFalse(one.evaded)
        two = evade_record(data[1], rs, MutationBudget(2), ranges, SCHEMA)
        self.assertTrue(two.evaded)
        self.assertEqual(two.features_changed, 2)
        self.assertEqual(two.mutated.values[2], "eco_i")
        self.assertEqual(two.mutated.values[4], 999)

    def test_swaps_can_be_disabled(self):
        data = _smurfs()
        rs = RuleSet((LARGE_ICMP, MEDIUM_ECR))
        result = evade_record(data[1], rs, MutationBudget(2, categorical_swaps_allowed=False),
                              ClassRanges.from_dataset(data), SCHEMA)
        self.assertFalse(result.evaded)

    def test_numeric_step_limits_distance(self):
        data = _smurfs()
        rs = RuleSet((LARGE_ICMP,))
        ranges = ClassRanges.from_dataset(data)
        # 1032 -> 999 moves 33 of a 960 span
        self.assertFalse(evade_record(data[1], rs, MutationBudget(numeric_step=0.03), ranges, SCHEMA).evaded)
        self.assertTrue(evade_record(data[1], rs, MutationBudget(numeric_step=0.04), ranges, SCHEMA).evaded)


class TestAblation(unittest.TestCase):
    def setUp(self):
        self.rs = RuleSet(tuple(_signature(BASE_SID + i, [PROTOCOL], 0.5 + i / 100) for i in range(10)))

    def test_fractions(self):
        self.assertEqual(len(ablate_rules(self.rs, 0.0, seed=1)), 10)
        self.assertEqual(len(ablate_rules(self.rs, 0.5, seed=1)), 5)
        self.assertEqual(len(ablate_rules(self.rs, 0.55, seed=1)), 5)
        self.assertEqual(len(ablate_rules(self.rs, 1.0, seed=1)), 0)

    def test_subset_and_deterministic(self):
        kept = ablate_rules(self.rs, 0.3, seed=4)
        self.assertTrue(set(kept.rules) <= set(self.rs.rules))
        self.assertEqual(kept, ablate_rules(self.rs, 0.3, seed=4))

    def test_everything_removed_detects_nothing(self):
        data = mixed_dataset(seed=3)
        verdicts = detect(ablate_rules(self.rs, 1.0, seed=0), data)
        report = evaluate(data.categories(), [v.category for v in verdicts])
        self.assertEqual(report.detection_rate, 0.0)

    def test_ablation_never_raises_detection(self):
        data = mixed_dataset(seed=4)
        rs = _mined_ruleset(data)

        def rate(ruleset):
            return evaluate(data.categories(), [v.category for v in detect(ruleset, data)]).detection_rate

        for seed in range(3):
            self.assertLessEqual(rate(ablate_rules(rs, 0.5, seed)), rate(rs))

    def test_bad_fraction(self):
        with self.assertRaises(ValueError):
            ablate_rules(self.rs, 1.5, seed=0)


class TestCampaign(unittest.TestCase):
    def test_empty_ruleset(self):
        data = mixed_dataset()
        report = run_evasion_campaign(data, RuleSet(()), MutationBudget())
        self.assertEqual(report.attempted, 0)
        self.assertEqual(report.evasion_rate, 0.0)
        self.assertEqual(report.not_applicable, len(data.attacks_only()))

    def test_single_record_fully_evaded(self):
        smurfs = _smurfs()
        campaign = EvasionCampaign(RuleSet((LARGE_ICMP,)), MutationBudget(), ClassRanges.from_dataset(smurfs))
        report = campaign.run(smurfs.subset([1]))
        self.assertEqual((report.attempted, report.evaded), (1, 1))
        self.assertEqual(report.evasion_rate, 1.0)
        self.assertEqual(report.details, [(0, BASE_SID, 1)])

    def test_counts_and_labels(self):
        data = mixed_dataset(seed=5)
        rs = _mined_ruleset(data)
        report = run_evasion_campaign(data, rs, MutationBudget(2))
        ranges = ClassRanges.from_dataset(data)
        self.assertEqual(report.attempted, sum(s["attempted"] for s in report.per_category.values()))
        self.assertEqual(report.evaded, sum(s["evaded"] for s in report.per_category.values()))
        self.assertEqual(report.attempted + report.not_applicable, len(data.attacks_only()))
        for i, result in report.results.items():
            self.assertEqual(result.mutated.label, data[i].label)
            self.assertEqual(result.mutated.category, data[i].category)
            if not result.evaded:
                continue
            self.assertFalse(match(rs, result.mutated).matched)
            for f in data.schema.features:
                value = result.mutated.values[data.schema.index(f.name)]
                envelope = ranges.range(data[i].label, f.name)
                if envelope is not None and f.kind == CONTINUOUS:
                    self.assertTrue(envelope[0] <= value <= envelope[1])

    def test_monotone_in_budget(self):
        for seed in range(4):
            data = mixed_dataset(seed=seed)
            rs = _mined_ruleset(data)
            ranges = ClassRanges.from_dataset(data)
            budgets = [
                MutationBudget(1, 0.5, False, seed),
                MutationBudget(1, 1.0, True, seed),
                MutationBudget(2, 1.0, True, seed),
            ]
            evaded = [
                {i for i, r in EvasionCampaign(rs, b, ranges).run(data).results.items() if r.evaded}
                for b in budgets
            ]
            self.assertTrue(evaded[0] <= evaded[1] <= evaded[2])

    def test_seeded_and_parallel_runs_agree(self):
        data = mixed_dataset(seed=2)
        rs = _mined_ruleset(data)
        budget = MutationBudget(2, seed=7)
        first = run_evasion_campaign(data, rs, budget)
        self.assertEqual(run_evasion_campaign(data, rs, budget), first)
        self.assertEqual(run_evasion_campaign(data, rs, budget, workers=2), first)

    def test_report_serializes(self):
        data = mixed_dataset(seed=1)
        report = run_evasion_campaign(data, _mined_ruleset(data), MutationBudget(2))
        out = io.StringIO()
        report.save(out)
        saved = json.loads(out.getvalue())
        self.assertEqual(saved["attempted"], report.attempted)
        self.assertEqual(saved["budget"]["max_features_changed"], 2)
        self.assertEqual(set(saved["per_category"]), {"DoS", "Probe", "R2L", "U2R"})
        mutated = report.mutated_dataset(data)
        self.assertEqual(len(mutated), len(data))
        for i, record in enumerate(data):
            if i not in report.results:
                self.assertIs(mutated[i], record)


if __name__ == "__main__":
    unittest.main()
