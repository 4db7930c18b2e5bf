"""
snortmine command line: ingest -> train -> mine -> export -> detect -> evade -> report.
Each stage reads and writes plain files under --out.
"""
import argparse
import glob
import io
import logging
import os
import sys

from snortmine.adaboost import AdaBoost, CategoryClassifier, StrongClassifier, detect_dataset, train_category
from snortmine.apriori import Apriori, write_rules, read_rules
from snortmine.config import PipelineConfig
from snortmine.dataset import (
    AttackCategory,
    Discretization,
    discretize,
    parse_kdd,
    split,
    write_kdd,
    write_transactions,
)
from snortmine.errors import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, CompileError, ConfigError, SnortmineError
from snortmine.evaluation import EvaluationReport, compare, evaluate, read_baselines
from snortmine.evasion import ablate_rules, run_evasion_campaign
from snortmine.signature import SignatureCompiler, Verdict, detect, export_snort, parse_snort, write_verdicts
from snortmine.subclass import Subclass

logger = logging.getLogger(__name__)

TRAIN_DATA = "train.data"
TEST_DATA = "test.data"
SUMMARY = "summary.tsv"
TRANSACTIONS = "transactions.txt"
STRONG_MODEL = "strong_model.json"
CATEGORY_MODEL = "category_model.json"
TRAINING_LOG = "training_log.tsv"
DISCRETIZATION = "discretization.json"
ITEMSETS = "itemsets.tsv"
RULES = "rules.tsv"
SNORT_RULES = "rules.rules"
EVASION_REPORT = "evasion_report.json"
COMPARISON = "comparison.tsv"
DETECTORS = ("classifier", "rules")


class Pipeline(Subclass):
    """
    Runs the stages for one PipelineConfig
        - config (PipelineConfig): validated before any stage writes output
    """

    def __init__(self, config, verbose=0):
        super().__init__(verbose=verbose)
        self.config = config

    def path(self, name):
        return os.path.join(self.config.out, name)

    def require(self, *names):
        missing = [name for name in names if not os.path.isfile(self.path(name))]
        if missing:
            raise ConfigError(f"missing stage output in {self.config.out}: {', '.join(missing)}")

    def prepare(self, *names, need_data=False):
        self.config.validate(need_data=need_data)
        self.require(*names)

    def load(self, name):
        return parse_kdd(self.path(name), taxonomy=self.config.taxonomy())

    def _mkdir(self):
        os.makedirs(self.config.out, exist_ok=True)

    def ingest(self):
        """
        Parses the KDD data, splits it, and writes both splits plus a per-category summary
        and the training transactions.
        """
        c = self.config
        self.prepare(need_data=True)
        taxonomy = c.taxonomy()
        data = parse_kdd(c.data_path, taxonomy=taxonomy, strict=c.strict)
        if c.test_path:
            train, test = data, parse_kdd(c.test_path, taxonomy=taxonomy, strict=c.strict)
        else:
            train, test = split(data, c.train_fraction, c.seed)
        summary = self._to_df(
            [
                {"category": category.value, "train": int(n_train), "test": int(n_test)}
                for category, n_train, n_test in zip(
                    AttackCategory, train.category_counts(), test.category_counts()
                )
            ]
        )
        summary["records"] = summary["train"] + summary["test"]
        summary = summary[["category", "records", "train", "test"]]
        db = discretize(train, c.bins, label_granularity=c.label_items, window=c.window)
        self._mkdir()
        write_kdd(train, self.path(TRAIN_DATA))
        write_kdd(test, self.path(TEST_DATA))
        with open(self.path(SUMMARY), "w", encoding="utf-8", newline="\n") as f:
            summary.to_csv(f, sep="\t", index=False, lineterminator="\n")
        write_transactions(db, self.path(TRANSACTIONS))
        self.vprint(f"Ingested {len(train)} training and {len(test)} test records")
        return summary

    def train(self):
        c = self.config
        self.prepare(TRAIN_DATA)
        train = self.load(TRAIN_DATA)
        booster = AdaBoost(rounds=c.rounds, weak_params=c.tree_params(), workers=c.workers, verbose=self.verbose)
        strong = booster.train(train)
        category = train_category(train.attacks_only(), c.category_params(), workers=c.workers)
        strong.save(self.path(STRONG_MODEL))
        category.save(self.path(CATEGORY_MODEL))
        booster.write_log(self.path(TRAINING_LOG))
        self.vprint(f"Trained {strong.T} boosting rounds")
        return booster.training_log

    def mine(self):
        """
        Mines label rules from the training records the ensemble flags as attacks,
        or from every training record when mine_all_records is set.
        """
        c = self.config
        self.prepare(TRAIN_DATA, *(() if c.mine_all_records else (STRONG_MODEL,)))
        train = self.load(TRAIN_DATA)
        if not c.mine_all_records and len(train):
            flags = StrongClassifier.load(self.path(STRONG_MODEL)).predict_columns(train.columns())
            train = train.subset(i for i, f in enumerate(flags) if f == 1)
        discretization = Discretization.fit(train, c.bins)
        db = discretize(train, discretization=discretization, label_granularity=c.label_items)
        miner = Apriori(c.mining_params(len(db)), workers=c.workers, verbose=self.verbose)
        freq = miner.mine(db)
        rules = miner.generate_rules(freq)
        discretization.save(self.path(DISCRETIZATION))
        freq.write(self.path(ITEMSETS))
        write_rules(rules, self.path(RULES))
        return freq, rules

    def export(self):
        """
        Compiles the rule dump to Snort syntax and checks the file parses back to the same ruleset.
        """
        c = self.config
        self.prepare(RULES, DISCRETIZATION)
        compiler = SignatureCompiler(
            Discretization.load(self.path(DISCRETIZATION)),
            base_sid=c.base_sid,
            taxonomy=c.taxonomy(),
            verbose=self.verbose,
        )
        rs = compiler.compile(read_rules(self.path(RULES)))
        text = export_snort(rs, io.StringIO())
        if parse_snort(io.StringIO(text)) != rs:
            raise CompileError("exported rules do not parse back to the compiled ruleset")
        with open(self.path(SNORT_RULES), "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        return rs

    def _report(self, name, truth, verdicts, source):
        write_verdicts(verdicts, self.path(f"verdicts_{name}.txt"))
        report = evaluate(truth, [v.category for v in verdicts], source)
        report.save(self.path(f"report_{name}.json"))
        return report

    def _detect_rules(self, rs, dataset, name, source):
        rs.validate(dataset.schema)
        return self._report(name, dataset.categories(), detect(rs, dataset), source)

    def detect(self, detector="both"):
        """
        Runs the classifier pipeline, the Snort ruleset, or both over the test split.
        """
        detectors = DETECTORS if detector == "both" else (detector,)
        needed = [TEST_DATA]
        if "classifier" in detectors:
            needed += [STRONG_MODEL, CATEGORY_MODEL]
        if "rules" in detectors:
            needed.append(SNORT_RULES)
        self.prepare(*needed)
        test = self.load(TEST_DATA)
        reports = {}
        if "classifier" in detectors:
            strong = StrongClassifier.load(self.path(STRONG_MODEL))
            category = CategoryClassifier.load(self.path(CATEGORY_MODEL))
            verdicts = [Verdict(c) for c in detect_dataset(strong, category, test)]
            reports["classifier"] = self._report("classifier", test.categories(), verdicts, "classifier")
        if "rules" in detectors:
            rs = parse_snort(self.path(SNORT_RULES), test.schema)
            reports["rules"] = self._detect_rules(rs, test, "rules", "ruleset")
        return reports

    def evade(self):
        """
        Mutates matched attack records against the ruleset and ablates a share of its
        rules, re-running detection after each.
        """
        c = self.config
        self.prepare(TEST_DATA, SNORT_RULES)
        test = self.load(TEST_DATA)
        rs = parse_snort(self.path(SNORT_RULES), test.schema)
        report = run_evasion_campaign(test, rs, c.mutation_budget(), workers=c.workers)
        report.save(self.path(EVASION_REPORT))
        self._detect_rules(rs, report.mutated_dataset(test), "evaded", "evaded records")
        self._detect_rules(ablate_rules(rs, c.ablation_fraction, c.seed), test, "ablated", "ablated ruleset")
        return report

    def report(self):
        c = self.config
        self.prepare()
        paths = sorted(glob.glob(self.path("report_*.json")))
        if not paths:
            raise ConfigError(f"no report_*.json files in {c.out}; run detect first")
        reports = [
            (os.path.basename(p)[len("report_"):-len(".json")], EvaluationReport.load(p)) for p in paths
        ]
        baselines = read_baselines(c.baselines_path) if c.baselines_path else None
        return compare(reports, self.path(COMPARISON), baselines)

    def run(self):
        self.config.validate(need_data=True)
        self.ingest()
        self.train()
        self.mine()
        self.export()
        self.detect()
        self.evade()
        return self.report()


def cmd_ingest(config, verbose=0):
    return Pipeline(config, verbose).ingest()


def cmd_train(config, verbose=0):
    return Pipeline(config, verbose).train()


def cmd_mine(config, verbose=0):
    return Pipeline(config, verbose).mine()


def cmd_export(config, verbose=0):
    return Pipeline(config, verbose).export()


def cmd_detect(config, detector="both", verbose=0):
    return Pipeline(config, verbose).detect(detector)


def cmd_evade(config, verbose=0):
    return Pipeline(config, verbose).evade()


def cmd_report(config, verbose=0):
    return Pipeline(config, verbose).report()


def cmd_run(config, verbose=0):
    return Pipeline(config, verbose).run()


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "mine": cmd_mine,
    "export": cmd_export,
    "evade": cmd_evade,
    "report": cmd_report,
    "run": cmd_run,
}


def _flag(key):
    return "--" + key.replace("_", "-")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [pipeline] section")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO")
    for key in PipelineConfig.keys():
        common.add_argument(_flag(key), dest=key, default=argparse.SUPPRESS, metavar=key.upper())

    parser = argparse.ArgumentParser(prog="snortmine", description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        commands.add_parser(name, parents=[common])
    detect_parser = commands.add_parser("detect", parents=[common])
    detect_parser.add_argument("--detector", choices=DETECTORS + ("both",), default="both")
    return parser


def _print_result(command, result):
    if command in ("ingest", "train", "report", "run"):
        print(result.to_string(index=False))
    elif command == "mine":
        freq, rules = result
        print(f"{len(freq)} frequent itemsets, {len(rules)} rules")
    elif command == "export":
        print(f"{len(result)} rules exported")
    elif command == "detect":
        for name, report in result.items():
            print(f"{name}: detection_rate={report.detection_rate:.6f} false_alarm_rate={report.false_alarm_rate:.6f}")
    elif command == "evade":
        print(f"evaded {result.evaded}/{result.attempted} (evasion_rate={result.evasion_rate:.6f})")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    overrides = {k: v for k, v in vars(args).items() if k in PipelineConfig.keys()}
    try:
        config = PipelineConfig.load(args.config, overrides)
        verbose = int(args.verbose)
        if args.command == "detect":
            result = cmd_detect(config, args.detector, verbose=verbose)
        else:
            result = COMMANDS[args.command](config, verbose=verbose)
    except SnortmineError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except ValueError as e:
        logger.error(str(e))
        return EXIT_RUNTIME
    _print_result(args.command, result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
