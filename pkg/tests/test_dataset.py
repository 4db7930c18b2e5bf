import io
import unittest

import numpy as np

from fixtures import dataset_from_lines, kdd_line, mixed_dataset, random_transactions, smurf_line
from snortmine.dataset import (
    AttackCategory,
    BinaryLabel,
    Discretization,
    FeatureSchema,
    Taxonomy,
    TransactionDb,
    discretize,
    map_label_to_category,
    parse_kdd,
    read_transactions,
    split,
    to_binary,
    write_kdd,
    write_transactions,
)
from snortmine.errors import ParseError, UnknownLabelError


class TestSchema(unittest.TestCase):
    def test_kdd99_layout(self):
        schema = FeatureSchema.kdd99()
        self.assertEqual(len(schema.features), 41)
        self.assertEqual(schema.index("protocol_type"), 1)
        self.assertEqual(schema.feature("land").kind, "binary")

    def test_fingerprint_ignores_vocabulary(self):
        schema = FeatureSchema.kdd99()
        grown = schema.with_vocabulary({"service": ["brand_new"]})
        self.assertIn("brand_new", grown.feature("service").vocabulary)
        self.assertEqual(schema.fingerprint(), grown.fingerprint())


class TestParse(unittest.TestCase):
    def test_smurf_line(self):
        data = dataset_from_lines([smurf_line()])
        record = data[0]
        self.assertEqual(record.label, "smurf")
        self.assertEqual(record.category, AttackCategory.DOS)
        self.assertEqual(record.values[1], "icmp")
        self.assertEqual(record.values[4], 1032)

    def test_empty_stream(self):
        self.assertEqual(len(parse_kdd(io.StringIO(""))), 0)

    def test_wrong_arity_reports_line(self):
        short = ",".join(kdd_line().split(",")[1:])
        with self.assertRaises(ParseError) as ctx:
            dataset_from_lines([kdd_line(), short])
        self.assertEqual(ctx.exception.line, 2)

    def test_non_numeric_and_negative_values(self):
        with self.assertRaises(ParseError):
            dataset_from_lines([kdd_line(src_bytes="abc")])
        with self.assertRaises(ParseError):
            dataset_from_lines([kdd_line(src_bytes=-1)])
        with self.assertRaises(ParseError):
            dataset_from_lines([kdd_line(land=2)])

    def test_unknown_service_registered_or_rejected(self):
        data = dataset_from_lines([kdd_line(service="brand_new")])
        self.assertIn("brand_new", data.schema.feature("service").vocabulary)
        with self.assertRaises(ParseError):
            dataset_from_lines([kdd_line(service="brand_new")], strict=True)

    def test_crlf_and_missing_period(self):
        text = kdd_line("smurf")[:-1] + "\r\n" + kdd_line() + "\r\n"
        data = parse_kdd(io.StringIO(text))
        self.assertEqual(data.labels(), ["smurf", "normal"])

    def test_reserialize_is_exact(self):
        lines = [kdd_line(same_srv_rate="0.50", src_bytes=181), smurf_line()]
        out = io.StringIO()
        write_kdd(dataset_from_lines(lines), out)
        self.assertEqual(out.getvalue(), "\n".join(lines) + "\n")


class TestLabels(unittest.TestCase):
    def test_map_label_to_category(self):
        self.assertEqual(map_label_to_category("smurf"), AttackCategory.DOS)
        self.assertEqual(map_label_to_category("normal"), AttackCategory.NORMAL)
        self.assertEqual(map_label_to_category("buffer_overflow"), AttackCategory.U2R)
        self.assertEqual(map_label_to_category("neptune"), AttackCategory.DOS)
        self.assertEqual(map_label_to_category("satan"), AttackCategory.PROBE)

    def test_unknown_label(self):
        with self.assertRaises(UnknownLabelError):
            map_label_to_category("not_an_attack")
        lenient = Taxonomy(strict=False, fallback=AttackCategory.R2L)
        self.assertEqual(lenient.map_label_to_category("not_an_attack"), AttackCategory.R2L)
        with self.assertRaises(ValueError):
            Taxonomy(strict=False, fallback=AttackCategory.NORMAL)

    def test_to_binary(self):
        data = dataset_from_lines([smurf_line(), kdd_line()])
        self.assertEqual(to_binary(data[0]), BinaryLabel.ATTACK)
        self.assertEqual(to_binary(data[1]), BinaryLabel.NORMAL)
        for record in mixed_dataset():
            self.assertEqual(to_binary(record) == 1, record.category is not AttackCategory.NORMAL)


class TestDiscretize(unittest.TestCase):
    def test_items(self):
        data = dataset_from_lines([smurf_line()])
        cuts = Discretization.fit(data, bins={"src_bytes": [0, 100, 1000]})
        db = discretize(data, discretization=cuts)
        transaction = db.transactions[0]
        self.assertIn("protocol_type=icmp", transaction)
        self.assertIn("src_bytes∈[1000,inf)", transaction)
        self.assertIn("label=smurf", transaction)
        self.assertIn("land=0", transaction)

    def test_one_transaction_per_record(self):
        data = mixed_dataset(2, 1, 1, 1)
        db = discretize(data)
        self.assertEqual(len(db), 5)
        for t, record in zip(db, data):
            self.assertEqual(len(t), 42)
            self.assertEqual(list(t), sorted(t))
            self.assertEqual([i for i in t if i.startswith("label=")], ["label=" + record.label])

    def test_constant_feature_single_bucket(self):
        data = dataset_from_lines([kdd_line(src_bytes=5)] * 4)
        cuts = Discretization.fit(data, bins=4)
        self.assertEqual(cuts.cuts["src_bytes"], (0.0, 5.0))
        self.assertEqual(cuts.cuts["duration"], (0.0,))

    def test_bucket_edges(self):
        cuts = Discretization({"src_bytes": (10.0, 100.0)})
        self.assertEqual(cuts.bucket("src_bytes", 5), (-np.inf, 10.0))
        self.assertEqual(cuts.bucket("src_bytes", 10), (10.0, 100.0))
        self.assertEqual(cuts.bucket("src_bytes", 100), (100.0, np.inf))
        with self.assertRaises(ValueError):
            Discretization({"src_bytes": (10.0, 10.0)})

    def test_cuts_roundtrip(self):
        cuts = Discretization.fit(mixed_dataset())
        out = io.StringIO()
        cuts.save(out)
        self.assertEqual(Discretization.load(io.StringIO(out.getvalue())), cuts)

    def test_category_granularity_and_window(self):
        data = mixed_dataset(2, 2, 0, 0)
        db = discretize(data, label_granularity="category")
        self.assertTrue(any("label=DoS" in t for t in db))
        windowed = discretize(data, window=2)
        self.assertEqual(len(windowed), 2)
        self.assertTrue(all(all(i.startswith("label=") for i in t) for t in windowed))


class TestSplit(unittest.TestCase):
    def test_stratified_halves(self):
        lines = [smurf_line()] * 10 + [kdd_line()] * 10
        train, test = split(dataset_from_lines(lines), 0.5, seed=3)
        self.assertEqual(train.category_counts()["DoS"], 5)
        self.assertEqual(train.category_counts()["Normal"], 5)
        self.assertEqual(test.category_counts()["DoS"], 5)
        self.assertEqual(test.category_counts()["Normal"], 5)

    def test_deterministic_disjoint_union(self):
        data = mixed_dataset()
        train, test = split(data, 0.7, seed=11)
        again = split(data, 0.7, seed=11)
        self.assertEqual((train, test), again)
        lines = sorted(r.line for r in train) + sorted(r.line for r in test)
        self.assertEqual(sorted(lines), sorted(r.line for r in data))
        self.assertFalse({r.line for r in train} & {r.line for r in test})
        for category, n in data.category_counts().items():
            self.assertLessEqual(abs(train.category_counts()[category] - 0.7 * n), 1)

    def test_single_record_goes_to_train(self):
        train, test = split(dataset_from_lines([kdd_line("buffer_overflow")] + [kdd_line()] * 4), 0.5, seed=0)
        self.assertEqual(train.category_counts()["U2R"], 1)
        self.assertEqual(test.category_counts()["U2R"], 0)

    def test_bad_fraction(self):
        with self.assertRaises(ValueError):
            split(mixed_dataset(), 1.0, seed=0)


class TestTransactions(unittest.TestCase):
    def test_separator(self):
        db = TransactionDb.from_itemsets([["b", "a"], ["c"]])
        out = io.StringIO()
        write_transactions(db, out)
        self.assertEqual(out.getvalue(), "a\nb\n###\nc\n")
        self.assertEqual(out.getvalue().splitlines().count("###"), 1)

    def test_empty(self):
        out = io.StringIO()
        write_transactions(TransactionDb(()), out)
        self.assertEqual(out.getvalue(), "")
        self.assertEqual(len(read_transactions(io.StringIO(""))), 0)

    def test_roundtrip_random(self):
        rng = np.random.RandomState(5)
        refused = 0
        for i in range(100):
            db = TransactionDb.from_itemsets(random_transactions(rng, n_transactions=1 + i % 8))
            out = io.StringIO()
            if any(not t for t in db):
                with self.assertRaises(ValueError):
                    write_transactions(db, out)
                self.assertEqual(out.getvalue(), "")
                refused += 1
                continue
            write_transactions(db, out)
            self.assertEqual(read_transactions(io.StringIO(out.getvalue())), db)
        self.assertTrue(0 < refused < 100)

    def test_empty_transaction_refused(self):
        for transactions in (((),), (("a",), ()), ((), ("a",))):
            with self.assertRaises(ValueError):
                write_transactions(TransactionDb(transactions), io.StringIO())

    def test_discretized_roundtrip(self):
        db = discretize(mixed_dataset())
        out = io.StringIO()
        write_transactions(db, out)
        self.assertEqual(read_transactions(io.StringIO(out.getvalue())), db)

    def test_repeated_item_and_stray_separator(self):
        with self.assertRaises(ParseError) as ctx:
            read_transactions(io.StringIO("a\nb\na\n"))
        self.assertEqual(ctx.exception.line, 3)
        self.assertEqual(read_transactions(io.StringIO("a\n###\n")).transactions, (("a",),))


if __name__ == "__main__":
    unittest.main()
