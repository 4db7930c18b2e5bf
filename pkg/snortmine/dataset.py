"""
KDD Cup 1999 ingestion: feature schema, label taxonomy, record parsing,
stratified splitting, discretization into itemset transactions and the
"###"-separated transaction file format.
"""
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from functools import cached_property, lru_cache
from math import floor, inf, isfinite
import hashlib
import json
import os
import re

import numpy as np
import pandas as pd

from snortmine.errors import ParseError, UnknownLabelError
from snortmine.subclass import Subclass, open_text

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
BINARY = "binary"

TRANSACTION_SEPARATOR = "###"
LABEL_PREFIX = "label="
ELEMENT_OF = "∈"

TAXONOMY_PATH = os.path.join(os.path.dirname(__file__), "data", "kdd_taxonomy.tsv")

PROTOCOLS = ("icmp", "tcp", "udp")

FLAGS = ("OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH")

SERVICES = (
    "IRC", "X11", "Z39_50", "auth", "bgp", "courier", "csnet_ns", "ctf", "daytime",
    "discard", "domain", "domain_u", "echo", "eco_i", "ecr_i", "efs", "exec", "finger",
    "ftp", "ftp_data", "gopher", "hostnames", "http", "http_443", "imap4", "iso_tsap",
    "klogin", "kshell", "ldap", "link", "login", "mtp", "name", "netbios_dgm",
    "netbios_ns", "netbios_ssn", "netstat", "nnsp", "nntp", "ntp_u", "other", "pm_dump",
    "pop_2", "pop_3", "printer", "private", "red_i", "remote_job", "rje", "shell", "smtp",
    "sql_net", "ssh", "sunrpc", "supdup", "systat", "telnet", "tftp_u", "tim_i", "time",
    "urh_i", "urp_i", "uucp", "uucp_path", "vmnet", "whois",
)

# KDD-99 column order
KDD_FEATURES = (
    ("duration", CONTINUOUS),
    ("protocol_type", CATEGORICAL),
    ("service", CATEGORICAL),
    ("flag", CATEGORICAL),
    ("src_bytes", CONTINUOUS),
    ("dst_bytes", CONTINUOUS),
    ("land", BINARY),
    ("wrong_fragment", CONTINUOUS),
    ("urgent", CONTINUOUS),
    ("hot", CONTINUOUS),
    ("num_failed_logins", CONTINUOUS),
    ("logged_in", BINARY),
    ("num_compromised", CONTINUOUS),
    ("root_shell", CONTINUOUS),
    ("su_attempted", CONTINUOUS),
    ("num_root", CONTINUOUS),
    ("num_file_creations", CONTINUOUS),
    ("num_shells", CONTINUOUS),
    ("num_access_files", CONTINUOUS),
    ("num_outbound_cmds", CONTINUOUS),
    ("is_host_login", BINARY),
    ("is_guest_login", BINARY),
    ("count", CONTINUOUS),
    ("srv_count", CONTINUOUS),
    ("serror_rate", CONTINUOUS),
    ("srv_serror_rate", CONTINUOUS),
    ("rerror_rate", CONTINUOUS),
    ("srv_rerror_rate", CONTINUOUS),
    ("same_srv_rate", CONTINUOUS),
    ("diff_srv_rate", CONTINUOUS),
    ("srv_diff_host_rate", CONTINUOUS),
    ("dst_host_count", CONTINUOUS),
    ("dst_host_srv_count", CONTINUOUS),
    ("dst_host_same_srv_rate", CONTINUOUS),
    ("dst_host_diff_srv_rate", CONTINUOUS),
    ("dst_host_same_src_port_rate", CONTINUOUS),
    ("dst_host_srv_diff_host_rate", CONTINUOUS),
    ("dst_host_serror_rate", CONTINUOUS),
    ("dst_host_srv_serror_rate", CONTINUOUS),
    ("dst_host_rerror_rate", CONTINUOUS),
    ("dst_host_srv_rerror_rate", CONTINUOUS),
)

KDD_VOCABULARY = {"protocol_type": PROTOCOLS, "service": SERVICES, "flag": FLAGS}

_INT_RE = re.compile(r"^\d+$")
_BUCKET_RE = re.compile(
    r"^(?P<feature>[A-Za-z0-9_]+)" + ELEMENT_OF + r"\[(?P<lo>[^,\[\]()\s]+),(?P<hi>[^,\[\]()\s]+)\)$"
)
_EQUALS_RE = re.compile(r"^(?P<feature>[A-Za-z0-9_]+)=(?P<value>\S+)$")


class AttackCategory(Enum):
    NORMAL = "Normal"
    DOS = "DoS"
    PROBE = "Probe"
    R2L = "R2L"
    U2R = "U2R"

    @property
    def is_attack(self):
        return self is not AttackCategory.NORMAL

    @classmethod
    def parse(cls, text):
        for category in cls:
            if category.value.lower() == text.strip().lower():
                return category
        raise ValueError(f"Unknown attack category: {text!r}")


ATTACK_CATEGORIES = (
    AttackCategory.DOS,
    AttackCategory.PROBE,
    AttackCategory.R2L,
    AttackCategory.U2R,
)


class BinaryLabel(IntEnum):
    ATTACK = 1
    NORMAL = -1


def format_value(value):
    """
    Text form of a feature value. Integral numbers print without a decimal point.
    """
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def format_edge(value):
    if value == inf:
        return "inf"
    if value == -inf:
        return "-inf"
    return format_value(float(value))


def bucket_item(feature, lo, hi):
    return f"{feature}{ELEMENT_OF}[{format_edge(lo)},{format_edge(hi)})"


def label_item(value):
    return LABEL_PREFIX + value


def parse_item(token):
    """
    Splits an item token into its parts
        - token (string): "<feature>=<value>", "<feature>∈[lo,hi)" or "label=<value>"
    Returns ("label", value), ("bucket", feature, lo, hi) or ("equals", feature, value)
    """
    if token.startswith(LABEL_PREFIX):
        return ("label", token[len(LABEL_PREFIX):])
    m = _BUCKET_RE.match(token)
    if m:
        return ("bucket", m.group("feature"), float(m.group("lo")), float(m.group("hi")))
    m = _EQUALS_RE.match(token)
    if m:
        return ("equals", m.group("feature"), m.group("value"))
    raise ValueError(f"Malformed item token: {token!r}")


def split_items(text):
    """
    Splits a comma-joined item list. Commas inside a bucket's brackets are kept.
    """
    items, current, depth = [], [], 0
    for char in text:
        if char == "[":
            depth += 1
        elif char == ")" and depth:
            depth -= 1
        if char == "," and not depth:
            items.append("".join(current))
            current = []
        else:
            current.append(char)
    if current or items:
        items.append("".join(current))
    return [item for item in items if item]


def join_items(items):
    return ",".join(items)


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    vocabulary: tuple = ()

    @property
    def resolution(self):
        # smallest meaningful change of a numeric value
        return 0.01 if self.name.endswith("_rate") else 1


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple

    def __post_init__(self):
        if len(self.features) != 41:
            raise ValueError(f"A KDD schema has 41 features, got {len(self.features)}")
        categorical = {f.name for f in self.features if f.kind == CATEGORICAL}
        if categorical != set(KDD_VOCABULARY):
            raise ValueError(f"Categorical features must be {sorted(KDD_VOCABULARY)}")

    @classmethod
    def kdd99(cls):
        return cls(
            tuple(
                Feature(name, kind, tuple(KDD_VOCABULARY.get(name, ())))
                for name, kind in KDD_FEATURES
            )
        )

    @cached_property
    def names(self):
        return tuple(f.name for f in self.features)

    @cached_property
    def _positions(self):
        return {f.name: i for i, f in enumerate(self.features)}

    def index(self, name):
        try:
            return self._positions[name]
        except KeyError:
            raise KeyError(f"Unknown feature: {name}") from None

    def feature(self, name):
        return self.features[self.index(name)]

    def fingerprint(self):
        """
        SHA-1 over feature names and kinds. Vocabulary growth does not change it.
        """
        text = "|".join(f"{f.name}:{f.kind}" for f in self.features)
        return hashlib.sha1(text.encode("utf-8")).hexdigest()

    def with_vocabulary(self, additions):
        """
        Returns a schema whose categorical vocabularies include the new values
            - additions (dict): feature name -> iterable of values to register
        """
        if not any(additions.values()):
            return self
        features = []
        for f in self.features:
            extra = [v for v in additions.get(f.name, ()) if v not in f.vocabulary]
            features.append(replace(f, vocabulary=f.vocabulary + tuple(extra)) if extra else f)
        return FeatureSchema(tuple(features))


class Taxonomy(Subclass):
    """
    Attack name -> category table, loaded from a `name<TAB>category` file.
    """

    def __init__(self, path=TAXONOMY_PATH, strict=True, fallback=AttackCategory.DOS, verbose=0):
        super().__init__(verbose=verbose)
        if fallback is AttackCategory.NORMAL:
            raise ValueError("The unknown-label fallback must be an attack category")
        self.path = path
        self.strict = strict
        self.fallback = fallback
        self.table = self._load(path)

    def _load(self, path):
        table = {}
        with open_text(path) as f:
            for number, line in enumerate(f, start=1):
                line = line.rstrip("\r\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("expected attack_name<TAB>category", line=number)
                try:
                    table[parts[0].strip().lower()] = AttackCategory.parse(parts[1])
                except ValueError as e:
                    raise ParseError(str(e), line=number) from None
        self.vprint(f"Loaded {len(table)} labels from {path}")
        return table

    def map_label_to_category(self, label):
        """
        Maps a trimmed, lower-case, period-stripped attack name to its category.
        """
        category = self.table.get(label)
        if category is not None:
            return category
        if self.strict:
            raise UnknownLabelError(f"Attack label not in taxonomy: {label!r}")
        self.vprint(f"Unknown label {label!r} mapped to {self.fallback.value}")
        return self.fallback


@lru_cache(maxsize=1)
def default_taxonomy():
    return Taxonomy()


def map_label_to_category(label, taxonomy=None):
    return (taxonomy or default_taxonomy()).map_label_to_category(label)


@dataclass(frozen=True)
class ConnectionRecord:
    values: tuple
    label: str
    category: AttackCategory
    text: tuple = field(default=(), compare=False, repr=False)
    line: int = field(default=None, compare=False)

    @property
    def binary(self):
        return to_binary(self)

    def fields(self):
        return self.text if self.text else tuple(format_value(v) for v in self.values)

    def with_values(self, changes):
        """
        Returns a copy with some feature values replaced
            - changes (dict): feature index -> new value
        """
        values = list(self.values)
        text = list(self.fields())
        for i, value in changes.items():
            values[i] = value
            text[i] = format_value(value)
        return replace(self, values=tuple(values), text=tuple(text))


def to_binary(record):
    return BinaryLabel.ATTACK if record.category.is_attack else BinaryLabel.NORMAL


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    records: tuple

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def with_records(self, records):
        return Dataset(self.schema, tuple(records))

    def subset(self, indices):
        return self.with_records(self.records[i] for i in indices)

    def attacks_only(self):
        return self.with_records(r for r in self.records if r.category.is_attack)

    def labels(self):
        return [r.label for r in self.records]

    def categories(self):
        return [r.category for r in self.records]

    def binary_labels(self):
        return np.array([int(to_binary(r)) for r in self.records], dtype=int)

    @cached_property
    def _columns(self):
        columns = []
        for i, f in enumerate(self.schema.features):
            values = [r.values[i] for r in self.records]
            if f.kind == CATEGORICAL:
                columns.append(np.array(values, dtype=object))
            else:
                columns.append(np.array(values, dtype=float))
        return columns

    def column(self, name):
        return self._columns[self.schema.index(name)]

    def columns(self):
        return list(self._columns)

    def to_df(self):
        df = pd.DataFrame(
            {name: col for name, col in zip(self.schema.names, self._columns)},
            columns=list(self.schema.names),
        )
        df["label"] = self.labels()
        df["category"] = [c.value for c in self.categories()]
        return df

    def category_counts(self):
        counts = {c: 0 for c in AttackCategory}
        for r in self.records:
            counts[r.category] += 1
        return pd.Series({c.value: n for c, n in counts.items()}, name="records")


class KDDReader(Subclass):
    """
    Parses KDD-99 CSV lines (41 features + label, optional trailing period).
    """

    def __init__(self, schema=None, taxonomy=None, strict=False, verbose=0):
        super().__init__(verbose=verbose)
        self.schema = schema or FeatureSchema.kdd99()
        self.taxonomy = taxonomy or default_taxonomy()
        self.strict = strict

    def _parse_value(self, feature, text, vocab, additions, number):
        if feature.kind == CATEGORICAL:
            if text not in vocab:
                if self.strict:
                    raise ParseError(f"unknown {feature.name} value {text!r}", line=number)
                vocab.add(text)
                additions[feature.name].append(text)
            return text
        try:
            value = int(text) if _INT_RE.match(text) else float(text)
        except ValueError:
            raise ParseError(f"{feature.name} is not numeric: {text!r}", line=number) from None
        if not isfinite(value) or value < 0:
            raise ParseError(f"{feature.name} must be finite and >= 0: {text!r}", line=number)
        if feature.kind == BINARY and value not in (0, 1):
            raise ParseError(f"{feature.name} is binary, got {text!r}", line=number)
        return value

    def parse(self, stream):
        """
        Reads every non-empty line of a KDD CSV stream (or path) into a Dataset.
            - stream (path, text or byte stream): the KDD data
        """
        features = self.schema.features
        vocabs = {f.name: set(f.vocabulary) for f in features if f.kind == CATEGORICAL}
        additions = {name: [] for name in vocabs}
        records = []
        with open_text(stream) as f:
            for number, line in enumerate(f, start=1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                fields = line.split(",")
                if len(fields) != len(features) + 1:
                    raise ParseError(
                        f"expected {len(features) + 1} fields, got {len(fields)}", line=number
                    )
                values = tuple(
                    self._parse_value(feat, text, vocabs.get(feat.name), additions, number)
                    for feat, text in zip(features, fields)
                )
                label = fields[-1].strip().lower()
                if label.endswith("."):
                    label = label[:-1]
                try:
                    category = self.taxonomy.map_label_to_category(label)
                except UnknownLabelError as e:
                    raise UnknownLabelError(str(e), line=number) from None
                records.append(
                    ConnectionRecord(values, label, category, text=tuple(fields[:-1]), line=number)
                )
        for name, added in additions.items():
            if added:
                self.vprint(f"Registered new {name} values: {', '.join(added)}")
        self.vprint(f"Parsed {len(records)} records")
        return Dataset(self.schema.with_vocabulary(additions), tuple(records))


def parse_kdd(stream, schema=None, taxonomy=None, strict=False):
    return KDDReader(schema=schema, taxonomy=taxonomy, strict=strict).parse(stream)


def write_kdd(dataset, sink):
    """
    Writes records back in KDD CSV form, label with its trailing period.
    """
    with open_text(sink, "w") as f:
        for r in dataset:
            f.write(",".join(r.fields()) + f",{r.label}.\n")


def split(dataset, train_fraction, seed):
    """
    Stratified train/test split
        - dataset (Dataset): nonempty input
        - train_fraction (float): share of each category that goes to training, in (0, 1)
        - seed (int): RNG seed
    A category with a single record goes to the training side. Both sides keep source order.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    if not len(dataset):
        raise ValueError("Cannot split an empty dataset")
    rng = np.random.RandomState(seed)
    categories = np.array([r.category.value for r in dataset])
    train_idx, test_idx = [], []
    for category in AttackCategory:
        idx = np.flatnonzero(categories == category.value)
        if len(idx) == 0:
            continue
        if len(idx) == 1:
            train_idx.extend(idx)
            continue
        shuffled = rng.permutation(idx)
        n_train = int(floor(train_fraction * len(idx) + 0.5))
        train_idx.extend(shuffled[:n_train])
        test_idx.extend(shuffled[n_train:])
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


@dataclass(frozen=True)
class Discretization:
    """
    Cut points per continuous feature. Bucket i is [cuts[i], cuts[i+1]), the last one
    open to inf; values below the first cut fall in [-inf, cuts[0]).
    """

    cuts: dict

    def __post_init__(self):
        for name, edges in self.cuts.items():
            if not edges:
                raise ValueError(f"{name}: at least one cut point is required")
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ValueError(f"{name}: cut points must be strictly increasing")

    @classmethod
    def fit(cls, dataset, bins=4):
        """
        Equal-frequency cut points computed on the dataset
            - dataset (Dataset): the records to fit on
            - bins (int or dict): bin count for every continuous feature, or a dict of
              feature -> bin count / explicit list of cut points
        """
        cuts = {}
        for i, f in enumerate(dataset.schema.features):
            if f.kind != CONTINUOUS:
                continue
            setting = bins.get(f.name, 4) if isinstance(bins, dict) else bins
            if isinstance(setting, (list, tuple)):
                cuts[f.name] = tuple(float(c) for c in setting)
                continue
            if int(setting) < 1:
                raise ValueError(f"{f.name}: bins must be >= 1")
            values = np.sort(dataset.column(f.name)) if len(dataset) else np.array([])
            edges = {0.0}
            for k in range(1, int(setting)):
                if len(values):
                    q = float(values[int(floor(len(values) * k / int(setting)))])
                    if q > 0:
                        edges.add(q)
            cuts[f.name] = tuple(sorted(edges))
        return cls(cuts)

    def bucket(self, feature, value):
        edges = self.cuts[feature]
        i = bisect_right(edges, value) - 1
        if i < 0:
            return (-inf, edges[0])
        return (edges[i], edges[i + 1] if i + 1 < len(edges) else inf)

    def buckets(self, feature):
        edges = (-inf,) + tuple(self.cuts[feature]) + (inf,)
        return list(zip(edges, edges[1:]))

    def item(self, feature, value):
        if feature.kind == CONTINUOUS:
            return bucket_item(feature.name, *self.bucket(feature.name, value))
        return f"{feature.name}={format_value(value)}"

    def to_dict(self):
        return {name: list(edges) for name, edges in sorted(self.cuts.items())}

    @classmethod
    def from_dict(cls, data):
        return cls({name: tuple(float(c) for c in edges) for name, edges in data.items()})

    def save(self, sink):
        with open_text(sink, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, source):
        with open_text(source) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class TransactionDb:
    transactions: tuple
    discretization: Discretization = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for t in self.transactions:
            if any(b <= a for a, b in zip(t, t[1:])):
                raise ValueError(f"Transaction items must be sorted and unique: {t}")

    @classmethod
    def from_itemsets(cls, itemsets, discretization=None):
        return cls(tuple(tuple(sorted(set(t))) for t in itemsets), discretization)

    @cached_property
    def item_universe(self):
        return tuple(sorted({item for t in self.transactions for item in t}))

    def __len__(self):
        return len(self.transactions)

    def __iter__(self):
        return iter(self.transactions)


def discretize(dataset, bins=4, discretization=None, label_granularity="label", window=1):
    """
    Turns records into item transactions
        - dataset (Dataset): records to itemize
        - bins (int or dict): passed to Discretization.fit when no discretization is given
        - discretization (Discretization): cuts to reuse, e.g. the training cuts for test data
        - label_granularity (string): "label" for attack names, "category" for categories
        - window (int): 1 gives one transaction per record (41 feature items + label);
          N > 1 merges the label items of N consecutive records into one transaction
    """
    if label_granularity not in ("label", "category"):
        raise ValueError("label_granularity must be 'label' or 'category'")
    if window < 1:
        raise ValueError("window must be >= 1")
    if discretization is None:
        discretization = Discretization.fit(dataset, bins)

    if label_granularity == "label":
        labels = [label_item(r.label) for r in dataset]
    else:
        labels = [label_item(r.category.value) for r in dataset]

    if window > 1:
        itemsets = [labels[i:i + window] for i in range(0, len(labels), window)]
        return TransactionDb.from_itemsets(itemsets, discretization)

    item_columns = []
    for f in dataset.schema.features:
        column = dataset.column(f.name)
        if f.kind == CONTINUOUS:
            edges = np.array(discretization.cuts[f.name])
            positions = np.searchsorted(edges, column, side="right") - 1
            tokens = [bucket_item(f.name, *discretization.bucket(f.name, lo)) for lo in edges]
            below = bucket_item(f.name, -inf, edges[0])
            item_columns.append([tokens[p] if p >= 0 else below for p in positions])
        else:
            item_columns.append([f"{f.name}={format_value(v)}" for v in column])
    item_columns.append(labels)
    itemsets = [sorted(row) for row in zip(*item_columns)] if len(dataset) else []
    return TransactionDb(tuple(tuple(t) for t in itemsets), discretization)


def write_transactions(db, sink):
    """
    One item per line, transactions separated by a line containing exactly ###.
    An empty transaction has no lines of its own and cannot be read back, so it
    is refused with ValueError before anything is written.
    """
    for i, t in enumerate(db.transactions):
        if not t:
            raise ValueError(f"transaction {i} is empty and has no ### representation")
    with open_text(sink, "w") as f:
        for i, t in enumerate(db.transactions):
            if i:
                f.write(TRANSACTION_SEPARATOR + "\n")
            for item in t:
                f.write(item + "\n")


def read_transactions(source):
    transactions, current, seen = [], [], set()
    pending = False
    with open_text(source) as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if line == TRANSACTION_SEPARATOR:
                transactions.append(tuple(sorted(current)))
                current, seen, pending = [], set(), False
                continue
            if not line:
                continue
            if line != line.strip():
                raise ParseError(f"item token with surrounding whitespace: {line!r}", line=number)
            if line in seen:
                raise ParseError(f"item repeated within a transaction: {line}", line=number)
            seen.add(line)
            current.append(line)
            pending = True
    if pending:
        transactions.append(tuple(sorted(current)))
    return TransactionDb(tuple(transactions))


if __name__ == "__main__":
    import sys

    data = parse_kdd(sys.argv[1])
    print(data.category_counts())
