"""
Detection-rate / false-alarm-rate reports and the comparison table built from them.
"""
from dataclasses import dataclass, field
import json

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from snortmine.dataset import AttackCategory
from snortmine.errors import ParseError
from snortmine.subclass import open_text

CATEGORIES = tuple(AttackCategory)
COMPARISON_COLUMNS = ["name", "source", "detection_rate", "false_alarm_rate"] + [
    f"recall_{c.value}" for c in CATEGORIES
]
FLOAT_FORMAT = "%.6f"


@dataclass(frozen=True)
class ConfusionMatrix:
    """
    5x5 counts, rows are the true category and columns the prediction, both in
    AttackCategory order (Normal, DoS, Probe, R2L, U2R).
    """

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(CATEGORIES), len(CATEGORIES)):
            raise ValueError(f"confusion matrix must be {len(CATEGORIES)}x{len(CATEGORIES)}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be >= 0")
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self):
        return int(self.counts.sum())

    def row(self, category):
        return self.counts[CATEGORIES.index(category)]

    def to_df(self):
        names = [c.value for c in CATEGORIES]
        return pd.DataFrame(self.counts, index=pd.Index(names, name="truth"), columns=names)

    def to_list(self):
        return self.counts.tolist()


def _rate(hits, total, name, undefined):
    if total == 0:
        undefined.append(name)
        return 0.0
    return hits / total


@dataclass(frozen=True)
class EvaluationReport:
    detection_rate: float
    false_alarm_rate: float
    per_category_recall: dict
    confusion: ConfusionMatrix
    source: str
    undefined: tuple = field(default=())

    @classmethod
    def from_confusion(cls, confusion, source):
        counts = confusion.counts
        undefined = []
        normal = counts[0]
        attacks = counts[1:]
        detection_rate = _rate(int(attacks[:, 1:].sum()), int(attacks.sum()), "detection_rate", undefined)
        false_alarm_rate = _rate(int(normal[1:].sum()), int(normal.sum()), "false_alarm_rate", undefined)
        recall = {
            c.value: _rate(int(counts[i, i]), int(counts[i].sum()), f"recall_{c.value}", undefined)
            for i, c in enumerate(CATEGORIES)
        }
        return cls(detection_rate, false_alarm_rate, recall, confusion, source, tuple(undefined))

    def to_dict(self):
        return {
            "source": self.source,
            "detection_rate": self.detection_rate,
            "false_alarm_rate": self.false_alarm_rate,
            "per_category_recall": dict(self.per_category_recall),
            "confusion": self.confusion.to_list(),
            "undefined": list(self.undefined),
        }

    @classmethod
    def from_dict(cls, data):
        return cls.from_confusion(ConfusionMatrix(np.array(data["confusion"])), data["source"])

    def save(self, sink):
        with open_text(sink, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, source):
        with open_text(source) as f:
            return cls.from_dict(json.load(f))


def _category(value):
    return value if isinstance(value, AttackCategory) else AttackCategory.parse(value)


def evaluate(truth, predicted, source="ruleset"):
    """
    Scores aligned per-record categories
        - truth (list): true AttackCategory per record
        - predicted (list): predicted AttackCategory per record
        - source (str): detector name stored in the report
    An attack predicted as any other attack category still counts as detected;
    per-category recall needs the exact category. Rates over empty classes are 0
    and listed in `undefined`.
    """
    truth, predicted = list(truth), list(predicted)
    if len(truth) != len(predicted):
        raise ValueError(f"truth has {len(truth)} records but predicted has {len(predicted)}")
    counts = np.zeros((len(CATEGORIES), len(CATEGORIES)), dtype=np.int64)
    if truth:
        counts = confusion_matrix(
            [_category(t).value for t in truth],
            [_category(p).value for p in predicted],
            labels=[c.value for c in CATEGORIES],
        ).astype(np.int64)
    return EvaluationReport.from_confusion(ConfusionMatrix(counts), source)


def _report_row(name, report):
    row = {
        "name": name,
        "source": report.source,
        "detection_rate": report.detection_rate,
        "false_alarm_rate": report.false_alarm_rate,
    }
    for c in CATEGORIES:
        row[f"recall_{c.value}"] = report.per_category_recall.get(c.value, np.nan)
    return row


def read_baselines(source):
    """
    Externally supplied comparison rows (for example figures quoted for another
    detector). Tab-separated with a header; needs at least name, detection_rate
    and false_alarm_rate. Missing recall columns are left empty.
    """
    with open_text(source) as f:
        df = pd.read_csv(f, sep="\t", dtype={"name": str})
    missing = {"name", "detection_rate", "false_alarm_rate"} - set(df.columns)
    if missing:
        raise ParseError(f"baseline table lacks columns: {', '.join(sorted(missing))}")
    unknown = set(df.columns) - set(COMPARISON_COLUMNS)
    if unknown:
        raise ParseError(f"baseline table has unknown columns: {', '.join(sorted(unknown))}")
    if "source" not in df.columns:
        df["source"] = "baseline"
    return df.reindex(columns=COMPARISON_COLUMNS)


def compare(reports, sink, baselines=None):
    """
    Writes one row per report, then any baseline rows
        - reports (list): (name, EvaluationReport) pairs, at least one
        - sink (str): path or stream for the tab-separated table
        - baselines (pd.DataFrame): rows from read_baselines
    Columns are COMPARISON_COLUMNS in that order; floats print with six decimals.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("compare needs at least one report")
    df = pd.DataFrame([_report_row(name, report) for name, report in reports], columns=COMPARISON_COLUMNS)
    if baselines is not None and len(baselines):
        df = pd.concat([df, baselines[COMPARISON_COLUMNS]], ignore_index=True)
    with open_text(sink, "w") as f:
        df.to_csv(f, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return df
