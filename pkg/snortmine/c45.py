"""
C4.5 decision trees: gain-ratio splits over weighted samples, categorical multiway
and numeric threshold tests, no pruning.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import json

import numpy as np

from snortmine.dataset import CATEGORICAL, format_value
from snortmine.subclass import Subclass, open_text


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = None
    min_samples_per_leaf: int = 1
    min_gain: float = 0.0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 (or None for unlimited)")
        if self.min_samples_per_leaf < 1:
            raise ValueError("min_samples_per_leaf must be >= 1")
        if self.min_gain < 0:
            raise ValueError("min_gain must be >= 0")


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    gain: float
    split_info: float
    gain_ratio: float
    threshold: float = None

    @property
    def is_numeric(self):
        return self.threshold is not None


def entropy(class_counts):
    """
    Entropy in bits of a (possibly fractional) class count vector.
    """
    counts = np.asarray(class_counts, dtype=float)
    if np.any(counts < 0) or counts.sum() <= 0:
        raise ValueError("entropy needs nonnegative counts with at least one > 0")
    p = counts[counts > 0] / counts.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


def _row_entropy(counts):
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, counts / np.where(totals > 0, totals, 1), 0.0)
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0.0)
    return np.maximum(0.0, -terms.sum(axis=1))


class WeightedView:
    """
    Column-oriented training data with one positive weight per row.
        - columns (list): one array per feature
        - kinds (list): feature kind per column (categorical columns hold strings)
        - weights (array): per-row weights, defaults to all ones
        - names (list): feature names used when serializing trees
    """

    def __init__(self, columns, kinds, weights=None, names=None, _codes=None):
        self.kinds = tuple(kinds)
        self.columns = [
            np.asarray(c, dtype=object if k == CATEGORICAL else float)
            for c, k in zip(columns, self.kinds)
        ]
        self.n_rows = len(self.columns[0]) if self.columns else 0
        self.names = tuple(names) if names else tuple(f"f{i}" for i in range(len(self.columns)))
        if weights is None:
            weights = np.ones(self.n_rows)
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (self.n_rows,):
            raise ValueError("one weight per row is required")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be > 0")
        self._codes = {} if _codes is None else _codes

    @classmethod
    def from_dataset(cls, dataset, weights=None):
        return cls(
            dataset.columns(),
            [f.kind for f in dataset.schema.features],
            weights=weights,
            names=dataset.schema.names,
        )

    def with_weights(self, weights):
        view = WeightedView.__new__(WeightedView)
        view.__dict__.update(self.__dict__)
        view.weights = np.asarray(weights, dtype=float)
        if view.weights.shape != (self.n_rows,) or np.any(view.weights <= 0):
            raise ValueError("weights must be positive, one per row")
        return view

    def codes(self, feature):
        if feature not in self._codes:
            self._codes[feature] = np.unique(self.columns[feature].astype(str), return_inverse=True)
        return self._codes[feature]


def _numeric_split(x, y, w, n_classes, feature, min_gain, min_leaf):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = len(xs)
    boundaries = np.flatnonzero(xs[:-1] < xs[1:])
    if min_leaf > 1:
        keep = (boundaries + 1 >= min_leaf) & (n - boundaries - 1 >= min_leaf)
        boundaries = boundaries[keep]
    if not len(boundaries):
        return None
    weighted = np.zeros((n, n_classes))
    weighted[np.arange(n), y[order]] = w[order]
    cumulative = np.cumsum(weighted, axis=0)
    total = cumulative[-1]
    left = cumulative[boundaries]
    right = np.maximum(total - left, 0.0)
    w_left, w_right, w_total = left.sum(axis=1), right.sum(axis=1), total.sum()

    parent = entropy(total)
    conditional = (w_left * _row_entropy(left) + w_right * _row_entropy(right)) / w_total
    gain = np.maximum(parent - conditional, 0.0)
    split_info = _row_entropy(np.column_stack([w_left, w_right]))
    valid = (split_info > 0) & (gain >= min_gain)
    if not valid.any():
        return None
    ratio = np.where(valid, gain / np.where(split_info > 0, split_info, 1), -1.0)
    best = int(np.argmax(ratio))
    i = boundaries[best]
    threshold = float((xs[i] + xs[i + 1]) / 2)
    if threshold >= xs[i + 1]:
        # adjacent floats: the midpoint rounds up to the right value
        threshold = float(xs[i])
    return SplitCandidate(
        feature=feature,
        gain=float(gain[best]),
        split_info=float(split_info[best]),
        gain_ratio=float(ratio[best]),
        threshold=threshold,
    )


def _categorical_split(codes, n_values, y, w, n_classes, feature, min_gain, min_leaf):
    counts = np.zeros((n_values, n_classes))
    np.add.at(counts, (codes, y), w)
    sizes = np.bincount(codes, minlength=n_values)
    present = sizes > 0
    if present.sum() < 2 or (sizes >= min_leaf).sum() < 2:
        return None
    counts = counts[present]
    branch = counts.sum(axis=1)
    total = counts.sum(axis=0)
    gain = max(0.0, entropy(total) - float((branch * _row_entropy(counts)).sum() / branch.sum()))
    split_info = entropy(branch)
    if split_info <= 0 or gain < min_gain:
        return None
    return SplitCandidate(
        feature=feature, gain=gain, split_info=split_info, gain_ratio=gain / split_info
    )


def best_split(view, target, feature, rows=None, min_gain=0.0, min_samples_per_leaf=1, n_classes=None):
    """
    Highest gain-ratio test on one feature, or None when no valid candidate exists.
        - view (WeightedView): the weighted data
        - target (array): class index per row of the view
        - feature (int): column to test
        - rows (array): row subset to consider (all rows by default)
        - min_gain (float): candidates below this information gain (bits) are ignored
    Numeric thresholds are midpoints between consecutive distinct values.
    """
    target = np.asarray(target, dtype=int)
    rows = np.arange(view.n_rows) if rows is None else np.asarray(rows)
    if not len(rows):
        raise ValueError("best_split needs at least one row")
    n_classes = n_classes or int(target.max()) + 1
    y = target[rows]
    w = view.weights[rows]
    if view.kinds[feature] == CATEGORICAL:
        vocab, codes = view.codes(feature)
        return _categorical_split(
            codes[rows], len(vocab), y, w, n_classes, feature, min_gain, min_samples_per_leaf
        )
    return _numeric_split(
        view.columns[feature][rows], y, w, n_classes, feature, min_gain, min_samples_per_leaf
    )


@dataclass(frozen=True)
class Leaf:
    klass: object
    distribution: tuple


@dataclass(frozen=True)
class NumericNode:
    feature: int
    threshold: float
    left: object
    right: object


@dataclass(frozen=True)
class CategoricalNode:
    feature: int
    children: dict
    default: str


@dataclass(frozen=True)
class DecisionTree:
    root: object
    class_domain: tuple
    feature_names: tuple = ()

    def classify_values(self, values):
        node = self.root
        while not isinstance(node, Leaf):
            value = values[node.feature]
            if isinstance(node, NumericNode):
                node = node.left if value <= node.threshold else node.right
            else:
                child = node.children.get(format_value(value))
                node = child if child is not None else node.children[node.default]
        return node.klass

    def classify(self, record):
        return self.classify_values(record.values)

    def predict(self, records):
        return [self.classify_values(r.values) for r in records]

    def predict_columns(self, columns):
        """
        Classifies every row of a column-oriented view at once. Returns an object array.
        """
        n = len(columns[0]) if columns else 0
        out = np.empty(n, dtype=object)
        self._fill(self.root, columns, np.arange(n), out)
        return out

    def _fill(self, node, columns, rows, out):
        if not len(rows):
            return
        if isinstance(node, Leaf):
            out[rows] = node.klass
            return
        x = columns[node.feature][rows]
        if isinstance(node, NumericNode):
            mask = x.astype(float) <= node.threshold
            self._fill(node.left, columns, rows[mask], out)
            self._fill(node.right, columns, rows[~mask], out)
            return
        keys = np.array([format_value(v) for v in x], dtype=object)
        routed = np.zeros(len(rows), dtype=bool)
        for value, child in node.children.items():
            mask = keys == value
            routed |= mask
            if value == node.default:
                continue
            self._fill(child, columns, rows[mask], out)
        default_mask = (keys == node.default) | ~routed
        self._fill(node.children[node.default], columns, rows[default_mask], out)

    def depth(self):
        def walk(node):
            if isinstance(node, Leaf):
                return 0
            children = (node.left, node.right) if isinstance(node, NumericNode) else node.children.values()
            return 1 + max(walk(c) for c in children)

        return walk(self.root)

    def n_leaves(self):
        def walk(node):
            if isinstance(node, Leaf):
                return 1
            children = (node.left, node.right) if isinstance(node, NumericNode) else node.children.values()
            return sum(walk(c) for c in children)

        return walk(self.root)

    def _node_to_dict(self, node):
        if isinstance(node, Leaf):
            return {"kind": "leaf", "class": node.klass, "distribution": list(node.distribution)}
        name = self.feature_names[node.feature] if self.feature_names else None
        if isinstance(node, NumericNode):
            return {
                "kind": "numeric",
                "feature": node.feature,
                "name": name,
                "threshold": node.threshold,
                "left": self._node_to_dict(node.left),
                "right": self._node_to_dict(node.right),
            }
        return {
            "kind": "categorical",
            "feature": node.feature,
            "name": name,
            "default": node.default,
            "children": {v: self._node_to_dict(c) for v, c in node.children.items()},
        }

    def to_dict(self):
        return {
            "class_domain": list(self.class_domain),
            "feature_names": list(self.feature_names),
            "root": self._node_to_dict(self.root),
        }

    @classmethod
    def from_dict(cls, data):
        def build(node):
            kind = node["kind"]
            if kind == "leaf":
                return Leaf(node["class"], tuple(float(d) for d in node["distribution"]))
            if kind == "numeric":
                return NumericNode(
                    node["feature"], float(node["threshold"]), build(node["left"]), build(node["right"])
                )
            if kind == "categorical":
                return CategoricalNode(
                    node["feature"], {v: build(c) for v, c in node["children"].items()}, node["default"]
                )
            raise ValueError(f"Unknown tree node kind: {kind}")

        return cls(build(data["root"]), tuple(data["class_domain"]), tuple(data["feature_names"]))

    def save(self, sink):
        with open_text(sink, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, source):
        with open_text(source) as f:
            return cls.from_dict(json.load(f))


def _select(candidates):
    # gain_ratio ties keep the lowest feature index
    best = None
    for candidate in candidates:
        if candidate is not None and (best is None or candidate.gain_ratio > best.gain_ratio):
            best = candidate
    return best


def build_tree(view, target, params=TreeParams(), class_domain=None, workers=1):
    """
    Grows a C4.5 tree
        - view (WeightedView): weighted training columns
        - target (list): class value per row
        - params (TreeParams): growth limits
        - class_domain (list): the classes the tree may emit, in tie-break order
          (defaults to the sorted distinct target values)
        - workers (int): threads for the per-feature split search
    Leaves are made when a node is pure, when max_depth is reached, or when no feature
    offers a valid split; the leaf class is the weighted majority.
    """
    if not view.n_rows:
        raise ValueError("build_tree needs at least one row")
    class_domain = tuple(class_domain) if class_domain is not None else tuple(sorted(set(target)))
    index = {c: i for i, c in enumerate(class_domain)}
    y = np.array([index[t] for t in target], dtype=int)
    n_classes = len(class_domain)
    features = range(len(view.columns))
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def search(rows):
        def one(feature):
            return best_split(
                view, y, feature, rows=rows, min_gain=params.min_gain,
                min_samples_per_leaf=params.min_samples_per_leaf, n_classes=n_classes,
            )

        if executor is not None:
            return _select(executor.map(one, features))
        return _select(one(f) for f in features)

    def grow(rows, depth):
        counts = np.bincount(y[rows], weights=view.weights[rows], minlength=n_classes)
        leaf = Leaf(class_domain[int(np.argmax(counts))], tuple(float(c) for c in counts))
        if (counts > 0).sum() <= 1:
            return leaf
        if params.max_depth is not None and depth >= params.max_depth:
            return leaf
        split = search(rows)
        if split is None:
            return leaf
        if split.is_numeric:
            mask = view.columns[split.feature][rows] <= split.threshold
            return NumericNode(
                split.feature, split.threshold, grow(rows[mask], depth + 1), grow(rows[~mask], depth + 1)
            )
        vocab, codes = view.codes(split.feature)
        sub_codes = codes[rows]
        children, default, default_mass = {}, None, -1.0
        for code in np.unique(sub_codes):
            child_rows = rows[sub_codes == code]
            mass = float(view.weights[child_rows].sum())
            value = str(vocab[code])
            children[value] = grow(child_rows, depth + 1)
            if mass > default_mass:
                default, default_mass = value, mass
        return CategoricalNode(split.feature, children, default)

    try:
        root = grow(np.arange(view.n_rows), 0)
    finally:
        if executor is not None:
            executor.shutdown()
    return DecisionTree(root, class_domain, view.names)


def classify(tree, record):
    return tree.classify(record)


class C45(Subclass):
    """
    Trains C4.5 trees on a Dataset.
        - params (TreeParams): growth limits
        - workers (int): threads for split search
    """

    def __init__(self, params=TreeParams(), workers=1, verbose=0):
        super().__init__(verbose=verbose)
        self.params = params
        self.workers = workers

    def fit(self, dataset, target, weights=None, class_domain=None):
        view = WeightedView.from_dataset(dataset, weights=weights)
        tree = build_tree(view, target, self.params, class_domain=class_domain, workers=self.workers)
        self.vprint(f"Built tree: depth {tree.depth()}, {tree.n_leaves()} leaves")
        return tree
