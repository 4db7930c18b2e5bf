"""
Discrete AdaBoost over depth-limited C4.5 trees for attack/normal detection,
plus the multiclass tree that names the category of a detected attack.
"""
from dataclasses import dataclass, field
from math import log
import json

import numpy as np

from snortmine.c45 import C45, DecisionTree, TreeParams, WeightedView, build_tree
from snortmine.dataset import ATTACK_CATEGORIES, AttackCategory, BinaryLabel
from snortmine.errors import TrainingError
from snortmine.subclass import Subclass, open_text

ALPHA_CAP = log(1e9) / 2
TOLERANCE = 1e-9
LOG_COLUMNS = [
    "round",
    "epsilon",
    "alpha",
    "weight_sum",
    "post_update_error",
    "normalizer",
    "training_error",
    "error_bound",
]


def alpha_for(epsilon):
    """
    Vote weight of a weak hypothesis with weighted error epsilon in (0, 0.5).
    """
    return 0.5 * log((1 - epsilon) / epsilon)


@dataclass(frozen=True)
class WeakHypothesis:
    tree: DecisionTree
    alpha: float
    epsilon: float

    def to_dict(self):
        return {"alpha": self.alpha, "epsilon": self.epsilon, "tree": self.tree.to_dict()}

    @classmethod
    def from_dict(cls, data):
        return cls(DecisionTree.from_dict(data["tree"]), float(data["alpha"]), float(data["epsilon"]))


@dataclass(frozen=True)
class StrongClassifier:
    rounds: tuple

    def __post_init__(self):
        if not self.rounds:
            raise ValueError("A StrongClassifier needs at least one round")

    @property
    def T(self):
        return len(self.rounds)

    def margin_values(self, values):
        return sum(h.alpha * h.tree.classify_values(values) for h in self.rounds)

    def predict(self, record):
        # ties flag the record as an attack
        return BinaryLabel.ATTACK if self.margin_values(record.values) >= 0 else BinaryLabel.NORMAL

    def predict_columns(self, columns):
        margin = np.zeros(len(columns[0]) if columns else 0)
        for h in self.rounds:
            margin += h.alpha * h.tree.predict_columns(columns).astype(float)
        return np.where(margin >= 0, 1, -1)

    def to_dict(self):
        return {"kind": "adaboost", "rounds": [h.to_dict() for h in self.rounds]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(WeakHypothesis.from_dict(r) for r in data["rounds"]))

    def save(self, sink):
        with open_text(sink, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, source):
        with open_text(source) as f:
            return cls.from_dict(json.load(f))


def predict(model, record):
    return model.predict(record)


class AdaBoost(Subclass):
    """
    Trains a StrongClassifier
        - rounds (int): maximum number of boosting rounds T
        - weak_params (TreeParams): growth limits for every weak tree (depth 2 by default)
        - workers (int): threads for the weak learner's split search
    After training, `training_log` holds one row per kept round.
    """

    def __init__(self, rounds=10, weak_params=TreeParams(max_depth=2), workers=1, verbose=0):
        super().__init__(verbose=verbose)
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        self.rounds = rounds
        self.weak_params = weak_params
        self.workers = workers
        self.training_log = self._to_df([], LOG_COLUMNS)

    def train(self, train, labels=None):
        """
        Boosts weak C4.5 trees
            - train (Dataset): training records
            - labels (list): +1/-1 per record, derived from the categories when omitted
        """
        if not len(train):
            raise ValueError("Cannot train on an empty dataset")
        y = np.asarray(train.binary_labels() if labels is None else [int(l) for l in labels], dtype=int)
        if set(np.unique(y)) != {-1, 1}:
            raise ValueError("Training data must contain both attack and normal records")

        view = WeightedView.from_dataset(train)
        n = len(y)
        w = np.full(n, 1.0 / n)
        margin = np.zeros(n)
        bound = 1.0
        hypotheses, log_rows = [], []

        for t in range(1, self.rounds + 1):
            tree = build_tree(
                view.with_weights(w), list(y), self.weak_params, class_domain=(-1, 1), workers=self.workers
            )
            h = tree.predict_columns(view.columns).astype(int)
            miss = h != y
            epsilon = float(w[miss].sum())

            if epsilon >= 0.5:
                if t == 1:
                    raise TrainingError(f"Weak learner no better than chance on round 1 (epsilon={epsilon:.4f})")
                self.vprint(f"Round {t}: epsilon={epsilon:.4f} >= 0.5, discarding and stopping")
                break

            alpha = ALPHA_CAP if epsilon == 0 else alpha_for(epsilon)
            unnormalized = w * np.exp(-alpha * y * h)
            normalizer = float(unnormalized.sum())
            w = unnormalized / normalizer
            weight_sum = float(w.sum())
            post_update_error = float(w[miss].sum())

            hypotheses.append(WeakHypothesis(tree, alpha, epsilon))
            margin += alpha * h
            bound *= normalizer
            training_error = float(np.mean(np.where(margin >= 0, 1, -1) != y))
            log_rows.append(
                (t, epsilon, alpha, weight_sum, post_update_error, normalizer, training_error, bound)
            )
            self._check_round(t, epsilon, weight_sum, post_update_error, training_error, bound)
            self.vprint(f"Round {t}: epsilon={epsilon:.6f} alpha={alpha:.6f} training_error={training_error:.6f}")

            if epsilon == 0:
                self.vprint(f"Round {t}: perfect weak hypothesis, stopping early")
                break
            w = np.maximum(w, np.finfo(float).tiny)

        self.training_log = self._to_df(log_rows, LOG_COLUMNS)
        return StrongClassifier(tuple(hypotheses))

    def _check_round(self, t, epsilon, weight_sum, post_update_error, training_error, bound):
        if abs(weight_sum - 1) > TOLERANCE:
            raise TrainingError(f"Round {t}: weights sum to {weight_sum!r}")
        if 0 < epsilon and abs(post_update_error - 0.5) > TOLERANCE:
            raise TrainingError(f"Round {t}: reweighted error {post_update_error!r} != 0.5")
        if training_error > bound + TOLERANCE:
            raise TrainingError(f"Round {t}: training error {training_error} above bound {bound}")

    def write_log(self, sink):
        with open_text(sink, "w") as f:
            self.training_log.to_csv(f, sep="\t", index=False, float_format="%.12g", lineterminator="\n")


def train_adaboost(train, labels=None, T=10, weak_params=TreeParams(max_depth=2), workers=1):
    return AdaBoost(rounds=T, weak_params=weak_params, workers=workers).train(train, labels)


@dataclass(frozen=True)
class CategoryClassifier:
    tree: DecisionTree
    absent: tuple = field(default=())

    def categorize(self, record):
        return AttackCategory.parse(self.tree.classify(record))

    def categorize_columns(self, columns):
        return [AttackCategory.parse(c) for c in self.tree.predict_columns(columns)]

    def to_dict(self):
        return {"kind": "category", "absent": list(self.absent), "tree": self.tree.to_dict()}

    @classmethod
    def from_dict(cls, data):
        return cls(DecisionTree.from_dict(data["tree"]), tuple(data["absent"]))

    def save(self, sink):
        with open_text(sink, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, source):
        with open_text(source) as f:
            return cls.from_dict(json.load(f))


def train_category(attacks_only, params=TreeParams(), workers=1):
    """
    Multiclass C4.5 tree over DoS/Probe/R2L/U2R, trained on attack records only.
    Categories missing from the input are listed in `absent`; the tree never emits them.
    """
    if not len(attacks_only):
        raise ValueError("Cannot train the category tree on an empty dataset")
    if any(not r.category.is_attack for r in attacks_only):
        raise ValueError("train_category accepts attack records only")
    domain = tuple(c.value for c in ATTACK_CATEGORIES)
    target = [r.category.value for r in attacks_only]
    tree = C45(params, workers=workers).fit(attacks_only, target, class_domain=domain)
    absent = tuple(c for c in domain if c not in set(target))
    return CategoryClassifier(tree, absent)


def detect_and_categorize(strong, cat, record):
    """
    Per-record verdict: Normal when the ensemble says -1, otherwise the attack category.
    """
    if strong.predict(record) == BinaryLabel.NORMAL:
        return AttackCategory.NORMAL
    return cat.categorize(record)


def detect_dataset(strong, cat, dataset):
    """
    Vectorized detect_and_categorize over a whole Dataset.
    """
    if not len(dataset):
        return []
    columns = dataset.columns()
    flags = strong.predict_columns(columns)
    categories = cat.categorize_columns(columns)
    return [c if f == 1 else AttackCategory.NORMAL for f, c in zip(flags, categories)]