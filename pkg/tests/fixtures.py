import io
from math import inf

import numpy as np

from snortmine.c45 import TreeParams, WeightedView, build_tree
from snortmine.dataset import (
    ATTACK_CATEGORIES,
    BINARY,
    CATEGORICAL,
    CONTINUOUS,
    KDD_FEATURES,
    Discretization,
    FeatureSchema,
    parse_kdd,
)
from snortmine.signature import BASE_SID, Predicate, RuleSet, SignatureRule

NAMES = [name for name, _ in KDD_FEATURES]
DEFAULTS = {"protocol_type": "tcp", "service": "http", "flag": "SF"}


def kdd_line(label="normal", **values):
    """
    One KDD CSV line; every feature not given is 0 (tcp/http/SF for the categorical ones).
    """
    unknown = set(values) - set(NAMES)
    if unknown:
        raise KeyError(f"unknown features: {sorted(unknown)}")
    fields = [str(values.get(name, DEFAULTS.get(name, 0))) for name in NAMES]
    return ",".join(fields + [label + "."])


def dataset_from_lines(lines, **kwargs):
    return parse_kdd(io.StringIO("\n".join(lines) + "\n"), **kwargs)


def smurf_line(src_bytes=1032, **values):
    values.setdefault("protocol_type", "icmp")
    values.setdefault("service", "ecr_i")
    values.setdefault("count", 511)
    return kdd_line("smurf", src_bytes=src_bytes, **values)


def mixed_dataset(n_normal=20, n_smurf=20, n_neptune=10, n_satan=6, seed=0):
    """
    A small separable sample: normal http traffic, smurf (icmp, large src_bytes),
    neptune (tcp S0, no bytes) and satan (REJ port scans).
    """
    rng = np.random.RandomState(seed)
    lines = []
    for _ in range(n_normal):
        lines.append(
            kdd_line(
                "normal",
                src_bytes=int(rng.randint(150, 400)),
                dst_bytes=int(rng.randint(1000, 5000)),
                logged_in=1,
                count=int(rng.randint(1, 10)),
                same_srv_rate="1.00",
            )
        )
    for _ in range(n_smurf):
        lines.append(smurf_line(src_bytes=int(rng.choice([520, 1032, 1480])), count=int(rng.randint(400, 512))))
    for _ in range(n_neptune):
        lines.append(
            kdd_line(
                "neptune",
                service="private",
                flag="S0",
                count=int(rng.randint(100, 300)),
                serror_rate="1.00",
                same_srv_rate="0.05",
            )
        )
    for _ in range(n_satan):
        lines.append(
            kdd_line(
                "satan",
                service="other",
                flag="REJ",
                count=int(rng.randint(1, 5)),
                rerror_rate="1.00",
                diff_srv_rate="1.00",
            )
        )
    order = rng.permutation(len(lines))
    return dataset_from_lines([lines[i] for i in order])


def random_transactions(rng, n_items=6, n_transactions=20):
    items = [chr(ord("A") + i) for i in range(n_items)]
    db = []
    for _ in range(n_transactions):
        size = rng.randint(0, n_items + 1)
        db.append(tuple(sorted(rng.choice(items, size, replace=False).tolist())))
    return db


def random_tree(rng, classes=("A", "B", "C")):
    """
    A tree grown on random mixed columns: categorical strings, integer and fractional numbers.
    """
    n = rng.randint(1, 40)
    kinds = [CATEGORICAL if rng.rand() < 0.3 else CONTINUOUS for _ in range(rng.randint(1, 5))]
    columns = [
        rng.choice(["a", "b", "c", "d"], n).tolist() if k == CATEGORICAL
        else (rng.randint(0, 8, n) * rng.choice([1.0, 0.37])).tolist()
        for k in kinds
    ]
    target = [classes[i] for i in rng.randint(0, len(classes), n)]
    weights = rng.rand(n) + 0.05
    depth = [None, 1, 2, 3][rng.randint(0, 4)]
    return build_tree(WeightedView(columns, kinds, weights=weights), target, TreeParams(max_depth=depth))


def random_predicate(rng, schema, index):
    f = schema.features[index]
    if f.kind == CATEGORICAL:
        return Predicate(f.name, index, "equals", value=str(f.vocabulary[rng.randint(len(f.vocabulary))]))
    if f.kind == BINARY:
        return Predicate(f.name, index, "equals", value=str(rng.randint(0, 2)))
    lo = round(float(rng.rand()) * [1, 100, 10000][rng.randint(0, 3)], int(rng.randint(0, 4)))
    hi = inf if rng.rand() < 0.3 else lo + round(float(rng.rand()) * 100, 2) + 0.01
    return Predicate(f.name, index, "in_range", lo=lo, hi=hi)


def random_ruleset(rng, schema=None):
    """
    A valid RuleSet with random predicates, categories, metrics, revisions and sid gaps.
    """
    schema = schema or FeatureSchema.kdd99()
    rules, sid = [], BASE_SID + int(rng.randint(0, 50))
    for _ in range(rng.randint(0, 8)):
        indices = rng.choice(len(schema.features), rng.randint(1, 5), replace=False)
        rules.append(
            SignatureRule(
                sid,
                tuple(random_predicate(rng, schema, int(i)) for i in indices),
                ATTACK_CATEGORIES[rng.randint(len(ATTACK_CATEGORIES))],
                float(rng.rand()),
                float(rng.rand()),
                int(rng.randint(1, 4)),
            )
        )
        sid += int(rng.randint(1, 20))
    fingerprint = schema.fingerprint() if rng.rand() < 0.5 else None
    discretization = Discretization({"src_bytes": (0.0, float(rng.randint(1, 100)))}) if rng.rand() < 0.5 else None
    return RuleSet(tuple(rules), fingerprint, discretization)


def desk_dataset(scale=40, seed=0):
    """
    mixed_dataset scaled up to a few thousand records with the same category proportions.
    """
    return mixed_dataset(n_normal=20 * scale, n_smurf=20 * scale, n_neptune=10 * scale, n_satan=6 * scale, seed=seed)
