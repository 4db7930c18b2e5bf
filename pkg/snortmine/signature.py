"""
Signature rules compiled from association rules: Snort-syntax export/import and
a matcher that evaluates signatures on connection records.
"""
from dataclasses import dataclass, field
from functools import cached_property
import json
import re

import numpy as np

from snortmine.dataset import (
    CONTINUOUS,
    AttackCategory,
    Discretization,
    FeatureSchema,
    bucket_item,
    default_taxonomy,
    format_value,
    join_items,
    parse_item,
    split_items,
)
from snortmine.errors import CompileError, ParseError
from snortmine.subclass import Subclass, open_text

BASE_SID = 1000001

CLASSTYPES = {
    AttackCategory.DOS: "attempted-dos",
    AttackCategory.PROBE: "attempted-recon",
    AttackCategory.R2L: "attempted-user",
    AttackCategory.U2R: "attempted-admin",
}

RULE_RE = re.compile(
    r'^alert ip any any -> any any \(msg:"(?P<category>[A-Za-z0-9]+)\|(?P<items>[^|"]*)\|conf=(?P<conf>\d\.\d{4})"; '
    r"classtype:(?P<classtype>[a-z-]+); sid:(?P<sid>\d+); rev:(?P<rev>\d+);\)$"
)
UNSAFE_VALUE_RE = re.compile(r"[\s|\",;()\[\]]")
PROVENANCE_RE = re.compile(r"^# provenance sid=(?P<sid>\d+) support=(?P<support>\S+) confidence=(?P<confidence>\S+)$")
HEADER = "# snortmine ruleset"


@dataclass(frozen=True)
class Predicate:
    feature: str
    index: int
    op: str
    value: str = None
    lo: float = None
    hi: float = None

    def __post_init__(self):
        if self.op == "in_range":
            if not self.lo < self.hi:
                raise ValueError(f"{self.feature}: range needs lo < hi")
        elif self.op == "equals":
            if not self.value or UNSAFE_VALUE_RE.search(self.value):
                raise ValueError(f"{self.feature}: value {self.value!r} cannot be written into a rule")
        else:
            raise ValueError(f"Unknown predicate op: {self.op}")

    def holds(self, value):
        if self.op == "equals":
            return format_value(value) == self.value
        return self.lo <= value < self.hi

    def mask(self, column):
        if self.op == "equals":
            return np.array([format_value(v) == self.value for v in column], dtype=bool)
        return (column >= self.lo) & (column < self.hi)

    @property
    def item(self):
        if self.op == "equals":
            return f"{self.feature}={self.value}"
        return bucket_item(self.feature, self.lo, self.hi)


def predicate_from_item(token, schema):
    kind = parse_item(token)
    if kind[0] == "label":
        raise ValueError(f"label item in a signature antecedent: {token}")
    feature = kind[1]
    index = schema.index(feature)
    if kind[0] == "bucket":
        if schema.features[index].kind != CONTINUOUS:
            raise ValueError(f"range item on non-continuous feature: {token}")
        return Predicate(feature, index, "in_range", lo=kind[2], hi=kind[3])
    if schema.features[index].kind == CONTINUOUS:
        raise ValueError(f"equality item on continuous feature: {token}")
    return Predicate(feature, index, "equals", value=kind[2])


@dataclass(frozen=True)
class SignatureRule:
    sid: int
    predicates: tuple
    category: AttackCategory
    support: float
    confidence: float
    rev: int = 1
    msg: str = field(init=False)

    def __post_init__(self):
        if self.sid < BASE_SID:
            raise ValueError(f"sid must be >= {BASE_SID}")
        if not self.predicates:
            raise ValueError(f"sid {self.sid}: a signature needs at least one predicate")
        features = [p.feature for p in self.predicates]
        if len(set(features)) != len(features):
            raise ValueError(f"sid {self.sid}: predicates must reference distinct features")
        if not self.category.is_attack:
            raise ValueError(f"sid {self.sid}: a signature category cannot be Normal")
        if self.rev < 1:
            raise ValueError("rev must be >= 1")
        if not 0.0 <= self.confidence <= 1.0 or self.support < 0.0:
            raise ValueError(f"sid {self.sid}: support must be >= 0 and confidence in [0, 1]")
        # msg is derived from the other fields, never passed in
        object.__setattr__(self, "msg", rule_msg(self.category, self.items, self.confidence))

    def matches(self, record):
        return all(p.holds(record.values[p.index]) for p in self.predicates)

    @property
    def items(self):
        return [p.item for p in self.predicates]


def rule_msg(category, items, confidence):
    return f"{category.value}|{join_items(items)}|conf={confidence:.4f}"


@dataclass(frozen=True)
class RuleSet:
    rules: tuple
    fingerprint: str = None
    discretization: Discretization = None

    def __post_init__(self):
        sids = [r.sid for r in self.rules]
        if len(set(sids)) != len(sids):
            raise ValueError("duplicate sid in ruleset")

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    @cached_property
    def ordered(self):
        # highest confidence first, then lowest sid
        return tuple(sorted(self.rules, key=lambda r: (-r.confidence, r.sid)))

    def validate(self, schema):
        if self.fingerprint is not None and self.fingerprint != schema.fingerprint():
            raise ValueError("ruleset was compiled for a different schema")
        for r in self.rules:
            for p in r.predicates:
                if schema.names[p.index] != p.feature:
                    raise ValueError(f"sid {r.sid}: {p.feature} is not at position {p.index}")


@dataclass(frozen=True)
class Verdict:
    category: AttackCategory
    rule: SignatureRule = field(default=None)

    @property
    def matched(self):
        return self.rule is not None

    @property
    def sid(self):
        return self.rule.sid if self.rule is not None else None


NO_MATCH = Verdict(AttackCategory.NORMAL)


def _consequent_category(consequent, taxonomy):
    if len(consequent) != 1:
        raise CompileError(f"consequent must be a single label item: {consequent}")
    kind = parse_item(consequent[0])
    if kind[0] != "label":
        raise CompileError(f"consequent is not a label item: {consequent[0]}")
    try:
        return AttackCategory.parse(kind[1])
    except ValueError:
        return taxonomy.map_label_to_category(kind[1])


class SignatureCompiler(Subclass):
    """
    Turns label-consequent association rules into signature rules
        - discretization (Discretization): the cuts used when mining
        - base_sid (int): sid of the first compiled rule
        - schema (FeatureSchema): feature positions for the predicates
        - taxonomy (Taxonomy): maps attack-name consequents to categories
    Rules predicting Normal are skipped; they are not attack signatures.
    """

    def __init__(self, discretization, base_sid=BASE_SID, schema=None, taxonomy=None, verbose=0):
        super().__init__(verbose=verbose)
        self.discretization = discretization
        self.base_sid = base_sid
        self.schema = schema or FeatureSchema.kdd99()
        self.taxonomy = taxonomy or default_taxonomy()
        self.skipped = 0

    def _predicate(self, token):
        try:
            predicate = predicate_from_item(token, self.schema)
        except (KeyError, ValueError) as e:
            raise CompileError(f"cannot compile item {token!r}: {e}") from None
        if predicate.op == "in_range" and self.discretization is not None:
            if (predicate.lo, predicate.hi) not in self.discretization.buckets(predicate.feature):
                raise CompileError(f"{token} is not a bucket of the mining cuts")
        return predicate

    def compile(self, rules):
        compiled = []
        self.skipped = 0
        for rule in rules:
            category = _consequent_category(rule.consequent, self.taxonomy)
            if not category.is_attack:
                self.skipped += 1
                continue
            predicates = tuple(self._predicate(token) for token in rule.antecedent)
            if not predicates:
                raise CompileError(f"rule {rule.consequent} has an empty antecedent")
            try:
                compiled.append(
                    SignatureRule(
                        sid=self.base_sid + len(compiled),
                        predicates=predicates,
                        category=category,
                        support=rule.support,
                        confidence=rule.confidence,
                    )
                )
            except ValueError as e:
                raise CompileError(str(e)) from None
        self.vprint(f"Compiled {len(compiled)} signatures, skipped {self.skipped} normal-traffic rules")
        return RuleSet(tuple(compiled), self.schema.fingerprint(), self.discretization)


def compile_rules(rules, cuts, base_sid=BASE_SID, schema=None, taxonomy=None):
    return SignatureCompiler(cuts, base_sid=base_sid, schema=schema, taxonomy=taxonomy).compile(rules)


def snort_line(rule):
    return (
        f'alert ip any any -> any any (msg:"{rule.msg}"; '
        f"classtype:{CLASSTYPES[rule.category]}; sid:{rule.sid}; rev:{rule.rev};)"
    )


def export_snort(rs, sink):
    """
    Writes the ruleset as Snort rules. The comment header records the schema
    fingerprint, the cuts and each rule's full-precision support/confidence.
    """
    lines = [HEADER, f"# schema: {rs.fingerprint or '-'}"]
    if rs.discretization is not None:
        lines.append("# cuts: " + json.dumps(rs.discretization.to_dict(), sort_keys=True, separators=(",", ":")))
    for r in rs.rules:
        lines.append(f"# provenance sid={r.sid} support={r.support!r} confidence={r.confidence!r}")
    lines.extend(snort_line(r) for r in rs.rules)
    text = "\n".join(lines) + "\n"
    with open_text(sink, "w") as f:
        f.write(text)
    return text


def parse_snort(source, schema=None):
    """
    Reads a rule file written by export_snort back into a RuleSet.
    """
    schema = schema or FeatureSchema.kdd99()
    classtypes = {v: k for k, v in CLASSTYPES.items()}
    fingerprint, discretization = None, None
    provenance, rules, sids = {}, [], set()
    with open_text(source) as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# schema: "):
                    value = line[len("# schema: "):]
                    fingerprint = None if value == "-" else value
                elif line.startswith("# cuts: "):
                    try:
                        discretization = Discretization.from_dict(json.loads(line[len("# cuts: "):]))
                    except ValueError as e:
                        raise ParseError(f"bad cuts header: {e}", line=number) from None
                else:
                    m = PROVENANCE_RE.match(line)
                    if m:
                        provenance[int(m.group("sid"))] = (float(m.group("support")), float(m.group("confidence")))
                continue
            m = RULE_RE.match(line)
            if not m:
                raise ParseError("line is not a rule in the exported grammar", line=number)
            sid = int(m.group("sid"))
            if sid in sids:
                raise ParseError(f"duplicate sid {sid}", line=number)
            sids.add(sid)
            try:
                category = AttackCategory.parse(m.group("category"))
                if classtypes.get(m.group("classtype")) is not category:
                    raise ValueError(f"classtype {m.group('classtype')} does not match {category.value}")
                predicates = tuple(predicate_from_item(t, schema) for t in split_items(m.group("items")))
                support, confidence = provenance.get(sid, (0.0, float(m.group("conf"))))
                rule = SignatureRule(sid, predicates, category, support, confidence, int(m.group("rev")))
                if snort_line(rule) != line:
                    raise ValueError("rule line is not in canonical form")
                rules.append(rule)
            except (KeyError, ValueError) as e:
                raise ParseError(str(e), line=number) from None
    return RuleSet(tuple(rules), fingerprint, discretization)


def match(rs, record):
    """
    The highest-confidence rule (lowest sid on ties) whose predicates all hold, or NO_MATCH.
    """
    for rule in rs.ordered:
        if rule.matches(record):
            return Verdict(rule.category, rule)
    return NO_MATCH


def detect(rs, dataset):
    """
    match() over every record of a Dataset, evaluated column-wise.
    """
    n = len(dataset)
    verdicts = [NO_MATCH] * n
    if not n or not len(rs):
        return verdicts
    columns = dataset.columns()
    pending = np.ones(n, dtype=bool)
    for rule in rs.ordered:
        hit = pending.copy()
        for p in rule.predicates:
            if not hit.any():
                break
            rows = np.flatnonzero(hit)
            hit[rows] = p.mask(columns[p.index][rows])
        for i in np.flatnonzero(hit):
            verdicts[i] = Verdict(rule.category, rule)
        pending &= ~hit
        if not pending.any():
            break
    return verdicts


def write_verdicts(verdicts, sink):
    """
    One line per record: <record index><TAB><verdict category><TAB><sid or ->
    """
    with open_text(sink, "w") as f:
        for i, v in enumerate(verdicts):
            f.write(f"{i}\t{v.category.value}\t{v.sid if v.matched else '-'}\n")
