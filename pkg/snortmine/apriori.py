"""
Level-wise frequent itemset mining and association rules whose consequent is an
attack label.
"""
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from math import ceil

from snortmine.dataset import LABEL_PREFIX, join_items, split_items
from snortmine.errors import ParseError
from snortmine.subclass import Subclass, open_text


@dataclass(frozen=True)
class MiningParams:
    min_sup: int
    min_conf: float = 0.8
    consequent_filter: bool = True
    max_size: int = None

    def __post_init__(self):
        if int(self.min_sup) != self.min_sup or self.min_sup < 1:
            raise ValueError("min_sup is an absolute count >= 1")
        if not 0 < self.min_conf <= 1:
            raise ValueError("min_conf must be in (0, 1]")
        if self.max_size is not None and self.max_size < 1:
            raise ValueError("max_size must be >= 1")

    @classmethod
    def from_fraction(cls, fraction, db_size, **kwargs):
        """
        Converts a fractional support to an absolute count by ceiling.
        """
        if not 0 < fraction <= 1:
            raise ValueError("support fraction must be in (0, 1]")
        return cls(min_sup=max(1, ceil(fraction * db_size)), **kwargs)


def itemset(items):
    return tuple(sorted(set(items)))


def is_label(item):
    return item.startswith(LABEL_PREFIX)


@dataclass(frozen=True)
class AssociationRule:
    antecedent: tuple
    consequent: tuple
    support: float
    confidence: float

    def __post_init__(self):
        if set(self.antecedent) & set(self.consequent):
            raise ValueError("antecedent and consequent must be disjoint")


class _TrieNode(object):
    __slots__ = ("children", "candidate")

    def __init__(self):
        self.children = {}
        self.candidate = None


class CandidateTrie(object):
    """
    Prefix tree over sorted candidate itemsets of one size k.
    """

    def __init__(self, candidates):
        self.root = _TrieNode()
        self.k = 0
        for c in candidates:
            self.k = len(c)
            node = self.root
            for item in c:
                node = node.children.setdefault(item, _TrieNode())
            node.candidate = c

    def contained_in(self, transaction):
        found = []
        n = len(transaction)

        def walk(node, start, depth):
            if node.candidate is not None:
                found.append(node.candidate)
                return
            # not enough items left to reach depth k
            for i in range(start, n - (self.k - depth) + 1):
                child = node.children.get(transaction[i])
                if child is not None:
                    walk(child, i + 1, depth + 1)

        if self.k:
            walk(self.root, 0, 0)
        return found


def subset(candidates, t):
    """
    Candidates contained in transaction t (both sorted).
    """
    return CandidateTrie(candidates).contained_in(t)


def apriori_gen(L_prev):
    """
    Candidate k-itemsets from the frequent (k-1)-itemsets
    JOIN: itemsets sharing their first k-2 items merge into one k-itemset.
    PRUNE: a candidate with any (k-1)-subset outside L_prev is dropped.
    """
    L_prev = sorted(set(tuple(s) for s in L_prev))
    if not L_prev:
        return []
    frequent = set(L_prev)
    candidates = []
    for i, a in enumerate(L_prev):
        for b in L_prev[i + 1:]:
            if a[:-1] != b[:-1]:
                break
            c = a + (b[-1],)
            if all(s in frequent for s in combinations(c, len(c) - 1)):
                candidates.append(c)
    return candidates


def _count_chunk(candidates, transactions):
    trie = CandidateTrie(candidates)
    counts = Counter()
    for t in transactions:
        counts.update(trie.contained_in(t))
    return counts


@dataclass(frozen=True)
class FrequentItemsets:
    levels: dict
    db_size: int
    min_sup: int

    def __post_init__(self):
        self.validate()

    def validate(self):
        """
        Every stored count meets min_sup and every (k-1)-subset of a stored k-itemset is stored.
        """
        for k, level in self.levels.items():
            for items, count in level:
                if count < self.min_sup:
                    raise ValueError(f"{items} has count {count} < min_sup {self.min_sup}")
                if len(items) != k:
                    raise ValueError(f"{items} stored at level {k}")
        counts = self.counts
        for k, level in self.levels.items():
            if k < 2:
                continue
            for items, count in level:
                for s in combinations(items, k - 1):
                    if s not in counts:
                        raise ValueError(f"anti-monotonicity violated: {s} missing for {items}")
                    if counts[s] < count:
                        raise ValueError(f"anti-monotonicity violated: {s} rarer than {items}")

    @cached_property
    def counts(self):
        return {items: count for level in self.levels.values() for items, count in level}

    def support(self, items):
        return self.counts[tuple(items)] / self.db_size

    def __len__(self):
        return sum(len(level) for level in self.levels.values())

    def write(self, sink):
        """
        One line per itemset: k<TAB>item,item,...<TAB>count
        """
        with open_text(sink, "w") as f:
            f.write(f"# db_size={self.db_size} min_sup={self.min_sup}\n")
            for k in sorted(self.levels):
                for items, count in self.levels[k]:
                    f.write(f"{k}\t{join_items(items)}\t{count}\n")

    @classmethod
    def read(cls, source):
        levels, db_size, min_sup = {}, 0, 1
        with open_text(source) as f:
            for number, line in enumerate(f, start=1):
                line = line.rstrip("\r\n")
                if line.startswith("#"):
                    meta = dict(part.split("=", 1) for part in line[1:].split())
                    db_size, min_sup = int(meta["db_size"]), int(meta["min_sup"])
                    continue
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ParseError("expected k<TAB>items<TAB>count", line=number)
                try:
                    k, items, count = int(parts[0]), tuple(split_items(parts[1])), int(parts[2])
                except ValueError as e:
                    raise ParseError(str(e), line=number) from None
                levels.setdefault(k, []).append((items, count))
        try:
            return cls(levels, db_size, min_sup)
        except ValueError as e:
            raise ParseError(f"invalid itemset dump: {e}") from None


class Apriori(Subclass):
    """
    Frequent itemset miner
        - params (MiningParams): support/confidence thresholds and the label consequent filter
        - workers (int): processes used to count candidate support, merged in a fixed order
    """

    def __init__(self, params, workers=1, verbose=0):
        super().__init__(verbose=verbose)
        self.params = params
        self.workers = workers

    def _count(self, candidates, transactions):
        if self.workers <= 1 or len(transactions) < 2 * self.workers:
            return _count_chunk(candidates, transactions)
        size = ceil(len(transactions) / self.workers)
        chunks = [transactions[i:i + size] for i in range(0, len(transactions), size)]
        total = Counter()
        with ProcessPoolExecutor(max_workers=self.workers) as executor:
            for counts in executor.map(_count_chunk, [candidates] * len(chunks), chunks):
                total.update(counts)
        return total

    def mine(self, db):
        """
        Returns every itemset whose count reaches min_sup, level by level.
        """
        transactions = list(db.transactions)
        min_sup = self.params.min_sup
        singles = Counter(item for t in transactions for item in t)
        level = sorted(((item,), n) for item, n in singles.items() if n >= min_sup)
        levels = {}
        k = 1
        while level:
            levels[k] = level
            self.vprint(f"L{k}: {len(level)} frequent itemsets")
            if self.params.max_size is not None and k >= self.params.max_size:
                break
            candidates = apriori_gen(items for items, _ in level)
            if not candidates:
                break
            counts = self._count(candidates, transactions)
            k += 1
            level = [(c, counts[c]) for c in candidates if counts[c] >= min_sup]
        return FrequentItemsets(levels, len(transactions), min_sup)

    def generate_rules(self, freq):
        """
        Rules with confidence >= min_conf. With the consequent filter on, only rules
        "feature items => one label item" are kept.
        """
        counts = freq.counts
        rules = []
        for items, count in counts.items():
            if len(items) < 2:
                continue
            if self.params.consequent_filter:
                labels = [i for i in items if is_label(i)]
                if len(labels) != 1:
                    continue
                splits = [(tuple(i for i in items if i != labels[0]), (labels[0],))]
            else:
                splits = []
                for r in range(1, len(items)):
                    for consequent in combinations(items, r):
                        antecedent = tuple(i for i in items if i not in consequent)
                        splits.append((antecedent, consequent))
            for antecedent, consequent in splits:
                confidence = count / counts[antecedent]
                if confidence >= self.params.min_conf:
                    rules.append(AssociationRule(antecedent, consequent, count / freq.db_size, confidence))
        rules.sort(key=lambda r: (-r.confidence, -r.support, r.antecedent, r.consequent))
        self.vprint(f"Generated {len(rules)} rules")
        return rules


def apriori(db, params, workers=1):
    return Apriori(params, workers=workers).mine(db)


def generate_rules(freq, params):
    return Apriori(params).generate_rules(freq)


def write_rules(rules, sink):
    """
    One line per rule: antecedent items<TAB>consequent items<TAB>support<TAB>confidence
    """
    with open_text(sink, "w") as f:
        for r in rules:
            f.write(f"{join_items(r.antecedent)}\t{join_items(r.consequent)}\t{r.support!r}\t{r.confidence!r}\n")


def read_rules(source):
    rules = []
    with open_text(source) as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError("expected antecedent<TAB>consequent<TAB>support<TAB>confidence", line=number)
            try:
                rules.append(
                    AssociationRule(
                        tuple(split_items(parts[0])), tuple(split_items(parts[1])),
                        float(parts[2]), float(parts[3]),
                    )
                )
            except ValueError as e:
                raise ParseError(str(e), line=number) from None
    return rules
