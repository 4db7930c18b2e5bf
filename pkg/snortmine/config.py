"""
Pipeline configuration: one [pipeline] section in an INI file, every key
overridable from the command line.
"""
from dataclasses import dataclass, fields, replace
import os

from snortmine.c45 import TreeParams
from snortmine.apriori import MiningParams
from snortmine.dataset import TAXONOMY_PATH, AttackCategory, Taxonomy
from snortmine.errors import ConfigError
from snortmine.evasion import MutationBudget
from snortmine.signature import BASE_SID
from snortmine.subclass import Subclass

SECTION = "pipeline"
TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}
NONE_WORDS = {"", "none"}


@dataclass(frozen=True)
class PipelineConfig:
    data_path: str = None
    test_path: str = None
    taxonomy_path: str = TAXONOMY_PATH
    baselines_path: str = None
    strict: bool = False
    strict_labels: bool = False
    fallback_category: str = "DoS"
    train_fraction: float = 0.7
    seed: int = 0
    rounds: int = 10
    max_depth: int = 2
    min_samples_per_leaf: int = 1
    min_gain: float = 0.0
    category_max_depth: int = None
    bins: int = 4
    window: int = 1
    label_items: str = "label"
    min_sup: float = 0.01
    min_conf: float = 0.8
    consequent_filter: bool = True
    max_itemset_size: int = None
    mine_all_records: bool = False
    base_sid: int = BASE_SID
    max_features_changed: int = 1
    numeric_step: float = 1.0
    categorical_swaps: bool = True
    ablation_fraction: float = 0.5
    out: str = "snortmine-out"
    workers: int = 1

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def kind(cls, key):
        return {f.name: f.type.__name__ for f in fields(cls)}[key]

    @classmethod
    def convert(cls, key, text):
        """
        Converts the text form of a key to its typed value
            - key (string): a PipelineConfig field
            - text (string): the value as written in the file or on the command line
        """
        if not isinstance(text, str):
            return text
        kind = cls.kind(key)
        value = text.strip()
        if value.lower() in NONE_WORDS and kind in ("str", "int") and key not in ("out", "label_items"):
            return None
        try:
            if kind == "bool":
                if value.lower() in TRUE_WORDS:
                    return True
                if value.lower() in FALSE_WORDS:
                    return False
                raise ValueError(value)
            if kind == "int":
                return int(value)
            if kind == "float":
                return float(value)
        except ValueError:
            raise ConfigError(f"{key}: cannot read {text!r} as {kind}") from None
        return value

    @classmethod
    def load(cls, path=None, overrides=None):
        """
        Reads the [pipeline] section of a config file, then applies overrides
            - path (string): INI file, optional
            - overrides (dict): key -> value, e.g. from command-line flags
        """
        if path is not None and not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        reader = Subclass(config_path=path)
        if reader.parser.has_section(SECTION):
            unknown = set(reader.parser.options(SECTION)) - set(cls.keys())
            if unknown:
                raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values = {}
        for key in cls.keys():
            text = reader.get_parameter_value(f"/{SECTION}/{key}")
            if text is not None:
                values[key] = cls.convert(key, text)
        for key, value in (overrides or {}).items():
            if key not in cls.keys():
                raise ConfigError(f"unknown config key: {key}")
            values[key] = cls.convert(key, value)
        return cls(**values)

    def with_overrides(self, **values):
        return replace(self, **{k: self.convert(k, v) for k, v in values.items()})

    def _check(self, build, what):
        try:
            return build()
        except ValueError as e:
            raise ConfigError(f"{what}: {e}") from None

    def validate(self, need_data=False):
        """
        Checks every referenced path and every numeric range. Runs before any
        output is written.
        """
        if need_data and not self.data_path:
            raise ConfigError("data_path is required")
        for key in ("data_path", "test_path", "taxonomy_path", "baselines_path"):
            path = getattr(self, key)
            if path is not None and not os.path.isfile(path):
                raise ConfigError(f"{key} not found: {path}")
        if os.path.exists(self.out) and not os.path.isdir(self.out):
            raise ConfigError(f"out is not a directory: {self.out}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.label_items not in ("label", "category"):
            raise ConfigError("label_items must be 'label' or 'category'")
        if self.min_sup <= 0 or (self.min_sup >= 1 and not float(self.min_sup).is_integer()):
            raise ConfigError("min_sup is a fraction in (0, 1) or a whole count >= 1")
        if not 0 <= self.ablation_fraction <= 1:
            raise ConfigError("ablation_fraction must be in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.base_sid < BASE_SID:
            raise ConfigError(f"base_sid must be >= {BASE_SID}")
        if not self._check(lambda: AttackCategory.parse(self.fallback_category), "fallback_category").is_attack:
            raise ConfigError("fallback_category must be an attack category")
        self.tree_params()
        self.category_params()
        self.mining_params(1)
        self.mutation_budget()
        return self

    def tree_params(self):
        return self._check(
            lambda: TreeParams(self.max_depth, self.min_samples_per_leaf, self.min_gain), "weak tree"
        )

    def category_params(self):
        return self._check(
            lambda: TreeParams(self.category_max_depth, self.min_samples_per_leaf, self.min_gain), "category tree"
        )

    def mining_params(self, db_size):
        """
        MiningParams for a transaction database of db_size; a min_sup below 1 is a fraction.
        """
        kwargs = dict(
            min_conf=self.min_conf, consequent_filter=self.consequent_filter, max_size=self.max_itemset_size
        )
        if self.min_sup < 1:
            return self._check(lambda: MiningParams.from_fraction(self.min_sup, db_size, **kwargs), "mining")
        return self._check(lambda: MiningParams(int(self.min_sup), **kwargs), "mining")

    def mutation_budget(self):
        return self._check(
            lambda: MutationBudget(
                self.max_features_changed, self.numeric_step, self.categorical_swaps, self.seed
            ),
            "mutation budget",
        )

    def taxonomy(self):
        return Taxonomy(
            self.taxonomy_path or TAXONOMY_PATH,
            strict=self.strict_labels,
            fallback=AttackCategory.parse(self.fallback_category),
        )
