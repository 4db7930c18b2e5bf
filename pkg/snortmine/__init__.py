from snortmine.dataset import Dataset, Discretization, FeatureSchema, KDDReader, Taxonomy, TransactionDb
from snortmine.c45 import C45, DecisionTree, TreeParams
from snortmine.adaboost import AdaBoost, CategoryClassifier, StrongClassifier
from snortmine.apriori import Apriori, AssociationRule, FrequentItemsets, MiningParams
from snortmine.signature import RuleSet, SignatureCompiler, SignatureRule
from snortmine.evasion import ClassRanges, EvasionCampaign, EvasionReport, MutationBudget
from snortmine.evaluation import ConfusionMatrix, EvaluationReport
from snortmine.config import PipelineConfig
from snortmine.cli import Pipeline
