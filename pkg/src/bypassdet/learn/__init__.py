"""Classifiers, clustering baseline, splitting and evaluation."""

from .kmeans import KMeansResult, kmeans
from .metrics import EvalReport, evaluate
from .mlp import MlpModel, MlpTrainingError, train_mlp
from .models import MODEL_KINDS, ColumnMismatchError, Pipeline, fit_pipeline
from .split import Split, SplitError, split
from .svm import SvmModel, train_svm
from .tree import ForestModel, TreeModel, gini, train_forest, train_tree

__all__ = [
    "ColumnMismatchError", "EvalReport", "ForestModel", "KMeansResult", "MODEL_KINDS", "MlpModel",
    "MlpTrainingError", "Pipeline", "Split", "SplitError", "SvmModel", "TreeModel", "evaluate",
    "fit_pipeline", "gini", "kmeans", "split", "train_forest", "train_mlp", "train_svm", "train_tree",
]
