"""Academic-risk prediction from student records and learning interaction networks.

Pipeline: schema-validated cohorts, network centrality features, boosted
trees, Shapley-value attributions, evaluation, and plot data.  The compute
kernels come from a compiled extension when it is built and from pure
Python otherwise; ``acadrisk.BACKEND`` names the one in use.
"""
__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .cohort import Cohort, class_balance, ingest_csv, load_cohort, save_cohort, write_csv
from .errors import (AcadRiskError, ConvergenceError, DomainError, IngestionError,
                     MalformedTreeError, SchemaError, SingleClassError)
from .evaluation import (EvalReport, RocCurve, auc, classification_metrics, evaluate_protocol,
                         roc_curve, stratified_split)
from .linear import LinearModel, train_logistic
from .network import (InteractionGraph, InteractionLayer, attach_centrality_features,
                      betweenness_centrality, build_layer, centrality_triples,
                      degree_centrality, eigenvector_centrality, synthesize)
from .plots import PlotBundle, dependence_plot_data, summary_plot_data, waterfall_data
from .schema import FeatureSchema, FeatureSpec, default_schema, derive_label, load_schema
from .shapley import (Explanation, GlobalImportance, exact_shapley, explain_rows,
                      global_importance, sampled_shapley, tree_shap)
from .synthetic import GroundTruth, PlantedEffect, SynthSpec, generate, recovery_score
from .trees import TrainConfig, Tree, TreeEnsemble, train_gbdt

__all__ = [
    "BACKEND", "AcadRiskError", "Cohort", "ConvergenceError", "DomainError", "EvalReport",
    "Explanation", "FeatureSchema", "FeatureSpec", "GlobalImportance", "GroundTruth",
    "IngestionError", "InteractionGraph", "InteractionLayer", "LinearModel",
    "MalformedTreeError", "PlantedEffect", "PlotBundle", "RocCurve", "SchemaError",
    "SingleClassError", "SynthSpec", "TrainConfig", "Tree", "TreeEnsemble",
    "attach_centrality_features", "auc", "betweenness_centrality", "build_layer",
    "centrality_triples", "class_balance", "classification_metrics", "default_schema",
    "degree_centrality", "dependence_plot_data", "derive_label", "eigenvector_centrality",
    "evaluate_protocol", "exact_shapley", "explain_rows", "generate", "global_importance",
    "ingest_csv", "load_cohort", "load_schema", "recovery_score", "roc_curve",
    "sampled_shapley", "save_cohort", "stratified_split", "summary_plot_data", "synthesize",
    "train_gbdt", "train_logistic", "tree_shap", "waterfall_data", "write_csv",
]
