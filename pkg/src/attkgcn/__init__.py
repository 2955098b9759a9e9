"""Attention-weighted knowledge-graph convolutional recommender.

Builds item representations by softmax-weighted neighborhood aggregation over
a sampled H-hop receptive field and trains them against implicit feedback
with a pairwise ranking loss. Ships a triple/interaction data pipeline, a
synthetic generator with planted category structure, AUC/F1 evaluation, and
an experiment CLI.
"""

from .errors import ConfigError, DataError, NegativeSamplingError, UndefinedMetricError
from .interactions import Interaction, InteractionSet, load_interactions, sample_negative, split
from .kg import KnowledgeGraph, Triple, load_triples
from .metrics import ScoredLabel, auc, classification_metrics, topk_recommend
from .model import (
    AGGREGATORS,
    AttKGCN,
    HyperParams,
    aggregate,
    attention_logit,
    init_params,
    neighborhood_repr,
    relation_score,
)
from .numerics import (
    ParamStore,
    adam_step,
    finite_diff_grad,
    load_params,
    save_params,
    sigmoid,
    softmax,
    softplus,
)
from .synthgen import SynthConfig, generate, paper_scale_preset
from .training import RunReport, evaluate_split, pairwise_loss, train, train_epoch

__version__ = "0.1.0"

__all__ = [
    "AGGREGATORS",
    "AttKGCN",
    "ConfigError",
    "DataError",
    "HyperParams",
    "Interaction",
    "InteractionSet",
    "KnowledgeGraph",
    "NegativeSamplingError",
    "ParamStore",
    "RunReport",
    "ScoredLabel",
    "SynthConfig",
    "Triple",
    "UndefinedMetricError",
    "adam_step",
    "aggregate",
    "attention_logit",
    "auc",
    "classification_metrics",
    "evaluate_split",
    "finite_diff_grad",
    "generate",
    "init_params",
    "load_interactions",
    "load_params",
    "load_triples",
    "neighborhood_repr",
    "paper_scale_preset",
    "pairwise_loss",
    "relation_score",
    "sample_negative",
    "save_params",
    "sigmoid",
    "softmax",
    "softplus",
    "split",
    "topk_recommend",
    "train",
    "train_epoch",
    "__version__",
]
