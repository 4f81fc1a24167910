"""Gaussian user/item embeddings trained on basket co-purchase triples.

The pipeline: parse and filter an order log (``corpus``), sample positive
and corrupted triples (``sampler``), train amortized Gaussian encoders on
the triple ELBO or its deterministic point-embedding reduction (``model``,
``trainer``), rank items per user (``recommender``), and score rankings
against held-out baskets (``evaluator``). ``synthgen`` plants recoverable
cluster structure for end-to-end checks, and ``cli`` wires everything into
a command-line pipeline.
"""

from .corpus import (
    ColumnSpec,
    IdMaps,
    InteractionRecord,
    Interactions,
    SplitDataset,
    filter_dataset,
    parse_interactions,
    reindex,
    temporal_split,
    write_interactions,
)
from .errors import (
    BasketVecError,
    CorpusError,
    DegenerateComparisonError,
    EvaluationError,
    NoRelevantItems,
    ParseError,
    SamplingError,
    TrainingError,
)
from .evaluator import (
    MetricsReport,
    UserMetrics,
    evaluate,
    ndcg_at_k,
    paired_t_test,
    recall_at_k,
    relevant_items,
)
from .model import (
    DETERMINISTIC,
    VARIATIONAL,
    EncoderNet,
    EncoderParams,
    GaussianEmbeddings,
    PriorConfig,
    batch_entities,
    elbo,
    encode,
    kl_to_prior,
    log_likelihood,
    log_sigmoid,
    reparameterize,
    triple_log_sigma,
    triple_logits,
)
from .recommender import (
    RankedResult,
    next_basket_scores,
    point_embeddings,
    recommend,
    top_k,
    within_basket_scores,
    write_rankings,
)
from .sampler import Triple, TripleBatch, sample_negatives, sample_triples
from .synthgen import SynthConfig, generate, item_clusters, user_clusters
from .trainer import (
    EpochStats,
    GradientSet,
    OptimizerState,
    TrainConfig,
    TrainReport,
    gradients,
    init_optimizer,
    init_params,
    params_digest,
    rmsprop_step,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BasketVecError",
    "ColumnSpec",
    "CorpusError",
    "DETERMINISTIC",
    "DegenerateComparisonError",
    "EncoderNet",
    "EncoderParams",
    "EpochStats",
    "EvaluationError",
    "GaussianEmbeddings",
    "GradientSet",
    "IdMaps",
    "InteractionRecord",
    "Interactions",
    "MetricsReport",
    "NoRelevantItems",
    "OptimizerState",
    "ParseError",
    "PriorConfig",
    "RankedResult",
    "SamplingError",
    "SplitDataset",
    "SynthConfig",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "Triple",
    "TripleBatch",
    "UserMetrics",
    "VARIATIONAL",
    "batch_entities",
    "elbo",
    "encode",
    "evaluate",
    "filter_dataset",
    "generate",
    "gradients",
    "init_optimizer",
    "init_params",
    "item_clusters",
    "kl_to_prior",
    "log_likelihood",
    "log_sigmoid",
    "ndcg_at_k",
    "next_basket_scores",
    "paired_t_test",
    "params_digest",
    "parse_interactions",
    "point_embeddings",
    "recall_at_k",
    "recommend",
    "reindex",
    "relevant_items",
    "reparameterize",
    "rmsprop_step",
    "sample_negatives",
    "sample_triples",
    "temporal_split",
    "top_k",
    "train",
    "triple_log_sigma",
    "triple_logits",
    "user_clusters",
    "within_basket_scores",
    "write_interactions",
    "write_rankings",
]
