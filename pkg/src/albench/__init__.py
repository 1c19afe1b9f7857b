"""Deterministic active-learning benchmark toolkit.

Implements the MCFPS query strategy (farthest-point seeds, kNN
neighborhoods, MC-Dropout uncertainty) next to random, FPS, and OSAL
baselines over flat embedding pools, with a bit-reproducible experiment
harness.
"""

from .classifier import (
    MlpConfig,
    MlpModel,
    UncertaintyMatrix,
    evaluate_accuracy,
    init_model,
    load_model,
    mc_dropout,
    predict_proba,
    save_model,
    train,
)
from .contrastive import (
    EncoderModel,
    NtXentConfig,
    ViewBatch,
    augment,
    encode,
    make_views,
    nt_xent_grads,
    nt_xent_loss,
    train_encoder,
)
from .dataset import (
    EmbeddingPool,
    PoolPartition,
    SyntheticSpec,
    apply_imbalance,
    gen_synthetic,
    load_pool,
    load_sidecar,
    round_half_up,
    save_pool,
    save_sidecar,
    split_pool,
)
from .errors import CorruptionError, FormatError, ValidationError
from .geometry import (
    Clustering,
    NeighborList,
    choose_k_by_silhouette,
    cosine_sim,
    euclidean,
    farthest_point_sampling,
    kmeans_pp,
    knn,
    silhouette,
)
from .orchestrator import (
    ComparisonResult,
    ExperimentConfig,
    RunRecord,
    RunRow,
    compare,
    probe,
    run_experiment,
)
from .rng import Rng, mix
from .strategies import (
    QueryBatch,
    QueryContext,
    StrategyParams,
    STRATEGIES,
    query_fps,
    query_mcfps,
    query_osal,
    query_random,
    run_strategy,
)

__version__ = "0.1.0"
