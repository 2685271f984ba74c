"""Hypergraph neural network engine for relational fake news detection."""

from .analysis import (
    CredibilityRecord,
    SummaryRow,
    ablate_hyperedge_types,
    attention_user_sampling,
    baseline_clique_gnn,
    credibility_table,
    evaluate,
    sweep_label_fraction,
)
from .attention import (
    AttentionLayerParams,
    AttentionSnapshot,
    ModelParams,
    forward,
    hyperedge_step,
    init_model_params,
    node_step,
    predict,
)
from .data import (
    Dataset,
    NewsItem,
    PropagationTree,
    Splits,
    SyntheticConfig,
    downsample_train_labels,
    generate_synthetic,
    load_dataset,
    load_dataset_dir,
    make_splits,
    write_dataset,
)
from .encoder import TreeEncoderParams, encode_tree, initial_node_embeddings
from .hypergraph import (
    Hyperedge,
    Hypergraph,
    PlainGraph,
    build_entity_hyperedges,
    build_hypergraph,
    build_time_hyperedges,
    build_user_hyperedges,
    clique_expansion,
    concat_hypergraphs,
    hypergraph_stats,
    load_hypergraph,
    save_hypergraph,
)
from .metrics import Metrics, metrics_from_predictions
from .training import (
    TrainConfig,
    TrainReport,
    backward,
    grad_check,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
