"""Polynomial-only graph contrastive pre-training with HE-compatibility analysis."""

from .augment import AugmentConfig, make_views
from .graphdata import (
    Graph,
    GraphError,
    ParseError,
    SparseAdjacency,
    SplitMasks,
    load_canonical,
    load_content_cites,
    make_split,
    normalize_adjacency,
    ring_graph,
    save_canonical,
)
from .hecheck import DepthReport, HEIncompatibleError, analyze, assert_compatible, magnitude_probe
from .model import (
    EncoderParams,
    ModelConfig,
    encode,
    encode_features,
    encoder_tape,
    init_params,
    load_params,
    save_params,
)
from .objectives import LossConfig, grace_loss, poly_loss, record_loss
from .probe import EvalReport, evaluate_pipeline, export_embeddings, linear_probe
from .tape import (
    GradCheckReport,
    Tape,
    TapeError,
    backward,
    check_gradients,
    evaluate,
    forward,
    value_and_grads,
)
from .trainer import (
    AdamState,
    DivergenceError,
    TrainConfig,
    TrainLog,
    adam_step,
    build_loss_tape,
    pretrain,
)

__version__ = "0.1.0"
