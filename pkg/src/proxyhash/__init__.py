"""Cross-modal hashing with learned proxy codes and a margin-dynamic-softmax loss."""

from .codespace import (
    BinaryCode,
    PackedCodes,
    ProxyCodebook,
    hamming_distance,
    hamming_matrix,
    inner_product,
    load_codes,
    save_codes,
    sgn,
    surrogate_proxy,
)
from .data_io import PairedDataset, SplitSpec, load_dataset, save_dataset, split, synth_generate
from .errors import (
    ConfigError,
    DimensionError,
    FormatError,
    InvalidInputError,
    InvalidLabelError,
    ProxyHashError,
    TrainingError,
)
from .network import Mlp, backward, build_mlp, forward, sgd_step, xavier_init
from .objectives import (
    Hyperparams,
    LabelSets,
    consensus_code,
    dual_form_oracle,
    inter_modal_loss,
    margin_dynamic_softmax,
    margin_satisfied,
    pairwise_loss,
    phnet_loss,
    smoothed_distribution,
    total_objective,
)
from .retrieval import RetrievalSet, average_precision, mean_average_precision, pr_curve, precision_at_n, rank
from .trainer import SgdConfig, TrainedModel, encode, fit, train_modalities, train_phnet

__version__ = "0.1.0"
