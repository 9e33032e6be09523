from fractal_ae._adam import (
    AdamState,
    adam_step,
)
from fractal_ae._checkpoint import (
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from fractal_ae._datasets import (
    Dataset,
    Scaler,
    SplitSpec,
    impute_mean,
    load_csv,
    load_idx,
    normalize_minmax,
    normalize_zscore,
    profile_k,
    split,
    split_holdout,
    synth_blocks,
    write_csv,
)
from fractal_ae._evalkit import (
    LinearDecoder,
    MetricsRow,
    Summary,
    accuracy,
    fit_linear_decoder,
    recon_error,
    subnet_recon_error,
    summarize,
)
from fractal_ae._extra_trees import (
    ExtraTreesModel,
    fit_extra_trees,
    predict,
)
from fractal_ae._hfae import (
    HierarchicalSelection,
    HierarchyParams,
    hfae_gradients,
    hfae_objective,
    hierarchical_masks,
    train_hfae,
)
from fractal_ae._matrix import (
    SeededRng,
    lstsq,
    matmul,
    uniform_init,
    xavier_normal,
)
from fractal_ae._models import (
    EncoderDecoder,
    Gradients,
    Hyperparams,
    Method,
    ObjectiveBreakdown,
    SelectionResult,
    ae_objective,
    fae_gradients,
    fae_objective,
    forward,
    iae_gradients,
    iae_objective,
    project_nonneg,
    reconstruct,
    topk_mask,
)
from fractal_ae._selector import (
    FeatureSelector,
    NotFittedError,
)
from fractal_ae._trainer import (
    TrainReport,
    train_ae,
    train_fae,
    train_iae,
)
from fractal_ae._types import (
    CheckpointFormatError,
    ContractViolationError,
    DataFormatError,
    DivergenceError,
    FractalAEBaseException,
    NumericalError,
)

__all__ = [
    "AdamState",
    "adam_step",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "Dataset",
    "Scaler",
    "SplitSpec",
    "impute_mean",
    "load_csv",
    "load_idx",
    "normalize_minmax",
    "normalize_zscore",
    "profile_k",
    "split",
    "split_holdout",
    "synth_blocks",
    "write_csv",
    "LinearDecoder",
    "MetricsRow",
    "Summary",
    "accuracy",
    "fit_linear_decoder",
    "recon_error",
    "subnet_recon_error",
    "summarize",
    "ExtraTreesModel",
    "fit_extra_trees",
    "predict",
    "HierarchicalSelection",
    "HierarchyParams",
    "hfae_gradients",
    "hfae_objective",
    "hierarchical_masks",
    "train_hfae",
    "SeededRng",
    "lstsq",
    "matmul",
    "uniform_init",
    "xavier_normal",
    "EncoderDecoder",
    "Gradients",
    "Hyperparams",
    "Method",
    "ObjectiveBreakdown",
    "SelectionResult",
    "ae_objective",
    "fae_gradients",
    "fae_objective",
    "forward",
    "iae_gradients",
    "iae_objective",
    "project_nonneg",
    "reconstruct",
    "topk_mask",
    "FeatureSelector",
    "NotFittedError",
    "TrainReport",
    "train_ae",
    "train_fae",
    "train_iae",
    "CheckpointFormatError",
    "ContractViolationError",
    "DataFormatError",
    "DivergenceError",
    "FractalAEBaseException",
    "NumericalError",
]
