"""Sequence alignment and temporal segmentation via fused
Gromov-Wasserstein optimal transport with structural and temporal priors.
"""

from .align import (
    AlignProblem,
    AlignResult,
    align_pair,
    alignment_loss,
    alignment_loss_grad,
    augmented_kot_cost,
    compute_pseudo_labels,
    normalized_similarities,
)
from .encoder import (
    AdamState,
    EncoderModel,
    backward,
    encode,
    init_encoder,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)
from .errors import ConfigError, DataError, DimensionError, NumericalError
from .evaluate import EvalConfig, evaluate
from .metrics import (
    MatchingScope,
    MetricReport,
    frame_retrieval_ap,
    hungarian_match,
    kendall_tau,
    phase_classification,
    phase_progress,
    segmentation_metrics,
)
from .otcore import (
    CostBundle,
    MarginalMode,
    SolveReport,
    SolverConfig,
    entropy,
    fgw_objective,
    gw_gradient,
    gw_objective,
    kot_objective,
    sinkhorn_project,
    solve_fgw,
    unbalanced_scale,
    uniform_histogram,
)
from .priors import (
    BandProfileMatrix,
    Correspondences,
    PriorConfig,
    assign_with_virtual,
    augment_virtual,
    strip_virtual,
    structural_priors,
    temporal_prior,
    visual_cost,
)
from .segment import (
    ActionCentroids,
    JointWeights,
    SegConfig,
    decode_segmentation,
    init_centroids_kmeans,
    joint_loss,
    seg_loss,
    seg_pseudo_labels,
)
from .synth import BACKGROUND, GenParams, SynthDataset, generate, load_dataset, save_dataset
from .training import TrainConfig, TrainMode, train

__version__ = "0.1.0"
