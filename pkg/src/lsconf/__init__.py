"""Latent space configurations: train encoders against predefined class centers."""

from __future__ import annotations

from .core import (
    LossValue,
    assign_labels_cos,
    assign_labels_dist,
    combined_loss,
    combined_loss_grad,
    cos_dist,
    cos_loss,
    cos_loss_grad,
    cos_sim,
    dist_loss,
    dist_loss_grad,
    fd,
    gather_centers,
)
from .data import LabeledDataset, Split, gen_blobs, load_csv, save_csv, unique_label_expand
from .errors import (
    CapacityError,
    CenterDriftError,
    ConfigurationError,
    DivergenceError,
    LSCError,
    ParseError,
)
from .fastassign import AssignmentIndex, Mode, assign_fast, assign_topk, build_index
from .report import ParamReport, report_params
from .rootsys import (
    CenterConfiguration,
    CenterMatrix,
    Family,
    Projection,
    build_configuration,
    capacity,
    choose_centers,
    gen_an_roots,
    gen_rotation_2d,
    interpolate,
    min_n_dim,
    positive_subset,
    project_drop,
    project_isometric,
    shuffle,
)
from .trainer import (
    EncoderParams,
    Loss,
    TrainConfig,
    TrainState,
    continual_extend,
    distill,
    eval_accuracy,
    extract_mean_embeddings,
    init_encoder,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
