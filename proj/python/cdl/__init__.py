"""Coupled deep learning for cross-modal embeddings."""

from ._core import (
    CdlError,
    ConfigError,
    CoupledHeads,
    Config,
    DataError,
    Dataset,
    IoError,
    Model,
    NumericError,
    diagnose_command,
    eval_command,
    gen_data,
    generate,
    init_heads,
    mine_triplets,
    normalize_rows,
    psd_inv_sqrt,
    psd_sqrt,
    rank1,
    roc,
    score,
    svd,
    trace_norm,
    train,
    train_command,
    triplet_loss,
    variance_analysis,
    variance_curve,
)

NIR = 0
VIS = 1

__all__ = [name for name in dir() if not name.startswith("_")]
