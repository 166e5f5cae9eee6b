"""Bag of local convolutional features: indexing, weighting and evaluation."""

from ._blcf import (
    InvertedIndex,
    PcaModel,
    SparseBow,
    Vocabulary,
    assign_map,
    average_precision,
    bms_saliency,
    downsample_saliency,
    encode,
    expand_query,
    fit_pca,
    gaussian_weights,
    l2norm_weights,
    make_bow,
    postprocess,
    postprocess_map,
    read_tensor,
    run_cli,
    train_vocabulary,
    uniform_weights,
    upsample_query,
    whiten,
    write_tensor,
)

__all__ = [name for name in dir() if not name.startswith("_")]
