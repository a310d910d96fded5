"""Segmented training toolkit for long-tailed multi-label classification.

The package covers the whole desk-scale workflow: ingesting line-delimited
records, cleaning label codes by pooled-embedding similarity, thresholding
rare classes, cutting the ranked frequency list into segments, training one
classifier per segment with rate-weighted losses, and reporting segment-wise
micro F1.
"""

from .corpus import (
    ClassFrequencyTable,
    Dataset,
    Record,
    apply_frequency_threshold,
    build_frequency_table,
    expand_abbreviations,
    extract_sections,
    parse_records,
    tokenize_and_fit,
)
from .cleaner import (
    EmbeddingMatrix,
    PooledSets,
    clean_labels,
    cosine,
    description_embedding,
    pool_groups,
    similarity_score,
)
from .losses import LossConfig, LossInput, loss_and_grad
from .metrics import MetricsReport, confusion_counts, micro_f1, segmentwise_report
from .pipeline import RunConfig, compare_losses, run_pipeline
from .segmenter import RateTable, Segmentation, beta_sh, positive_counts, segment_all, segment_tail
from .synth import SynthSpec, generate
from .trainer import SegmentModel, SplitSpec, TrainConfig, adamw_step, predict, stratified_split, train_segment_model

__version__ = "0.1.0"

__all__ = [
    "ClassFrequencyTable",
    "Dataset",
    "EmbeddingMatrix",
    "LossConfig",
    "LossInput",
    "MetricsReport",
    "PooledSets",
    "RateTable",
    "Record",
    "RunConfig",
    "SegmentModel",
    "Segmentation",
    "SplitSpec",
    "SynthSpec",
    "TrainConfig",
    "adamw_step",
    "apply_frequency_threshold",
    "beta_sh",
    "build_frequency_table",
    "clean_labels",
    "compare_losses",
    "confusion_counts",
    "cosine",
    "description_embedding",
    "expand_abbreviations",
    "extract_sections",
    "generate",
    "loss_and_grad",
    "micro_f1",
    "parse_records",
    "pool_groups",
    "positive_counts",
    "predict",
    "run_pipeline",
    "segment_all",
    "segment_tail",
    "segmentwise_report",
    "similarity_score",
    "stratified_split",
    "tokenize_and_fit",
    "train_segment_model",
]
