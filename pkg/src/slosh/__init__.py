"""Sliced-Wasserstein set embeddings and locality-sensitive set retrieval."""

from .dataio import PointSet, SetDataset, build_reference, gen_blobs, load_dataset, save_dataset
from .lsh import build_binary_index, build_bucket_index, load_index
from .ot_core import gsw_estimate, quantile, wasserstein_1d
from .poolings import cov_pool, fspool_di, gem_pool
from .retrieval import EvalReport, Pipeline, PipelineConfig, evaluate, evaluate_repeated
from .slicing import SlicerBank, project, sample_slicers
from .swe import ReferenceSet, SweEmbedding, embed, monge_coupling, pairwise_distance

__version__ = "0.1.0"

__all__ = [
    "PointSet", "SetDataset", "build_reference", "gen_blobs", "load_dataset", "save_dataset",
    "build_binary_index", "build_bucket_index", "load_index",
    "gsw_estimate", "quantile", "wasserstein_1d",
    "cov_pool", "fspool_di", "gem_pool",
    "EvalReport", "Pipeline", "PipelineConfig", "evaluate", "evaluate_repeated",
    "SlicerBank", "project", "sample_slicers",
    "ReferenceSet", "SweEmbedding", "embed", "monge_coupling", "pairwise_distance",
]
