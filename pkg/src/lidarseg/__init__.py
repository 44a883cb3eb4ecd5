"""LiDAR sparse instance proposals, instance aggregation, baselines and panoptic metrics."""

from .aggregation import AffinityGraph, GeometricAffinity, aggregate, merge, score_affinities
from .kitti_io import default_config, read_config, read_labels, read_scan, write_labels, write_scan
from .metrics import PanopticEvaluator, PanopticScores, evaluate
from .model import ClassConfig, PointCloud, ProposalSet, SeedSet, SemanticMap, validate_scan
from .sip import balanced_sample, bubble_shrink, group_proposals, run_sip

__all__ = [
    "AffinityGraph",
    "ClassConfig",
    "GeometricAffinity",
    "PanopticEvaluator",
    "PanopticScores",
    "PointCloud",
    "ProposalSet",
    "SeedSet",
    "SemanticMap",
    "aggregate",
    "balanced_sample",
    "bubble_shrink",
    "default_config",
    "evaluate",
    "group_proposals",
    "merge",
    "read_config",
    "read_labels",
    "read_scan",
    "run_sip",
    "score_affinities",
    "validate_scan",
    "write_labels",
    "write_scan",
]
