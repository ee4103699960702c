"""Multi-segment map merging: descriptors, loop closure detection, spectral
clustering and pose-graph assembly, with a synthetic world harness."""

from ._core import (
    Error,
    MergeState,
    Pose2,
    World,
    WorldSpec,
    between,
    compose,
    connection_weight,
    cosine_distance,
    estimate_rigid_transform,
    evaluate,
    generate_world,
    lazy_quadruplet_loss,
    normalize_angle,
    run_incremental,
    run_offline,
    self_attention,
    spectral_cluster,
)

__all__ = [
    "Error",
    "MergeState",
    "Pose2",
    "World",
    "WorldSpec",
    "between",
    "compose",
    "connection_weight",
    "cosine_distance",
    "estimate_rigid_transform",
    "evaluate",
    "generate_world",
    "lazy_quadruplet_loss",
    "normalize_angle",
    "run_incremental",
    "run_offline",
    "self_attention",
    "spectral_cluster",
]
