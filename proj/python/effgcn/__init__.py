"""Efficient graph-convolutional baselines for skeleton-based action recognition.

The heavy lifting lives in the compiled extension; this package re-exports it
with a couple of conveniences.
"""

from effgcn._core import (
    ConfigError,
    DataError,
    FormatError,
    Model,
    StateError,
    StructureError,
    assemble_branches,
    build_partitions,
    check_scaling_constraint,
    count_flops,
    count_params,
    gradcheck,
    hop_distances,
    make_plan,
    normalize_partition,
    ntu25_graph,
    scale_channels,
    scale_depth,
    step_round,
    write_synth_dataset,
)

__all__ = [
    "ConfigError",
    "DataError",
    "FormatError",
    "Model",
    "StateError",
    "StructureError",
    "assemble_branches",
    "build_partitions",
    "check_scaling_constraint",
    "count_flops",
    "count_params",
    "gradcheck",
    "hop_distances",
    "make_plan",
    "normalize_partition",
    "ntu25_graph",
    "scale_channels",
    "scale_depth",
    "step_round",
    "write_synth_dataset",
]

__version__ = "0.1.0"
