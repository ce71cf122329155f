"""rangewalk: simulation laboratory for random walk on the range of a walk.

Builds the range graph of a lattice random walk, finds its cut times,
computes effective-resistance and graph-distance structure exactly via
the cut-point block decomposition, simulates the walk on the range, and
estimates the scaling constants and slowly-varying corrections of the
model, with oracle cross-checks throughout.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config
from .cuts import (
    CutTimeSet,
    brute_force_cut_times,
    find_cut_times,
    gap_statistics,
    windowed_cut_indicator,
)
from .graph import (
    RangeGraph,
    SubtraceWindow,
    build_range_graph,
    last_exit_decomposition,
    mu_measure_prefix,
    subtrace_graph,
)
from .lattice import (
    Trajectory,
    generate_trajectory,
    load_fixed_path,
    load_trajectory,
    save_trajectory,
    straight_path,
    two_sided_trajectory,
)
from .pipeline import RunManifest, run_pipeline, verify_suite
from .resistance import (
    MetricProfile,
    ResistanceBall,
    block_laplacian_resistance,
    covering_number,
    decompose_blocks,
    distance_profile,
    metric_profile,
    oracle_resistance,
    past_max_deviation,
    resistance_across_ball,
    resistance_ball,
    resistance_profile,
)
from .scaling import (
    SlowlyVaryingTable,
    compare_to_limit,
    environment_tables,
    estimate_alpha_tau,
    estimate_lambda_prefix,
    estimate_lambda_two_sided,
    estimate_slowly_varying,
    exit_time_scaling,
    rescaled_process_samples,
)
from .walker import (
    ExitTimeSample,
    HeatKernelEstimate,
    WalkOnRangeTrace,
    exact_kernel_small,
    exit_time,
    heat_kernel_estimate,
    simulate_walk,
)
