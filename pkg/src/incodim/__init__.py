"""incodim: state-restricted joint measurability of quantum observables.

Decides compatibility of observable tuples on subsets of states, computes
incompatibility and compatibility dimensions for binary qubit pairs, locates
the noise threshold where the incompatibility dimension of the noisy
mutually unbiased pair steps from 3 to 2, and searches incompatibility
witnesses with numerical verification.
"""

__version__ = "0.1.0"

from .errors import IncodimError
from .feasibility import (
    FeasibilityProblem,
    FeasibilityResult,
    SolverOptions,
    Status,
    binary_pair_compatible,
    busch_compatible,
    channel_obs_threshold,
    joint_feasible,
    project_marginal_affine,
    project_psd,
    spanning_states,
)
from .mub import (
    LambdaFamily,
    SearchOptions,
    Segment,
    XiRange,
    chi_incomp_mub,
    chord_effect_params,
    find_threshold,
    lambda_family,
    mub_pair,
    segment_compatible,
    sweep_rows,
    xi_min_limit,
    xi_range_first,
    xi_range_second,
    z_value,
)
from .operators import (
    BinaryQubitObservable,
    Effect,
    Observable,
    State,
    StochasticMatrix,
    eig_interval_check,
    outcome_probability,
    post_process,
    pre_process,
    state_from_bloch,
    unbiased_qubit_observable,
)
from .subsets import (
    DimensionBounds,
    StateSubset,
    affine_dimension,
    chi_bounds,
    distinguishable_extension,
    fixed_marginal_construction,
    pq_detector,
)
from .witness import (
    RawWitness,
    StateFormWitness,
    WitnessSearchOptions,
    detected_subset,
    evaluate,
    normalize,
    search_witness,
    verify_witness,
)

__all__ = [
    "IncodimError",
    "FeasibilityProblem",
    "FeasibilityResult",
    "SolverOptions",
    "Status",
    "binary_pair_compatible",
    "busch_compatible",
    "channel_obs_threshold",
    "joint_feasible",
    "project_marginal_affine",
    "project_psd",
    "spanning_states",
    "LambdaFamily",
    "SearchOptions",
    "Segment",
    "XiRange",
    "chi_incomp_mub",
    "chord_effect_params",
    "find_threshold",
    "lambda_family",
    "mub_pair",
    "segment_compatible",
    "sweep_rows",
    "xi_min_limit",
    "xi_range_first",
    "xi_range_second",
    "z_value",
    "BinaryQubitObservable",
    "Effect",
    "Observable",
    "State",
    "StochasticMatrix",
    "eig_interval_check",
    "outcome_probability",
    "post_process",
    "pre_process",
    "state_from_bloch",
    "unbiased_qubit_observable",
    "DimensionBounds",
    "StateSubset",
    "affine_dimension",
    "chi_bounds",
    "distinguishable_extension",
    "fixed_marginal_construction",
    "pq_detector",
    "RawWitness",
    "StateFormWitness",
    "WitnessSearchOptions",
    "detected_subset",
    "evaluate",
    "normalize",
    "search_witness",
    "verify_witness",
]
