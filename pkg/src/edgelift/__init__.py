"""Network-corrected treatment effects for one-to-one messaging experiments."""

__version__ = "0.1.0"

from .contrasts import ClassTotals, NormalizedContrasts, class_totals, normalized_contrasts
from .errors import DegenerateError, EdgeliftError, IngestError, UndefinedEstimate
from .estimators import (
    EffectEstimates,
    SendReceiveTotals,
    approx_alpha,
    approx_total_effect,
    estimate_alpha,
    estimate_effects,
    instant_lift,
    send_receive_totals,
    standard_lifts,
    total_treatment_effect,
)
from .hashing import assign, assign_many
from .ingest import (
    EdgeList,
    EdgeRecord,
    ExperimentConfig,
    parse_edge_file,
    resolve_group_sizes,
    write_edge_file,
)
from .permutation import (
    PermutationPlan,
    PermutationResult,
    null_distribution,
    relabel,
    run_permutations,
)
from .simulator import SimulationParams, SimulationTruth, expected_totals, simulate
