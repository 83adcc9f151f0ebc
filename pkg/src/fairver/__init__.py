"""Individual-fairness verification of fully-connected ReLU networks.

The pipeline partitions the input domain into rectangular regions, prunes
the network per region (soundly via interval bounds and per-neuron solver
checks, then heuristically under time pressure), and discharges each
region's query to an external SMT solver, yielding per-region certificates
or concrete counterexample input pairs.
"""

__version__ = "0.1.0"

from .bounds import NeuronBounds, directed_rounding_policy, neuron_bounds
from .errors import (
    DimensionError,
    EncodingError,
    FairverError,
    FormatError,
    InputError,
    OracleCapError,
    QueryError,
    ReplayError,
    SolverBackendError,
    SolverNotFoundError,
    SolverProtocolError,
    UnsupportedModelError,
)
from .model_io import (
    Activation,
    Attribute,
    AttributeSchema,
    Layer,
    Network,
    OutputActivation,
    classify,
    forward,
    load_network,
    load_portable,
    load_schema,
    save_portable,
    save_schema,
)
from .oracle import GridSpec, OracleResult, brute_force, brute_force_bounds
from .partitioner import Partition, PartitionSet, Status, Verdict, accumulate, partition
from .pruning import (
    NeuronProfile,
    Provenance,
    PrunedNetwork,
    apply_pruning,
    compression_ratio,
    heuristic_prune,
    profile,
    sound_prune,
)
from .query import (
    FairnessPredicate,
    FairnessQuery,
    build_predicate,
    check_counterexample,
    load_query,
    wp_of_output,
)
from .runner import PartitionResult, ReplayOutcome, RunOptions, RunReport, replay, run
from .smt import SmtScript, SmtSession, SolverOutcome, encode, resolve_solver, solve
