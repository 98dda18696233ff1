"""Mean-exit-time subgraph detection and graph partitioning.

Random walkers that stay inside a vertex set for a long time mark that set
as a trap. This package finds a k-node set with maximal mean exit time and
partitions a graph into K such sets, using rearrangement iterations on a
convex relaxation built from sparse Laplacian solves.
"""
from .detector import DetectorConfig, DetectorResult, Supervision, detect, k_sweep
from .energy import energy_gradient, energy_hessian, partition_energy, relaxed_energy
from .errors import (
    CapExceededError,
    ConnectivityWarning,
    EscapeTimeError,
    GraphParseError,
    SingularSystemError,
    SolverError,
    ValidationError,
)
from .graph import Graph, laplacian, laplacian_frobenius, load_graph, save_graph
from .oracle import (
    brute_force_best_partition,
    brute_force_best_subgraph,
    monte_carlo_met,
    purity,
    subgraph_accuracy,
)
from .partitioner import (
    ClassSupervision,
    Partition,
    PartitionerConfig,
    epsilon_sweep,
    partition,
    partition_ssl,
    spectral_kmeans_init,
)
from .poisson import RelaxedSolution, RegularizedSystem, solve_exact_met, solve_regularized
from .synth import MickeeSpec, generate_er_cycle, generate_mickee, generate_powerlaw_mickee
from .tables import SweepResult

__version__ = "0.1.0"

__all__ = [
    "CapExceededError", "ClassSupervision", "ConnectivityWarning", "DetectorConfig", "DetectorResult",
    "EscapeTimeError", "Graph", "GraphParseError", "MickeeSpec", "Partition", "PartitionerConfig",
    "RegularizedSystem", "RelaxedSolution", "SingularSystemError", "SolverError", "Supervision",
    "SweepResult", "ValidationError", "brute_force_best_partition", "brute_force_best_subgraph", "detect",
    "energy_gradient", "energy_hessian", "epsilon_sweep", "generate_er_cycle", "generate_mickee",
    "generate_powerlaw_mickee", "k_sweep", "laplacian", "laplacian_frobenius", "load_graph",
    "monte_carlo_met", "partition", "partition_energy", "partition_ssl", "purity", "relaxed_energy",
    "save_graph", "solve_exact_met", "solve_regularized", "spectral_kmeans_init", "subgraph_accuracy",
]
