"""Graph alignment workbench.

Three aligner families for planted-permutation recovery: message passing
on sparse correlated graphs, leading-eigenvector sorting on correlated
Wigner matrices, and the Birkhoff-polytope convex relaxation; plus the
rooted-tree enumeration and KL machinery that locates the message-passing
threshold at the square root of the tree-count growth constant.
"""

__version__ = "0.1.0"

from .graph_models import (
    CorrelatedErPair,
    CorrelatedWignerPair,
    Permutation,
    RootedTree,
    SparseGraph,
    SymMatrix,
    TreePair,
    neighborhood,
    oriented_neighborhood,
    sample_correlated_er,
    sample_correlated_tree_pair,
    sample_correlated_wigner,
    sample_gw_tree,
)
from .tree_enum import (
    OTTER_CONSTANT,
    CanonicalTree,
    TreeCountTable,
    TruncatedSeries,
    canonical_form,
    enumerate_rooted_trees,
    kl_gaussian_sum,
    kl_infinity,
    otter_estimate,
    phi_step,
    threshold_locator,
)
from .tree_likelihood import (
    KlEstimate,
    LikelihoodParams,
    kl_monte_carlo,
    log_likelihood_ratio,
    one_sided_test,
    psi,
    s_star_scan,
)
from .mp_align import (
    MatchSet,
    MessageTable,
    compute_messages,
    match_vertices,
    score_matches,
    validate_depth,
)
from .spectral_align import (
    LeadingEig,
    PerturbStats,
    eig1_align,
    leading_eigenvector,
    perturbation_stats,
    quadratic_objective,
)
from .convex_align import (
    DoublyStochastic,
    SolveReport,
    frobenius_gap,
    fw_birkhoff,
    lap_solve,
    round_argmax,
    round_lap,
)
from .bench_cli import ExperimentConfig, ResultRecord, overlap, run_experiment, write_results
from .estimators import BirkhoffAlign, Eig1Align, MPAlign
from .local_limit import check_local_limit

__all__ = [name for name in dir() if not name.startswith("_")]
