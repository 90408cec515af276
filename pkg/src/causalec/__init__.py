"""Bayesian causal discovery of effective connectomes with structural priors."""

from .graphs import (
    BinaryGraph,
    Cpdag,
    PriorMatrix,
    WeightedAdjacency,
    is_acyclic,
    threshold_by_edge_count,
    threshold_by_weight,
)
from .stats import SufficientStats
from .datagen import (
    HrfParams,
    HybridSpec,
    SemSpec,
    generate_scale_free_dag,
    make_hybrid_dataset,
    random_sem,
    sample_dag_from_prior,
    sample_linear_sem,
    synthesize_bold,
)
from .priors import (
    StreamlineCounts,
    binarize_subject_sc,
    leave_one_out_sc,
    majority_vote,
    probabilistic_sc,
    symmetric_edge_prob,
)
from .golem import (
    GolemConfig,
    bgolem_sparsity,
    dag_penalty,
    fit_golem,
    golem_likelihood,
    golem_total_score,
    postprocess_golem,
)
from .fges import (
    FgesConfig,
    cpdag_to_dag,
    dag_total_score,
    fit_fges,
    local_bic_score,
    prior_delete_delta,
    prior_graph_log,
    prior_insert_delta,
)
from .metrics import (
    MetricsReport,
    fdr,
    pearson_correlation,
    pfdr,
    proportion_test_map,
    proportion_test_per_edge,
    rogers_tanimoto_per_edge,
    sc_partitioned_disagreement,
    shd,
    total_error_pct,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
