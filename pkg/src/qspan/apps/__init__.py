"""Problem builders exercising the span-program and conversion machinery."""

from .advice import (
    AdviceDistribution,
    classical_baseline_queries,
    exact_classical_average,
    sample_advice,
    support,
    support_domain,
    verify_sum_bounds,
)
from .programs import (
    Graph,
    build_or_program,
    build_st_connectivity,
    effective_resistance,
    load_edge_list,
)
from .trees import (
    DecisionTree,
    build_search_tree,
    path_witness_bounds,
    or_tree,
    random_tree,
    colored_weights,
    tree_to_cvs,
)
