"""Network SIR epidemics: Naive SIR, FastSIR and their reference oracles."""

__version__ = "0.1.0"

from .distributions import (EpidemicParams, InfectionCdfTable, PrecisionError, PrecisionPolicy,
                            build_cdf_table, load_table, pmf_direct, pmf_series,
                            pmf_table_recursive, save_table, table_for_degrees)
from .graph import (Network, generate_m_ary_tree, generate_scale_free, generate_test_graph,
                    load_edge_list)
from .simulate import RngStream, run_fast, run_naive, simulate_batch
from .analysis import chi_square_gof, exact_final_size, tree_bounds

__all__ = [
    "EpidemicParams", "InfectionCdfTable", "PrecisionError", "PrecisionPolicy",
    "build_cdf_table", "load_table", "pmf_direct", "pmf_series", "pmf_table_recursive",
    "save_table", "table_for_degrees", "Network", "generate_m_ary_tree",
    "generate_scale_free", "generate_test_graph", "load_edge_list", "RngStream",
    "run_fast", "run_naive", "simulate_batch", "chi_square_gof", "exact_final_size",
    "tree_bounds",
]
