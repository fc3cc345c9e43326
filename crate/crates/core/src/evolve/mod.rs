//! Mutation operators and the evolutionary search loop.

mod mutate;
mod search;

pub use mutate::{
    change_node, init_random, insert_operator, mutate, mutate_change, mutate_insert, mutate_regenerate, mutate_remove,
    parameterize, place_params, remove_node, sample_random_functions, MutationKind,
};
pub use search::{
    evolve, evolve_with, non_dominated, pareto_general, read_history_lines, rerank, top_candidates, Candidate,
    ConfigError, EvolutionConfig, HistoryLine, ProgressRow, Proposal, Ranked, RerankOptions, SearchHistory, SearchMode,
    SearchState,
};
