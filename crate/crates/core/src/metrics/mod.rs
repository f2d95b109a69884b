//! Language and coordination metrics over evaluation episodes.

mod episodes;
mod measures;
mod report;

pub use episodes::{episode_seeds, replay_batch, replay_tokens, run_episodes, trace_episode, EpisodeRecord, ItemTruth};
pub use measures::{
    average_ranks, edit_distance, hamming, interchangeability, mean_std, normalized_edit_distance,
    pearson, spearman, topsim,
};
pub use report::{
    agent_topsim, circular_distance, evaluate_pairs, evaluate_population, language_similarity,
    meaning, pair_stats, population_ls, ring_curve, score_bin, self_and_cross, success_matrix,
    CurvePoint, EvalOptions, LsProtocol, Matrix, MeanStd, MetricsReport, PairFilter, PairStats,
    SeedMetrics, Summary,
};
