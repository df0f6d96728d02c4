//! Paired nonparametric comparisons and descriptive summaries.

mod compare;
mod summary;
mod wilcoxon;

pub use compare::{
    compare_methods, ComparisonReport, ComparisonRow, GroupOutcome, CSV_HEADER, OVERALL_GROUP,
};
pub use summary::{boxplot, quantile_sorted, BoxplotStats};
pub use wilcoxon::{
    midranks, normal_cdf, signed_rank_counts, wilcoxon_signed_rank,
    wilcoxon_signed_rank_with_alpha, PairedSample, PairedTestResult, TestMethod, DEFAULT_ALPHA,
    EXACT_THRESHOLD,
};
