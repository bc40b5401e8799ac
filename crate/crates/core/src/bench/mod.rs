//! Boundary benchmark: thinning, tolerance matching, per-class PR tables,
//! MF at the optimal dataset scale and average precision.

pub mod matching;
mod metrics;
mod report;
mod thin;

pub use matching::{match_maps, match_points, MatchResult, Pixel};
pub use metrics::{
    ap, average_precision, class_ap, class_mf, default_thresholds, f_measure, image_counts, mf_ods, pr_table,
    BenchConfig, ClassScores, Counts, PrTable,
};
pub use report::{pr_csv, ClassRow, EvalReport};
pub use thin::thin;
