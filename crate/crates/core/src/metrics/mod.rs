//! Dice, Jaccard, average surface distance and 95% Hausdorff distance, plus
//! sliding-window inference over full volumes.
//!
//! Surfaces use 6-connectivity and count voxels on the grid border.
//! Distances are in voxels unless a spacing is passed.

mod distance;
mod overlap;
mod report;
mod sliding;
mod surface;

pub use distance::{percentile, surface_distances, SurfaceDistances};
pub use overlap::dice_jaccard;
pub use report::{
    aggregate, evaluate_cases, format_table, score_case, write_case_csv, CaseScore, EmptyPolicy, MeanScores,
    Metric, UNDEFINED,
};
pub use sliding::{default_stride, sliding_window_predict, PatchPredictor, SlidingWindowOutput};
pub use surface::{directed_surface_distances, extract_surface, squared_distance_transform};
