//! Detection merging, track-to-detection assignment and track lifecycle.

pub mod hungarian;
pub mod lifecycle;
pub mod merge;

pub use hungarian::{cost_matrix, solve_assignment, Assignment};
pub use lifecycle::{
    apply_match_outcome, LifecycleAction, MatchOutcome, TrackStatus, UidAllocator,
    CONFIRMATION_MATCHES,
};
pub use merge::{merge_overlaps, single_linkage, KdTree};
