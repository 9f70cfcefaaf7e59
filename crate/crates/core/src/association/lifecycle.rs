//! Status-counter track lifecycle.

use serde::{Deserialize, Serialize};

/// Number of successful matches after which a track is published.
pub const CONFIRMATION_MATCHES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackStatus {
    pub counter: u32,
    pub successful_matches: u32,
    pub created_at: f64,
}

impl TrackStatus {
    /// Status of a track spawned by a sensor with match weight `weight`.
    pub fn spawned(weight: u32, t_mtc: u32, created_at: f64) -> Self {
        Self {
            counter: weight.clamp(1, t_mtc.max(1)),
            successful_matches: 0,
            created_at,
        }
    }

    pub fn confirmed(&self) -> bool {
        self.successful_matches >= CONFIRMATION_MATCHES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    Matched { weight: u32 },
    Unmatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleAction {
    Keep,
    Remove,
}

/// Updates the status counter for one assignment round.
pub fn apply_match_outcome(status: &mut TrackStatus, outcome: MatchOutcome, t_mtc: u32) -> LifecycleAction {
    match outcome {
        MatchOutcome::Matched { weight } => {
            status.counter = status.counter.saturating_add(weight).min(t_mtc);
            status.successful_matches = status.successful_matches.saturating_add(1);
            LifecycleAction::Keep
        }
        MatchOutcome::Unmatched => {
            status.counter = status.counter.saturating_sub(1);
            if status.counter == 0 {
                LifecycleAction::Remove
            } else {
                LifecycleAction::Keep
            }
        }
    }
}

/// Hands out strictly increasing track identifiers; never reuses one.
#[derive(Debug, Clone, Default)]
pub struct UidAllocator {
    next: u64,
}

impl UidAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_uid(&mut self) -> u64 {
        let uid = self.next;
        self.next += 1;
        uid
    }
}
