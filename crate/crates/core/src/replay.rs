//! Offline replay of recorded logs through the tracker at the node rate.

use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::ResidualRecord;
use crate::geometry::{EgoState, TrackMap};
use crate::pipeline::{DetectionFrame, TrackedObjectList, Tracker, TrackerStats};

pub struct ReplayOutput {
    pub outputs: Vec<TrackedObjectList>,
    pub residuals: Vec<ResidualRecord>,
    pub stats: TrackerStats,
    pub warnings: Vec<String>,
    /// Wall time of every cycle (s).
    pub cycle_seconds: Vec<f64>,
}

/// Runs a cycle at every ego sample that reaches the next node tick
/// (`t0 + k / f_node`). A frame joins the first cycle at or after its
/// delivery time; frames delivered after the last ego sample are reported
/// and skipped.
pub fn replay(cfg: &RunConfig, map: TrackMap, ego: &[EgoState], frames: &[DetectionFrame]) -> Result<ReplayOutput> {
    if ego.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::Data("ego log is not ordered by time".into()));
    }
    let mut queue: Vec<&DetectionFrame> = frames.iter().collect();
    queue.sort_by(|a, b| {
        a.received_at()
            .total_cmp(&b.received_at())
            .then_with(|| a.sensor.cmp(&b.sensor))
            .then_with(|| a.seq.cmp(&b.seq))
    });

    let mut tracker = Tracker::new(cfg.clone(), map)?;
    let mut out = ReplayOutput {
        outputs: Vec::new(),
        residuals: Vec::new(),
        stats: TrackerStats::default(),
        warnings: Vec::new(),
        cycle_seconds: Vec::new(),
    };
    let Some(first) = ego.first() else {
        return Ok(out);
    };
    let period = 1.0 / cfg.f_node;
    let t0 = first.t;
    let mut k: u64 = 0;
    let mut next = 0;
    for e in ego {
        if e.t + 1e-9 < t0 + k as f64 * period {
            continue;
        }
        let mut pending = Vec::new();
        while next < queue.len() && queue[next].received_at() <= e.t + 1e-9 {
            pending.push(queue[next].clone());
            next += 1;
        }
        let start = Instant::now();
        let list = tracker.run_cycle(pending, *e)?;
        out.cycle_seconds.push(start.elapsed().as_secs_f64());
        out.outputs.push(list);
        out.residuals.append(&mut tracker.take_residuals());
        out.warnings.append(&mut tracker.take_warnings());
        while t0 + k as f64 * period <= e.t + 1e-9 {
            k += 1;
        }
    }
    if next < queue.len() {
        out.warnings.push(format!("{} frames delivered after the last ego sample were skipped", queue.len() - next));
    }
    out.stats = tracker.stats();
    Ok(out)
}
