//! The tracking cycle: chronological frame ingestion, the equidistant state
//! history per track, and backward-forward integration of delayed frames.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::association::{
    apply_match_outcome, cost_matrix, merge_overlaps, solve_assignment, LifecycleAction,
    MatchOutcome, TrackStatus, UidAllocator,
};
use crate::config::{RunConfig, SensorConfig};
use crate::error::{Error, Result};
use crate::estimation::{
    init_track_state, measurement_covariance, predict, process_noise, update, Gaussian,
    UpdateStatus,
};
use crate::evaluation::ResidualRecord;
use crate::geometry::{local_to_global, lowpass_ego, Detection, EgoState, LowPassAlpha, Point2, TrackMap};
use crate::motion::{Feature, KinematicState, ModelKind};

/// One detection list as published by a sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub sensor: String,
    /// Sensor timestamp (s).
    pub t: f64,
    /// Time the frame reached the tracker; defaults to `t`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_rx: Option<f64>,
    #[serde(default)]
    pub seq: u64,
    /// Objects in the ego frame (+y forward, +x right).
    pub objects: Vec<Detection>,
}

impl DetectionFrame {
    pub fn received_at(&self) -> f64 {
        self.t_rx.unwrap_or(self.t)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.t_rx.is_none_or(f64::is_finite)
            && self.objects.iter().all(Detection::is_finite)
    }
}

/// A measurement applied at a history slot, kept so it can be re-applied
/// when an older frame changes the estimate before it.
#[derive(Debug, Clone, PartialEq)]
struct StoredUpdate {
    z: DVector<f64>,
    features: Vec<Feature>,
    r: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    /// Filter grid index; the slot time is `tick / f_EKF`.
    pub tick: i64,
    pub gaussian: Gaussian,
    updates: Vec<StoredUpdate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub uid: u64,
    pub status: TrackStatus,
    history: VecDeque<HistoryEntry>,
}

impl Track {
    /// Newest estimate.
    pub fn gaussian(&self) -> &Gaussian {
        &self.history.back().expect("history never empty").gaussian
    }

    pub fn history(&self) -> &VecDeque<HistoryEntry> {
        &self.history
    }

    fn newest_tick(&self) -> i64 {
        self.history.back().expect("history never empty").tick
    }

    /// Index of the history entry for `tick`, clamped to the stored range.
    fn entry_index(&self, tick: i64) -> usize {
        let first = self.history.front().expect("history never empty").tick;
        (tick - first).clamp(0, self.history.len() as i64 - 1) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub uid: u64,
    pub state: KinematicState,
    pub cov_diag: Vec<f64>,
}

/// Confirmed tracks at the time of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObjectList {
    pub t_out: f64,
    pub tracks: Vec<TrackOutput>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerStats {
    pub cycles: u64,
    pub frames_processed: u64,
    pub frames_dropped_stale: u64,
    pub frames_rejected_skew: u64,
    pub frames_rejected_invalid: u64,
    pub frames_ignored_sensor: u64,
    pub updates_applied: u64,
    pub updates_rejected: u64,
    pub tracks_created: u64,
    pub tracks_removed: u64,
}

/// Multi-object tracker state: tracks, ego history and counters.
pub struct Tracker {
    cfg: RunConfig,
    map: TrackMap,
    model: ModelKind,
    dt: f64,
    q: DMatrix<f64>,
    capacity: usize,
    alpha: LowPassAlpha,
    tracks: Vec<Track>,
    uids: UidAllocator,
    ego_history: VecDeque<EgoState>,
    now_tick: Option<i64>,
    stats: TrackerStats,
    residuals: Vec<ResidualRecord>,
    warnings: Vec<String>,
}

impl Tracker {
    pub fn new(cfg: RunConfig, map: TrackMap) -> Result<Self> {
        let warnings = cfg.validate()?;
        let dt = cfg.filter_dt();
        Ok(Self {
            model: cfg.model,
            dt,
            q: process_noise(&cfg.process_std, cfg.model, dt),
            capacity: cfg.history_slots(),
            alpha: LowPassAlpha::new(cfg.ego_lowpass_alpha)?,
            map,
            cfg,
            tracks: Vec::new(),
            uids: UidAllocator::new(),
            ego_history: VecDeque::new(),
            now_tick: None,
            stats: TrackerStats::default(),
            residuals: Vec::new(),
            warnings,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn map(&self) -> &TrackMap {
        &self.map
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn stats(&self) -> TrackerStats {
        self.stats
    }

    /// Residual records collected since the last call.
    pub fn take_residuals(&mut self) -> Vec<ResidualRecord> {
        std::mem::take(&mut self.residuals)
    }

    /// Warnings collected since the last call (dropped frames, bad input).
    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }

    fn tick_of(&self, t: f64) -> i64 {
        (t / self.dt + 1e-9).floor() as i64
    }

    fn nearest_tick(&self, t: f64) -> i64 {
        (t / self.dt).round() as i64
    }

    fn tick_time(&self, tick: i64) -> f64 {
        tick as f64 * self.dt
    }

    /// Filtered ego state at `t`, linearly interpolated between cycle samples
    /// and held constant beyond the stored range.
    pub fn ego_at(&self, t: f64) -> Option<EgoState> {
        let h = &self.ego_history;
        let first = h.front()?;
        let last = h.back()?;
        if t <= first.t {
            return Some(*first);
        }
        if t >= last.t {
            return Some(*last);
        }
        let i = h.partition_point(|e| e.t <= t);
        Some(EgoState::lerp(&h[i - 1], &h[i], t))
    }

    fn step(&self, g: &Gaussian) -> Result<Gaussian> {
        predict(g, self.dt, self.model, &self.q)
    }

    fn push_entry(&self, track: &mut Track, entry: HistoryEntry) {
        track.history.push_back(entry);
        while track.history.len() > self.capacity {
            track.history.pop_front();
        }
    }

    /// Predicts a track slot by slot up to `tick`.
    fn advance(&self, track: &mut Track, tick: i64) -> Result<()> {
        while track.newest_tick() < tick {
            let next = self.step(track.gaussian())?;
            let t = track.newest_tick() + 1;
            self.push_entry(track, HistoryEntry { tick: t, gaussian: next, updates: Vec::new() });
        }
        Ok(())
    }

    /// Re-predicts every entry after `from` and re-applies its stored updates.
    fn reintegrate(&self, track: &mut Track, from: usize) -> Result<()> {
        for k in from + 1..track.history.len() {
            let mut g = self.step(&track.history[k - 1].gaussian)?;
            for u in &track.history[k].updates {
                g = update(&g, &u.z, &u.features, &u.r)?.posterior;
            }
            track.history[k].gaussian = g;
        }
        Ok(())
    }

    /// Runs one cycle: filters the ego state, advances every track to the
    /// ego time, processes the frames oldest first and returns the confirmed
    /// tracks at the ego time.
    pub fn run_cycle(&mut self, mut frames: Vec<DetectionFrame>, ego_raw: EgoState) -> Result<TrackedObjectList> {
        if !ego_raw.is_finite() {
            return Err(Error::NonFinite("ego state"));
        }
        let ego = match self.ego_history.back() {
            Some(prev) if ego_raw.t < prev.t => {
                return Err(Error::Data(format!(
                    "ego time went backwards: {} after {}",
                    ego_raw.t, prev.t
                )));
            }
            Some(prev) => lowpass_ego(prev, &ego_raw, self.alpha),
            None => ego_raw,
        };
        self.ego_history.push_back(ego);
        let keep_from = ego.t - self.cfg.history_seconds - 1.0;
        while self.ego_history.len() > 2 && self.ego_history[1].t < keep_from {
            self.ego_history.pop_front();
        }

        let now = self.tick_of(ego.t);
        self.now_tick = Some(now);
        let mut tracks = std::mem::take(&mut self.tracks);
        for track in &mut tracks {
            self.advance(track, now)?;
        }
        self.tracks = tracks;

        frames.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then_with(|| a.sensor.cmp(&b.sensor))
                .then_with(|| a.seq.cmp(&b.seq))
        });
        for frame in &frames {
            self.ingest(frame, ego.t)?;
        }

        self.stats.cycles += 1;
        self.output(ego.t)
    }

    fn ingest(&mut self, frame: &DetectionFrame, now_t: f64) -> Result<()> {
        let Some(sensor) = self.cfg.active_sensor(&frame.sensor).cloned() else {
            self.stats.frames_ignored_sensor += 1;
            return Ok(());
        };
        if !frame.is_finite() {
            self.stats.frames_rejected_invalid += 1;
            self.warnings.push(format!("{} frame {}: non-finite values", frame.sensor, frame.seq));
            return Ok(());
        }
        if frame.t > now_t + 1e-9 {
            self.stats.frames_rejected_skew += 1;
            self.warnings.push(format!(
                "{} frame {}: timestamp {} ahead of ego time {}",
                frame.sensor, frame.seq, frame.t, now_t
            ));
            return Ok(());
        }
        if now_t - frame.t > self.cfg.history_seconds {
            self.stats.frames_dropped_stale += 1;
            self.warnings.push(format!(
                "{} frame {}: {:.3} s old, beyond the history horizon",
                frame.sensor, frame.seq,
                now_t - frame.t
            ));
            return Ok(());
        }
        self.process_frame(frame, &sensor)?;
        self.stats.frames_processed += 1;
        Ok(())
    }

    /// Transform, filter, merge, match at the frame's slot, update, re-integrate
    /// to the present and apply the lifecycle.
    fn process_frame(&mut self, frame: &DetectionFrame, sensor: &SensorConfig) -> Result<()> {
        let now = self.now_tick.expect("cycle started");
        let ego_t = self.ego_at(frame.t).expect("ego history filled at cycle start");

        let mut dets = Vec::with_capacity(frame.objects.len());
        for obj in &frame.objects {
            let g = local_to_global(obj, &ego_t)?;
            if self.map.is_inside_track(&g.position(), self.cfg.d_obf_out, self.cfg.d_obf_in) {
                dets.push(g);
            }
        }
        let dets = merge_overlaps(&dets, self.cfg.d_mrg);

        let slot = if self.cfg.delay_compensation {
            self.nearest_tick(frame.t).min(now)
        } else {
            now
        };

        let mut tracks = std::mem::take(&mut self.tracks);
        let idx: Vec<usize> = tracks.iter().map(|t| t.entry_index(slot)).collect();
        let positions: Vec<Point2> = tracks
            .iter()
            .zip(&idx)
            .map(|(t, &i)| {
                let m = &t.history[i].gaussian.mean;
                Point2::new(m.x, m.y)
            })
            .collect();
        let det_pos: Vec<Point2> = dets.iter().map(Detection::position).collect();
        let assignment = solve_assignment(&cost_matrix(&positions, &det_pos), self.cfg.d_mtc);

        for &(ti, di) in &assignment.pairs {
            let track = &mut tracks[ti];
            let (z, features, r) = self.measurement(&dets[di], sensor);
            let entry = &track.history[idx[ti]];
            let res = update(&entry.gaussian, &z, &features, &r)?;
            self.residuals.push(ResidualRecord::from_innovation(
                track.uid,
                &sensor.id,
                frame.t,
                frame.t - track.status.created_at,
                &entry.gaussian.mean,
                &features,
                &res.residual,
            ));
            match res.status {
                UpdateStatus::Applied => {
                    self.stats.updates_applied += 1;
                    let entry = &mut track.history[idx[ti]];
                    entry.gaussian = res.posterior;
                    entry.updates.push(StoredUpdate { z, features, r });
                    self.reintegrate(track, idx[ti])?;
                }
                UpdateStatus::Rejected { condition } => {
                    self.stats.updates_rejected += 1;
                    self.warnings.push(format!(
                        "track {}: update skipped, innovation condition {condition:e}",
                        track.uid
                    ));
                }
            }
            apply_match_outcome(
                &mut track.status,
                MatchOutcome::Matched { weight: sensor.match_weight },
                self.cfg.t_mtc,
            );
        }

        let mut remove = vec![false; tracks.len()];
        for &ti in &assignment.unmatched_tracks {
            if apply_match_outcome(&mut tracks[ti].status, MatchOutcome::Unmatched, self.cfg.t_mtc)
                == LifecycleAction::Remove
            {
                remove[ti] = true;
            }
        }
        let before = tracks.len();
        let mut k = 0;
        tracks.retain(|_| {
            k += 1;
            !remove[k - 1]
        });
        self.stats.tracks_removed += (before - tracks.len()) as u64;

        for &di in &assignment.unmatched_detections {
            let track = self.spawn_track(&dets[di], &ego_t, sensor, frame.t, slot, now)?;
            tracks.push(track);
        }
        self.tracks = tracks;
        Ok(())
    }

    /// Measurement vector, feature list and noise for one global detection.
    /// Yaw comes from the centerline unless the sensor reports it and is set
    /// to use it; speed is used only when the detection carries it.
    fn measurement(&self, det: &Detection, sensor: &SensorConfig) -> (DVector<f64>, Vec<Feature>, DMatrix<f64>) {
        let mut z = Vec::with_capacity(4);
        let mut features = Vec::with_capacity(4);
        for &f in &sensor.features {
            let value = match f {
                Feature::X => Some(det.x),
                Feature::Y => Some(det.y),
                Feature::Yaw => match det.yaw {
                    Some(yaw) if !sensor.yaw_from_centerline => Some(yaw),
                    _ => Some(self.map.centerline_heading_at(&det.position())),
                },
                Feature::V => det.v,
            };
            if let Some(v) = value {
                z.push(v);
                features.push(f);
            }
        }
        let stds: Vec<f64> = features.iter().map(|&f| sensor.std.of(f)).collect();
        (DVector::from_vec(z), features, measurement_covariance(&stds))
    }

    /// New track for an unmatched detection, seeded at `slot` and predicted
    /// up to `now`.
    fn spawn_track(
        &mut self,
        det: &Detection,
        ego: &EgoState,
        sensor: &SensorConfig,
        t: f64,
        slot: i64,
        now: i64,
    ) -> Result<Track> {
        let gaussian = init_track_state(det, ego, &self.map, &self.cfg.init_policy(), sensor, self.model);
        let mut track = Track {
            uid: self.uids.next_uid(),
            status: TrackStatus::spawned(sensor.match_weight, self.cfg.t_mtc, t),
            history: VecDeque::with_capacity(self.capacity + 1),
        };
        track.history.push_back(HistoryEntry { tick: slot, gaussian, updates: Vec::new() });
        self.advance(&mut track, now)?;
        self.stats.tracks_created += 1;
        Ok(track)
    }

    /// Confirmed tracks predicted from the newest slot to `t_out`.
    fn output(&self, t_out: f64) -> Result<TrackedObjectList> {
        let mut tracks = Vec::new();
        for track in self.tracks.iter().filter(|t| t.status.confirmed()) {
            let newest = track.history.back().expect("history never empty");
            let frac = (t_out - self.tick_time(newest.tick)).max(0.0);
            let q = process_noise(&self.cfg.process_std, self.model, frac);
            let g = predict(&newest.gaussian, frac, self.model, &q)?;
            tracks.push(TrackOutput {
                uid: track.uid,
                state: g.mean,
                cov_diag: g.cov.diagonal().iter().copied().collect(),
            });
        }
        Ok(TrackedObjectList { t_out, tracks })
    }
}
