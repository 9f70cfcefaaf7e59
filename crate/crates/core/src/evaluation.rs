//! Tracking metrics: residual statistics, scenario precision, delay statistics,
//! residuals over observation age and position error against ground truth.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::geometry::{heading_direction, wrap_angle, EgoState};
use crate::motion::{Feature, KinematicState};
use crate::pipeline::{DetectionFrame, TrackedObjectList};
use crate::simulator::TruthFrame;

/// Innovation of one update, position split along and across the prior
/// track heading. Sign convention: measurement minus prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub uid: u64,
    pub sensor: String,
    /// Sensor timestamp of the measurement (s).
    pub t: f64,
    /// Time since the track was created (s).
    pub age: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
}

impl ResidualRecord {
    pub fn from_innovation(
        uid: u64,
        sensor: &str,
        t: f64,
        age: f64,
        prior: &KinematicState,
        features: &[Feature],
        residual: &DVector<f64>,
    ) -> Self {
        let get = |f: Feature| features.iter().position(|&g| g == f).map(|i| residual[i]);
        let (lon, lat) = match (get(Feature::X), get(Feature::Y)) {
            (Some(dx), Some(dy)) => {
                let [fx, fy] = heading_direction(prior.yaw);
                // left of the heading is the forward vector turned by +90°
                let (lx, ly) = (-fy, fx);
                (Some(dx * fx + dy * fy), Some(dx * lx + dy * ly))
            }
            _ => (None, None),
        };
        Self {
            uid,
            sensor: sensor.to_string(),
            t,
            age: age.max(0.0),
            lon,
            lat,
            yaw: get(Feature::Yaw).map(wrap_angle),
            v: get(Feature::V),
        }
    }
}

/// Streaming mean and variance; mergeable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn summary(&self) -> FeatureStats {
        FeatureStats {
            n: self.n,
            mean: (self.n > 0).then_some(self.mean),
            std: (self.n > 1).then(|| (self.m2.max(0.0) / (self.n - 1) as f64).sqrt()),
        }
    }
}

/// Sample mean and standard deviation; absent when too few samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub n: u64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResidualAccumulator {
    pub lon: RunningStats,
    pub lat: RunningStats,
    pub yaw: RunningStats,
    pub v: RunningStats,
}

impl ResidualAccumulator {
    pub fn push(&mut self, r: &ResidualRecord) {
        let pairs = [
            (&mut self.lon, r.lon),
            (&mut self.lat, r.lat),
            (&mut self.yaw, r.yaw),
            (&mut self.v, r.v),
        ];
        for (acc, value) in pairs {
            if let Some(x) = value {
                acc.push(x);
            }
        }
    }

    pub fn merge(&mut self, other: &ResidualAccumulator) {
        self.lon.merge(&other.lon);
        self.lat.merge(&other.lat);
        self.yaw.merge(&other.yaw);
        self.v.merge(&other.v);
    }

    pub fn report(&self) -> ResidualReport {
        ResidualReport {
            lon: self.lon.summary(),
            lat: self.lat.summary(),
            yaw: self.yaw.summary(),
            v: self.v.summary(),
        }
    }
}

/// Per-feature residual statistics. Positions in m, yaw in rad, speed in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub lon: FeatureStats,
    pub lat: FeatureStats,
    pub yaw: FeatureStats,
    pub v: FeatureStats,
}

impl ResidualReport {
    pub fn is_empty(&self) -> bool {
        self.lon.n == 0 && self.lat.n == 0 && self.yaw.n == 0 && self.v.n == 0
    }
}

pub fn residual_stats(records: &[ResidualRecord]) -> ResidualReport {
    let mut acc = ResidualAccumulator::default();
    records.iter().for_each(|r| acc.push(r));
    acc.report()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    /// Minimum published lifetime of a true positive (s).
    pub t_min: f64,
    /// Maximum mean distance to one truth agent (m).
    pub d_tp: f64,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self { t_min: 2.0, d_tp: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub tp: u64,
    pub fp: u64,
    /// `tp / (tp + fp)`; absent without tracks.
    pub precision: Option<f64>,
}

impl PrecisionReport {
    pub fn from_counts(tp: u64, fp: u64) -> Self {
        let total = tp + fp;
        Self {
            tp,
            fp,
            precision: (total > 0).then(|| tp as f64 / total as f64),
        }
    }
}

/// Linear interpolation of agent `id` in a time-sorted truth log.
pub fn truth_position(truth: &[TruthFrame], id: u32, t: f64) -> Option<(f64, f64)> {
    let at = |f: &TruthFrame| f.agents.iter().find(|a| a.id == id).map(|a| (a.x, a.y));
    let i = truth.partition_point(|f| f.t < t);
    if i < truth.len() && (truth[i].t - t).abs() < 1e-12 {
        return at(&truth[i]);
    }
    if i == 0 || i == truth.len() {
        return None;
    }
    let (a, b) = (&truth[i - 1], &truth[i]);
    let (pa, pb) = (at(a)?, at(b)?);
    let w = (t - a.t) / (b.t - a.t);
    Some((pa.0 + w * (pb.0 - pa.0), pa.1 + w * (pb.1 - pa.1)))
}

fn non_ego_ids(truth: &[TruthFrame]) -> Vec<u32> {
    let mut ids: Vec<u32> = truth
        .iter()
        .flat_map(|f| f.agents.iter().filter(|a| !a.ego).map(|a| a.id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Published positions per track uid, in time order.
fn track_paths(outputs: &[TrackedObjectList]) -> BTreeMap<u64, Vec<(f64, f64, f64)>> {
    let mut paths: BTreeMap<u64, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for list in outputs {
        for tr in &list.tracks {
            paths.entry(tr.uid).or_default().push((list.t_out, tr.state.x, tr.state.y));
        }
    }
    paths
}

/// Whole-track precision over the published outputs. A track is a true
/// positive when it was published for at least `t_min` and its mean distance
/// to some non-ego truth agent over its published life is at most `d_tp`.
pub fn precision(outputs: &[TrackedObjectList], truth: &[TruthFrame], cfg: &PrecisionConfig) -> PrecisionReport {
    let ids = non_ego_ids(truth);
    let (mut tp, mut fp) = (0, 0);
    for path in track_paths(outputs).values() {
        let lifetime = path.last().unwrap().0 - path[0].0;
        let close = lifetime >= cfg.t_min
            && ids.iter().any(|&id| {
                let mut sum = 0.0;
                for &(t, x, y) in path {
                    match truth_position(truth, id, t) {
                        Some((tx, ty)) => sum += ((x - tx).powi(2) + (y - ty).powi(2)).sqrt(),
                        None => return false,
                    }
                }
                sum / path.len() as f64 <= cfg.d_tp
            });
        if close {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    PrecisionReport::from_counts(tp, fp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub samples: u64,
    pub rmse: Option<f64>,
}

/// Root-mean-square distance of every published track state to the nearest
/// non-ego truth agent at the output time. Pairs farther than `gate` (when
/// given) are skipped.
pub fn tracking_rmse(outputs: &[TrackedObjectList], truth: &[TruthFrame], gate: Option<f64>) -> RmseReport {
    let ids = non_ego_ids(truth);
    let mut sum = 0.0;
    let mut n = 0u64;
    for list in outputs {
        let agents: Vec<(f64, f64)> = ids.iter().filter_map(|&id| truth_position(truth, id, list.t_out)).collect();
        for tr in &list.tracks {
            let best = agents
                .iter()
                .map(|&(x, y)| (tr.state.x - x).powi(2) + (tr.state.y - y).powi(2))
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() && gate.is_none_or(|g| best <= g * g) {
                sum += best;
                n += 1;
            }
        }
    }
    RmseReport {
        samples: n,
        rmse: (n > 0).then(|| (sum / n as f64).sqrt()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub frames: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    /// Distance the ego travels during the delay (m).
    pub mean_moved_m: f64,
    pub max_moved_m: f64,
    /// Frames with delivery before the sensor timestamp, excluded.
    pub negative_excluded: u64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn ego_speed_at(ego: &[EgoState], t: f64) -> f64 {
    if ego.is_empty() {
        return 0.0;
    }
    let i = ego.partition_point(|e| e.t < t);
    if i == 0 {
        return ego[0].v;
    }
    if i == ego.len() {
        return ego[i - 1].v;
    }
    EgoState::lerp(&ego[i - 1], &ego[i], t).v
}

/// Per-sensor delivery delay and the ego travel it corresponds to.
pub fn delay_stats(frames: &[DetectionFrame], ego: &[EgoState]) -> BTreeMap<String, DelayReport> {
    let mut per: BTreeMap<String, (Vec<f64>, Vec<f64>, u64)> = BTreeMap::new();
    for f in frames {
        let entry = per.entry(f.sensor.clone()).or_default();
        let delay = f.received_at() - f.t;
        if delay < 0.0 || !delay.is_finite() {
            entry.2 += 1;
            continue;
        }
        entry.0.push(delay);
        entry.1.push(delay * ego_speed_at(ego, f.t).abs());
    }
    per.into_iter()
        .map(|(sensor, (mut delays, moved, negative))| {
            delays.sort_by(f64::total_cmp);
            let n = delays.len();
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            let report = DelayReport {
                frames: n as u64,
                mean_ms: 1e3 * mean(&delays),
                p50_ms: if n == 0 { 0.0 } else { 1e3 * quantile(&delays, 0.5) },
                p90_ms: if n == 0 { 0.0 } else { 1e3 * quantile(&delays, 0.9) },
                mean_moved_m: mean(&moved),
                max_moved_m: moved.iter().copied().fold(0.0, f64::max),
                negative_excluded: negative,
            };
            (sensor, report)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientBin {
    pub start: f64,
    pub end: f64,
    pub residuals: ResidualReport,
}

/// Residual statistics per observation-age bin over `[0, horizon)`.
pub fn transient_profile(records: &[ResidualRecord], bin_width: f64, horizon: f64) -> Vec<TransientBin> {
    assert!(bin_width > 0.0, "bin width must be positive");
    let bins = (horizon / bin_width - 1e-9).ceil().max(0.0) as usize;
    let mut acc = vec![ResidualAccumulator::default(); bins];
    for r in records {
        let b = (r.age / bin_width).floor();
        if b >= 0.0 && (b as usize) < bins {
            acc[b as usize].push(r);
        }
    }
    acc.iter()
        .enumerate()
        .map(|(i, a)| TransientBin {
            start: i as f64 * bin_width,
            end: ((i + 1) as f64 * bin_width).min(horizon),
            residuals: a.report(),
        })
        .collect()
}

/// Flat CSV of binned residual statistics: one row per bin and feature.
pub fn write_bins_csv<W: std::io::Write>(bins: &[TransientBin], w: W) -> crate::error::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_start_s", "bin_end_s", "feature", "n", "mean", "std"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in bins {
        let r = &b.residuals;
        for (name, s) in [("lon", r.lon), ("lat", r.lat), ("yaw", r.yaw), ("v", r.v)] {
            out.write_record([
                b.start.to_string(),
                b.end.to_string(),
                name.to_string(),
                s.n.to_string(),
                fmt(s.mean),
                fmt(s.std),
            ])?;
        }
    }
    out.flush().map_err(|e| crate::error::Error::io("csv output", e))?;
    Ok(())
}

/// Metrics document written by the `evaluate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub residuals: ResidualReport,
    pub precision: Option<PrecisionReport>,
    pub precision_config: PrecisionConfig,
    pub rmse: Option<RmseReport>,
    pub delay: BTreeMap<String, DelayReport>,
    pub transient: Vec<TransientBin>,
    pub notices: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::TrackOutput;
    use crate::simulator::AgentState;
    use proptest::prelude::*;

    fn rec(age: f64, lat: f64) -> ResidualRecord {
        ResidualRecord { uid: 0, sensor: "s".into(), t: 0.0, age, lon: None, lat: Some(lat), yaw: None, v: None }
    }

    #[test]
    fn zero_residuals() {
        let r = residual_stats(&[rec(0.0, 0.0), rec(0.1, 0.0), rec(0.2, 0.0)]);
        assert_eq!((r.lat.mean, r.lat.std), (Some(0.0), Some(0.0)));
        assert_eq!(r.lon.n, 0);
    }

    #[test]
    fn two_point_sample_std() {
        let r = residual_stats(&[rec(0.0, -1.0), rec(0.0, 1.0)]);
        assert_eq!(r.lat.mean, Some(0.0));
        assert!((r.lat.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_report() {
        let r = residual_stats(&[]);
        assert!(r.is_empty());
        assert_eq!(r.lat.mean, None);
    }

    #[test]
    fn residual_frame_follows_heading() {
        let f = [Feature::X, Feature::Y];
        // heading +y: forward is +y, left is -x
        let prior = KinematicState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let r = ResidualRecord::from_innovation(1, "s", 0.0, 0.0, &prior, &f, &DVector::from_row_slice(&[-1.0, 2.0]));
        assert!((r.lon.unwrap() - 2.0).abs() < 1e-12);
        assert!((r.lat.unwrap() - 1.0).abs() < 1e-12);
        // heading +π/2 points along -x
        let prior = KinematicState::new(0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let r = ResidualRecord::from_innovation(1, "s", 0.0, 0.0, &prior, &f, &DVector::from_row_slice(&[-1.0, 2.0]));
        assert!((r.lon.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.lat.unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn precision_arithmetic() {
        assert_eq!(PrecisionReport::from_counts(1, 1).precision, Some(0.5));
        assert_eq!(PrecisionReport::from_counts(0, 0).precision, None);
    }

    fn truth_line(n: usize) -> Vec<TruthFrame> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 0.01;
                TruthFrame {
                    t,
                    agents: vec![
                        AgentState { id: 0, ego: true, x: 0.0, y: 50.0 * t, yaw: 0.0, v: 50.0, yaw_rate: 0.0 },
                        AgentState { id: 1, ego: false, x: 5.0, y: 20.0 + 50.0 * t, yaw: 0.0, v: 50.0, yaw_rate: 0.0 },
                    ],
                }
            })
            .collect()
    }

    fn outputs(n: usize, uid: u64, offset: f64, t0: f64) -> Vec<TrackedObjectList> {
        (0..n)
            .map(|k| {
                let t = t0 + k as f64 * 0.02;
                TrackedObjectList {
                    t_out: t,
                    tracks: vec![TrackOutput {
                        uid,
                        state: KinematicState::new(5.0 + offset, 20.0 + 50.0 * t, 0.0, 50.0, 0.0),
                        cov_diag: vec![0.0; 5],
                    }],
                }
            })
            .collect()
    }

    #[test]
    fn persistent_track_is_true_positive() {
        let truth = truth_line(500);
        let out = outputs(200, 7, 0.5, 0.0);
        let p = precision(&out, &truth, &PrecisionConfig::default());
        assert_eq!((p.tp, p.fp), (1, 0));
        assert_eq!(p.precision, Some(1.0));
        let rm = tracking_rmse(&out, &truth, None);
        assert!((rm.rmse.unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn short_or_distant_tracks_are_false_positives() {
        let truth = truth_line(500);
        let mut out = outputs(50, 1, 0.0, 0.0);
        out.extend(outputs(200, 2, 3.0, 0.0).into_iter().skip(50));
        let p = precision(&out, &truth, &PrecisionConfig::default());
        assert_eq!((p.tp, p.fp), (0, 2));
    }

    #[test]
    fn precision_ignores_uid_labels() {
        let truth = truth_line(500);
        let a = outputs(200, 1, 0.3, 0.0);
        let b = outputs(200, 99, 0.3, 0.0);
        assert_eq!(precision(&a, &truth, &PrecisionConfig::default()), precision(&b, &truth, &PrecisionConfig::default()));
    }

    #[test]
    fn constant_delay_moved_distance() {
        let ego: Vec<EgoState> = (0..100)
            .map(|k| EgoState { t: k as f64 * 0.01, x: 0.0, y: 0.0, yaw: 0.0, v: 50.0, yaw_rate: 0.0 })
            .collect();
        let frames: Vec<DetectionFrame> = (0..10)
            .map(|k| DetectionFrame {
                sensor: "lidar".into(),
                t: k as f64 * 0.05,
                t_rx: Some(k as f64 * 0.05 + 0.1),
                seq: k,
                objects: vec![],
            })
            .collect();
        let r = &delay_stats(&frames, &ego)["lidar"];
        assert!((r.mean_moved_m - 5.0).abs() < 1e-9);
        assert!((r.max_moved_m - 5.0).abs() < 1e-9);
        assert!((r.mean_ms - 100.0).abs() < 1e-9);

        let zero: Vec<DetectionFrame> = frames.iter().map(|f| DetectionFrame { t_rx: None, ..f.clone() }).collect();
        let r = &delay_stats(&zero, &ego)["lidar"];
        assert_eq!((r.mean_ms, r.p90_ms, r.mean_moved_m, r.max_moved_m), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn negative_delay_is_excluded() {
        let frames = vec![DetectionFrame { sensor: "r".into(), t: 1.0, t_rx: Some(0.5), seq: 0, objects: vec![] }];
        let r = &delay_stats(&frames, &[])["r"];
        assert_eq!((r.frames, r.negative_excluded), (0, 1));
    }

    #[test]
    fn single_record_fills_first_bin() {
        let bins = transient_profile(&[rec(0.5, 1.0)], 1.0, 3.0);
        assert_eq!(bins.len(), 3);
        assert_eq!(bins[0].residuals.lat.n, 1);
        assert_eq!(bins[1].residuals.lat.n, 0);
        assert_eq!(bins[2].residuals.lat.mean, None);
    }

    #[test]
    fn bins_csv_has_row_per_feature() {
        let bins = transient_profile(&[rec(0.5, 1.0)], 1.0, 3.0);
        let mut buf = Vec::new();
        write_bins_csv(&bins, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 12);
        assert!(text.contains("0,1,lat,1,1,"));
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    proptest! {
        #[test]
        fn merged_stats_equal_union(
            a in prop::collection::vec(-100.0f64..100.0, 0..50),
            b in prop::collection::vec(-100.0f64..100.0, 0..50),
        ) {
            let mut sa = RunningStats::default();
            a.iter().for_each(|&x| sa.push(x));
            let mut sb = RunningStats::default();
            b.iter().for_each(|&x| sb.push(x));
            let mut all = RunningStats::default();
            a.iter().chain(&b).for_each(|&x| all.push(x));
            sa.merge(&sb);
            let (m, u) = (sa.summary(), all.summary());
            prop_assert_eq!(m.n, u.n);
            if let (Some(x), Some(y)) = (m.mean, u.mean) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
            if let (Some(x), Some(y)) = (m.std, u.std) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y));
            }
        }

        #[test]
        fn p90_not_below_median(v in prop::collection::vec(0.0f64..1.0, 1..100)) {
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            prop_assert!(quantile(&s, 0.9) >= quantile(&s, 0.5));
        }

        #[test]
        fn precision_is_time_shift_invariant(shift in -100.0f64..100.0) {
            let truth = truth_line(400);
            let out = outputs(150, 3, 1.0, 0.5);
            let shifted_truth: Vec<TruthFrame> = truth.iter().map(|f| TruthFrame { t: f.t + shift, agents: f.agents.clone() }).collect();
            let shifted_out: Vec<TrackedObjectList> = out.iter().map(|l| TrackedObjectList { t_out: l.t_out + shift, tracks: l.tracks.clone() }).collect();
            let cfg = PrecisionConfig::default();
            prop_assert_eq!(precision(&out, &truth, &cfg), precision(&shifted_out, &shifted_truth, &cfg));
        }
    }
}
