//! Deterministic synthetic scenarios: agents driving lanes of a closed
//! course, ground truth at a fixed rate, and per-sensor detection logs with
//! noise, latency, missed detections and ghost objects.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::MeasurementStd;
use crate::error::{Error, Result};
use crate::geometry::{global_to_local, heading_of, wrap_angle, Detection, EgoState, Point2, TrackMap};
use crate::motion::Feature;
use crate::pipeline::DetectionFrame;

/// Highest agent speed accepted in a scenario (m/s).
pub const MAX_SPEED: f64 = 80.0;
/// Standard normal 90 % quantile.
const Z90: f64 = 1.281_551_565_545;

/// Oval course: two straights joined by half circles, driven
/// counterclockwise. The right straight runs along +y at `x = radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OvalSpec {
    pub straight_length: f64,
    pub radius: f64,
    pub width: f64,
    /// Map vertex spacing on the arcs (degrees).
    pub arc_step_deg: f64,
    /// Map vertex spacing on the straights (m).
    pub straight_step: f64,
}

impl Default for OvalSpec {
    fn default() -> Self {
        Self {
            straight_length: 500.0,
            radius: 210.0,
            width: 18.0,
            arc_step_deg: 1.0,
            straight_step: 2.0,
        }
    }
}

/// Position, heading and curvature at one point of a lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub curvature: f64,
}

impl OvalSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.straight_length >= 0.0
            && self.radius > 0.0
            && self.width > 0.0
            && self.width < self.radius
            && self.arc_step_deg > 0.0
            && self.arc_step_deg <= 45.0
            && self.straight_step > 0.0;
        if ok && [self.straight_length, self.radius, self.width].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Scenario(format!("invalid oval {self:?}")))
        }
    }

    /// Length of one lap of the lane `offset` metres outside the centerline.
    pub fn lap_length(&self, offset: f64) -> f64 {
        2.0 * self.straight_length + 2.0 * PI * (self.radius + offset)
    }

    /// Pose at arc length `s` along the lane `offset` metres outside the
    /// centerline. `s = 0` is the start of the right straight.
    pub fn lane_pose(&self, s: f64, offset: f64) -> LanePose {
        let l = self.straight_length;
        let r = self.radius + offset;
        let half = 0.5 * l;
        let arc = PI * r;
        let s = s.rem_euclid(self.lap_length(offset));
        if s < l {
            LanePose { x: r, y: -half + s, yaw: 0.0, curvature: 0.0 }
        } else if s < l + arc {
            let th = (s - l) / r;
            LanePose { x: r * th.cos(), y: half + r * th.sin(), yaw: wrap_angle(th), curvature: 1.0 / r }
        } else if s < 2.0 * l + arc {
            let u = s - l - arc;
            LanePose { x: -r, y: half - u, yaw: wrap_angle(PI), curvature: 0.0 }
        } else {
            let th = PI + (s - 2.0 * l - arc) / r;
            LanePose { x: r * th.cos(), y: -half + r * th.sin(), yaw: wrap_angle(th), curvature: 1.0 / r }
        }
    }

    /// Closed polyline of the lane `offset` metres outside the centerline.
    fn lane_polyline(&self, offset: f64) -> Vec<Point2> {
        let l = self.straight_length;
        let r = self.radius + offset;
        let arc = PI * r;
        let mut s_values = Vec::new();
        let straight_steps = (l / self.straight_step).ceil().max(1.0) as usize;
        let arc_steps = (180.0 / self.arc_step_deg).ceil() as usize;
        let mut start = 0.0;
        for (len, steps) in [(l, straight_steps), (arc, arc_steps), (l, straight_steps), (arc, arc_steps)] {
            if len > 0.0 {
                for k in 0..steps {
                    s_values.push(start + len * k as f64 / steps as f64);
                }
            }
            start += len;
        }
        let mut pts: Vec<Point2> = s_values
            .iter()
            .map(|&s| {
                let p = self.lane_pose(s, offset);
                Point2::new(p.x, p.y)
            })
            .collect();
        pts.push(pts[0]);
        pts
    }

    pub fn build_map(&self) -> Result<TrackMap> {
        self.validate()?;
        let hw = 0.5 * self.width;
        TrackMap::new(self.lane_polyline(-hw), self.lane_polyline(hw), self.lane_polyline(0.0))
    }
}

/// Closed polyline course with arc-length lookup, for maps loaded from file.
#[derive(Debug, Clone)]
struct PolylineCourse {
    pts: Vec<Point2>,
    cum: Vec<f64>,
    headings: Vec<f64>,
    curvature: Vec<f64>,
}

impl PolylineCourse {
    fn new(pts: &[Point2]) -> Self {
        let n = pts.len() - 1;
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + w[0].dist(&w[1]));
        }
        let headings: Vec<f64> = pts.windows(2).map(|w| heading_of(w[1].x - w[0].x, w[1].y - w[0].y)).collect();
        let curvature = (0..n)
            .map(|i| {
                let prev = (i + n - 1) % n;
                let turn = wrap_angle(headings[i] - headings[prev]);
                let len = 0.5 * ((cum[i + 1] - cum[i]) + (cum[prev + 1] - cum[prev]));
                turn / len
            })
            .collect();
        Self { pts: pts.to_vec(), cum, headings, curvature }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn pose(&self, s: f64) -> LanePose {
        let s = s.rem_euclid(self.length());
        let i = (self.cum.partition_point(|&c| c <= s) - 1).min(self.headings.len() - 1);
        let seg = self.cum[i + 1] - self.cum[i];
        let w = (s - self.cum[i]) / seg;
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        LanePose {
            x: a.x + w * (b.x - a.x),
            y: a.y + w * (b.y - a.y),
            yaw: self.headings[i],
            curvature: self.curvature[i],
        }
    }
}

/// Where the course comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrackSource {
    Oval(OvalSpec),
    /// Map CSV; agents drive its centerline.
    File(PathBuf),
}

impl Default for TrackSource {
    fn default() -> Self {
        TrackSource::Oval(OvalSpec::default())
    }
}

enum Course {
    Oval(OvalSpec),
    Polyline(PolylineCourse),
}

impl Course {
    fn pose(&self, s: f64, offset: f64) -> LanePose {
        match self {
            Course::Oval(o) => o.lane_pose(s, offset),
            Course::Polyline(p) => p.pose(s),
        }
    }
}

/// Piecewise-linear speed over time; held constant outside the points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeedProfile(pub Vec<[f64; 2]>);

impl SpeedProfile {
    pub fn constant(v: f64) -> Self {
        Self(vec![[0.0, v]])
    }

    fn validate(&self, who: &str) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Scenario(format!("{who}: empty speed profile")));
        }
        for w in self.0.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(Error::Scenario(format!("{who}: profile times must increase")));
            }
        }
        for &[t, v] in &self.0 {
            if !t.is_finite() || !(0.0..=MAX_SPEED).contains(&v) {
                return Err(Error::Scenario(format!(
                    "{who}: speed {v} at t={t} outside [0, {MAX_SPEED}] m/s"
                )));
            }
        }
        Ok(())
    }

    pub fn speed(&self, t: f64) -> f64 {
        let p = &self.0;
        let i = p.partition_point(|q| q[0] <= t);
        if i == 0 {
            return p[0][1];
        }
        if i == p.len() {
            return p[i - 1][1];
        }
        let ([t0, v0], [t1, v1]) = (p[i - 1], p[i]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn accel(&self, t: f64) -> f64 {
        let p = &self.0;
        let i = p.partition_point(|q| q[0] <= t);
        if i == 0 || i == p.len() {
            return 0.0;
        }
        let ([t0, v0], [t1, v1]) = (p[i - 1], p[i]);
        (v1 - v0) / (t1 - t0)
    }

    /// Distance travelled over `[0, t]` (t ≥ 0); exact for the linear pieces.
    pub fn distance(&self, t: f64) -> f64 {
        let mut knots = vec![0.0];
        knots.extend(self.0.iter().map(|q| q[0]).filter(|&k| k > 0.0 && k < t));
        knots.push(t);
        knots
            .windows(2)
            .map(|w| 0.5 * (self.speed(w[0]) + self.speed(w[1])) * (w[1] - w[0]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    /// Arc position on its lane at t = 0 (m).
    pub s0: f64,
    /// Lateral lane offset from the centerline, positive outward (m).
    #[serde(default)]
    pub lane_offset: f64,
    pub speed: SpeedProfile,
}

/// Synthetic sensor: geometry, noise, latency and clutter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSensor {
    pub id: String,
    pub features: Vec<Feature>,
    /// Noise in the ego frame: `x` lateral, `y` longitudinal.
    pub noise: MeasurementStd,
    pub rate_hz: f64,
    /// Time of the first frame (s).
    #[serde(default)]
    pub phase: f64,
    pub max_range: f64,
    #[serde(default)]
    pub min_range: f64,
    /// Range behind the ego (m); 0 = forward-looking only.
    #[serde(default)]
    pub rear_range: f64,
    /// Mean and 90 % quantile of the delivery delay (ms); zero mean = no delay.
    #[serde(default)]
    pub delay_mean_ms: f64,
    #[serde(default)]
    pub delay_p90_ms: f64,
    /// Probability that a visible agent is missing from a frame.
    #[serde(default)]
    pub dropout: f64,
    /// Expected ghost objects per second.
    #[serde(default)]
    pub ghost_rate: f64,
    /// Ghosts lie within this distance of a wall (m).
    #[serde(default = "default_ghost_band")]
    pub ghost_band: f64,
    /// Share of ghosts placed beyond or within 0.3 m of a wall.
    #[serde(default = "default_offtrack_fraction")]
    pub ghost_offtrack_fraction: f64,
}

fn default_ghost_band() -> f64 {
    1.5
}

fn default_offtrack_fraction() -> f64 {
    0.6
}

/// Clearance from a wall below which ghosts count as off-track.
const GHOST_WALL_CLEARANCE: f64 = 0.3;

impl SimSensor {
    pub fn lidar() -> Self {
        Self {
            id: "lidar_cluster".into(),
            features: vec![Feature::X, Feature::Y, Feature::Yaw],
            noise: MeasurementStd { x: 0.3, y: 0.3, yaw_deg: 5.0, v: 0.0 },
            rate_hz: 20.0,
            phase: 0.0,
            max_range: 98.0,
            min_range: 0.0,
            rear_range: 57.0,
            delay_mean_ms: 151.0,
            delay_p90_ms: 191.0,
            dropout: 0.05,
            ghost_rate: 0.5,
            ghost_band: default_ghost_band(),
            ghost_offtrack_fraction: default_offtrack_fraction(),
        }
    }

    pub fn radar() -> Self {
        Self {
            id: "radar".into(),
            features: vec![Feature::X, Feature::Y, Feature::V],
            noise: MeasurementStd { x: 0.5, y: 0.5, yaw_deg: 0.0, v: 0.2 },
            rate_hz: 20.0,
            phase: 0.01,
            max_range: 105.0,
            min_range: 0.0,
            rear_range: 0.0,
            delay_mean_ms: 62.0,
            delay_p90_ms: 89.0,
            dropout: 0.1,
            ghost_rate: 2.0,
            ghost_band: default_ghost_band(),
            ghost_offtrack_fraction: default_offtrack_fraction(),
        }
    }

    /// Same sensor without noise, delay, dropouts or ghosts.
    pub fn ideal(mut self) -> Self {
        self.noise = MeasurementStd { x: 0.0, y: 0.0, yaw_deg: 0.0, v: 0.0 };
        self.delay_mean_ms = 0.0;
        self.delay_p90_ms = 0.0;
        self.dropout = 0.0;
        self.ghost_rate = 0.0;
        self
    }

    fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Scenario(format!("sensor `{}`: {m}", self.id)));
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return err("rate_hz must be > 0");
        }
        let n = &self.noise;
        if [n.x, n.y, n.yaw_deg, n.v].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return err("noise stds must be >= 0");
        }
        if !(self.max_range > 0.0 && self.min_range >= 0.0 && self.min_range < self.max_range && self.rear_range >= 0.0) {
            return err("invalid range limits");
        }
        if !(0.0..=1.0).contains(&self.dropout) || !(0.0..=1.0).contains(&self.ghost_offtrack_fraction) {
            return err("probabilities must lie in [0, 1]");
        }
        if !(self.ghost_rate >= 0.0 && self.ghost_band > GHOST_WALL_CLEARANCE) {
            return err("ghost_rate must be >= 0 and ghost_band > 0.3 m");
        }
        self.delay_distribution()?;
        Ok(())
    }

    /// Lognormal delay (s) matching the configured mean and 90 % quantile.
    pub fn delay_distribution(&self) -> Result<Option<LogNormal<f64>>> {
        if self.delay_mean_ms == 0.0 && self.delay_p90_ms <= 0.0 {
            return Ok(None);
        }
        let (m, q) = (self.delay_mean_ms / 1e3, self.delay_p90_ms / 1e3);
        let bad = || Error::Scenario(format!("sensor `{}`: no lognormal with mean {m} s and p90 {q} s", self.id));
        if !(m > 0.0 && q > m) {
            return Err(bad());
        }
        let k = (q / m).ln();
        let disc = Z90 * Z90 - 2.0 * k;
        if disc < 0.0 {
            return Err(bad());
        }
        let sigma = Z90 - disc.sqrt();
        let mu = m.ln() - 0.5 * sigma * sigma;
        LogNormal::new(mu, sigma).map(Some).map_err(|_| bad())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    #[serde(default)]
    pub track: TrackSource,
    /// Agent 0 is the ego vehicle.
    pub agents: Vec<AgentSpec>,
    pub duration: f64,
    pub sensors: Vec<SimSensor>,
    #[serde(default = "default_truth_rate")]
    pub truth_rate_hz: f64,
    #[serde(default = "default_car_length")]
    pub car_length: f64,
    #[serde(default = "default_car_width")]
    pub car_width: f64,
}

fn default_truth_rate() -> f64 {
    100.0
}

fn default_car_length() -> f64 {
    5.0
}

fn default_car_width() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: u32,
    pub ego: bool,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub yaw_rate: f64,
}

/// Ground truth of all agents at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFrame {
    pub t: f64,
    pub agents: Vec<AgentState>,
}

pub struct ScenarioOutput {
    pub map: TrackMap,
    pub truth: Vec<TruthFrame>,
    pub ego: Vec<EgoState>,
    /// Frames per sensor id, in sensor-time order.
    pub frames: BTreeMap<String, Vec<DetectionFrame>>,
}

impl ScenarioOutput {
    /// All frames of all sensors, ordered by delivery time.
    pub fn frames_by_delivery(&self) -> Vec<DetectionFrame> {
        let mut all: Vec<DetectionFrame> = self.frames.values().flatten().cloned().collect();
        all.sort_by(|a, b| {
            a.received_at()
                .total_cmp(&b.received_at())
                .then_with(|| a.sensor.cmp(&b.sensor))
                .then_with(|| a.seq.cmp(&b.seq))
        });
        all
    }
}

/// Prepared scenario: validated spec with its course and map.
pub struct World<'a> {
    spec: &'a ScenarioSpec,
    course: Course,
    map: TrackMap,
    half_width: f64,
}

impl<'a> World<'a> {
    pub fn new(spec: &'a ScenarioSpec) -> Result<Self> {
        if !(spec.duration > 0.0 && spec.duration.is_finite()) {
            return Err(Error::Scenario("duration must be > 0".into()));
        }
        if spec.truth_rate_hz.is_nan() || spec.truth_rate_hz <= 0.0 {
            return Err(Error::Scenario("truth_rate_hz must be > 0".into()));
        }
        if spec.agents.is_empty() {
            return Err(Error::Scenario("at least the ego agent is required".into()));
        }
        let (course, map, half_width) = match &spec.track {
            TrackSource::Oval(o) => (Course::Oval(*o), o.build_map()?, 0.5 * o.width),
            TrackSource::File(path) => {
                let map = TrackMap::load(path)?;
                (Course::Polyline(PolylineCourse::new(map.centerline())), map, 0.0)
            }
        };
        let file_map = matches!(course, Course::Polyline(_));
        for (i, a) in spec.agents.iter().enumerate() {
            a.speed.validate(&format!("agent {i}"))?;
            if file_map && a.lane_offset != 0.0 {
                return Err(Error::Scenario(format!("agent {i}: lane offsets need an oval track")));
            }
            if !file_map && a.lane_offset.abs() >= half_width {
                return Err(Error::Scenario(format!("agent {i}: lane offset outside the track")));
            }
        }
        for s in &spec.sensors {
            s.validate()?;
            if file_map && s.ghost_rate > 0.0 {
                return Err(Error::Scenario(format!("sensor `{}`: ghosts need an oval track", s.id)));
            }
        }
        let world = Self { spec, course, map, half_width };
        world.check_initial_overlap()?;
        Ok(world)
    }

    pub fn map(&self) -> &TrackMap {
        &self.map
    }

    fn check_initial_overlap(&self) -> Result<()> {
        let states = self.agents_at(0.0);
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                let (a, b) = (&states[i], &states[j]);
                let ego = EgoState { t: 0.0, x: a.x, y: a.y, yaw: a.yaw, v: 0.0, yaw_rate: 0.0 };
                let rel = global_to_local(&Detection::at(b.x, b.y), &ego)?;
                if rel.y.abs() < self.spec.car_length && rel.x.abs() < self.spec.car_width {
                    return Err(Error::Scenario(format!("agents {i} and {j} overlap at t = 0")));
                }
            }
        }
        Ok(())
    }

    /// Exact state of agent `i` at time `t`.
    pub fn agent_at(&self, i: usize, t: f64) -> AgentState {
        let a = &self.spec.agents[i];
        let s = a.s0 + a.speed.distance(t);
        let p = self.course.pose(s, a.lane_offset);
        let v = a.speed.speed(t);
        AgentState {
            id: i as u32,
            ego: i == 0,
            x: p.x,
            y: p.y,
            yaw: p.yaw,
            v,
            yaw_rate: v * p.curvature,
        }
    }

    pub fn agents_at(&self, t: f64) -> Vec<AgentState> {
        (0..self.spec.agents.len()).map(|i| self.agent_at(i, t)).collect()
    }

    fn ego_at(&self, t: f64) -> EgoState {
        let a = self.agent_at(0, t);
        EgoState { t, x: a.x, y: a.y, yaw: a.yaw, v: a.v, yaw_rate: a.yaw_rate }
    }

    fn frame(&self, sensor: &SimSensor, k: u64, rng: &mut ChaCha8Rng, delay: &Option<LogNormal<f64>>) -> Result<DetectionFrame> {
        let t = sensor.phase + k as f64 / sensor.rate_hz;
        let ego = self.ego_at(t);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut objects = Vec::new();
        let measures = |f| sensor.features.contains(&f);
        for a in self.agents_at(t).iter().skip(1) {
            let rel = global_to_local(&Detection::at(a.x, a.y), &ego)?;
            let range = rel.x.hypot(rel.y);
            if range > sensor.max_range || range < sensor.min_range || rel.y < -sensor.rear_range {
                continue;
            }
            if rng.random::<f64>() < sensor.dropout {
                continue;
            }
            let n = &sensor.noise;
            objects.push(Detection {
                x: rel.x + n.x * unit.sample(rng),
                y: rel.y + n.y * unit.sample(rng),
                yaw: measures(Feature::Yaw)
                    .then(|| wrap_angle(a.yaw - ego.yaw + n.yaw_deg.to_radians() * unit.sample(rng))),
                v: measures(Feature::V).then(|| a.v + n.v * unit.sample(rng)),
            });
        }
        let expected = sensor.ghost_rate / sensor.rate_hz;
        if expected > 0.0 {
            let count = Poisson::new(expected).expect("positive rate").sample(rng) as usize;
            for _ in 0..count {
                objects.push(self.ghost(sensor, &ego, t, rng)?);
            }
        }
        let t_rx = match delay {
            Some(d) => t + d.sample(rng),
            None => t,
        };
        Ok(DetectionFrame { sensor: sensor.id.clone(), t, t_rx: Some(t_rx), seq: k, objects })
    }

    /// Clutter object near one of the walls, within the sensor's reach
    /// along the course.
    fn ghost(&self, sensor: &SimSensor, ego: &EgoState, t: f64, rng: &mut ChaCha8Rng) -> Result<Detection> {
        let ego_spec = &self.spec.agents[0];
        let s = ego_spec.s0 + ego_spec.speed.distance(t) + rng.random_range(-sensor.rear_range..=sensor.max_range);
        let into_track = if rng.random::<f64>() < sensor.ghost_offtrack_fraction {
            rng.random_range(-sensor.ghost_band..GHOST_WALL_CLEARANCE)
        } else {
            rng.random_range(GHOST_WALL_CLEARANCE..=sensor.ghost_band)
        };
        let outer = rng.random::<bool>();
        let offset = if outer {
            self.half_width - into_track
        } else {
            -(self.half_width - into_track)
        };
        let p = self.course.pose(s, offset);
        let local = global_to_local(
            &Detection {
                x: p.x,
                y: p.y,
                yaw: Some(p.yaw),
                v: None,
            },
            ego,
        )?;
        let measures = |f| sensor.features.contains(&f);
        Ok(Detection {
            x: local.x,
            y: local.y,
            yaw: if measures(Feature::Yaw) { local.yaw } else { None },
            v: measures(Feature::V).then(|| ego.v * rng.random_range(0.5..1.2)),
        })
    }
}

/// Generates ground truth, ego log and detection logs. Identical specs
/// produce identical output.
pub fn generate(spec: &ScenarioSpec) -> Result<ScenarioOutput> {
    let world = World::new(spec)?;
    let n_truth = (spec.duration * spec.truth_rate_hz + 1e-9).floor() as u64;
    let mut truth = Vec::with_capacity(n_truth as usize + 1);
    let mut ego = Vec::with_capacity(n_truth as usize + 1);
    for k in 0..=n_truth {
        let t = k as f64 / spec.truth_rate_hz;
        truth.push(TruthFrame { t, agents: world.agents_at(t) });
        ego.push(world.ego_at(t));
    }

    let mut frames = BTreeMap::new();
    for (i, sensor) in spec.sensors.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let delay = sensor.delay_distribution()?;
        let mut list = Vec::new();
        let mut k = 0u64;
        while sensor.phase + k as f64 / sensor.rate_hz <= spec.duration + 1e-9 {
            list.push(world.frame(sensor, k, &mut rng, &delay)?);
            k += 1;
        }
        if frames.insert(sensor.id.clone(), list).is_some() {
            return Err(Error::Scenario(format!("duplicate sensor id `{}`", sensor.id)));
        }
    }
    Ok(ScenarioOutput { map: world.map, truth, ego, frames })
}

/// Parameters of the two-car overtake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OvertakeParams {
    pub leader_speed: f64,
    pub trailer_speed: f64,
    /// Initial distance of the leader ahead of the trailer (m).
    pub gap: f64,
    /// Lane offsets of trailer (ego) and leader (m).
    pub trailer_lane: f64,
    pub leader_lane: f64,
    pub duration: f64,
    pub seed: u64,
}

impl Default for OvertakeParams {
    fn default() -> Self {
        Self {
            leader_speed: 60.0,
            trailer_speed: 63.0,
            gap: 50.0,
            trailer_lane: -1.5,
            leader_lane: 1.5,
            duration: 40.0,
            seed: 0,
        }
    }
}

/// Two cars on the default oval: the ego trails and overtakes a slower
/// leader on a parallel lane, with the default lidar and radar.
pub fn overtake_scenario(p: &OvertakeParams) -> Result<ScenarioSpec> {
    if p.leader_speed == p.trailer_speed {
        return Err(Error::Scenario("leader and trailer speeds are equal; no overtake".into()));
    }
    if p.trailer_speed < p.leader_speed {
        return Err(Error::Scenario("trailer must be faster than the leader".into()));
    }
    let car_width = default_car_width();
    if (p.leader_lane - p.trailer_lane).abs() < car_width {
        return Err(Error::Scenario(format!("lanes must be at least {car_width} m apart")));
    }
    Ok(ScenarioSpec {
        seed: p.seed,
        track: TrackSource::default(),
        agents: vec![
            AgentSpec { s0: 0.0, lane_offset: p.trailer_lane, speed: SpeedProfile::constant(p.trailer_speed) },
            AgentSpec { s0: p.gap, lane_offset: p.leader_lane, speed: SpeedProfile::constant(p.leader_speed) },
        ],
        duration: p.duration,
        sensors: vec![SimSensor::lidar(), SimSensor::radar()],
        truth_rate_hz: default_truth_rate(),
        car_length: default_car_length(),
        car_width,
    })
}
