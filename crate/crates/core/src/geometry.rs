//! Planar frames, the track map, ego smoothing and the out-of-track filter.
//!
//! Headings follow the convention of the CTRV model: ψ is measured
//! counterclockwise from the global +y axis, so a body moving with heading ψ
//! travels along `(-sin ψ, cos ψ)`. In the vehicle frame +y points forward
//! and +x points to the right.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle to `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = a - two_pi * ((a + PI) / two_pi).floor();
    if w >= PI {
        w -= two_pi;
    }
    if w < -PI {
        w += two_pi;
    }
    w
}

/// Unit vector along heading `yaw`.
#[inline]
pub fn heading_direction(yaw: f64) -> [f64; 2] {
    [-yaw.sin(), yaw.cos()]
}

/// Heading of the direction `(dx, dy)`.
#[inline]
pub fn heading_of(dx: f64, dy: f64) -> f64 {
    wrap_angle((-dx).atan2(dy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// One object of a detection list: position plus whatever optional features
/// the sensor reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
}

impl Detection {
    pub fn at(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            yaw: None,
            v: None,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.yaw.is_none_or(f64::is_finite)
            && self.v.is_none_or(f64::is_finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

impl EgoState {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.x.is_finite()
            && self.y.is_finite()
            && self.yaw.is_finite()
            && self.v.is_finite()
            && self.yaw_rate.is_finite()
    }

    /// Linear interpolation between two ego samples; heading along the
    /// shorter arc.
    pub fn lerp(a: &EgoState, b: &EgoState, t: f64) -> EgoState {
        let span = b.t - a.t;
        if span <= 0.0 {
            return *b;
        }
        let w = ((t - a.t) / span).clamp(0.0, 1.0);
        let mix = |p: f64, q: f64| p + w * (q - p);
        EgoState {
            t,
            x: mix(a.x, b.x),
            y: mix(a.y, b.y),
            yaw: wrap_angle(a.yaw + w * wrap_angle(b.yaw - a.yaw)),
            v: mix(a.v, b.v),
            yaw_rate: mix(a.yaw_rate, b.yaw_rate),
        }
    }
}

/// Rigid transform of a vehicle-frame detection into the global frame.
pub fn local_to_global(det: &Detection, ego: &EgoState) -> Result<Detection> {
    if !det.is_finite() {
        return Err(Error::NonFinite("detection"));
    }
    if !ego.is_finite() {
        return Err(Error::NonFinite("ego state"));
    }
    let (s, c) = ego.yaw.sin_cos();
    Ok(Detection {
        x: ego.x + c * det.x - s * det.y,
        y: ego.y + s * det.x + c * det.y,
        yaw: det.yaw.map(|yaw| wrap_angle(yaw + ego.yaw)),
        v: det.v,
    })
}

/// Inverse of [`local_to_global`].
pub fn global_to_local(det: &Detection, ego: &EgoState) -> Result<Detection> {
    if !det.is_finite() {
        return Err(Error::NonFinite("detection"));
    }
    if !ego.is_finite() {
        return Err(Error::NonFinite("ego state"));
    }
    let (s, c) = ego.yaw.sin_cos();
    let dx = det.x - ego.x;
    let dy = det.y - ego.y;
    Ok(Detection {
        x: c * dx + s * dy,
        y: -s * dx + c * dy,
        yaw: det.yaw.map(|yaw| wrap_angle(yaw - ego.yaw)),
        v: det.v,
    })
}

/// Smoothing factor of the ego low-pass filter, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPassAlpha(f64);

impl LowPassAlpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::config(
                "ego_lowpass_alpha",
                format!("{alpha} is outside (0, 1]"),
            ))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// First-order exponential smoothing of the ego state.
///
/// The previous output is carried forward to `raw.t` with its own speed and
/// yaw rate before blending, so a stream that moves consistently with its
/// reported velocity passes through without lag. Heading is blended on the
/// unit circle.
pub fn lowpass_ego(prev: &EgoState, raw: &EgoState, alpha: LowPassAlpha) -> EgoState {
    let a = alpha.get();
    let dt = (raw.t - prev.t).max(0.0);
    let [fx, fy] = heading_direction(prev.yaw);
    let px = prev.x + prev.v * dt * fx;
    let py = prev.y + prev.v * dt * fy;
    let pyaw = prev.yaw + prev.yaw_rate * dt;

    let s = a * raw.yaw.sin() + (1.0 - a) * pyaw.sin();
    let c = a * raw.yaw.cos() + (1.0 - a) * pyaw.cos();
    let yaw = if s.hypot(c) > 1e-12 {
        wrap_angle(s.atan2(c))
    } else {
        wrap_angle(raw.yaw)
    };

    EgoState {
        t: raw.t,
        x: a * raw.x + (1.0 - a) * px,
        y: a * raw.y + (1.0 - a) * py,
        yaw,
        v: a * raw.v + (1.0 - a) * prev.v,
        yaw_rate: a * raw.yaw_rate + (1.0 - a) * prev.yaw_rate,
    }
}

// ---------------------------------------------------------------------------
// Track map
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
struct Aabb {
    min: Point2,
    max: Point2,
}

impl Aabb {
    fn of(points: &[Point2]) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    fn contains(&self, p: &Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Track boundaries and centerline as closed polylines.
///
/// Immutable once built. Centerline headings are the central-difference
/// heading from each vertex's predecessor to its successor.
#[derive(Debug, Clone)]
pub struct TrackMap {
    inner: Vec<Point2>,
    outer: Vec<Point2>,
    center: Vec<Point2>,
    center_headings: Vec<f64>,
    outer_box: Aabb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Inner,
    Outer,
    Center,
}

#[derive(Debug, Serialize, Deserialize)]
struct MapRow {
    kind: BoundaryKind,
    x_m: f64,
    y_m: f64,
}

fn validate_polyline(name: &str, pts: &[Point2]) -> Result<()> {
    if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Map(format!("{name} polyline has non-finite vertices")));
    }
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else {
        return Err(Error::Map(format!("{name} polyline is empty")));
    };
    if first != last {
        return Err(Error::Map(format!(
            "{name} polyline is not closed (first vertex must equal last)"
        )));
    }
    let distinct = pts.len() - 1;
    if distinct < 4 {
        return Err(Error::Map(format!(
            "{name} polyline needs at least 4 distinct vertices, got {distinct}"
        )));
    }
    if pts.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Map(format!(
            "{name} polyline has repeated consecutive vertices"
        )));
    }
    Ok(())
}

/// Ray-casting point-in-polygon on a closed polyline.
fn point_in_polygon(p: &Point2, poly: &[Point2]) -> bool {
    let mut inside = false;
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn segment_distance_sq(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let len_sq = abx * abx + aby * aby;
    let t = if len_sq > 0.0 {
        (((p.x - a.x) * abx + (p.y - a.y) * aby) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let qx = a.x + t * abx;
    let qy = a.y + t * aby;
    (p.x - qx).powi(2) + (p.y - qy).powi(2)
}

/// Euclidean distance from `p` to the nearest segment of a polyline.
pub fn polyline_distance(p: &Point2, poly: &[Point2]) -> f64 {
    poly.windows(2)
        .map(|w| segment_distance_sq(p, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

impl TrackMap {
    pub fn new(inner: Vec<Point2>, outer: Vec<Point2>, center: Vec<Point2>) -> Result<Self> {
        validate_polyline("inner", &inner)?;
        validate_polyline("outer", &outer)?;
        validate_polyline("center", &center)?;

        if let Some(p) = inner.iter().find(|p| !point_in_polygon(p, &outer)) {
            return Err(Error::Map(format!(
                "inner boundary vertex ({}, {}) lies outside the outer boundary",
                p.x, p.y
            )));
        }

        let n = center.len() - 1;
        // Central difference: on a sampled arc the chord from the previous to
        // the next vertex is parallel to the tangent at the vertex.
        let center_headings = (0..n)
            .map(|i| {
                let a = center[(i + n - 1) % n];
                let b = center[i + 1];
                heading_of(b.x - a.x, b.y - a.y)
            })
            .collect();

        let map = Self {
            outer_box: Aabb::of(&outer),
            inner,
            outer,
            center,
            center_headings,
        };

        if let Some(p) = map
            .centerline()
            .iter()
            .find(|p| !map.is_inside_track(p, 0.0, 0.0))
        {
            return Err(Error::Map(format!(
                "centerline vertex ({}, {}) is not between the boundaries",
                p.x, p.y
            )));
        }
        Ok(map)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut inner = Vec::new();
        let mut outer = Vec::new();
        let mut center = Vec::new();
        for row in rdr.deserialize::<MapRow>() {
            let row = row?;
            let p = Point2::new(row.x_m, row.y_m);
            match row.kind {
                BoundaryKind::Inner => inner.push(p),
                BoundaryKind::Outer => outer.push(p),
                BoundaryKind::Center => center.push(p),
            }
        }
        Self::new(inner, outer, center)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (kind, poly) in [
            (BoundaryKind::Inner, &self.inner),
            (BoundaryKind::Outer, &self.outer),
            (BoundaryKind::Center, &self.center),
        ] {
            for p in poly {
                w.serialize(MapRow {
                    kind,
                    x_m: p.x,
                    y_m: p.y,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io("track map", e))?;
        Ok(())
    }

    pub fn inner(&self) -> &[Point2] {
        &self.inner
    }

    pub fn outer(&self) -> &[Point2] {
        &self.outer
    }

    /// Closed centerline polyline (last vertex repeats the first).
    pub fn centerline(&self) -> &[Point2] {
        &self.center
    }

    /// Heading per distinct centerline vertex.
    pub fn centerline_headings(&self) -> &[f64] {
        &self.center_headings
    }

    /// True iff `p` lies inside the drivable annulus, shrunk by `buffer_out`
    /// from the outer wall and by `buffer_in` from the inner wall.
    pub fn is_inside_track(&self, p: &Point2, buffer_out: f64, buffer_in: f64) -> bool {
        if !self.outer_box.contains(p) || !point_in_polygon(p, &self.outer) {
            return false;
        }
        if buffer_out > 0.0 && polyline_distance(p, &self.outer) < buffer_out {
            return false;
        }
        if point_in_polygon(p, &self.inner) {
            return false;
        }
        if buffer_in > 0.0 && polyline_distance(p, &self.inner) < buffer_in {
            return false;
        }
        true
    }

    /// Index of the nearest distinct centerline vertex. Ties go to the lower
    /// index.
    pub fn nearest_centerline_index(&self, p: &Point2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.center[..self.center.len() - 1].iter().enumerate() {
            let d = c.dist_sq(p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn centerline_heading_at(&self, p: &Point2) -> f64 {
        self.center_headings[self.nearest_centerline_index(p)]
    }
}
