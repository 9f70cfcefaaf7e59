//! Extended Kalman filter over the kinematic models, noise construction and
//! track initialization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::SensorConfig;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Detection, EgoState, Point2, TrackMap};
use crate::motion::{
    jacobian_f, observation_matrix, propagate, Feature, KinematicState, ModelKind, IDX_YAW,
};

/// Symmetry and PSD tolerance for covariances.
pub const COV_TOLERANCE: f64 = 1e-9;
/// Innovation covariances above this condition number are not inverted.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// State estimate with covariance. The covariance dimension matches the
/// model the estimate is propagated with.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: KinematicState,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: KinematicState, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    /// Checks symmetry and positive semi-definiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.cov.ncols() != n {
            return Err(Error::Dimension(format!("covariance is {:?}", self.cov.shape())));
        }
        let asym = (&self.cov - self.cov.transpose()).abs().max();
        if asym > COV_TOLERANCE {
            return Err(Error::Data(format!("covariance asymmetric by {asym:e}")));
        }
        check_psd(&self.cov)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn check_psd(p: &DMatrix<f64>) -> Result<()> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::FilterHealth {
            eigenvalue: f64::NAN,
        });
    }
    let n = p.nrows();
    let shifted = p + DMatrix::<f64>::identity(n, n) * COV_TOLERANCE;
    if shifted.cholesky().is_some() {
        return Ok(());
    }
    let min_eig = p.clone().symmetric_eigenvalues().min();
    if min_eig < -COV_TOLERANCE {
        Err(Error::FilterHealth { eigenvalue: min_eig })
    } else {
        Ok(())
    }
}

/// Per-state standard deviations. Angles are in degrees, as they appear in
/// configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateStd {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
    pub v: f64,
    pub yaw_rate_deg: f64,
    #[serde(default = "default_accel_std")]
    pub accel: f64,
}

fn default_accel_std() -> f64 {
    2.0
}

impl StateStd {
    /// Standard deviations in SI units, ordered like the state vector.
    pub fn si(&self, model: ModelKind) -> Vec<f64> {
        let all = [
            self.x,
            self.y,
            self.yaw_deg.to_radians(),
            self.v,
            self.yaw_rate_deg.to_radians(),
            self.accel,
        ];
        all[..model.state_dim()].to_vec()
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        let vals = [
            ("x", self.x),
            ("y", self.y),
            ("yaw_deg", self.yaw_deg),
            ("v", self.v),
            ("yaw_rate_deg", self.yaw_rate_deg),
            ("accel", self.accel),
        ];
        for (name, v) in vals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{key}.{name}"), format!("{v} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn covariance(&self, model: ModelKind) -> DMatrix<f64> {
        let var: Vec<f64> = self.si(model).iter().map(|s| s * s).collect();
        DMatrix::from_diagonal(&DVector::from_vec(var))
    }
}

/// Process noise for one filter step: per-state random-walk intensities
/// (`std` per √s) integrated over `dt`.
pub fn process_noise(std: &StateStd, model: ModelKind, dt: f64) -> DMatrix<f64> {
    std.covariance(model) * dt
}

/// Diagonal measurement covariance from per-feature standard deviations.
pub fn measurement_covariance(stds: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        stds.len(),
        stds.iter().map(|s| s * s),
    ))
}

/// EKF prior: `x ← f(x)`, `P ← F P Fᵀ + Q`.
pub fn predict(g: &Gaussian, dt: f64, model: ModelKind, q: &DMatrix<f64>) -> Result<Gaussian> {
    let n = model.state_dim();
    if g.dim() != n || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "{model} expects {n}x{n}, got P {:?} and Q {:?}",
            g.cov.shape(),
            q.shape()
        )));
    }
    let f = jacobian_f(&g.mean, dt, model)?;
    let mean = propagate(&g.mean, dt, model)?;
    let mut cov = &f * &g.cov * f.transpose() + q;
    symmetrize(&mut cov);
    check_psd(&cov)?;
    Ok(Gaussian { mean, cov })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateStatus {
    Applied,
    /// Innovation covariance too ill-conditioned; the prior was kept.
    Rejected { condition: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    pub posterior: Gaussian,
    /// Pre-update innovation `z - h(x̂)`, yaw entries wrapped.
    pub residual: DVector<f64>,
    pub status: UpdateStatus,
}

/// Innovation `z - h(x̂)` with angular components wrapped.
pub fn innovation(mean: &KinematicState, z: &DVector<f64>, features: &[Feature]) -> DVector<f64> {
    let mut y = z - crate::motion::observe(mean, features);
    for (i, f) in features.iter().enumerate() {
        if f.is_angle() {
            y[i] = wrap_angle(y[i]);
        }
    }
    y
}

/// EKF posterior for measurement `z` of `features` with noise `r`.
pub fn update(
    g: &Gaussian,
    z: &DVector<f64>,
    features: &[Feature],
    r: &DMatrix<f64>,
) -> Result<UpdateResult> {
    let m = features.len();
    if z.len() != m || r.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "{m} features, z has {} entries, R is {:?}",
            z.len(),
            r.shape()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurement"));
    }
    let residual = innovation(&g.mean, z, features);
    if m == 0 {
        return Ok(UpdateResult {
            posterior: g.clone(),
            residual,
            status: UpdateStatus::Applied,
        });
    }
    let n = g.dim();
    let h = observation_matrix(features, n);
    let pht = &g.cov * h.transpose();
    let mut s = &h * &pht + r;
    symmetrize(&mut s);

    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let reject = |condition| UpdateResult {
        posterior: g.clone(),
        residual: residual.clone(),
        status: UpdateStatus::Rejected { condition },
    };
    if !(condition.is_finite() && condition <= MAX_INNOVATION_CONDITION) {
        return Ok(reject(condition));
    }
    let Some(s_inv) = s.clone().cholesky().map(|c| c.inverse()) else {
        return Ok(reject(condition));
    };

    let k = &pht * s_inv;
    let mut x = g.mean.to_vector_dim(n) + &k * &residual;
    x[IDX_YAW] = wrap_angle(x[IDX_YAW]);
    let mut cov = (DMatrix::identity(n, n) - &k * &h) * &g.cov;
    symmetrize(&mut cov);
    check_psd(&cov)?;

    Ok(UpdateResult {
        posterior: Gaussian {
            mean: KinematicState::from_vector(&x),
            cov,
        },
        residual,
        status: UpdateStatus::Applied,
    })
}

/// Joseph-form posterior covariance `(I-KH)P(I-KH)ᵀ + KRKᵀ`.
pub fn joseph_covariance(
    p: &DMatrix<f64>,
    k: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - k * h;
    &a * p * a.transpose() + k * r * k.transpose()
}

impl KinematicState {
    fn to_vector_dim(self, n: usize) -> DVector<f64> {
        let full = [self.x, self.y, self.yaw, self.v, self.yaw_rate, self.accel];
        DVector::from_column_slice(&full[..n])
    }
}

/// Track initialization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPolicy {
    /// Factor on ego speed used as the speed guess for new objects.
    pub k_v: f64,
    pub init_std: StateStd,
}

/// Initial estimate for a new track from its first global detection.
///
/// Position comes from the detection. Heading comes from the detection only
/// when the sensor reports it and is not configured to use the centerline,
/// otherwise from the nearest centerline vertex. Speed comes from the
/// detection when measured, otherwise `k_v` times the ego speed.
pub fn init_track_state(
    det: &Detection,
    ego: &EgoState,
    map: &TrackMap,
    policy: &InitPolicy,
    sensor: &SensorConfig,
    model: ModelKind,
) -> Gaussian {
    let measures = |f: Feature| sensor.features.contains(&f);
    let yaw = match det.yaw {
        Some(yaw) if measures(Feature::Yaw) && !sensor.yaw_from_centerline => wrap_angle(yaw),
        _ => map.centerline_heading_at(&det.position()),
    };
    let v = match det.v {
        Some(v) if measures(Feature::V) => v,
        _ => policy.k_v * ego.v,
    };
    Gaussian {
        mean: KinematicState::new(det.x, det.y, yaw, v, 0.0),
        cov: policy.init_std.covariance(model),
    }
}

/// Centerline heading at `pos`, packaged as a yaw measurement `(ψ, std)`.
pub fn pseudo_yaw_measurement(pos: &Point2, map: &TrackMap, yaw_std_deg: f64) -> (f64, f64) {
    (map.centerline_heading_at(pos), yaw_std_deg.to_radians())
}
