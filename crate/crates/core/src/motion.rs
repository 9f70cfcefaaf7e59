//! Kinematic point-mass models: CTRV (default) plus CV and CTRA baselines.
//!
//! All three share a single explicit Euler step. Positions advance with the
//! pre-step heading and speed, then heading advances by `Δt·ψ̇` (CTRV, CTRA)
//! and speed by `Δt·a` (CTRA only).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wrap_angle;

pub const IDX_X: usize = 0;
pub const IDX_Y: usize = 1;
pub const IDX_YAW: usize = 2;
pub const IDX_V: usize = 3;
pub const IDX_YAW_RATE: usize = 4;
pub const IDX_ACCEL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ModelKind {
    #[default]
    #[serde(rename = "CTRV")]
    Ctrv,
    #[serde(rename = "CV")]
    Cv,
    #[serde(rename = "CTRA")]
    Ctra,
}

impl ModelKind {
    pub fn state_dim(self) -> usize {
        match self {
            ModelKind::Ctrv | ModelKind::Cv => 5,
            ModelKind::Ctra => 6,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Ctrv => "CTRV",
            ModelKind::Cv => "CV",
            ModelKind::Ctra => "CTRA",
        })
    }
}

/// Object state `(x, y, ψ, v, ψ̇)`; `accel` only takes part under CTRA.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub yaw_rate: f64,
    #[serde(default)]
    pub accel: f64,
}

impl KinematicState {
    pub fn new(x: f64, y: f64, yaw: f64, v: f64, yaw_rate: f64) -> Self {
        Self {
            x,
            y,
            yaw,
            v,
            yaw_rate,
            accel: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.yaw, self.v, self.yaw_rate, self.accel]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn to_vector(&self, model: ModelKind) -> DVector<f64> {
        let full = [self.x, self.y, self.yaw, self.v, self.yaw_rate, self.accel];
        DVector::from_column_slice(&full[..model.state_dim()])
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            x: v[IDX_X],
            y: v[IDX_Y],
            yaw: v[IDX_YAW],
            v: v[IDX_V],
            yaw_rate: v[IDX_YAW_RATE],
            accel: if v.len() > IDX_ACCEL { v[IDX_ACCEL] } else { 0.0 },
        }
    }
}

fn check_step(s: &KinematicState, dt: f64) -> Result<()> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::Data(format!("invalid propagation step {dt}")));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("kinematic state"));
    }
    Ok(())
}

/// One Euler step of length `dt` under `model`.
pub fn propagate(s: &KinematicState, dt: f64, model: ModelKind) -> Result<KinematicState> {
    check_step(s, dt)?;
    let (sin, cos) = s.yaw.sin_cos();
    let mut out = KinematicState {
        x: s.x - s.v * dt * sin,
        y: s.y + s.v * dt * cos,
        ..*s
    };
    match model {
        ModelKind::Ctrv => out.yaw = wrap_angle(s.yaw + dt * s.yaw_rate),
        ModelKind::Cv => out.yaw = wrap_angle(s.yaw),
        ModelKind::Ctra => {
            out.yaw = wrap_angle(s.yaw + dt * s.yaw_rate);
            out.v = s.v + dt * s.accel;
        }
    }
    Ok(out)
}

/// Analytic Jacobian `∂f/∂x` of [`propagate`] at `(s, dt)`.
pub fn jacobian_f(s: &KinematicState, dt: f64, model: ModelKind) -> Result<DMatrix<f64>> {
    check_step(s, dt)?;
    let n = model.state_dim();
    let mut f = DMatrix::identity(n, n);
    let (sin, cos) = s.yaw.sin_cos();
    f[(IDX_X, IDX_YAW)] = -s.v * dt * cos;
    f[(IDX_X, IDX_V)] = -dt * sin;
    f[(IDX_Y, IDX_YAW)] = -s.v * dt * sin;
    f[(IDX_Y, IDX_V)] = dt * cos;
    match model {
        ModelKind::Ctrv => f[(IDX_YAW, IDX_YAW_RATE)] = dt,
        ModelKind::Cv => {}
        ModelKind::Ctra => {
            f[(IDX_YAW, IDX_YAW_RATE)] = dt;
            f[(IDX_V, IDX_ACCEL)] = dt;
        }
    }
    Ok(f)
}

/// A measurable state component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    X,
    Y,
    Yaw,
    V,
}

impl Feature {
    pub fn state_index(self) -> usize {
        match self {
            Feature::X => IDX_X,
            Feature::Y => IDX_Y,
            Feature::Yaw => IDX_YAW,
            Feature::V => IDX_V,
        }
    }

    pub fn is_angle(self) -> bool {
        self == Feature::Yaw
    }
}

impl std::str::FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Feature::X),
            "y" => Ok(Feature::Y),
            "yaw" => Ok(Feature::Yaw),
            "v" => Ok(Feature::V),
            other => Err(Error::config("features", format!("unknown feature `{other}`"))),
        }
    }
}

/// Selects `features` from the state, in order.
pub fn observe(s: &KinematicState, features: &[Feature]) -> DVector<f64> {
    let full = [s.x, s.y, s.yaw, s.v];
    DVector::from_iterator(features.len(), features.iter().map(|f| full[f.state_index()]))
}

/// Selector matrix `H` for `features` on an `n`-dimensional state.
pub fn observation_matrix(features: &[Feature], n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(features.len(), n);
    for (row, f) in features.iter().enumerate() {
        h[(row, f.state_index())] = 1.0;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const MODELS: [ModelKind; 3] = [ModelKind::Ctrv, ModelKind::Cv, ModelKind::Ctra];

    fn random_state(rng: &mut impl Rng) -> KinematicState {
        KinematicState {
            x: rng.random_range(-500.0..500.0),
            y: rng.random_range(-500.0..500.0),
            yaw: rng.random_range(-3.0..3.0),
            v: rng.random_range(0.0..80.0),
            yaw_rate: rng.random_range(-0.5..0.5),
            accel: rng.random_range(-10.0..10.0),
        }
    }

    #[test]
    fn straight_step_moves_along_positive_y() {
        let s = KinematicState::new(0.0, 0.0, 0.0, 10.0, 0.0);
        let out = propagate(&s, 0.01, ModelKind::Ctrv).unwrap();
        assert_eq!(out, KinematicState::new(0.0, 0.1, 0.0, 10.0, 0.0));
    }

    #[test]
    fn zero_step_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for model in MODELS {
            let mut s = random_state(&mut rng);
            s.yaw = wrap_angle(s.yaw);
            assert_eq!(propagate(&s, 0.0, model).unwrap(), s);
        }
    }

    #[test]
    fn quarter_turn_step_matches_direct_evaluation() {
        let s = KinematicState::new(0.0, 0.0, PI / 2.0, 10.0, 0.5);
        let out = propagate(&s, 0.01, ModelKind::Ctrv).unwrap();
        assert!((out.x + 0.1).abs() < 1e-15);
        assert!(out.y.abs() < 1e-15);
        assert!((out.yaw - (PI / 2.0 + 0.005)).abs() < 1e-15);
        assert_eq!((out.v, out.yaw_rate), (10.0, 0.5));

        // ten sub-steps agree to O(dt^2)
        let mut fine = s;
        for _ in 0..10 {
            fine = propagate(&fine, 0.001, ModelKind::Ctrv).unwrap();
        }
        let err = ((fine.x - out.x).powi(2) + (fine.y - out.y).powi(2)).sqrt();
        assert!(err < 10.0 * 0.5 * 0.01 * 0.01, "{err}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = KinematicState::new(0.0, 0.0, 0.0, 1.0, 0.0);
        assert!(propagate(&s, -0.1, ModelKind::Ctrv).is_err());
        assert!(propagate(&s, f64::NAN, ModelKind::Ctrv).is_err());
        let bad = KinematicState { x: f64::NAN, ..s };
        assert!(propagate(&bad, 0.1, ModelKind::Cv).is_err());
        assert!(jacobian_f(&bad, 0.1, ModelKind::Cv).is_err());
    }

    #[test]
    fn models_agree_on_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut s = random_state(&mut rng);
            let dt = rng.random_range(0.0..0.1);
            let straight = KinematicState { yaw_rate: 0.0, ..s };
            assert_eq!(
                propagate(&straight, dt, ModelKind::Cv).unwrap(),
                propagate(&straight, dt, ModelKind::Ctrv).unwrap()
            );
            s.accel = 0.0;
            assert_eq!(
                propagate(&s, dt, ModelKind::Ctra).unwrap(),
                propagate(&s, dt, ModelKind::Ctrv).unwrap()
            );
        }
    }

    #[test]
    fn speed_and_yaw_rate_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = random_state(&mut rng);
            let dt = rng.random_range(0.0..0.1);
            let ctrv = propagate(&s, dt, ModelKind::Ctrv).unwrap();
            assert_eq!((ctrv.v, ctrv.yaw_rate), (s.v, s.yaw_rate));
            let ctra = propagate(&s, dt, ModelKind::Ctra).unwrap();
            assert_eq!(ctra.v, s.v + dt * s.accel);
        }
    }

    #[test]
    fn euler_semigroup_defect_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for model in MODELS {
            for _ in 0..200 {
                let s = random_state(&mut rng);
                let dt = rng.random_range(1e-4..0.05);
                let two = propagate(&s, 2.0 * dt, model).unwrap();
                let half = propagate(&propagate(&s, dt, model).unwrap(), dt, model).unwrap();
                let defect = (two.x - half.x).hypot(two.y - half.y);
                // |d²pos/dt²| ≤ v|ψ̇| + |a| bounds the Euler defect by C·dt²
                let c = 2.0 * (s.v * s.yaw_rate.abs() + s.accel.abs()) + 1e-9;
                assert!(defect <= c * dt * dt + 1e-9, "{model} {defect} > {}", c * dt * dt);
            }
        }
    }

    #[test]
    fn jacobian_zero_step_is_identity() {
        let s = KinematicState::new(1.0, 2.0, 0.3, 20.0, 0.1);
        for model in MODELS {
            let n = model.state_dim();
            assert_eq!(jacobian_f(&s, 0.0, model).unwrap(), DMatrix::identity(n, n));
        }
    }

    #[test]
    fn jacobian_position_rows_ignore_heading_at_rest() {
        let s = KinematicState::new(1.0, 2.0, 0.3, 0.0, 0.1);
        let f = jacobian_f(&s, 0.01, ModelKind::Ctrv).unwrap();
        assert_eq!(f[(IDX_X, IDX_YAW)], 0.0);
        assert_eq!(f[(IDX_Y, IDX_YAW)], 0.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for model in MODELS {
            for _ in 0..500 {
                let s = random_state(&mut rng);
                let dt = rng.random_range(0.001..0.1);
                let f = jacobian_f(&s, dt, model).unwrap();
                let x0 = s.to_vector(model);
                let n = model.state_dim();
                for j in 0..n {
                    let mut xp = x0.clone();
                    let mut xm = x0.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fp = propagate(&KinematicState::from_vector(&xp), dt, model).unwrap().to_vector(model);
                    let fm = propagate(&KinematicState::from_vector(&xm), dt, model).unwrap().to_vector(model);
                    for i in 0..n {
                        let mut diff = fp[i] - fm[i];
                        if i == IDX_YAW {
                            diff = wrap_angle(diff);
                        }
                        let fd = diff / (2.0 * h);
                        let scale = f[(i, j)].abs().max(1.0);
                        assert!(
                            (fd - f[(i, j)]).abs() / scale <= 1e-6,
                            "{model} ({i},{j}) analytic {} fd {fd}",
                            f[(i, j)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn observe_selects_features_in_order() {
        let s = KinematicState::new(1.0, 2.0, 0.3, 50.0, 0.0);
        let lidar = [Feature::X, Feature::Y, Feature::Yaw];
        assert_eq!(observe(&s, &lidar).as_slice(), &[1.0, 2.0, 0.3]);
        let radar = [Feature::X, Feature::Y, Feature::Yaw, Feature::V];
        assert_eq!(observe(&s, &radar).as_slice(), &[1.0, 2.0, 0.3, 50.0]);
        let h = observation_matrix(&radar, 5);
        assert_eq!(&h * s.to_vector(ModelKind::Ctrv), observe(&s, &radar));

        assert_eq!(observe(&s, &[]).len(), 0);
        assert_eq!(observation_matrix(&[], 5).shape(), (0, 5));
    }

    #[test]
    fn unknown_feature_is_config_error() {
        assert_eq!("yaw".parse::<Feature>().unwrap(), Feature::Yaw);
        assert!(matches!("accel".parse::<Feature>(), Err(Error::Config { .. })));
    }
}
