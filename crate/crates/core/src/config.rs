//! Run configuration: every tracker parameter, with defaults and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{InitPolicy, StateStd};
use crate::geometry::LowPassAlpha;
use crate::motion::{Feature, ModelKind};

/// Measurement noise of one sensor. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementStd {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
    #[serde(default = "default_v_std")]
    pub v: f64,
}

fn default_v_std() -> f64 {
    0.2
}

impl MeasurementStd {
    /// Standard deviation of `feature` in SI units.
    pub fn of(&self, feature: Feature) -> f64 {
        match feature {
            Feature::X => self.x,
            Feature::Y => self.y,
            Feature::Yaw => self.yaw_deg.to_radians(),
            Feature::V => self.v,
        }
    }
}

/// How the tracker interprets one detection source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub id: String,
    pub features: Vec<Feature>,
    pub std: MeasurementStd,
    /// Status-counter increment on a successful match.
    pub match_weight: u32,
    /// Use the centerline heading as yaw measurement even when the sensor
    /// reports one.
    #[serde(default = "default_true")]
    pub yaw_from_centerline: bool,
}

fn default_true() -> bool {
    true
}

impl SensorConfig {
    pub fn measures(&self, f: Feature) -> bool {
        self.features.contains(&f)
    }

    pub fn default_lidar() -> Self {
        Self {
            id: "lidar_cluster".into(),
            features: vec![Feature::X, Feature::Y, Feature::Yaw],
            std: MeasurementStd { x: 0.3, y: 0.3, yaw_deg: 20.0, v: 0.2 },
            match_weight: 3,
            yaw_from_centerline: true,
        }
    }

    pub fn default_radar() -> Self {
        Self {
            id: "radar".into(),
            features: vec![Feature::X, Feature::Y, Feature::Yaw, Feature::V],
            std: MeasurementStd { x: 3.0, y: 3.0, yaw_deg: 20.0, v: 0.2 },
            match_weight: 1,
            yaw_from_centerline: true,
        }
    }
}

/// All tracker parameters. JSON keys follow the parameter symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output cycle frequency (Hz).
    pub f_node: f64,
    /// Filter grid frequency (Hz).
    #[serde(rename = "f_EKF")]
    pub f_ekf: f64,
    /// Length of the per-track state history (s).
    pub history_seconds: f64,
    pub model: ModelKind,
    /// Initial speed of a new object as a fraction of ego speed.
    pub k_v: f64,
    #[serde(rename = "d_MRG")]
    pub d_mrg: f64,
    #[serde(rename = "d_OBF_out")]
    pub d_obf_out: f64,
    #[serde(rename = "d_OBF_in")]
    pub d_obf_in: f64,
    #[serde(rename = "d_MTC")]
    pub d_mtc: f64,
    #[serde(rename = "t_MTC")]
    pub t_mtc: u32,
    pub ego_lowpass_alpha: f64,
    /// Match and update delayed frames at their own timestamp. When off,
    /// frames are matched against the newest state.
    pub delay_compensation: bool,
    pub init_std: StateStd,
    /// Random-walk intensity per state, per √s.
    pub process_std: StateStd,
    pub seed: u64,
    /// Restricts processing to these sensor ids; `None` uses all.
    pub active_sensors: Option<Vec<String>>,
    pub sensors: Vec<SensorConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let std = StateStd {
            x: 0.01,
            y: 0.01,
            yaw_deg: 17.2,
            v: 4.0,
            yaw_rate_deg: 17.2,
            accel: 2.0,
        };
        Self {
            f_node: 50.0,
            f_ekf: 100.0,
            history_seconds: 3.0,
            model: ModelKind::Ctrv,
            k_v: 0.8,
            d_mrg: 5.1,
            d_obf_out: 0.3,
            d_obf_in: 0.3,
            d_mtc: 4.0,
            t_mtc: 25,
            ego_lowpass_alpha: 0.5,
            delay_compensation: true,
            init_std: std,
            process_std: std,
            seed: 0,
            active_sensors: None,
            sensors: vec![SensorConfig::default_lidar(), SensorConfig::default_radar()],
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("{v} must be a finite value > 0")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("{v} must be a finite value >= 0")))
    }
}

impl RunConfig {
    /// Parses a JSON document; an empty document yields the defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim().is_empty() {
            RunConfig::default()
        } else {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| {
                let key = e.path().to_string();
                Error::config(key, e.into_inner().to_string())
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every invariant. Returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        positive("f_node", self.f_node)?;
        positive("f_EKF", self.f_ekf)?;
        positive("history_seconds", self.history_seconds)?;
        non_negative("k_v", self.k_v)?;
        non_negative("d_MRG", self.d_mrg)?;
        non_negative("d_OBF_out", self.d_obf_out)?;
        non_negative("d_OBF_in", self.d_obf_in)?;
        positive("d_MTC", self.d_mtc)?;
        if self.t_mtc < 1 {
            return Err(Error::config("t_MTC", "must be >= 1"));
        }
        LowPassAlpha::new(self.ego_lowpass_alpha)?;
        self.init_std.validate("init_std")?;
        self.process_std.validate("process_std")?;
        if self.history_slots() < 1 {
            return Err(Error::config("history_seconds", "history holds no filter step"));
        }

        let mut ids: Vec<&str> = Vec::new();
        for (i, s) in self.sensors.iter().enumerate() {
            let key = format!("sensors[{i}]");
            if s.id.is_empty() || ids.contains(&s.id.as_str()) {
                return Err(Error::config(format!("{key}.id"), format!("`{}` is empty or duplicated", s.id)));
            }
            ids.push(&s.id);
            if !(s.measures(Feature::X) && s.measures(Feature::Y)) {
                return Err(Error::config(format!("{key}.features"), "must include x and y"));
            }
            let mut seen = Vec::new();
            for f in &s.features {
                if seen.contains(f) {
                    return Err(Error::config(format!("{key}.features"), format!("{f:?} listed twice")));
                }
                seen.push(*f);
                positive(&format!("{key}.std"), s.std.of(*f))?;
            }
            if s.match_weight < 1 {
                return Err(Error::config(format!("{key}.match_weight"), "must be >= 1"));
            }
        }
        if let Some(active) = &self.active_sensors {
            for a in active {
                if !ids.contains(&a.as_str()) {
                    return Err(Error::config("active_sensors", format!("unknown sensor `{a}`")));
                }
            }
        }

        let mut warnings = Vec::new();
        if self.f_ekf < self.f_node {
            warnings.push(format!(
                "f_EKF ({}) below f_node ({}): outputs repeat filter slots",
                self.f_ekf, self.f_node
            ));
        }
        Ok(warnings)
    }

    pub fn filter_dt(&self) -> f64 {
        1.0 / self.f_ekf
    }

    /// History capacity in filter slots.
    pub fn history_slots(&self) -> usize {
        (self.f_ekf * self.history_seconds + 1e-9).floor() as usize
    }

    pub fn init_policy(&self) -> InitPolicy {
        InitPolicy {
            k_v: self.k_v,
            init_std: self.init_std,
        }
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorConfig> {
        self.sensors.iter().find(|s| s.id == id)
    }

    /// Sensor configuration if `id` is known and active.
    pub fn active_sensor(&self, id: &str) -> Option<&SensorConfig> {
        let s = self.sensor(id)?;
        match &self.active_sensors {
            Some(active) if !active.iter().any(|a| a == id) => None,
            _ => Some(s),
        }
    }

    /// Copy with one parameter replaced. `key` names a top-level field or a
    /// dotted path into nested objects (`process_std.v`).
    pub fn with_param(&self, key: &str, value: serde_json::Value) -> Result<Self> {
        let mut doc = serde_json::to_value(self).map_err(|e| Error::json("config", e))?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::config(key, "no such parameter"))?;
        }
        *slot = value;
        let text = serde_json::to_string(&doc).map_err(|e| Error::json("config", e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_json_str(&text)
}
