//! The simulate, track and evaluate chain, and parameter sweeps over it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::{
    delay_stats, precision, transient_profile, tracking_rmse, Metrics, PrecisionConfig, PrecisionReport,
    ResidualAccumulator, ResidualRecord,
};
use crate::geometry::EgoState;
use crate::pipeline::{DetectionFrame, TrackedObjectList};
use crate::replay::{replay, ReplayOutput};
use crate::simulator::{generate, overtake_scenario, OvertakeParams, ScenarioOutput, ScenarioSpec, TruthFrame};

/// Age horizon and bin width of the transient profile (s).
pub const TRANSIENT_HORIZON: f64 = 3.0;
pub const TRANSIENT_BIN: f64 = 1.0;

/// Simulates `scenario` and tracks its logs with `cfg`.
pub fn simulate_and_track(cfg: &RunConfig, scenario: &ScenarioSpec) -> Result<(ScenarioOutput, ReplayOutput)> {
    let sim = generate(scenario)?;
    let out = replay(cfg, sim.map.clone(), &sim.ego, &sim.frames_by_delivery())?;
    Ok((sim, out))
}

/// Inputs of the metrics document. Truth and ego are optional; metrics
/// that need them are skipped with a notice.
pub struct EvaluationInput<'a> {
    pub outputs: &'a [TrackedObjectList],
    pub residuals: &'a [ResidualRecord],
    pub truth: Option<&'a [TruthFrame]>,
    pub frames: &'a [DetectionFrame],
    pub ego: &'a [EgoState],
    pub precision: PrecisionConfig,
    pub bin_width: f64,
}

pub fn evaluate(input: &EvaluationInput) -> Metrics {
    let mut notices = Vec::new();
    let mut acc = ResidualAccumulator::default();
    input.residuals.iter().for_each(|r| acc.push(r));
    if input.residuals.is_empty() {
        notices.push("no residual records; residual statistics are empty".to_string());
    }
    let (prec, rmse) = match input.truth {
        Some(truth) => (
            Some(precision(input.outputs, truth, &input.precision)),
            Some(tracking_rmse(input.outputs, truth, None)),
        ),
        None => {
            notices.push("no truth given; precision and rmse skipped".to_string());
            (None, None)
        }
    };
    let delay = if input.frames.is_empty() {
        Default::default()
    } else {
        if input.ego.is_empty() {
            notices.push("no ego log given; moved distances are zero".to_string());
        }
        delay_stats(input.frames, input.ego)
    };
    Metrics {
        residuals: acc.report(),
        precision: prec,
        precision_config: input.precision,
        rmse,
        delay,
        transient: transient_profile(input.residuals, input.bin_width, TRANSIENT_HORIZON),
        notices,
    }
}

/// One sensitivity-analysis run: a parameter and the values it takes,
/// applied to `base` and run over every scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Top-level or dotted config key.
    pub parameter: String,
    pub values: Vec<serde_json::Value>,
    #[serde(default)]
    pub base: RunConfig,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    pub precision: PrecisionConfig,
}

fn default_scenarios() -> Vec<ScenarioSpec> {
    vec![overtake_scenario(&OvertakeParams::default()).expect("default overtake is valid")]
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let current = serde_json::to_value(&self.base).map_err(|e| Error::json("config", e))?;
        let mut slot = &current;
        for part in self.parameter.split('.') {
            slot = slot
                .get(part)
                .ok_or_else(|| Error::config(&self.parameter, "no such parameter"))?;
        }
        if self.values.is_empty() {
            return Err(Error::config("values", "sweep needs at least one value"));
        }
        if self.scenarios.is_empty() {
            return Err(Error::config("scenarios", "sweep needs at least one scenario"));
        }
        Ok(())
    }
}

/// One row of the sensitivity table. Yaw in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: String,
    pub status: String,
    pub error: String,
    pub updates: u64,
    pub lon_mean: Option<f64>,
    pub lon_std: Option<f64>,
    pub lat_mean: Option<f64>,
    pub lat_std: Option<f64>,
    pub yaw_mean_deg: Option<f64>,
    pub yaw_std_deg: Option<f64>,
    pub v_mean: Option<f64>,
    pub v_std: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    pub precision: Option<f64>,
    /// `precision / baseline − 1`.
    pub precision_rel: Option<f64>,
}

/// Pooled residuals and precision counts of one config over a scenario set.
pub fn run_scenarios(cfg: &RunConfig, scenarios: &[ScenarioSpec], pc: &PrecisionConfig) -> Result<(ResidualAccumulator, PrecisionReport)> {
    let mut acc = ResidualAccumulator::default();
    let (mut tp, mut fp) = (0, 0);
    for s in scenarios {
        let (sim, out) = simulate_and_track(cfg, s)?;
        out.residuals.iter().for_each(|r| acc.push(r));
        let p = precision(&out.outputs, &sim.truth, pc);
        tp += p.tp;
        fp += p.fp;
    }
    Ok((acc, PrecisionReport::from_counts(tp, fp)))
}

fn row(parameter: &str, value: String, result: Result<(ResidualAccumulator, PrecisionReport)>) -> SweepRow {
    let mut row = SweepRow {
        parameter: parameter.to_string(),
        value,
        status: "ok".into(),
        error: String::new(),
        updates: 0,
        lon_mean: None,
        lon_std: None,
        lat_mean: None,
        lat_std: None,
        yaw_mean_deg: None,
        yaw_std_deg: None,
        v_mean: None,
        v_std: None,
        tp: 0,
        fp: 0,
        precision: None,
        precision_rel: None,
    };
    match result {
        Ok((acc, p)) => {
            let r = acc.report();
            row.updates = r.lon.n.max(r.lat.n).max(r.yaw.n).max(r.v.n);
            (row.lon_mean, row.lon_std) = (r.lon.mean, r.lon.std);
            (row.lat_mean, row.lat_std) = (r.lat.mean, r.lat.std);
            (row.yaw_mean_deg, row.yaw_std_deg) = (r.yaw.mean.map(f64::to_degrees), r.yaw.std.map(f64::to_degrees));
            (row.v_mean, row.v_std) = (r.v.mean, r.v.std);
            (row.tp, row.fp, row.precision) = (p.tp, p.fp, p.precision);
        }
        Err(e) => {
            row.status = "failed".into();
            row.error = e.to_string();
        }
    }
    row
}

/// Baseline row followed by one row per value. Values run in parallel; a
/// failing value yields a `failed` row and the others still run.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut jobs: Vec<(String, Result<RunConfig>)> = vec![("baseline".into(), Ok(spec.base.clone()))];
    for v in &spec.values {
        let label = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        jobs.push((label, spec.base.with_param(&spec.parameter, v.clone())));
    }
    let mut rows: Vec<SweepRow> = jobs
        .into_par_iter()
        .map(|(label, cfg)| {
            let result = cfg.and_then(|c| {
                c.validate()?;
                run_scenarios(&c, &spec.scenarios, &spec.precision)
            });
            row(&spec.parameter, label, result)
        })
        .collect();
    let base = rows[0].precision;
    for r in &mut rows {
        r.precision_rel = match (r.precision, base) {
            (Some(p), Some(b)) if b > 0.0 => Some(p / b - 1.0),
            _ => None,
        };
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_spec(parameter: &str, values: Vec<serde_json::Value>) -> SweepSpec {
        let scenario = overtake_scenario(&OvertakeParams { duration: 4.0, ..Default::default() }).unwrap();
        SweepSpec {
            parameter: parameter.into(),
            values,
            base: RunConfig::default(),
            scenarios: vec![scenario],
            precision: PrecisionConfig::default(),
        }
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let spec = short_spec("d_XYZ", vec![1.0.into()]);
        assert!(matches!(run_sweep(&spec), Err(Error::Config { .. })));
    }

    #[test]
    fn failed_value_is_isolated() {
        let spec = short_spec("t_MTC", vec![0.into(), 10.into()]);
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].status, "failed");
        assert!(rows[1].error.contains("t_MTC"), "{}", rows[1].error);
        assert_eq!(rows[2].status, "ok");
        assert!(rows[2].updates > 0);
    }

    #[test]
    fn single_value_equals_plain_run() {
        let spec = short_spec("d_MTC", vec![4.0.into()]);
        let rows = run_sweep(&spec).unwrap();
        let (acc, p) = run_scenarios(&RunConfig::default(), &spec.scenarios, &spec.precision).unwrap();
        let plain = row("d_MTC", "4.0".into(), Ok((acc, p)));
        assert_eq!(rows[1].lat_mean, plain.lat_mean);
        assert_eq!(rows[1].lat_std, plain.lat_std);
        assert_eq!(rows[1].precision, plain.precision);
        assert_eq!(rows[0].lat_std, rows[1].lat_std);
        assert_eq!(rows[1].precision_rel.unwrap_or(0.0), 0.0);
    }

    #[test]
    fn sensor_subsets_give_per_modality_rows() {
        let spec = short_spec("active_sensors", vec![serde_json::json!(["lidar_cluster"]), serde_json::json!(["radar"])]);
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 3);
        // radar alone never measures yaw directly, but the centerline pseudo
        // yaw still yields yaw residuals; lidar alone has no speed
        assert!(rows[1].v_mean.is_none());
        assert!(rows[2].v_mean.is_some());
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let spec = short_spec("f_node", vec![20.into()]);
        let rows = run_sweep(&spec).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("parameter,value,status,error,updates,lon_mean"));
    }
}
