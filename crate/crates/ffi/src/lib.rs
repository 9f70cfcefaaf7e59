//! C ABI over the tracker.
//!
//! Fallible entry points return an [`FtStatus`]. On failure the message is
//! available from [`ft_last_error_message`] on the same thread until the
//! next failing call. Panics never cross the boundary; they are reported as
//! `FT_STATUS_PANIC`.
//!
//! Absent optional values are passed as NaN: a detection with `yaw = NaN`
//! has no yaw measurement, a frame with `t_rx = NaN` was received at `t`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fusion_track::association::solve_assignment;
use fusion_track::config::RunConfig;
use fusion_track::error::Error;
use fusion_track::geometry::{Detection, EgoState, TrackMap};
use fusion_track::pipeline::{DetectionFrame, TrackedObjectList, Tracker};
use fusion_track::simulator::OvalSpec;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Io = 5,
    Numeric = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Ego pose and motion in the global frame.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FtEgoState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub yaw_rate: f64,
}

/// One detected object in the sensor (ego) frame.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FtDetection {
    pub x: f64,
    pub y: f64,
    /// NaN when not measured.
    pub yaw: f64,
    /// NaN when not measured.
    pub v: f64,
}

/// One confirmed track of the last cycle output.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FtTrack {
    pub uid: u64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub yaw_rate: f64,
    pub accel: f64,
}

/// Opaque tracker handle.
pub struct FtTracker {
    tracker: Tracker,
    pending: Vec<DetectionFrame>,
    output: TrackedObjectList,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FtStatus {
    match e {
        Error::Config { .. } | Error::Map(_) | Error::Scenario(_) => FtStatus::Config,
        Error::Data(_) | Error::Json { .. } | Error::Csv(_) | Error::Dimension(_) => FtStatus::Data,
        Error::Io { .. } => FtStatus::Io,
        Error::NonFinite(_) | Error::FilterHealth { .. } => FtStatus::Numeric,
    }
}

struct Fail(FtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> FtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FtStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            FtStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Fail(FtStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(p: *mut FtTracker) -> Result<&'a mut FtTracker, Fail> {
    p.as_mut().ok_or_else(|| null("tracker"))
}

fn optional(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

/// Creates a tracker. `config_json` is a run config document and
/// `map_csv_path` a boundary CSV; either may be null for the defaults.
///
/// # Safety
/// Strings must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_new(
    config_json: *const c_char,
    map_csv_path: *const c_char,
    out: *mut *mut FtTracker,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let cfg = match opt_str(config_json, "config_json")? {
            Some(text) => RunConfig::from_json_str(text)?,
            None => RunConfig::default(),
        };
        cfg.validate()?;
        let map = match opt_str(map_csv_path, "map_csv_path")? {
            Some(path) => TrackMap::load(Path::new(path))?,
            None => OvalSpec::default().build_map()?,
        };
        let tracker = Tracker::new(cfg, map)?;
        *out = Box::into_raw(Box::new(FtTracker {
            tracker,
            pending: Vec::new(),
            output: TrackedObjectList { t_out: f64::NAN, tracks: Vec::new() },
        }));
        Ok(())
    })
}

/// Releases a tracker. Null is ignored.
///
/// # Safety
/// `tracker` must come from [`ft_tracker_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_free(tracker: *mut FtTracker) {
    if !tracker.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(tracker))));
    }
}

/// Queues one detection frame for the next cycle.
///
/// # Safety
/// `sensor` must be NUL-terminated; `dets` must point to `n` detections
/// (or may be null when `n` is 0).
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_push_frame(
    tracker: *mut FtTracker,
    sensor: *const c_char,
    t: f64,
    t_rx: f64,
    seq: u64,
    dets: *const FtDetection,
    n: usize,
) -> FtStatus {
    guard(|| {
        let h = handle(tracker)?;
        let sensor = opt_str(sensor, "sensor")?.ok_or_else(|| null("sensor"))?;
        if dets.is_null() && n > 0 {
            return Err(null("dets"));
        }
        let objects = if n == 0 { &[][..] } else { std::slice::from_raw_parts(dets, n) };
        h.pending.push(DetectionFrame {
            sensor: sensor.to_string(),
            t,
            t_rx: optional(t_rx),
            seq,
            objects: objects
                .iter()
                .map(|d| Detection { x: d.x, y: d.y, yaw: optional(d.yaw), v: optional(d.v) })
                .collect(),
        });
        Ok(())
    })
}

/// Queues one frame given as a JSON detection-log line.
///
/// # Safety
/// `json` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_push_frame_json(tracker: *mut FtTracker, json: *const c_char) -> FtStatus {
    guard(|| {
        let h = handle(tracker)?;
        let text = opt_str(json, "json")?.ok_or_else(|| null("json"))?;
        let frame: DetectionFrame =
            serde_json::from_str(text).map_err(|e| Fail(FtStatus::Data, format!("frame: {e}")))?;
        h.pending.push(frame);
        Ok(())
    })
}

/// Runs one cycle at `ego.t` with every queued frame. The confirmed tracks
/// are then available through [`ft_tracker_output_len`] and
/// [`ft_tracker_output_get`].
///
/// # Safety
/// `tracker` and `ego` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_run_cycle(tracker: *mut FtTracker, ego: *const FtEgoState) -> FtStatus {
    guard(|| {
        let h = handle(tracker)?;
        let e = *ego.as_ref().ok_or_else(|| null("ego"))?;
        let ego = EgoState { t: e.t, x: e.x, y: e.y, yaw: e.yaw, v: e.v, yaw_rate: e.yaw_rate };
        let frames = std::mem::take(&mut h.pending);
        h.output = h.tracker.run_cycle(frames, ego)?;
        let _ = h.tracker.take_residuals();
        let _ = h.tracker.take_warnings();
        Ok(())
    })
}

/// Number of confirmed tracks in the last output, 0 for a null handle.
///
/// # Safety
/// `tracker` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_output_len(tracker: *const FtTracker) -> usize {
    tracker.as_ref().map_or(0, |h| h.output.tracks.len())
}

/// Output time of the last cycle, NaN before the first cycle.
///
/// # Safety
/// `tracker` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_output_time(tracker: *const FtTracker) -> f64 {
    tracker.as_ref().map_or(f64::NAN, |h| h.output.t_out)
}

/// Copies track `index` of the last output into `out`.
///
/// # Safety
/// `tracker` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_output_get(tracker: *const FtTracker, index: usize, out: *mut FtTrack) -> FtStatus {
    guard(|| {
        let h = tracker.as_ref().ok_or_else(|| null("tracker"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let t = h.output.tracks.get(index).ok_or_else(|| {
            Fail(FtStatus::OutOfRange, format!("index {index} >= {}", h.output.tracks.len()))
        })?;
        let s = &t.state;
        *out = FtTrack { uid: t.uid, x: s.x, y: s.y, yaw: s.yaw, v: s.v, yaw_rate: s.yaw_rate, accel: s.accel };
        Ok(())
    })
}

/// Gated minimum-cost assignment of a row-major `rows × cols` cost matrix.
/// `row_to_col` receives the matched column per row, or -1. `total_cost`
/// may be null.
///
/// # Safety
/// `costs` must hold `rows * cols` values and `row_to_col` `rows` slots.
#[no_mangle]
pub unsafe extern "C" fn ft_hungarian_solve(
    costs: *const f64,
    rows: usize,
    cols: usize,
    d_mtc: f64,
    row_to_col: *mut i64,
    total_cost: *mut f64,
) -> FtStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(FtStatus::InvalidArgument, "matrix size overflows".into()))?;
        if (costs.is_null() && len > 0) || (row_to_col.is_null() && rows > 0) {
            return Err(null("costs or row_to_col"));
        }
        if d_mtc.is_nan() {
            return Err(Fail(FtStatus::InvalidArgument, "d_mtc is NaN".into()));
        }
        let values = if len == 0 { &[][..] } else { std::slice::from_raw_parts(costs, len) };
        let c = DMatrix::from_row_slice(rows, cols, values);
        let a = solve_assignment(&c, d_mtc);
        if rows > 0 {
            let out = std::slice::from_raw_parts_mut(row_to_col, rows);
            out.fill(-1);
            for &(i, j) in &a.pairs {
                out[i] = j as i64;
            }
        }
        if let Some(t) = total_cost.as_mut() {
            *t = a.total_cost;
        }
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ft_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ft_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
