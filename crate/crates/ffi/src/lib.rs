//! C ABI over the flowdyn library.
//!
//! Every fallible call returns a [`FlowdynStatus`]; on failure the message is
//! available from [`flowdyn_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use std::ffi::c_char;

use flowdyn::binding::{DynamicsMap, MapParams};
use flowdyn::config::RunConfig;
use flowdyn::eval::metrics::{swgmm_bin_mass, swgmm_density};
use flowdyn::scene_graph::{Bounds2, LayeredGraph, NodeId, PoseEvent, PoseEventKind};
use flowdyn::snapshot::Snapshot;
use flowdyn::swgmm::FitMethod;
use flowdyn::system::{DynamicsSystem, Observation};
use flowdyn::{CylindricalSample, Error, Position3};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowdynStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericalDegeneracy = 2,
    FitFailure = 3,
    UndefinedMetric = 4,
    Parse = 5,
    Config = 6,
    Io = 7,
    Serialization = 8,
    NullPointer = 9,
    /// The queried position has no fitted model.
    NotCovered = 10,
    Panic = 11,
}

impl From<&Error> for FlowdynStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => FlowdynStatus::InvalidArgument,
            Error::NumericalDegeneracy(_) => FlowdynStatus::NumericalDegeneracy,
            Error::FitFailure(_) => FlowdynStatus::FitFailure,
            Error::UndefinedMetric(_) => FlowdynStatus::UndefinedMetric,
            Error::Parse { .. } => FlowdynStatus::Parse,
            Error::Config(_) => FlowdynStatus::Config,
            Error::Io { .. } => FlowdynStatus::Io,
            Error::Serde(_) => FlowdynStatus::Serialization,
        }
    }
}

/// Online system: graph, dynamics map and stabilization gate.
pub struct FlowdynSystem {
    inner: DynamicsSystem,
    config: RunConfig,
    end_time: f64,
}

/// Read-only map restored from a snapshot.
pub struct FlowdynMap {
    map: DynamicsMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(FlowdynStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FlowdynStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FlowdynStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlowdynStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            FlowdynStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FlowdynStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn system_mut<'a>(p: *mut FlowdynSystem) -> Result<&'a mut FlowdynSystem, Failure> {
    p.as_mut().ok_or_else(|| null("system"))
}

unsafe fn system_ref<'a>(p: *const FlowdynSystem) -> Result<&'a FlowdynSystem, Failure> {
    p.as_ref().ok_or_else(|| null("system"))
}

fn pos(x: f64, y: f64, z: f64) -> Result<Position3, Failure> {
    Ok(Position3::new(x, y, z)?)
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn flowdyn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a system with default settings at `resolution` meters, reservoir
/// capacity `capacity` and `bins` direction bins. When `with_grid` is true a
/// navigation grid covers the given rectangle; otherwise the graph starts
/// empty and nodes arrive through pose events.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn flowdyn_system_new(
    resolution: f64,
    capacity: usize,
    bins: usize,
    seed: u64,
    with_grid: bool,
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
    out: *mut *mut FlowdynSystem,
) -> FlowdynStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let mut config = RunConfig {
            resolutions: vec![resolution],
            ..RunConfig::default()
        };
        config.seeds.fitting = seed;
        config.system.map = MapParams {
            resolution,
            reservoir_capacity: capacity,
            bins,
        };
        config.validate()?;
        let graph = if with_grid {
            LayeredGraph::build_nav_layer(&Bounds2::new(min_x, min_y, max_x, max_y)?, resolution)?
        } else {
            LayeredGraph::new()
        };
        let inner = DynamicsSystem::new(graph, config.system_config(), seed)?;
        *out = Box::into_raw(Box::new(FlowdynSystem {
            inner,
            config,
            end_time: 0.0,
        }));
        Ok(())
    })
}

/// # Safety
/// `sys` must be NULL or a handle from [`flowdyn_system_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_free(sys: *mut FlowdynSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Selects order selection for subsequent fits: 0 for the BIC sweep,
/// 1 for mean-shift.
///
/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_set_method(sys: *mut FlowdynSystem, method: u32) -> FlowdynStatus {
    guard(|| {
        let s = system_mut(sys)?;
        let m = match method {
            0 => FitMethod::Bic,
            1 => FitMethod::MeanShift,
            other => {
                return Err(Failure(
                    FlowdynStatus::InvalidArgument,
                    format!("unknown method {other}"),
                ))
            }
        };
        s.config.system.method = m;
        s.inner.set_method(m);
        Ok(())
    })
}

/// Feeds one observation at time `t`.
///
/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_observe(
    sys: *mut FlowdynSystem,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    theta: f64,
    rho: f64,
) -> FlowdynStatus {
    guard(|| {
        let s = system_mut(sys)?;
        let obs = Observation {
            position: pos(x, y, z)?,
            sample: CylindricalSample::new(theta, rho, t)?,
        };
        s.inner.observe(&obs)?;
        s.end_time = s.end_time.max(t);
        Ok(())
    })
}

unsafe fn pose_event(sys: *mut FlowdynSystem, time: f64, kind: PoseEventKind) -> FlowdynStatus {
    guard(|| {
        let s = system_mut(sys)?;
        s.inner.apply_event(&PoseEvent { time, kind })?;
        s.end_time = s.end_time.max(time);
        Ok(())
    })
}

/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_add_node(
    sys: *mut FlowdynSystem,
    t: f64,
    id: u64,
    x: f64,
    y: f64,
    z: f64,
) -> FlowdynStatus {
    match pos(x, y, z) {
        Ok(p) => pose_event(sys, t, PoseEventKind::AddNode(NodeId(id), p)),
        Err(f) => guard(|| Err(f)),
    }
}

/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_move_node(
    sys: *mut FlowdynSystem,
    t: f64,
    id: u64,
    x: f64,
    y: f64,
    z: f64,
) -> FlowdynStatus {
    match pos(x, y, z) {
        Ok(p) => pose_event(sys, t, PoseEventKind::MoveNode(NodeId(id), p)),
        Err(f) => guard(|| Err(f)),
    }
}

/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_remove_node(sys: *mut FlowdynSystem, t: f64, id: u64) -> FlowdynStatus {
    pose_event(sys, t, PoseEventKind::RemoveNode(NodeId(id)))
}

/// Binding attempt plus a scheduled model update at `now`. The number of
/// refitted cells is written to `refits` when it is not NULL.
///
/// # Safety
/// `sys` must be a live handle; `refits` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_tick(sys: *mut FlowdynSystem, now: f64, refits: *mut usize) -> FlowdynStatus {
    guard(|| {
        let s = system_mut(sys)?;
        let stats = s.inner.tick(now)?;
        s.end_time = s.end_time.max(now);
        if !refits.is_null() {
            *refits = stats.update.refits;
        }
        Ok(())
    })
}

/// Binds if stable and refits every changed cell regardless of schedule.
///
/// # Safety
/// `sys` must be a live handle; `refits` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_flush(sys: *mut FlowdynSystem, now: f64, refits: *mut usize) -> FlowdynStatus {
    guard(|| {
        let s = system_mut(sys)?;
        let stats = s.inner.flush(now)?;
        s.end_time = s.end_time.max(now);
        if !refits.is_null() {
            *refits = stats.update.refits;
        }
        Ok(())
    })
}

/// Observation count over all cells.
///
/// # Safety
/// `sys` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_total_seen(sys: *const FlowdynSystem, out: *mut u64) -> FlowdynStatus {
    guard(|| {
        let s = system_ref(sys)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.inner.map.total_seen();
        Ok(())
    })
}

/// Hash-owned and node-bound cell counts. Either pointer may be NULL.
///
/// # Safety
/// `sys` must be a live handle; non-NULL outputs writable.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_cell_counts(
    sys: *const FlowdynSystem,
    hash_owned: *mut usize,
    node_bound: *mut usize,
) -> FlowdynStatus {
    guard(|| {
        let s = system_ref(sys)?;
        if !hash_owned.is_null() {
            *hash_owned = s.inner.map.hash_cell_count();
        }
        if !node_bound.is_null() {
            *node_bound = s.inner.map.bound_cell_count();
        }
        Ok(())
    })
}

/// Writes a JSON snapshot of the system to `path`.
///
/// # Safety
/// `sys` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_save_snapshot(sys: *const FlowdynSystem, path: *const c_char) -> FlowdynStatus {
    guard(|| {
        let s = system_ref(sys)?;
        let path = str_arg(path, "path")?;
        Snapshot::capture(&s.inner, &s.config, s.end_time).save(Path::new(path))?;
        Ok(())
    })
}

/// Read-only copy of the system's current map.
///
/// # Safety
/// `sys` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_system_map(sys: *const FlowdynSystem, out: *mut *mut FlowdynMap) -> FlowdynStatus {
    guard(|| {
        let s = system_ref(sys)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(FlowdynMap {
            map: s.inner.map.clone(),
        }));
        Ok(())
    })
}

/// Loads a map from a snapshot file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_map_load(path: *const c_char, out: *mut *mut FlowdynMap) -> FlowdynStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let (_, map) = Snapshot::load(Path::new(path))?.restore()?;
        *out = Box::into_raw(Box::new(FlowdynMap { map }));
        Ok(())
    })
}

/// # Safety
/// `map` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_map_free(map: *mut FlowdynMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

unsafe fn model_at<'a>(map: *const FlowdynMap, x: f64, y: f64, z: f64) -> Result<&'a flowdyn::swgmm::SwGmm, Failure> {
    let m = map.as_ref().ok_or_else(|| null("map"))?;
    let p = pos(x, y, z)?;
    m.map
        .bound_cell_at(&p)
        .and_then(|c| c.model.as_ref())
        .ok_or_else(|| Failure(FlowdynStatus::NotCovered, format!("no model at ({x}, {y}, {z})")))
}

/// Mixture component count of the cell at a position.
///
/// # Safety
/// `map` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_map_component_count(
    map: *const FlowdynMap,
    x: f64,
    y: f64,
    z: f64,
    out: *mut usize,
) -> FlowdynStatus {
    guard(|| {
        let model = model_at(map, x, y, z)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = model.k();
        Ok(())
    })
}

/// Marginal direction density at `theta`, per radian.
///
/// # Safety
/// `map` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_map_direction_density(
    map: *const FlowdynMap,
    x: f64,
    y: f64,
    z: f64,
    theta: f64,
    out: *mut f64,
) -> FlowdynStatus {
    guard(|| {
        let model = model_at(map, x, y, z)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !theta.is_finite() {
            return Err(Failure(FlowdynStatus::InvalidArgument, "theta must be finite".into()));
        }
        *out = swgmm_density(model, theta);
        Ok(())
    })
}

/// Probability of each of `bins` equal direction bins, bin 0 starting at -pi.
/// Writes exactly `bins` values to `out`.
///
/// # Safety
/// `map` must be a live handle; `out` must have room for `bins` doubles.
#[no_mangle]
pub unsafe extern "C" fn flowdyn_map_bin_masses(
    map: *const FlowdynMap,
    x: f64,
    y: f64,
    z: f64,
    bins: usize,
    out: *mut f64,
) -> FlowdynStatus {
    guard(|| {
        let model = model_at(map, x, y, z)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if bins == 0 {
            return Err(Failure(FlowdynStatus::InvalidArgument, "bins must be > 0".into()));
        }
        let dst = std::slice::from_raw_parts_mut(out, bins);
        for (b, v) in dst.iter_mut().enumerate() {
            *v = swgmm_bin_mass(model, b, bins);
        }
        Ok(())
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn flowdyn_status_name(status: FlowdynStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        FlowdynStatus::Ok => b"ok\0",
        FlowdynStatus::InvalidArgument => b"invalid-argument\0",
        FlowdynStatus::NumericalDegeneracy => b"numerical-degeneracy\0",
        FlowdynStatus::FitFailure => b"fit-failure\0",
        FlowdynStatus::UndefinedMetric => b"undefined-metric\0",
        FlowdynStatus::Parse => b"parse\0",
        FlowdynStatus::Config => b"config\0",
        FlowdynStatus::Io => b"io\0",
        FlowdynStatus::Serialization => b"serialization\0",
        FlowdynStatus::NullPointer => b"null-pointer\0",
        FlowdynStatus::NotCovered => b"not-covered\0",
        FlowdynStatus::Panic => b"panic\0",
    };
    s.as_ptr().cast()
}
