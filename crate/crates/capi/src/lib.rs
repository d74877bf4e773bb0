//! C ABI over the pfrac library: opaque handles, integer status codes, and
//! plain-old-data row structs, so other languages can drive runs and read
//! trajectories without the Rust toolchain.
//!
//! Conventions:
//! - every fallible call returns a [`PfracStatus`]; `PFRAC_STATUS_OK` is 0;
//! - on failure, `pfrac_last_error()` returns a NUL-terminated message that
//!   stays valid until the next failing call on the same thread;
//! - handles are created and destroyed by matching `_parse`/`_simulate` and
//!   `_free` calls; passing NULL to a `_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::path::Path;

use pfrac::config::Config;
use pfrac::diagnostics::ledger;
use pfrac::evolution::{evolve, parametrize};
use pfrac::output::CsvRow;
use pfrac::run::trajectory_rows;
use pfrac::Error;

/// Status codes of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfracStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Solver = 4,
    Io = 5,
    OutOfRange = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> PfracStatus {
    match err {
        Error::Config(_) | Error::Validation(_) | Error::Unsupported(_) => PfracStatus::Config,
        Error::Io(_) => PfracStatus::Io,
        Error::SizeMismatch(_) => PfracStatus::OutOfRange,
        _ => PfracStatus::Solver,
    }
}

fn fail(err: &Error) -> PfracStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Message of the most recent failure on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn pfrac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// NUL-terminated library version.
#[no_mangle]
pub extern "C" fn pfrac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque parsed configuration.
pub struct PfracConfig(Config);

unsafe fn read_cstr<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, PfracStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is NULL"));
        return Err(PfracStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        PfracStatus::InvalidUtf8
    })
}

/// Parses and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
/// On success `*out` owns a configuration that must be released with
/// [`pfrac_config_free`].
#[no_mangle]
pub unsafe extern "C" fn pfrac_config_parse(
    path: *const c_char,
    out: *mut *mut PfracConfig,
) -> PfracStatus {
    if out.is_null() {
        set_error("out is NULL");
        return PfracStatus::NullArgument;
    }
    let path = match read_cstr(path, "path") {
        Ok(s) => s,
        Err(st) => return st,
    };
    match pfrac::config::parse_config(Path::new(path)) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(PfracConfig(cfg)));
            PfracStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Parses and validates a TOML configuration held in a string.
///
/// # Safety
/// Same contract as [`pfrac_config_parse`].
#[no_mangle]
pub unsafe extern "C" fn pfrac_config_parse_string(
    text: *const c_char,
    out: *mut *mut PfracConfig,
) -> PfracStatus {
    if out.is_null() {
        set_error("out is NULL");
        return PfracStatus::NullArgument;
    }
    let text = match read_cstr(text, "text") {
        Ok(s) => s,
        Err(st) => return st,
    };
    match pfrac::config::parse_config_str(text) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(PfracConfig(cfg)));
            PfracStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a configuration handle. NULL is a no-op.
///
/// # Safety
/// `cfg` must come from a `pfrac_config_parse*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pfrac_config_free(cfg: *mut PfracConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a configuration end to end with file outputs (CSV, VTK, report).
/// `exit_code` receives the run status: 0 success, 2 solver failure,
/// 3 invariant violation.
///
/// # Safety
/// `cfg` must be a live configuration handle; `exit_code` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pfrac_run(
    cfg: *const PfracConfig,
    exit_code: *mut c_int,
) -> PfracStatus {
    if cfg.is_null() || exit_code.is_null() {
        set_error("cfg or exit_code is NULL");
        return PfracStatus::NullArgument;
    }
    match pfrac::run::run(&(*cfg).0, "capi") {
        Ok(outcome) => {
            *exit_code = outcome.exit_code as c_int;
            if outcome.exit_code != 0 {
                set_error(&outcome.messages.join("; "));
            }
            PfracStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Segment kinds in [`PfracRow::kind`].
pub const PFRAC_SEGMENT_TIME: c_int = 0;
pub const PFRAC_SEGMENT_U: c_int = 1;
pub const PFRAC_SEGMENT_Z: c_int = 2;

/// One trajectory row (a segment end of the arc-length parametrization).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PfracRow {
    /// Arc coordinate at the segment end.
    pub s: f64,
    /// Time at the segment end.
    pub t: f64,
    /// Total energy, elastic part, dissipation part.
    pub total_energy: f64,
    pub elastic_energy: f64,
    pub dissipation: f64,
    /// Metric slopes at the segment end.
    pub slope_u: f64,
    pub slope_z: f64,
    /// Arc-length increment of the segment.
    pub arc_inc: f64,
    /// Power of the moving datum at the segment end.
    pub power: f64,
    /// Ledger residual (actual minus predicted energy).
    pub ledger_residual: f64,
    /// Owning time node (1-based).
    pub node: usize,
    /// Inner iteration index; -1 on time segments.
    pub inner: i64,
    /// 0 time, 1 displacement, 2 phase field.
    pub kind: c_int,
}

/// Opaque in-memory simulation result.
pub struct PfracResult {
    rows: Vec<CsvRow>,
    total_length: f64,
    node_count: usize,
    final_u: Vec<f64>,
    final_z: Vec<f64>,
    exit_code: c_int,
}

/// Runs a configuration in memory: initial equilibrium, staggered
/// evolution, parametrization in the configured mode, ledger. No files are
/// written. On success `*out` must be released with [`pfrac_result_free`].
///
/// # Safety
/// `cfg` must be a live configuration handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pfrac_simulate(
    cfg: *const PfracConfig,
    out: *mut *mut PfracResult,
) -> PfracStatus {
    if cfg.is_null() || out.is_null() {
        set_error("cfg or out is NULL");
        return PfracStatus::NullArgument;
    }
    let cfg = &(*cfg).0;
    let built = (|| -> pfrac::Result<PfracResult> {
        let sys = cfg.build_system()?;
        let z0 = cfg.initial_z(&sys.mesh);
        let evo = evolve(&sys, &cfg.time, &z0, &cfg.stagger)?;
        let traj = parametrize(&sys, &evo, &cfg.time, cfg.mode, &cfg.stagger)?;
        let rows = ledger(&sys, &traj)?;
        let csv_rows = trajectory_rows(&sys, &traj, &rows)?;
        Ok(PfracResult {
            total_length: traj.total_length,
            node_count: sys.mesh.node_count(),
            final_u: evo.final_state.u.clone(),
            final_z: evo.final_state.z.clone(),
            exit_code: if evo.failure.is_some() { 2 } else { 0 },
            rows: csv_rows,
        })
    })();
    match built {
        Ok(res) => {
            *out = Box::into_raw(Box::new(res));
            PfracStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a result handle. NULL is a no-op.
///
/// # Safety
/// `res` must come from [`pfrac_simulate`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pfrac_result_free(res: *mut PfracResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Total arc length S_k of the parametrized trajectory.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pfrac_result_total_length(res: *const PfracResult) -> f64 {
    if res.is_null() {
        return f64::NAN;
    }
    (*res).total_length
}

/// Run status of the simulation: 0 success, 2 solver failure.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pfrac_result_exit_code(res: *const PfracResult) -> c_int {
    if res.is_null() {
        return -1;
    }
    (*res).exit_code
}

/// Number of trajectory rows.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pfrac_result_row_count(res: *const PfracResult) -> usize {
    if res.is_null() {
        return 0;
    }
    (*res).rows.len()
}

/// Copies row `index` into `*row`.
///
/// # Safety
/// `res` must be a live result handle and `row` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pfrac_result_row(
    res: *const PfracResult,
    index: usize,
    row: *mut PfracRow,
) -> PfracStatus {
    if res.is_null() || row.is_null() {
        set_error("res or row is NULL");
        return PfracStatus::NullArgument;
    }
    let rows = &(*res).rows;
    let Some(r) = rows.get(index) else {
        set_error(&format!("row {index} out of range {}", rows.len()));
        return PfracStatus::OutOfRange;
    };
    *row = PfracRow {
        s: r.s,
        t: r.t,
        total_energy: r.energy.total,
        elastic_energy: r.energy.elastic,
        dissipation: r.energy.dissipation,
        slope_u: r.slope_u,
        slope_z: r.slope_z,
        arc_inc: r.arc_inc,
        power: r.power,
        ledger_residual: r.ledger_residual,
        node: r.node,
        inner: r.inner,
        kind: match r.kind {
            "time" => PFRAC_SEGMENT_TIME,
            "u" => PFRAC_SEGMENT_U,
            _ => PFRAC_SEGMENT_Z,
        },
    };
    PfracStatus::Ok
}

/// Number of mesh nodes (length of the phase-field arrays; displacement
/// arrays have twice as many entries, interleaved x/y in row-major node
/// order).
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pfrac_result_node_count(res: *const PfracResult) -> usize {
    if res.is_null() {
        return 0;
    }
    (*res).node_count
}

/// Copies the final phase field into `buf` (length `len >= node count`).
///
/// # Safety
/// `res` must be a live result handle; `buf` must point to `len` writable f64.
#[no_mangle]
pub unsafe extern "C" fn pfrac_result_final_phase(
    res: *const PfracResult,
    buf: *mut f64,
    len: usize,
) -> PfracStatus {
    if res.is_null() || buf.is_null() {
        set_error("res or buf is NULL");
        return PfracStatus::NullArgument;
    }
    let z = &(*res).final_z;
    if len < z.len() {
        set_error(&format!("buffer of {len} too small for {} values", z.len()));
        return PfracStatus::OutOfRange;
    }
    std::ptr::copy_nonoverlapping(z.as_ptr(), buf, z.len());
    PfracStatus::Ok
}

/// Copies the final displacement (2 entries per node, interleaved) into
/// `buf` (length `len >= 2 * node count`).
///
/// # Safety
/// `res` must be a live result handle; `buf` must point to `len` writable f64.
#[no_mangle]
pub unsafe extern "C" fn pfrac_result_final_displacement(
    res: *const PfracResult,
    buf: *mut f64,
    len: usize,
) -> PfracStatus {
    if res.is_null() || buf.is_null() {
        set_error("res or buf is NULL");
        return PfracStatus::NullArgument;
    }
    let u = &(*res).final_u;
    if len < u.len() {
        set_error(&format!("buffer of {len} too small for {} values", u.len()));
        return PfracStatus::OutOfRange;
    }
    std::ptr::copy_nonoverlapping(u.as_ptr(), buf, u.len());
    PfracStatus::Ok
}

/// Runs a named verification suite (`gradcheck`, `oracle`, `flows`,
/// `ledger`, `norms`); `failed` receives the number of failed checks.
///
/// # Safety
/// `suite` must be NUL-terminated; `failed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pfrac_verify(
    suite: *const c_char,
    seed: u64,
    failed: *mut usize,
) -> PfracStatus {
    if failed.is_null() {
        set_error("failed is NULL");
        return PfracStatus::NullArgument;
    }
    let name = match read_cstr(suite, "suite") {
        Ok(s) => s,
        Err(st) => return st,
    };
    match pfrac::verify::suite(name, seed) {
        Ok(checks) => {
            *failed = checks.iter().filter(|c| !c.passed).count();
            PfracStatus::Ok
        }
        Err(e) => fail(&e),
    }
}
