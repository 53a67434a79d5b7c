//! C interface to `pointwave`.
//!
//! Objects are opaque handles created by `pw_*` constructors and released
//! with the matching `*_free`. Every fallible call returns a [`PwStatus`];
//! on failure `pw_last_error()` holds a message for the calling thread.
//! Output arrays are caller-allocated: pass the capacity and query the
//! required length with the matching `*_len` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pointwave::effective::{EffectiveField, ModulationSignal};
use pointwave::harness::{self, ErrorReport, ExperimentConfig, SlopeFit};
use pointwave::newton::SpectralDecomposition;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid parameter, config or plan (CLI exit class 2).
    InvalidArgument = 2,
    /// Numerical quality failure: no convergence, instability, route
    /// disagreement (CLI exit class 3).
    Numerical = 3,
    Io = 4,
    BufferTooSmall = 5,
    /// The requested quantity does not exist, such as slopes of a report
    /// with fewer than three rows.
    Unavailable = 6,
    Panic = 7,
}

/// Slope selector for `pw_report_slope`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwNorm {
    Free = 0,
    Effective = 1,
    FreeExclusion = 2,
    EffectiveExclusion = 3,
}

pub struct PwConfig(ExperimentConfig);
pub struct PwSpectrum(SpectralDecomposition);
pub struct PwSignal(ModulationSignal);
pub struct PwReport(ErrorReport);

/// One ε row of a report.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PwErrorRow {
    pub eps: f64,
    pub e_free: f64,
    pub e_eff: f64,
    pub e_free_excl: f64,
    pub e_eff_excl: f64,
    pub horizon: f64,
    pub tau: f64,
    pub h: f64,
    pub dt: f64,
    pub modes: usize,
    pub captured_mass: f64,
    pub runtime_seconds: f64,
}

/// Log-log slope with its 95% confidence interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PwSlope {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Fail(PwStatus, String);

impl From<pointwave::Error> for Fail {
    fn from(e: pointwave::Error) -> Self {
        let status = match e.exit_code() {
            2 => PwStatus::InvalidArgument,
            3 => PwStatus::Numerical,
            _ => PwStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PwStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            PwStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(PwStatus::NullPointer, format!("{what} is null")))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(PwStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(PwStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PwStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, capacity: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(PwStatus::NullPointer, "output buffer is null".into()));
    }
    if capacity < src.len() {
        return Err(Fail(
            PwStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    *get_mut(out, "output pointer")? = value;
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next `pw_*` call on the same thread.
#[no_mangle]
pub extern "C" fn pw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a TOML config. Environment overrides are not applied.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_config_from_toml(toml: *const c_char, out: *mut *mut PwConfig) -> PwStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(text(toml, "toml")?)?;
        cfg.validate()?;
        put(out, boxed(PwConfig(cfg)))
    })
}

/// Reads a TOML config file and applies `POINTWAVE_*` environment overrides.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_config_load(path: *const c_char, out: *mut *mut PwConfig) -> PwStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(Path::new(text(path, "path")?))?;
        cfg.validate()?;
        put(out, boxed(PwConfig(cfg)))
    })
}

/// Replaces the ε list; the config is left unchanged if the result does
/// not validate.
///
/// # Safety
/// `cfg` must come from a `pw_config_*` constructor and `eps` must point
/// to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pw_config_set_eps(cfg: *mut PwConfig, eps: *const f64, len: usize) -> PwStatus {
    guard(|| {
        let cfg = get_mut(cfg, "config")?;
        let values = std::slice::from_raw_parts(get(eps, "eps")?, len).to_vec();
        let mut next = cfg.0.clone();
        next.eps = values;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Number of ε values in the config, 0 for a null handle.
///
/// # Safety
/// `cfg` must be null or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn pw_config_eps_len(cfg: *const PwConfig) -> usize {
    cfg.as_ref().map_or(0, |c| c.0.eps.len())
}

/// Horizon T used at `eps`.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_config_horizon(cfg: *const PwConfig, eps: f64, out: *mut f64) -> PwStatus {
    guard(|| put(out, get(cfg, "config")?.0.horizon(eps)))
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pw_config_free(cfg: *mut PwConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Newton spectrum of the configured inclusion at the reference resolution.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_spectrum_compute(cfg: *const PwConfig, out: *mut *mut PwSpectrum) -> PwStatus {
    guard(|| {
        let dec = harness::reference_spectrum(&get(cfg, "config")?.0)?;
        put(out, boxed(PwSpectrum(dec.without_vectors())))
    })
}

/// Number of modes, 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn pw_spectrum_len(s: *const PwSpectrum) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Eigenvalues in descending order.
///
/// # Safety
/// `s` must be a live spectrum handle and `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn pw_spectrum_eigenvalues(s: *const PwSpectrum, out: *mut f64, capacity: usize) -> PwStatus {
    guard(|| copy_out(&get(s, "spectrum")?.0.eigenvalues, out, capacity))
}

/// Couplings `c_k`, aligned with the eigenvalues.
///
/// # Safety
/// `s` must be a live spectrum handle and `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn pw_spectrum_couplings(s: *const PwSpectrum, out: *mut f64, capacity: usize) -> PwStatus {
    guard(|| copy_out(&get(s, "spectrum")?.0.couplings, out, capacity))
}

/// Captured mass `Σ c_k` and the volume of the discretized domain.
///
/// # Safety
/// `s` must be a live spectrum handle; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pw_spectrum_mass(s: *const PwSpectrum, captured: *mut f64, volume: *mut f64) -> PwStatus {
    guard(|| {
        let s = get(s, "spectrum")?;
        put(captured, s.0.captured_mass)?;
        put(volume, s.0.volume)
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pw_spectrum_free(s: *mut PwSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Modulation signal q(t) on `[0, horizon]` for the config's data and
/// signal settings.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_modulation_compute(
    cfg: *const PwConfig,
    spectrum: *const PwSpectrum,
    horizon: f64,
    out: *mut *mut PwSignal,
) -> PwStatus {
    guard(|| {
        let cfg = &get(cfg, "config")?.0;
        let dec = &get(spectrum, "spectrum")?.0;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Fail(PwStatus::InvalidArgument, format!("horizon must be positive, got {horizon}")));
        }
        let q = harness::modulation(cfg, dec, &cfg.bundle()?, horizon)?;
        put(out, boxed(PwSignal(q)))
    })
}

/// Number of samples of q, 0 for a null handle.
///
/// # Safety
/// `q` must be null or a live signal handle.
#[no_mangle]
pub unsafe extern "C" fn pw_signal_len(q: *const PwSignal) -> usize {
    q.as_ref().map_or(0, |q| q.0.total.len())
}

/// Sample spacing of q.
///
/// # Safety
/// `q` must be a live signal handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_signal_dt(q: *const PwSignal, out: *mut f64) -> PwStatus {
    guard(|| put(out, get(q, "signal")?.0.dt))
}

/// Samples `q(i·dt)`.
///
/// # Safety
/// `q` must be a live signal handle and `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn pw_signal_values(q: *const PwSignal, out: *mut f64, capacity: usize) -> PwStatus {
    guard(|| copy_out(&get(q, "signal")?.0.total, out, capacity))
}

/// Interpolated `q(t)`; zero for `t <= 0`, `PW_STATUS_INVALID_ARGUMENT`
/// past the horizon.
///
/// # Safety
/// `q` must be a live signal handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_signal_at(q: *const PwSignal, t: f64, out: *mut f64) -> PwStatus {
    guard(|| {
        let q = &get(q, "signal")?.0;
        let v = q.at(t).ok_or(pointwave::Error::Coverage {
            requested: t,
            horizon: q.horizon(),
        })?;
        put(out, v)
    })
}

/// # Safety
/// `q` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pw_signal_free(q: *mut PwSignal) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Effective field `u_eff(t, x)` at `count` points stored as consecutive
/// `x, y, z` triples. Points inside the config's exclusion ball are
/// written as NaN.
///
/// # Safety
/// Handles must be live, `points` must hold `3·count` doubles and `out`
/// `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn pw_effective_sample(
    cfg: *const PwConfig,
    q: *const PwSignal,
    eps: f64,
    t: f64,
    points: *const f64,
    count: usize,
    out: *mut f64,
) -> PwStatus {
    guard(|| {
        let cfg = &get(cfg, "config")?.0;
        let q = &get(q, "signal")?.0;
        if count == 0 {
            return Ok(());
        }
        let raw = std::slice::from_raw_parts(get(points, "points")?, 3 * count);
        let xs: Vec<[f64; 3]> = raw.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let mut field = EffectiveField::new(eps, q.clone(), cfg.bundle()?, cfg.compare.exclusion)?;
        field.sphere_order = cfg.signal.sphere_order;
        let values: Vec<f64> = field
            .sample(t, &xs)?
            .into_iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect();
        copy_out(&values, out, count)
    })
}

/// FDTD comparison at a single ε, as a one-row report.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_compare(cfg: *const PwConfig, eps: f64, out: *mut *mut PwReport) -> PwStatus {
    guard(|| {
        let cfg = &get(cfg, "config")?.0;
        let row = harness::compare(cfg, eps)?;
        put(out, boxed(PwReport(ErrorReport::new(cfg.clone(), vec![row], 0.0)?)))
    })
}

/// Full sweep over the config's ε list.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_sweep(cfg: *const PwConfig, out: *mut *mut PwReport) -> PwStatus {
    guard(|| {
        let report = harness::run_sweep(&get(cfg, "config")?.0)?;
        put(out, boxed(PwReport(report)))
    })
}

/// Reads a report previously written as JSON.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_report_read(path: *const c_char, out: *mut *mut PwReport) -> PwStatus {
    guard(|| {
        let report = harness::read_report(Path::new(text(path, "path")?))?;
        put(out, boxed(PwReport(report)))
    })
}

/// Number of rows, 0 for a null handle.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn pw_report_len(r: *const PwReport) -> usize {
    r.as_ref().map_or(0, |r| r.0.rows.len())
}

/// Row `index`, rows sorted by ε descending.
///
/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_report_row(r: *const PwReport, index: usize, out: *mut PwErrorRow) -> PwStatus {
    guard(|| {
        let rows = &get(r, "report")?.0.rows;
        let row = rows.get(index).ok_or_else(|| {
            Fail(PwStatus::InvalidArgument, format!("row {index} out of range ({} rows)", rows.len()))
        })?;
        put(
            out,
            PwErrorRow {
                eps: row.eps,
                e_free: row.e_free,
                e_eff: row.e_eff,
                e_free_excl: row.e_free_excl,
                e_eff_excl: row.e_eff_excl,
                horizon: row.horizon,
                tau: row.tau,
                h: row.h,
                dt: row.dt,
                modes: row.modes,
                captured_mass: row.captured_mass,
                runtime_seconds: row.runtime_seconds,
            },
        )
    })
}

/// Log-log slope of one error norm; `PW_STATUS_UNAVAILABLE` when the
/// report carries no fits.
///
/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pw_report_slope(r: *const PwReport, norm: PwNorm, out: *mut PwSlope) -> PwStatus {
    guard(|| {
        let slopes = get(r, "report")?
            .0
            .slopes
            .as_ref()
            .ok_or_else(|| Fail(PwStatus::Unavailable, "report has no slope fits".into()))?;
        let f: &SlopeFit = match norm {
            PwNorm::Free => &slopes.free,
            PwNorm::Effective => &slopes.eff,
            PwNorm::FreeExclusion => &slopes.free_excl,
            PwNorm::EffectiveExclusion => &slopes.eff_excl,
        };
        put(
            out,
            PwSlope {
                slope: f.slope,
                intercept: f.intercept,
                ci_low: f.ci_low,
                ci_high: f.ci_high,
                points: f.points,
            },
        )
    })
}

/// Writes `report.csv`, `report.json` and `plot_errors.gp` into `dir`,
/// creating it if needed.
///
/// # Safety
/// `r` must be a live report handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pw_report_write(r: *const PwReport, dir: *const c_char) -> PwStatus {
    guard(|| {
        harness::export_report(&get(r, "report")?.0, Path::new(text(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pw_report_free(r: *mut PwReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
