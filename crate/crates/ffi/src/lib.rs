//! C ABI over `gridse`.
//!
//! Objects cross the boundary as opaque handles created by constructor
//! functions (`gridse_case_read`, `gridse_secase_generate`, ...) and released
//! with the matching `*_free`. Every fallible
//! call returns a [`GridseStatus`]; the message of the most recent failure on
//! the calling thread is available from [`gridse_last_error`]. Panics never
//! unwind into C: they are caught and reported as `GRIDSE_STATUS_PANIC`.
//!
//! `include/gridse.h` mirrors this file (see `cbindgen.toml`).

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gridse::case::GridCase;
use gridse::case_io::{load_se_case, parse_case, read_case, save_se_case};
use gridse::casegen::{generate_se_case, NoiseSpec, SeCase};
use gridse::error::Error;
use gridse::linear_se::{solve_linear_se, EstimateResult};
use gridse::montecarlo::{run_mc, McConfig, McSummary};
use gridse::network::PerturbationSpec;
use gridse::nonlinear_se::{solve_nonlinear_se, NlInit, NlOptions};
use gridse::powerflow::{solve_power_flow, PfInit, PfOptions};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridseStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Schema = 5,
    Io = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

impl From<&Error> for GridseStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } => GridseStatus::Parse,
            Error::Schema { .. } => GridseStatus::Schema,
            Error::Io { .. } => GridseStatus::Io,
            Error::Config(_) => GridseStatus::InvalidArgument,
            e if e.is_numerical() => GridseStatus::Numerical,
            _ => GridseStatus::Validation,
        }
    }
}

/// Opaque grid case.
pub struct GridseCase(GridCase);
/// Opaque measurement set.
pub struct GridseSeCase(SeCase);
/// Opaque estimator result.
pub struct GridseEstimate(EstimateResult);
/// Opaque Monte Carlo summary.
pub struct GridseMcSummary(McSummary);

/// Measurement synthesis parameters; see [`gridse_noise_spec_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GridseNoiseSpec {
    pub frac_pmu_perfect: f64,
    pub frac_pmu_noisy: f64,
    pub pmu_sigma_rel: f64,
    pub rtu_sigma_vm_rel: f64,
    pub rtu_sigma_pq_rel: f64,
    pub g_pmu: f64,
    pub rtu_gamma: f64,
    pub degraded_frac: f64,
    pub degraded_sigma_mult: f64,
    pub degraded_weight_div: f64,
}

impl From<GridseNoiseSpec> for NoiseSpec {
    fn from(s: GridseNoiseSpec) -> Self {
        NoiseSpec {
            frac_pmu_perfect: s.frac_pmu_perfect,
            frac_pmu_noisy: s.frac_pmu_noisy,
            pmu_sigma_rel: s.pmu_sigma_rel,
            rtu_sigma_vm_rel: s.rtu_sigma_vm_rel,
            rtu_sigma_pq_rel: s.rtu_sigma_pq_rel,
            g_pmu: s.g_pmu,
            rtu_gamma: s.rtu_gamma,
            degraded_frac: s.degraded_frac,
            degraded_sigma_mult: s.degraded_sigma_mult,
            degraded_weight_div: s.degraded_weight_div,
        }
    }
}

/// Monte Carlo settings. The `sigma_*` fields are ignored unless
/// `use_net_uncertainty` is non-zero.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GridseMcConfig {
    pub samples: usize,
    pub seed: u64,
    pub threads: usize,
    pub histogram_bins: usize,
    pub pilot_samples: usize,
    pub use_net_uncertainty: i32,
    pub sigma_line_r: f64,
    pub sigma_line_x: f64,
    pub sigma_xfmr_r: f64,
    pub sigma_xfmr_x: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (GridseStatus, String)>) -> GridseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            GridseStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GridseStatus::Panic
        }
    }
}

fn fail(e: Error) -> (GridseStatus, String) {
    (GridseStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (GridseStatus, String) {
    (GridseStatus::NullArgument, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (GridseStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GridseStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GridseStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), (GridseStatus, String)> {
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err((
            GridseStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gridse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread ("" after a success).
/// Valid until the next gridse call on the same thread.
#[no_mangle]
pub extern "C" fn gridse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn gridse_noise_spec_default() -> GridseNoiseSpec {
    let d = NoiseSpec::default();
    GridseNoiseSpec {
        frac_pmu_perfect: d.frac_pmu_perfect,
        frac_pmu_noisy: d.frac_pmu_noisy,
        pmu_sigma_rel: d.pmu_sigma_rel,
        rtu_sigma_vm_rel: d.rtu_sigma_vm_rel,
        rtu_sigma_pq_rel: d.rtu_sigma_pq_rel,
        g_pmu: d.g_pmu,
        rtu_gamma: d.rtu_gamma,
        degraded_frac: d.degraded_frac,
        degraded_sigma_mult: d.degraded_sigma_mult,
        degraded_weight_div: d.degraded_weight_div,
    }
}

#[no_mangle]
pub extern "C" fn gridse_mc_config_default() -> GridseMcConfig {
    let d = McConfig::default();
    GridseMcConfig {
        samples: d.samples,
        seed: d.seed,
        threads: d.threads,
        histogram_bins: d.histogram_bins,
        pilot_samples: d.pilot_samples,
        use_net_uncertainty: 0,
        sigma_line_r: PerturbationSpec::TEMPERATURE.sigma_line_r,
        sigma_line_x: PerturbationSpec::TEMPERATURE.sigma_line_x,
        sigma_xfmr_r: PerturbationSpec::TEMPERATURE.sigma_xfmr_r,
        sigma_xfmr_x: PerturbationSpec::TEMPERATURE.sigma_xfmr_x,
    }
}

// ---------------------------------------------------------------------------
// Grid cases

/// Parses MATPOWER text.
#[no_mangle]
pub unsafe extern "C" fn gridse_case_parse(text: *const c_char, out: *mut *mut GridseCase) -> GridseStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = parse_case(text).map_err(fail)?;
        put(out, GridseCase(c));
        Ok(())
    })
}

/// Reads a MATPOWER file.
#[no_mangle]
pub unsafe extern "C" fn gridse_case_read(path: *const c_char, out: *mut *mut GridseCase) -> GridseStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = read_case(path).map_err(fail)?;
        put(out, GridseCase(c));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_case_n_buses(case: *const GridseCase) -> usize {
    case.as_ref().map_or(0, |c| c.0.n_buses())
}

#[no_mangle]
pub unsafe extern "C" fn gridse_case_free(case: *mut GridseCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Solves the power flow (flat start) and writes the rectangular voltages
/// into `vr`/`vi`, each of capacity `len`.
#[no_mangle]
pub unsafe extern "C" fn gridse_power_flow(
    case: *const GridseCase,
    tol: f64,
    max_iter: usize,
    vr: *mut f64,
    vi: *mut f64,
    len: usize,
    iterations: *mut usize,
) -> GridseStatus {
    guard(|| {
        let c = as_ref(case, "case")?;
        let opt = PfOptions {
            tol,
            max_iter,
            init: PfInit::Flat,
        };
        let pf = solve_power_flow(&c.0, &opt).map_err(fail)?;
        copy_out(&pf.vr, vr, len)?;
        copy_out(&pf.vi, vi, len)?;
        if !iterations.is_null() {
            *iterations = pf.iterations;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Measurement sets

/// Solves the power flow of `case` and synthesizes a measurement set around it.
#[no_mangle]
pub unsafe extern "C" fn gridse_secase_generate(
    case: *const GridseCase,
    spec: *const GridseNoiseSpec,
    seed: u64,
    out: *mut *mut GridseSeCase,
) -> GridseStatus {
    guard(|| {
        let c = as_ref(case, "case")?;
        let spec = *as_ref(spec, "spec")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pf = solve_power_flow(&c.0, &PfOptions::default()).map_err(fail)?;
        let se = generate_se_case(&pf, &c.0, &spec.into(), seed).map_err(fail)?;
        put(out, GridseSeCase(se));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_secase_load(path: *const c_char, out: *mut *mut GridseSeCase) -> GridseStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let se = load_se_case(path).map_err(fail)?;
        put(out, GridseSeCase(se));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_secase_save(se: *const GridseSeCase, path: *const c_char) -> GridseStatus {
    guard(|| {
        let se = as_ref(se, "secase")?;
        let path = str_arg(path, "path")?;
        save_se_case(&se.0, path).map_err(fail)
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_secase_n_buses(se: *const GridseSeCase) -> usize {
    se.as_ref().map_or(0, |s| s.0.n_buses())
}

/// Copies the embedded truth; fails with `GRIDSE_STATUS_VALIDATION` if absent.
#[no_mangle]
pub unsafe extern "C" fn gridse_secase_truth(
    se: *const GridseSeCase,
    vr: *mut f64,
    vi: *mut f64,
    len: usize,
) -> GridseStatus {
    guard(|| {
        let se = as_ref(se, "secase")?;
        let (tr, ti) = se
            .0
            .truth
            .as_ref()
            .ok_or_else(|| (GridseStatus::Validation, "measurement set has no truth".to_string()))?;
        copy_out(tr, vr, len)?;
        copy_out(ti, vi, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_secase_free(se: *mut GridseSeCase) {
    if !se.is_null() {
        drop(Box::from_raw(se));
    }
}

// ---------------------------------------------------------------------------
// Estimation

#[no_mangle]
pub unsafe extern "C" fn gridse_estimate_linear(se: *const GridseSeCase, out: *mut *mut GridseEstimate) -> GridseStatus {
    guard(|| {
        let se = as_ref(se, "secase")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = solve_linear_se(&se.0).map_err(fail)?;
        put(out, GridseEstimate(r));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_estimate_nonlinear(
    se: *const GridseSeCase,
    tol: f64,
    max_iter: usize,
    out: *mut *mut GridseEstimate,
) -> GridseStatus {
    guard(|| {
        let se = as_ref(se, "secase")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opt = NlOptions {
            tol,
            max_iter,
            damping: 1.0,
            init: NlInit::FromLinear,
        };
        let r = solve_nonlinear_se(&se.0, &opt).map_err(fail)?;
        put(out, GridseEstimate(r));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_estimate_voltages(
    est: *const GridseEstimate,
    vr: *mut f64,
    vi: *mut f64,
    len: usize,
) -> GridseStatus {
    guard(|| {
        let e = as_ref(est, "estimate")?;
        copy_out(&e.0.vr, vr, len)?;
        copy_out(&e.0.vi, vi, len)
    })
}

/// Objective value, NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn gridse_estimate_objective(est: *const GridseEstimate) -> f64 {
    est.as_ref().map_or(f64::NAN, |e| e.0.objective)
}

#[no_mangle]
pub unsafe extern "C" fn gridse_estimate_iterations(est: *const GridseEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.iterations)
}

#[no_mangle]
pub unsafe extern "C" fn gridse_estimate_converged(est: *const GridseEstimate) -> i32 {
    est.as_ref().map_or(0, |e| e.0.converged as i32)
}

#[no_mangle]
pub unsafe extern "C" fn gridse_estimate_free(est: *mut GridseEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo

#[no_mangle]
pub unsafe extern "C" fn gridse_mc_run(
    se: *const GridseSeCase,
    cfg: *const GridseMcConfig,
    out: *mut *mut GridseMcSummary,
) -> GridseStatus {
    guard(|| {
        let se = as_ref(se, "secase")?;
        let c = *as_ref(cfg, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let net = (c.use_net_uncertainty != 0).then_some(PerturbationSpec {
            sigma_line_r: c.sigma_line_r,
            sigma_line_x: c.sigma_line_x,
            sigma_xfmr_r: c.sigma_xfmr_r,
            sigma_xfmr_x: c.sigma_xfmr_x,
        });
        let cfg = McConfig {
            samples: c.samples,
            seed: c.seed,
            threads: c.threads,
            net_uncertainty: net,
            histogram_bins: c.histogram_bins,
            pilot_samples: c.pilot_samples,
        };
        let s = run_mc(&se.0, &cfg).map_err(fail)?;
        put(out, GridseMcSummary(s));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_mc_samples_completed(s: *const GridseMcSummary) -> usize {
    s.as_ref().map_or(0, |s| s.0.samples_completed)
}

/// Per-bus mean and standard deviation of the voltage magnitude.
#[no_mangle]
pub unsafe extern "C" fn gridse_mc_vm_stats(
    s: *const GridseMcSummary,
    mean: *mut f64,
    std: *mut f64,
    len: usize,
) -> GridseStatus {
    guard(|| {
        let s = as_ref(s, "summary")?;
        copy_out(&s.0.vm.mean, mean, len)?;
        copy_out(&s.0.vm.std, std, len)
    })
}

/// Per-bus mean and standard deviation of the voltage angle (radians).
#[no_mangle]
pub unsafe extern "C" fn gridse_mc_va_stats(
    s: *const GridseMcSummary,
    mean: *mut f64,
    std: *mut f64,
    len: usize,
) -> GridseStatus {
    guard(|| {
        let s = as_ref(s, "summary")?;
        copy_out(&s.0.va.mean, mean, len)?;
        copy_out(&s.0.va.std, std, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn gridse_mc_free(s: *mut GridseMcSummary) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}
