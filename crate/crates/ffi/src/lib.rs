//! C ABI for `vramsey`.
//!
//! Every function returns a [`VrStatus`]; results go through out-pointers.
//! On failure, [`vr_last_error`] holds a message for the calling thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;
use std::time::Instant;

use vramsey::circuits::Template;
use vramsey::clock::{css_sigma, dick_limits, oqc_scaling, NoiseExponent};
use vramsey::cost::ExactCost;
use vramsey::estimation::{CostReport, PriorSpec};
use vramsey::experiment::{optimize_point, Backend, ExperimentConfig};
use vramsey::io::{write_bundle, Manifest};
use vramsey::{CircuitParams, Error, SpinOperatorTable};

/// Status codes; `VR_OK` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VrStatus {
    Ok = 0,
    InvalidAtomNumber = 1,
    NonFinite = 2,
    InvalidArgument = 3,
    NotHermitian = 4,
    DimensionMismatch = 5,
    NegativeExposure = 6,
    MemoryCap = 7,
    AsymptoticsInvalid = 8,
    UnusableProtocol = 9,
    OptimizationFailed = 10,
    Config = 11,
    UnsupportedFigure = 12,
    Io = 13,
    Json = 14,
    NullPointer = 15,
    BufferTooSmall = 16,
    Panic = 17,
}

impl From<&Error> for VrStatus {
    fn from(e: &Error) -> Self {
        match e.code() {
            "invalid_atom_number" => VrStatus::InvalidAtomNumber,
            "non_finite" => VrStatus::NonFinite,
            "invalid_argument" => VrStatus::InvalidArgument,
            "not_hermitian" => VrStatus::NotHermitian,
            "dimension_mismatch" => VrStatus::DimensionMismatch,
            "negative_exposure" => VrStatus::NegativeExposure,
            "memory_cap" => VrStatus::MemoryCap,
            "asymptotics_invalid" => VrStatus::AsymptoticsInvalid,
            "unusable_protocol" => VrStatus::UnusableProtocol,
            "optimization_failed" => VrStatus::OptimizationFailed,
            "config" => VrStatus::Config,
            "unsupported_figure" => VrStatus::UnsupportedFigure,
            "io" => VrStatus::Io,
            _ => VrStatus::Json,
        }
    }
}

/// Cost summary of one circuit at one prior width.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VrCostReport {
    /// Posterior mean squared error `(Δφ)²`.
    pub bmse: f64,
    /// `Δφ/δφ`.
    pub posterior_over_prior: f64,
    /// Effective measurement variance `(Δφ_M)²`.
    pub eff_meas_var: f64,
    /// Optimal slope of the linear estimator.
    pub a_opt: f64,
}

impl From<CostReport> for VrCostReport {
    fn from(r: CostReport) -> Self {
        Self {
            bmse: r.bmse,
            posterior_over_prior: r.posterior_over_prior,
            eff_meas_var: r.eff_meas_var,
            a_opt: r.a_opt,
        }
    }
}

/// Collective spin operators for N atoms.
pub struct VrTable(SpinOperatorTable);

/// Exact cost of one prior width and dephasing exposure.
pub struct VrCost {
    table: SpinOperatorTable,
    prior: PriorSpec,
    gamma_t: f64,
}

impl VrCost {
    fn cost(&self) -> Result<ExactCost<'_>, Error> {
        ExactCost::dephased(&self.table, self.prior, self.gamma_t)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Lib(Error),
    Null(&'static str),
    Buffer(usize),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VrStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            VrStatus::from(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            VrStatus::NullPointer
        }
        Ok(Err(Fail::Buffer(need))) => {
            set_error(format!("buffer too small: need {need}"));
            VrStatus::BufferTooSmall
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VrStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn floats<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail::Lib(Error::InvalidArgument(format!("{what} is not UTF-8: {e}"))))
}

fn exponent(alpha: u8) -> Result<NoiseExponent, Fail> {
    Ok(NoiseExponent::try_from(alpha)?)
}

/// Last error message on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn vr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds the operator table for `n` atoms.
///
/// # Safety
/// `out` must be a valid pointer; the handle must be freed with [`vr_table_free`].
#[no_mangle]
pub unsafe extern "C" fn vr_table_new(n: usize, out_table: *mut *mut VrTable) -> VrStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        *slot = Box::into_raw(Box::new(VrTable(SpinOperatorTable::build(n)?)));
        Ok(())
    })
}

/// # Safety
/// `table` must come from [`vr_table_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vr_table_free(table: *mut VrTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Exact cost at prior width `delta_phi` with dephasing exposure `gamma_t`
/// (0 for none). The table is copied.
///
/// # Safety
/// `table` and `out_cost` must be valid; free the result with [`vr_cost_free`].
#[no_mangle]
pub unsafe extern "C" fn vr_cost_new(
    table: *const VrTable,
    delta_phi: f64,
    gamma_t: f64,
    out_cost: *mut *mut VrCost,
) -> VrStatus {
    guard(|| {
        let table = deref(table, "table")?;
        let slot = out(out_cost, "out_cost")?;
        let cost = VrCost {
            table: table.0.clone(),
            prior: PriorSpec::new(delta_phi)?,
            gamma_t,
        };
        cost.cost()?;
        *slot = Box::into_raw(Box::new(cost));
        Ok(())
    })
}

/// # Safety
/// `cost` must come from [`vr_cost_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vr_cost_free(cost: *mut VrCost) {
    if !cost.is_null() {
        drop(Box::from_raw(cost));
    }
}

/// Evaluates an `(n_en, n_de)` circuit given `3(n_en + n_de)` angles
/// (entangler first), with the optimal estimator slope.
///
/// # Safety
/// `angles` must hold `len` doubles; `cost` and `report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vr_cost_evaluate(
    cost: *const VrCost,
    n_en: usize,
    n_de: usize,
    angles: *const f64,
    len: usize,
    report: *mut VrCostReport,
) -> VrStatus {
    guard(|| {
        let cost = deref(cost, "cost")?;
        let report = out(report, "report")?;
        let params = CircuitParams::from_angles(Template::new(n_en, n_de), floats(angles, len, "angles")?, 0.0)?;
        *report = cost.cost()?.evaluate(&params)?.into();
        Ok(())
    })
}

/// Cost at the optimal slope and its gradient, written to `gradient[0..len]`.
///
/// # Safety
/// `angles` and `gradient` must hold `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vr_cost_gradient(
    cost: *const VrCost,
    n_en: usize,
    n_de: usize,
    angles: *const f64,
    len: usize,
    value: *mut f64,
    gradient: *mut f64,
) -> VrStatus {
    guard(|| {
        let cost = deref(cost, "cost")?;
        let value = out(value, "value")?;
        let angles = floats(angles, len, "angles")?;
        if len > 0 && gradient.is_null() {
            return Err(Fail::Null("gradient"));
        }
        let g = cost.cost()?.value_and_gradient(Template::new(n_en, n_de), angles)?;
        *value = g.cost;
        if len > 0 {
            slice::from_raw_parts_mut(gradient, len).copy_from_slice(&g.gradient);
        }
        Ok(())
    })
}

/// Multi-start optimization of an `(n_en, n_de)` circuit. `n_starts = 0`
/// uses the default budget. Optimal angles go to `angles[0..len]`, where
/// `len` must be at least `3(n_en + n_de)`.
///
/// # Safety
/// `angles` must hold `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vr_cost_optimize(
    cost: *const VrCost,
    n_en: usize,
    n_de: usize,
    seed: u64,
    n_starts: usize,
    angles: *mut f64,
    len: usize,
    report: *mut VrCostReport,
) -> VrStatus {
    guard(|| {
        let cost = deref(cost, "cost")?;
        let report = out(report, "report")?;
        let template = Template::new(n_en, n_de);
        let need = template.parameter_count();
        if len < need {
            return Err(Fail::Buffer(need));
        }
        if need > 0 && angles.is_null() {
            return Err(Fail::Null("angles"));
        }
        let backend = Backend::Collective {
            table: &cost.table,
            gamma_t: cost.gamma_t,
        };
        let starts = (n_starts > 0).then_some(n_starts);
        let point = optimize_point(&backend, cost.prior.delta_phi, template, &[], seed, starts, None)?;
        if need > 0 {
            slice::from_raw_parts_mut(angles, need).copy_from_slice(&point.params.angles());
        }
        *report = point.report.into();
        Ok(())
    })
}

/// Dimensionless clock instability of the coherent spin state for noise
/// exponent `alpha` (1, 2 or 3).
///
/// # Safety
/// `sigma` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vr_css_sigma(n: usize, alpha: u8, bt: f64, sigma: *mut f64) -> VrStatus {
    guard(|| {
        *out(sigma, "sigma")? = css_sigma(n, exponent(alpha)?, bt)?;
        Ok(())
    })
}

/// Large-N optimum of the phase-slip limited clock: `b T` and `σ`.
///
/// # Safety
/// `bt_opt` and `sigma_opt` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vr_oqc_optimum(n: usize, alpha: u8, bt_opt: *mut f64, sigma_opt: *mut f64) -> VrStatus {
    guard(|| {
        let bt_opt = out(bt_opt, "bt_opt")?;
        let sigma_opt = out(sigma_opt, "sigma_opt")?;
        let s = oqc_scaling(n, exponent(alpha)?)?;
        *bt_opt = s.bt_opt;
        *sigma_opt = s.sigma_opt;
        Ok(())
    })
}

/// Largest dead-time fraction under flicker noise for a clock at
/// `(bt_opt, sigma_opt)`.
///
/// # Safety
/// `r_max` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vr_dick_r_max(bt_opt: f64, sigma_opt: f64, r_max: *mut f64) -> VrStatus {
    guard(|| {
        *out(r_max, "r_max")? = dick_limits(bt_opt, sigma_opt)?.r_max;
        Ok(())
    })
}

/// Runs an experiment configuration (JSON text) and writes its results and
/// manifest into `out_dir`. Nothing is written on failure.
///
/// # Safety
/// Both strings must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn vr_run_config(config_json: *const c_char, out_dir: *const c_char) -> VrStatus {
    guard(|| {
        let text = string(config_json, "config_json")?;
        let dir = string(out_dir, "out_dir")?;
        let config = ExperimentConfig::from_json(text)?;
        let start = Instant::now();
        let bundle = config.run()?;
        let manifest = Manifest::new(
            serde_json::to_value(&config).map_err(Error::from)?,
            config.hash()?,
            config.seed,
            start.elapsed().as_secs_f64(),
            &bundle,
        );
        write_bundle(Path::new(dir), &bundle, &manifest)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn css_cost_through_handles() {
        unsafe {
            let mut table = ptr::null_mut();
            assert_eq!(vr_table_new(8, &mut table), VrStatus::Ok);
            let mut cost = ptr::null_mut();
            assert_eq!(vr_cost_new(table, 0.5, 0.0, &mut cost), VrStatus::Ok);
            let mut rep = VrCostReport::default();
            assert_eq!(vr_cost_evaluate(cost, 0, 0, ptr::null(), 0, &mut rep), VrStatus::Ok);
            assert!(rep.posterior_over_prior > 0.0 && rep.posterior_over_prior < 1.0);
            vr_cost_free(cost);
            vr_table_free(table);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        unsafe {
            let mut table = ptr::null_mut();
            assert_eq!(vr_table_new(0, &mut table), VrStatus::InvalidAtomNumber);
            assert!(!vr_last_error().is_null());
            assert_eq!(vr_table_new(4, ptr::null_mut()), VrStatus::NullPointer);
            let mut s = 0.0;
            assert_eq!(vr_css_sigma(8, 7, 0.1, &mut s), VrStatus::InvalidArgument);
        }
    }
}
