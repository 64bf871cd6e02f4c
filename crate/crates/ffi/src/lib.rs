//! C ABI for the prevsim harness.
//!
//! Every function returns a [`PrevsimStatus`]; results come back through out
//! pointers. On failure the message is available from [`prevsim_last_error`]
//! on the same thread. Strings handed out by the library are freed with
//! [`prevsim_string_free`]; handles with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use prevsim::backend::MockBackend;
use prevsim::domain::{discretize, EpidemicCondition, ScalePoints};
use prevsim::error::{DomainError, ExperimentError, SimError, StatsError};
use prevsim::experiment::{environmental_impact, make_grid, policy_relaxation_condition, GridSpec, ImpactCoefficients};
use prevsim::ingest::{Period, Persona, RiskPerception};
use prevsim::prompt::{Templates, DEFAULT_DYNAMIC_TEMPLATE, DEFAULT_STATIC_TEMPLATE};
use prevsim::sim::{SimConfig, Simulator};
use prevsim::stats::{ks_two_sample_with, KsMethod};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrevsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Parse = 4,
    Backend = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PrevsimKsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PrevsimImpact {
    pub per_capita_volume_l: f64,
    pub per_capita_dbp_mg: f64,
    pub total_volume_l: f64,
    pub total_tons: f64,
    pub total_dbp_kg: f64,
    /// Nonzero when intensity fell and the figures are avoided discharge.
    pub avoided: u8,
}

/// Opaque list of epidemic conditions.
pub struct PrevsimGrid {
    conditions: Vec<EpidemicCondition>,
    labels: Vec<CString>,
}

/// Opaque simulator over the deterministic mock backend.
pub struct PrevsimSimulator {
    backend: MockBackend,
    templates: Templates,
    config: SimConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(PrevsimStatus, String);

impl From<DomainError> for Failure {
    fn from(e: DomainError) -> Self {
        Failure(PrevsimStatus::Domain, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        let status = match e {
            StatsError::Empty(_) | StatsError::Input(_) => PrevsimStatus::InvalidArgument,
            _ => PrevsimStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let status = match e {
            ExperimentError::Config(_) => PrevsimStatus::InvalidArgument,
            ExperimentError::Domain(_) => PrevsimStatus::Domain,
            _ => PrevsimStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match &e {
            SimError::Backend(_) => PrevsimStatus::Backend,
            SimError::Repetition { source, .. } if matches!(**source, SimError::Backend(_)) => {
                PrevsimStatus::Backend
            }
            SimError::Domain(_) => PrevsimStatus::Domain,
            SimError::Config(_) => PrevsimStatus::InvalidArgument,
            _ => PrevsimStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(PrevsimStatus::Parse, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Run `f`, translating errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PrevsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PrevsimStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PrevsimStatus::Internal
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(PrevsimStatus::NullPointer, format!("{name} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PrevsimStatus::InvalidArgument, msg.into())
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn give_string(s: String, out: &mut *mut c_char) -> Result<(), Failure> {
    *out = CString::new(s)
        .map_err(|_| Failure(PrevsimStatus::Internal, "string contains NUL".into()))?
        .into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn prevsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn prevsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn prevsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Map probability `p` onto a 5- or 6-point Likert scale.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prevsim_discretize(p: f64, points: u8, out: *mut u8) -> PrevsimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = discretize(p, ScalePoints::from_count(points)?)?.value();
        Ok(())
    })
}

/// Two-sample KS test. `exact` nonzero uses the permutation p-value for small samples.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn prevsim_ks_two_sample(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    exact: u8,
    out: *mut PrevsimKsResult,
) -> PrevsimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let (a, b) = (slice_arg(a, na, "a")?, slice_arg(b, nb, "b")?);
        let method = if exact != 0 { KsMethod::ExactSmall } else { KsMethod::Asymptotic };
        let r = ks_two_sample_with(a, b, method)?;
        *out = PrevsimKsResult {
            statistic: r.statistic,
            p_value: r.p_value,
            n1: r.n1,
            n2: r.n2,
        };
        Ok(())
    })
}

/// Percentage of nonzero flags, rounded to one decimal.
///
/// # Safety
/// `flags` must point to `n` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn prevsim_pass_rate(flags: *const u8, n: usize, out: *mut f64) -> PrevsimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let flags: Vec<bool> = slice_arg(flags, n, "flags")?.iter().map(|&f| f != 0).collect();
        *out = prevsim::stats::pass_rate(&flags)?;
        Ok(())
    })
}

/// Disinfectant discharge for a change in mean intensity, default coefficients.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prevsim_environmental_impact(
    intensity_from: f64,
    intensity_to: f64,
    population: f64,
    out: *mut PrevsimImpact,
) -> PrevsimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let e = environmental_impact(intensity_from, intensity_to, population, ImpactCoefficients::default())?;
        *out = PrevsimImpact {
            per_capita_volume_l: e.per_capita_volume_l,
            per_capita_dbp_mg: e.per_capita_dbp_mg,
            total_volume_l: e.total_volume_l,
            total_tons: e.total_tons,
            total_dbp_kg: e.total_dbp_kg,
            avoided: e.avoided as u8,
        };
        Ok(())
    })
}

fn grid_handle(conditions: Vec<EpidemicCondition>) -> Result<*mut PrevsimGrid, Failure> {
    let labels = conditions
        .iter()
        .map(|c| CString::new(c.label.clone()).map_err(|_| invalid("label contains NUL")))
        .collect::<Result<_, _>>()?;
    Ok(Box::into_raw(Box::new(PrevsimGrid { conditions, labels })))
}

/// The default scenario grid.
///
/// # Safety
/// `out` must be a valid pointer; free the handle with `prevsim_grid_free`.
#[no_mangle]
pub unsafe extern "C" fn prevsim_grid_new_default(out: *mut *mut PrevsimGrid) -> PrevsimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = grid_handle(make_grid(&GridSpec::default())?)?;
        Ok(())
    })
}

/// A grid from a JSON spec; omitted fields take their defaults.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prevsim_grid_from_json(spec_json: *const c_char, out: *mut *mut PrevsimGrid) -> PrevsimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let spec: GridSpec = serde_json::from_str(str_arg(spec_json, "spec_json")?)?;
        *out = grid_handle(make_grid(&spec)?)?;
        Ok(())
    })
}

/// # Safety
/// `grid` must be a live grid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prevsim_grid_len(grid: *const PrevsimGrid, out: *mut usize) -> PrevsimStatus {
    guard(|| {
        let grid = grid.as_ref().ok_or_else(|| null("grid"))?;
        *out_ref(out, "out")? = grid.conditions.len();
        Ok(())
    })
}

/// Label of condition `index`, owned by the grid.
///
/// # Safety
/// `grid` must be a live grid handle and `out` a valid pointer. The string
/// lives as long as the grid.
#[no_mangle]
pub unsafe extern "C" fn prevsim_grid_label(
    grid: *const PrevsimGrid,
    index: usize,
    out: *mut *const c_char,
) -> PrevsimStatus {
    guard(|| {
        let grid = grid.as_ref().ok_or_else(|| null("grid"))?;
        let out = out_ref(out, "out")?;
        let label = grid
            .labels
            .get(index)
            .ok_or_else(|| invalid(format!("index {index} out of range")))?;
        *out = label.as_ptr();
        Ok(())
    })
}

/// Condition `index` as JSON; free with `prevsim_string_free`.
///
/// # Safety
/// `grid` must be a live grid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prevsim_grid_condition_json(
    grid: *const PrevsimGrid,
    index: usize,
    out: *mut *mut c_char,
) -> PrevsimStatus {
    guard(|| {
        let grid = grid.as_ref().ok_or_else(|| null("grid"))?;
        let out = out_ref(out, "out")?;
        let c = grid
            .conditions
            .get(index)
            .ok_or_else(|| invalid(format!("index {index} out of range")))?;
        give_string(serde_json::to_string(c)?, out)
    })
}

/// # Safety
/// `grid` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn prevsim_grid_free(grid: *mut PrevsimGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// The policy-relaxation condition as JSON; free with `prevsim_string_free`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prevsim_policy_relaxation_json(out: *mut *mut c_char) -> PrevsimStatus {
    guard(|| give_string(serde_json::to_string(&policy_relaxation_condition())?, out_ref(out, "out")?))
}

/// Simulator over the mock backend with default templates.
///
/// # Safety
/// `out` must be a valid pointer; free the handle with `prevsim_simulator_free`.
#[no_mangle]
pub unsafe extern "C" fn prevsim_simulator_new_mock(
    seed: u64,
    repetitions: u32,
    out: *mut *mut PrevsimSimulator,
) -> PrevsimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let config = SimConfig {
            repetitions,
            master_seed: seed,
            ..SimConfig::default()
        };
        config.validate()?;
        let templates = Templates::new(DEFAULT_STATIC_TEMPLATE, DEFAULT_DYNAMIC_TEMPLATE, Default::default())
            .map_err(|e| Failure(PrevsimStatus::Internal, e.to_string()))?;
        *out = Box::into_raw(Box::new(PrevsimSimulator {
            backend: MockBackend::new(seed),
            templates,
            config,
        }));
        Ok(())
    })
}

/// Static behaviour profile for a persona under a condition, as JSON.
///
/// `persona_json` and `condition_json` use the library's serde layout;
/// `risk_level` (1..=6) replaces the persona's own risk perception.
///
/// # Safety
/// `sim` must be a live simulator handle, the JSON arguments NUL-terminated
/// strings and `out` a valid pointer. Free the result with `prevsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn prevsim_simulator_static_json(
    sim: *const PrevsimSimulator,
    persona_json: *const c_char,
    condition_json: *const c_char,
    risk_level: u8,
    out: *mut *mut c_char,
) -> PrevsimStatus {
    guard(|| {
        let h = sim.as_ref().ok_or_else(|| null("sim"))?;
        let out = out_ref(out, "out")?;
        let persona: Persona = serde_json::from_str(str_arg(persona_json, "persona_json")?)?;
        let condition: EpidemicCondition = serde_json::from_str(str_arg(condition_json, "condition_json")?)?;
        condition.validate()?;
        let risk = RiskPerception::from_level(risk_level, Period::T1)?;
        let sim = Simulator::new(&h.backend, &h.templates, h.config.clone())?;
        let profile = sim.simulate_static(&persona, &condition, &risk, &[])?;
        give_string(serde_json::to_string(&profile)?, out)
    })
}

/// # Safety
/// `sim` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn prevsim_simulator_free(sim: *mut PrevsimSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn null_out_pointer_is_reported() {
        let s = unsafe { prevsim_discretize(0.5, 5, ptr::null_mut()) };
        assert_eq!(s, PrevsimStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(prevsim_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "out is null");
    }
}
