//! C interface to `oml-core`.
//!
//! Objects cross the boundary as opaque pointers. Each is created by an
//! `oml_*_load` / `oml_*_new` / `oml_*_from_*` call and released with the
//! matching `oml_*_free`. Fallible calls return an [`OmlStatus`]; after a
//! failure, [`oml_last_error`] returns a message that stays valid on the
//! calling thread until its next failing call. Strings handed out by the
//! library are released with [`oml_string_free`].
//!
//! Panics never unwind into the caller; they are reported as
//! [`OmlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use oml_core::config::TaskConfig;
use oml_core::finetune::{finetune, FinetuneProblem};
use oml_core::materials::MaterialLibrary;
use oml_core::optics::{evaluate_stack, Polarization, SpectrumQuery};
use oml_core::photometry::{photometry_report, AveragedReflectance, LuminosityCurve, SpectralBand};
use oml_core::reward::{compute_reward, RewardSpec};
use oml_core::structure::{Environment, ResolvedStructure, Structure};
use oml_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmlStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument or input file violates a documented constraint.
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    UnknownMaterial = 5,
    /// A computation produced a non-finite value or found no solution.
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmlPolarization {
    S = 0,
    P = 1,
    Unpolarized = 2,
}

impl From<OmlPolarization> for Polarization {
    fn from(p: OmlPolarization) -> Self {
        match p {
            OmlPolarization::S => Polarization::S,
            OmlPolarization::P => Polarization::P,
            OmlPolarization::Unpolarized => Polarization::Unpolarized,
        }
    }
}

/// A set of tabulated materials.
pub struct OmlLibrary(MaterialLibrary);

/// An ordered list of (material, thickness) layers, top first.
pub struct OmlStructure(Structure);

/// A task configuration with its material library and reward target loaded.
pub struct OmlTask {
    config: TaskConfig,
    library: MaterialLibrary,
    spec: RewardSpec,
}

struct Failure {
    status: OmlStatus,
    message: String,
}

impl Failure {
    fn null(what: &str) -> Self {
        Failure {
            status: OmlStatus::NullPointer,
            message: format!("`{what}` is NULL"),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            status: OmlStatus::InvalidArgument,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Invalid(_) | Error::Dimension(_) => OmlStatus::InvalidArgument,
            Error::Parse { .. } | Error::Serde(_) => OmlStatus::Parse,
            Error::Io { .. } => OmlStatus::Io,
            Error::UnknownMaterial(_) => OmlStatus::UnknownMaterial,
            Error::NonFinite(_) | Error::NoBracket(_) => OmlStatus::Numerical,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OmlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OmlStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            OmlStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn put<T>(out: *mut T, what: &str, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::invalid("string contains a NUL byte"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message describing the last failure on this thread, or NULL if none.
#[no_mangle]
pub extern "C" fn oml_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn oml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a material manifest (TOML mapping names to `wavelength_nm,n,k`
/// CSV files).
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oml_library_load(manifest_path: *const c_char, out: *mut *mut OmlLibrary) -> OmlStatus {
    guard(|| {
        let path = text(manifest_path, "manifest_path")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let lib = MaterialLibrary::load(Path::new(path))?;
        put(out, "out", Box::into_raw(Box::new(OmlLibrary(lib))))
    })
}

/// Number of materials in the library (0 for NULL).
///
/// # Safety
/// `library` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oml_library_len(library: *const OmlLibrary) -> usize {
    library.as_ref().map_or(0, |l| l.0.len())
}

/// # Safety
/// `library` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oml_library_free(library: *mut OmlLibrary) {
    if !library.is_null() {
        drop(Box::from_raw(library));
    }
}

/// Parses `[{"material": ..., "thickness_nm": ...}, ...]`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oml_structure_from_json(json: *const c_char, out: *mut *mut OmlStructure) -> OmlStatus {
    guard(|| {
        let json = text(json, "json")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let s = Structure::from_json(json)?;
        put(out, "out", Box::into_raw(Box::new(OmlStructure(s))))
    })
}

/// Builds a structure from parallel arrays of `n` material names and
/// thicknesses in nm.
///
/// # Safety
/// `materials` must point to `n` NUL-terminated strings and `thicknesses_nm`
/// to `n` doubles (either may be NULL when `n == 0`).
#[no_mangle]
pub unsafe extern "C" fn oml_structure_new(
    materials: *const *const c_char,
    thicknesses_nm: *const f64,
    n: usize,
    out: *mut *mut OmlStructure,
) -> OmlStatus {
    guard(|| {
        if n > 0 && materials.is_null() {
            return Err(Failure::null("materials"));
        }
        if n > 0 && thicknesses_nm.is_null() {
            return Err(Failure::null("thicknesses_nm"));
        }
        let mut pairs = Vec::with_capacity(n);
        for i in 0..n {
            let name = text(*materials.add(i), "materials[i]")?;
            let d = *thicknesses_nm.add(i);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Failure::invalid(format!(
                    "layer {i}: thickness {d} nm must be positive and finite"
                )));
            }
            pairs.push((name.to_string(), d));
        }
        put(
            out,
            "out",
            Box::into_raw(Box::new(OmlStructure(Structure::from_pairs(pairs)))),
        )
    })
}

/// Number of layers (0 for NULL).
///
/// # Safety
/// `structure` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oml_structure_len(structure: *const OmlStructure) -> usize {
    structure.as_ref().map_or(0, |s| s.0.len())
}

/// Material name (to be released with [`oml_string_free`]) and thickness of
/// layer `index`.
///
/// # Safety
/// `structure` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn oml_structure_layer(
    structure: *const OmlStructure,
    index: usize,
    out_material: *mut *mut c_char,
    out_thickness_nm: *mut f64,
) -> OmlStatus {
    guard(|| {
        let s = get(structure, "structure")?;
        let layer =
            s.0.layers
                .get(index)
                .ok_or_else(|| Failure::invalid(format!("layer {index} out of range for {} layers", s.0.len())))?;
        if out_material.is_null() {
            return Err(Failure::null("out_material"));
        }
        put(out_thickness_nm, "out_thickness_nm", layer.thickness_nm)?;
        put(out_material, "out_material", into_c_string(layer.material.clone())?)
    })
}

/// Serializes to JSON; release the result with [`oml_string_free`].
///
/// # Safety
/// `structure` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oml_structure_to_json(structure: *const OmlStructure, out: *mut *mut c_char) -> OmlStatus {
    guard(|| {
        let s = get(structure, "structure")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        put(out, "out", into_c_string(s.0.to_json())?)
    })
}

/// # Safety
/// `structure` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oml_structure_free(structure: *mut OmlStructure) {
    if !structure.is_null() {
        drop(Box::from_raw(structure));
    }
}

/// Reflectance, transmittance and absorptance of `structure` between air and
/// n = 1.5 glass at `n` wavelengths and one incidence angle. The three output
/// arrays must each hold `n` doubles.
///
/// # Safety
/// Handles must be live; `wavelengths_nm` and the outputs must point to `n`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn oml_spectrum(
    library: *const OmlLibrary,
    structure: *const OmlStructure,
    wavelengths_nm: *const f64,
    n: usize,
    angle_rad: f64,
    polarization: OmlPolarization,
    out_r: *mut f64,
    out_t: *mut f64,
    out_a: *mut f64,
) -> OmlStatus {
    guard(|| {
        let lib = get(library, "library")?;
        let s = get(structure, "structure")?;
        for (p, what) in [(out_r, "out_r"), (out_t, "out_t"), (out_a, "out_a")] {
            if p.is_null() {
                return Err(Failure::null(what));
            }
        }
        if n == 0 {
            return Ok(());
        }
        if wavelengths_nm.is_null() {
            return Err(Failure::null("wavelengths_nm"));
        }
        let wl = std::slice::from_raw_parts(wavelengths_nm, n).to_vec();
        let env = Environment::default();
        let resolved = ResolvedStructure::new(&s.0, &lib.0, &env)?;
        let query = SpectrumQuery {
            wavelengths_nm: wl,
            angles_rad: vec![angle_rad],
            polarization: polarization.into(),
        };
        let result = evaluate_stack(&resolved, &query)?;
        std::slice::from_raw_parts_mut(out_r, n).copy_from_slice(&result.r);
        std::slice::from_raw_parts_mut(out_t, n).copy_from_slice(&result.t);
        std::slice::from_raw_parts_mut(out_a, n).copy_from_slice(&result.a);
        Ok(())
    })
}

/// Loads a task configuration file together with its material library.
///
/// # Safety
/// `config_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oml_task_load(config_path: *const c_char, out: *mut *mut OmlTask) -> OmlStatus {
    guard(|| {
        let path = text(config_path, "config_path")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let config = TaskConfig::load(Path::new(path))?;
        config.validate()?;
        let library = config.load_full_library()?;
        let spec = config.reward_spec()?;
        put(out, "out", Box::into_raw(Box::new(OmlTask { config, library, spec })))
    })
}

/// # Safety
/// `task` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oml_task_free(task: *mut OmlTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Reward of `structure` under the task's target spectrum, in [0, 1].
///
/// # Safety
/// Handles must be live and `out_reward` valid.
#[no_mangle]
pub unsafe extern "C" fn oml_task_reward(
    task: *const OmlTask,
    structure: *const OmlStructure,
    out_reward: *mut f64,
) -> OmlStatus {
    guard(|| {
        let task = get(task, "task")?;
        let s = get(structure, "structure")?;
        let r = compute_reward(&s.0, &task.spec, &task.library)?;
        put(out_reward, "out_reward", r)
    })
}

/// Refines layer thicknesses within the task's bounds. The refined structure
/// is a new handle; it equals the input when no improvement was found.
///
/// # Safety
/// Handles must be live and the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn oml_task_finetune(
    task: *const OmlTask,
    structure: *const OmlStructure,
    out_structure: *mut *mut OmlStructure,
    out_reward_before: *mut f64,
    out_reward_after: *mut f64,
) -> OmlStatus {
    guard(|| {
        let task = get(task, "task")?;
        let s = get(structure, "structure")?;
        for (p, what) in [
            (out_reward_before, "out_reward_before"),
            (out_reward_after, "out_reward_after"),
        ] {
            if p.is_null() {
                return Err(Failure::null(what));
            }
        }
        if out_structure.is_null() {
            return Err(Failure::null("out_structure"));
        }
        let f = &task.config.finetune;
        let problem = FinetuneProblem::uniform(s.0.clone(), f.lower_nm, f.upper_nm, &task.spec, &task.library)?;
        let report = finetune(&problem, &f.options())?;
        put(out_reward_before, "out_reward_before", report.reward_before)?;
        put(out_reward_after, "out_reward_after", report.reward_after)?;
        put(
            out_structure,
            "out_structure",
            Box::into_raw(Box::new(OmlStructure(report.after))),
        )
    })
}

/// Solved emitter temperature and visible enhancement factor of a filter for
/// one view factor, using the task's photometry settings.
///
/// # Safety
/// Handles must be live and the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn oml_task_photometry(
    task: *const OmlTask,
    structure: *const OmlStructure,
    view_factor: f64,
    out_temperature_k: *mut f64,
    out_chi: *mut f64,
) -> OmlStatus {
    guard(|| {
        let task = get(task, "task")?;
        let s = get(structure, "structure")?;
        if out_temperature_k.is_null() || out_chi.is_null() {
            return Err(Failure::null("out_temperature_k/out_chi"));
        }
        let section = task
            .config
            .photometry
            .as_ref()
            .ok_or_else(|| Failure::invalid("task has no [photometry] section"))?;
        let luminosity = LuminosityCurve::read_csv(&task.config.resolve(&section.luminosity))?;
        let emitter = section.emitter(1.0)?;
        let averaged = AveragedReflectance::for_structure(
            &s.0,
            &task.library,
            &task.config.environment,
            SpectralBand::default(),
            64,
        )?;
        let report = photometry_report(&averaged, &emitter, &[view_factor], &luminosity)?[0];
        put(out_temperature_k, "out_temperature_k", report.t_solved_k)?;
        put(out_chi, "out_chi", report.chi)
    })
}
