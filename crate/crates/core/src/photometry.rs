//! Emission of a filtered incandescent emitter.
//!
//! The filter reflects part of the emitter's radiation back onto it. With
//! view factor `f`, the emitter's effective emissivity at angle `δ` is
//! `1 - f² R(λ, δ)`, averaged over the hemisphere with the `cos δ sin δ`
//! kernel. The emitter temperature follows from a power balance, and the
//! visible-light enhancement compares luminosity-weighted emission with a
//! bare blackbody at the reference temperature.
//!
//! Absolute radiometric factors (hemispherical π, emitting faces, the
//! truncated integration band) are folded into one constant calibrated so
//! that a black emitter with the reference power and area sits exactly at
//! the reference temperature.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::MaterialLibrary;
use crate::optics::{stack_rt, Polarization, StackSource};
use crate::structure::{Environment, ResolvedStructure, Structure};

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;
const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpec {
    pub power_w: f64,
    pub area_mm2: f64,
    pub view_factor: f64,
    pub reference_temperature_k: f64,
}

impl EmitterSpec {
    pub fn new(power_w: f64, area_mm2: f64, view_factor: f64, reference_temperature_k: f64) -> Result<Self> {
        if !(power_w > 0.0 && power_w.is_finite()) || !(area_mm2 > 0.0 && area_mm2.is_finite()) {
            return Err(Error::invalid("emitter power and area must be positive"));
        }
        if !(view_factor > 0.0 && view_factor <= 1.0) {
            return Err(Error::invalid(format!("view factor {view_factor} outside (0, 1]")));
        }
        if !(reference_temperature_k > 0.0 && reference_temperature_k.is_finite()) {
            return Err(Error::invalid("reference temperature must be positive"));
        }
        Ok(EmitterSpec {
            power_w,
            area_mm2,
            view_factor,
            reference_temperature_k,
        })
    }
}

/// Photopic sensitivity `V(λ)`, linearly interpolated and zero outside the
/// tabulated range.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminosityCurve {
    wavelengths_nm: Vec<f64>,
    values: Vec<f64>,
}

impl LuminosityCurve {
    pub fn new(wavelengths_nm: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.len() != values.len() || wavelengths_nm.len() < 2 {
            return Err(Error::invalid(
                "luminosity curve needs at least two (wavelength, V) pairs",
            ));
        }
        if wavelengths_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("luminosity wavelengths must be strictly increasing"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("luminosity value {v} outside [0, 1]")));
        }
        Ok(LuminosityCurve { wavelengths_nm, values })
    }

    /// Reads a `wavelength_nm,V` CSV.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if headers.len() != 2 || headers.get(0) != Some("wavelength_nm") || headers.get(1) != Some("V") {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header `wavelength_nm,V`".into(),
            });
        }
        let (mut wl, mut v) = (Vec::new(), Vec::new());
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let parse = |j: usize| -> Result<f64> {
                record
                    .get(j)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        line: i as u64 + 2,
                        message: format!("bad number in column {}", j + 1),
                    })
            };
            wl.push(parse(0)?);
            v.push(parse(1)?);
        }
        Self::new(wl, v).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.wavelengths_nm[0], *self.wavelengths_nm.last().unwrap())
    }

    pub fn value_at(&self, wavelength_nm: f64) -> f64 {
        let (lo, hi) = self.support();
        if wavelength_nm < lo || wavelength_nm > hi {
            return 0.0;
        }
        let j = self.wavelengths_nm.partition_point(|&w| w <= wavelength_nm);
        if j >= self.wavelengths_nm.len() {
            return *self.values.last().unwrap();
        }
        let (w0, w1) = (self.wavelengths_nm[j - 1], self.wavelengths_nm[j]);
        let t = (wavelength_nm - w0) / (w1 - w0);
        self.values[j - 1] + t * (self.values[j] - self.values[j - 1])
    }

    pub fn peak_wavelength_nm(&self) -> f64 {
        let i = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.wavelengths_nm[i]
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Hemispherical average `2 ∫₀^{π/2} cos δ sin δ g(δ) dδ` by Gauss-Legendre
/// quadrature with `nodes` points.
pub fn angle_average(nodes: usize, mut g: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let (x, w) = gauss_legendre(nodes);
    let half = std::f64::consts::FRAC_PI_4;
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let delta = half * (xi + 1.0);
        total += wi * half * delta.cos() * delta.sin() * g(delta)?;
    }
    Ok(2.0 * total)
}

pub fn effective_emissivity(reflectance: f64, view_factor: f64) -> f64 {
    1.0 - view_factor * view_factor * reflectance
}

/// Planck spectral radiance in SI units (W sr⁻¹ m⁻³) at `wavelength_nm`.
pub fn blackbody_intensity(wavelength_nm: f64, temperature_k: f64) -> f64 {
    if !(temperature_k > 0.0) {
        return 0.0;
    }
    let lambda = wavelength_nm * 1e-9;
    let x = PLANCK * LIGHT_SPEED / (lambda * BOLTZMANN * temperature_k);
    let prefactor = 2.0 * PLANCK * LIGHT_SPEED * LIGHT_SPEED / lambda.powi(5);
    if x > 700.0 {
        prefactor * (-x).exp()
    } else {
        prefactor / x.exp_m1()
    }
}

/// Uniform wavelength grid for the spectral integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBand {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub step_nm: f64,
}

impl Default for SpectralBand {
    fn default() -> Self {
        SpectralBand {
            start_nm: 300.0,
            stop_nm: 5000.0,
            step_nm: 1.0,
        }
    }
}

impl SpectralBand {
    pub fn wavelengths(&self) -> Result<Vec<f64>> {
        crate::optics::wavelength_grid(self.start_nm, self.stop_nm, self.step_nm)
    }
}

/// Trapezoid rule on a uniform grid.
fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Hemispherically averaged reflectance `2 ∫ cos δ sin δ R dδ` of a
/// structure at each wavelength of a band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedReflectance {
    pub band: SpectralBand,
    pub wavelengths_nm: Vec<f64>,
    pub reflectance: Vec<f64>,
}

impl AveragedReflectance {
    pub fn compute<S: StackSource + Sync + ?Sized>(
        source: &S,
        band: SpectralBand,
        angular_nodes: usize,
    ) -> Result<Self> {
        let wavelengths = band.wavelengths()?;
        let reflectance = wavelengths
            .par_iter()
            .map(|&wl| angle_averaged_reflectance(source, wl, angular_nodes))
            .collect::<Result<Vec<_>>>()?;
        Ok(AveragedReflectance {
            band,
            wavelengths_nm: wavelengths,
            reflectance,
        })
    }

    pub fn for_structure(
        structure: &Structure,
        library: &MaterialLibrary,
        environment: &Environment,
        band: SpectralBand,
        angular_nodes: usize,
    ) -> Result<Self> {
        let resolved = ResolvedStructure::new(structure, library, environment)?;
        let out = Self::compute(&resolved, band, angular_nodes)?;
        for w in resolved.warnings.take() {
            log::debug!("{w}");
        }
        Ok(out)
    }

    /// A perfect absorber-emitter (`R ≡ 0`) on `band`.
    pub fn black(band: SpectralBand) -> Result<Self> {
        let wavelengths = band.wavelengths()?;
        let n = wavelengths.len();
        Ok(AveragedReflectance {
            band,
            wavelengths_nm: wavelengths,
            reflectance: vec![0.0; n],
        })
    }

    /// Angle-averaged emissivity `1 - f² R_avg(λ)`.
    pub fn emissivity(&self, view_factor: f64) -> Vec<f64> {
        self.reflectance
            .iter()
            .map(|&r| effective_emissivity(r, view_factor))
            .collect()
    }
}

pub fn angle_averaged_reflectance<S: StackSource + ?Sized>(
    source: &S,
    wavelength_nm: f64,
    nodes: usize,
) -> Result<f64> {
    let stack = source.stack_at(wavelength_nm)?;
    stack.validate()?;
    angle_average(nodes, |delta| {
        Ok(stack_rt(&stack, wavelength_nm, delta, Polarization::Unpolarized).r)
    })
}

pub fn angle_averaged_emissivity<S: StackSource + ?Sized>(
    source: &S,
    wavelength_nm: f64,
    view_factor: f64,
    nodes: usize,
) -> Result<f64> {
    Ok(effective_emissivity(
        angle_averaged_reflectance(source, wavelength_nm, nodes)?,
        view_factor,
    ))
}

/// Power balance `P = κ · Area · ∫ I(λ, t) ε(λ) dλ` with `κ` fixed by a
/// reference emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub band: SpectralBand,
    /// Unit factor (1/sr-equivalent) applied to the radiance integral.
    pub kappa: f64,
}

pub const TEMPERATURE_BRACKET_K: (f64, f64) = (500.0, 6000.0);

impl PowerModel {
    /// Chooses `κ` so that a black emitter with `reference`'s power and area
    /// runs at `reference.reference_temperature_k`.
    pub fn calibrate(reference: &EmitterSpec, band: SpectralBand) -> Result<Self> {
        let wl = band.wavelengths()?;
        let radiance = radiance_integral(&wl, None, reference.reference_temperature_k, band.step_nm);
        let area_m2 = reference.area_mm2 * 1e-6;
        Ok(PowerModel {
            band,
            kappa: reference.power_w / (area_m2 * radiance),
        })
    }

    pub fn emitted_power(&self, wavelengths_nm: &[f64], emissivity: &[f64], temperature_k: f64, area_mm2: f64) -> f64 {
        self.kappa
            * area_mm2
            * 1e-6
            * radiance_integral(wavelengths_nm, Some(emissivity), temperature_k, self.band.step_nm)
    }

    /// Temperature at which the emitter dissipates `emitter.power_w`, by
    /// bisection on [`TEMPERATURE_BRACKET_K`].
    pub fn solve_temperature(&self, wavelengths_nm: &[f64], emissivity: &[f64], emitter: &EmitterSpec) -> Result<f64> {
        if wavelengths_nm.len() != emissivity.len() {
            return Err(Error::Dimension("emissivity and wavelength grids differ".into()));
        }
        let target = emitter.power_w;
        let power = |t: f64| self.emitted_power(wavelengths_nm, emissivity, t, emitter.area_mm2);
        let (mut lo, mut hi) = TEMPERATURE_BRACKET_K;
        let (p_lo, p_hi) = (power(lo), power(hi));
        if !(p_lo <= target && target <= p_hi) {
            return Err(Error::NoBracket(format!(
                "emitted power spans [{p_lo:.4e}, {p_hi:.4e}] W over [{lo}, {hi}] K, target {target} W"
            )));
        }
        while hi - lo > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            let p = power(mid);
            if p == target {
                return Ok(mid);
            }
            if p < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn radiance_integral(wavelengths_nm: &[f64], emissivity: Option<&[f64]>, temperature_k: f64, step_nm: f64) -> f64 {
    let values: Vec<f64> = wavelengths_nm
        .iter()
        .enumerate()
        .map(|(i, &wl)| blackbody_intensity(wl, temperature_k) * emissivity.map_or(1.0, |e| e[i]))
        .collect();
    trapezoid(&values, step_nm * 1e-9)
}

/// `χ = ∫ ε I(t) V dλ / ∫ I(t₀) V dλ` on the band grid.
pub fn enhancement_factor(
    wavelengths_nm: &[f64],
    emissivity: &[f64],
    temperature_k: f64,
    reference_temperature_k: f64,
    luminosity: &LuminosityCurve,
    step_nm: f64,
) -> Result<f64> {
    if wavelengths_nm.len() != emissivity.len() {
        return Err(Error::Dimension("emissivity and wavelength grids differ".into()));
    }
    let v: Vec<f64> = wavelengths_nm.iter().map(|&wl| luminosity.value_at(wl)).collect();
    let num: Vec<f64> = wavelengths_nm
        .iter()
        .enumerate()
        .map(|(i, &wl)| emissivity[i] * blackbody_intensity(wl, temperature_k) * v[i])
        .collect();
    let den: Vec<f64> = wavelengths_nm
        .iter()
        .enumerate()
        .map(|(i, &wl)| blackbody_intensity(wl, reference_temperature_k) * v[i])
        .collect();
    let d = trapezoid(&den, step_nm);
    if !(d > 0.0) {
        return Err(Error::invalid("luminosity curve does not overlap the integration band"));
    }
    Ok(trapezoid(&num, step_nm) / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotometryReport {
    #[serde(rename = "t_solved_K")]
    pub t_solved_k: f64,
    pub chi: f64,
    pub f: f64,
}

/// Solved temperature and enhancement factor for each view factor. The
/// power model is calibrated on `emitter` (its view factor is ignored).
pub fn photometry_report(
    averaged: &AveragedReflectance,
    emitter: &EmitterSpec,
    view_factors: &[f64],
    luminosity: &LuminosityCurve,
) -> Result<Vec<PhotometryReport>> {
    let model = PowerModel::calibrate(emitter, averaged.band)?;
    view_factors
        .iter()
        .map(|&f| {
            let spec = EmitterSpec::new(emitter.power_w, emitter.area_mm2, f, emitter.reference_temperature_k)?;
            let eps = averaged.emissivity(f);
            let t = model.solve_temperature(&averaged.wavelengths_nm, &eps, &spec)?;
            let chi = enhancement_factor(
                &averaged.wavelengths_nm,
                &eps,
                t,
                emitter.reference_temperature_k,
                luminosity,
                averaged.band.step_nm,
            )?;
            Ok(PhotometryReport { t_solved_k: t, chi, f })
        })
        .collect()
}
