//! Coherent transfer-matrix evaluation of planar multilayer stacks.
//!
//! Each layer contributes a 2x2 characteristic matrix built from its complex
//! refractive index `N = n + ik` (time convention `exp(-iωt)`), its thickness
//! and the tilted optical admittance for the requested polarization. The
//! transverse wavevector `n_ambient * sin(angle)` is conserved through the
//! stack; per-layer normal components are chosen on the branch that decays
//! (or propagates forward) into the stack.
//!
//! Reflectance and transmittance are power quantities. Transmittance is the
//! power flux entering the semi-infinite substrate. Absorptance is
//! `1 - R - T`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex refractive index `n + ik`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexIndex {
    pub n: f64,
    pub k: f64,
}

impl ComplexIndex {
    pub fn new(n: f64, k: f64) -> Result<Self> {
        let index = ComplexIndex { n, k };
        index.validate()?;
        Ok(index)
    }

    pub const fn lossless(n: f64) -> Self {
        ComplexIndex { n, k: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_finite() || !self.k.is_finite() {
            return Err(Error::NonFinite(format!("refractive index {} + {}i", self.n, self.k)));
        }
        if self.n <= 0.0 {
            return Err(Error::invalid(format!("refractive index n = {} must be > 0", self.n)));
        }
        if self.k < 0.0 {
            return Err(Error::invalid(format!(
                "extinction coefficient k = {} must be >= 0",
                self.k
            )));
        }
        Ok(())
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.n, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    S,
    P,
    /// Arithmetic mean of the s and p power quantities.
    Unpolarized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub index: ComplexIndex,
    pub thickness_nm: f64,
}

/// A layer stack between a lossless semi-infinite ambient and a
/// semi-infinite substrate. Layers are listed from the ambient side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub ambient: ComplexIndex,
    pub layers: Vec<Layer>,
    pub substrate: ComplexIndex,
}

impl Stack {
    pub fn validate(&self) -> Result<()> {
        self.ambient.validate()?;
        if self.ambient.k != 0.0 {
            return Err(Error::invalid(format!(
                "ambient medium must be lossless (k = {})",
                self.ambient.k
            )));
        }
        self.substrate.validate()?;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.index.validate()?;
            if !layer.thickness_nm.is_finite() {
                return Err(Error::NonFinite(format!("thickness of layer {i}")));
            }
            if layer.thickness_nm <= 0.0 {
                return Err(Error::invalid(format!(
                    "layer {i} thickness {} nm must be > 0",
                    layer.thickness_nm
                )));
            }
        }
        Ok(())
    }
}

/// Anything that can produce a [`Stack`] for a given vacuum wavelength.
/// Dispersive structures resolve their materials per wavelength.
pub trait StackSource {
    fn stack_at(&self, wavelength_nm: f64) -> Result<Stack>;
}

impl StackSource for Stack {
    fn stack_at(&self, _wavelength_nm: f64) -> Result<Stack> {
        Ok(self.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumQuery {
    pub wavelengths_nm: Vec<f64>,
    pub angles_rad: Vec<f64>,
    pub polarization: Polarization,
}

impl SpectrumQuery {
    pub fn normal_incidence(wavelengths_nm: Vec<f64>) -> Self {
        SpectrumQuery {
            wavelengths_nm,
            angles_rad: vec![0.0],
            polarization: Polarization::Unpolarized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelengths_nm.is_empty() || self.angles_rad.is_empty() {
            return Err(Error::invalid(
                "spectrum query needs at least one wavelength and one angle",
            ));
        }
        for w in self.wavelengths_nm.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "wavelengths must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        for &wl in &self.wavelengths_nm {
            if !wl.is_finite() || wl <= 0.0 {
                return Err(Error::invalid(format!("wavelength {wl} nm must be > 0")));
            }
        }
        for &a in &self.angles_rad {
            if !(0.0..std::f64::consts::FRAC_PI_2).contains(&a) {
                return Err(Error::invalid(format!("incidence angle {a} rad outside [0, pi/2)")));
            }
        }
        Ok(())
    }
}

/// Which power quantity a target or average refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    R,
    T,
    A,
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R" | "REFLECTANCE" => Ok(Quantity::R),
            "T" | "TRANSMITTANCE" => Ok(Quantity::T),
            "A" | "ABSORPTANCE" | "ABSORPTION" => Ok(Quantity::A),
            _ => Err(Error::invalid(format!("unknown quantity `{s}` (expected R, T or A)"))),
        }
    }
}

/// R, T and A sampled on a wavelength x angle grid, stored row-major with
/// wavelength as the slow index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub wavelengths_nm: Vec<f64>,
    pub angles_rad: Vec<f64>,
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    pub a: Vec<f64>,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn values(&self, quantity: Quantity) -> &[f64] {
        match quantity {
            Quantity::R => &self.r,
            Quantity::T => &self.t,
            Quantity::A => &self.a,
        }
    }

    pub fn at(&self, quantity: Quantity, wavelength_idx: usize, angle_idx: usize) -> f64 {
        self.values(quantity)[wavelength_idx * self.angles_rad.len() + angle_idx]
    }
}

/// Power reflectance and transmittance of one stack at one wavelength, angle
/// and (pure) polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCoefficients {
    pub r: f64,
    pub t: f64,
}

impl PowerCoefficients {
    pub fn absorptance(&self) -> f64 {
        (1.0 - self.r - self.t).max(0.0)
    }
}

/// Normal component `N cos(theta)` of the (normalized) wavevector in a medium,
/// on the forward/decaying branch.
fn normal_component(index: Complex64, transverse: f64) -> Complex64 {
    let q = (index * index - transverse * transverse).sqrt();
    if q.im < 0.0 || (q.im == 0.0 && q.re < 0.0) {
        -q
    } else {
        q
    }
}

/// Tilted admittance in units of the free-space admittance.
fn admittance(index: Complex64, q: Complex64, pure: Polarization) -> Complex64 {
    match pure {
        Polarization::S => q,
        Polarization::P => index * index / q,
        Polarization::Unpolarized => unreachable!("admittance needs a pure polarization"),
    }
}

/// Coherent R and T for a pure polarization.
pub fn coherent_rt(stack: &Stack, wavelength_nm: f64, angle_rad: f64, pure: Polarization) -> PowerCoefficients {
    let n0 = stack.ambient.to_complex();
    let transverse = stack.ambient.n * angle_rad.sin();
    let q0 = normal_component(n0, transverse);
    let eta0 = admittance(n0, q0, pure);

    let ns = stack.substrate.to_complex();
    let qs = normal_component(ns, transverse);
    let eta_s = admittance(ns, qs, pure);

    let k0 = 2.0 * std::f64::consts::PI / wavelength_nm;
    let i = Complex64::i();

    // [B, C]^T = prod(M_j) [1, eta_s]^T, accumulated from the substrate side.
    let mut b = Complex64::new(1.0, 0.0);
    let mut c = eta_s;
    for layer in stack.layers.iter().rev() {
        let nj = layer.index.to_complex();
        let qj = normal_component(nj, transverse);
        let eta = admittance(nj, qj, pure);
        let phase = k0 * layer.thickness_nm * qj;
        let (cos, sin) = (phase.cos(), phase.sin());
        let nb = cos * b - i * sin / eta * c;
        let nc = -i * eta * sin * b + cos * c;
        b = nb;
        c = nc;
    }

    let denom = eta0 * b + c;
    let r_amp = (eta0 * b - c) / denom;
    let r = r_amp.norm_sqr().clamp(0.0, 1.0);
    let t = (4.0 * eta0.re * eta_s.re / denom.norm_sqr()).clamp(0.0, 1.0);
    PowerCoefficients { r, t }
}

/// R and T for any polarization, averaging s and p powers when unpolarized.
pub fn stack_rt(stack: &Stack, wavelength_nm: f64, angle_rad: f64, polarization: Polarization) -> PowerCoefficients {
    match polarization {
        Polarization::Unpolarized => {
            let s = coherent_rt(stack, wavelength_nm, angle_rad, Polarization::S);
            let p = coherent_rt(stack, wavelength_nm, angle_rad, Polarization::P);
            PowerCoefficients {
                r: 0.5 * (s.r + p.r),
                t: 0.5 * (s.t + p.t),
            }
        }
        pure => coherent_rt(stack, wavelength_nm, angle_rad, pure),
    }
}

/// Evaluates R, T, A over the query grid.
pub fn evaluate_stack<S: StackSource + ?Sized>(source: &S, query: &SpectrumQuery) -> Result<SpectrumResult> {
    query.validate()?;
    let n = query.wavelengths_nm.len() * query.angles_rad.len();
    let mut result = SpectrumResult {
        wavelengths_nm: query.wavelengths_nm.clone(),
        angles_rad: query.angles_rad.clone(),
        r: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
    };
    for &wl in &query.wavelengths_nm {
        let stack = source.stack_at(wl)?;
        stack.validate()?;
        for &angle in &query.angles_rad {
            let rt = stack_rt(&stack, wl, angle, query.polarization);
            result.r.push(rt.r);
            result.t.push(rt.t);
            result.a.push(rt.absorptance());
        }
    }
    Ok(result)
}

/// Unweighted mean of one quantity over every grid point.
pub fn average_quantity(result: &SpectrumResult, quantity: Quantity) -> Result<f64> {
    let values = result.values(quantity);
    if values.is_empty() {
        return Err(Error::invalid("cannot average an empty spectrum"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Inclusive wavelength grid `start, start + step, ..., <= stop`.
pub fn wavelength_grid(start_nm: f64, stop_nm: f64, step_nm: f64) -> Result<Vec<f64>> {
    if !(step_nm > 0.0) || !(stop_nm >= start_nm) || start_nm <= 0.0 {
        return Err(Error::invalid(format!(
            "bad wavelength grid [{start_nm}, {stop_nm}] step {step_nm}"
        )));
    }
    let count = ((stop_nm - start_nm) / step_nm + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start_nm + i as f64 * step_nm).collect())
}
