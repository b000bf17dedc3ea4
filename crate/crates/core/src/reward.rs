//! Spectral targets and the terminal reward `G = 1 - mean |T^S - target|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::MaterialLibrary;
use crate::optics::{evaluate_stack, Quantity, SpectrumQuery, SpectrumResult};
use crate::structure::{Environment, ResolvedStructure, Structure};

/// Target values for one quantity over a wavelength x angle grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub grid: SpectrumQuery,
    pub quantity: Quantity,
    /// Row-major, wavelength-slow, matching [`SpectrumResult`] layout.
    pub target: Vec<f64>,
    pub environment: Environment,
}

impl RewardSpec {
    pub fn new(grid: SpectrumQuery, quantity: Quantity, target: Vec<f64>, environment: Environment) -> Result<Self> {
        let spec = RewardSpec {
            grid,
            quantity,
            target,
            environment,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Target `f(wavelength_nm, angle_rad)` sampled on `grid`.
    pub fn from_fn(
        grid: SpectrumQuery,
        quantity: Quantity,
        environment: Environment,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let target = grid
            .wavelengths_nm
            .iter()
            .flat_map(|&wl| grid.angles_rad.iter().map(move |&a| (wl, a)))
            .map(|(wl, a)| f(wl, a))
            .collect();
        Self::new(grid, quantity, target, environment)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let expected = self.grid.wavelengths_nm.len() * self.grid.angles_rad.len();
        if self.target.len() != expected {
            return Err(Error::Dimension(format!(
                "target has {} values for a grid of {expected} points",
                self.target.len()
            )));
        }
        if let Some(v) = self.target.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("target value {v} outside [0, 1]")));
        }
        Ok(())
    }

    /// `1 - mean |computed - target|` over the grid, clamped to [0, 1].
    pub fn score(&self, spectrum: &SpectrumResult) -> Result<f64> {
        let values = spectrum.values(self.quantity);
        if values.len() != self.target.len() {
            return Err(Error::Dimension(format!(
                "spectrum has {} points, target has {}",
                values.len(),
                self.target.len()
            )));
        }
        let mae = values.iter().zip(&self.target).map(|(v, t)| (v - t).abs()).sum::<f64>() / values.len() as f64;
        Ok((1.0 - mae).clamp(0.0, 1.0))
    }

    pub fn spectrum(&self, structure: &Structure, library: &MaterialLibrary) -> Result<SpectrumResult> {
        let resolved = ResolvedStructure::new(structure, library, &self.environment)?;
        evaluate_stack(&resolved, &self.grid)
    }
}

pub fn compute_reward(structure: &Structure, spec: &RewardSpec, library: &MaterialLibrary) -> Result<f64> {
    spec.score(&spec.spectrum(structure, library)?)
}
