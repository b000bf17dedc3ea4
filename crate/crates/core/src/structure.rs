//! Layer sequences as design artifacts and their resolution into stacks.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{MaterialLibrary, RangeWarning};
use crate::optics::{ComplexIndex, Layer, Stack, StackSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureLayer {
    pub material: String,
    pub thickness_nm: f64,
}

/// Ordered layers from the incidence side. Serializes as a JSON array of
/// `{"material": .., "thickness_nm": ..}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Structure {
    pub layers: Vec<StructureLayer>,
}

impl Structure {
    pub fn new(layers: Vec<StructureLayer>) -> Self {
        Structure { layers }
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        Structure {
            layers: pairs
                .into_iter()
                .map(|(m, d)| StructureLayer {
                    material: m.into(),
                    thickness_nm: d,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn thicknesses(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.thickness_nm).collect()
    }

    pub fn with_thicknesses(&self, thicknesses: &[f64]) -> Structure {
        assert_eq!(thicknesses.len(), self.layers.len());
        Structure {
            layers: self
                .layers
                .iter()
                .zip(thicknesses)
                .map(|(l, &d)| StructureLayer {
                    material: l.material.clone(),
                    thickness_nm: d,
                })
                .collect(),
        }
    }

    /// True when no two adjacent layers share a material.
    pub fn has_no_adjacent_repeats(&self) -> bool {
        self.layers.windows(2).all(|w| w[0].material != w[1].material)
    }

    pub fn validate(&self, library: &MaterialLibrary) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if !library.contains(&l.material) {
                return Err(Error::UnknownMaterial(l.material.clone()));
            }
            if !(l.thickness_nm.is_finite() && l.thickness_nm > 0.0) {
                return Err(Error::invalid(format!(
                    "layer {i} ({}) has invalid thickness {}",
                    l.material, l.thickness_nm
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("structure serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {} nm)", l.material, l.thickness_nm)?;
        }
        write!(f, "}}")
    }
}

/// A semi-infinite medium: either a fixed index or a library material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Medium {
    Constant(ComplexIndex),
    Material(String),
}

impl Medium {
    pub fn air() -> Self {
        Medium::Constant(ComplexIndex::lossless(1.0))
    }

    pub fn glass() -> Self {
        Medium::Constant(ComplexIndex::lossless(1.5))
    }

    fn index_at(&self, library: &MaterialLibrary, wavelength_nm: f64, warnings: &WarningSink) -> Result<ComplexIndex> {
        match self {
            Medium::Constant(c) => Ok(*c),
            Medium::Material(id) => {
                let lookup = library.index_at(id, wavelength_nm)?;
                warnings.record(lookup.out_of_range);
                Ok(lookup.index)
            }
        }
    }
}

/// Ambient and substrate surrounding a structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Environment {
    pub ambient: Medium,
    pub substrate: Medium,
}

impl Default for Environment {
    fn default() -> Self {
        Environment {
            ambient: Medium::air(),
            substrate: Medium::glass(),
        }
    }
}

/// Collects clamp warnings, keeping the first one per material.
#[derive(Debug, Default)]
pub struct WarningSink {
    seen: Mutex<Vec<RangeWarning>>,
}

impl WarningSink {
    fn record(&self, warning: Option<RangeWarning>) {
        if let Some(w) = warning {
            let mut seen = self.seen.lock().unwrap();
            if !seen.iter().any(|s| s.material == w.material) {
                seen.push(w);
            }
        }
    }

    pub fn take(&self) -> Vec<RangeWarning> {
        std::mem::take(&mut *self.seen.lock().unwrap())
    }
}

/// A structure bound to a library and environment; resolves to a [`Stack`]
/// at each wavelength.
pub struct ResolvedStructure<'a> {
    pub structure: &'a Structure,
    pub library: &'a MaterialLibrary,
    pub environment: &'a Environment,
    pub warnings: WarningSink,
}

impl<'a> ResolvedStructure<'a> {
    pub fn new(structure: &'a Structure, library: &'a MaterialLibrary, environment: &'a Environment) -> Result<Self> {
        structure.validate(library)?;
        for medium in [&environment.ambient, &environment.substrate] {
            if let Medium::Material(id) = medium {
                library.table(id)?;
            }
        }
        Ok(ResolvedStructure {
            structure,
            library,
            environment,
            warnings: WarningSink::default(),
        })
    }
}

impl StackSource for ResolvedStructure<'_> {
    fn stack_at(&self, wavelength_nm: f64) -> Result<Stack> {
        let mut layers = Vec::with_capacity(self.structure.layers.len());
        for l in &self.structure.layers {
            let lookup = self.library.index_at(&l.material, wavelength_nm)?;
            self.warnings.record(lookup.out_of_range);
            layers.push(Layer {
                index: lookup.index,
                thickness_nm: l.thickness_nm,
            });
        }
        Ok(Stack {
            ambient: self
                .environment
                .ambient
                .index_at(self.library, wavelength_nm, &self.warnings)?,
            layers,
            substrate: self
                .environment
                .substrate
                .index_at(self.library, wavelength_nm, &self.warnings)?,
        })
    }
}
