//! Task configuration files (TOML).
//!
//! Relative paths inside a config are resolved against the directory that
//! contains the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finetune::FinetuneOptions;
use crate::io::read_text;
use crate::materials::MaterialLibrary;
use crate::optics::{wavelength_grid, Polarization, Quantity, SpectrumQuery};
use crate::photometry::EmitterSpec;
use crate::policy::DesignVocabulary;
use crate::ppo::TrainConfig;
use crate::reward::RewardSpec;
use crate::structure::{Environment, Medium};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub task: TaskSection,
    pub materials: MaterialsSection,
    pub vocabulary: VocabularySection,
    pub reward: RewardSection,
    #[serde(default)]
    pub environment: Environment,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub finetune: FinetuneSection,
    #[serde(default)]
    pub photometry: Option<PhotometrySection>,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory relative paths are resolved against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub name: String,
    /// Master seed; a random one is drawn (and recorded) when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSection {
    pub manifest: PathBuf,
    /// Materials offered to the generator, in vocabulary order. Defaults to
    /// every manifest entry (sorted by id).
    #[serde(default)]
    pub vocabulary: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularySection {
    #[serde(default)]
    pub thicknesses_nm: Option<Vec<f64>>,
    #[serde(default)]
    pub thickness_start_nm: Option<f64>,
    #[serde(default)]
    pub thickness_stop_nm: Option<f64>,
    #[serde(default)]
    pub thickness_step_nm: Option<f64>,
}

/// Target value over a wavelength band (inclusive ends).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetBand {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub quantity: Quantity,
    pub wavelength_start_nm: f64,
    pub wavelength_stop_nm: f64,
    pub wavelength_step_nm: f64,
    #[serde(default = "default_angles")]
    pub angles_deg: Vec<f64>,
    #[serde(default = "default_polarization")]
    pub polarization: Polarization,
    /// Target outside every band.
    pub target: f64,
    #[serde(default)]
    pub bands: Vec<TargetBand>,
}

fn default_angles() -> Vec<f64> {
    vec![0.0]
}

fn default_polarization() -> Polarization {
    Polarization::Unpolarized
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub lower_nm: f64,
    pub upper_nm: f64,
    pub memory: usize,
    pub pgtol: f64,
    pub max_iterations: usize,
    pub fd_step_nm: f64,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let o = FinetuneOptions::default();
        FinetuneSection {
            lower_nm: 15.0,
            upper_nm: 200.0,
            memory: o.memory,
            pgtol: o.pgtol,
            max_iterations: o.max_iterations,
            fd_step_nm: o.fd_step_nm,
        }
    }
}

impl FinetuneSection {
    pub fn options(&self) -> FinetuneOptions {
        FinetuneOptions {
            memory: self.memory,
            pgtol: self.pgtol,
            max_iterations: self.max_iterations,
            fd_step_nm: self.fd_step_nm,
            ..FinetuneOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotometrySection {
    pub luminosity: PathBuf,
    pub power_w: f64,
    pub area_mm2: f64,
    pub reference_temperature_k: f64,
    #[serde(default = "default_view_factors")]
    pub view_factors: Vec<f64>,
}

fn default_view_factors() -> Vec<f64> {
    vec![1.0]
}

impl PhotometrySection {
    pub fn emitter(&self, view_factor: f64) -> Result<EmitterSpec> {
        EmitterSpec::new(self.power_w, self.area_mm2, view_factor, self.reference_temperature_k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Epochs between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs"),
            checkpoint_every: 100,
        }
    }
}

impl TaskConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: TaskConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: base_dir.join("<config>"),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1) as u64),
            message: e.message().to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    /// Serialized form with the seed filled in, for run directories.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.materials.manifest)
    }

    /// Loads the manifest (restricted to the vocabulary when one is given).
    pub fn load_library(&self) -> Result<MaterialLibrary> {
        let manifest = self.manifest_path();
        let mut ids = self.materials.vocabulary.clone().unwrap_or_default();
        for medium in [&self.environment.ambient, &self.environment.substrate] {
            if let Medium::Material(id) = medium {
                ids.push(id.clone());
            }
        }
        if self.materials.vocabulary.is_none() {
            return MaterialLibrary::load(&manifest);
        }
        ids.sort();
        ids.dedup();
        MaterialLibrary::load_subset(&manifest, &ids)
    }

    /// Loads every manifest entry regardless of the vocabulary; structures
    /// evaluated outside training may use any of them.
    pub fn load_full_library(&self) -> Result<MaterialLibrary> {
        MaterialLibrary::load(&self.manifest_path())
    }

    pub fn vocabulary(&self, library: &MaterialLibrary) -> Result<DesignVocabulary> {
        let materials = match &self.materials.vocabulary {
            Some(v) => v.clone(),
            None => library.ids().map(str::to_string).collect(),
        };
        for m in &materials {
            library.table(m)?;
        }
        let v = &self.vocabulary;
        let thicknesses = match (
            &v.thicknesses_nm,
            v.thickness_start_nm,
            v.thickness_stop_nm,
            v.thickness_step_nm,
        ) {
            (Some(list), None, None, None) => list.clone(),
            (None, Some(a), Some(b), Some(s)) => {
                if !(s > 0.0 && b >= a) {
                    return Err(Error::invalid(format!("bad thickness range [{a}, {b}] step {s}")));
                }
                DesignVocabulary::thickness_range(a, b, s)
            }
            _ => {
                return Err(Error::invalid(
                    "vocabulary needs either thicknesses_nm or thickness_start_nm/stop_nm/step_nm",
                ))
            }
        };
        DesignVocabulary::new(materials, thicknesses)
    }

    pub fn reward_spec(&self) -> Result<RewardSpec> {
        let r = &self.reward;
        let wavelengths = wavelength_grid(r.wavelength_start_nm, r.wavelength_stop_nm, r.wavelength_step_nm)?;
        let grid = SpectrumQuery {
            wavelengths_nm: wavelengths,
            angles_rad: r.angles_deg.iter().map(|d| d.to_radians()).collect(),
            polarization: r.polarization,
        };
        let bands = r.bands.clone();
        let default = r.target;
        RewardSpec::from_fn(grid, r.quantity, self.environment.clone(), move |wl, _| {
            bands
                .iter()
                .find(|b| wl >= b.start_nm && wl <= b.stop_nm)
                .map_or(default, |b| b.value)
        })
    }

    /// Training parameters with the seed applied.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    /// Checks every cross-reference and loads nothing permanently.
    pub fn validate(&self) -> Result<()> {
        let library = self.load_library()?;
        self.vocabulary(&library)?;
        self.reward_spec()?;
        self.train.validate()?;
        let f = &self.finetune;
        if !(f.lower_nm > 0.0 && f.upper_nm > f.lower_nm) {
            return Err(Error::invalid(format!(
                "finetune bounds [{}, {}] must satisfy 0 < lower < upper",
                f.lower_nm, f.upper_nm
            )));
        }
        if let Some(p) = &self.photometry {
            for &vf in &p.view_factors {
                p.emitter(vf)?;
            }
            let lum = self.resolve(&p.luminosity);
            if !lum.is_file() {
                return Err(Error::invalid(format!("luminosity file {} not found", lum.display())));
            }
        }
        Ok(())
    }
}
