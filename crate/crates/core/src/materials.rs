//! Tabulated optical constants.
//!
//! One CSV per material with header `wavelength_nm,n,k`. A library is loaded
//! either from a directory (file stem = material id) or from a TOML manifest:
//!
//! ```toml
//! [materials]
//! MgF2 = "MgF2_Dodge-o.csv"   # relative to the manifest's directory
//! ```
//!
//! Lookups interpolate `n` and `k` linearly in wavelength and clamp to the
//! nearest endpoint outside the tabulated span, reporting the clamp.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::optics::ComplexIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub wavelength_nm: f64,
    pub n: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    name: String,
    samples: Vec<Sample>,
}

impl MaterialTable {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let name = name.into();
        if samples.len() < 2 {
            return Err(Error::invalid(format!("material {name}: need at least 2 samples")));
        }
        for (i, s) in samples.iter().enumerate() {
            check_sample(s).map_err(|m| Error::invalid(format!("material {name}, sample {i}: {m}")))?;
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].wavelength_nm <= w[0].wavelength_nm {
                return Err(Error::invalid(format!(
                    "material {name}: wavelengths not strictly increasing at sample {}",
                    i + 1
                )));
            }
        }
        Ok(MaterialTable { name, samples })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Tabulated wavelength span `(first, last)` in nm.
    pub fn coverage(&self) -> (f64, f64) {
        (
            self.samples[0].wavelength_nm,
            self.samples[self.samples.len() - 1].wavelength_nm,
        )
    }

    pub fn index_at(&self, wavelength_nm: f64) -> Lookup {
        let first = &self.samples[0];
        let last = &self.samples[self.samples.len() - 1];
        let clamp = |s: &Sample| Lookup {
            index: ComplexIndex { n: s.n, k: s.k },
            out_of_range: Some(RangeWarning {
                material: self.name.clone(),
                requested_nm: wavelength_nm,
                used_nm: s.wavelength_nm,
            }),
        };
        if wavelength_nm < first.wavelength_nm {
            return clamp(first);
        }
        if wavelength_nm > last.wavelength_nm {
            return clamp(last);
        }
        // First sample with wavelength >= query.
        let hi = self.samples.partition_point(|s| s.wavelength_nm < wavelength_nm);
        let upper = &self.samples[hi];
        if upper.wavelength_nm == wavelength_nm || hi == 0 {
            return Lookup::exact(upper);
        }
        let lower = &self.samples[hi - 1];
        let frac = (wavelength_nm - lower.wavelength_nm) / (upper.wavelength_nm - lower.wavelength_nm);
        Lookup {
            index: ComplexIndex {
                n: lower.n + frac * (upper.n - lower.n),
                k: (lower.k + frac * (upper.k - lower.k)).max(0.0),
            },
            out_of_range: None,
        }
    }

    pub fn read_csv(name: impl Into<String>, path: &Path) -> Result<Self> {
        let name = name.into();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let expected = ["wavelength_nm", "n", "k"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!(
                    "expected header `wavelength_nm,n,k`, found `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let mut samples = Vec::new();
        let mut previous: Option<f64> = None;
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            if record.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", record.len())));
            }
            let mut vals = [0.0; 3];
            for (slot, field) in vals.iter_mut().zip(record.iter()) {
                *slot = field
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("`{field}` is not a number")))?;
            }
            let sample = Sample {
                wavelength_nm: vals[0],
                n: vals[1],
                k: vals[2],
            };
            check_sample(&sample).map_err(parse_err)?;
            if let Some(prev) = previous {
                if sample.wavelength_nm <= prev {
                    return Err(parse_err(format!(
                        "wavelength {} not greater than previous {prev}",
                        sample.wavelength_nm
                    )));
                }
            }
            previous = Some(sample.wavelength_nm);
            samples.push(sample);
        }
        if samples.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("need at least 2 samples, found {}", samples.len()),
            });
        }
        Ok(MaterialTable { name, samples })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("wavelength_nm,n,k\n");
        for s in &self.samples {
            // `Display` for f64 prints the shortest string that parses back to the same bits.
            out.push_str(&format!("{},{},{}\n", s.wavelength_nm, s.n, s.k));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn check_sample(s: &Sample) -> std::result::Result<(), String> {
    if !(s.wavelength_nm.is_finite() && s.n.is_finite() && s.k.is_finite()) {
        return Err("non-finite value".into());
    }
    if s.wavelength_nm <= 0.0 {
        return Err(format!("wavelength {} must be > 0", s.wavelength_nm));
    }
    if s.n <= 0.0 {
        return Err(format!("n = {} must be > 0", s.n));
    }
    if s.k < 0.0 {
        return Err(format!("k = {} must be >= 0", s.k));
    }
    Ok(())
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

/// Emitted when a lookup falls outside a table's span and was clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeWarning {
    pub material: String,
    pub requested_nm: f64,
    pub used_nm: f64,
}

impl fmt::Display for RangeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} nm outside tabulated range, using value at {} nm",
            self.material, self.requested_nm, self.used_nm
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    pub index: ComplexIndex,
    pub out_of_range: Option<RangeWarning>,
}

impl Lookup {
    fn exact(s: &Sample) -> Self {
        Lookup {
            index: ComplexIndex { n: s.n, k: s.k },
            out_of_range: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    materials: BTreeMap<String, PathBuf>,
}

/// Immutable set of material tables keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaterialLibrary {
    tables: BTreeMap<String, MaterialTable>,
}

impl MaterialLibrary {
    pub fn from_tables(tables: impl IntoIterator<Item = MaterialTable>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tables {
            let name = t.name.clone();
            if map.insert(name.clone(), t).is_some() {
                return Err(Error::invalid(format!("duplicate material id `{name}`")));
            }
        }
        Ok(MaterialLibrary { tables: map })
    }

    /// Loads every material listed in a manifest, or every `*.csv` in a directory.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Self::load_directory(path)
        } else {
            Self::load_manifest(path, None)
        }
    }

    /// Loads only `ids` from a manifest; fails if any is missing.
    pub fn load_subset(manifest: &Path, ids: &[String]) -> Result<Self> {
        Self::load_manifest(manifest, Some(ids))
    }

    fn load_manifest(path: &Path, only: Option<&[String]>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count() as u64),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(ids) = only {
            for id in ids {
                if !manifest.materials.contains_key(id) {
                    return Err(Error::invalid(format!(
                        "material `{id}` is not listed in manifest {}",
                        path.display()
                    )));
                }
            }
        }
        let mut tables = Vec::new();
        for (id, file) in &manifest.materials {
            if only.is_some_and(|ids| !ids.contains(id)) {
                continue;
            }
            let full = if file.is_absolute() {
                file.clone()
            } else {
                base.join(file)
            };
            tables.push(MaterialTable::read_csv(id.clone(), &full)?);
        }
        Self::from_tables(tables)
    }

    fn load_directory(dir: &Path) -> Result<Self> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let tables = files
            .iter()
            .map(|f| {
                let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                MaterialTable::read_csv(id, f)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_tables(tables)
    }

    /// Writes one CSV per material plus a `materials.toml` manifest.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::from("[materials]\n");
        for (id, table) in &self.tables {
            let file = format!("{id}.csv");
            table.write_csv(&dir.join(&file))?;
            manifest.push_str(&format!("{} = {}\n", toml_key(id), toml_string(&file)));
        }
        let path = dir.join("materials.toml");
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.tables.contains_key(id)
    }

    pub fn table(&self, id: &str) -> Result<&MaterialTable> {
        self.tables
            .get(id)
            .ok_or_else(|| Error::UnknownMaterial(id.to_string()))
    }

    /// Per-material tabulated span.
    pub fn coverage(&self) -> BTreeMap<&str, (f64, f64)> {
        self.tables.iter().map(|(k, v)| (k.as_str(), v.coverage())).collect()
    }

    pub fn index_at(&self, id: &str, wavelength_nm: f64) -> Result<Lookup> {
        if !(wavelength_nm > 0.0) {
            return Err(Error::invalid(format!("wavelength {wavelength_nm} nm must be > 0")));
        }
        Ok(self.table(id)?.index_at(wavelength_nm))
    }
}

fn toml_key(id: &str) -> String {
    if id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        id.to_string()
    } else {
        toml_string(id)
    }
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> MaterialTable {
        MaterialTable::new(
            "X",
            vec![
                Sample {
                    wavelength_nm: 400.0,
                    n: 2.0,
                    k: 0.1,
                },
                Sample {
                    wavelength_nm: 600.0,
                    n: 3.0,
                    k: 0.3,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn midpoint_interpolation() {
        let l = two_point().index_at(500.0);
        assert_eq!(l.index.n, 2.5);
        assert!((l.index.k - 0.2).abs() < 1e-15);
        assert!(l.out_of_range.is_none());
    }

    #[test]
    fn exact_sample_is_returned_verbatim() {
        let t = two_point();
        assert_eq!(t.index_at(400.0).index, ComplexIndex { n: 2.0, k: 0.1 });
        assert_eq!(t.index_at(600.0).index, ComplexIndex { n: 3.0, k: 0.3 });
    }

    #[test]
    fn clamps_below_and_above_with_warning() {
        let t = two_point();
        let below = t.index_at(300.0);
        assert_eq!(below.index, ComplexIndex { n: 2.0, k: 0.1 });
        let w = below.out_of_range.unwrap();
        assert_eq!((w.requested_nm, w.used_nm), (300.0, 400.0));
        let above = t.index_at(900.0);
        assert_eq!(above.index, ComplexIndex { n: 3.0, k: 0.3 });
        assert_eq!(above.out_of_range.unwrap().used_nm, 600.0);
    }

    #[test]
    fn table_validation() {
        let s = |w, n, k| Sample { wavelength_nm: w, n, k };
        assert!(MaterialTable::new("a", vec![s(400.0, 1.0, 0.0)]).is_err());
        assert!(MaterialTable::new("a", vec![s(400.0, 1.0, 0.0), s(400.0, 1.0, 0.0)]).is_err());
        assert!(MaterialTable::new("a", vec![s(400.0, 1.0, -0.1), s(500.0, 1.0, 0.0)]).is_err());
        assert!(MaterialTable::new("a", vec![s(400.0, 0.0, 0.0), s(500.0, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn unknown_material() {
        let lib = MaterialLibrary::from_tables([two_point()]).unwrap();
        assert!(matches!(lib.index_at("Y", 500.0), Err(Error::UnknownMaterial(_))));
        assert!(MaterialLibrary::from_tables([two_point(), two_point()]).is_err());
    }
}
