//! JSON and CSV input formats.
//!
//! Densities:
//!
//! ```json
//! {"support": [a, b], "values": [h0, h1, ...]}
//! {"model": {"K": 0, "N": 3, "support": [a, b], "u0": 1, "slope0": 0}, "grid": 1025}
//! ```
//!
//! Measures (relative to a reference density):
//!
//! ```json
//! {"blocks": [{"lo": 0, "hi": 0.5, "mass": 1}]}
//! {"cells": [{"lo": 0, "hi": 0.5, "density": 2}]}
//! {"uniform": [lo, hi]}
//! {"density": <density>}
//! ```
//!
//! Errors name the offending field.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::coefficients::CurvatureParams;
use crate::density::{model_density, sample_model, GridDensity};
use crate::error::{Error, Result};
use crate::localization::PlanarInstance;
use crate::transport::{Block, Cell, Measure1D};

/// Grid size used when sampling a model density without an explicit `grid`.
pub const DEFAULT_MODEL_GRID: usize = 1025;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub support: [f64; 2],
    pub u0: f64,
    pub slope0: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityFile {
    pub support: Option<[f64; 2]>,
    pub values: Option<Vec<f64>>,
    pub model: Option<ModelSpec>,
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub blocks: Option<Vec<Block>>,
    pub cells: Option<Vec<Cell>>,
    pub uniform: Option<[f64; 2]>,
    pub density: Option<DensityFile>,
}

fn input_err(source: &str, field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Input {
        source_name: source.to_string(),
        field: field.into(),
        reason: reason.into(),
    }
}

fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { "<root>".to_string() } else { field };
        input_err(source, field, e.into_inner().to_string())
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| input_err(&path.display().to_string(), "<file>", e.to_string()))
}

impl DensityFile {
    /// Resolves the file to a sampled density; `source` labels error messages
    /// and `prefix` is prepended to field paths.
    pub fn into_density(self, source: &str, prefix: &str) -> Result<GridDensity> {
        let field = |name: &str| format!("{prefix}{name}");
        match (self.support, self.values, self.model) {
            (Some([a, b]), Some(values), None) => {
                if self.grid.is_some() {
                    return Err(input_err(source, field("grid"), "only allowed together with `model`"));
                }
                if !(a.is_finite() && b.is_finite() && b > a) {
                    return Err(input_err(source, field("support"), format!("[{a}, {b}] is not a proper interval")));
                }
                if values.len() < 2 {
                    return Err(input_err(source, field("values"), "need at least two values"));
                }
                if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
                    return Err(input_err(source, field(&format!("values[{i}]")), format!("{v} is not finite and non-negative")));
                }
                GridDensity::new(a, b, values)
            }
            (None, None, Some(m)) => {
                let grid = self.grid.unwrap_or(DEFAULT_MODEL_GRID);
                if grid < 3 {
                    return Err(input_err(source, field("grid"), "need at least three grid points"));
                }
                let params = CurvatureParams::new(m.k, m.n).map_err(|e| input_err(source, field("model"), e.to_string()))?;
                let model = model_density(params, (m.support[0], m.support[1]), m.u0, m.slope0)
                    .map_err(|e| input_err(source, field("model"), e.to_string()))?;
                sample_model(&model, grid)
            }
            (None, None, None) => Err(input_err(source, field("<root>"), "expected `support` + `values` or `model`")),
            (_, _, Some(_)) => Err(input_err(source, field("model"), "cannot be combined with `support`/`values`")),
            (None, Some(_), None) => Err(input_err(source, field("support"), "missing (required with `values`)")),
            (Some(_), None, None) => Err(input_err(source, field("values"), "missing (required with `support`)")),
        }
    }
}

impl MeasureFile {
    pub fn into_measure(self, reference: GridDensity, source: &str) -> Result<Measure1D> {
        let given = [self.blocks.is_some(), self.cells.is_some(), self.uniform.is_some(), self.density.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(input_err(source, "<root>", "expected exactly one of `blocks`, `cells`, `uniform`, `density`"));
        }
        let wrap = |field: &str, e: Error| input_err(source, field, e.to_string());
        if let Some(blocks) = self.blocks {
            Measure1D::from_blocks(reference, &blocks).map_err(|e| wrap("blocks", e))
        } else if let Some(cells) = self.cells {
            Measure1D::from_cells(reference, cells).map_err(|e| wrap("cells", e))
        } else if let Some([lo, hi]) = self.uniform {
            Measure1D::uniform(reference, lo, hi).map_err(|e| wrap("uniform", e))
        } else {
            let rel = self.density.expect("checked above").into_density(source, "density.")?;
            Measure1D::new(reference, rel).map_err(|e| wrap("density", e))
        }
    }
}

pub fn parse_density(text: &str, source: &str) -> Result<GridDensity> {
    parse_json::<DensityFile>(text, source)?.into_density(source, "")
}

pub fn read_density(path: &Path) -> Result<GridDensity> {
    parse_density(&read(path)?, &path.display().to_string())
}

pub fn parse_measure(text: &str, reference: GridDensity, source: &str) -> Result<Measure1D> {
    parse_json::<MeasureFile>(text, source)?.into_measure(reference, source)
}

pub fn read_measure(path: &Path, reference: GridDensity) -> Result<Measure1D> {
    parse_measure(&read(path)?, reference, &path.display().to_string())
}

/// `ny` lines of `nx` comma-separated values of `g`; the first line is the
/// bottom row (`y` near 0). Blank lines and lines starting with `#` are skipped.
pub fn parse_grid_csv(text: &str, nx: usize, ny: usize, width: f64, height: f64, source: &str) -> Result<PlanarInstance> {
    let mut g = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<&str> = line.split(',').map(str::trim).collect();
        if vals.len() != nx {
            return Err(input_err(source, format!("line {}", lineno + 1), format!("expected {nx} values, found {}", vals.len())));
        }
        for (col, v) in vals.iter().enumerate() {
            let x: f64 = v
                .parse()
                .map_err(|_| input_err(source, format!("line {}, column {}", lineno + 1, col + 1), format!("`{v}` is not a number")))?;
            g.push(x);
        }
        rows += 1;
    }
    if rows != ny {
        return Err(input_err(source, "<rows>", format!("expected {ny} rows, found {rows}")));
    }
    PlanarInstance::new(nx, ny, width, height, g).map_err(|e| input_err(source, "g", e.to_string()))
}

pub fn read_grid_csv(path: &Path, nx: usize, ny: usize, width: f64, height: f64) -> Result<PlanarInstance> {
    parse_grid_csv(&read(path)?, nx, ny, width, height, &path.display().to_string())
}
