//! Reference table of sub-Riemannian spaces satisfying `MCP(0, N)` and
//! `QCD(Q, 0, N)`, and the Poincaré, `L^p`-Poincaré and log-Sobolev constants
//! they inherit on sets of diameter `D`.
//!
//! The table is data, not computation: only `H¹` is checked numerically
//! elsewhere in the crate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::lambda_p_closed_form;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    Heisenberg,
    Grushin,
    Sasakian,
    #[serde(rename = "3sasakian")]
    ThreeSasakian,
    Corank1,
}

impl Space {
    pub const ALL: [Space; 5] = [
        Space::Heisenberg,
        Space::Grushin,
        Space::Sasakian,
        Space::ThreeSasakian,
        Space::Corank1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Space::Heisenberg => "heisenberg",
            Space::Grushin => "grushin",
            Space::Sasakian => "sasakian",
            Space::ThreeSasakian => "3sasakian",
            Space::Corank1 => "corank1",
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Space::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::param("space", format!("unknown space `{s}`")))
    }
}

/// One row of the table. Dimensions are formulas in the free parameter
/// (`d` for Heisenberg, Sasakian and 3-Sasakian, `n` for corank 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub space: Space,
    pub description: String,
    pub necessarily_ideal: bool,
    pub topological_dimension: String,
    pub geodesic_dimension: String,
    /// `N - n`, constant along each family.
    pub dimension_gap: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub k: f64,
}

pub fn table_row(space: Space) -> TableRow {
    let (description, ideal, n, big_n, gap, q, k) = match space {
        Space::Heisenberg => ("Heisenberg groups H^d", true, "2d+1", "2d+3", 2.0, 4.0, 1.0),
        Space::Grushin => ("Grushin plane", true, "2", "5", 3.0, 8.0, 1.5),
        Space::Sasakian => ("Sasakian manifolds", true, "2d+1", "2d+3", 2.0, 4.0, 1.0),
        Space::ThreeSasakian => ("3-Sasakian manifolds", true, "4d+3", "4d+9", 6.0, 64.0, 3.0),
        Space::Corank1 => ("Carnot groups of corank 1", false, "n", "n+2", 2.0, 4.0, 1.0),
    };
    TableRow {
        space,
        description: description.to_string(),
        necessarily_ideal: ideal,
        topological_dimension: n.to_string(),
        geodesic_dimension: big_n.to_string(),
        dimension_gap: gap,
        q,
        k,
    }
}

pub fn table() -> Vec<TableRow> {
    Space::ALL.into_iter().map(table_row).collect()
}

/// A table row with the constants evaluated at diameter `D` and exponent `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceConstants {
    #[serde(flatten)]
    pub row: TableRow,
    pub diameter: f64,
    pub p: f64,
    /// `π² / (4^k D²)`.
    pub poincare: f64,
    /// `(p - 1)/4^k · (2π / (p sin(π/p) D))^p`.
    pub lp_poincare: f64,
    /// `π² / (4^k · 2 D²)`; the log-Sobolev constant is this divided by a
    /// universal `C > 1` that is not known explicitly.
    pub log_sobolev_times_c: f64,
}

pub fn space_constants(space: Space, diameter: f64, p: f64) -> Result<SpaceConstants> {
    if !(diameter > 0.0) || !diameter.is_finite() {
        return Err(Error::param("D", "must be finite and > 0"));
    }
    let row = table_row(space);
    let four_k = 4f64.powf(row.k);
    Ok(SpaceConstants {
        diameter,
        p,
        poincare: PI * PI / (four_k * diameter * diameter),
        lp_poincare: lambda_p_closed_form(p, diameter)? / four_k,
        log_sobolev_times_c: PI * PI / (four_k * 2.0 * diameter * diameter),
        row,
    })
}
