//! Spaces with `MCP(0, N)`, their quasi-convexity order and the Poincaré
//! constants on sets of diameter 1.

use qcdlab::constants::{space_constants, Space};

pub fn run() -> qcdlab::Result<String> {
    let mut out = String::from("space        n      N      Q     k    poincare   LS*C\n");
    for space in Space::ALL {
        let c = space_constants(space, 1.0, 2.0)?;
        out += &format!(
            "{:<12} {:<6} {:<6} {:<5} {:<4} {:<10.6} {:.6}\n",
            space.name(),
            c.row.topological_dimension,
            c.row.geodesic_dimension,
            c.row.q,
            c.row.k,
            c.poincare,
            c.log_sobolev_times_c
        );
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
