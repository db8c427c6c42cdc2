//! Distortion coefficients for positive, zero and negative curvature.

use qcdlab::coefficients::{max_diameter, qcd_from_mcp, sigma, tau, CurvatureParams};

pub fn run() -> qcdlab::Result<String> {
    let mut out = String::from("K      N   t    theta  sigma      tau\n");
    for k in [1.0, 0.0, -1.0] {
        let params = CurvatureParams::new(k, 3.0)?;
        for theta in [0.5, 2.0] {
            let s = sigma(0.5, theta, params)?;
            let tt = tau(0.5, theta, params)?;
            out += &format!("{k:<6} 3   0.5  {theta:<6} {:<10.6} {:<10.6}\n", s.value(), tt.value());
        }
    }
    let d = max_diameter(CurvatureParams::new(1.0, 3.0)?);
    out += &format!("max diameter for K = 1, N = 3: {:.6}\n", d.value());
    out += &format!("Q from MCP(0, 5) in dimension 3: {}\n", qcd_from_mcp(5.0, 3.0)?);
    Ok(out)
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
