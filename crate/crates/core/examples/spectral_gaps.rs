//! `L^p` spectral gaps of the unit interval against the closed form, and the
//! Lichnerowicz gap of the cosine density.

use std::f64::consts::FRAC_PI_2;

use qcdlab::coefficients::CurvatureParams;
use qcdlab::density::{model_density, sample_model, GridDensity};
use qcdlab::spectral::{lambda_p_closed_form, lichnerowicz, solve_lambda_p, SpectralProblem};

pub fn run() -> qcdlab::Result<String> {
    let uniform = SpectralProblem::new(GridDensity::from_fn(0.0, 1.0, 1025, |_| 1.0)?);
    let mut out = String::from("p     lambda_p    closed form\n");
    for p in [1.5, 2.0, 3.0, 4.0] {
        let r = solve_lambda_p(&uniform, p)?;
        out += &format!("{p:<5} {:<11.6} {:.6}\n", r.lambda, lambda_p_closed_form(p, 1.0)?);
    }
    let cos = model_density(CurvatureParams::new(1.0, 2.0)?, (-FRAC_PI_2, FRAC_PI_2), 0.0, 1.0)?;
    let r = solve_lambda_p(&SpectralProblem::new(sample_model(&cos, 1025)?), 2.0)?;
    out += &format!("cos on [-pi/2, pi/2]: lambda_2 = {:.6}, Lichnerowicz bound {:.6}\n", r.lambda, lichnerowicz(1.0, 2.0)?);
    Ok(out)
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
