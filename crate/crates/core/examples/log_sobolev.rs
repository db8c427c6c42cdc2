//! Log-Sobolev estimate on the unit interval and on `1 + |x|`, compared with
//! the spectral gap.

use qcdlab::density::GridDensity;
use qcdlab::spectral::{estimate_lambda_ls, solve_lambda_p, LsOptions, SpectralProblem};

pub fn run() -> qcdlab::Result<String> {
    let mut out = String::new();
    let cases = [
        ("uniform on [0,1]", GridDensity::from_fn(0.0, 1.0, 257, |_| 1.0)?),
        ("1 + |x| on [-1,1]", GridDensity::from_fn(-1.0, 1.0, 257, |x| 1.0 + x.abs())?),
    ];
    for (name, h) in cases {
        let problem = SpectralProblem::new(h);
        let ls = estimate_lambda_ls(&problem, &LsOptions::default())?;
        let gap = solve_lambda_p(&problem, 2.0)?;
        out += &format!("{name}: log-Sobolev {:.4}, spectral gap {:.4}\n", ls.lambda, gap.lambda);
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
