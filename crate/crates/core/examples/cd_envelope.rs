//! The CD(0,2) envelope of `1 + |x|` on `[-1, 1]` is the constant 2, so the
//! density is QCD with `Q = 2`.

use qcdlab::coefficients::CurvatureParams;
use qcdlab::density::GridDensity;
use qcdlab::envelope::cd_upper_envelope;

pub fn run() -> qcdlab::Result<String> {
    let h = GridDensity::from_fn(-1.0, 1.0, 201, |x| 1.0 + x.abs())?;
    let r = cd_upper_envelope(&h, CurvatureParams::new(0.0, 2.0)?)?;
    let env = r.envelope.values();
    let (lo, hi) = env.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(format!(
        "q_order = {:.6}\nenvelope range = [{lo:.6}, {hi:.6}]\nsandwich margin = {:.2e}\n",
        r.q_order, r.sandwich_margin
    ))
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
