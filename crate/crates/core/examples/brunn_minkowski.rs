//! Monte-Carlo Brunn-Minkowski slack for two CC balls in `H¹`, and the
//! shrinkage of matched midpoint sets toward `1/4`.

use qcdlab::heisenberg::{juillet_shrinkage, quasi_bm_estimate, Ball, BmOptions, H1Point, ShrinkConstruction};

pub fn run() -> qcdlab::Result<String> {
    let opts = BmOptions {
        samples: 100_000,
        ..BmOptions::default()
    };
    let a = Ball { center: H1Point::IDENTITY, radius: 0.2 };
    let b = Ball { center: H1Point::new(0.0, 0.0, 0.5), radius: 0.2 };
    let bm = quasi_bm_estimate(&a, &b, 0.5, &opts)?;
    let mut out = format!(
        "m(A) = {:.5}, m(B) = {:.5}, m(Z) = {:.5}\nslack BM (N = 5) = {:.4} +- {:.4}\nslack QBM (Q = 4) = {:.4} +- {:.4}\n",
        bm.vol_a, bm.vol_b, bm.vol_z, bm.slack_bm, bm.stderr_bm, bm.slack_qbm, bm.stderr_qbm
    );
    for r in [0.1, 0.05] {
        let s = juillet_shrinkage(r, 1.0, 0.5, ShrinkConstruction::Matched, &opts)?;
        out += &format!("r = {r}: m(Z)/m(A) = {:.3} +- {:.3} (limit {:.3})\n", s.ratio, s.stderr, s.linear_limit.unwrap_or(f64::NAN));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
