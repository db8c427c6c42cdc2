//! CC distances and midpoints in `H¹`, by shooting and by the closed form.

use qcdlab::heisenberg::{cc_distance, fast_distance, midpoint, H1Point, ShootingConfig};

pub fn run() -> qcdlab::Result<String> {
    let cfg = ShootingConfig::default();
    let mut out = String::new();
    for target in [H1Point::new(1.0, 0.0, 0.0), H1Point::new(0.0, 0.0, 1.0), H1Point::new(0.3, -0.4, 0.2)] {
        let shot = cc_distance(target, &cfg)?;
        let exact = fast_distance(H1Point::IDENTITY, target);
        out += &format!("d(0, {target:?}) = {shot:.9} (closed form {exact:.9})\n");
    }
    let m = midpoint(H1Point::IDENTITY, H1Point::new(0.0, 0.0, 1.0), 0.5, &cfg)?;
    out += &format!("a midpoint of 0 and (0,0,1): {:?}, non_unique = {}\n", m.point, m.non_unique);
    Ok(out)
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
