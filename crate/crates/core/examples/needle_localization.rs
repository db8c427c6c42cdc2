//! Needle decomposition of `g = +1` on the left half of the unit square and
//! `-1` on the right half. Rays are horizontal and `u(x) = -x + c`.

use qcdlab::localization::{half_square, localize, LocalizeOptions};

pub fn run() -> qcdlab::Result<String> {
    let instance = half_square(32)?;
    let loc = localize(&instance, &LocalizeOptions::default())?;
    let plan = &loc.solution.plan;
    let report = &loc.report;
    Ok(format!(
        "transport cost {:.6}, duality gap {:.1e}\nneedles {}, max balance ratio {:.1e}, worst concavity {:.2} cells, leak {:.1e}\npassed = {}\n",
        plan.primal_cost,
        plan.duality_gap,
        report.needles,
        report.max_balance_ratio,
        report.worst_concavity_cells,
        report.leak_ratio,
        report.passed
    ))
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
