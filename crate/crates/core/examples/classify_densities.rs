//! A model density passes CD; `1 + |x|` fails CD(0,2) but passes QCD(2,0,2).

use qcdlab::coefficients::CurvatureParams;
use qcdlab::density::{classify, model_density, sample_model, ClassifyOptions, ConditionSpec, GridDensity};

pub fn run() -> qcdlab::Result<String> {
    let opts = ClassifyOptions::default();
    let model = model_density(CurvatureParams::new(0.0, 3.0)?, (0.0, 1.0), 1.0, 0.5)?;
    let h = sample_model(&model, 101)?;
    let cd = classify(&h, &ConditionSpec::cd(0.0, 3.0)?, &opts)?;

    let tent = GridDensity::from_fn(-1.0, 1.0, 101, |x| 1.0 + x.abs())?;
    let tent_cd = classify(&tent, &ConditionSpec::cd(0.0, 2.0)?, &opts)?;
    let tent_qcd = classify(&tent, &ConditionSpec::qcd(2.0, 0.0, 2.0)?, &opts)?;

    let mut out = String::new();
    out += &format!("(1 + x/2)^2 under CD(0,3):   passed = {} (worst slack {:.2e})\n", cd.passed, cd.worst_violation);
    out += &format!("1 + |x| under CD(0,2):       passed = {} (worst slack {:.2e})\n", tent_cd.passed, tent_cd.worst_violation);
    out += &format!("1 + |x| under QCD(2,0,2):    passed = {} (worst slack {:.2e})\n", tent_qcd.passed, tent_qcd.worst_violation);
    Ok(out)
}

#[allow(dead_code)]
fn main() -> qcdlab::Result<()> {
    print!("{}", run()?);
    Ok(())
}
