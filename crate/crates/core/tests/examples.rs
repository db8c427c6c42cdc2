//! Every example runs to completion.

#[path = "../examples/coefficients.rs"]
mod coefficients;

#[test]
fn coefficients_runs() {
    assert!(!coefficients::run().unwrap().is_empty());
}

#[path = "../examples/classify_densities.rs"]
mod classify_densities;

#[test]
fn classify_densities_runs() {
    assert!(!classify_densities::run().unwrap().is_empty());
}

#[path = "../examples/cd_envelope.rs"]
mod cd_envelope;

#[test]
fn cd_envelope_runs() {
    assert!(!cd_envelope::run().unwrap().is_empty());
}

#[path = "../examples/displacement_interpolation.rs"]
mod displacement_interpolation;

#[test]
fn displacement_interpolation_runs() {
    assert!(!displacement_interpolation::run().unwrap().is_empty());
}

#[path = "../examples/spectral_gaps.rs"]
mod spectral_gaps;

#[test]
fn spectral_gaps_runs() {
    assert!(!spectral_gaps::run().unwrap().is_empty());
}

#[path = "../examples/log_sobolev.rs"]
mod log_sobolev;

#[test]
fn log_sobolev_runs() {
    assert!(!log_sobolev::run().unwrap().is_empty());
}

#[path = "../examples/heisenberg_geodesics.rs"]
mod heisenberg_geodesics;

#[test]
fn heisenberg_geodesics_runs() {
    assert!(!heisenberg_geodesics::run().unwrap().is_empty());
}

#[path = "../examples/brunn_minkowski.rs"]
mod brunn_minkowski;

#[test]
fn brunn_minkowski_runs() {
    assert!(!brunn_minkowski::run().unwrap().is_empty());
}

#[path = "../examples/needle_localization.rs"]
mod needle_localization;

#[test]
fn needle_localization_runs() {
    assert!(!needle_localization::run().unwrap().is_empty());
}

#[path = "../examples/constants_table.rs"]
mod constants_table;

#[test]
fn constants_table_runs() {
    assert!(!constants_table::run().unwrap().is_empty());
}
