//! Fixtures shared by the benchmarks.

use shieldscan_core::montecarlo::simulate_spectrum;
use shieldscan_core::scenario::{Scenario, SOURCE_B, SOURCE_TAU};
use shieldscan_core::{ModelParams, ShieldingModel, Spectrum};

/// Bundled scenario, a model with the given presumed materials, and one
/// null spectrum drawn from it.
pub fn null_fixture(materials: &[&str], seed: u64) -> (Scenario, ShieldingModel, Spectrum) {
    let scenario = Scenario::bundled().expect("bundled scenario");
    let model = scenario.model(materials).expect("model");
    let params = ModelParams::unshielded(materials.len(), SOURCE_B.to_vec(), SOURCE_TAU).expect("params");
    let spectrum = simulate_spectrum(&model, &params, seed).expect("spectrum");
    (scenario, model, spectrum)
}
