//! Poisson regression models for shielded gamma-ray pulse-height spectra
//! and Lagrange multiplier (score) tests for the presence of shielding.
//!
//! A spectrum over `N` energy channels is modeled as independent Poisson
//! counts whose means are sums of detector responses to each emission line,
//! scaled by nuclide intensities and attenuated exponentially by the mass
//! thickness of each presumed intervening material. The score test only
//! needs the no-shielding fit, which is computed by EM.
//!
//! Module map:
//! - [`model`]: spectrum model types, attenuated intensities, mean spectra
//! - [`attenuation`]: tabulated mass attenuation coefficients and interpolation
//! - [`drf`]: synthetic detector responses and systematic response errors
//! - [`estimation`]: log likelihood, EM null fit, full projected fit
//! - [`inference`]: score, Fisher information, LM/Wald/LR tests, local power
//! - [`stats`]: chi-square and noncentral chi-square tails, KS tests
//! - [`montecarlo`]: size, power and sensitivity studies
//! - [`scenario`]: the bundled two-nuclide source, detector and study presets
//! - [`io`]: file formats for libraries, response matrices, spectra and tables

pub mod attenuation;
pub mod drf;
mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod scenario;
pub mod stats;

pub use attenuation::{Material, MaterialRegistry, MaterialTable};
pub use drf::DetectorSpec;
pub use error::{Error, Result};
pub use estimation::{EmOptions, FitResult, FullFitOptions, XBounds};
pub use inference::{FisherBlocks, ScoreVector, TestKind, TestReport};
pub use model::{
    AttenuationMatrix, DrfMatrix, EmissionLine, ModelParams, Nuclide, NuclideLibrary,
    ShieldingModel, Spectrum,
};
pub use montecarlo::{StudyConfig, StudyResult};
