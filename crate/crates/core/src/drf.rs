//! Synthetic detector responses and systematic response errors.
//!
//! Each source line produces a truncated Gaussian photopeak whose FWHM
//! scales as `sqrt(E)` from one calibration point, plus a flat continuum
//! from the first channel up to the Compton edge. The background
//! pseudo-nuclide gets a falling continuum with a few terrestrial peaks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ColumnLabel, DrfMatrix, EmissionLine, NuclideLibrary};
use crate::montecarlo::derive_seed;

const ELECTRON_MASS_MEV: f64 = 0.510_998_95;
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
const GAUSS_HALF_WIDTH_SIGMAS: f64 = 5.0;

fn one() -> f64 {
    1.0
}

/// Shape of the background pseudo-nuclide's response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    /// Background counts per unit intensity, as a multiple of `counts_scale`.
    pub relative_rate: f64,
    /// Decay constant of the exponential continuum.
    #[serde(rename = "continuum_decay_MeV")]
    pub continuum_decay_mev: f64,
    /// Share of background counts in the continuum; the rest go to `peaks`.
    pub continuum_weight: f64,
    /// Peak energies with relative weights in `branching_ratio`.
    pub peaks: Vec<EmissionLine>,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        let peak = |e, w| EmissionLine {
            energy_mev: e,
            branching_ratio: w,
        };
        Self {
            relative_rate: 30.0,
            continuum_decay_mev: 2.0,
            continuum_weight: 0.5,
            peaks: vec![
                peak(0.2386, 0.10),
                peak(0.3519, 0.10),
                peak(0.6093, 0.20),
                peak(1.4608, 0.35),
                peak(1.7645, 0.05),
                peak(2.6145, 0.20),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub n_channels: usize,
    #[serde(rename = "energy_max_MeV")]
    pub energy_max_mev: f64,
    /// Photopeak FWHM at `ref_energy_mev`.
    #[serde(rename = "fwhm_ref_MeV")]
    pub fwhm_ref_mev: f64,
    #[serde(rename = "ref_energy_MeV")]
    pub ref_energy_mev: f64,
    /// Share of each line's response placed in the continuum below the photopeak.
    pub continuum_fraction: f64,
    /// Counts per unit intensity per unit time for a line of branching ratio 1.
    #[serde(default = "one")]
    pub counts_scale: f64,
    #[serde(default)]
    pub background: BackgroundSpec,
}

impl Default for DetectorSpec {
    /// 1024 channels up to 3 MeV with 80 keV FWHM at 662 keV.
    fn default() -> Self {
        Self {
            n_channels: 1024,
            energy_max_mev: 3.0,
            fwhm_ref_mev: 0.080,
            ref_energy_mev: 0.662,
            continuum_fraction: 0.3,
            counts_scale: 1.0,
            background: BackgroundSpec::default(),
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 16 {
            return Err(Error::usage(format!("n_channels must be >= 16, got {}", self.n_channels)));
        }
        if !(self.fwhm_ref_mev > 0.0 && self.fwhm_ref_mev < self.energy_max_mev) {
            return Err(Error::usage("fwhm_ref must lie in (0, energy_max)"));
        }
        if !(self.ref_energy_mev > 0.0) {
            return Err(Error::usage("ref_energy must be positive"));
        }
        if !(0.0..1.0).contains(&self.continuum_fraction) {
            return Err(Error::usage("continuum_fraction must lie in [0, 1)"));
        }
        if !(self.counts_scale > 0.0 && self.counts_scale.is_finite()) {
            return Err(Error::usage("counts_scale must be positive"));
        }
        let bg = &self.background;
        if !(bg.relative_rate > 0.0 && bg.continuum_decay_mev > 0.0) {
            return Err(Error::usage("background rate and decay must be positive"));
        }
        if !(0.0..=1.0).contains(&bg.continuum_weight)
            || (bg.continuum_weight < 1.0 && bg.peaks.is_empty())
        {
            return Err(Error::usage("background continuum weight must lie in [0, 1], with peaks when < 1"));
        }
        Ok(())
    }

    /// Photopeak FWHM at `energy` MeV.
    pub fn fwhm(&self, energy: f64) -> f64 {
        self.fwhm_ref_mev * (energy / self.ref_energy_mev).sqrt()
    }

    pub fn channel_energies(&self) -> Vec<f64> {
        DrfMatrix::linear_channel_energies(self.n_channels, self.energy_max_mev)
    }
}

/// Compton edge energy for a photon of `energy` MeV.
pub fn compton_edge(energy: f64) -> f64 {
    energy * (1.0 - 1.0 / (1.0 + 2.0 * energy / ELECTRON_MASS_MEV))
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn nearest_channel(energies: &[f64], e: f64) -> usize {
    energies
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - e).abs().total_cmp(&(b.1 - e).abs()))
        .map(|(i, _)| i)
        .unwrap()
}

/// Unit-mass truncated Gaussian photopeak.
fn photopeak(energies: &[f64], center: f64, fwhm: f64) -> Vec<f64> {
    let sigma = fwhm / FWHM_PER_SIGMA;
    let mut v: Vec<f64> = energies
        .iter()
        .map(|&e| {
            let z = (e - center) / sigma;
            if z.abs() <= GAUSS_HALF_WIDTH_SIGMAS {
                (-0.5 * z * z).exp()
            } else {
                0.0
            }
        })
        .collect();
    if v.iter().all(|x| *x == 0.0) {
        v[nearest_channel(energies, center)] = 1.0;
    }
    normalized(v)
}

/// Unit-mass flat continuum from the first channel to the Compton edge.
fn compton_continuum(energies: &[f64], energy: f64) -> Vec<f64> {
    let edge = compton_edge(energy);
    let mut v: Vec<f64> = energies.iter().map(|&e| if e <= edge { 1.0 } else { 0.0 }).collect();
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    normalized(v)
}

fn background_shape(spec: &DetectorSpec, energies: &[f64]) -> Vec<f64> {
    let bg = &spec.background;
    let cont = normalized(
        energies
            .iter()
            .map(|&e| (-e / bg.continuum_decay_mev).exp())
            .collect(),
    );
    let mut shape: Vec<f64> = cont.iter().map(|c| bg.continuum_weight * c).collect();
    let total_w: f64 = bg.peaks.iter().map(|p| p.branching_ratio).sum();
    for p in &bg.peaks {
        let peak = photopeak(energies, p.energy_mev, spec.fwhm(p.energy_mev));
        let w = (1.0 - bg.continuum_weight) * p.branching_ratio / total_w;
        shape.iter_mut().zip(peak).for_each(|(s, g)| *s += w * g);
    }
    shape
}

/// Builds one response column per library line.
///
/// A source column has mass `counts_scale * branching_ratio`; the
/// background column has mass `counts_scale * relative_rate`.
pub fn synthesize_drf(spec: &DetectorSpec, library: &NuclideLibrary) -> Result<DrfMatrix> {
    spec.validate()?;
    let energies = spec.channel_energies();
    let f = spec.continuum_fraction;
    let mut columns = Vec::with_capacity(library.n_lines());
    let mut labels = Vec::with_capacity(library.n_lines());
    for (j, _, line) in library.columns() {
        let name = &library.nuclides()[j].name;
        let col = if j == library.background_index() {
            let scale = spec.counts_scale * spec.background.relative_rate * line.branching_ratio;
            background_shape(spec, &energies).into_iter().map(|v| scale * v).collect()
        } else {
            if line.energy_mev >= spec.energy_max_mev {
                return Err(Error::usage(format!(
                    "line {name}:{:.6} MeV is above the detector range {} MeV",
                    line.energy_mev, spec.energy_max_mev
                )));
            }
            let peak = photopeak(&energies, line.energy_mev, spec.fwhm(line.energy_mev));
            let cont = compton_continuum(&energies, line.energy_mev);
            let scale = spec.counts_scale * line.branching_ratio;
            peak.iter()
                .zip(&cont)
                .map(|(p, c)| scale * ((1.0 - f) * p + f * c))
                .collect()
        };
        columns.push(col);
        labels.push(ColumnLabel {
            nuclide: name.clone(),
            energy_mev: line.energy_mev,
        });
    }
    DrfMatrix::new(energies, columns, labels)
}

/// Integrated random walk run from the top channel down:
/// `m_i = eta_i + 2 m_{i+1} - m_{i+2}` with `m_{N+1} = m_{N+2} = 0`.
pub fn integrated_walk(eta: &[f64]) -> Vec<f64> {
    let n = eta.len();
    let mut m = vec![0.0; n];
    for i in (0..n).rev() {
        let m1 = if i + 1 < n { m[i + 1] } else { 0.0 };
        let m2 = if i + 2 < n { m[i + 2] } else { 0.0 };
        m[i] = eta[i] + 2.0 * m1 - m2;
    }
    m
}

/// Standard normal innovations for response column `column`.
pub fn walk_innovations(seed: u64, column: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, column as u64]));
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Log-modulation `m` for one column, rescaled to sample sd `c_scale`.
pub fn log_modulation(c_scale: f64, seed: u64, column: usize, n: usize) -> Vec<f64> {
    let m = integrated_walk(&walk_innovations(seed, column, n));
    let s = sample_sd(&m);
    m.into_iter().map(|v| v * c_scale / s).collect()
}

/// Multiplies every column by `exp(m_i)` for an independent integrated
/// random walk per column, scaled so each walk has sample sd `c_scale`.
pub fn perturb_drf(drf: &DrfMatrix, c_scale: f64, seed: u64) -> Result<DrfMatrix> {
    perturb_drf_columns(drf, c_scale, seed, &vec![true; drf.n_columns()])
}

/// As [`perturb_drf`], touching only columns where `mask` is true.
pub fn perturb_drf_columns(
    drf: &DrfMatrix,
    c_scale: f64,
    seed: u64,
    mask: &[bool],
) -> Result<DrfMatrix> {
    if !(c_scale >= 0.0 && c_scale.is_finite()) {
        return Err(Error::usage(format!("c_scale must be >= 0, got {c_scale}")));
    }
    if mask.len() != drf.n_columns() {
        return Err(Error::usage("perturbation mask length must equal the column count"));
    }
    if c_scale == 0.0 {
        return Ok(drf.clone());
    }
    let n = drf.n_channels();
    let columns = drf
        .columns()
        .iter()
        .enumerate()
        .map(|(c, col)| {
            if !mask[c] {
                return col.clone();
            }
            let m = log_modulation(c_scale, seed, c, n);
            col.iter().zip(&m).map(|(s, mi)| s * mi.exp()).collect()
        })
        .collect();
    DrfMatrix::new(drf.channel_energies().to_vec(), columns, drf.labels().to_vec())
}
