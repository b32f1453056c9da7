//! Spectrum model types and the forward model for shielded spectra.
//!
//! Channel counts are independent Poisson variables with mean
//! `mu_i = sum_{j,l} S_ijl * a_jl`, where
//! `a_jl = b_j * tau * exp(-sum_m c_jlm * x_m)`. The background is one of
//! the library entries, has a single response column, and is never
//! attenuated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lines whose branching ratio falls below this are dropped from libraries.
pub const DEFAULT_MIN_BRANCHING_RATIO: f64 = 0.005;

/// One monoenergetic gamma emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionLine {
    #[serde(rename = "energy_MeV")]
    pub energy_mev: f64,
    pub branching_ratio: f64,
}

impl EmissionLine {
    pub fn new(energy_mev: f64, branching_ratio: f64) -> Result<Self> {
        let line = Self {
            energy_mev,
            branching_ratio,
        };
        line.validate()?;
        Ok(line)
    }

    fn validate(&self) -> Result<()> {
        if !(self.energy_mev > 0.0 && self.energy_mev.is_finite()) {
            return Err(Error::usage(format!(
                "line energy must be positive, got {} MeV",
                self.energy_mev
            )));
        }
        if !(self.branching_ratio > 0.0 && self.branching_ratio <= 1.0) {
            return Err(Error::usage(format!(
                "branching ratio must lie in (0, 1], got {}",
                self.branching_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nuclide {
    pub name: String,
    pub lines: Vec<EmissionLine>,
}

/// Ordered nuclides with their emission lines; one entry is the background.
#[derive(Debug, Clone, PartialEq)]
pub struct NuclideLibrary {
    nuclides: Vec<Nuclide>,
    background_index: usize,
}

impl NuclideLibrary {
    pub fn new(nuclides: Vec<Nuclide>, background_index: usize) -> Result<Self> {
        if background_index >= nuclides.len() {
            return Err(Error::usage(format!(
                "background index {background_index} out of range for {} nuclides",
                nuclides.len()
            )));
        }
        if nuclides.len() < 2 {
            return Err(Error::usage(
                "library needs at least one nuclide besides the background",
            ));
        }
        if nuclides[background_index].lines.len() != 1 {
            return Err(Error::usage(format!(
                "background '{}' must have exactly one line, has {}",
                nuclides[background_index].name,
                nuclides[background_index].lines.len()
            )));
        }
        for (j, n) in nuclides.iter().enumerate() {
            if n.lines.is_empty() {
                return Err(Error::usage(format!("nuclide '{}' has no lines", n.name)));
            }
            if nuclides[..j].iter().any(|o| o.name == n.name) {
                return Err(Error::usage(format!("duplicate nuclide name '{}'", n.name)));
            }
            if n.name.contains(':') || n.name.contains(',') {
                return Err(Error::usage(format!(
                    "nuclide name '{}' may not contain ':' or ','",
                    n.name
                )));
            }
            for line in &n.lines {
                line.validate()?;
            }
        }
        Ok(Self {
            nuclides,
            background_index,
        })
    }

    /// Drops non-background lines with branching ratio below `min_branching_ratio`.
    pub fn filter_lines(&self, min_branching_ratio: f64) -> Result<Self> {
        let nuclides = self
            .nuclides
            .iter()
            .enumerate()
            .map(|(j, n)| {
                if j == self.background_index {
                    return n.clone();
                }
                Nuclide {
                    name: n.name.clone(),
                    lines: n
                        .lines
                        .iter()
                        .copied()
                        .filter(|l| l.branching_ratio >= min_branching_ratio)
                        .collect(),
                }
            })
            .collect();
        Self::new(nuclides, self.background_index)
    }

    pub fn nuclides(&self) -> &[Nuclide] {
        &self.nuclides
    }

    pub fn nuclide(&self, j: usize) -> Option<&Nuclide> {
        self.nuclides.get(j)
    }

    pub fn background_index(&self) -> usize {
        self.background_index
    }

    pub fn n_nuclides(&self) -> usize {
        self.nuclides.len()
    }

    /// Total number of emission lines, i.e. response columns.
    pub fn n_lines(&self) -> usize {
        self.nuclides.iter().map(|n| n.lines.len()).sum()
    }

    /// `(j, l, line)` for every response column, in column order.
    pub fn columns(&self) -> impl Iterator<Item = (usize, usize, &EmissionLine)> + '_ {
        self.nuclides
            .iter()
            .enumerate()
            .flat_map(|(j, n)| n.lines.iter().enumerate().map(move |(l, line)| (j, l, line)))
    }

    pub fn column_index(&self, j: usize, l: usize) -> Option<usize> {
        let n = self.nuclides.get(j)?;
        if l >= n.lines.len() {
            return None;
        }
        Some(self.nuclides[..j].iter().map(|n| n.lines.len()).sum::<usize>() + l)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nuclides.iter().position(|n| n.name == name)
    }
}

/// Response column identity: owning nuclide and line energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnLabel {
    pub nuclide: String,
    pub energy_mev: f64,
}

impl std::fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{:.6}", self.nuclide, self.energy_mev)
    }
}

/// Detector response `S_ijl`: one length-`N` column per emission line.
///
/// Entries are mean counts per unit intensity per unit time. Branching
/// ratios are already folded into the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DrfMatrix {
    channel_energies: Vec<f64>,
    columns: Vec<Vec<f64>>,
    labels: Vec<ColumnLabel>,
}

impl DrfMatrix {
    pub fn new(
        channel_energies: Vec<f64>,
        columns: Vec<Vec<f64>>,
        labels: Vec<ColumnLabel>,
    ) -> Result<Self> {
        let n = channel_energies.len();
        if n == 0 {
            return Err(Error::usage("response matrix has no channels"));
        }
        if channel_energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::usage("channel energies must be strictly increasing"));
        }
        if columns.len() != labels.len() {
            return Err(Error::usage(format!(
                "{} columns but {} labels",
                columns.len(),
                labels.len()
            )));
        }
        for (col, label) in columns.iter().zip(&labels) {
            if col.len() != n {
                return Err(Error::usage(format!(
                    "column {label} has {} entries, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::usage(format!(
                    "column {label} has invalid entry {} at channel {i}",
                    col[i]
                )));
            }
            if !col.iter().any(|v| *v > 0.0) {
                return Err(Error::usage(format!("column {label} is identically zero")));
            }
        }
        Ok(Self {
            channel_energies,
            columns,
            labels,
        })
    }

    /// Centers of `n` equal-width channels spanning `[0, energy_max]` MeV.
    pub fn linear_channel_energies(n: usize, energy_max: f64) -> Vec<f64> {
        let width = energy_max / n as f64;
        (0..n).map(|i| (i as f64 + 0.5) * width).collect()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_energies.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn channel_energies(&self) -> &[f64] {
        &self.channel_energies
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.columns[c]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn labels(&self) -> &[ColumnLabel] {
        &self.labels
    }
}

/// `phi = (x, b)` plus the detection time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mass thicknesses in g/cm^2, one per presumed material.
    #[serde(rename = "x_g_per_cm2")]
    pub x: Vec<f64>,
    /// Unshielded intensities per unit time, one per nuclide.
    pub b: Vec<f64>,
    pub tau: f64,
}

impl ModelParams {
    pub fn new(x: Vec<f64>, b: Vec<f64>, tau: f64) -> Result<Self> {
        let p = Self { x, b, tau };
        p.validate()?;
        Ok(p)
    }

    /// No shielding by any of `n_materials` materials.
    pub fn unshielded(n_materials: usize, b: Vec<f64>, tau: f64) -> Result<Self> {
        Self::new(vec![0.0; n_materials], b, tau)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::usage(format!("tau must be positive, got {}", self.tau)));
        }
        if let Some(v) = self.x.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::usage(format!("mass thickness must be >= 0, got {v}")));
        }
        if let Some(v) = self.b.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::usage(format!("intensity must be >= 0, got {v}")));
        }
        Ok(())
    }
}

/// `c_jlm` for every response column and presumed material (cm^2/g).
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationMatrix {
    materials: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl AttenuationMatrix {
    pub fn new(materials: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = materials.len();
        for (c, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::usage(format!(
                    "attenuation row {c} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::usage(format!(
                    "attenuation coefficient must be >= 0, got {v} in row {c}"
                )));
            }
        }
        Ok(Self { materials, rows })
    }

    /// No presumed materials (`M = 0`).
    pub fn empty(n_columns: usize) -> Self {
        Self {
            materials: Vec::new(),
            rows: vec![Vec::new(); n_columns],
        }
    }

    pub fn materials(&self) -> &[String] {
        &self.materials
    }

    pub fn n_materials(&self) -> usize {
        self.materials.len()
    }

    pub fn n_columns(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.rows[c]
    }

    pub fn coeff(&self, c: usize, m: usize) -> f64 {
        self.rows[c][m]
    }
}

/// Observed counts `Y_i` per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spectrum {
    counts: Vec<u64>,
}

impl Spectrum {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `b_j * tau * exp(-sum_m c_jlm x_m)` for line `l` of nuclide `j`.
pub fn attenuated_intensity(
    params: &ModelParams,
    atten: &AttenuationMatrix,
    library: &NuclideLibrary,
    j: usize,
    l: usize,
) -> Result<f64> {
    let c = library
        .column_index(j, l)
        .ok_or_else(|| Error::usage(format!("no line ({j}, {l}) in library")))?;
    if c >= atten.n_columns() || j >= params.b.len() {
        return Err(Error::usage(format!("line ({j}, {l}) outside parameter dimensions")));
    }
    if params.x.len() != atten.n_materials() {
        return Err(Error::usage(format!(
            "{} thicknesses for {} materials",
            params.x.len(),
            atten.n_materials()
        )));
    }
    Ok(params.b[j] * params.tau * (-dot(atten.row(c), &params.x)).exp())
}

/// Library, response matrix and attenuation coefficients for one set of
/// presumed materials, checked for mutual consistency.
///
/// Construction rejects channels where every response column is zero: the
/// unshielded mean would vanish there for any intensities.
#[derive(Debug, Clone)]
pub struct ShieldingModel {
    library: NuclideLibrary,
    drf: DrfMatrix,
    atten: AttenuationMatrix,
    column_nuclide: Vec<usize>,
    /// `S_ik.`: per-nuclide response summed over lines.
    aggregated: Vec<Vec<f64>>,
}

impl ShieldingModel {
    pub fn new(library: NuclideLibrary, drf: DrfMatrix, atten: AttenuationMatrix) -> Result<Self> {
        if drf.n_columns() != library.n_lines() {
            return Err(Error::usage(format!(
                "response matrix has {} columns, library has {} lines",
                drf.n_columns(),
                library.n_lines()
            )));
        }
        for ((j, _, line), label) in library.columns().zip(drf.labels()) {
            let name = &library.nuclides()[j].name;
            if &label.nuclide != name || (label.energy_mev - line.energy_mev).abs() > 1e-6 {
                return Err(Error::usage(format!(
                    "response column {label} does not match library line {name}:{:.6}",
                    line.energy_mev
                )));
            }
        }
        if atten.n_columns() != drf.n_columns() {
            return Err(Error::usage(format!(
                "attenuation matrix has {} rows, response matrix has {} columns",
                atten.n_columns(),
                drf.n_columns()
            )));
        }
        let column_nuclide: Vec<usize> = library.columns().map(|(j, _, _)| j).collect();
        let bg = library.background_index();
        for (c, &j) in column_nuclide.iter().enumerate() {
            if j == bg && atten.row(c).iter().any(|v| *v != 0.0) {
                return Err(Error::usage("background line must not be attenuated"));
            }
        }
        let n = drf.n_channels();
        if let Some(i) = (0..n).find(|&i| drf.columns().iter().all(|col| col[i] == 0.0)) {
            return Err(Error::usage(format!(
                "channel {i} ({:.4} MeV) has zero response for every nuclide; \
                 the unshielded mean spectrum must be positive in every channel",
                drf.channel_energies()[i]
            )));
        }
        let mut aggregated = vec![vec![0.0; n]; library.n_nuclides()];
        for (c, &j) in column_nuclide.iter().enumerate() {
            for (acc, s) in aggregated[j].iter_mut().zip(drf.column(c)) {
                *acc += s;
            }
        }
        Ok(Self {
            library,
            drf,
            atten,
            column_nuclide,
            aggregated,
        })
    }

    /// Same library and responses with different presumed materials.
    pub fn with_attenuation(&self, atten: AttenuationMatrix) -> Result<Self> {
        Self::new(self.library.clone(), self.drf.clone(), atten)
    }

    /// Same library and materials with a different response matrix.
    pub fn with_drf(&self, drf: DrfMatrix) -> Result<Self> {
        Self::new(self.library.clone(), drf, self.atten.clone())
    }

    pub fn library(&self) -> &NuclideLibrary {
        &self.library
    }

    pub fn drf(&self) -> &DrfMatrix {
        &self.drf
    }

    pub fn attenuation(&self) -> &AttenuationMatrix {
        &self.atten
    }

    pub fn n_channels(&self) -> usize {
        self.drf.n_channels()
    }

    pub fn n_nuclides(&self) -> usize {
        self.library.n_nuclides()
    }

    pub fn n_materials(&self) -> usize {
        self.atten.n_materials()
    }

    pub fn n_columns(&self) -> usize {
        self.drf.n_columns()
    }

    /// Nuclide index owning response column `c`.
    pub fn column_nuclide(&self, c: usize) -> usize {
        self.column_nuclide[c]
    }

    /// Line-summed response `S_ik.` of nuclide `k`.
    pub fn aggregated(&self, k: usize) -> &[f64] {
        &self.aggregated[k]
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        params.validate()?;
        if params.x.len() != self.n_materials() || params.b.len() != self.n_nuclides() {
            return Err(Error::usage(format!(
                "parameters have {} thicknesses and {} intensities; model expects {} and {}",
                params.x.len(),
                params.b.len(),
                self.n_materials(),
                self.n_nuclides()
            )));
        }
        Ok(())
    }

    pub fn check_spectrum(&self, spectrum: &Spectrum) -> Result<()> {
        if spectrum.len() != self.n_channels() {
            return Err(Error::usage(format!(
                "spectrum has {} channels, model has {}",
                spectrum.len(),
                self.n_channels()
            )));
        }
        Ok(())
    }

    /// `exp(-sum_m c_cm x_m)` per response column.
    pub fn attenuation_factors(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_columns())
            .map(|c| (-dot(self.atten.row(c), x)).exp())
            .collect()
    }

    /// Unit-time mean `U_i`.
    pub fn mean_rate(&self, params: &ModelParams) -> Result<Vec<f64>> {
        self.check_params(params)?;
        Ok(mean_rate_with(&self.drf, &self.column_nuclide, &self.atten, params))
    }

    /// Mean counts `mu_i = tau * U_i`.
    pub fn mean_spectrum(&self, params: &ModelParams) -> Result<Vec<f64>> {
        let mut mu = self.mean_rate(params)?;
        mu.iter_mut().for_each(|v| *v *= params.tau);
        Ok(mu)
    }
}

/// Unit-time mean for a response matrix that may differ from the model's
/// (used when simulating from perturbed responses).
pub(crate) fn mean_rate_with(
    drf: &DrfMatrix,
    column_nuclide: &[usize],
    atten: &AttenuationMatrix,
    params: &ModelParams,
) -> Vec<f64> {
    let mut u = vec![0.0; drf.n_channels()];
    for (c, col) in drf.columns().iter().enumerate() {
        let w = params.b[column_nuclide[c]] * (-dot(atten.row(c), &params.x)).exp();
        if w == 0.0 {
            continue;
        }
        for (ui, s) in u.iter_mut().zip(col) {
            *ui += w * s;
        }
    }
    u
}

/// `mu` and `U = mu / tau` for the given parameters.
pub fn mean_spectrum(model: &ShieldingModel, params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = model.mean_rate(params)?;
    let mu = u.iter().map(|v| v * params.tau).collect();
    Ok((mu, u))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
