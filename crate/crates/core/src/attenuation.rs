//! Mass attenuation coefficients: tabulated materials, interpolation, and
//! the per-line coefficient matrix for a library.
//!
//! Tables are interpolated with a monotone piecewise-cubic Hermite
//! interpolant in `ln E`-`ln(mu/rho)` space. A repeated energy marks an
//! absorption edge and splits the table into independent segments; at the
//! edge energy itself the above-edge value is used. Queries outside the
//! tabulated range are errors.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io;
use crate::model::{AttenuationMatrix, NuclideLibrary};

/// Names accepted by [`MaterialRegistry::builtin`].
pub const BUILTIN_MATERIALS: [&str; 5] = ["carbon", "concrete", "lead", "water", "artificial"];

const CARBON_CSV: &str = include_str!("../data/carbon.csv");
const CONCRETE_CSV: &str = include_str!("../data/concrete.csv");
const LEAD_CSV: &str = include_str!("../data/lead.csv");
const WATER_CSV: &str = include_str!("../data/water.csv");

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    energies: Vec<f64>,
    values: Vec<f64>,
    log_e: Vec<f64>,
    log_c: Vec<f64>,
    slopes: Vec<f64>,
}

impl Segment {
    fn new(points: &[(f64, f64)]) -> Self {
        let energies: Vec<f64> = points.iter().map(|p| p.0).collect();
        let values: Vec<f64> = points.iter().map(|p| p.1).collect();
        let log_e: Vec<f64> = energies.iter().map(|e| e.ln()).collect();
        let log_c: Vec<f64> = values.iter().map(|c| c.ln()).collect();
        let slopes = pchip_slopes(&log_e, &log_c);
        Self {
            energies,
            values,
            log_e,
            log_c,
            slopes,
        }
    }

    fn contains(&self, e: f64) -> bool {
        e >= self.energies[0] && e <= *self.energies.last().unwrap()
    }

    fn eval(&self, e: f64) -> f64 {
        // partition_point: first knot strictly greater than e
        let k = self.energies.partition_point(|&k| k <= e);
        if k > 0 && self.energies[k - 1] == e {
            return self.values[k - 1];
        }
        let k = k.clamp(1, self.energies.len() - 1) - 1;
        let h = self.log_e[k + 1] - self.log_e[k];
        let t = (e.ln() - self.log_e[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * self.log_c[k]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[k]
            + (-2.0 * t3 + 3.0 * t2) * self.log_c[k + 1]
            + (t3 - t2) * h * self.slopes[k + 1];
        y.exp()
    }
}

/// Fritsch-Butland derivative estimates with shape-preserving end conditions.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// A tabulated `mu/rho(E)` for one material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    name: String,
    grid: Vec<(f64, f64)>,
    segments: Vec<Segment>,
}

impl MaterialTable {
    /// `grid` holds `(energy MeV, cm^2/g)` pairs with nondecreasing energies.
    pub fn new(name: impl Into<String>, grid: Vec<(f64, f64)>) -> Result<Self> {
        let name = name.into();
        if grid.len() < 2 {
            return Err(Error::usage(format!("table '{name}' needs at least 2 points")));
        }
        for &(e, c) in &grid {
            if !(e > 0.0 && e.is_finite()) || !(c > 0.0 && c.is_finite()) {
                return Err(Error::usage(format!(
                    "table '{name}' has invalid point ({e}, {c}); energies and coefficients must be positive"
                )));
            }
        }
        if grid.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::usage(format!("table '{name}' energies are not sorted")));
        }
        let mut segments = Vec::new();
        let mut start = 0;
        for i in 1..=grid.len() {
            if i == grid.len() || grid[i].0 == grid[i - 1].0 {
                if i - start < 2 {
                    return Err(Error::usage(format!(
                        "table '{name}' has an edge segment with fewer than 2 points near {} MeV",
                        grid[start].0
                    )));
                }
                segments.push(Segment::new(&grid[start..i]));
                start = i;
            }
        }
        Ok(Self {
            name,
            grid,
            segments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> &[(f64, f64)] {
        &self.grid
    }

    pub fn min_energy(&self) -> f64 {
        self.grid[0].0
    }

    pub fn max_energy(&self) -> f64 {
        self.grid.last().unwrap().0
    }

    /// Interpolated coefficient in cm^2/g.
    pub fn interpolate(&self, energy: f64) -> Result<f64> {
        match self.segments.iter().rev().find(|s| s.contains(energy)) {
            Some(seg) => Ok(seg.eval(energy)),
            None => Err(Error::Range {
                material: self.name.clone(),
                energy,
                min: self.min_energy(),
                max: self.max_energy(),
                context: String::new(),
            }),
        }
    }
}

/// `exp(sin(E))` with `E` in MeV: a nonphysical attenuation function with
/// no resemblance to real materials.
pub fn artificial_material(energy_mev: f64) -> f64 {
    energy_mev.sin().exp()
}

/// A shielding material: tabulated, or the analytic artificial material.
#[derive(Debug, Clone, PartialEq)]
pub enum Material {
    Tabulated(MaterialTable),
    Artificial,
}

impl Material {
    pub fn name(&self) -> &str {
        match self {
            Material::Tabulated(t) => t.name(),
            Material::Artificial => "artificial",
        }
    }

    pub fn coefficient(&self, energy_mev: f64) -> Result<f64> {
        match self {
            Material::Tabulated(t) => t.interpolate(energy_mev),
            Material::Artificial => Ok(artificial_material(energy_mev)),
        }
    }

    /// Tabulated energy range, `None` when unbounded.
    pub fn energy_range(&self) -> Option<(f64, f64)> {
        match self {
            Material::Tabulated(t) => Some((t.min_energy(), t.max_energy())),
            Material::Artificial => None,
        }
    }
}

/// Materials addressable by name.
#[derive(Debug, Clone, Default)]
pub struct MaterialRegistry {
    materials: BTreeMap<String, Material>,
}

impl MaterialRegistry {
    /// Carbon, concrete, lead and water tables plus the artificial material.
    pub fn builtin() -> Self {
        let mut reg = Self::default();
        for (name, csv) in [
            ("carbon", CARBON_CSV),
            ("concrete", CONCRETE_CSV),
            ("lead", LEAD_CSV),
            ("water", WATER_CSV),
        ] {
            let table = io::parse_material_csv(name, csv).expect("bundled material table");
            reg.insert(Material::Tabulated(table));
        }
        reg.insert(Material::Artificial);
        reg
    }

    pub fn insert(&mut self, material: Material) {
        self.materials.insert(material.name().to_string(), material);
    }

    pub fn get(&self, name: &str) -> Result<&Material> {
        self.materials.get(name).ok_or_else(|| {
            Error::usage(format!(
                "unknown material '{name}' (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn resolve<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<Material>> {
        names.iter().map(|n| self.get(n.as_ref()).cloned()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.materials.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Material> {
        self.materials.values()
    }
}

/// `c_jlm` for every library line and material; background rows are zero.
pub fn build_attenuation_matrix(
    library: &NuclideLibrary,
    materials: &[Material],
) -> Result<AttenuationMatrix> {
    let bg = library.background_index();
    let mut rows = Vec::with_capacity(library.n_lines());
    for (j, _, line) in library.columns() {
        if j == bg {
            rows.push(vec![0.0; materials.len()]);
            continue;
        }
        let row = materials
            .iter()
            .map(|m| {
                m.coefficient(line.energy_mev).map_err(|e| match e {
                    Error::Range {
                        material,
                        energy,
                        min,
                        max,
                        ..
                    } => Error::Range {
                        material,
                        energy,
                        min,
                        max,
                        context: format!(" (line of nuclide '{}')", library.nuclides()[j].name),
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    AttenuationMatrix::new(materials.iter().map(|m| m.name().to_string()).collect(), rows)
}

/// Pearson correlations between material attenuation functions sampled on
/// `energies`.
pub fn collinearity_report(materials: &[Material], energies: &[f64]) -> Result<DMatrix<f64>> {
    if materials.len() < 2 {
        return Err(Error::usage("collinearity report needs at least 2 materials"));
    }
    if energies.len() < 2 {
        return Err(Error::usage("collinearity report needs at least 2 energies"));
    }
    let samples = materials
        .iter()
        .map(|m| energies.iter().map(|&e| m.coefficient(e)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .zip(materials)
        .map(|(s, m)| {
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let c: Vec<f64> = s.iter().map(|v| v - mean).collect();
            if c.iter().all(|v| *v == 0.0) {
                Err(Error::usage(format!(
                    "material '{}' is constant on the grid; correlation undefined",
                    m.name()
                )))
            } else {
                Ok(c)
            }
        })
        .collect::<Result<_>>()?;
    let k = materials.len();
    let mut r = DMatrix::identity(k, k);
    for a in 0..k {
        for b in a + 1..k {
            let sab: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            let saa: f64 = centered[a].iter().map(|x| x * x).sum();
            let sbb: f64 = centered[b].iter().map(|x| x * x).sum();
            let v = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    Ok(r)
}

/// `n` log-spaced energies from `lo` to `hi` MeV inclusive.
pub fn log_energy_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
