//! Random small models shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldscan_core::model::ColumnLabel;
use shieldscan_core::montecarlo::simulate_counts;
use shieldscan_core::{
    AttenuationMatrix, DrfMatrix, EmissionLine, ModelParams, Nuclide, NuclideLibrary, ShieldingModel,
    Spectrum,
};

pub struct Instance {
    pub model: ShieldingModel,
    pub params: ModelParams,
    pub spectrum: Spectrum,
}

pub struct Shape {
    pub channels: usize,
    /// Lines per nuclide; the last nuclide is the background.
    pub lines: Vec<usize>,
    pub materials: usize,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random positive responses and coefficients with the given shape.
pub fn random_model(shape: &Shape, r: &mut ChaCha8Rng) -> ShieldingModel {
    let n = shape.channels;
    let mut nuclides = Vec::new();
    let mut columns = Vec::new();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let bg = shape.lines.len() - 1;
    for (j, &p) in shape.lines.iter().enumerate() {
        let mut lines = Vec::new();
        for l in 0..p {
            let energy = 0.05 + 0.1 * (j * 4 + l) as f64 + r.random::<f64>() * 0.05;
            lines.push(EmissionLine::new(energy, 0.5).unwrap());
            columns.push((0..n).map(|_| r.random_range(0.2..5.0)).collect::<Vec<f64>>());
            labels.push(ColumnLabel {
                nuclide: format!("n{j}"),
                energy_mev: energy,
            });
            rows.push(if j == bg {
                vec![0.0; shape.materials]
            } else {
                (0..shape.materials).map(|_| r.random_range(0.05..2.0)).collect()
            });
        }
        nuclides.push(Nuclide {
            name: format!("n{j}"),
            lines,
        });
    }
    let energies = (0..n).map(|i| 0.01 * (i + 1) as f64).collect();
    let library = NuclideLibrary::new(nuclides, bg).unwrap();
    let drf = DrfMatrix::new(energies, columns, labels).unwrap();
    let atten = AttenuationMatrix::new((0..shape.materials).map(|m| format!("m{m}")).collect(), rows).unwrap();
    ShieldingModel::new(library, drf, atten).unwrap()
}

/// Each source nuclide has more lines than there are materials, so the
/// thicknesses are identifiable.
pub fn random_shape(r: &mut ChaCha8Rng) -> Shape {
    let j = r.random_range(2..=3);
    let materials = r.random_range(1..=2);
    let mut lines: Vec<usize> = (0..j - 1).map(|_| r.random_range(materials + 1..=materials + 2)).collect();
    lines.push(1);
    Shape {
        channels: r.random_range(12..40),
        lines,
        materials,
    }
}

pub fn random_params(model: &ShieldingModel, r: &mut ChaCha8Rng, x_zero: bool) -> ModelParams {
    let x = (0..model.n_materials())
        .map(|_| if x_zero { 0.0 } else { r.random_range(0.05..0.3) })
        .collect();
    let b = (0..model.n_nuclides()).map(|_| r.random_range(0.5..3.0)).collect();
    ModelParams::new(x, b, r.random_range(1.0..50.0)).unwrap()
}

pub fn random_instance(seed: u64, x_zero: bool) -> Instance {
    let mut r = rng(seed);
    let shape = random_shape(&mut r);
    let model = random_model(&shape, &mut r);
    let params = random_params(&model, &mut r, x_zero);
    let mu = model.mean_spectrum(&params).unwrap();
    let spectrum = simulate_counts(&mu, seed ^ 0x5eed).unwrap();
    Instance { model, params, spectrum }
}

/// `(x, b)` stacked into one vector.
pub fn theta(p: &ModelParams) -> Vec<f64> {
    p.x.iter().chain(&p.b).copied().collect()
}

pub fn with_theta(p: &ModelParams, t: &[f64]) -> ModelParams {
    let m = p.x.len();
    ModelParams {
        x: t[..m].to_vec(),
        b: t[m..].to_vec(),
        tau: p.tau,
    }
}

/// Frobenius or Euclidean relative error `|a - b| / |b|`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Richardson-extrapolated central difference of `f` along coordinate `a`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, t: &[f64]) -> Vec<f64> {
    (0..t.len())
        .map(|a| {
            let h = 1e-3 * t[a].abs().max(0.1);
            let d = |h: f64| {
                let mut p = t.to_vec();
                let mut q = t.to_vec();
                p[a] += h;
                q[a] -= h;
                (f(&p) - f(&q)) / (2.0 * h)
            };
            (4.0 * d(h / 2.0) - d(h)) / 3.0
        })
        .collect()
}

/// Richardson-extrapolated central second differences.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, t: &[f64]) -> DMatrix<f64> {
    let n = t.len();
    let step = |a: usize| 1e-2 * t[a].abs().max(0.1);
    let d = |a: usize, b: usize, s: f64| {
        let (ha, hb) = (step(a) * s, step(b) * s);
        let at = |sa: f64, sb: f64| {
            let mut p = t.to_vec();
            p[a] += sa * ha;
            p[b] += sb * hb;
            f(&p)
        };
        (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * ha * hb)
    };
    DMatrix::from_fn(n, n, |a, b| {
        let r = |s: f64| d(a, b, s);
        (4.0 * r(0.5) - r(1.0)) / 3.0
    })
}

/// `sum_i Y_i log U_i - tau U_i` with real-valued `Y`.
pub fn expected_kernel(model: &ShieldingModel, p: &ModelParams, y: &[f64]) -> f64 {
    let u = model.mean_rate(p).unwrap();
    u.iter().zip(y).map(|(u, y)| y * u.ln() - p.tau * u).sum()
}

/// Projected Newton on `b >= 0` for the null likelihood, written directly
/// from the dense aggregated responses.
pub fn null_mle_oracle(model: &ShieldingModel, y: &[u64], tau: f64, start: &[f64]) -> Vec<f64> {
    let n = model.n_channels();
    let j = model.n_nuclides();
    let t = DMatrix::from_fn(n, j, |i, k| model.aggregated(k)[i]);
    let yv = DVector::from_iterator(n, y.iter().map(|v| *v as f64));
    let value = |b: &DVector<f64>| {
        let u = &t * b;
        (0..n).map(|i| if yv[i] > 0.0 { yv[i] * u[i].ln() } else { 0.0 } - tau * u[i]).sum::<f64>()
    };
    let mut b = DVector::from_column_slice(start);
    for _ in 0..200 {
        let u = &t * &b;
        let g = t.transpose() * DVector::from_fn(n, |i, _| yv[i] / u[i] - tau);
        let h = t.transpose() * DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| yv[i] / (u[i] * u[i]))) * &t;
        let free: Vec<usize> = (0..j).filter(|&k| !(b[k] <= 0.0 && g[k] <= 0.0)).collect();
        let hf = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&k| g[k]));
        let d = hf.cholesky().unwrap().solve(&gf);
        if gf.dot(&d) < 1e-22 {
            break;
        }
        let mut s = 1.0;
        let v0 = value(&b);
        loop {
            let mut trial = b.clone();
            for (r, &k) in free.iter().enumerate() {
                trial[k] = (b[k] + s * d[r]).max(0.0);
            }
            if value(&trial) >= v0 || s < 1e-12 {
                b = trial;
                break;
            }
            s *= 0.5;
        }
    }
    b.as_slice().to_vec()
}
