//! The bundled I-131 + Pu-239 source, its detector, and study presets.

use serde::{Deserialize, Serialize};

use crate::attenuation::{build_attenuation_matrix, MaterialRegistry};
use crate::drf::{synthesize_drf, DetectorSpec};
use crate::error::{Error, Result};
use crate::io::parse_library_json;
use crate::model::{DrfMatrix, NuclideLibrary, ShieldingModel, DEFAULT_MIN_BRANCHING_RATIO};
use crate::montecarlo::{composite_grid, find_x50, predicted_x50, StudyConfig, X50Options};

pub const BUNDLED_LIBRARY_JSON: &str = include_str!("../data/source_library.json");

/// I-131, Pu-239 and background intensities per unit time.
pub const SOURCE_B: [f64; 3] = [1.0, 0.15, 1.0];
pub const SOURCE_TAU: f64 = 1.0;

/// Detector counts per unit intensity per unit time for a line of
/// branching ratio 1. Sets the overall count level, and so the thickness
/// scale at which shielding becomes detectable.
pub const COUNTS_SCALE: f64 = 1.3e9;

/// Tabulated materials used in the simple and composite studies.
pub const STUDY_MATERIALS: [&str; 4] = ["carbon", "concrete", "lead", "water"];

/// Points on a composite grid: `k/19 * x50` for `k = 0..19`.
pub const COMPOSITE_STEPS: usize = 20;

/// Library, detector and materials from which study models are built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub library: NuclideLibrary,
    pub drf: DrfMatrix,
    pub registry: MaterialRegistry,
}

impl Scenario {
    pub fn new(library: NuclideLibrary, drf: DrfMatrix, registry: MaterialRegistry) -> Self {
        Self { library, drf, registry }
    }

    pub fn from_detector(
        library: NuclideLibrary,
        detector: &DetectorSpec,
        registry: MaterialRegistry,
    ) -> Result<Self> {
        let drf = synthesize_drf(detector, &library)?;
        Ok(Self::new(library, drf, registry))
    }

    /// Bundled library, default detector and builtin materials.
    pub fn bundled() -> Result<Self> {
        Self::from_detector(bundled_library()?, &bundled_detector(), MaterialRegistry::builtin())
    }

    /// Model with the named presumed (or true) materials.
    pub fn model<S: AsRef<str>>(&self, materials: &[S]) -> Result<ShieldingModel> {
        let mats = self.registry.resolve(materials)?;
        let atten = build_attenuation_matrix(&self.library, &mats)?;
        ShieldingModel::new(self.library.clone(), self.drf.clone(), atten)
    }
}

pub fn bundled_library() -> Result<NuclideLibrary> {
    parse_library_json(BUNDLED_LIBRARY_JSON, DEFAULT_MIN_BRANCHING_RATIO)
}

/// 1024 channels over 0-3 MeV, 80 keV FWHM at 662 keV.
pub fn bundled_detector() -> DetectorSpec {
    DetectorSpec {
        counts_scale: COUNTS_SCALE,
        ..DetectorSpec::default()
    }
}

fn base_config(name: String, true_materials: Vec<String>, grid: Vec<Vec<f64>>, presumed: Vec<Vec<String>>) -> StudyConfig {
    StudyConfig {
        name,
        b: SOURCE_B.to_vec(),
        tau: SOURCE_TAU,
        true_materials,
        grid,
        presumed,
        replicates: 2000,
        alpha: 0.05,
        seed: 20_090_401,
        c_scale: None,
        perturb_background: true,
        calibration_replicates: None,
        keep_statistics: false,
        em: Default::default(),
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn pairs() -> Vec<[&'static str; 2]> {
    let mut out = Vec::new();
    for (i, a) in STUDY_MATERIALS.iter().enumerate() {
        for b in &STUDY_MATERIALS[i + 1..] {
            out.push([*a, *b]);
        }
    }
    out
}

/// Simple-material power grid, `n` points from 0 to `max`.
pub fn linear_grid(max: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|k| vec![max * k as f64 / (n - 1) as f64]).collect()
}

/// How composite grids find their 50%-power thicknesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum X50Method {
    /// Empirical bisection with 2000 replicates per evaluation.
    #[default]
    Empirical,
    /// Noncentral chi-square prediction from the null Fisher information.
    Predicted,
}

/// A named study preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub config: StudyConfig,
}

/// Names of every preset.
pub fn preset_names() -> Vec<String> {
    let mut names = Vec::new();
    for m in STUDY_MATERIALS {
        names.push(format!("table1-{m}"));
    }
    for [a, b] in pairs() {
        names.push(format!("table2-{a}-{b}"));
    }
    for m in STUDY_MATERIALS {
        names.push(format!("power-simple-{m}"));
    }
    for m in STUDY_MATERIALS {
        names.push(format!("power-simple-wide-{m}"));
    }
    for [a, b] in pairs() {
        names.push(format!("power-composite-{a}-{b}"));
    }
    names.push("artificial-material".into());
    names.push("sensitivity-0.00025".into());
    names.push("sensitivity-0.00035".into());
    names
}

fn x50_for(scenario: &Scenario, material: &str, method: X50Method) -> Result<f64> {
    let predicted = predicted_x50(scenario, material, &SOURCE_B, SOURCE_TAU, 0.05)?;
    match method {
        X50Method::Predicted => Ok(predicted),
        X50Method::Empirical => {
            let opts = X50Options {
                b: SOURCE_B.to_vec(),
                tau: SOURCE_TAU,
                alpha: 0.05,
                replicates: 2000,
                seed: 20_090_402,
                bracket: (0.0, 30.0),
                start: Some(predicted),
                power_tol: 0.02,
                max_evaluations: 40,
            };
            Ok(find_x50(scenario, material, &opts)?.x)
        }
    }
}

/// Presumed sets for a composite truth: the pair itself, then each
/// material in the pair and every study material as a single.
fn composite_presumed(pair: [&str; 2]) -> Vec<Vec<String>> {
    let mut sets = vec![strings(&pair)];
    let mut singles: Vec<&str> = pair.to_vec();
    for m in STUDY_MATERIALS {
        if !singles.contains(&m) {
            singles.push(m);
        }
    }
    sets.extend(singles.into_iter().map(|m| vec![m.to_string()]));
    sets
}

fn composite_config(scenario: &Scenario, name: String, pair: [&str; 2], method: X50Method) -> Result<StudyConfig> {
    let x50 = [x50_for(scenario, pair[0], method)?, x50_for(scenario, pair[1], method)?];
    Ok(base_config(
        name,
        strings(&pair),
        composite_grid(&x50, COMPOSITE_STEPS),
        composite_presumed(pair),
    ))
}

/// Builds a preset. Composite presets need 50%-power thicknesses, found
/// per `x50`.
pub fn preset(scenario: &Scenario, name: &str, x50: X50Method) -> Result<Preset> {
    let unknown = || Error::usage(format!("unknown preset '{name}' (known: {})", preset_names().join(", ")));
    if !preset_names().iter().any(|n| n == name) {
        return Err(unknown());
    }
    let (description, config) = if let Some(m) = name.strip_prefix("table1-") {
        (
            format!("size of the LM test with presumed {m}, no shielding"),
            base_config(name.into(), vec![m.into()], vec![vec![0.0]], vec![vec![m.into()]]),
        )
    } else if let Some(rest) = name.strip_prefix("table2-") {
        let (a, b) = rest.split_once('-').ok_or_else(unknown)?;
        (
            format!("size of the LM test with presumed {a} and {b}, no shielding"),
            base_config(name.into(), strings(&[a, b]), vec![vec![0.0, 0.0]], vec![strings(&[a, b])]),
        )
    } else if let Some(m) = name.strip_prefix("power-simple-wide-") {
        (
            format!("power against true {m} over 0-30 g/cm^2, each study material presumed"),
            base_config(
                name.into(),
                vec![m.into()],
                linear_grid(30.0, 16),
                STUDY_MATERIALS.iter().map(|p| vec![p.to_string()]).collect(),
            ),
        )
    } else if let Some(m) = name.strip_prefix("power-simple-") {
        (
            format!("power against true {m} over 0-0.05 g/cm^2, each study material presumed"),
            base_config(
                name.into(),
                vec![m.into()],
                linear_grid(0.05, 11),
                STUDY_MATERIALS.iter().map(|p| vec![p.to_string()]).collect(),
            ),
        )
    } else if let Some(rest) = name.strip_prefix("power-composite-") {
        let (a, b) = rest.split_once('-').ok_or_else(unknown)?;
        (
            format!("power against composite {a}+{b} along k/19 of the 50%-power thicknesses"),
            composite_config(scenario, name.into(), [a, b], x50)?,
        )
    } else if name == "artificial-material" {
        (
            "power against composite artificial+carbon along k/19 of the 50%-power thicknesses".into(),
            composite_config(scenario, name.into(), ["artificial", "carbon"], x50)?,
        )
    } else if let Some(c) = name.strip_prefix("sensitivity-") {
        let c: f64 = c.parse().map_err(|_| unknown())?;
        let mut cfg = base_config(
            name.into(),
            vec!["carbon".into()],
            linear_grid(0.05, 11),
            vec![vec!["carbon".into()]],
        );
        cfg.replicates = 6000;
        cfg.c_scale = Some(c);
        (
            format!("power against true carbon with log-modulated responses, c = {c}"),
            cfg,
        )
    } else {
        return Err(unknown());
    };
    Ok(Preset {
        name: name.into(),
        description,
        config,
    })
}
