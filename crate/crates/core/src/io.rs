//! File formats.
//!
//! - Library: JSON `{"nuclides": [{"name", "background", "lines": [{"energy_MeV", "branching_ratio"}]}]}`
//! - Response matrix: CSV, first column `channel_energy_MeV`, then one
//!   column per line headed `nuclide:line_energy_MeV`
//! - Spectrum: CSV `channel,count`
//! - Material table: CSV `energy_MeV,mu_over_rho_cm2_per_g`, `#` comments
//! - Study result: CSV, one row per grid point and presumed set

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attenuation::MaterialTable;
use crate::error::{Error, Result};
use crate::model::{ColumnLabel, DrfMatrix, EmissionLine, Nuclide, NuclideLibrary, Spectrum};
use crate::montecarlo::StudyResult;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LibraryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub nuclides: Vec<NuclideEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuclideEntry {
    pub name: String,
    #[serde(default)]
    pub background: bool,
    pub lines: Vec<EmissionLine>,
}

impl LibraryFile {
    pub fn from_library(library: &NuclideLibrary) -> Self {
        Self {
            description: None,
            nuclides: library
                .nuclides()
                .iter()
                .enumerate()
                .map(|(j, n)| NuclideEntry {
                    name: n.name.clone(),
                    background: j == library.background_index(),
                    lines: n.lines.clone(),
                })
                .collect(),
        }
    }

    pub fn into_library(self) -> Result<NuclideLibrary> {
        let bgs: Vec<usize> = self
            .nuclides
            .iter()
            .enumerate()
            .filter(|(_, n)| n.background)
            .map(|(j, _)| j)
            .collect();
        if bgs.len() != 1 {
            return Err(Error::Parse(format!(
                "library must flag exactly one background nuclide, found {}",
                bgs.len()
            )));
        }
        let nuclides = self
            .nuclides
            .into_iter()
            .map(|n| Nuclide {
                name: n.name,
                lines: n.lines,
            })
            .collect();
        NuclideLibrary::new(nuclides, bgs[0])
    }
}

/// Parses a library and drops lines below `min_branching_ratio`.
pub fn parse_library_json(text: &str, min_branching_ratio: f64) -> Result<NuclideLibrary> {
    let file: LibraryFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("library JSON: {e}")))?;
    file.into_library()?.filter_lines(min_branching_ratio)
}

pub fn library_to_json(library: &NuclideLibrary) -> String {
    serde_json::to_string_pretty(&LibraryFile::from_library(library)).expect("library serializes")
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: invalid {what} '{field}'")))
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub fn parse_material_csv(name: &str, text: &str) -> Result<MaterialTable> {
    let mut rdr = reader(text);
    let mut grid = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("material '{name}': {e}")))?;
        let line = record_line(&rec);
        if rec.len() != 2 {
            return Err(Error::Parse(format!(
                "material '{name}' line {line}: expected 2 fields, got {}",
                rec.len()
            )));
        }
        grid.push((
            parse_f64(&rec[0], "energy", line)?,
            parse_f64(&rec[1], "coefficient", line)?,
        ));
    }
    MaterialTable::new(name, grid)
}

pub fn parse_drf_csv(text: &str) -> Result<DrfMatrix> {
    let mut rdr = reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("response CSV header: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Parse("response CSV needs an energy column and at least one line column".into()));
    }
    let labels = headers
        .iter()
        .skip(1)
        .map(|h| {
            let (nuclide, energy) = h.rsplit_once(':').ok_or_else(|| {
                Error::Parse(format!("response column header '{h}' is not 'nuclide:line_energy_MeV'"))
            })?;
            Ok(ColumnLabel {
                nuclide: nuclide.to_string(),
                energy_mev: parse_f64(energy, "line energy in header", 1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut energies = Vec::new();
    let mut columns = vec![Vec::new(); labels.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("response CSV: {e}")))?;
        let line = record_line(&rec);
        energies.push(parse_f64(&rec[0], "channel energy", line)?);
        for (col, field) in columns.iter_mut().zip(rec.iter().skip(1)) {
            col.push(parse_f64(field, "response value", line)?);
        }
    }
    DrfMatrix::new(energies, columns, labels)
}

pub fn drf_to_csv(drf: &DrfMatrix) -> String {
    let mut out = String::from("channel_energy_MeV");
    for label in drf.labels() {
        write!(out, ",{label}").unwrap();
    }
    out.push('\n');
    for (i, e) in drf.channel_energies().iter().enumerate() {
        write!(out, "{e:.9}").unwrap();
        for col in drf.columns() {
            write!(out, ",{:e}", col[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses `channel,count` rows; channels must be consecutive from 0 or 1.
pub fn parse_spectrum_csv(text: &str) -> Result<Spectrum> {
    let mut rdr = reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("spectrum CSV header: {e}")))?
        .clone();
    if headers.len() != 2 || &headers[0] != "channel" || &headers[1] != "count" {
        return Err(Error::Parse(format!(
            "line 1: spectrum header must be 'channel,count', got '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut counts = Vec::new();
    let mut base = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("spectrum CSV: {e}")))?;
        let line = record_line(&rec);
        if rec.len() != 2 {
            return Err(Error::Parse(format!("line {line}: expected 2 fields, got {}", rec.len())));
        }
        let channel: u64 = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: invalid channel '{}'", &rec[0])))?;
        let count: u64 = rec[1].parse().map_err(|_| {
            Error::Parse(format!("line {line}: count must be a nonnegative integer, got '{}'", &rec[1]))
        })?;
        let b = *base.get_or_insert(channel);
        if b > 1 || channel != b + counts.len() as u64 {
            return Err(Error::Parse(format!(
                "line {line}: channel {channel} out of sequence (expected {})",
                b.min(1) + counts.len() as u64
            )));
        }
        counts.push(count);
    }
    if counts.is_empty() {
        return Err(Error::Parse("spectrum CSV has no rows".into()));
    }
    Ok(Spectrum::new(counts))
}

pub fn spectrum_to_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from("channel,count\n");
    for (i, c) in spectrum.counts().iter().enumerate() {
        writeln!(out, "{i},{c}").unwrap();
    }
    out
}

/// Columns `grid_index`, `x_<material>_g_per_cm2` per true material,
/// `presumed`, `rejections`, `replicates`, `failures`, `rate`, `se`, then
/// `corrected_rate` and `corrected_se` when the study was size-corrected.
pub fn study_to_csv(result: &StudyResult) -> String {
    let corrected = !result.calibration.is_empty();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["grid_index".to_string()];
    header.extend(result.config.true_materials.iter().map(|m| format!("x_{m}_g_per_cm2")));
    header.extend(
        ["presumed", "rejections", "replicates", "failures", "rate", "se"].map(String::from),
    );
    if corrected {
        header.extend(["corrected_rate", "corrected_se"].map(String::from));
    }
    w.write_record(&header).expect("in-memory write");
    for p in &result.points {
        let mut row = vec![p.grid_index.to_string()];
        row.extend(p.x.iter().map(|v| v.to_string()));
        row.push(p.presumed.join("+"));
        row.extend([p.rejections, p.replicates, p.failures].map(|v| v.to_string()));
        row.extend([p.rate, p.se].map(|v| v.to_string()));
        if corrected {
            row.extend(
                [p.corrected_rate, p.corrected_se].map(|v| v.map(|v| v.to_string()).unwrap_or_default()),
            );
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_MIN_BRANCHING_RATIO;
    use proptest::prelude::*;

    const LIB: &str = r#"{"nuclides": [
        {"name": "I-131", "lines": [{"energy_MeV": 0.36449, "branching_ratio": 0.815},
                                    {"energy_MeV": 0.177214, "branching_ratio": 0.00269}]},
        {"name": "background", "background": true, "lines": [{"energy_MeV": 1.4608, "branching_ratio": 1.0}]}
    ]}"#;

    #[test]
    fn library_parsing_applies_threshold() {
        let lib = parse_library_json(LIB, DEFAULT_MIN_BRANCHING_RATIO).unwrap();
        assert_eq!(lib.n_lines(), 2);
        assert_eq!(lib.background_index(), 1);
        let lib = parse_library_json(LIB, 0.0).unwrap();
        assert_eq!(lib.n_lines(), 3);
        let back = parse_library_json(&library_to_json(&lib), 0.0).unwrap();
        assert_eq!(back, lib);
    }

    #[test]
    fn library_needs_one_background() {
        let no_bg = LIB.replace("\"background\": true,", "");
        assert!(parse_library_json(&no_bg, 0.0).is_err());
    }

    #[test]
    fn spectrum_parse_errors_name_the_line() {
        let err = parse_spectrum_csv("channel,count\n0,5\n1,abc\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_spectrum_csv("channel,count\n0,5\n2,1\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_spectrum_csv("chan,count\n0,5\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = parse_spectrum_csv("channel,count\n0,-1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert_eq!(parse_spectrum_csv("channel,count\n1,5\n2,0\n").unwrap().counts(), &[5, 0]);
    }

    #[test]
    fn material_csv_skips_comments() {
        let t = parse_material_csv("x", "# note\nenergy_MeV,mu_over_rho_cm2_per_g\n0.1,2\n# mid\n1.0,0.5\n").unwrap();
        assert_eq!(t.grid(), &[(0.1, 2.0), (1.0, 0.5)]);
        assert!(parse_material_csv("x", "energy_MeV,mu_over_rho_cm2_per_g\n0.1,2,3\n").is_err());
    }

    #[test]
    fn drf_csv_roundtrip() {
        let drf = DrfMatrix::new(
            vec![0.1, 0.2, 0.3],
            vec![vec![0.0, 1.5e-3, 2.0], vec![1.0, 1.0, 1.0]],
            vec![
                ColumnLabel { nuclide: "I-131".into(), energy_mev: 0.36449 },
                ColumnLabel { nuclide: "background".into(), energy_mev: 1.4608 },
            ],
        )
        .unwrap();
        let back = parse_drf_csv(&drf_to_csv(&drf)).unwrap();
        assert_eq!(back, drf);
        assert!(parse_drf_csv("channel_energy_MeV,bad\n0.1,1\n").is_err());
    }

    #[test]
    fn study_csv_has_one_row_per_point() {
        use crate::montecarlo::run_study;
        use crate::scenario::{preset, Scenario, X50Method};
        let s = Scenario::bundled().unwrap();
        let mut cfg = preset(&s, "sensitivity-0.00025", X50Method::Predicted).unwrap().config;
        cfg.replicates = 4;
        cfg.calibration_replicates = Some(4);
        cfg.grid.truncate(2);
        let text = study_to_csv(&run_study(&s, &cfg).unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "grid_index,x_carbon_g_per_cm2,presumed,rejections,replicates,failures,rate,se,corrected_rate,corrected_se"
        );
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1,0.005,carbon,"));
    }

    proptest! {
        #[test]
        fn spectrum_csv_roundtrip(counts in proptest::collection::vec(0u64..1_000_000, 1..50)) {
            let s = Spectrum::new(counts);
            prop_assert_eq!(parse_spectrum_csv(&spectrum_to_csv(&s)).unwrap(), s);
        }
    }
}
