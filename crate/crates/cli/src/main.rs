//! `shieldscan`: shielding tests on gamma-ray pulse-height spectra.
//!
//! JSON results go to stdout, human summaries and logs to stderr. Exit code
//! 0 on success, 1 when a statistical procedure fails (non-convergence,
//! singular information), 2 on usage or input errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use shieldscan_core::attenuation::{collinearity_report, log_energy_grid};
use shieldscan_core::estimation::{fit_full, fit_null_em};
use shieldscan_core::inference::{check_a1, run_test};
use shieldscan_core::io;
use shieldscan_core::model::DEFAULT_MIN_BRANCHING_RATIO;
use shieldscan_core::montecarlo::{run_study, simulate_spectrum};
use shieldscan_core::scenario::{bundled_detector, preset, preset_names, Scenario, X50Method, SOURCE_B};
use shieldscan_core::{
    DetectorSpec, EmOptions, Error, FullFitOptions, Material, MaterialRegistry, ModelParams, Result,
    StudyConfig, TestKind, XBounds,
};

#[derive(Parser)]
#[command(name = "shieldscan", version, about = "Score tests for shielding in gamma-ray spectra")]
struct Cli {
    /// Worker threads for Monte Carlo studies.
    #[arg(long, global = true, env = "SHIELDSCAN_THREADS")]
    threads: Option<usize>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detector response matrices.
    #[command(subcommand)]
    Drf(DrfCommand),
    /// Shielding materials.
    #[command(subcommand)]
    Materials(MaterialsCommand),
    /// Draws a Poisson spectrum from the model.
    Simulate(SimulateArgs),
    /// Fits the null (no shielding) or full model to a spectrum.
    Fit(FitArgs),
    /// Tests for shielding by the presumed materials.
    Test(TestArgs),
    /// Runs a Monte Carlo size, power or sensitivity study.
    Study(StudyArgs),
    /// Checks the identifiability condition at a null parameter.
    A1check(A1Args),
}

#[derive(Subcommand)]
enum DrfCommand {
    /// Synthesizes a response matrix from a detector description.
    Synth {
        /// Detector description JSON; the bundled detector when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Nuclide library JSON; the bundled library when absent.
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MIN_BRANCHING_RATIO)]
        min_branching_ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MaterialsCommand {
    /// Lists available materials and their tabulated energy ranges.
    List {
        /// Extra material table, `name=path` (repeatable).
        #[arg(long = "material", value_name = "NAME=PATH")]
        extra: Vec<String>,
    },
    /// Correlations between attenuation functions on a log-energy grid.
    Corr {
        #[arg(long, value_delimiter = ',', required = true)]
        materials: Vec<String>,
        #[arg(long, default_value_t = 0.03)]
        emin: f64,
        #[arg(long, default_value_t = 3.0)]
        emax: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long = "material", value_name = "NAME=PATH")]
        extra: Vec<String>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Nuclide library JSON; the bundled library when absent.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Response matrix CSV; synthesized from `--detector` when absent.
    #[arg(long)]
    drf: Option<PathBuf>,
    /// Detector description JSON used when no `--drf` is given.
    #[arg(long, conflicts_with = "drf")]
    detector: Option<PathBuf>,
    /// Extra material table, `name=path` (repeatable).
    #[arg(long = "material", value_name = "NAME=PATH")]
    extra: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_MIN_BRANCHING_RATIO)]
    min_branching_ratio: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Shielding materials, comma separated.
    #[arg(long, value_delimiter = ',')]
    materials: Vec<String>,
    /// Thicknesses in g/cm^2, one per material.
    #[arg(long, value_delimiter = ',')]
    x: Vec<f64>,
    /// Intensities, one per nuclide; the bundled source when absent.
    #[arg(long, value_delimiter = ',')]
    b: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spectrum CSV; written to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Presumed materials, comma separated.
    #[arg(long, value_delimiter = ',')]
    materials: Vec<String>,
    /// Spectrum CSV with header `channel,count`.
    #[arg(long)]
    spectrum: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// EM relative-change tolerance.
    #[arg(long, default_value_t = EmOptions::default().tol)]
    em_tol: f64,
    #[arg(long, default_value_t = EmOptions::default().max_iter)]
    em_max_iter: usize,
}

impl SpectrumArgs {
    fn em(&self) -> EmOptions {
        EmOptions {
            tol: self.em_tol,
            max_iter: self.em_max_iter,
            ..EmOptions::default()
        }
    }

    fn full(&self, free: bool) -> FullFitOptions {
        FullFitOptions {
            x_bounds: if free { XBounds::Free } else { XBounds::Nonnegative },
            em: self.em(),
            ..FullFitOptions::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: SpectrumArgs,
    /// Intensities only, every thickness fixed at zero.
    #[arg(long, conflicts_with = "full", required_unless_present = "full")]
    null: bool,
    /// Thicknesses and intensities.
    #[arg(long)]
    full: bool,
    /// Let thicknesses go negative in the full fit.
    #[arg(long, requires = "full")]
    free: bool,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: SpectrumArgs,
    #[arg(long, default_value = "lm", value_parser = parse_test_kind)]
    method: TestKind,
    /// Let thicknesses go negative in the full fit (Wald, LR).
    #[arg(long)]
    free: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum X50Arg {
    Empirical,
    Predicted,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Named study preset.
    #[arg(long, conflicts_with = "config", required_unless_present_any = ["config", "list"])]
    preset: Option<String>,
    /// Study configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lists preset names and exits.
    #[arg(long)]
    list: bool,
    /// Result CSV; a JSON sidecar with the same stem is written next to it.
    /// The CSV goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// How composite presets find their 50%-power thicknesses.
    #[arg(long, value_enum, default_value = "empirical")]
    x50: X50Arg,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct A1Args {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    materials: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    b: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Singular values below `rtol` times the largest count as zero.
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
}

fn parse_test_kind(s: &str) -> std::result::Result<TestKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Provenance of one invocation, embedded in every study output.
#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    subcommand: &'a str,
    config: C,
    /// SHA-256 of each input file, by path.
    input_digests: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    tool_version: &'static str,
    timestamp: String,
}

/// Reads input files and records their digests.
#[derive(Default)]
struct Inputs {
    digests: BTreeMap<String, String>,
}

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String> {
        let text = io::read_to_string(path)?;
        self.digests
            .insert(path.display().to_string(), hex::encode(Sha256::digest(text.as_bytes())));
        Ok(text)
    }

    fn manifest<'a, C: Serialize>(self, subcommand: &'a str, config: C, seed: Option<u64>) -> RunManifest<'a, C> {
        RunManifest {
            subcommand,
            config,
            input_digests: self.digests,
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn registry(inputs: &mut Inputs, extra: &[String]) -> Result<MaterialRegistry> {
    let mut reg = MaterialRegistry::builtin();
    for spec in extra {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--material expects name=path, got '{spec}'")))?;
        let path = Path::new(path);
        let table = io::parse_material_csv(name, &inputs.read(path)?)?;
        reg.insert(Material::Tabulated(table));
    }
    Ok(reg)
}

fn load_library(
    inputs: &mut Inputs,
    path: Option<&Path>,
    min_branching_ratio: f64,
) -> Result<shieldscan_core::NuclideLibrary> {
    let text = match path {
        Some(p) => inputs.read(p)?,
        None => shieldscan_core::scenario::BUNDLED_LIBRARY_JSON.to_string(),
    };
    io::parse_library_json(&text, min_branching_ratio)
}

fn load_detector(inputs: &mut Inputs, path: Option<&Path>) -> Result<DetectorSpec> {
    match path {
        Some(p) => {
            let spec: DetectorSpec = parse_json(&inputs.read(p)?, p)?;
            spec.validate()?;
            Ok(spec)
        }
        None => Ok(bundled_detector()),
    }
}

impl ModelArgs {
    fn scenario(&self, inputs: &mut Inputs) -> Result<Scenario> {
        let library = load_library(inputs, self.library.as_deref(), self.min_branching_ratio)?;
        let registry = registry(inputs, &self.extra)?;
        match &self.drf {
            Some(p) => {
                let drf = io::parse_drf_csv(&inputs.read(p)?)?;
                Ok(Scenario::new(library, drf, registry))
            }
            None => {
                let detector = load_detector(inputs, self.detector.as_deref())?;
                Scenario::from_detector(library, &detector, registry)
            }
        }
    }

    fn uses_bundled_library(&self) -> bool {
        self.library.is_none()
    }
}

/// Intensities from the flag, or the bundled source when the bundled
/// library is in use.
fn intensities(b: &Option<Vec<f64>>, model: &ModelArgs) -> Result<Vec<f64>> {
    match b {
        Some(b) => Ok(b.clone()),
        None if model.uses_bundled_library() => Ok(SOURCE_B.to_vec()),
        None => Err(Error::Usage("--b is required with a custom library".into())),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Evaluation(e.to_string()))?;
    write_stdout(&format!("{text}\n"))
}

fn write_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn drf(cmd: &DrfCommand) -> Result<ExitCode> {
    let DrfCommand::Synth {
        spec,
        library,
        min_branching_ratio,
        out,
    } = cmd;
    let mut inputs = Inputs::default();
    let library = load_library(&mut inputs, library.as_deref(), *min_branching_ratio)?;
    let detector = load_detector(&mut inputs, spec.as_deref())?;
    let matrix = shieldscan_core::drf::synthesize_drf(&detector, &library)?;
    write_file(out, &io::drf_to_csv(&matrix))?;
    eprintln!(
        "wrote {} channels x {} lines to {}",
        matrix.n_channels(),
        matrix.n_columns(),
        out.display()
    );
    print_json(&inputs.manifest("drf synth", &detector, None))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct MaterialInfo<'a> {
    name: &'a str,
    #[serde(rename = "energy_range_MeV")]
    energy_range: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct CorrelationReport {
    materials: Vec<String>,
    #[serde(rename = "energy_min_MeV")]
    emin: f64,
    #[serde(rename = "energy_max_MeV")]
    emax: f64,
    points: usize,
    correlation: Vec<Vec<f64>>,
}

fn materials(cmd: &MaterialsCommand) -> Result<ExitCode> {
    let mut inputs = Inputs::default();
    match cmd {
        MaterialsCommand::List { extra } => {
            let reg = registry(&mut inputs, extra)?;
            let list: Vec<MaterialInfo> = reg
                .iter()
                .map(|m| MaterialInfo {
                    name: m.name(),
                    energy_range: m.energy_range(),
                })
                .collect();
            for m in &list {
                match m.energy_range {
                    Some((lo, hi)) => eprintln!("{:<12} {lo} - {hi} MeV", m.name),
                    None => eprintln!("{:<12} analytic", m.name),
                }
            }
            print_json(&list)?;
        }
        MaterialsCommand::Corr {
            materials,
            emin,
            emax,
            points,
            extra,
        } => {
            if !(*emin > 0.0 && emax > emin) || *points < 2 {
                return Err(Error::Usage("need 0 < emin < emax and points >= 2".into()));
            }
            let reg = registry(&mut inputs, extra)?;
            let mats = reg.resolve(materials)?;
            let energies = log_energy_grid(*emin, *emax, *points);
            let corr = collinearity_report(&mats, &energies)?;
            let rows: Vec<Vec<f64>> = corr.row_iter().map(|r| r.iter().copied().collect()).collect();
            for (name, row) in materials.iter().zip(&rows) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:8.5}")).collect();
                eprintln!("{name:<12} {}", cells.join(" "));
            }
            print_json(&CorrelationReport {
                materials: materials.clone(),
                emin: *emin,
                emax: *emax,
                points: *points,
                correlation: rows,
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    materials: &'a [String],
    #[serde(rename = "x_g_per_cm2")]
    x: &'a [f64],
    b: &'a [f64],
    tau: f64,
}

fn simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let mut inputs = Inputs::default();
    let scenario = args.model.scenario(&mut inputs)?;
    let model = scenario.model(&args.materials)?;
    let b = intensities(&args.b, &args.model)?;
    let params = ModelParams::new(args.x.clone(), b.clone(), args.tau)?;
    let spectrum = simulate_spectrum(&model, &params, args.seed)?;
    let csv = io::spectrum_to_csv(&spectrum);
    match &args.out {
        Some(path) => {
            write_file(path, &csv)?;
            eprintln!("{} counts over {} channels", spectrum.total(), spectrum.len());
            let config = SimulateConfig {
                materials: &args.materials,
                x: &args.x,
                b: &b,
                tau: args.tau,
            };
            print_json(&inputs.manifest("simulate", config, Some(args.seed)))?;
        }
        None => write_stdout(&csv)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn fit(args: &FitArgs) -> Result<ExitCode> {
    let input = &args.input;
    let mut inputs = Inputs::default();
    let scenario = input.model.scenario(&mut inputs)?;
    let model = scenario.model(&input.materials)?;
    let spectrum = io::parse_spectrum_csv(&inputs.read(&input.spectrum)?)?;
    let null = fit_null_em(&model, &spectrum, input.tau, &input.em())?;
    let result = if args.full {
        fit_full(&model, &spectrum, input.tau, null.converged.then_some(&null), &input.full(args.free))?
    } else {
        null
    };
    eprintln!(
        "{} fit: log likelihood {:.6}, {} iterations, {}",
        if args.full { "full" } else { "null" },
        result.log_likelihood,
        result.iterations,
        if result.converged { "converged" } else { "NOT converged" }
    );
    print_json(&result)?;
    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn test(args: &TestArgs) -> Result<ExitCode> {
    let input = &args.input;
    let mut inputs = Inputs::default();
    let scenario = input.model.scenario(&mut inputs)?;
    let model = scenario.model(&input.materials)?;
    let spectrum = io::parse_spectrum_csv(&inputs.read(&input.spectrum)?)?;
    let report = run_test(args.method, &model, &spectrum, input.tau, &input.em(), &input.full(args.free))?;
    eprintln!(
        "{:?} statistic {:.4} on {} df, p = {:.4}",
        report.kind, report.statistic, report.df, report.p_value
    );
    print_json(&report)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct StudySidecar<'a> {
    manifest: RunManifest<'a, &'a StudyConfig>,
    result: &'a shieldscan_core::StudyResult,
}

fn study(args: &StudyArgs) -> Result<ExitCode> {
    if args.list {
        for name in preset_names() {
            eprintln!("{name}");
        }
        print_json(&preset_names())?;
        return Ok(ExitCode::SUCCESS);
    }
    let mut inputs = Inputs::default();
    let scenario = args.model.scenario(&mut inputs)?;
    let mut config: StudyConfig = match (&args.preset, &args.config) {
        (Some(name), _) => {
            let method = match args.x50 {
                X50Arg::Empirical => X50Method::Empirical,
                X50Arg::Predicted => X50Method::Predicted,
            };
            let p = preset(&scenario, name, method)?;
            eprintln!("{}: {}", p.name, p.description);
            p.config
        }
        (None, Some(path)) => parse_json(&inputs.read(path)?, path)?,
        (None, None) => return Err(Error::Usage("one of --preset or --config is required".into())),
    };
    if let Some(r) = args.replicates {
        config.replicates = r;
        if config.calibration_replicates.is_some() {
            config.calibration_replicates = Some(r);
        }
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    let result = run_study(&scenario, &config)?;
    for p in &result.points {
        let corrected = p
            .corrected_rate
            .map(|r| format!(", corrected {r:.4}"))
            .unwrap_or_default();
        eprintln!(
            "grid {:>2} x {:?} presumed {:<16} rate {:.4} (se {:.4}, {} failures){corrected}",
            p.grid_index,
            p.x,
            p.presumed.join("+"),
            p.rate,
            p.se,
            p.failures
        );
    }
    let csv = io::study_to_csv(&result);
    let seed = config.seed;
    let manifest = inputs.manifest("study", &config, Some(seed));
    match &args.out {
        Some(path) => {
            write_file(path, &csv)?;
            let sidecar = path.with_extension("json");
            let text = serde_json::to_string_pretty(&StudySidecar {
                manifest,
                result: &result,
            })
            .map_err(|e| Error::Evaluation(e.to_string()))?;
            write_file(&sidecar, &text)?;
            eprintln!("wrote {} and {}", path.display(), sidecar.display());
            print_json(&serde_json::json!({
                "csv": path,
                "sidecar": sidecar,
                "points": result.points.len(),
            }))?;
        }
        None => write_stdout(&csv)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn a1check(args: &A1Args) -> Result<ExitCode> {
    let mut inputs = Inputs::default();
    let scenario = args.model.scenario(&mut inputs)?;
    let model = scenario.model(&args.materials)?;
    let b = intensities(&args.b, &args.model)?;
    let params = ModelParams::unshielded(args.materials.len(), b, args.tau)?;
    let report = check_a1(&model, &params, args.rtol)?;
    eprintln!(
        "rank {} of {} vectors, smallest mean {:.3e}: {}",
        report.rank,
        report.n_vectors,
        report.min_mean,
        if report.passed { "identifiable" } else { "NOT identifiable" }
    );
    print_json(&report)?;
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Drf(c) => drf(c),
        Command::Materials(c) => materials(c),
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Test(a) => test(a),
        Command::Study(a) => study(a),
        Command::A1check(a) => a1check(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SHIELDSCAN_LOG")
        .init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_statistical() { 1 } else { 2 })
        }
    }
}
