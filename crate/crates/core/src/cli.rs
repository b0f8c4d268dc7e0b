//! Command-line interface. `run` parses arguments, executes one command and
//! returns the process exit code:
//!
//! * 0: success (including fits that stop without converging)
//! * 2: invalid input, schema or validation error
//! * 3: join or consistency error
//! * 4: internal error

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{fit, FitResult};
use crate::inference::{Perturbation, Predictor};
use crate::io::{self, FeatureRow, Reject};
use crate::kinematics::volatility_indices;
use crate::manifest::RunManifest;
use crate::model::{AttributeTable, ChoiceDataset, ModelSpec};
use crate::outcome::Outcome;
use crate::repro::with_threads;
use crate::synthetic::{self, GeneratorConfig, TraceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONSISTENCY: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "volatix", version, about = "Driving-volatility features and crash-propensity choice models")]
pub struct Cli {
    /// Master seed; overrides the seed in spec and config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute volatility indices from raw traces.
    Featurize(FeaturizeArgs),
    /// Estimate a model.
    Fit(FitArgs),
    /// Average marginal effects.
    Effects(ReportArgs),
    /// Mean simulated probabilities over a covariate grid.
    Curve(CurveArgs),
    /// Outcome-share forecasts under covariate perturbations.
    Simulate(SimulateArgs),
    /// Generate synthetic data.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub traces: PathBuf,
    /// Sidecar with reaction/impact times.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.rejects.csv`.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Feature CSV from `featurize`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Event attribute CSV (outcome and covariates).
    #[arg(long)]
    pub attributes: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// FitResult JSON from `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use a fit that did not converge.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub report: ReportArgs,
    #[arg(long)]
    pub covariate: String,
    /// Explicit comma-separated grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["from", "to", "points"])]
    pub grid: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true, requires_all = ["to", "points"])]
    pub from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    /// 10–50% decreases in steps of 10, then 1 and 2 SD decreases.
    Paper,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub report: ReportArgs,
    /// Covariate to perturb; repeat for several.
    #[arg(long, required = true)]
    pub covariate: Vec<String>,
    /// Utility in which the covariate is changed.
    #[arg(long, default_value = "crash")]
    pub target: String,
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
    /// Percent decrease; repeatable.
    #[arg(long)]
    pub percent: Vec<f64>,
    /// Decrease by this many sample SDs; repeatable.
    #[arg(long)]
    pub sd: Vec<f64>,
    /// Event count used to turn shares into predicted counts.
    #[arg(long)]
    pub denominator: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Choice data drawn from a model (attribute CSV with outcomes).
    Choice {
        /// GeneratorConfig JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Kinematic traces plus reaction/impact sidecar.
    Traces {
        /// TraceConfig JSON; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        events: PathBuf,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Join { .. } | Error::NotFitted => EXIT_CONSISTENCY,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&raw) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let arguments: Vec<String> = raw.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        with_threads(cli.threads, || execute(&cli, arguments))
    }));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            EXIT_INTERNAL
        }
    }
}

fn execute(cli: &Cli, arguments: Vec<String>) -> Result<()> {
    match &cli.command {
        Command::Featurize(a) => featurize(cli, a, arguments),
        Command::Fit(a) => cmd_fit(cli, a, arguments),
        Command::Effects(a) => effects(cli, a, arguments),
        Command::Curve(a) => curve(cli, a, arguments),
        Command::Simulate(a) => simulate(cli, a, arguments),
        Command::Synth(s) => synth(cli, s, arguments),
    }
}

fn featurize(cli: &Cli, a: &FeaturizeArgs, arguments: Vec<String>) -> Result<()> {
    let mut m = RunManifest::new("featurize", cli.seed);
    m.arguments = arguments;
    m.add_input(&a.traces)?;
    let text = fs::read(&a.traces)?;
    let set = if text.iter().all(u8::is_ascii_whitespace) {
        log::warn!("trace file {} is empty", a.traces.display());
        io::TraceSet::default()
    } else {
        let events = match &a.events {
            Some(p) => {
                m.add_input(p)?;
                Some(fs::read(p)?)
            }
            None => None,
        };
        io::read_traces(&text[..], events.as_deref())?
    };
    let computed: Vec<std::result::Result<FeatureRow, Reject>> = set
        .traces
        .par_iter()
        .map(|t| match volatility_indices(t) {
            Ok(features) => Ok(FeatureRow {
                event_id: t.event_id.clone(),
                event_type: t.event_type,
                features,
            }),
            Err(e) => Err(Reject {
                event_id: t.event_id.clone(),
                reason: e.to_string(),
            }),
        })
        .collect();
    let mut rows = Vec::new();
    let mut rejects = set.rejects;
    for c in computed {
        match c {
            Ok(r) => rows.push(r),
            Err(r) => rejects.push(r),
        }
    }
    let rejects_path = a.rejects.clone().unwrap_or_else(|| sibling(&a.out, "rejects.csv"));
    io::write_features(fs::File::create(&a.out)?, &rows)?;
    io::write_rejects(fs::File::create(&rejects_path)?, &rejects)?;
    if !rejects.is_empty() {
        log::warn!("{} events rejected; see {}", rejects.len(), rejects_path.display());
    }
    m.add_output(&a.out);
    m.add_output(&rejects_path);
    m.write_next_to(&a.out)?;
    eprintln!("{} feature rows, {} rejects", rows.len(), rejects.len());
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

fn load_table(d: &DataArgs, m: &mut RunManifest) -> Result<AttributeTable> {
    m.add_input(&d.attributes)?;
    let attrs_bytes = fs::read(&d.attributes)?;
    match &d.features {
        Some(f) => {
            m.add_input(f)?;
            let features = io::read_features(fs::File::open(f)?)?;
            let fallback: HashMap<String, Outcome> =
                features.iter().map(|r| (r.event_id.clone(), r.event_type)).collect();
            let attrs = io::read_attributes(&attrs_bytes[..], Some(&fallback))?;
            io::join_features(&features, &attrs)
        }
        None => io::read_attributes(&attrs_bytes[..], None),
    }
}

fn load_spec(cli: &Cli, path: &Path) -> Result<ModelSpec> {
    let mut spec = ModelSpec::from_json(&fs::read_to_string(path)?)?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn cmd_fit(cli: &Cli, a: &FitArgs, arguments: Vec<String>) -> Result<()> {
    let spec = load_spec(cli, &a.spec)?;
    let mut m = RunManifest::new("fit", Some(spec.seed));
    m.arguments = arguments;
    m.spec = Some(a.spec.display().to_string());
    m.add_input(&a.spec)?;
    let table = load_table(&a.data, &mut m)?;
    let data = ChoiceDataset::from_table(&table, &spec)?;
    let result = fit(&spec, &data)?;
    fs::write(&a.out, result.to_json()? + "\n")?;
    m.add_output(&a.out);
    m.write_next_to(&a.out)?;
    print!("{}", result.summary());
    for w in &result.warnings {
        log::warn!("{w}");
    }
    Ok(())
}

fn load_fit(cli: &Cli, r: &ReportArgs, m: &mut RunManifest) -> Result<(FitResult, ChoiceDataset)> {
    m.add_input(&r.fit)?;
    let mut fit = FitResult::from_json(&fs::read_to_string(&r.fit)?)?;
    if let Some(s) = cli.seed {
        fit.spec.seed = s;
    }
    m.seed = Some(fit.spec.seed);
    let table = load_table(&r.data, m)?;
    let data = ChoiceDataset::from_table(&table, &fit.spec)?;
    Ok((fit, data))
}

fn emit(out: Option<&Path>, text: &str, mut m: RunManifest) -> Result<()> {
    match out {
        Some(p) => {
            fs::write(p, text)?;
            m.add_output(p);
            m.write_next_to(p)?;
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn effects(cli: &Cli, r: &ReportArgs, arguments: Vec<String>) -> Result<()> {
    let mut m = RunManifest::new("effects", None);
    m.arguments = arguments;
    let (fit, data) = load_fit(cli, r, &mut m)?;
    let table = Predictor::new(&fit, &data, r.force)?.marginal_effects();
    let text = match cli.format {
        Format::Csv => table.to_csv()?,
        Format::Json => json(&table)?,
    };
    emit(r.out.as_deref(), &text, m)
}

fn curve(cli: &Cli, a: &CurveArgs, arguments: Vec<String>) -> Result<()> {
    let mut m = RunManifest::new("curve", None);
    m.arguments = arguments;
    let grid = match (&a.grid, a.from, a.to, a.points) {
        (Some(g), ..) => g.clone(),
        (None, Some(from), Some(to), Some(points)) => linspace(from, to, points)?,
        _ => return Err(Error::param("give --grid, or --from, --to and --points")),
    };
    let (fit, data) = load_fit(cli, &a.report, &mut m)?;
    let pred = Predictor::new(&fit, &data, a.report.force)?;
    let c = pred.probability_curve(&a.covariate, &grid)?;
    for w in &c.warnings {
        log::warn!("{w}");
    }
    let text = match cli.format {
        Format::Csv => c.to_csv()?,
        Format::Json => json(&c)?,
    };
    emit(a.report.out.as_deref(), &text, m)
}

pub fn linspace(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !from.is_finite() || !to.is_finite() {
        return Err(Error::param("grid needs finite bounds and at least one point"));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let step = (to - from) / (points - 1) as f64;
    Ok((0..points).map(|k| if k + 1 == points { to } else { from + step * k as f64 }).collect())
}

fn simulate(cli: &Cli, a: &SimulateArgs, arguments: Vec<String>) -> Result<()> {
    let mut m = RunManifest::new("simulate", None);
    m.arguments = arguments;
    let target: Outcome = a.target.parse().map_err(Error::InvalidScenario)?;
    let (fit, data) = load_fit(cli, &a.report, &mut m)?;
    let pred = Predictor::new(&fit, &data, a.report.force)?;
    let names = data.attribute_names();
    let mut perturbations = Vec::new();
    for c in &a.covariate {
        if !names.contains(c) {
            return Err(Error::layout(format!("unknown covariate `{c}`; valid names: {}", names.join(", "))));
        }
        if a.scheme == Some(Scheme::Paper) {
            perturbations.extend(Perturbation::paper_scheme(c, target));
        }
        perturbations.extend(a.percent.iter().map(|&p| Perturbation::percent(c.clone(), p, target)));
        perturbations.extend(a.sd.iter().map(|&k| Perturbation::sd(c.clone(), k, target)));
    }
    if perturbations.is_empty() {
        return Err(Error::InvalidScenario("give --scheme, --percent or --sd".into()));
    }
    let report = pred.scenarios(&perturbations, a.denominator)?;
    let text = match cli.format {
        Format::Csv => report.to_csv()?,
        Format::Json => json(&report)?,
    };
    emit(a.report.out.as_deref(), &text, m)
}

fn synth(cli: &Cli, s: &SynthCommand, arguments: Vec<String>) -> Result<()> {
    match s {
        SynthCommand::Choice { config, out } => {
            let mut cfg: GeneratorConfig = serde_json::from_str(&fs::read_to_string(config)?)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let mut m = RunManifest::new("synth choice", Some(cfg.seed));
            m.arguments = arguments;
            m.add_input(config)?;
            let data = synthetic::generate(&cfg)?;
            io::write_attributes(fs::File::create(out)?, &data.table)?;
            m.add_output(out);
            m.write_next_to(out)?;
            eprintln!("{} events, outcome counts {:?}", data.dataset.len(), data.dataset.outcome_counts());
        }
        SynthCommand::Traces { config, out, events } => {
            let mut m = RunManifest::new("synth traces", None);
            m.arguments = arguments;
            let mut cfg = match config {
                Some(p) => {
                    m.add_input(p)?;
                    serde_json::from_str(&fs::read_to_string(p)?)?
                }
                None => TraceConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            m.seed = Some(cfg.seed);
            let traces = synthetic::generate_traces(&cfg)?;
            io::write_traces(fs::File::create(out)?, &traces)?;
            io::write_event_markers(fs::File::create(events)?, &traces)?;
            m.add_output(out);
            m.add_output(events);
            m.write_next_to(out)?;
            eprintln!("{} traces", traces.len());
        }
    }
    Ok(())
}
