//! `substrace ingest|analyze|simulate|fit|serve`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Failures print one
//! JSON line `{"error": code, "message": text}` on stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use substrace::dataset::{Dataset, DAILY_STATS_FILE, PROJECTS_FILE, SOCIAL_FILE, TRANSFERS_FILE};
use substrace::growthfit::{fit, holder_curve, FitError, GrowthFit, GrowthModel};
use substrace::simulator::{simulate, SimConfig};

use crate::analysis::{AnalysisRequest, WindowSpec};
use crate::error::{ApiError, ErrorBody};
use crate::http::{serve, AppState};
use crate::snapshot::{Manifest, Snapshot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const DATA_ENV: &str = "SUBSTRACE_DATA";

#[derive(Debug, Parser)]
#[command(name = "substrace", version, about = "Substitution analytics for NFT project markets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a data directory and write its manifest.
    Ingest(IngestArgs),
    /// Run one analysis and write the response JSON.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic market.
    Simulate(SimulateArgs),
    /// Fit growth models to every project's cumulative holder curve.
    Fit(FitArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Data directory.
    #[arg(long, env = DATA_ENV)]
    pub data: Option<PathBuf>,
}

impl DataArg {
    fn dir(&self) -> Result<&Path, Failure> {
        self.data
            .as_deref()
            .ok_or_else(|| Failure::usage(format!("no data directory: pass --data or set {DATA_ENV}")))
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory holding the CSV files.
    pub dir: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArg,
    /// Copy the files here and index them there instead of in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// `YYYY-MM-DD:YYYY-MM-DD`; defaults to the data span.
    #[arg(long)]
    pub window: Option<String>,
    /// Comma-separated attribute names; defaults to all.
    #[arg(long)]
    pub attrs: Option<String>,
    #[arg(long, default_value = "kmeans")]
    pub method: String,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub edge_threshold: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `key = value` config file; a desk-scale market when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the default config.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// bass, ms, gompertz or all.
    #[arg(long, default_value = "all")]
    pub model: String,
    /// Last day of the curves; defaults to the end of the data span.
    #[arg(long)]
    pub until: Option<NaiveDate>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub body: ErrorBody,
}

impl Failure {
    fn usage(message: String) -> Self {
        Self {
            code: EXIT_USAGE,
            body: ErrorBody {
                error: "UsageError".into(),
                message,
            },
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ApiError::DataError(format!("{}: {e}", path.display())).into()
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Self {
            code: if e.is_usage() { EXIT_USAGE } else { EXIT_DATA },
            body: e.body(),
        }
    }
}

fn data_error(e: impl std::fmt::Display) -> Failure {
    ApiError::DataError(e.to_string()).into()
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return EXIT_OK;
            }
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return report(Failure::usage(first), stderr);
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => report(f, stderr),
    }
}

fn report(failure: Failure, stderr: &mut dyn Write) -> i32 {
    let line = serde_json::to_string(&failure.body).expect("error body serializes");
    let _ = writeln!(stderr, "{line}");
    failure.code
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Ingest(a) => ingest(a, stdout),
        Command::Analyze(a) => analyze(a, stdout),
        Command::Simulate(a) => simulate_cmd(a, stdout),
        Command::Fit(a) => fit_cmd(a, stdout, stderr),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Failure::io(path, e)),
        None => stdout.write_all(bytes).map_err(data_error),
    }
}

fn ingest(args: IngestArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let source = match &args.dir {
        Some(d) => d.as_path(),
        None => args.data.dir()?,
    };
    if !source.join(PROJECTS_FILE).exists() {
        return Err(ApiError::DataError(format!("{} has no {PROJECTS_FILE}", source.display())).into());
    }
    let dataset = Dataset::load(source).map_err(ApiError::from)?;
    let target = match &args.out {
        Some(out) => {
            std::fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
            for name in [PROJECTS_FILE, TRANSFERS_FILE, DAILY_STATS_FILE, SOCIAL_FILE] {
                let from = source.join(name);
                if from.exists() {
                    std::fs::copy(&from, out.join(name)).map_err(|e| Failure::io(&from, e))?;
                }
            }
            out.as_path()
        }
        None => source,
    };
    let manifest = Manifest::build(target, &dataset)?;
    manifest.write(target)?;
    let mut text = serde_json::to_string(&manifest).expect("manifest serializes");
    text.push('\n');
    write_output(None, text.as_bytes(), stdout)
}

fn analyze(args: AnalyzeArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let request = AnalysisRequest {
        window: args.window.map(WindowSpec::Text),
        attributes: args
            .attrs
            .map(|list| list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
        method: args.method,
        k: args.k,
        seed: args.seed,
        edge_threshold: args.edge_threshold,
    };
    let valid = request.validate()?;
    let dir = args.data.dir()?;
    let snapshot = Snapshot::load(dir).map_err(|e| match e {
        ApiError::ServiceNotReady => ApiError::DataError(format!("{} has no {PROJECTS_FILE}", dir.display())),
        other => other,
    })?;
    let body = snapshot.analysis_body(&valid)?;
    write_output(args.out.as_deref(), &body, stdout)
}

fn simulate_cmd(args: SimulateArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            SimConfig::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => SimConfig::desk_scale(args.seed),
    };
    let run = simulate(&config).map_err(|e| Failure::usage(e.to_string()))?;
    run.write_to(&args.out).map_err(data_error)?;
    let migrants: u64 = run.ground_truth.migrations.iter().map(|m| m.migrants as u64).sum();
    let summary = serde_json::json!({
        "out": args.out.display().to_string(),
        "projects": run.projects.len(),
        "transfers": run.transfers.len(),
        "migrants": migrants,
    });
    writeln!(stdout, "{summary}").map_err(data_error)
}

pub const FIT_HEADER: &str = "project,model,param1,param2,param3,r_squared,converged";

fn fit_row(project: &str, f: &GrowthFit) -> String {
    let mut cells = vec![project.to_string(), f.model.to_string()];
    for i in 0..3 {
        cells.push(f.params.get(i).map(|p| p.to_string()).unwrap_or_default());
    }
    cells.push(f.r_squared.to_string());
    cells.push(f.converged.to_string());
    cells.join(",")
}

fn fit_cmd(args: FitArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let models: Vec<GrowthModel> = if args.model.eq_ignore_ascii_case("all") {
        GrowthModel::ALL.to_vec()
    } else {
        vec![args
            .model
            .parse()
            .map_err(|_| Failure::usage(format!("unknown model {:?}", args.model)))?]
    };
    let dir = args.data.dir()?;
    let dataset = Dataset::load(dir).map_err(ApiError::from)?;
    let until = match args.until.or_else(|| dataset.span().map(|s| s.end)) {
        Some(d) => d,
        None => return Err(ApiError::EmptyWindow("the dataset has no days".into()).into()),
    };
    let mut out = String::from(FIT_HEADER);
    out.push('\n');
    for project in dataset.projects() {
        let curve = match holder_curve(&dataset, &project.id, until) {
            Ok(c) => c,
            Err(e) => {
                skip(stderr, &project.id.to_string(), None, &e);
                continue;
            }
        };
        for &model in &models {
            match fit(&curve, model, None, args.seed) {
                Ok(f) => out.push_str(&fit_row(project.id.as_str(), &f)),
                Err(FitError::NonIdentifiable { fit }) => out.push_str(&fit_row(project.id.as_str(), &fit)),
                Err(e) => {
                    skip(stderr, project.id.as_str(), Some(model), &e);
                    continue;
                }
            }
            out.push('\n');
        }
    }
    write_output(args.out.as_deref(), out.as_bytes(), stdout)
}

/// Projects that cannot be fitted are reported and left out of the table.
fn skip(stderr: &mut dyn Write, project: &str, model: Option<GrowthModel>, e: &FitError) {
    let line = serde_json::json!({
        "warning": "Skipped",
        "project": project,
        "model": model.map(|m| m.to_string()),
        "message": e.to_string(),
    });
    let _ = writeln!(stderr, "{line}");
}

fn serve_cmd(args: ServeArgs) -> Result<(), Failure> {
    let snapshot = match args.data.data.as_deref() {
        Some(dir) => match Snapshot::load(dir) {
            Ok(s) => Some(s),
            Err(ApiError::ServiceNotReady) => None,
            Err(e) => return Err(e.into()),
        },
        None => None,
    };
    let state = Arc::new(AppState::new(snapshot, args.data.data.clone()));
    let runtime = tokio::runtime::Runtime::new().map_err(data_error)?;
    runtime.block_on(serve(state, &args.host, args.port)).map_err(data_error)
}
