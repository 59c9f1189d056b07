use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use happimeter_core::forest::Target;
use happimeter_core::sim::{CohortSpec, PlantedRule};
use happimeter_server::app::App;
use happimeter_server::config::Config;
use happimeter_server::csvio::read_bundle;
use happimeter_server::http;

use crate::reports::{self, Inputs, Report};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "happimeter", version, about = "Mood sensing from wearable data: cohort simulator, batch reports and API server")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort bundle with a planted mood rule.
    Simulate(SimulateArgs),
    /// Train general and individual models; writes models/*.json.
    Train(PipelineArgs),
    /// Cross-validate models; writes table4.csv and evaluation.json.
    Evaluate(PipelineArgs),
    /// Feature importance of the general models; writes fig7.csv and fig8.csv.
    Importance(ImportanceArgs),
    /// Correlation table of moods, sensors and traits; writes table3.csv.
    Correlate(PipelineArgs),
    /// Friend influence ranking; writes influence.csv.
    Influence(PipelineArgs),
    /// Every report and model at once.
    Report(ImportanceArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// RNG seed for the cohort.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of participants.
    #[arg(long, default_value_t = 20)]
    pub users: usize,
    /// Days of data per participant.
    #[arg(long, default_value_t = 30)]
    pub days: usize,
    /// Probability that a reported mood cell is replaced by another one.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Planted mood rule id.
    #[arg(long, default_value = "weather-hour")]
    pub rule: String,
    /// Output directory for the bundle and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Bundle directory (sensors.csv, moods.csv, weather.csv, profiles.csv, optional friends.csv).
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for report files.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// TOML config file; built-in defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the forest seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// pleasance, activation, mood_state or all.
    #[arg(long, default_value = "all")]
    pub target: String,
    /// Worker threads for training (default: all cores). Output is identical for any value.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Divide importances by their total so they sum to 1.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML config file; built-in defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Listen port; overrides the config.
    #[arg(long)]
    pub port: Option<u16>,
    /// Bundle directory imported into the store before serving.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

pub fn parse_targets(s: &str) -> Result<Vec<Target>, CliError> {
    if s == "all" {
        return Ok(Target::ALL.to_vec());
    }
    s.split(',')
        .map(|t| {
            Target::parse(t.trim()).ok_or_else(|| {
                CliError::Invalid(format!("unknown target `{t}` (expected pleasance, activation, mood_state or all)"))
            })
        })
        .collect()
}

impl PipelineArgs {
    pub fn effective_config(&self) -> Result<Config, CliError> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.forest.seed = s;
        }
        if let Some(k) = self.folds {
            cfg.folds = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn prepare(&self) -> Result<(Inputs, Vec<Target>), CliError> {
        let targets = parse_targets(&self.target)?;
        let cfg = self.effective_config()?;
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
        let inputs = Inputs::load(&self.input, cfg)?;
        for (reason, n) in inputs.joined.drop_counts() {
            log::warn!("{n} mood inputs dropped: {reason}");
        }
        Ok((inputs, targets))
    }
}

fn emit(out: &Path, reports: &[Report]) -> Result<(), CliError> {
    reports::write_reports(out, reports)?;
    for r in reports {
        println!("wrote {}", out.join(&r.name).display());
    }
    Ok(())
}

fn warn_absent(absent: &[String]) {
    if !absent.is_empty() {
        log::warn!("constant or missing columns marked absent in table3.csv: {}", absent.join(", "));
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let rule = PlantedRule::parse(&a.rule)?;
            let mut spec = CohortSpec::new(a.seed, a.users, a.days, a.noise);
            spec.rule = rule;
            let cohort = reports::simulate_to(&spec, &a.out)?;
            let m = &cohort.manifest;
            println!(
                "simulated {} users x {} days: {} sensor samples, {} moods ({} flipped) -> {}",
                m.n_users,
                m.n_days,
                m.n_sensor_samples,
                m.n_moods,
                m.n_flipped,
                a.out.display()
            );
            Ok(())
        }
        Command::Train(a) => {
            let (inp, targets) = a.prepare()?;
            let general = reports::train_general(&inp, &targets)?;
            emit(&a.out, &reports::model_files(&inp, &targets, &general)?)
        }
        Command::Evaluate(a) => {
            let (inp, targets) = a.prepare()?;
            let ev = reports::evaluate(&inp, &targets)?;
            for g in &ev.general {
                println!("{} general: accuracy {:.4} kappa {:.4}", g.target.as_str(), g.accuracy, g.kappa);
            }
            emit(&a.out, &[reports::table4(&inp, &ev)?, reports::evaluation_json(&inp, &ev)?])
        }
        Command::Importance(a) => {
            let (inp, targets) = a.pipeline.prepare()?;
            let general = reports::train_general(&inp, &targets)?;
            let (fig7, fig8) = reports::importance(&inp, &general, a.normalize)?;
            emit(&a.pipeline.out, &[fig7, fig8])
        }
        Command::Correlate(a) => {
            let (inp, _) = a.prepare()?;
            let (t3, absent) = reports::table3(&inp)?;
            warn_absent(&absent);
            emit(&a.out, &[t3])
        }
        Command::Influence(a) => {
            let (inp, _) = a.prepare()?;
            emit(&a.out, &[reports::influence(&inp)?])
        }
        Command::Report(a) => {
            let (inp, targets) = a.pipeline.prepare()?;
            let (all, absent) = reports::full_report(&inp, &targets, a.normalize)?;
            warn_absent(&absent);
            emit(&a.pipeline.out, &all)
        }
        Command::Serve(a) => serve(a),
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    let port = cfg.port;
    let bundle = a.input.as_deref().map(read_bundle).transpose()?;
    let app = App::from_config(cfg).map_err(CliError::Invalid)?;
    if let Some(b) = bundle {
        let s = app.import_bundle(&b).map_err(|e| CliError::Invalid(e.message))?;
        log::info!("imported {} moods, {} sensor samples, {} profiles", s.moods, s.sensors, s.profiles);
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(http::serve(Arc::new(app), port)).map_err(|e| CliError::Io(format!("server: {e}")))
}
