use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use spotvol_core::synth::SynthConfig;

use crate::config::{PipelineConfig, TOGGLES};
use crate::error::{AppError, AppResult};
use crate::fixture::write_fixture;
use crate::pipeline::{ablation_table, metrics_table, Pipeline, RunOptions, Stage, MANIFEST};

#[derive(Debug, Parser)]
#[command(name = "spotvol", version, about = "Realized-volatility forecasting for half-hourly spot prices")]
pub struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Reuse persisted stage outputs whose inputs are unchanged.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Force the offline mock rating provider.
    #[arg(long, global = true)]
    pub offline: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and clean the price panel.
    Ingest,
    /// Daily realized measures.
    Measures,
    /// Weather ratings from the report corpus.
    Rate,
    /// Assemble the feature matrix.
    Features,
    /// Fit every model on the pre-test sample.
    Fit,
    /// Walk-forward forecasts over the test span.
    Backtest,
    /// Error metrics and Diebold–Mariano tests.
    Evaluate,
    /// SVG forecast and heatmap charts.
    Plot,
    /// All stages.
    Run,
    /// Rerun the hybrid model with components disabled.
    Ablate {
        /// Comma-separated toggles; defaults to all of them.
        #[arg(long, value_delimiter = ',')]
        toggles: Option<Vec<String>>,
    },
    /// Write the synthetic fixture (inputs plus config.toml).
    Synth {
        #[arg(long)]
        days: Option<usize>,
    },
}

fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .format_target(false)
        .try_init();
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind().code()
        }
    }
}

fn load_config(cli: &Cli) -> AppResult<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| AppError::Config("--config <path> is required for this command".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> AppResult<()> {
    let stage = match &cli.command {
        Command::Synth { days } => {
            let mut cfg = SynthConfig::default();
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(days) = days {
                cfg.days = *days;
            }
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("fixture"));
            write_fixture(&dir, &cfg)?;
            println!("fixture written to {} (config: {})", dir.display(), dir.join("config.toml").display());
            return Ok(());
        }
        Command::Ablate { toggles } => {
            let cfg = load_config(cli)?;
            let toggles: Vec<String> = match toggles {
                Some(t) => t.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                None => TOGGLES.iter().map(|s| s.to_string()).collect(),
            };
            let mut p = Pipeline::new(cfg, RunOptions { resume: true, offline: cli.offline })?;
            let rows = p.ablate(&toggles)?;
            print!("{}", ablation_table(&rows));
            return Ok(());
        }
        Command::Ingest => Stage::Ingest,
        Command::Measures => Stage::Measures,
        Command::Rate => Stage::Rate,
        Command::Features => Stage::Features,
        Command::Fit => Stage::Fit,
        Command::Backtest => Stage::Backtest,
        Command::Evaluate => Stage::Evaluate,
        Command::Plot | Command::Run => Stage::Plot,
    };
    let cfg = load_config(cli)?;
    let mut p = Pipeline::new(cfg, RunOptions { resume: cli.resume, offline: cli.offline })?;
    p.run_through(stage)?;
    if stage >= Stage::Evaluate {
        let reports: Vec<spotvol_core::evaluation::MetricReport> = crate::io::read_json(&p.out_dir().join("metrics.json"))?;
        print!("{}", metrics_table(&reports));
    }
    println!("manifest: {}", p.out_dir().join(MANIFEST).display());
    Ok(())
}
