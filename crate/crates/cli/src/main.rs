//! `evflow`: encode events, predict and evaluate normal flow, benchmark the
//! encoder and render flow fields.

mod commands;
mod exit;
mod input;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use exit::{Failure, CONFIG};
use settings::Settings;

#[derive(Parser, Debug)]
#[command(
    name = "evflow",
    version,
    about = "Per-event normal flow from pooled random Fourier features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write per-event embeddings (VKME)
    Encode(Common),
    /// Predict normal flow for queried events (CSV)
    Predict(Common),
    /// Score predictions against a ground-truth flow map
    Eval(Common),
    /// Time the encoder stages and fit the runtime model
    Bench(Common),
    /// Render predictions as a PPM image
    Render(Common),
    /// Generate a synthetic event file with ground truth
    Synth(Common),
    /// Train a flow head on events with ground truth (VKMW)
    Train(Common),
}

/// Flags shared by every command. Each overrides the matching key of the
/// `--config` file; `--set` reaches any other key.
#[derive(Args, Debug, Default)]
struct Common {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named encoder recipe, e.g. 640x480_32ms_C64_k8
    #[arg(long)]
    preset: Option<String>,
    /// Event file (.csv, or .evn/.bin binary)
    #[arg(long)]
    events: Option<String>,
    /// Flow head weights (VKMW)
    #[arg(long)]
    weights: Option<String>,
    /// Ground-truth flow map (FLW1)
    #[arg(long)]
    gt: Option<String>,
    /// Output path; stdout for text outputs when omitted
    #[arg(long)]
    out: Option<String>,
    /// Prediction CSV
    #[arg(long)]
    predictions: Option<String>,
    /// Worker threads
    #[arg(long)]
    threads: Option<String>,
    /// f32 or f64
    #[arg(long)]
    precision: Option<String>,
    /// Seconds between slice starts
    #[arg(long)]
    stride: Option<String>,
    /// all, every-K or random-M (per slice)
    #[arg(long)]
    queries: Option<String>,
    /// positive, negative or both
    #[arg(long)]
    polarity: Option<String>,
    /// Any config key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Settings, Failure> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let mut flags = Settings::default();
        let named = [
            ("preset", &self.preset),
            ("events", &self.events),
            ("weights", &self.weights),
            ("gt", &self.gt),
            ("out", &self.out),
            ("predictions", &self.predictions),
            ("threads", &self.threads),
            ("precision", &self.precision),
            ("stride", &self.stride),
            ("queries", &self.queries),
            ("polarity", &self.polarity),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                flags.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Failure::new(CONFIG, format!("--set expects KEY=VALUE, got {kv:?}"))
            })?;
            flags.set(k.trim(), v.trim())?;
        }
        s.overlay(&flags);
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, common) = match &cli.command {
        Command::Encode(c) => ("encode", c),
        Command::Predict(c) => ("predict", c),
        Command::Eval(c) => ("eval", c),
        Command::Bench(c) => ("bench", c),
        Command::Render(c) => ("render", c),
        Command::Synth(c) => ("synth", c),
        Command::Train(c) => ("train", c),
    };
    let settings = common.settings()?;
    if let Some(n) = settings.parsed::<usize>("threads")? {
        if n == 0 {
            return Err(Failure::new(CONFIG, "threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(CONFIG, format!("cannot start {n} threads: {e}")))?;
    }
    let ctx = commands::Context::new(name, settings);
    match cli.command {
        Command::Encode(_) => commands::encode::run(&ctx),
        Command::Predict(_) => commands::predict::run(&ctx),
        Command::Eval(_) => commands::eval::run(&ctx),
        Command::Bench(_) => commands::bench::run(&ctx),
        Command::Render(_) => commands::render::run(&ctx),
        Command::Synth(_) => commands::synth::run(&ctx),
        Command::Train(_) => commands::train::run(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
