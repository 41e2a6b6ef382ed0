//! `rdsense`: batch front end for scenario simulation, RD processing, training,
//! evaluation and figure export.

mod archive;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{parse_protocol, RunConfig, DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV};
use rdsense_core::rdpipe::SpectrogramMode;

/// Exit status of a configuration that was rejected before any work ran.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status of a `--check` assertion that did not hold.
pub const EXIT_CHECK: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rdsense",
    version,
    about = "Wi-Fi range-Doppler sensing: simulate, process, train, evaluate, export figures",
    long_about = "Wi-Fi range-Doppler sensing: simulate, process, train, evaluate, export figures.\n\n\
        Every subcommand reads an optional JSON config (--config) whose keys mirror the \
        effective_config.json echo written to each output directory; flags override the file. \
        Unknown keys are rejected. Outputs go to --out, else the config's output_dir, else \
        $RDSENSE_OUTPUT_ROOT/<subcommand> (default root: rdsense-out).\n\n\
        Exit status: 0 on success, 2 on a rejected config, 3 on a failed --check assertion, \
        1 on any other error."
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (overrides the config and the output root).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Root under which each subcommand writes to `<root>/<subcommand>` when
    /// neither --out nor the config's output_dir is set.
    #[arg(long, global = true, value_name = "DIR", env = OUTPUT_ROOT_ENV, default_value = DEFAULT_OUTPUT_ROOT)]
    output_root: PathBuf,
    /// Worker threads for parallel recordings, CPIs and evaluation batches.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
    /// Verify the outputs after writing them; failures exit with status 3.
    #[arg(long, global = true)]
    check: bool,
    /// Global seed; replaces the split and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a scenario file into a channel-matrix archive with a ground-truth sidecar.
    Simulate {
        /// Scenario JSON.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Synchronize, transform, normalize and segment an archive into a clip store.
    Pipeline {
        /// Channel archive written by `simulate`.
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Also export a velocity spectrogram per recording:
        /// `range_filtered=<metres>` or `off` (all subcarriers). Repeatable.
        #[arg(long, value_name = "MODE")]
        spectrogram: Vec<SpectrogramMode>,
    },
    /// Train the CNN-GRU classifier on a clip store under a split protocol.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Maximum epochs per run.
        #[arg(long)]
        epochs: Option<usize>,
        /// Independent seeded runs; the best on validation is kept.
        #[arg(long)]
        runs: Option<usize>,
        /// AdamW learning rate.
        #[arg(long)]
        lr: Option<f64>,
        /// Mini-batch size.
        #[arg(long)]
        batch: Option<usize>,
        /// Early-stopping patience in epochs.
        #[arg(long)]
        patience: Option<usize>,
        /// Also report the nearest-centroid baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Evaluate a checkpoint on the test part of a split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Model checkpoint written by `train`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Split descriptor (`split.json` of a train run); replaces --protocol.
        #[arg(long, value_name = "FILE")]
        split_file: Option<PathBuf>,
    },
    /// Export one RD map, spectrogram or clip frame as CSV + PGM + JSON.
    ExportFigure {
        /// `rd`, `spectrogram` or `clip`.
        #[arg(long)]
        kind: Option<String>,
        /// Channel archive (rd and spectrogram figures).
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Clip store (clip figures).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Recording name; defaults to the first recording.
        #[arg(long)]
        recording: Option<String>,
        /// Clip index within the store.
        #[arg(long)]
        clip: Option<usize>,
        /// CPI of an RD figure or frame of a clip figure.
        #[arg(long)]
        index: Option<usize>,
        /// Spectrogram mode: `range_filtered=<metres>` or `off`.
        #[arg(long)]
        mode: Option<SpectrogramMode>,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Clip store written by `pipeline`.
    #[arg(long)]
    store: Option<PathBuf>,
    /// `in_domain`, `loo:<user>` or `cross:<A,B>:<C>`.
    #[arg(long)]
    protocol: Option<String>,
}

/// A configuration that failed to parse or validate.
#[derive(Debug)]
pub struct Rejected(pub anyhow::Error);

impl std::fmt::Display for Rejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rejected configuration: {:#}", self.0)
    }
}

impl std::error::Error for Rejected {}

/// A `--check` assertion that failed.
#[derive(Debug)]
pub struct CheckFailed(pub Vec<String>);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "check failed: {}", self.0.join("; "))
    }
}

impl std::error::Error for CheckFailed {}

fn apply_data(cfg: &mut RunConfig, data: DataArgs) -> Result<()> {
    if let Some(s) = data.store {
        cfg.inputs.store = Some(s);
    }
    if let Some(p) = data.protocol {
        cfg.split.protocol = parse_protocol(&p)?;
    }
    Ok(())
}

/// File config, then flag overrides, then validation. Returns the
/// subcommand name with the merged config.
fn build_config(global: &Global, command: Command) -> Result<(&'static str, RunConfig)> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.rng_seed = Some(seed);
    }
    if let Some(out) = &global.out {
        cfg.output_dir = Some(out.clone());
    }
    let name = match command {
        Command::Simulate { scenario } => {
            override_path(&mut cfg.inputs.scenario, scenario);
            "simulate"
        }
        Command::Pipeline { archive, spectrogram } => {
            override_path(&mut cfg.inputs.archive, archive);
            if !spectrogram.is_empty() {
                cfg.spectrogram = spectrogram;
            }
            "pipeline"
        }
        Command::Train {
            data,
            epochs,
            runs,
            lr,
            batch,
            patience,
            baseline,
        } => {
            apply_data(&mut cfg, data)?;
            let t = &mut cfg.train;
            t.max_epochs = epochs.unwrap_or(t.max_epochs);
            t.runs = runs.unwrap_or(t.runs);
            t.learning_rate = lr.unwrap_or(t.learning_rate);
            t.batch_size = batch.unwrap_or(t.batch_size);
            t.patience = patience.unwrap_or(t.patience);
            cfg.baseline |= baseline;
            "train"
        }
        Command::Eval {
            data,
            checkpoint,
            split_file,
        } => {
            apply_data(&mut cfg, data)?;
            override_path(&mut cfg.inputs.checkpoint, checkpoint);
            override_path(&mut cfg.inputs.split, split_file);
            "eval"
        }
        Command::ExportFigure {
            kind,
            archive,
            store,
            recording,
            clip,
            index,
            mode,
        } => {
            let f = &mut cfg.figure;
            f.kind = kind.unwrap_or(std::mem::take(&mut f.kind));
            f.recording = recording.or(f.recording.take());
            f.clip = clip.unwrap_or(f.clip);
            f.index = index.unwrap_or(f.index);
            f.mode = mode.or(f.mode);
            override_path(&mut cfg.inputs.archive, archive);
            override_path(&mut cfg.inputs.store, store);
            "export-figure"
        }
    };
    cfg.resolve_seed();
    cfg.validate()?;
    Ok((name, cfg))
}

fn override_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn run(cli: Cli) -> Result<()> {
    let Cli { global, command } = cli;
    rayon::ThreadPoolBuilder::new()
        .num_threads(usize::from(global.threads))
        .build_global()
        .context("starting the worker pool")?;
    let (cmd, mut cfg) = build_config(&global, command).map_err(|e| anyhow::Error::new(Rejected(e)))?;
    let out = cfg.resolve_output(&global.output_root, cmd);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    cfg.write_echo(&out)?;
    log::info!("{cmd}: writing to {}", out.display());
    let problems = match cmd {
        "simulate" => commands::simulate(&cfg, &out, global.check),
        "pipeline" => commands::pipeline(&cfg, &out, global.check),
        "train" => commands::train(&cfg, &out, global.check),
        "eval" => commands::eval(&cfg, &out, global.check),
        _ => commands::export_figure(&cfg, &out, global.check),
    }?;
    if problems.is_empty() {
        if global.check {
            println!("check passed");
        }
        Ok(())
    } else {
        Err(CheckFailed(problems).into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Rejected>() {
                ExitCode::from(EXIT_CONFIG)
            } else if e.is::<CheckFailed>() {
                ExitCode::from(EXIT_CHECK)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
