use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use secbw::gnn::TrainMode;
use secbw::harness::{self, ExperimentConfig, Paths};
use secbw::Error;

#[derive(Parser)]
#[command(name = "secbw", version, about = "Secrecy-constrained uplink bandwidth allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Use the full-size training set.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long)]
    model_sl: Option<PathBuf>,
    #[arg(long)]
    model_usl: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training and test datasets.
    GenData(Common),
    /// Train the graph network (both modes unless --mode is given).
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<TrainMode>,
    },
    /// Compare all allocators on the test set.
    Evaluate(Common),
    /// Sweep the iterative-search block size.
    SweepDw(Common),
    /// Sweep the eavesdropper CSI error.
    SweepUncertainty(Common),
    /// Check datasets, checkpoints and allocator feasibility.
    Validate(Common),
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Format { what: "config", .. } | Error::InvalidParam(_) | Error::UnknownPolicy(_) => (2, "config"),
            Error::Io(_) => (3, "io"),
            Error::Format { what: "dataset", .. } | Error::MissingLabels => (4, "data"),
            Error::Format { what: "checkpoint", .. } | Error::ShapeMismatch(_) => (5, "checkpoint"),
            _ => (1, "internal"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn setup(c: &Common) -> Result<(ExperimentConfig, Paths), Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if c.full_scale {
        cfg = cfg.full_scale();
    }
    cfg.validate()?;
    let paths = Paths {
        out_dir: c.out.clone().unwrap_or_else(|| cfg.output_dir.clone()),
        train_data: c.train_data.clone(),
        test_data: c.test_data.clone(),
        model_sl: c.model_sl.clone(),
        model_usl: c.model_usl.clone(),
    };
    Ok((cfg, paths))
}

fn print<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: 1,
        kind: "internal",
        message: e.to_string(),
    })?;
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData(c) => {
            let (cfg, paths) = setup(&c)?;
            print(&harness::gen_data(&cfg, &paths)?)
        }
        Command::Train { common, mode } => {
            let (cfg, paths) = setup(&common)?;
            let modes = match mode {
                Some(m) => vec![m],
                None => vec![TrainMode::Sl, TrainMode::Usl],
            };
            print(&harness::train_models(&cfg, &paths, &modes)?)
        }
        Command::Evaluate(c) => {
            let (cfg, paths) = setup(&c)?;
            print(&harness::evaluate(&cfg, &paths)?)
        }
        Command::SweepDw(c) => {
            let (cfg, paths) = setup(&c)?;
            print(&harness::sweep_dw(&cfg, &paths)?)
        }
        Command::SweepUncertainty(c) => {
            let (cfg, paths) = setup(&c)?;
            print(&harness::sweep_uncertainty(&cfg, &paths)?)
        }
        Command::Validate(c) => {
            let (cfg, paths) = setup(&c)?;
            let report = harness::validate(&cfg, &paths)?;
            print(&report)?;
            if report.ok() {
                Ok(())
            } else {
                Err(Failure {
                    code: 6,
                    kind: "validation",
                    message: format!("{} issue(s) found", report.issues.len()),
                })
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({ "error": f.kind, "message": f.message, "exit_code": f.code });
            eprintln!("{line}");
            ExitCode::from(f.code)
        }
    }
}
