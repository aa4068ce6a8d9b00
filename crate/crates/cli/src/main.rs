//! `xfactor`: batch front end for the fall-detection pipeline.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Common, InjectOpts, Input, Model, Pipeline, SynthOpts};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Compute(#[from] xfactor_core::Error),
    #[error("cannot write output {0}")]
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "xfactor", version, about = "Fall detection from normal activity data with X-Factor HMMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter, window and frame raw streams into a feature CSV
    Extract {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Select the covariance inflation factor on all subjects and write the trace
    Tune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        pipeline: Pipeline,
        #[command(flatten)]
        model: Model,
    },
    /// Train detectors on all subjects and serialize them
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        pipeline: Pipeline,
        #[command(flatten)]
        model: Model,
    },
    /// Leave-one-subject-out evaluation
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        pipeline: Pipeline,
        #[command(flatten)]
        model: Model,
    },
    /// Supervised performance against the number of training falls
    Inject {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        pipeline: Pipeline,
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        inject: InjectOpts,
    },
    /// Fraction of proxy outliers that a supervised model calls falls
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        pipeline: Pipeline,
        #[command(flatten)]
        model: Model,
    },
    /// Generate a synthetic feature dataset
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthOpts,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
