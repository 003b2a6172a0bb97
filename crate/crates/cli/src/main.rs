mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Common, PartialFailure};
use driftctl::{Error, Scheme};

const EXIT_CONFIG: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "driftctl", version, about = "Drift tracking, correction and Ramsey linewidth simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel stages; 1 runs sequentially
    #[arg(long)]
    parallel: Option<usize>,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common { config: a.config, out: a.out, seed: a.seed, parallel: a.parallel }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Feedback,
    Feedforward,
    Ideal,
    Open,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Feedback => Scheme::Feedback,
            SchemeArg::Feedforward => Scheme::Feedforward,
            SchemeArg::Ideal => Scheme::IdealFeedback,
            SchemeArg::Open => Scheme::OpenLoop,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the drift trace
    Generate(CommonArgs),
    /// Run the configured tracker over the trace
    Track(CommonArgs),
    /// Closed-loop correction of the trace
    Loop {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Saved predictor for feedforward
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the forecaster on tracker output
    Train(CommonArgs),
    /// Ramsey acquisition on the (optionally corrected) trace, with fits
    Ramsey {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Saved predictor for feedforward
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Linewidth versus update speed
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Saved predictor for feedforward points
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit l = A/nu^n + d to a sweep CSV
    Fit {
        /// Sweep CSV
        #[arg(long)]
        law: PathBuf,
        /// Fit without the offset d
        #[arg(long)]
        no_offset: bool,
        /// Also write law.json and a manifest here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<PartialFailure>().is_some() {
        return EXIT_NUMERIC;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_INPUT;
    }
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        Some(
            Error::Config(_) | Error::Parameter(_) | Error::Nyquist { .. } | Error::Feasibility(_) | Error::Coverage(_),
        ) => EXIT_CONFIG,
        Some(Error::Io(_) | Error::Format { .. } | Error::Json(_) | Error::Model(_) | Error::Size(_)) => EXIT_INPUT,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a.into()),
        Command::Track(a) => commands::track(&a.into()),
        Command::Loop { common, scheme, model } => {
            commands::run_loop_cmd(&common.into(), scheme.map(Into::into), model.as_deref())
        }
        Command::Train(a) => commands::train_cmd(&a.into()),
        Command::Ramsey { common, scheme, model } => {
            commands::ramsey_cmd(&common.into(), scheme.map(Into::into), model.as_deref())
        }
        Command::Sweep { common, model } => commands::sweep_cmd(&common.into(), model.as_deref()),
        Command::Fit { law, no_offset, out } => commands::fit_law(&law, !no_offset, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
