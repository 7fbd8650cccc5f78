//! Command-line front end: dataset layout, file formats, configuration and
//! reports around the `instmatte` library.

pub mod commands;
pub mod error;
pub mod layout;
pub mod raster;
pub mod report;
pub mod settings;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};

use commands::{audit, compose, evaluate, refine, trimask};
pub use error::{CliError, CliResult};
use settings::{FileConfig, GlobalArgs};

#[derive(Debug, Parser)]
#[command(name = "instmatte", version, about = "Instance matting evaluation and benchmark tools")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predicted instance mattes against ground truth
    Evaluate(evaluate::EvaluateArgs),
    /// Composite foregrounds over backgrounds into a multi-instance dataset
    Compose(compose::ComposeArgs),
    /// Build tri-masks, ground-truth tri-mattes and supervision bands
    Trimask(trimask::TrimaskArgs),
    /// Refine tri-mattes with the multi-instance reductions
    Refine(refine::RefineArgs),
    /// Report how many layers overlap per pixel in composed scenes
    Audit(audit::AuditArgs),
}

/// Runs a parsed command and returns its human-readable summary.
pub fn execute(cli: &Cli) -> CliResult<String> {
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let common = cli.global.resolve(&file)?;
    settings::with_pool(common.jobs, || match &cli.command {
        Command::Evaluate(a) => evaluate::run(a, &common, &file),
        Command::Compose(a) => compose::run(a, &common),
        Command::Trimask(a) => trimask::run(a, &common, &file),
        Command::Refine(a) => refine::run(a, &common, &file),
        Command::Audit(a) => audit::run(a),
    })?
}

/// Parses `args`, runs the command and returns the process exit status:
/// 0 on success, 1 for usage errors, 2 for data errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CliError::USAGE } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
