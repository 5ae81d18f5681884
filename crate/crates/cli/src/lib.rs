//! Driver behind the `moire` binary: validated configs in, CSV/text files and
//! a manifest out.

pub mod commands;
pub mod config;
pub mod output;
pub mod render;

use std::path::{Path, PathBuf};

use moire_core::Execution;

pub use commands::Command;
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("numerical contract violated: {0}")]
    Contract(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Contract(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<moire_core::Error> for CliError {
    fn from(e: moire_core::Error) -> Self {
        use moire_core::Error as E;
        match e {
            E::Resource(m) => CliError::Resource(m),
            E::Contract(m) => CliError::Contract(m),
            E::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: PathBuf,
    /// Overrides `[output] dir`; the default is the current directory.
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub render: bool,
}

/// Validates the config, runs `command` and writes its outputs plus
/// `manifest.json`. Returns the written paths.
pub fn run(command: Command, opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let config = RunConfig::load(&opts.config)?;
    let base = opts.config.parent().unwrap_or(Path::new("."));
    let resolved = config.resolve(base)?;
    let out = opts
        .out
        .clone()
        .or_else(|| resolved.config.output.dir.as_ref().map(|d| base.join(d)))
        .unwrap_or_else(|| PathBuf::from("."));
    if opts.threads == Some(0) {
        return Err(CliError::Config("--threads: must be positive".into()));
    }

    let exec = if opts.threads == Some(1) { Execution::Sequential } else { Execution::Parallel };
    let work = || commands::execute(command, &resolved, exec, opts.render);
    let artifacts = match opts.threads {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?
            .install(work)?,
        _ => work()?,
    };

    let manifest = output::manifest(command, &resolved.config, &artifacts, opts.threads);
    output::write_all(&out, &artifacts, &manifest)
}
