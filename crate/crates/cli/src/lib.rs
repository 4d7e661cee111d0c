//! Command-line workflows: meshing, forward solves, synthetic data, inversion
//! and scaling benchmarks.

pub mod commands;
pub mod config;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use maxtomo::inverse::InverseError;
use maxtomo::mesh::MeshError;
use maxtomo::phantom::PhantomError;
use maxtomo::scattering::ScatteringError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_OPTIMIZATION: i32 = 4;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_CONFIG, error: e.into() }
    }

    pub fn solver(e: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_SOLVER, error: e.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self.code {
            EXIT_CONFIG => "config",
            EXIT_SOLVER => "solver",
            EXIT_OPTIMIZATION => "optimization",
            _ => "error",
        }
    }

    /// One-line JSON summary for stderr.
    pub fn summary(&self) -> String {
        serde_json::json!({ "error": self.kind(), "code": self.code, "message": format!("{:#}", self.error) }).to_string()
    }
}

impl From<InverseError> for CliError {
    fn from(e: InverseError) -> Self {
        match e {
            InverseError::Config(_) | InverseError::Mesh(MeshError::Infeasible(_)) => Self::config(e),
            _ => Self::solver(e),
        }
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        match e {
            PhantomError::Inverse(e) => e.into(),
            PhantomError::Io(_) => Self::solver(e),
            _ => Self::config(e),
        }
    }
}

impl From<ScatteringError> for CliError {
    fn from(e: ScatteringError) -> Self {
        Self::config(e)
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        Self::config(e)
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        Self::config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::solver(e)
    }
}

/// JSON-lines event log, echoed to stdout.
pub struct EventLog {
    file: Option<File>,
    quiet: bool,
}

impl EventLog {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        Ok(Self { file: Some(File::create(path)?), quiet: false })
    }

    pub fn stdout_only() -> Self {
        Self { file: None, quiet: false }
    }

    pub fn quiet(mut self) -> Self {
        self.quiet = true;
        self
    }

    pub fn event(&mut self, value: serde_json::Value) {
        let line = value.to_string();
        if !self.quiet {
            println!("{line}");
        }
        if let Some(f) = &mut self.file {
            let _ = writeln!(f, "{line}");
        }
    }
}

/// Create the output directory and return `dir/name`.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}
