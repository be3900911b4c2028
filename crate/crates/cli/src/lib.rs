//! Command-line front end for the echo engine: configuration files, presets,
//! sweeps and run manifests.

pub mod config;
pub mod run;

use std::fmt;

use config::{Diagnostic, Severity};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Engine(#[from] spin_echo::Error),
    #[error("cannot write {0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}")]
    Usage(String),
}

fn join(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(d) if d.iter().any(|x| x.severity == Severity::Capacity) => {
                EXIT_CAPACITY
            }
            CliError::Engine(spin_echo::Error::Capacity(_)) => EXIT_CAPACITY,
            CliError::Engine(spin_echo::Error::Convergence(_)) => EXIT_CONVERGENCE,
            _ => EXIT_CONFIG,
        }
    }
}

impl fmt::Display for config::Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            config::Task::Echo => "echo",
            config::Task::Scaling => "scaling",
            config::Task::Identities => "identities",
            config::Task::Order4 => "order4",
        };
        f.write_str(s)
    }
}
