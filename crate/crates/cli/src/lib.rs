//! Library surface of the `gem-mix` experiment runner: spec parsing,
//! experiment execution, suite orchestration, and SVG rendering. The binary
//! in `main.rs` is a thin clap wrapper over these.

pub mod experiments;
pub mod spec;
pub mod suite;
pub mod svg;

#[derive(Debug)]
pub enum AppError {
    /// Bad invocation or spec file (exit code 1).
    Spec(String),
    /// Failure while running (exit code 2).
    Runtime(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Spec(m) => write!(f, "spec error: {m}"),
            AppError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}
