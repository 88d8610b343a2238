//! Config-driven experiments. Each run produces a [`Report`] whose tables are
//! written as CSV next to a `manifest.json` holding the config echo, the
//! package version, the wall time and the pass/fail checks.

mod config;
mod report;
mod runners;
mod table;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

pub use config::{
    parse_config, ExperimentConfig, FieldValues, ForwardSection, GradientCheckSection, KernelCheckSection,
    ProblemSection, RateStudySection, StartSection,
};
pub use report::{Check, Report};
pub use runners::{
    gradient_check, kernel_bounds, least_squares_slope, rate_study, run_continuation, run_forward,
    run_gradient_check, run_identify, run_kernel_bound_check, run_rate_study, GradientCheckPlan, GradientRow,
    KernelBound, RateFit, RateRow, RateStudy, RowStatus,
};
pub use table::{emit_csv, read_csv, Cell, Table};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    SolveForward,
    RateStudy,
    KernelCheck,
    CheckGradient,
    Identify,
    Continuation,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::SolveForward,
        Experiment::RateStudy,
        Experiment::KernelCheck,
        Experiment::CheckGradient,
        Experiment::Identify,
        Experiment::Continuation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::SolveForward => "solve-forward",
            Experiment::RateStudy => "rate-study",
            Experiment::KernelCheck => "kernel-check",
            Experiment::CheckGradient => "check-gradient",
            Experiment::Identify => "identify",
            Experiment::Continuation => "continuation",
        }
    }

    pub fn run(&self, config: &ExperimentConfig) -> Result<Report> {
        match self {
            Experiment::SolveForward => run_forward(config),
            Experiment::RateStudy => run_rate_study(config),
            Experiment::KernelCheck => run_kernel_bound_check(config),
            Experiment::CheckGradient => run_gradient_check(config),
            Experiment::Identify => run_identify(config),
            Experiment::Continuation => run_continuation(config),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment {s:?}")))
    }
}

/// Runs `experiment` and writes its outputs to `<out>/<experiment>/`.
pub fn run_and_write(experiment: Experiment, config: &ExperimentConfig, out: &Path) -> Result<(Report, PathBuf)> {
    let start = Instant::now();
    let report = experiment.run(config)?;
    let dir = out.join(experiment.as_str());
    report.write(&dir, config, start.elapsed())?;
    Ok((report, dir))
}
