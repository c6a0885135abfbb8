use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "homog",
    version,
    about = "Homogenization toolkit for flow through dilute particle arrays"
)]
pub struct Cli {
    #[command(flatten)]
    pub globals: Globals,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags override the matching config keys.
#[derive(Args, Debug, Default, Clone)]
pub struct Globals {
    /// Flat `key = value` config with [particle], [regime], [regimes], [solve], [study] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Particle diameter exponent (accepts fractions such as 5/2).
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    /// Viscosity exponent.
    #[arg(long, global = true)]
    pub gamma: Option<String>,
    #[arg(long, global = true)]
    pub mu0: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Annulus exponent: η = ε^β.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Points per direction of the periodic grid.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
    /// Caps the worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving PHFLD1 velocity snapshots.
    #[arg(long, global = true)]
    pub snapshots: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Resistance matrix of the reference particle (JSON).
    Resistance,
    /// Regime diagram over an (α, γ) rectangle (CSV).
    Regimes,
    /// Time integration or algebraic solve of a limit system (CSV trajectory).
    Solve {
        #[arg(value_enum)]
        system: System,
    },
    /// Convergence study (JSON report; CSV table next to `--out`).
    Study {
        #[arg(value_enum)]
        study: Study,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum System {
    Euler,
    EulerBrinkman,
    Darcy,
    NsBrinkman,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    Corrector,
    MEps,
    Poincare,
    Hardy,
    Limits,
}
