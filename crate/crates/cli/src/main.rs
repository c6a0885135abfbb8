//! `homog`: batch driver for resistance solves, regime diagrams, limit-system
//! runs and convergence studies. Exit code 0 when everything passes, 1 when a
//! study verdict fails, 2 on configuration or solver errors.

mod options;
mod run;

use std::process::ExitCode;

use clap::Parser;

use options::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.globals.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run::execute(&cli) {
        Ok(run::Outcome::Pass) => ExitCode::SUCCESS,
        Ok(run::Outcome::VerdictFailed(names)) => {
            eprintln!("failed verdicts: {}", names.join(", "));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
