//! Command-line front end: data generation, fitting, scoring, benchmarks and
//! the density study.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;

use args::{Cli, Command};
pub use error::{CliError, CliResult};

/// Configures the thread pool and dispatches the subcommand. Returns the text
/// to print on success.
pub fn run(cli: &Cli) -> CliResult<String> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // A pool may already exist when called more than once in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Generate(a) => {
            commands::generate(a)?;
            Ok(format!("wrote data.csv and truth.json to {}", a.out_dir.display()))
        }
        Command::Fit(a) => {
            let s = commands::fit(a)?;
            Ok(serde_json::to_string_pretty(&s).expect("summary serializes"))
        }
        Command::Score(a) => {
            let s = commands::score(a)?;
            Ok(serde_json::to_string_pretty(&s).expect("score serializes"))
        }
        Command::Benchmark(a) => {
            let res = commands::benchmark(a)?;
            let failed: usize = res.summary.iter().map(|s| s.runs_failed).sum();
            Ok(format!(
                "{} runs, {failed} failed; wrote results.csv and runs.csv to {}",
                res.rows.len(),
                a.out_dir.display()
            ))
        }
        Command::Density(a) => {
            let res = commands::density(a)?;
            let mut out = String::from("k\tsolver\tmean_rmise\tse_rmise\titerations\n");
            for s in &res.summary {
                out += &format!(
                    "{}\t{}\t{:.6}\t{:.6}\t{:.1}\n",
                    s.k,
                    s.solver.name(),
                    s.mean_rmise,
                    s.se_rmise,
                    s.mean_iterations
                );
            }
            Ok(out.trim_end().to_string())
        }
    }
}
