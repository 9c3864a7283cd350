use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recursive_ecf::experiment::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "recursive-ecf", version, about = "Recursive ECF identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment definition (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Input series for `estimate` (CSV with a `dy` column).
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Replaces the `seed` of the config file.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate increments from the configured truth.
    Simulate,
    /// Run the configured estimator on `--data` or on a simulated series.
    Estimate,
    /// Seeded replications and their covariance against the closed forms.
    Montecarlo,
    /// ODE right-hand side, Jacobian spectrum, Lyapunov covariance and paths.
    OdeCheck,
}

fn run(cli: Cli) -> recursive_ecf::Result<()> {
    let path = cli
        .config
        .ok_or_else(|| recursive_ecf::Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::from_path(&path).map_err(|e| match e {
        recursive_ecf::Error::Parse { line, message } => {
            recursive_ecf::Error::Config(format!("{}:{line}: {message}", path.display()))
        }
        other => other,
    })?;
    if let Some(seed) = cli.seed_override {
        cfg.seed = seed;
    }
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate => {
            let rec = experiment::cmd_simulate(&cfg, out)?;
            eprintln!("wrote {} increments to {}", rec.n, out.join("data.csv").display());
        }
        Command::Estimate => {
            let s = experiment::cmd_estimate(&cfg, cli.data.as_deref(), out)?;
            for (name, v) in &s.estimates.0 {
                println!("{name} = {v:.6}");
            }
            println!("resets = {}", s.reset_count);
        }
        Command::Montecarlo => {
            let r = experiment::cmd_montecarlo(&cfg, out)?;
            println!("{} of {} replications completed", r.completed, r.replications);
            for (j, c) in r.components.iter().enumerate() {
                let ratio = r.ratio[j].map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
                println!("{c:<16} rmse {:.3e}  N*var {:.4}  ratio {ratio}", r.rmse[j], r.n_cov[j][j]);
            }
        }
        Command::OdeCheck => {
            let r = experiment::cmd_ode_check(&cfg, out)?;
            println!("max |lambda + 1| = {:.3e}", r.max_eigenvalue_deviation);
            println!(
                "upper blocks {:.3e}, diagonal blocks {:.3e}",
                r.block_structure.max_upper, r.block_structure.max_diag_deviation
            );
            if let Some(nc) = r.noise_check.as_ref().filter(|nc| nc.noise_dominated) {
                eprintln!(
                    "warning: Monte Carlo noise dominates the Jacobian; try ode_path_len = {}",
                    nc.suggested_path_len.unwrap_or_default()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
