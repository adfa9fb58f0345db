use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use ldos::config::load_config;
use ldos::runner::{read_profile_csv, run_experiment, RunOverrides};
use ldos::stats::{
    chernoff_lambda, fit_width, required_samples, ProfileFamily,
};
use ldos::LdosError;

#[derive(Parser)]
#[command(
    name = "ldos",
    version,
    about = "Numerical laboratory for local-density-of-states estimation \
             via simulated phase estimation"
)]
struct Cli {
    /// Override the sampling seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Size of the worker thread pool (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the output directory from the config
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Bw,
    Gauss,
}

impl From<FamilyArg> for ProfileFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Bw => ProfileFamily::BreitWigner,
            FamilyArg::Gauss => ProfileFamily::Gaussian,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment: oracle, sampling, analysis, artifacts
    Run { config: PathBuf },
    /// Compute only the exact oracle quantities (no sampling)
    Oracle { config: PathBuf },
    /// Fit a line-shape width to a profile CSV by maximum likelihood
    Fit {
        profile: PathBuf,
        #[arg(long, value_enum)]
        family: FamilyArg,
    },
    /// Chernoff bound and sample complexity for two profile CSVs
    Chernoff {
        p1: PathBuf,
        p2: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &LdosError) -> u8 {
    match e {
        LdosError::Config(_) | LdosError::Parameter(_) | LdosError::Precondition(_) => 2,
        LdosError::Io(_) => 3,
        LdosError::NumericalFailure { .. }
        | LdosError::NotUnitary(_)
        | LdosError::NotHermitian(_)
        | LdosError::DegenerateInput(_) => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), LdosError> {
    let oracle_only = matches!(cli.command, Command::Oracle { .. });
    match cli.command {
        Command::Run { config } | Command::Oracle { config } => {
            let cfg = load_config(&config)?;
            let overrides = RunOverrides {
                seed: cli.seed,
                out_dir: cli.out_dir,
                oracle_only,
            };
            let summary = run_experiment(&cfg, &overrides)?;
            let d = summary.manifest.derived.as_ref();
            println!(
                "run complete: N={}, M={}, shots={}",
                summary.manifest.dimension,
                summary.manifest.m_bins,
                summary.manifest.shots
            );
            if let Some(d) = d {
                println!(
                    "  sigma={:.6}  rho_E={:.4}  Gamma_pred={:.6}  bandwidth={}  regime={:?}",
                    d.sigma, d.rho_e, d.gamma_predicted, d.bandwidth, d.regime
                );
            }
            if let Some(r) = &summary.report {
                println!(
                    "  test: lambda={:.6}  K_required={}  K_used={}  LLR={:.3}  decision={:?}",
                    r.lambda, r.k_required, r.k_used, r.log_likelihood_ratio, r.decision
                );
            }
            println!("  artifacts in {}", summary.out_dir.display());
            Ok(())
        }
        Command::Fit { profile, family } => {
            let (_, weights) = read_profile_csv(&profile)?;
            let m_bins = weights.len();
            let fit = fit_width(&weights, family.into(), m_bins)?;
            println!(
                "family={:?}  width={:.8}  log_likelihood={:.6}  degenerate={}",
                fit.family, fit.width, fit.log_likelihood, fit.degenerate
            );
            Ok(())
        }
        Command::Chernoff { p1, p2, epsilon } => {
            let (_, w1) = read_profile_csv(&p1)?;
            let (_, w2) = read_profile_csv(&p2)?;
            let (lambda, alpha) = chernoff_lambda(&w1, &w2)?;
            match required_samples(lambda, epsilon) {
                Ok(k) => {
                    println!(
                        "lambda={lambda:.8}  alpha*={alpha:.6}  epsilon={epsilon}  K_required={k}"
                    );
                    Ok(())
                }
                Err(LdosError::Indistinguishable) => {
                    println!(
                        "lambda={lambda:.8}  alpha*={alpha:.6}  distributions are indistinguishable"
                    );
                    Err(LdosError::Indistinguishable)
                }
                Err(e) => Err(e),
            }
        }
    }
}
