use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use altphillips::experiment::{
    convergence, output_root, run_experiment, write_artifacts, write_convergence, ExperimentConfig, OUTPUT_ENV,
};
use altphillips::verify::{run_suite, SuiteOptions};
use altphillips::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "altphillips", version, about = "Solve and measure F(D²u) = u^{γ−1}, u ≥ 0")]
struct Cli {
    /// Artifact root; each experiment writes to <out>/<name>/
    #[arg(long, global = true, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    /// Worker threads (affects speed only)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for ellipticity sampling
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one experiment and write its artifacts
    Run { config: PathBuf },
    /// Run an experiment on successively refined grids (n → 2n−1)
    Convergence {
        config: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
        levels: u32,
    },
    /// Run the acceptance suite
    Verify,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config { .. } => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match cli.command {
        Command::Run { config } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let out = match run_experiment(&cfg, cli.seed) {
                Ok(o) => o,
                Err(e) => return fail(&e),
            };
            let root = output_root(cli.out.as_deref(), &cfg);
            if let Err(e) = write_artifacts(&out, &root) {
                return fail(&e);
            }
            let rep = &out.report;
            println!("{}: n={} converged={} iterations={}", rep.name, rep.n, rep.solve.converged, rep.solve.iterations);
            if let Some(fit) = &rep.scaling.beta_fit {
                println!("growth exponent {:.4} ± {:.4} (β = {})", fit.slope, fit.stderr, rep.beta);
            }
            println!("artifacts in {}", root.join(&rep.name).display());
            if !rep.solve.converged {
                eprintln!("error: solver did not reach the residual target");
                return ExitCode::from(EXIT_NOT_CONVERGED);
            }
            ExitCode::SUCCESS
        }
        Command::Convergence { config, levels } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let (table, _) = match convergence(&cfg, levels as usize, cli.seed) {
                Ok(t) => t,
                Err(e) => return fail(&e),
            };
            let root = output_root(cli.out.as_deref(), &cfg);
            if let Err(e) = write_convergence(&table, &root) {
                return fail(&e);
            }
            print!("{}", table.to_csv());
            if table.rows.iter().any(|r| !r.converged) {
                eprintln!("error: some level did not converge");
                return ExitCode::from(EXIT_NOT_CONVERGED);
            }
            ExitCode::SUCCESS
        }
        Command::Verify => {
            let summary = run_suite(&SuiteOptions { seed: cli.seed, ..Default::default() });
            print!("{}", summary.render());
            eprint!("{}", summary.render_timings());
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
    }
}
