use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sipba_bench::{apply_seed_override, cmd_ablate, cmd_asymptotics, cmd_compare, cmd_gradcheck, cmd_run, Context};
use sipba_bench::{CliError, RunConfig, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "sipba", version, about = "Pessimistic bilevel optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Maximum number of concurrent runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One solver run per seed with diagnostics.
    Run(Common),
    /// Ablation grid over step sizes and schedule exponents.
    Ablate(Common),
    /// Finite-difference validation of all gradients.
    Gradcheck(Common),
    /// Solver against the double-loop baseline.
    Compare(Common),
    /// Sandwich and saddle-limit checks over a (rho, sigma) grid.
    Asymptotics(Common),
}

fn execute(command: Command) -> Result<(), CliError> {
    let common = match &command {
        Command::Run(c) | Command::Ablate(c) | Command::Gradcheck(c) | Command::Compare(c) | Command::Asymptotics(c) => {
            c.clone()
        }
    };
    let mut cfg = RunConfig::load(&common.config)?;
    apply_seed_override(&mut cfg, std::env::var(SEED_ENV).ok().as_deref())?;
    if common.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let mut ctx = Context::new(common.out.unwrap_or_else(|| cfg.output_dir.clone()));
    ctx.jobs = common.jobs;

    match command {
        Command::Run(_) => {
            let report = cmd_run(&cfg, &ctx)?;
            let s = &report.stats;
            println!(
                "runs {} completed {} valid {} min_final {:?} max_final {:?} mean_time_to_target {:?}",
                s.runs, s.completed_runs, s.valid_runs, s.min_final, s.max_final, s.mean_time_to_target_s
            );
        }
        Command::Ablate(_) => {
            for (i, row) in cmd_ablate(&cfg, &ctx)?.iter().enumerate() {
                println!(
                    "row {i:>2} {:?} valid {}/{} mean_iters {:?} mean_time {:?}",
                    row.row, row.stats.valid_runs, row.stats.runs, row.stats.mean_iters_to_target, row.stats.mean_time_to_target_s
                );
            }
        }
        Command::Gradcheck(_) => {
            for r in cmd_gradcheck(&cfg, &ctx)? {
                let show = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| v.to_string());
                println!(
                    "{:<14} rho={:<8} sigma={:<8} max_rel_error={:.3e}",
                    r.check,
                    show(r.rho),
                    show(r.sigma),
                    r.max_rel_error.unwrap_or(f64::NAN)
                );
            }
        }
        Command::Compare(_) => {
            let report = cmd_compare(&cfg, &ctx)?;
            for (a, b) in report.sipba.iter().zip(&report.baseline) {
                println!(
                    "run {} sipba evals {} final {:?} | baseline evals {} final {:?}",
                    a.run_id, a.grad_evals, a.final_metric, b.grad_evals, b.final_metric
                );
            }
        }
        Command::Asymptotics(_) => {
            for p in cmd_asymptotics(&cfg, &ctx)? {
                for r in &p.diagonal.rows {
                    println!("x={} rho={:e} sigma={:e} gap={:.6e}", p.label, r.rho, r.sigma, r.gap);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
