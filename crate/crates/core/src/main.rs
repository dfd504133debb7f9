use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coulomb_screen::cli::commands::{self, Context, OracleQuery};
use coulomb_screen::ScreenError;

const THREADS_ENV: &str = "COULOMB_SCREEN_THREADS";

#[derive(Parser)]
#[command(name = "coulomb-screen", version, about = "Optimal screening of a uniformly charged domain")]
#[command(allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; overrides COULOMB_SCREEN_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Relaxed and obstacle solves on a grid.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Closed-form radial solutions.
    Oracle {
        #[command(subcommand)]
        query: OracleCmd,
    },
    /// Surface-charge limit model.
    Surface {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-run the diagnostics on a stored VTK fields file.
    Verify { fields: PathBuf },
    /// Energy curve in the mass cap and the regularized sequence.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Critical radius ratio of the annulus problem.
    CriticalRatio,
    /// Optimal inner bilayer for the annulus R1 < |x| < R2.
    Bilayer { r1: f64, r2: f64 },
    /// Optimal screening annulus of a ball.
    Ball { radius: f64 },
    /// Energy of a shell list `r_in:r_out:sign,...`.
    Energy { shells: String },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, ScreenError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ScreenError::Config(format!("{THREADS_ENV}: expected a thread count, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<commands::Status, ScreenError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(ScreenError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ScreenError::Config(format!("thread pool: {e}")))?;
    }
    let ctx = Context { out_dir: cli.out, quiet: cli.quiet };
    match cli.command {
        Command::Solve { config } => commands::cmd_solve(&config, &ctx),
        Command::Surface { config } => commands::cmd_surface(&config, &ctx),
        Command::Sweep { config } => commands::cmd_sweep(&config, &ctx),
        Command::Verify { fields } => commands::cmd_verify(&fields, &ctx),
        Command::Oracle { query } => {
            let q = match query {
                OracleCmd::CriticalRatio => OracleQuery::CriticalRatio,
                OracleCmd::Bilayer { r1, r2 } => OracleQuery::Bilayer { r1, r2 },
                OracleCmd::Ball { radius } => OracleQuery::Ball { radius },
                OracleCmd::Energy { shells } => OracleQuery::Energy { shells },
            };
            commands::cmd_oracle(&q, &ctx)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the generic error status
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
