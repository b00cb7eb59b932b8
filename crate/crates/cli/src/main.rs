//! `flr`: run the finite-Larmor-radius simulator from a configuration file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flr_core::config::{load_config, ConfigFile};
use flr_core::field::GridSpec;
use flr_core::geometry::CONVENTION_TOLERANCE;
use flr_core::harness::{self, POISSON_TOLERANCE, SWEEP_CSV};
use flr_core::FlrError;

#[derive(Parser)]
#[command(name = "flr", version, about = "Finite Larmor radius Vlasov-Poisson simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation described by a configuration file.
    Run { config: PathBuf },
    /// Run the limit model and one scaled run per epsilon, then tabulate errors.
    Sweep { config: PathBuf },
    /// Solve manufactured Poisson problems for every model.
    PoissonTest,
    /// Print the resolved Larmor-shift sign and the invariance residuals.
    ConventionCheck,
}

/// Loads a configuration; an unreadable file is a configuration error.
fn load(path: &Path) -> Result<ConfigFile, FlrError> {
    load_config(path).map_err(|e| match e {
        FlrError::Io { path, source } => FlrError::Config {
            key: "config".into(),
            msg: format!("cannot read {}: {source}", path.display()),
        },
        other => other,
    })
}

fn wrong_kind(expected: &str) -> FlrError {
    FlrError::Config {
        key: "config".into(),
        msg: format!("expected a {expected} configuration"),
    }
}

fn run(command: Command) -> Result<bool, FlrError> {
    match command {
        Command::Run { config } => {
            let ConfigFile::Run(cfg) = load(&config)? else {
                return Err(wrong_kind("run (no epsilons or comparison_time)"));
            };
            let out = harness::cmd_run(&cfg)?;
            let last = out.records.last().expect("runs record their final state");
            println!(
                "{} t={} energy_total={:e} mass={:e}",
                cfg.model.name(),
                last.t,
                last.energy_total,
                last.mass
            );
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Sweep { config } => {
            let ConfigFile::Sweep(sweep) = load(&config)? else {
                return Err(wrong_kind("sweep (with epsilons or comparison_time)"));
            };
            let out = harness::cmd_sweep(&sweep)?;
            println!("{}", harness::SWEEP_COLUMNS.join(","));
            for row in &out.rows {
                let cells: Vec<String> = row.values().iter().map(|v| format!("{v:e}")).collect();
                println!("{}", cells.join(","));
            }
            println!("wrote {}", sweep.base.output_dir.join(SWEEP_CSV).display());
            Ok(true)
        }
        Command::PoissonTest => {
            let spec = GridSpec::new(32, 32, 16)?;
            let mut ok = true;
            for eps in [1.0, 0.1, 0.01] {
                for c in harness::poisson_test(spec, eps)? {
                    let pass = c.relative_error <= POISSON_TOLERANCE;
                    ok &= pass;
                    println!(
                        "{:<13} eps={eps:<5} relative_error={:.3e} time={:.3}s {}",
                        format!("{:?}", c.model),
                        c.relative_error,
                        c.seconds,
                        if pass { "ok" } else { "FAIL" }
                    );
                }
            }
            Ok(ok)
        }
        Command::ConventionCheck => {
            let r = harness::convention_check();
            println!("sign = {}", r.sign);
            println!("residual(+1) = {:e}", r.residual_plus);
            println!("residual(-1) = {:e}", r.residual_minus);
            println!("tolerance = {CONVENTION_TOLERANCE:e}");
            println!("unique = {}", r.unique);
            Ok(r.unique)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Ok(n) = std::env::var("FLR_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("cannot size the worker pool: {e}");
                }
            }
            _ => {
                eprintln!("error: FLR_THREADS must be a positive integer, got `{n}`");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
