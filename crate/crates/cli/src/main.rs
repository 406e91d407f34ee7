use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dicgan_cli::{resolve_config, run_command, server, suite_command};
use dicgan_core::experiment::RunStatus;

#[derive(Parser)]
#[command(name = "dicgan", version, about = "Differential-critic GAN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every `*.toml` config in a directory and tabulate final PDD.
    Suite {
        #[arg(long)]
        configs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train with a human oracle behind the preference server.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, seed, out } => run_command(&config, seed, out).map(|r| {
            println!(
                "{}: final PDD {:.1}, {} corrections, report {}",
                r.config.method,
                r.final_metrics.pdd,
                r.record.rows.len(),
                r.artifacts.report.display()
            );
            r.status
        }),
        Command::Suite { configs, out } => suite_command(&configs, out).map(|(dir, s)| {
            for e in &s.entries {
                match (&e.final_pdd, &e.error) {
                    (Some(p), _) => println!("{:<24} {:<18} PDD {p:.1}", e.name, e.method),
                    (_, Some(err)) => println!("{:<24} {:<18} failed: {err}", e.name, e.method),
                    _ => {}
                }
            }
            println!("summary written to {}", dir.display());
            if s.entries.iter().any(|e| e.error.is_some()) {
                RunStatus::Aborted
            } else {
                RunStatus::Completed
            }
        }),
        Command::Serve { config, bind, seed, out } => resolve_config(&config, seed, out).and_then(|cfg| {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(cfg, bind)).map(|r| {
                println!("report checkpointed to {}", r.artifacts.report.display());
                RunStatus::Completed
            })
        }),
    };
    match outcome {
        Ok(RunStatus::Completed) | Ok(RunStatus::Interrupted) => ExitCode::SUCCESS,
        Ok(RunStatus::Aborted) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
