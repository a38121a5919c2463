use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use seesim::config::{load_config, RobotConfig};
use seesim::control::summarize_csv;
use seesim::scenario::run_scenario_file;
use seesim::session::{serve, ServerOptions};
use seesim::SeeError;

/// Soft parallel end-effector simulator.
#[derive(Debug, Parser)]
#[command(name = "seesim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write its artifacts.
    Run {
        scenario: PathBuf,
        /// Output directory, overriding the scenario's own.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Serve live steering sessions over WebSocket.
    Serve {
        /// Robot configuration; defaults apply when omitted.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Exit after this many sessions have ended.
        #[arg(long)]
        sessions: Option<usize>,
        /// Initial uniform inflation, fraction of the volume range.
        #[arg(long, default_value_t = 0.0)]
        inflation: f64,
        /// Session log directory (default: $SEESIM_LOG_DIR; unset disables logs).
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Print tracking statistics of a closed-loop run log.
    Report { runlog: PathBuf },
}

enum Failure {
    Input(String),
    Runtime(String),
}

impl From<SeeError> for Failure {
    fn from(e: SeeError) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn log_dir_from_env() -> Option<PathBuf> {
    std::env::var_os("SEESIM_LOG_DIR").filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, output } => {
            let outcome = match output {
                Some(dir) => {
                    let s = seesim::scenario::load_scenario(&scenario)?;
                    seesim::scenario::run_scenario(&s, &dir)
                }
                None => run_scenario_file(&scenario, log_dir_from_env().as_deref()),
            };
            match outcome {
                Ok(o) => {
                    println!("{}", serde_json::to_string_pretty(&o.summary).expect("serializable"));
                    log::info!("wrote {} files to {}", o.files.len(), o.output_dir.display());
                    Ok(())
                }
                Err(f) => {
                    for file in &f.files {
                        eprintln!("partial output: {}", file.display());
                    }
                    Err(f.error.into())
                }
            }
        }
        Command::Serve {
            config,
            port,
            host,
            sessions,
            inflation,
            log_dir,
        } => {
            let config = match config {
                Some(p) => load_config(&p)?,
                None => RobotConfig::default(),
            };
            let addr = format!("{host}:{port}");
            let listener = TcpListener::bind(&addr).map_err(|e| Failure::Input(format!("cannot bind {addr}: {e}")))?;
            let local = listener.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?;
            eprintln!("listening on ws://{local}");
            let opts = ServerOptions {
                log_dir: log_dir.or_else(log_dir_from_env),
                max_sessions: sessions,
                inflation,
            };
            serve(&config, listener, &opts, Arc::new(AtomicBool::new(false)))?;
            Ok(())
        }
        Command::Report { runlog } => {
            let file = open(&runlog)?;
            let s = summarize_csv(file).map_err(|e| e.context(runlog.display().to_string()))?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serializable"));
            Ok(())
        }
    }
}

fn open(path: &Path) -> Result<std::fs::File, Failure> {
    std::fs::File::open(path).map_err(|e| SeeError::io(path, e).into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("failure: {m}");
            ExitCode::from(2)
        }
    }
}
