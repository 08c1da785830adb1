use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use duplex_core::Config;
use duplex_harness::{bench, evaluate, generate, load_dir, GenOptions, ReportFormat, Scenario};

#[derive(Debug, Parser)]
#[command(name = "duplex", version, about = "Full-duplex dialogue engine: simulate, benchmark, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario on the virtual clock and score it.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the session trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
    },
    /// Simulate every scenario in a directory, in parallel.
    Bench {
        #[arg(long)]
        scenario_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
    },
    /// Write seeded random scenarios to a directory.
    Generate {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        episodes: usize,
        /// Ignore timing and place events anywhere.
        #[arg(long)]
        chaotic: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the WebSocket gateway.
    Serve {
        #[arg(long, env = "DUPLEX_PORT")]
        port: Option<u16>,
        #[arg(long, env = "DUPLEX_CONFIG")]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Returns whether every expected behavior was met.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sim {
            scenario,
            config,
            trace,
            report,
            format,
        } => {
            let config = load_config(config.as_deref())?;
            let s = Scenario::load(&scenario)?;
            let (t, r) = evaluate(&s, &config)?;
            if let Some(p) = &trace {
                std::fs::write(p, t.to_jsonl()).with_context(|| format!("writing {}", p.display()))?;
            }
            output(report.as_deref(), &duplex_harness::report::render(&[&r], format))?;
            if r.violations() > 0 {
                eprintln!("{}: {} expected behaviors violated", s.name, r.violations());
            }
            Ok(r.violations() == 0)
        }
        Command::Bench {
            scenario_dir,
            config,
            report,
            format,
        } => {
            let config = load_config(config.as_deref())?;
            let scenarios =
                load_dir(&scenario_dir).with_context(|| format!("reading {}", scenario_dir.display()))?;
            let b = bench(&scenarios, &config);
            output(report.as_deref(), &b.render(format))?;
            eprintln!(
                "{} scenarios in {} ms, {} with violations or errors",
                b.scenarios.len(),
                b.wall_ms,
                b.failures()
            );
            Ok(b.failures() == 0)
        }
        Command::Generate {
            out_dir,
            count,
            seed,
            episodes,
            chaotic,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            let opts = GenOptions {
                chaotic,
                ..GenOptions::new(&config, episodes)
            };
            std::fs::create_dir_all(&out_dir)?;
            for i in 0..count {
                let name = format!("gen-{:04}", seed + i);
                let s = generate(&name, seed + i, &opts);
                std::fs::write(out_dir.join(format!("{name}.toml")), s.to_toml())?;
            }
            Ok(true)
        }
        Command::Serve { port, config } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let config = load_config(config.as_deref())?;
            let port = port.unwrap_or(config.gateway.port);
            tokio::runtime::Runtime::new()?.block_on(duplex_gateway::run(config, port))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
