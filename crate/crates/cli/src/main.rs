use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gcrs::sim::trace::first_divergence;
use gcrs::sim::{compute_metrics, load_scenario, render_table, run_simulation, MetricsReport, Trace};

/// Global cognitive radio spectrum-leasing simulator.
#[derive(Parser)]
#[command(name = "gcrs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list every problem found.
    Validate { scenario: PathBuf },
    /// Run a scenario and print its metrics.
    Run {
        scenario: PathBuf,
        /// Replaces the scenario's global_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_trace: Option<PathBuf>,
        #[arg(long)]
        out_metrics: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Recompute metrics from a scenario and a trace it produced.
    Metrics {
        scenario: PathBuf,
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Compare two traces; exit 0 only if they are identical.
    DiffTrace { a: PathBuf, b: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

/// Failure reported with exit code 1.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn render(m: &MetricsReport, format: Format) -> String {
    match format {
        Format::Table => render_table(m),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
            s.push('\n');
            s
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, Failure> {
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Validate { scenario } => {
            load_scenario(&scenario)?;
            writeln!(stdout, "{}: ok", scenario.display())?;
        }
        Command::Run {
            scenario,
            seed,
            out_trace,
            out_metrics,
            format,
        } => {
            let mut config = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                config.global_seed = seed;
            }
            let out = run_simulation(&config)?;
            if let Some(path) = out_trace {
                write(&path, out.trace.to_jsonl().as_bytes())?;
            }
            if let Some(path) = out_metrics {
                let json = serde_json::to_string_pretty(&out.metrics)?;
                write(&path, json.as_bytes())?;
            }
            stdout.write_all(render(&out.metrics, format).as_bytes())?;
        }
        Command::Metrics {
            scenario,
            trace,
            format,
        } => {
            let config = load_scenario(&scenario)?;
            let text = read(&trace)?;
            let trace = Trace::from_jsonl(&text)
                .map_err(|e| Failure(format!("{}: {e}", trace.display())))?;
            stdout.write_all(render(&compute_metrics(&trace, &config), format).as_bytes())?;
        }
        Command::DiffTrace { a, b } => {
            let (ta, tb) = (read(&a)?, read(&b)?);
            if let Some((line, la, lb)) = first_divergence(&ta, &tb) {
                writeln!(stdout, "traces differ at line {line}")?;
                writeln!(stdout, "< {}", la.unwrap_or("<end of file>"))?;
                writeln!(stdout, "> {}", lb.unwrap_or("<end of file>"))?;
                return Ok(ExitCode::from(1));
            }
            writeln!(stdout, "traces identical")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(Failure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
