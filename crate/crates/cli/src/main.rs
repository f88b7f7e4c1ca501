//! `alkspin`: controllability checks, waveform optimization, simulation,
//! Wigner exports and benchmarks from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "alkspin", version, about = "Hyperfine spin control toolkit")]
struct Cli {
    /// Worker threads for parallel seeds and scan cells.
    #[arg(long, global = true, env = "ALKSPIN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lie-algebraic controllability of a configuration.
    Check(CheckArgs),
    /// Multi-seed gradient ascent for a state preparation.
    Optimize(OptimizeArgs),
    /// Propagate a stored waveform and export Wigner snapshots.
    Simulate(SimulateArgs),
    /// Export the four-sphere Wigner grid of a state.
    Wigner(WignerArgs),
    /// Mean fidelity over Haar-random targets per variant and duration.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Config file, or a preset name (cs-baseline, cs-two-microwave, ...).
    #[arg(long)]
    config: String,
    /// Also run the full configuration scan for the config's spin system.
    #[arg(long)]
    scan: bool,
    /// Write the scan table here (with --scan).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long)]
    config: String,
    /// Target state: a name, sparse "F,m=amp;..." terms or a full amplitude list.
    #[arg(long)]
    target: String,
    /// Initial state, same syntax as --target.
    #[arg(long, default_value = "stretched")]
    initial: String,
    /// Total time, in µs unless a unit is given.
    #[arg(long)]
    time: String,
    /// Number of random restarts.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Top-level seed; per-restart seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Integration step, in µs unless a unit is given.
    #[arg(long, default_value = "0.1")]
    dt: String,
    #[arg(long, default_value_t = 2000)]
    max_iterations: usize,
    /// Stop launching restarts once one reaches this fidelity.
    #[arg(long)]
    stop_at: Option<f64>,
    /// Exit with status 2 when the best fidelity is below this value.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Config file or preset (not needed with --record).
    #[arg(long)]
    config: Option<String>,
    /// Waveform knot file written by `optimize`.
    #[arg(long, conflicts_with = "record")]
    waveform: Option<PathBuf>,
    /// Run record whose configuration, states, step and knots are reused.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// Comma-separated snapshot times in µs.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
    /// Simulate even if the waveform violates bounds or slew limits.
    #[arg(long)]
    force: bool,
    /// Sphere grid for snapshot exports, e.g. 64x128.
    #[arg(long, default_value = "64x128")]
    grid: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct WignerArgs {
    /// Config file or preset; only its spin system is used.
    #[arg(long, default_value = "cs-baseline")]
    config: String,
    /// State to export, same syntax as `optimize --target`.
    #[arg(long, alias = "state")]
    target: String,
    #[arg(long, default_value = "64x128")]
    grid: String,
    /// Output grid file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Variants file (schema alkspin-variants/1).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated total times in µs.
    #[arg(long, value_delimiter = ',', default_values_t = [50.0, 100.0, 150.0])]
    time: Vec<f64>,
    /// Haar-random targets per cell.
    #[arg(long, default_value_t = 5)]
    states: usize,
    /// Restarts per target.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value = "0.1")]
    dt: String,
    #[arg(long, default_value_t = 2000)]
    max_iterations: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Check(a) => commands::check(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Wigner(a) => commands::wigner(a),
        Command::Benchmark(a) => commands::benchmark(a),
    };
    match result {
        Ok(status) => ExitCode::from(status),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
