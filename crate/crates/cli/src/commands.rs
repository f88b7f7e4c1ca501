use std::fs;
use std::path::Path;
use std::time::Instant;

use alkspin::config::{load_config, load_variants, parse_duration};
use alkspin::controllability::{generator_set, lie_closure, scan_configurations, DEFAULT_TOLERANCE};
use alkspin::optimizer::{benchmark as run_benchmark, multi_seed_search_with};
use alkspin::records::{RunRecord, SnapshotRef, RUN_RECORD_FORMAT, TOOL_VERSION};
use alkspin::simulator::{fidelity, parse_state, propagate};
use alkspin::waveform::{interpolate, validate, WaveformKnots};
use alkspin::{
    BenchmarkOptions, BenchmarkVariant, OptimizerSettings, ScanOptions, SphereGrid, StatePrepProblem,
    StateVector, WignerSphereGrid,
};
use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use crate::{BenchmarkArgs, CheckArgs, OptimizeArgs, SimulateArgs, WignerArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERDICT: u8 = 2;

/// Bare numbers are µs; otherwise a unit is required.
fn parse_time(s: &str) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(x) => Ok(x),
        Err(_) => Ok(parse_duration(s)?),
    }
}

fn parse_grid(s: &str) -> Result<SphereGrid> {
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| anyhow!("grid {s:?}: expected N_THETAxN_PHI, e.g. 64x128"))?;
    Ok(SphereGrid::new(
        a.trim().parse().with_context(|| format!("grid {s:?}"))?,
        b.trim().parse().with_context(|| format!("grid {s:?}"))?,
    )?)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("{}: cannot create directory", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("{}: cannot write", path.display()))
}

pub fn check(args: CheckArgs) -> Result<u8> {
    let config = load_config(&args.config)?;
    let gens = generator_set(&config)?;
    let closure = lie_closure(&gens, DEFAULT_TOLERANCE)?;
    let full = config.dim() * config.dim() - 1;
    println!("generators: {}", gens.labels.join(", "));
    println!(
        "dimension {}/{}, {}",
        closure.dimension,
        full,
        if closure.controllable { "controllable" } else { "not controllable" }
    );
    if args.scan {
        let table = scan_configurations(&config.system, &ScanOptions::full())?;
        let tsv = table.to_tsv();
        match &args.out {
            Some(path) => {
                write(path, &tsv)?;
                println!("scan table written to {}", path.display());
            }
            None => print!("{tsv}"),
        }
        for (t, n) in table.controllable_counts() {
            println!("transition {t}: controllable in {n}/{} cells", table.cells.len());
        }
    }
    Ok(if closure.controllable { EXIT_OK } else { EXIT_VERDICT })
}

pub fn optimize(args: OptimizeArgs) -> Result<u8> {
    let config = load_config(&args.config)?;
    let psi0 = parse_state(&config.system, &args.initial).context("--initial")?;
    let target = parse_state(&config.system, &args.target).context("--target")?;
    let problem = StatePrepProblem::new(config, psi0, target, parse_time(&args.time)?, parse_time(&args.dt)?)?;
    let settings = OptimizerSettings {
        seeds: args.seeds,
        base_seed: args.seed,
        max_iterations: args.max_iterations,
        stop_fidelity: args.stop_at,
        ..OptimizerSettings::default()
    };
    settings.validate()?;
    let gens = generator_set(&problem.config)?;
    if !lie_closure(&gens, DEFAULT_TOLERANCE)?.controllable {
        eprintln!("warning: configuration is not controllable; some targets may be unreachable");
    }
    create_dir(&args.out)?;

    let seeds = settings.seed_list();
    let start = Instant::now();
    let result = multi_seed_search_with(&problem, &settings, &seeds)?;
    let record = RunRecord::from_optimization(&problem, &settings, &seeds, &result, start.elapsed().as_secs_f64());

    record.write(&args.out.join("run.json"))?;
    write(&args.out.join("waveform.csv"), &result.best_knots.to_csv()?)?;
    let mut trace = String::from("# alkspin-fidelity v1\niteration\tfidelity\n");
    for (i, f) in record.fidelity_history.iter().enumerate() {
        trace.push_str(&format!("{i}\t{f:e}\n"));
    }
    write(&args.out.join("fidelity.tsv"), &trace)?;

    for r in &result.runs {
        println!(
            "seed {:>20}  fidelity {:.6}  iterations {:>5}  {:?}",
            r.seed, r.fidelity, r.iterations, r.convergence
        );
    }
    println!("best fidelity {:.6} (seed {})", result.best_fidelity, result.best_seed);
    println!("wrote {}", args.out.display());
    match args.threshold {
        Some(t) if result.best_fidelity < t => {
            eprintln!("best fidelity {:.6} is below the requested {t}", result.best_fidelity);
            Ok(EXIT_VERDICT)
        }
        _ => Ok(EXIT_OK),
    }
}

pub fn simulate(args: SimulateArgs) -> Result<u8> {
    let grid = parse_grid(&args.grid)?;
    let record = args.record.as_deref().map(RunRecord::load).transpose()?;
    let (config, knots) = match (&record, &args.waveform) {
        (Some(r), _) => (r.config.clone(), r.knots.clone()),
        (None, Some(path)) => {
            let source = args
                .config
                .as_deref()
                .ok_or_else(|| anyhow!("--config is required with --waveform"))?;
            let config = load_config(source)?;
            let text = fs::read_to_string(path).with_context(|| format!("{}: cannot read", path.display()))?;
            let knots = WaveformKnots::from_csv(&text, &config).with_context(|| path.display().to_string())?;
            (config, knots)
        }
        (None, None) => bail!("either --waveform or --record is required"),
    };
    if knots.total_time <= 0.0 {
        bail!("waveform has zero length");
    }
    let violations = validate(&knots);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!(
                "violation: channel {} {:?} knot {} {:?} exceeded by {:e}",
                v.channel, v.stream, v.knot, v.kind, v.magnitude
            );
        }
        if !args.force {
            bail!("{} waveform violations (use --force to simulate anyway)", violations.len());
        }
    }
    let system = config.system;
    let psi0 = match (&args.initial, &record) {
        (Some(s), _) => parse_state(&system, s).context("--initial")?,
        (None, Some(r)) => r.psi0.clone(),
        (None, None) => parse_state(&system, "stretched")?,
    };
    let target = match (&args.target, &record) {
        (Some(s), _) => Some(parse_state(&system, s).context("--target")?),
        (None, Some(r)) => r.target.clone(),
        (None, None) => None,
    };
    let dt = match (&args.dt, &record) {
        (Some(s), _) => parse_time(s)?,
        (None, Some(r)) => r.dt,
        (None, None) => 0.1,
    };
    create_dir(&args.out)?;

    let start = Instant::now();
    let controls = interpolate(&knots, dt)?;
    let traj = propagate(&config, &controls, &psi0, &args.snapshots)?;
    let final_fidelity = target.as_ref().map(|t| fidelity(t, traj.final_state()));

    let mut refs = Vec::new();
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let sphere = WignerSphereGrid::from_state(&snap.state, &system, grid)?;
        let file = format!("wigner_{i:02}.txt");
        sphere.write(&args.out.join(&file))?;
        refs.push(SnapshotRef {
            time: snap.time,
            file,
            radii: sphere.radii,
        });
    }
    let trajectory = json!({
        "format": "alkspin-trajectory/1",
        "snapshots": traj.snapshots,
        "final_state": traj.final_state(),
        "final_fidelity": final_fidelity,
    });
    write(
        &args.out.join("trajectory.json"),
        &(serde_json::to_string_pretty(&trajectory)? + "\n"),
    )?;
    let out_record = RunRecord {
        format: RUN_RECORD_FORMAT.into(),
        tool_version: TOOL_VERSION.into(),
        command: "simulate".into(),
        config,
        psi0,
        target,
        total_time: knots.total_time,
        dt,
        settings: None,
        seeds: record.as_ref().map(|r| r.seeds.clone()).unwrap_or_default(),
        runs: Vec::new(),
        knots,
        fidelity_history: Vec::new(),
        final_fidelity,
        snapshots: refs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    out_record.write(&args.out.join("run.json"))?;

    for s in &out_record.snapshots {
        let r = s.radii;
        println!(
            "t = {:>8.3} us  r++ {:.4}  r-- {:.4}  c {:.4}  -> {}",
            s.time, r.r_pp, r.r_mm, r.coherence, s.file
        );
    }
    if let Some(f) = final_fidelity {
        println!("final fidelity {f:.10}");
    }
    Ok(EXIT_OK)
}

pub fn wigner(args: WignerArgs) -> Result<u8> {
    let config = load_config(&args.config)?;
    let state: StateVector = parse_state(&config.system, &args.target).context("--target")?;
    let grid = parse_grid(&args.grid)?;
    let sphere = WignerSphereGrid::from_state(&state, &config.system, grid)?;
    sphere.write(&args.out)?;
    let r = sphere.radii;
    println!(
        "r++ {:.6}  r-- {:.6}  c {:.6}  r_re {:.6}  r_im {:.6}",
        r.r_pp, r.r_mm, r.coherence, r.r_re, r.r_im
    );
    println!("wrote {}", args.out.display());
    Ok(EXIT_OK)
}

pub fn benchmark(args: BenchmarkArgs) -> Result<u8> {
    let variants: Vec<BenchmarkVariant> = load_variants(&args.config)?
        .into_iter()
        .map(|v| BenchmarkVariant {
            name: v.name,
            config: v.config,
        })
        .collect();
    let system = variants[0].config.system;
    let mut options = BenchmarkOptions {
        times: args.time,
        n_states: args.states,
        n_seeds: args.seeds,
        dt: parse_time(&args.dt)?,
        base_seed: args.seed,
        ..BenchmarkOptions::desk_scale()
    };
    options.settings.max_iterations = args.max_iterations;
    create_dir(&args.out)?;
    let table = run_benchmark(&system, &variants, &options)?;
    let tsv = table.to_tsv();
    write(&args.out.join("benchmark.tsv"), &tsv)?;
    write(&args.out.join("benchmark_long.tsv"), &table.to_long_tsv())?;
    print!("{tsv}");
    Ok(EXIT_OK)
}
