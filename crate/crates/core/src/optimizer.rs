//! Projected gradient ascent on waveform knots, multi-seed restarts and
//! benchmark sweeps over Haar-random targets.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::ControlConfiguration;
use crate::linalg::{c, CVector};
use crate::simulator::{ControlModel, FastPropagator, StateVector, StepControls};
use crate::spin_algebra::{Manifold, SpinSystem};
use crate::waveform::{project, random_knots, validate, Sampler, StreamKind, WaveformKnots};

/// Expands a top-level seed into independent per-task seeds (SplitMix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatePrepProblem {
    pub config: ControlConfiguration,
    pub psi0: StateVector,
    pub target: StateVector,
    pub total_time: f64,
    pub dt: f64,
}

impl StatePrepProblem {
    pub fn new(
        config: ControlConfiguration,
        psi0: StateVector,
        target: StateVector,
        total_time: f64,
        dt: f64,
    ) -> Result<Self> {
        config.validate()?;
        let dim = config.dim();
        if psi0.dim() != dim || target.dim() != dim {
            return Err(Error::InvalidArgument(format!("states must have dimension {dim}")));
        }
        if !(total_time > 0.0 && total_time.is_finite()) {
            return Err(Error::InvalidArgument(format!("total time {total_time} must be positive")));
        }
        if let Some(slew) = config.max_slew_time() {
            if total_time + 1e-9 < slew {
                return Err(Error::InvalidArgument(format!(
                    "total time {total_time} µs is shorter than the longest slew time {slew} µs"
                )));
            }
        }
        if !(dt > 0.0 && dt <= total_time) {
            return Err(Error::InvalidArgument(format!("time step {dt} must lie in (0, T]")));
        }
        Ok(StatePrepProblem {
            config,
            psi0,
            target,
            total_time,
            dt,
        })
    }

    /// Preparation from the stretched state `|F₊, F₊⟩`.
    pub fn from_stretched(config: ControlConfiguration, target: StateVector, total_time: f64, dt: f64) -> Result<Self> {
        let fp = config.system.f_plus();
        let psi0 = StateVector::basis(&config.system, Manifold::Plus, fp)?;
        Self::new(config, psi0, target, total_time, dt)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Initial step in normalized knot coordinates (amplitudes in units of
    /// `max_rabi`, phases in radians).
    pub step_size: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Stop once `F` exceeds this value.
    pub fidelity_threshold: f64,
    pub seeds: usize,
    /// Top-level seed from which per-restart seeds are derived.
    pub base_seed: u64,
    pub line_search: bool,
    /// Skip remaining restarts once a seed reaches this fidelity.
    pub stop_fidelity: Option<f64>,
    pub direction: SearchDirection,
    /// Curvature pairs kept by the quasi-Newton direction.
    pub memory: usize,
}

/// How the ascent direction is formed from the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchDirection {
    /// Plain projected gradient.
    Steepest,
    /// Gradient rescaled by a limited-memory inverse-curvature estimate.
    Lbfgs,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            step_size: 0.05,
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
            fidelity_threshold: 1.0 - 1e-4,
            seeds: 20,
            base_seed: 0,
            line_search: true,
            stop_fidelity: None,
            direction: SearchDirection::Lbfgs,
            memory: 10,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument("step size must be positive".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| derive_seed(self.base_seed, i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    GradientTolerance,
    FidelityThreshold,
    MaxIterations,
    /// Backtracking could not find an improving step.
    StepCollapsed,
}

impl fmt::Display for Convergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convergence::GradientTolerance => "gradient_tolerance",
            Convergence::FidelityThreshold => "fidelity_threshold",
            Convergence::MaxIterations => "max_iterations",
            Convergence::StepCollapsed => "step_collapsed",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub fidelity: f64,
    pub iterations: usize,
    pub convergence: Convergence,
    /// Fidelity after every accepted iteration, starting with the initial guess.
    pub history: Vec<f64>,
    pub knots: WaveformKnots,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_knots: WaveformKnots,
    pub best_fidelity: f64,
    pub best_seed: u64,
    pub runs: Vec<SeedRun>,
}

impl OptimizationResult {
    fn from_runs(runs: Vec<SeedRun>) -> Self {
        let best = runs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.fidelity.total_cmp(&b.1.fidelity).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("at least one run");
        OptimizationResult {
            best_knots: runs[best].knots.clone(),
            best_fidelity: runs[best].fidelity,
            best_seed: runs[best].seed,
            runs,
        }
    }

    pub fn fidelities(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.fidelity).collect()
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.runs.iter().map(|r| r.iterations).collect()
    }
}

/// Fidelity and gradient of one problem for one knot layout.
pub struct Objective<'p> {
    problem: &'p StatePrepProblem,
    model: ControlModel,
    sampler: Sampler,
    template: WaveformKnots,
    durations: Vec<f64>,
}

impl<'p> Objective<'p> {
    pub fn new(problem: &'p StatePrepProblem, template: &WaveformKnots) -> Result<Self> {
        template.check_against(&problem.config)?;
        let sampler = Sampler::new(template, problem.dt)?;
        let durations = (0..sampler.n_steps()).map(|s| sampler.step_duration(s)).collect();
        Ok(Objective {
            problem,
            model: ControlModel::new(&problem.config)?,
            sampler,
            template: template.clone(),
            durations,
        })
    }

    pub fn fidelity(&self, params: &[f64]) -> f64 {
        let mids = self.sampler.midpoints(params);
        let mut prop = FastPropagator::new(&self.model);
        let out = prop.evolve(
            &StepControls {
                amplitude: &mids.amplitude,
                phase: &mids.phase,
                durations: &self.durations,
            },
            self.problem.psi0.amplitudes(),
            false,
        );
        let overlap: num_complex::Complex64 = self
            .problem
            .target
            .amplitudes()
            .iter()
            .zip(&out)
            .map(|(t, p)| t.conj() * p)
            .sum();
        overlap.norm_sqr()
    }

    /// `(F, ∂F/∂knot)` with knots in physical units.
    pub fn fidelity_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let mids = self.sampler.midpoints(params);
        let mut prop = FastPropagator::new(&self.model);
        let (f, gx, gy) = prop.fidelity_gradient(
            &StepControls {
                amplitude: &mids.amplitude,
                phase: &mids.phase,
                durations: &self.durations,
            },
            self.problem.psi0.amplitudes(),
            self.problem.target.amplitudes(),
        );
        let n = gx.len();
        let mut d_amp = vec![0.0; n];
        let mut d_phase = vec![0.0; n];
        for k in 0..n {
            let (s, co) = mids.phase[k].sin_cos();
            d_amp[k] = gx[k] * co + gy[k] * s;
            d_phase[k] = mids.amplitude[k] * (-gx[k] * s + gy[k] * co);
        }
        let g = self.sampler.pullback(&mids, &d_amp, &d_phase, self.template.param_count());
        (f, g)
    }

    /// Per-variable scale turning knots into normalized coordinates.
    fn scales(&self) -> Vec<f64> {
        let mut out = vec![1.0; self.template.param_count()];
        for s in self.template.streams() {
            if s.kind == StreamKind::Amplitude {
                let max = self.template.channels[s.channel].spec.max_rabi;
                out[s.offset..s.offset + s.len].iter_mut().for_each(|x| *x = max);
            }
        }
        out
    }
}

/// `∇F` with respect to every free knot variable.
pub fn gradient(problem: &StatePrepProblem, knots: &WaveformKnots) -> Result<Vec<f64>> {
    let violations = validate(knots);
    if let Some(v) = violations.first() {
        return Err(Error::InvalidWaveform(format!("{} constraint violation(s), first: {v}", violations.len())));
    }
    let objective = Objective::new(problem, knots)?;
    Ok(objective.fidelity_and_gradient(&knots.params()).1)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Single-seed projected gradient ascent from `random_knots(seed)`.
pub fn ascend(problem: &StatePrepProblem, settings: &OptimizerSettings, seed: u64) -> Result<SeedRun> {
    settings.validate()?;
    let knots = random_knots(&problem.config, problem.total_time, seed)?;
    ascend_from(problem, settings, seed, knots)
}

/// Projected gradient ascent from given knots.
pub fn ascend_from(
    problem: &StatePrepProblem,
    settings: &OptimizerSettings,
    seed: u64,
    mut knots: WaveformKnots,
) -> Result<SeedRun> {
    settings.validate()?;
    project(&mut knots);
    let objective = Objective::new(problem, &knots)?;
    let scales = objective.scales();
    let to_params = |x: &[f64]| -> Vec<f64> { x.iter().zip(&scales).map(|(x, s)| x * s).collect() };
    let to_x = |p: &[f64]| -> Vec<f64> { p.iter().zip(&scales).map(|(p, s)| p / s).collect() };
    // Feasible point nearest to `x`, in normalized coordinates.
    let feasible = |x: &[f64], knots: &mut WaveformKnots| -> Vec<f64> {
        knots.set_params(&to_params(x)).expect("layout fixed");
        project(knots);
        to_x(&knots.params())
    };

    let mut x = to_x(&knots.params());
    let (mut f, g) = objective.fidelity_and_gradient(&to_params(&x));
    // Gradient in normalized coordinates x = knot / scale.
    let mut gx: Vec<f64> = g.iter().zip(&scales).map(|(g, s)| g * s).collect();
    let mut history = vec![f];
    let mut step = settings.step_size;
    let mut memory: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut iterations = 0;
    let convergence = loop {
        if f > settings.fidelity_threshold {
            break Convergence::FidelityThreshold;
        }
        if norm(&gx) < settings.gradient_tolerance {
            break Convergence::GradientTolerance;
        }
        if iterations >= settings.max_iterations {
            break Convergence::MaxIterations;
        }
        iterations += 1;

        let quasi_newton = settings.direction == SearchDirection::Lbfgs && !memory.is_empty();
        let direction = if quasi_newton { lbfgs_direction(&gx, &memory) } else { gx.clone() };
        let mut alpha = if quasi_newton { 1.0 } else { step };

        let next = if settings.line_search {
            let mut accepted = None;
            while alpha > 1e-12 {
                let xt: Vec<f64> = x.iter().zip(&direction).map(|(x, d)| x + alpha * d).collect();
                let xt = feasible(&xt, &mut knots);
                let gain: f64 = gx.iter().zip(xt.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
                if gain > 0.0 {
                    let ft = objective.fidelity(&to_params(&xt));
                    if ft >= f + ARMIJO * gain {
                        accepted = Some(xt);
                        break;
                    }
                } else if quasi_newton {
                    // Projection destroyed ascent; fall back to the gradient.
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some(xt) => {
                    if !quasi_newton {
                        step = (alpha * 1.5).min(1e3);
                    }
                    xt
                }
                None if quasi_newton => {
                    memory.clear();
                    iterations -= 1;
                    continue;
                }
                None => break Convergence::StepCollapsed,
            }
        } else {
            let xt: Vec<f64> = x.iter().zip(&direction).map(|(x, d)| x + alpha * d).collect();
            feasible(&xt, &mut knots)
        };

        let (fn_, g) = objective.fidelity_and_gradient(&to_params(&next));
        let gn: Vec<f64> = g.iter().zip(&scales).map(|(g, s)| g * s).collect();
        if settings.direction == SearchDirection::Lbfgs {
            let s_k: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y_k: Vec<f64> = gx.iter().zip(&gn).map(|(a, b)| a - b).collect();
            if dot(&s_k, &y_k) > 1e-12 * norm(&s_k) * norm(&y_k) {
                memory.push((s_k, y_k));
                if memory.len() > settings.memory.max(1) {
                    memory.remove(0);
                }
            }
        }
        x = next;
        f = fn_;
        gx = gn;
        history.push(f);
    };
    knots.set_params(&to_params(&x))?;
    Ok(SeedRun {
        seed,
        fidelity: f.clamp(0.0, 1.0),
        iterations,
        convergence,
        history,
        knots,
    })
}

const ARMIJO: f64 = 1e-4;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion for the ascent direction of `F`; `memory` holds
/// `(s, y)` with `y = g_old - g_new`.
fn lbfgs_direction(g: &[f64], memory: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let rho = 1.0 / dot(s, y);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
        alphas.push((a, rho));
    }
    let (s, y) = memory.last().expect("nonempty memory");
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|q| *q *= gamma);
    for ((s, y), (a, rho)) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(q, s)| *q += s * (a - b));
    }
    q
}

/// Runs [`ascend`] for every seed in `settings.seed_list()` and keeps the best.
/// With `stop_fidelity`, restarts after the first seed (in list order) that
/// reaches it are dropped, so the outcome does not depend on scheduling.
pub fn multi_seed_search(problem: &StatePrepProblem, settings: &OptimizerSettings) -> Result<OptimizationResult> {
    multi_seed_search_with(problem, settings, &settings.seed_list())
}

pub fn multi_seed_search_with(
    problem: &StatePrepProblem,
    settings: &OptimizerSettings,
    seeds: &[u64],
) -> Result<OptimizationResult> {
    settings.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("empty seed list".into()));
    }
    let batch = match settings.stop_fidelity {
        Some(_) => rayon::current_num_threads().max(1),
        None => seeds.len(),
    };
    let mut runs = Vec::new();
    for chunk in seeds.chunks(batch) {
        let results: Vec<Result<SeedRun>> = chunk.par_iter().map(|&s| ascend(problem, settings, s)).collect();
        for r in results {
            let run = r?;
            let done = settings.stop_fidelity.is_some_and(|t| run.fidelity >= t);
            runs.push(run);
            if done {
                return Ok(OptimizationResult::from_runs(runs));
            }
        }
    }
    Ok(OptimizationResult::from_runs(runs))
}

/// Normalized vector of independent standard complex Gaussian entries.
pub fn haar_random_state(dim: usize, seed: u64) -> Result<StateVector> {
    if dim < 2 {
        return Err(Error::InvalidArgument("dimension must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<_> = (0..dim)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c(re, im)
        })
        .collect();
    StateVector::normalized(CVector::from_vec(v))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkVariant {
    pub name: String,
    pub config: ControlConfiguration,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub times: Vec<f64>,
    pub n_states: usize,
    pub n_seeds: usize,
    pub dt: f64,
    pub base_seed: u64,
    pub settings: OptimizerSettings,
}

impl BenchmarkOptions {
    /// Five Haar targets, five seeds, T ∈ {50, 100, 150} µs.
    pub fn desk_scale() -> Self {
        BenchmarkOptions {
            times: vec![50.0, 100.0, 150.0],
            n_states: 5,
            n_seeds: 5,
            dt: 0.1,
            base_seed: 2024,
            settings: OptimizerSettings::default(),
        }
    }

    /// Ten targets and twenty seeds over a denser time grid.
    pub fn full_scale() -> Self {
        BenchmarkOptions {
            times: (1..=8).map(|i| 25.0 * i as f64).collect(),
            n_states: 10,
            n_seeds: 20,
            ..Self::desk_scale()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateOutcome {
    pub state_index: usize,
    pub state_seed: u64,
    pub best_fidelity: f64,
    pub seed_fidelities: Vec<f64>,
    pub iterations: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub variant: String,
    pub total_time: f64,
    pub mean_fidelity: f64,
    pub std_error: f64,
    pub states: Vec<StateOutcome>,
}

impl BenchmarkRow {
    pub fn run_count(&self) -> usize {
        self.states.iter().map(|s| s.seed_fidelities.len()).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
}

pub fn benchmark(system: &SpinSystem, variants: &[BenchmarkVariant], options: &BenchmarkOptions) -> Result<BenchmarkTable> {
    if variants.is_empty() || options.times.is_empty() || options.n_states == 0 || options.n_seeds == 0 {
        return Err(Error::InvalidArgument("benchmark needs variants, times, states and seeds".into()));
    }
    for v in variants {
        v.config.validate()?;
        if v.config.system != *system {
            return Err(Error::InvalidConfig(format!("variant {} uses a different spin system", v.name)));
        }
    }
    let mut settings = options.settings.clone();
    settings.seeds = options.n_seeds;
    settings.stop_fidelity = None;
    let state_seeds: Vec<u64> = (0..options.n_states as u64)
        .map(|i| derive_seed(options.base_seed, i))
        .collect();
    let targets = state_seeds
        .iter()
        .map(|&s| haar_random_state(system.dim(), s))
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for (v, _) in variants.iter().enumerate() {
        for (t, _) in options.times.iter().enumerate() {
            for s in 0..options.n_states {
                jobs.push((v, t, s));
            }
        }
    }
    let outcomes: Vec<Result<StateOutcome>> = jobs
        .par_iter()
        .map(|&(v, t, s)| {
            let problem = StatePrepProblem::from_stretched(
                variants[v].config.clone(),
                targets[s].clone(),
                options.times[t],
                options.dt,
            )?;
            // Optimizer seeds depend on the target only, so variants and
            // durations share starting points where layouts allow.
            let seeds: Vec<u64> = (0..options.n_seeds as u64)
                .map(|k| derive_seed(state_seeds[s], k))
                .collect();
            let r = multi_seed_search_with(&problem, &settings, &seeds)?;
            Ok(StateOutcome {
                state_index: s,
                state_seed: state_seeds[s],
                best_fidelity: r.best_fidelity,
                seed_fidelities: r.fidelities(),
                iterations: r.iterations(),
            })
        })
        .collect();
    let mut outcomes = outcomes.into_iter();
    let mut rows = Vec::new();
    for v in variants {
        for &t in &options.times {
            let states = (0..options.n_states)
                .map(|_| outcomes.next().expect("one outcome per job"))
                .collect::<Result<Vec<_>>>()?;
            let fids: Vec<f64> = states.iter().map(|s| s.best_fidelity).collect();
            let (mean, se) = mean_and_standard_error(&fids);
            rows.push(BenchmarkRow {
                variant: v.name.clone(),
                total_time: t,
                mean_fidelity: mean,
                std_error: se,
                states,
            });
        }
    }
    Ok(BenchmarkTable { rows })
}

pub fn mean_and_standard_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl BenchmarkTable {
    pub const HEADER: &'static str = "# alkspin-benchmark v1";

    /// Tab-separated summary: one row per (variant, T).
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\nvariant\ttotal_time_us\tmean_fidelity\tstd_error\tstate_fidelities\n", Self::HEADER);
        for r in &self.rows {
            let per: Vec<String> = r.states.iter().map(|s| format!("{:.6}", s.best_fidelity)).collect();
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{}\n",
                r.variant,
                r.total_time,
                r.mean_fidelity,
                r.std_error,
                per.join(",")
            ));
        }
        out
    }

    /// Long format: one line per (variant, T, state, seed).
    pub fn to_long_tsv(&self) -> String {
        let mut out = format!(
            "{}\nvariant\ttotal_time_us\tstate_index\tstate_seed\tseed_index\tfidelity\titerations\tbest_for_state\n",
            Self::HEADER
        );
        for r in &self.rows {
            for s in &r.states {
                for (k, (f, it)) in s.seed_fidelities.iter().zip(&s.iterations).enumerate() {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\t{:.9}\t{}\t{:.9}\n",
                        r.variant, r.total_time, s.state_index, s.state_seed, k, f, it, s.best_fidelity
                    ));
                }
            }
        }
        out
    }
}
