//! Lie-algebraic controllability: numerical closure of the control algebra.
//!
//! Hermitian operators are embedded isometrically into `R^{d²}` (diagonal,
//! then `√2·Re` and `√2·Im` of the strict upper triangle), so the
//! Hilbert–Schmidt inner product becomes the Euclidean one. The identity
//! direction is removed from generators; commutators are traceless already.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{
    channel_quadratures, static_hamiltonian, AmplitudeMode, ChannelKind, ChannelSpec,
    ControlConfiguration, MicrowaveTransition, PhaseMode,
};
use crate::linalg::{is_hermitian, real, OperatorMatrix, I};
use crate::spin_algebra::SpinSystem;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GeneratorSet {
    pub matrices: Vec<OperatorMatrix>,
    pub labels: Vec<String>,
}

impl GeneratorSet {
    /// Builds a set from Hermitian matrices, projecting out the identity and
    /// dropping zero or parallel duplicates.
    pub fn new(matrices: Vec<OperatorMatrix>, labels: Vec<String>) -> Result<Self> {
        if matrices.len() != labels.len() {
            return Err(Error::InvalidArgument("one label per generator required".into()));
        }
        let Some(dim) = matrices.first().map(|m| m.nrows()) else {
            return Err(Error::InvalidArgument("empty generator set".into()));
        };
        let mut set = GeneratorSet {
            matrices: Vec::new(),
            labels: Vec::new(),
        };
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for (m, label) in matrices.into_iter().zip(labels) {
            if m.nrows() != dim || !m.is_square() {
                return Err(Error::InvalidArgument(format!("generator {label} has the wrong shape")));
            }
            let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
            if !is_hermitian(&m, 1e-12 * scale) {
                return Err(Error::NotHermitian(crate::linalg::hermitian_deviation(&m)));
            }
            let traceless = remove_trace(&m);
            let v = vectorize(&traceless);
            let n = norm(&v);
            if n <= 1e-14 * scale {
                continue;
            }
            let unit: Vec<f64> = v.iter().map(|x| x / n).collect();
            let duplicate = seen.iter().any(|s| (dot(s, &unit).abs() - 1.0).abs() < 1e-12);
            if duplicate {
                continue;
            }
            seen.push(unit);
            set.matrices.push(traceless);
            set.labels.push(label);
        }
        if set.matrices.is_empty() {
            return Err(Error::InvalidArgument("generator set has no traceless content".into()));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct LieClosureResult {
    pub dimension: usize,
    /// Orthonormal vectorized traceless Hermitian operators, each of length `dim²`.
    pub basis: Vec<Vec<f64>>,
    pub controllable: bool,
    /// Number of commutator passes performed.
    pub iterations: usize,
}

/// Which commutators each pass evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosureStrategy {
    /// Every newly found element against the whole library.
    LibraryPairs,
    /// Newly found elements against the generators only. Right-nested
    /// brackets of generators span the generated algebra, so the result is
    /// the same while far fewer commutators are formed.
    GeneratorBrackets,
}

pub fn lie_closure(gens: &GeneratorSet, tol: f64) -> Result<LieClosureResult> {
    lie_closure_with(gens, tol, ClosureStrategy::LibraryPairs)
}

pub fn lie_closure_with(
    gens: &GeneratorSet,
    tol: f64,
    strategy: ClosureStrategy,
) -> Result<LieClosureResult> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} outside (0, 1)")));
    }
    if gens.is_empty() {
        return Err(Error::InvalidArgument("empty generator set".into()));
    }
    let d = gens.dim();
    let full = d * d - 1;
    let mut lib = Library::new(d, tol);

    let mut fresh = Vec::new();
    for g in &gens.matrices {
        if let Some(i) = lib.insert(g)? {
            fresh.push(i);
        }
    }
    let generators: Vec<usize> = fresh.clone();
    let mut iterations = 0;
    while !fresh.is_empty() && lib.len() < full {
        iterations += 1;
        let mut next = Vec::new();
        'pass: for &a in &fresh {
            let partners: Vec<usize> = match strategy {
                ClosureStrategy::LibraryPairs => (0..lib.len()).collect(),
                ClosureStrategy::GeneratorBrackets => generators.clone(),
            };
            for b in partners {
                if a == b {
                    continue;
                }
                let c = lie_bracket(&lib.matrices[a], &lib.matrices[b]);
                if let Some(i) = lib.insert(&c)? {
                    next.push(i);
                    if lib.len() == full {
                        break 'pass;
                    }
                }
            }
        }
        fresh = next;
    }
    let dimension = lib.len();
    Ok(LieClosureResult {
        dimension,
        controllable: dimension == full,
        basis: lib.vectors,
        iterations,
    })
}

/// `i[A, B]`, Hermitian for Hermitian `A`, `B`.
fn lie_bracket(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    let ab = a * b;
    (&ab - ab.adjoint()) * I
}

struct Library {
    dim: usize,
    tol: f64,
    vectors: Vec<Vec<f64>>,
    matrices: Vec<OperatorMatrix>,
}

impl Library {
    fn new(dim: usize, tol: f64) -> Self {
        Library {
            dim,
            tol,
            vectors: Vec::new(),
            matrices: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.vectors.len()
    }

    /// Orthogonalizes `m` against the library (two classical passes) and
    /// appends the residual if it survives the tolerance test.
    fn insert(&mut self, m: &OperatorMatrix) -> Result<Option<usize>> {
        let mut v = vectorize(m);
        let input = norm(&v);
        if input == 0.0 {
            return Ok(None);
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = self.vectors.iter().map(|b| dot(b, &v)).collect();
            for (b, c) in self.vectors.iter().zip(coeffs) {
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let residual = norm(&v);
        if residual <= self.tol * input.max(1.0) {
            return Ok(None);
        }
        if self.len() >= self.dim * self.dim - 1 {
            return Err(Error::ClosureOverflow {
                limit: self.dim * self.dim - 1,
            });
        }
        v.iter_mut().for_each(|x| *x /= residual);
        self.matrices.push(unvectorize(&v, self.dim));
        self.vectors.push(v);
        Ok(Some(self.len() - 1))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_trace(m: &OperatorMatrix) -> OperatorMatrix {
    let d = m.nrows();
    let shift = crate::linalg::trace(m) / real(d as f64);
    let mut out = m.clone();
    for i in 0..d {
        out[(i, i)] -= shift;
    }
    out
}

/// Isometric real embedding of a Hermitian matrix.
pub fn vectorize(m: &OperatorMatrix) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for i in 0..d {
        v.push(m[(i, i)].re);
    }
    let s = std::f64::consts::SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            v.push(s * m[(i, j)].re);
            v.push(s * m[(i, j)].im);
        }
    }
    v
}

pub fn unvectorize(v: &[f64], d: usize) -> OperatorMatrix {
    let mut m = OperatorMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = real(v[i]);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = d;
    for i in 0..d {
        for j in i + 1..d {
            let z = num_complex::Complex64::new(s * v[k], s * v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

fn channel_label(kind: ChannelKind, part: &str) -> String {
    format!("{kind}:{part}")
}

pub fn generator_set(config: &ControlConfiguration) -> Result<GeneratorSet> {
    config.validate()?;
    let mut mats = Vec::new();
    let mut labels = Vec::new();
    let mut drift = static_hamiltonian(config);
    for ch in &config.channels {
        if ch.amplitude_mode == AmplitudeMode::Off {
            continue;
        }
        let (a, b) = channel_quadratures(&config.system, ch.kind)?;
        match (ch.amplitude_mode, ch.phase_mode) {
            (_, PhaseMode::Controlled) => {
                mats.push(a);
                labels.push(channel_label(ch.kind, "cos"));
                mats.push(b);
                labels.push(channel_label(ch.kind, "sin"));
            }
            (AmplitudeMode::Controlled, PhaseMode::Fixed(phi)) => {
                mats.push(a * real(phi.cos()) + b * real(phi.sin()));
                labels.push(channel_label(ch.kind, "fixed-phase"));
            }
            (_, PhaseMode::Fixed(phi)) => {
                drift += (a * real(phi.cos()) + b * real(phi.sin())) * real(ch.max_rabi);
            }
        }
    }
    if drift.iter().any(|z| z.norm() > 0.0) {
        mats.push(drift);
        labels.push("drift".into());
    }
    if mats.is_empty() {
        return Err(Error::InvalidConfig("configuration has no control or drift terms".into()));
    }
    GeneratorSet::new(mats, labels)
}

pub fn is_controllable(config: &ControlConfiguration) -> Result<bool> {
    Ok(lie_closure(&generator_set(config)?, DEFAULT_TOLERANCE)?.controllable)
}

/// Outcome classes of a configuration-scan cell, keyed by which microwave
/// transitions render the system controllable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    All,
    AllButClock,
    /// Stretched transitions `±f₋ → ±f₊` and `±f₋ → ±(f₊ − 2)` only.
    StretchedOnly,
    None,
    Unclassified,
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OutcomeClass::All => "all",
            OutcomeClass::AllButClock => "all_but_clock",
            OutcomeClass::StretchedOnly => "stretched_only",
            OutcomeClass::None => "none",
            OutcomeClass::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

pub fn is_stretched_class_transition(system: &SpinSystem, t: &MicrowaveTransition) -> bool {
    let fm = system.f_minus();
    let fp = system.f_plus();
    let two = crate::half::Half::integer(2);
    [(fm, fp), (-fm, -fp), (fm, fp - two), (-fm, -(fp - two))]
        .iter()
        .any(|&(a, b)| t.m_minus == a && t.m_plus == b)
}

pub fn classify(system: &SpinSystem, verdicts: &[(MicrowaveTransition, bool)]) -> OutcomeClass {
    let all: Vec<MicrowaveTransition> = MicrowaveTransition::all(system);
    let controllable: Vec<MicrowaveTransition> =
        verdicts.iter().filter(|(_, ok)| *ok).map(|(t, _)| *t).collect();
    let covers_all = all.iter().all(|t| verdicts.iter().any(|(v, _)| v == t));
    if !covers_all {
        return OutcomeClass::Unclassified;
    }
    let matches = |pred: &dyn Fn(&MicrowaveTransition) -> bool| {
        all.iter().all(|t| controllable.contains(t) == pred(t))
    };
    if matches(&|_| true) {
        OutcomeClass::All
    } else if matches(&|t| !t.is_clock()) {
        OutcomeClass::AllButClock
    } else if matches(&|t| is_stretched_class_transition(system, t)) {
        OutcomeClass::StretchedOnly
    } else if controllable.is_empty() {
        OutcomeClass::None
    } else {
        OutcomeClass::Unclassified
    }
}

/// Axes of the configuration scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanOptions {
    pub mw_amplitude_controlled: Vec<bool>,
    pub mw_phase_controlled: Vec<bool>,
    pub detuned: Vec<bool>,
    pub rf_polarizations: Vec<usize>,
    /// Transitions to test; `None` means every allowed transition.
    pub transitions: Option<Vec<MicrowaveTransition>>,
    /// Detuning used by detuned cells, as a fraction of each field's max Rabi frequency.
    pub detuning_fraction: f64,
    pub rf_max_rabi: f64,
    pub mw_max_rabi: f64,
    pub tol: f64,
}

impl ScanOptions {
    /// Every combination of the scan axes with the baseline field strengths.
    pub fn full() -> Self {
        ScanOptions {
            mw_amplitude_controlled: vec![true, false],
            mw_phase_controlled: vec![true, false],
            detuned: vec![false, true],
            rf_polarizations: vec![2, 1],
            transitions: None,
            detuning_fraction: 0.1,
            rf_max_rabi: crate::hamiltonians::khz(15.0),
            mw_max_rabi: crate::hamiltonians::khz(40.0),
            tol: DEFAULT_TOLERANCE,
        }
    }

    /// A reduced scan with one rf polarization and resonant fields.
    pub fn smoke() -> Self {
        ScanOptions {
            detuned: vec![false],
            rf_polarizations: vec![1],
            ..Self::full()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanAxes {
    pub mw_amplitude_controlled: bool,
    pub mw_phase_controlled: bool,
    pub detuned: bool,
    pub rf_polarizations: usize,
}

impl ScanAxes {
    /// Number of channels carrying any time-dependent parameter.
    pub fn time_dependent_controls(&self) -> usize {
        self.rf_polarizations + usize::from(self.mw_amplitude_controlled || self.mw_phase_controlled)
    }

    pub fn configuration(
        &self,
        system: SpinSystem,
        transition: MicrowaveTransition,
        options: &ScanOptions,
    ) -> Result<ControlConfiguration> {
        let mut channels = vec![ChannelSpec::new(ChannelKind::RfX, options.rf_max_rabi, 10.0)];
        if self.rf_polarizations >= 2 {
            channels.push(ChannelSpec::new(ChannelKind::RfY, options.rf_max_rabi, 10.0));
        }
        let amplitude = if self.mw_amplitude_controlled {
            AmplitudeMode::Controlled
        } else {
            AmplitudeMode::FixedAtMax
        };
        let phase = if self.mw_phase_controlled {
            PhaseMode::Controlled
        } else {
            PhaseMode::Fixed(0.0)
        };
        channels.push(
            ChannelSpec::new(ChannelKind::Microwave(transition), options.mw_max_rabi, 1.0)
                .with_amplitude(amplitude)
                .with_phase(phase),
        );
        let (drf, dmw) = if self.detuned {
            (
                options.detuning_fraction * options.rf_max_rabi,
                options.detuning_fraction * options.mw_max_rabi,
            )
        } else {
            (0.0, 0.0)
        };
        ControlConfiguration::new(system, channels, drf, dmw)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionVerdict {
    pub transition: MicrowaveTransition,
    pub dimension: usize,
    pub controllable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanCell {
    pub axes: ScanAxes,
    pub verdicts: Vec<TransitionVerdict>,
    pub class: OutcomeClass,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanTable {
    pub system: SpinSystem,
    pub full_dimension: usize,
    pub cells: Vec<ScanCell>,
}

pub fn scan_configurations(system: &SpinSystem, options: &ScanOptions) -> Result<ScanTable> {
    let transitions = options
        .transitions
        .clone()
        .unwrap_or_else(|| MicrowaveTransition::all(system));
    let mut axes = Vec::new();
    for &rf in &options.rf_polarizations {
        for &detuned in &options.detuned {
            for &amp in &options.mw_amplitude_controlled {
                for &phase in &options.mw_phase_controlled {
                    axes.push(ScanAxes {
                        mw_amplitude_controlled: amp,
                        mw_phase_controlled: phase,
                        detuned,
                        rf_polarizations: rf,
                    });
                }
            }
        }
    }
    let jobs: Vec<(usize, MicrowaveTransition)> = (0..axes.len())
        .flat_map(|c| transitions.iter().map(move |t| (c, *t)))
        .collect();
    let results: Vec<Result<TransitionVerdict>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let config = axes[c].configuration(*system, t, options)?;
            let gens = generator_set(&config)?;
            let r = lie_closure_with(&gens, options.tol, ClosureStrategy::GeneratorBrackets)?;
            Ok(TransitionVerdict {
                transition: t,
                dimension: r.dimension,
                controllable: r.controllable,
            })
        })
        .collect();
    let mut cells: Vec<ScanCell> = axes
        .into_iter()
        .map(|a| ScanCell {
            axes: a,
            verdicts: Vec::new(),
            class: OutcomeClass::Unclassified,
        })
        .collect();
    for ((c, _), r) in jobs.iter().zip(results) {
        cells[*c].verdicts.push(r?);
    }
    for cell in &mut cells {
        let pairs: Vec<_> = cell.verdicts.iter().map(|v| (v.transition, v.controllable)).collect();
        cell.class = classify(system, &pairs);
    }
    Ok(ScanTable {
        system: *system,
        full_dimension: system.dim() * system.dim() - 1,
        cells,
    })
}

impl ScanTable {
    /// Tab-separated table: one row per (cell, transition).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "# alkspin-scan v1\nrf_polarizations\tdetuned\tmw_amplitude\tmw_phase\tm_minus\tm_plus\tdimension\tcontrollable\tclass\n",
        );
        for cell in &self.cells {
            let a = &cell.axes;
            for v in &cell.verdicts {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    a.rf_polarizations,
                    a.detuned,
                    if a.mw_amplitude_controlled { "controlled" } else { "fixed" },
                    if a.mw_phase_controlled { "controlled" } else { "fixed" },
                    v.transition.m_minus,
                    v.transition.m_plus,
                    v.dimension,
                    v.controllable,
                    cell.class
                ));
            }
        }
        out
    }

    /// Number of cells in which each transition is controllable.
    pub fn controllable_counts(&self) -> Vec<(MicrowaveTransition, usize)> {
        let mut counts: Vec<(MicrowaveTransition, usize)> = Vec::new();
        for cell in &self.cells {
            for v in &cell.verdicts {
                match counts.iter_mut().find(|(t, _)| *t == v.transition) {
                    Some(entry) => entry.1 += usize::from(v.controllable),
                    None => counts.push((v.transition, usize::from(v.controllable))),
                }
            }
        }
        counts
    }
}
