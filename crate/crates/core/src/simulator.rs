//! Piecewise-constant propagation under the rotating-frame Hamiltonian.
//!
//! Two evaluation paths share one [`ControlModel`]: dense step propagators
//! (`exp(-iHdt)` by Padé scaling and squaring) used by [`propagate`], and a
//! sparse truncated-Taylor action on state vectors used in the optimizer's
//! inner loop together with its exact adjoint derivative.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{channel_quadratures, static_hamiltonian, ControlConfiguration, ControlSample};
use crate::linalg::{expm, hermitian_deviation, norm1, real, CVector, OperatorMatrix, I};
use crate::spin_algebra::{Manifold, SpinSystem};
use crate::waveform::SampledControls;

const NORM_TOL: f64 = 1e-10;

/// Normalized state in the direct-sum basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct StateVector(CVector);

impl StateVector {
    pub fn new(v: CVector) -> Result<Self> {
        let n = v.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(StateVector(v))
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(v: CVector) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::NotNormalized(n));
        }
        Ok(StateVector(v / real(n)))
    }

    pub fn basis(system: &SpinSystem, manifold: Manifold, m: crate::half::Half) -> Result<Self> {
        Ok(StateVector(system.basis_vector(manifold, m)?))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn vector(&self) -> &CVector {
        &self.0
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn density(&self) -> OperatorMatrix {
        &self.0 * self.0.adjoint()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.0.dotc(&other.0)
    }
}

impl TryFrom<Vec<Complex64>> for StateVector {
    type Error = Error;
    fn try_from(v: Vec<Complex64>) -> Result<Self> {
        StateVector::new(CVector::from_vec(v))
    }
}

impl From<StateVector> for Vec<Complex64> {
    fn from(s: StateVector) -> Self {
        s.0.as_slice().to_vec()
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// `|⟨target|final⟩|²`, clipped into `[0, 1]`.
pub fn fidelity(target: &StateVector, final_state: &StateVector) -> f64 {
    target.inner(final_state).norm_sqr().clamp(0.0, 1.0)
}

/// Unitary `exp(-i H dt)`.
pub fn step_propagator(h: &OperatorMatrix, dt: f64) -> Result<OperatorMatrix> {
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let dev = hermitian_deviation(h);
    if !h.is_square() || dev > 1e-12 * scale {
        return Err(Error::NotHermitian(dev));
    }
    Ok(expm(&(h * (-I * dt))))
}

/// Sparse operator as parallel row/column/value arrays.
#[derive(Clone, Debug)]
struct Sparse {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl Sparse {
    fn from_dense(m: &OperatorMatrix) -> Self {
        let mut s = Sparse {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        };
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != Complex64::new(0.0, 0.0) {
                    s.rows.push(i);
                    s.cols.push(j);
                    s.vals.push(m[(i, j)]);
                }
            }
        }
        s
    }

    /// `⟨z| S |v⟩`.
    #[inline]
    fn sandwich(&self, z: &[Complex64], v: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..self.vals.len() {
            acc += z[self.rows[k]].conj() * self.vals[k] * v[self.cols[k]];
        }
        acc
    }
}

/// Drift plus the two quadrature operators of every channel, precomputed
/// densely and on a shared sparsity pattern.
#[derive(Clone, Debug)]
pub struct ControlModel {
    pub dim: usize,
    pub drift: OperatorMatrix,
    /// `(A, B)` per channel: the channel adds `Ω cos φ A + Ω sin φ B`.
    pub quadratures: Vec<(OperatorMatrix, OperatorMatrix)>,
    pattern_rows: Vec<usize>,
    pattern_cols: Vec<usize>,
    drift_vals: Vec<Complex64>,
    quad_vals: Vec<(Vec<Complex64>, Vec<Complex64>)>,
    quad_sparse: Vec<(Sparse, Sparse)>,
    /// Bound on `‖H‖₁` over all admissible controls.
    norm_bound: f64,
}

impl ControlModel {
    pub fn new(config: &ControlConfiguration) -> Result<Self> {
        config.validate()?;
        let dim = config.dim();
        let drift = static_hamiltonian(config);
        let quadratures = config
            .channels
            .iter()
            .map(|ch| channel_quadratures(&config.system, ch.kind))
            .collect::<Result<Vec<_>>>()?;
        let mut pattern = Vec::new();
        for j in 0..dim {
            for i in 0..dim {
                let zero = Complex64::new(0.0, 0.0);
                let used = drift[(i, j)] != zero
                    || quadratures.iter().any(|(a, b)| a[(i, j)] != zero || b[(i, j)] != zero);
                if used {
                    pattern.push((i, j));
                }
            }
        }
        let gather = |m: &OperatorMatrix| pattern.iter().map(|&(i, j)| m[(i, j)]).collect::<Vec<_>>();
        let mut norm_bound = norm1(&drift);
        for (ch, (a, b)) in config.channels.iter().zip(&quadratures) {
            norm_bound += ch.max_rabi * (norm1(a) + norm1(b));
        }
        Ok(ControlModel {
            dim,
            drift_vals: gather(&drift),
            quad_vals: quadratures.iter().map(|(a, b)| (gather(a), gather(b))).collect(),
            quad_sparse: quadratures.iter().map(|(a, b)| (Sparse::from_dense(a), Sparse::from_dense(b))).collect(),
            pattern_rows: pattern.iter().map(|p| p.0).collect(),
            pattern_cols: pattern.iter().map(|p| p.1).collect(),
            drift,
            quadratures,
            norm_bound,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.quadratures.len()
    }

    /// Dense Hamiltonian for `(amplitude, phase)` per channel.
    pub fn hamiltonian(&self, amplitude: &[f64], phase: &[f64]) -> OperatorMatrix {
        let mut h = self.drift.clone();
        for (c, (a, b)) in self.quadratures.iter().enumerate() {
            if amplitude[c] != 0.0 {
                h += a * real(amplitude[c] * phase[c].cos()) + b * real(amplitude[c] * phase[c].sin());
            }
        }
        h
    }

    pub fn hamiltonian_for(&self, sample: &ControlSample) -> Result<OperatorMatrix> {
        if sample.values.len() != self.n_channels() {
            return Err(Error::InvalidArgument("sample does not match the configuration".into()));
        }
        let amp: Vec<f64> = sample.values.iter().map(|v| v.amplitude).collect();
        let phase: Vec<f64> = sample.values.iter().map(|v| v.phase).collect();
        Ok(self.hamiltonian(&amp, &phase))
    }

    fn sparse_values(&self, amplitude: &[f64], phase: &[f64], out: &mut [Complex64]) {
        out.copy_from_slice(&self.drift_vals);
        for (c, (a, b)) in self.quad_vals.iter().enumerate() {
            let x = amplitude[c] * phase[c].cos();
            let y = amplitude[c] * phase[c].sin();
            if x == 0.0 && y == 0.0 {
                continue;
            }
            for k in 0..out.len() {
                out[k] += a[k] * x + b[k] * y;
            }
        }
    }

    /// Substep count and Taylor order for a step of length `dt`.
    fn taylor_plan(&self, dt: f64) -> (usize, usize) {
        let a = self.norm_bound * dt;
        let substeps = a.ceil().max(1.0) as usize;
        let x = a / substeps as f64;
        let mut order = 1;
        let mut term = x;
        while order < 40 {
            term *= x / (order + 1) as f64;
            if term <= 1e-17 {
                break;
            }
            order += 1;
        }
        (substeps, order)
    }

    /// `y = -i dt H x` on the sparse pattern.
    #[inline]
    fn apply_a(&self, h: &[Complex64], dt: f64, x: &[Complex64], y: &mut [Complex64]) {
        y.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for k in 0..h.len() {
            y[self.pattern_rows[k]] += h[k] * x[self.pattern_cols[k]];
        }
        let f = Complex64::new(0.0, -dt);
        y.iter_mut().for_each(|z| *z *= f);
    }

    /// `y = +i dt H x`, the adjoint of [`Self::apply_a`].
    #[inline]
    fn apply_a_adjoint(&self, h: &[Complex64], dt: f64, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_a(h, -dt, x, y);
    }
}

/// Integration-step amplitudes and phases, `[step * n_channels + channel]`,
/// with the duration of each step.
#[derive(Clone, Debug)]
pub struct StepControls<'a> {
    pub amplitude: &'a [f64],
    pub phase: &'a [f64],
    pub durations: &'a [f64],
}

/// Workspace for repeated fast propagation and gradient evaluation.
pub struct FastPropagator<'m> {
    model: &'m ControlModel,
    h: Vec<Complex64>,
    terms: Vec<Vec<Complex64>>,
    costs: Vec<Vec<Complex64>>,
    /// State before every substep.
    history: Vec<Vec<Complex64>>,
}

impl<'m> FastPropagator<'m> {
    pub fn new(model: &'m ControlModel) -> Self {
        let nnz = model.pattern_rows.len();
        FastPropagator {
            model,
            h: vec![Complex64::new(0.0, 0.0); nnz],
            terms: Vec::new(),
            costs: Vec::new(),
            history: Vec::new(),
        }
    }

    fn ensure_terms(&mut self, order: usize) {
        let d = self.model.dim;
        while self.terms.len() <= order {
            self.terms.push(vec![Complex64::new(0.0, 0.0); d]);
            self.costs.push(vec![Complex64::new(0.0, 0.0); d]);
        }
    }

    /// `exp(-i H dt) psi` in place, `H` already loaded in `self.h`.
    fn taylor_step(&mut self, dt: f64, order: usize, psi: &mut [Complex64]) {
        self.ensure_terms(order);
        self.terms[0].copy_from_slice(psi);
        for j in 1..=order {
            let (lo, hi) = self.terms.split_at_mut(j);
            self.model.apply_a(&self.h, dt, &lo[j - 1], &mut hi[0]);
            let inv = 1.0 / j as f64;
            hi[0].iter_mut().for_each(|z| *z *= inv);
            for (p, t) in psi.iter_mut().zip(hi[0].iter()) {
                *p += t;
            }
        }
    }

    /// Final state, optionally recording the state before every substep.
    pub fn evolve(&mut self, controls: &StepControls, psi0: &[Complex64], record: bool) -> Vec<Complex64> {
        let nc = self.model.n_channels();
        let mut psi = psi0.to_vec();
        self.history.clear();
        for (s, &dt) in controls.durations.iter().enumerate() {
            let range = s * nc..(s + 1) * nc;
            let mut h = std::mem::take(&mut self.h);
            self.model
                .sparse_values(&controls.amplitude[range.clone()], &controls.phase[range], &mut h);
            self.h = h;
            let (substeps, order) = self.model.taylor_plan(dt);
            let sub = dt / substeps as f64;
            for _ in 0..substeps {
                if record {
                    self.history.push(psi.clone());
                }
                self.taylor_step(sub, order, &mut psi);
            }
        }
        psi
    }

    /// Fidelity and its derivatives with respect to the Cartesian quadratures
    /// `x = Ω cos φ`, `y = Ω sin φ` of every channel at every step.
    pub fn fidelity_gradient(
        &mut self,
        controls: &StepControls,
        psi0: &[Complex64],
        target: &[Complex64],
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let model = self.model;
        let nc = model.n_channels();
        let d = model.dim;
        let final_state = self.evolve(controls, psi0, true);
        let overlap: Complex64 = target.iter().zip(&final_state).map(|(t, p)| t.conj() * p).sum();
        let fid = overlap.norm_sqr();

        let steps = controls.durations.len();
        let mut gx = vec![0.0; steps * nc];
        let mut gy = vec![0.0; steps * nc];
        let mut chi = target.to_vec();
        let mut sub_index = self.history.len();
        let mut z = vec![Complex64::new(0.0, 0.0); d];
        for s in (0..steps).rev() {
            let dt = controls.durations[s];
            let range = s * nc..(s + 1) * nc;
            let mut h = std::mem::take(&mut self.h);
            model.sparse_values(&controls.amplitude[range.clone()], &controls.phase[range], &mut h);
            self.h = h;
            let (substeps, order) = model.taylor_plan(dt);
            let sub = dt / substeps as f64;
            self.ensure_terms(order);
            for _ in 0..substeps {
                sub_index -= 1;
                // v_j = A^j ψ / j!, w_l = (A†)^l χ / l!
                self.terms[0].copy_from_slice(&self.history[sub_index]);
                self.costs[0].copy_from_slice(&chi);
                for j in 1..=order {
                    let inv = 1.0 / j as f64;
                    let (lo, hi) = self.terms.split_at_mut(j);
                    model.apply_a(&self.h, sub, &lo[j - 1], &mut hi[0]);
                    hi[0].iter_mut().for_each(|x| *x *= inv);
                    let (lo, hi) = self.costs.split_at_mut(j);
                    model.apply_a_adjoint(&self.h, sub, &lo[j - 1], &mut hi[0]);
                    hi[0].iter_mut().for_each(|x| *x *= inv);
                }
                // da/du = Σ_j ⟨z_j| dA/du |v_j⟩ with z_j = Σ_l l! j!/(l+j+1)! w_l.
                let mut da = vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); nc];
                for j in 0..=order {
                    z.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
                    let mut coeff = 1.0 / (j + 1) as f64; // l = 0: j!/(j+1)!
                    for l in 0..=(order - j) {
                        if l > 0 {
                            coeff *= l as f64 / (l + j + 1) as f64;
                        }
                        for (zi, wi) in z.iter_mut().zip(&self.costs[l]) {
                            *zi += wi * coeff;
                        }
                    }
                    for (c, (a, b)) in model.quad_sparse.iter().enumerate() {
                        da[c].0 += a.sandwich(&z, &self.terms[j]);
                        da[c].1 += b.sandwich(&z, &self.terms[j]);
                    }
                }
                for (c, (dax, day)) in da.into_iter().enumerate() {
                    // dA/du = -i sub H_u
                    let scale = Complex64::new(0.0, -sub);
                    gx[s * nc + c] += 2.0 * (overlap.conj() * dax * scale).re;
                    gy[s * nc + c] += 2.0 * (overlap.conj() * day * scale).re;
                }
                // χ ← U† χ
                chi.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
                for l in 0..=order {
                    for (ci, wi) in chi.iter_mut().zip(&self.costs[l]) {
                        *ci += wi;
                    }
                }
            }
        }
        (fid, gx, gy)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub state: StateVector,
}

impl Snapshot {
    pub fn density(&self) -> OperatorMatrix {
        self.state.density()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectories hold at least the initial state")
    }
}

/// Propagates `psi0` through the piecewise-constant evolution defined by the
/// midpoint samples of `controls`. Snapshot times inside a step are reached
/// by a partial step with that step's Hamiltonian.
pub fn propagate(
    config: &ControlConfiguration,
    controls: &SampledControls,
    psi0: &StateVector,
    snapshots: &[f64],
) -> Result<Trajectory> {
    let model = ControlModel::new(config)?;
    propagate_with(&model, controls, psi0, snapshots)
}

pub fn propagate_with(
    model: &ControlModel,
    controls: &SampledControls,
    psi0: &StateVector,
    snapshots: &[f64],
) -> Result<Trajectory> {
    if psi0.dim() != model.dim {
        return Err(Error::InvalidArgument(format!(
            "initial state has dimension {}, system has {}",
            psi0.dim(),
            model.dim
        )));
    }
    if controls.midpoints.is_empty() || controls.times.len() != controls.midpoints.len() + 1 {
        return Err(Error::InvalidArgument("controls do not cover a time grid".into()));
    }
    let total = controls.total_time();
    for &t in snapshots {
        if !(0.0..=total + 1e-9).contains(&t) {
            return Err(Error::InvalidArgument(format!("snapshot time {t} outside [0, {total}]")));
        }
    }
    let mut pending: Vec<f64> = snapshots.to_vec();
    pending.sort_by(f64::total_cmp);
    let mut pending = pending.into_iter().peekable();
    let mut snaps = Vec::new();

    let mut psi = psi0.vector().clone();
    let mut states = vec![psi0.clone()];
    for (s, sample) in controls.midpoints.iter().enumerate() {
        let h = model.hamiltonian_for(sample)?;
        let (t0, t1) = (controls.times[s], controls.times[s + 1]);
        let last = s + 1 == controls.midpoints.len();
        while let Some(&t) = pending.peek() {
            if t < t1 - 1e-12 || (last && t <= t1 + 1e-9) {
                let partial = if t - t0 > 1e-12 {
                    step_propagator(&h, t - t0)? * &psi
                } else {
                    psi.clone()
                };
                snaps.push(Snapshot {
                    time: t,
                    state: StateVector(partial),
                });
                pending.next();
            } else {
                break;
            }
        }
        psi = step_propagator(&h, t1 - t0)? * psi;
        states.push(StateVector(psi.clone()));
    }
    // Snapshots requested exactly at T were taken before the final step; redo them.
    for snap in snaps.iter_mut() {
        if (snap.time - total).abs() <= 1e-9 {
            snap.state = states.last().unwrap().clone();
        }
    }
    Ok(Trajectory {
        times: controls.times.clone(),
        states,
        snapshots: snaps,
    })
}

/// Named states: `stretched`, `stretched-plus-cat` and `stretched-plus-pair`.
pub const NAMED_STATES: [&str; 3] = ["stretched", "stretched-plus-cat", "stretched-plus-pair"];

/// Parses a state description: a name from [`NAMED_STATES`], sparse terms
/// `F,m=amp;F,m=amp` (amp real or complex such as `0.5-0.1i`), or a
/// comma-separated list of all `dim` amplitudes. The norm must be 1 to 1e-6;
/// the result is renormalized exactly.
pub fn parse_state(system: &SpinSystem, spec: &str) -> Result<StateVector> {
    use crate::half::Half;
    let spec = spec.trim();
    let fp = system.f_plus();
    let fm = system.f_minus();
    let ket = |f: Half, m: Half| system.basis_vector(system.manifold_of(f).expect("valid F"), m);
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let v = match spec {
        "stretched" => ket(fp, fp)?,
        "stretched-plus-cat" => (ket(fp, fp)? + ket(fm, -fm)?) * real(r2),
        "stretched-plus-pair" => ket(fp, fp)? * real(r2) + (ket(fm, fm)? + ket(fm, -fm)?) * real(0.5),
        _ if spec.contains('=') => {
            let mut v = CVector::zeros(system.dim());
            for term in spec.split(';').map(str::trim).filter(|t| !t.is_empty()) {
                let (label, amp) = term
                    .split_once('=')
                    .ok_or_else(|| Error::parse("state", format!("term {term:?} lacks '='")))?;
                let (f, m) = label
                    .split_once(',')
                    .ok_or_else(|| Error::parse("state", format!("label {label:?} is not 'F,m'")))?;
                let f: Half = f.trim().parse()?;
                let m: Half = m.trim().parse()?;
                let manifold = system
                    .manifold_of(f)
                    .ok_or_else(|| Error::parse("state", format!("F = {f} is not a manifold of this system")))?;
                let idx = system
                    .index(manifold, m)
                    .ok_or_else(|| Error::parse("state", format!("m = {m} outside F = {f}")))?;
                v[idx] += parse_complex(amp)?;
            }
            v
        }
        _ => {
            let amps = spec
                .split(',')
                .map(parse_complex)
                .collect::<Result<Vec<_>>>()
                .map_err(|_| {
                    Error::parse(
                        "state",
                        format!("{spec:?} is not a known name ({}), term list or amplitude list", NAMED_STATES.join(", ")),
                    )
                })?;
            if amps.len() != system.dim() {
                return Err(Error::parse(
                    "state",
                    format!("{} amplitudes for dimension {}", amps.len(), system.dim()),
                ));
            }
            CVector::from_vec(amps)
        }
    };
    let n = v.norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(n));
    }
    StateVector::normalized(v)
}

fn parse_complex(s: &str) -> Result<Complex64> {
    let s = s.trim();
    s.parse::<Complex64>()
        .or_else(|_| s.replace(' ', "").parse::<Complex64>())
        .map_err(|_| Error::parse("state", format!("bad amplitude {s:?}")))
}
