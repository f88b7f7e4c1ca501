//! Four-sphere Wigner representation of states on `F₊ ⊕ F₋`.
//!
//! Each `(F, F')` block of ρ is expanded in the coupled tensors of
//! [`crate::spin_algebra`] and the multipole coefficients are mapped onto
//! spherical harmonics. The two diagonal blocks give real SU(2) Wigner
//! functions; the `(F₊, F₋)` block gives a complex coherence field whose
//! partner is its conjugate.
//!
//! Multipole coefficients use the adjoint pairing `Tr[ρ T†]` with tensors
//! oriented so that `T^(1)_0(J) ∝ +J_z`; with that choice `|J, J⟩` peaks at
//! the north pole and the field of `RρR†` is the field of ρ rotated by `R`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::half::Half;
use crate::linalg::{hermitian_deviation, hs_inner, trace, OperatorMatrix};
use crate::simulator::StateVector;
use crate::spin_algebra::{coupled_tensor, spherical_tensor, Manifold, SpinSystem, TensorIndex};

const DENSITY_TOL: f64 = 1e-10;

pub const WIGNER_HEADER: &str = "# alkspin-wigner v1";

/// Uniform `θ × φ` sampling, `θ_i = πi/(n_θ-1)` (poles included) and
/// `φ_j = 2πj/n_φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for SphereGrid {
    fn default() -> Self {
        SphereGrid {
            n_theta: 64,
            n_phi: 128,
        }
    }
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 1 {
            return Err(Error::InvalidArgument(format!(
                "sphere grid needs n_theta >= 2 and n_phi >= 1, got {n_theta}x{n_phi}"
            )));
        }
        Ok(SphereGrid { n_theta, n_phi })
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta(&self, i: usize) -> f64 {
        PI * i as f64 / (self.n_theta - 1) as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_phi as f64
    }

    /// Grid points in storage order (θ-major).
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.n_theta).flat_map(move |i| (0..self.n_phi).map(move |j| (self.theta(i), self.phi(j))))
    }
}

/// Validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(OperatorMatrix);

impl DensityMatrix {
    pub fn new(m: OperatorMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument(format!(
                "density matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let dev = hermitian_deviation(&m);
        if dev > DENSITY_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = trace(&m);
        if (tr.re - 1.0).abs() > DENSITY_TOL || tr.im.abs() > DENSITY_TOL {
            return Err(Error::InvalidArgument(format!("density matrix trace is {tr}, expected 1")));
        }
        let min_eig = m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -DENSITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(DensityMatrix(m))
    }

    pub fn from_state(psi: &StateVector) -> Self {
        DensityMatrix(psi.density())
    }

    /// Convex combination `Σ w_i |ψ_i⟩⟨ψ_i|`; weights must sum to one.
    pub fn mixture(parts: &[(f64, &StateVector)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let dim = first.1.dim();
        let mut m = OperatorMatrix::zeros(dim, dim);
        for (w, psi) in parts {
            if *w < 0.0 || psi.dim() != dim {
                return Err(Error::InvalidArgument(
                    "mixture weights must be non-negative and states of equal dimension".into(),
                ));
            }
            m += psi.density() * Complex64::new(*w, 0.0);
        }
        DensityMatrix::new(m)
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn block(&self, system: &SpinSystem, row: Manifold, col: Manifold) -> OperatorMatrix {
        self.0
            .view(
                (system.offset(row), system.offset(col)),
                (system.manifold_dim(row), system.manifold_dim(col)),
            )
            .into_owned()
    }

    fn check_system(&self, system: &SpinSystem) -> Result<()> {
        if self.dim() != system.dim() {
            return Err(Error::InvalidArgument(format!(
                "density matrix dimension {} does not match system dimension {}",
                self.dim(),
                system.dim()
            )));
        }
        Ok(())
    }
}

/// Orthonormal spherical harmonic `Y^k_q(θ, φ)` with the Condon–Shortley phase.
pub fn spherical_harmonic(k: i32, q: i32, theta: f64, phi: f64) -> Result<Complex64> {
    if k < 0 || q.abs() > k {
        return Err(Error::InvalidTensorIndex {
            k,
            q,
            reason: "need k >= 0 and |q| <= k".into(),
        });
    }
    if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
        return Err(Error::InvalidArgument(format!("angles out of range: theta={theta}, phi={phi}")));
    }
    Ok(harmonic(k, q, theta, phi))
}

fn harmonic(k: i32, q: i32, theta: f64, phi: f64) -> Complex64 {
    let m = q.abs();
    let y = normalized_legendre(k, m, theta.cos()) * Complex64::from_polar(1.0, m as f64 * phi);
    if q < 0 {
        y.conj() * if m % 2 == 0 { 1.0 } else { -1.0 }
    } else {
        y
    }
}

/// `√((2l+1)/4π · (l-m)!/(l+m)!) P_l^m(x)` for `m ≥ 0`, including `(-1)^m`.
fn normalized_legendre(l: i32, m: i32, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    // Normalized P_m^m, built up without forming large factorials.
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for i in 1..=m {
        pmm *= -s * ((2 * i + 1) as f64 / (2 * i) as f64).sqrt();
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = x * ((2 * m + 3) as f64).sqrt() * pmm;
    for ll in (m + 2)..=l {
        let (lf, mf) = (ll as f64, m as f64);
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
        let next = a * (x * cur - b * prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// Multipole coefficients `a_kq` of one `(F, F')` block; the field is
/// `Σ a_kq Y^k_q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipoles {
    pub terms: Vec<(TensorIndex, Complex64)>,
}

impl Multipoles {
    /// Expansion of a `(2J+1)`-dimensional diagonal block.
    pub fn su2(rho_block: &OperatorMatrix, j: Half) -> Result<Self> {
        let n = (j.twice() + 1) as usize;
        if rho_block.shape() != (n, n) {
            return Err(Error::InvalidArgument(format!(
                "block for J={j} must be {n}x{n}, got {}x{}",
                rho_block.nrows(),
                rho_block.ncols()
            )));
        }
        let mut terms = Vec::new();
        for k in 0..=j.twice() {
            for q in -k..=k {
                let idx = TensorIndex { k, q };
                let t = spherical_tensor(j, idx)?;
                terms.push((idx, orientation(k, j, j) * hs_inner(&t, rho_block)));
            }
        }
        Ok(Multipoles { terms })
    }

    /// Expansion of the `(row, col)` block of a full-space density matrix.
    pub fn block(rho: &DensityMatrix, system: &SpinSystem, row: Manifold, col: Manifold) -> Result<Self> {
        rho.check_system(system)?;
        let (f, fp) = (system.f(row), system.f(col));
        let (k_lo, k_hi) = ((f - fp).abs().twice() / 2, (f + fp).twice() / 2);
        let mut terms = Vec::new();
        for k in k_lo..=k_hi {
            for q in -k..=k {
                let idx = TensorIndex { k, q };
                let t = coupled_tensor(system, f, fp, idx)?;
                terms.push((idx, orientation(k, f, fp) * hs_inner(&t, rho.matrix())));
            }
        }
        Ok(Multipoles { terms })
    }

    pub fn evaluate(&self, theta: f64, phi: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(idx, a)| a * harmonic(idx.k, idx.q, theta, phi))
            .sum()
    }

    pub fn sample(&self, grid: &SphereGrid) -> Vec<Complex64> {
        grid.points().map(|(t, p)| self.evaluate(t, p)).collect()
    }

    /// `∫|W|² dΩ = Σ|a_kq|²`.
    pub fn power(&self) -> f64 {
        self.terms.iter().map(|(_, a)| a.norm_sqr()).sum()
    }

    /// `(∫(Re W)² dΩ, ∫(Im W)² dΩ)`, exact from the coefficients.
    pub fn quadrature_power(&self) -> (f64, f64) {
        let total = self.power();
        // ∫ W² dΩ = Σ (-1)^q a_kq a_k,-q
        let mut square = Complex64::new(0.0, 0.0);
        for (idx, a) in &self.terms {
            if let Some((_, b)) = self.terms.iter().find(|(o, _)| o.k == idx.k && o.q == -idx.q) {
                let sign = if idx.q % 2 == 0 { 1.0 } else { -1.0 };
                square += a * b * sign;
            }
        }
        (
            ((total + square.re) / 2.0).max(0.0),
            ((total - square.re) / 2.0).max(0.0),
        )
    }
}

/// Sign relating the rank-first coupled tensors of `spin_algebra` to the
/// spin-first ordering, `(-1)^(k + F' - F)`.
fn orientation(k: i32, f: Half, fp: Half) -> f64 {
    let exponent = k + (fp - f).twice() / 2;
    if exponent.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sampled SU(2) Wigner function of a diagonal block (not renormalized).
pub fn su2_wigner(rho_block: &OperatorMatrix, j: Half, grid: &SphereGrid) -> Result<Vec<f64>> {
    let field = Multipoles::su2(rho_block, j)?.sample(grid);
    Ok(real_part(field))
}

/// Sampled coherence field `W₊₋`; `W₋₊` is its complex conjugate.
pub fn coherence_wigner(rho: &DensityMatrix, system: &SpinSystem, grid: &SphereGrid) -> Result<Vec<Complex64>> {
    Ok(Multipoles::block(rho, system, Manifold::Plus, Manifold::Minus)?.sample(grid))
}

fn real_part(field: Vec<Complex64>) -> Vec<f64> {
    field.into_iter().map(|z| z.re).collect()
}

/// Sphere radii: manifold populations, coherence magnitude `c` and its split
/// into real and imaginary shares of the coherence field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereRadii {
    pub r_pp: f64,
    pub r_mm: f64,
    pub coherence: f64,
    pub r_re: f64,
    pub r_im: f64,
}

pub fn sphere_radii(rho: &DensityMatrix, system: &SpinSystem) -> Result<SphereRadii> {
    rho.check_system(system)?;
    let r_pp = trace(&rho.block(system, Manifold::Plus, Manifold::Plus)).re;
    let r_mm = trace(&rho.block(system, Manifold::Minus, Manifold::Minus)).re;
    let coherence = rho.block(system, Manifold::Plus, Manifold::Minus).norm();
    let (re2, im2) = Multipoles::block(rho, system, Manifold::Plus, Manifold::Minus)?.quadrature_power();
    let (r_re, r_im) = if re2 + im2 > 0.0 {
        (coherence * re2 / (re2 + im2), coherence * im2 / (re2 + im2))
    } else {
        (0.0, 0.0)
    };
    Ok(SphereRadii {
        r_pp,
        r_mm,
        coherence,
        r_re,
        r_im,
    })
}

/// The four sampled real fields and radii for one density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerSphereGrid {
    pub j_plus: Half,
    pub j_minus: Half,
    pub grid: SphereGrid,
    pub radii: SphereRadii,
    pub w_pp: Vec<f64>,
    pub w_mm: Vec<f64>,
    pub re_w_pm: Vec<f64>,
    pub im_w_pm: Vec<f64>,
}

impl WignerSphereGrid {
    pub fn compute(rho: &DensityMatrix, system: &SpinSystem, grid: SphereGrid) -> Result<Self> {
        rho.check_system(system)?;
        let w_pp = su2_wigner(&rho.block(system, Manifold::Plus, Manifold::Plus), system.f_plus(), &grid)?;
        let w_mm = su2_wigner(&rho.block(system, Manifold::Minus, Manifold::Minus), system.f_minus(), &grid)?;
        let coh = coherence_wigner(rho, system, &grid)?;
        Ok(WignerSphereGrid {
            j_plus: system.f_plus(),
            j_minus: system.f_minus(),
            grid,
            radii: sphere_radii(rho, system)?,
            w_pp,
            w_mm,
            re_w_pm: coh.iter().map(|z| z.re).collect(),
            im_w_pm: coh.iter().map(|z| z.im).collect(),
        })
    }

    pub fn from_state(psi: &StateVector, system: &SpinSystem, grid: SphereGrid) -> Result<Self> {
        Self::compute(&DensityMatrix::from_state(psi), system, grid)
    }

    pub fn to_text(&self) -> String {
        let r = &self.radii;
        let mut out = String::with_capacity(self.grid.len() * 120);
        let _ = writeln!(out, "{WIGNER_HEADER}");
        let _ = writeln!(out, "# j_plus = {}", self.j_plus);
        let _ = writeln!(out, "# j_minus = {}", self.j_minus);
        let _ = writeln!(out, "# n_theta = {}", self.grid.n_theta);
        let _ = writeln!(out, "# n_phi = {}", self.grid.n_phi);
        let _ = writeln!(out, "# r_pp = {:e}", r.r_pp);
        let _ = writeln!(out, "# r_mm = {:e}", r.r_mm);
        let _ = writeln!(out, "# c = {:e}", r.coherence);
        let _ = writeln!(out, "# r_re = {:e}", r.r_re);
        let _ = writeln!(out, "# r_im = {:e}", r.r_im);
        let _ = writeln!(out, "theta phi w_pp w_mm re_w_pm im_w_pm");
        for (n, (t, p)) in self.grid.points().enumerate() {
            let _ = writeln!(
                out,
                "{t:e} {p:e} {:e} {:e} {:e} {:e}",
                self.w_pp[n], self.w_mm[n], self.re_w_pm[n], self.im_w_pm[n]
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ctx = "wigner grid";
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == WIGNER_HEADER => {}
            _ => return Err(Error::parse(ctx, format!("missing header line '{WIGNER_HEADER}'"))),
        }
        let mut meta = std::collections::HashMap::new();
        let mut columns_seen = false;
        let mut rows: Vec<[f64; 6]> = Vec::new();
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (key, value) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::parse(ctx, format!("line {}: expected '# key = value'", n + 1)))?;
                meta.insert(key.trim().to_string(), value.trim().to_string());
                continue;
            }
            if !columns_seen {
                if line.split_whitespace().collect::<Vec<_>>() != ["theta", "phi", "w_pp", "w_mm", "re_w_pm", "im_w_pm"] {
                    return Err(Error::parse(ctx, format!("line {}: unexpected column header", n + 1)));
                }
                columns_seen = true;
                continue;
            }
            let mut row = [0.0; 6];
            let mut fields = line.split_whitespace();
            for slot in row.iter_mut() {
                let tok = fields
                    .next()
                    .ok_or_else(|| Error::parse(ctx, format!("line {}: expected 6 columns", n + 1)))?;
                *slot = tok
                    .parse()
                    .map_err(|e| Error::parse(ctx, format!("line {}: '{tok}': {e}", n + 1)))?;
            }
            if fields.next().is_some() {
                return Err(Error::parse(ctx, format!("line {}: expected 6 columns", n + 1)));
            }
            rows.push(row);
        }
        let get = |key: &str| -> Result<&String> {
            meta.get(key).ok_or_else(|| Error::parse(ctx, format!("missing header key '{key}'")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::parse(ctx, format!("header key '{key}': {e}")))
        };
        let count = |key: &str| -> Result<usize> {
            get(key)?
                .parse::<usize>()
                .map_err(|e| Error::parse(ctx, format!("header key '{key}': {e}")))
        };
        let spin = |key: &str| -> Result<Half> {
            let s = get(key)?;
            s.parse::<Half>()
                .map_err(|_| Error::parse(ctx, format!("header key '{key}': bad spin '{s}'")))
        };
        let grid = SphereGrid::new(count("n_theta")?, count("n_phi")?)?;
        if rows.len() != grid.len() {
            return Err(Error::parse(
                ctx,
                format!("expected {} data rows, found {}", grid.len(), rows.len()),
            ));
        }
        let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
        Ok(WignerSphereGrid {
            j_plus: spin("j_plus")?,
            j_minus: spin("j_minus")?,
            grid,
            radii: SphereRadii {
                r_pp: num("r_pp")?,
                r_mm: num("r_mm")?,
                coherence: num("c")?,
                r_re: num("r_re")?,
                r_im: num("r_im")?,
            },
            w_pp: col(2),
            w_mm: col(3),
            re_w_pm: col(4),
            im_w_pm: col(5),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Computes the four-sphere grid of `rho` and writes it to `path`.
pub fn export_grid(rho: &DensityMatrix, system: &SpinSystem, grid: SphereGrid, path: &Path) -> Result<WignerSphereGrid> {
    let out = WignerSphereGrid::compute(rho, system, grid)?;
    out.write(path)?;
    Ok(out)
}
