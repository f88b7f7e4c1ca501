use crate::error::{Error, Result};
use crate::half::Half;
use crate::linalg::{real, zeros, OperatorMatrix};

use super::{clebsch_gordan, Manifold, SpinSystem, TensorIndex};

/// Irreducible tensor `T^(k)_q(J)` on a single spin-`J` manifold,
/// `√((2k+1)/(2J+1)) Σ_m ⟨J,m+q|k,q;J,m⟩ |J,m+q⟩⟨J,m|`.
pub fn spherical_tensor(j: Half, idx: TensorIndex) -> Result<OperatorMatrix> {
    if j.twice() < 0 {
        return Err(Error::InvalidSpin(j.to_string()));
    }
    if idx.k > j.twice() {
        return Err(Error::InvalidTensorIndex {
            k: idx.k,
            q: idx.q,
            reason: format!("rank exceeds 2J = {}", j.twice()),
        });
    }
    Ok(block_tensor(j, j, idx))
}

/// `√((2k+1)/(2F+1)) Σ_m ⟨F,m+q|k,q;F',m⟩ |F,m+q⟩⟨F',m|` as a `(2F+1)×(2F'+1)` block.
fn block_tensor(f: Half, fp: Half, idx: TensorIndex) -> OperatorMatrix {
    let rows = (f.twice() + 1) as usize;
    let cols = (fp.twice() + 1) as usize;
    let kq = (Half::integer(idx.k), Half::integer(idx.q));
    let norm = ((2 * idx.k + 1) as f64 / (f.twice() + 1) as f64).sqrt();
    let mut out = OperatorMatrix::zeros(rows, cols);
    for (col, m) in fp.projections().enumerate() {
        let target = m + kq.1;
        if target.abs() > f {
            continue;
        }
        let row = ((f - target).twice() / 2) as usize;
        let coeff = clebsch_gordan(fp, m, kq.0, kq.1, f, target);
        out[(row, col)] = real(norm * coeff);
    }
    out
}

/// Inter-manifold tensor `T^(k)_q(F, F')` embedded in the full space; it is
/// supported on the `(F, F')` block only.
pub fn coupled_tensor(
    system: &SpinSystem,
    f: Half,
    fp: Half,
    idx: TensorIndex,
) -> Result<OperatorMatrix> {
    let row_m = system
        .manifold_of(f)
        .ok_or_else(|| Error::InvalidSpin(format!("F={f} is not a manifold of this system")))?;
    let col_m = system
        .manifold_of(fp)
        .ok_or_else(|| Error::InvalidSpin(format!("F'={fp} is not a manifold of this system")))?;
    let (lo, hi) = ((f - fp).abs().twice(), (f + fp).twice());
    if 2 * idx.k < lo || 2 * idx.k > hi {
        return Err(Error::InvalidTensorIndex {
            k: idx.k,
            q: idx.q,
            reason: format!("need |F-F'| <= k <= F+F' for F={f}, F'={fp}"),
        });
    }
    let block = block_tensor(f, fp, idx);
    let mut out = zeros(system.dim());
    out.view_mut((system.offset(row_m), system.offset(col_m)), block.shape())
        .copy_from(&block);
    Ok(out)
}

/// One element of the complete coupled-tensor operator basis.
#[derive(Clone, Debug)]
pub struct CoupledTensor {
    pub row: Manifold,
    pub col: Manifold,
    pub index: TensorIndex,
    pub matrix: OperatorMatrix,
}

/// All `T^(k)_q(F, F')` for `F, F' ∈ {F₊, F₋}` and every valid `(k, q)`;
/// `dim²` operators in total.
pub fn coupled_tensor_basis(system: &SpinSystem) -> Vec<CoupledTensor> {
    let mut out = Vec::with_capacity(system.dim() * system.dim());
    for row in [Manifold::Plus, Manifold::Minus] {
        for col in [Manifold::Plus, Manifold::Minus] {
            let (f, fp) = (system.f(row), system.f(col));
            let k_lo = (f - fp).abs().twice() / 2;
            let k_hi = (f + fp).twice() / 2;
            for k in k_lo..=k_hi {
                for q in -k..=k {
                    let index = TensorIndex { k, q };
                    let matrix = coupled_tensor(system, f, fp, index).expect("range checked");
                    out.push(CoupledTensor {
                        row,
                        col,
                        index,
                        matrix,
                    });
                }
            }
        }
    }
    out
}
