use crate::error::{Error, Result};
use crate::half::Half;
use crate::hamiltonians::MicrowaveTransition;
use crate::linalg::{c, real, zeros, OperatorMatrix};

use super::{Manifold, SpinSystem};

/// Irreducible representation of spin `j` in the `m = j … -j` basis.
#[derive(Clone, Debug)]
pub struct AngularMomentum {
    pub jx: OperatorMatrix,
    pub jy: OperatorMatrix,
    pub jz: OperatorMatrix,
    pub jplus: OperatorMatrix,
    pub jminus: OperatorMatrix,
}

pub fn angular_momentum(j: Half) -> Result<AngularMomentum> {
    if j.twice() < 0 {
        return Err(Error::InvalidSpin(j.to_string()));
    }
    let n = (j.twice() + 1) as usize;
    let jv = j.value();
    let mut jz = zeros(n);
    let mut jplus = zeros(n);
    for (i, m) in j.projections().enumerate() {
        let mv = m.value();
        jz[(i, i)] = real(mv);
        // J+|j,m⟩ = √(j(j+1) - m(m+1)) |j,m+1⟩; m+1 sits one index earlier.
        if i > 0 {
            jplus[(i - 1, i)] = real((jv * (jv + 1.0) - mv * (mv + 1.0)).sqrt());
        }
    }
    let jminus = jplus.adjoint();
    let jx = (&jplus + &jminus) * real(0.5);
    let jy = (&jplus - &jminus) * c(0.0, -0.5);
    Ok(AngularMomentum {
        jx,
        jy,
        jz,
        jplus,
        jminus,
    })
}

/// Manifold-projected angular momentum `F^(±) = P± F P±` and the projectors.
#[derive(Clone, Debug)]
pub struct ProjectedOperators {
    pub fx_plus: OperatorMatrix,
    pub fy_plus: OperatorMatrix,
    pub fz_plus: OperatorMatrix,
    pub fx_minus: OperatorMatrix,
    pub fy_minus: OperatorMatrix,
    pub fz_minus: OperatorMatrix,
    pub p_plus: OperatorMatrix,
    pub p_minus: OperatorMatrix,
}

fn embed(system: &SpinSystem, manifold: Manifold, block: &OperatorMatrix) -> OperatorMatrix {
    let mut out = zeros(system.dim());
    let off = system.offset(manifold);
    out.view_mut((off, off), block.shape()).copy_from(block);
    out
}

pub fn projected_operators(system: &SpinSystem) -> ProjectedOperators {
    let plus = angular_momentum(system.f_plus()).expect("F+ is a valid spin");
    let minus = angular_momentum(system.f_minus()).expect("F- is a valid spin");
    let proj = |manifold| {
        let n = system.manifold_dim(manifold);
        embed(system, manifold, &OperatorMatrix::identity(n, n))
    };
    ProjectedOperators {
        fx_plus: embed(system, Manifold::Plus, &plus.jx),
        fy_plus: embed(system, Manifold::Plus, &plus.jy),
        fz_plus: embed(system, Manifold::Plus, &plus.jz),
        fx_minus: embed(system, Manifold::Minus, &minus.jx),
        fy_minus: embed(system, Manifold::Minus, &minus.jy),
        fz_minus: embed(system, Manifold::Minus, &minus.jz),
        p_plus: proj(Manifold::Plus),
        p_minus: proj(Manifold::Minus),
    }
}

/// Pauli operators of the two-level subspace `{|F₊,m₊⟩, |F₋,m₋⟩}`.
#[derive(Clone, Debug)]
pub struct Pseudospin {
    pub sigma_x: OperatorMatrix,
    pub sigma_y: OperatorMatrix,
    pub sigma_z: OperatorMatrix,
}

pub fn pseudospin(system: &SpinSystem, transition: &MicrowaveTransition) -> Result<Pseudospin> {
    let (up, down) = transition.indices(system)?;
    let n = system.dim();
    let mut sigma_x = zeros(n);
    let mut sigma_y = zeros(n);
    let mut sigma_z = zeros(n);
    sigma_x[(up, down)] = real(1.0);
    sigma_x[(down, up)] = real(1.0);
    sigma_y[(up, down)] = c(0.0, -1.0);
    sigma_y[(down, up)] = c(0.0, 1.0);
    sigma_z[(up, up)] = real(1.0);
    sigma_z[(down, down)] = real(-1.0);
    Ok(Pseudospin {
        sigma_x,
        sigma_y,
        sigma_z,
    })
}
