//! Angular-momentum operators, Clebsch–Gordan coefficients and irreducible
//! spherical tensors on single spin manifolds and on the direct sum
//! `F₊ ⊕ F₋` of an alkali ground state.

mod cg;
mod operators;
mod tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::half::Half;
use crate::linalg::CVector;

pub use cg::clebsch_gordan;
pub use operators::{angular_momentum, projected_operators, pseudospin, AngularMomentum, Pseudospin, ProjectedOperators};
pub use tensor::{coupled_tensor, coupled_tensor_basis, spherical_tensor, CoupledTensor};

/// One of the two hyperfine manifolds `F± = I ± 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manifold {
    Plus,
    Minus,
}

/// Ground-state spin manifold of an alkali atom with nuclear spin `I`.
///
/// Basis order: indices `0..=2F₊` are `|F₊, m⟩` with `m = F₊ … -F₊`, followed
/// by `|F₋, m⟩` with `m = F₋ … -F₋`. Index 0 is the stretched state `|F₊, F₊⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpinSystemRepr", into = "SpinSystemRepr")]
pub struct SpinSystem {
    nuclear_spin: Half,
}

#[derive(Serialize, Deserialize)]
struct SpinSystemRepr {
    nuclear_spin: Half,
}

impl TryFrom<SpinSystemRepr> for SpinSystem {
    type Error = Error;
    fn try_from(r: SpinSystemRepr) -> Result<Self> {
        SpinSystem::new(r.nuclear_spin)
    }
}

impl From<SpinSystem> for SpinSystemRepr {
    fn from(s: SpinSystem) -> Self {
        SpinSystemRepr {
            nuclear_spin: s.nuclear_spin,
        }
    }
}

impl SpinSystem {
    pub fn new(nuclear_spin: Half) -> Result<Self> {
        if nuclear_spin.twice() < 1 {
            return Err(Error::InvalidSpin(format!(
                "nuclear spin {nuclear_spin} must be at least 1/2"
            )));
        }
        Ok(SpinSystem { nuclear_spin })
    }

    /// ¹³³Cs, `I = 7/2`, `d = 16`.
    pub fn cesium() -> Self {
        SpinSystem {
            nuclear_spin: Half::from_twice(7),
        }
    }

    pub fn nuclear_spin(&self) -> Half {
        self.nuclear_spin
    }

    pub fn f_plus(&self) -> Half {
        self.nuclear_spin + Half::ONE_HALF
    }

    pub fn f_minus(&self) -> Half {
        self.nuclear_spin - Half::ONE_HALF
    }

    pub fn f(&self, manifold: Manifold) -> Half {
        match manifold {
            Manifold::Plus => self.f_plus(),
            Manifold::Minus => self.f_minus(),
        }
    }

    /// The manifold whose total angular momentum equals `f`, if any.
    pub fn manifold_of(&self, f: Half) -> Option<Manifold> {
        if f == self.f_plus() {
            Some(Manifold::Plus)
        } else if f == self.f_minus() {
            Some(Manifold::Minus)
        } else {
            None
        }
    }

    pub fn manifold_dim(&self, manifold: Manifold) -> usize {
        (self.f(manifold).twice() + 1) as usize
    }

    pub fn offset(&self, manifold: Manifold) -> usize {
        match manifold {
            Manifold::Plus => 0,
            Manifold::Minus => self.manifold_dim(Manifold::Plus),
        }
    }

    pub fn dim(&self) -> usize {
        self.manifold_dim(Manifold::Plus) + self.manifold_dim(Manifold::Minus)
    }

    /// Basis index of `|F, m⟩`, or `None` when `m` is out of range.
    pub fn index(&self, manifold: Manifold, m: Half) -> Option<usize> {
        let f = self.f(manifold);
        if m.abs() > f || !(f - m).is_integer() {
            return None;
        }
        Some(self.offset(manifold) + ((f - m).twice() / 2) as usize)
    }

    /// Inverse of [`SpinSystem::index`].
    pub fn label(&self, index: usize) -> Option<(Manifold, Half)> {
        let plus = self.manifold_dim(Manifold::Plus);
        if index < plus {
            Some((Manifold::Plus, self.f_plus() - Half::integer(index as i32)))
        } else if index < self.dim() {
            Some((
                Manifold::Minus,
                self.f_minus() - Half::integer((index - plus) as i32),
            ))
        } else {
            None
        }
    }

    pub fn basis_vector(&self, manifold: Manifold, m: Half) -> Result<CVector> {
        let idx = self.index(manifold, m).ok_or_else(|| {
            Error::InvalidArgument(format!("m={m} is outside F={}", self.f(manifold)))
        })?;
        let mut v = CVector::zeros(self.dim());
        v[idx] = num_complex::Complex64::new(1.0, 0.0);
        Ok(v)
    }
}

/// Rank and component of an irreducible tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorIndex {
    pub k: i32,
    pub q: i32,
}

impl TensorIndex {
    pub fn new(k: i32, q: i32) -> Result<Self> {
        if k < 0 || q.abs() > k {
            return Err(Error::InvalidTensorIndex {
                k,
                q,
                reason: "need k >= 0 and |q| <= k".into(),
            });
        }
        Ok(TensorIndex { k, q })
    }
}
