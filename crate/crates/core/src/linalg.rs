//! Dense complex matrix helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex operator on a finite-dimensional Hilbert space.
pub type OperatorMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn zeros(dim: usize) -> OperatorMatrix {
    OperatorMatrix::zeros(dim, dim)
}

pub fn identity(dim: usize) -> OperatorMatrix {
    OperatorMatrix::identity(dim, dim)
}

pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a * b - b * a
}

/// Hilbert–Schmidt inner product `Tr(a† b)`.
pub fn hs_inner(a: &OperatorMatrix, b: &OperatorMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn trace(a: &OperatorMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermitian_deviation(m: &OperatorMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn is_hermitian(m: &OperatorMatrix, tol: f64) -> bool {
    m.is_square() && hermitian_deviation(m) <= tol
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(m: &OperatorMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with diagonal Padé
/// approximants (orders 3–13, Higham 2005 thresholds).
pub fn expm(a: &OperatorMatrix) -> OperatorMatrix {
    assert!(a.is_square(), "expm of a non-square matrix");
    let n = a.nrows();
    let id = identity(n);
    let norm = norm1(a);

    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let a2 = a * a;
            let mut u = &id * real(coeffs[1]);
            let mut v = &id * real(coeffs[0]);
            let mut power = id.clone();
            for k in 1..=m / 2 {
                power = &power * &a2;
                u += &power * real(coeffs[2 * k + 1]);
                v += &power * real(coeffs[2 * k]);
            }
            let u = a * u;
            return pade_solve(&u, &v);
        }
    }

    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * real(0.5f64.powi(s));
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * real(b[13]) + &a4 * real(b[11]) + &a2 * real(b[9]))
        + &a6 * real(b[7])
        + &a4 * real(b[5])
        + &a2 * real(b[3])
        + &id * real(b[1]);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * real(b[12]) + &a4 * real(b[10]) + &a2 * real(b[8]))
        + &a6 * real(b[6])
        + &a4 * real(b[4])
        + &a2 * real(b[2])
        + &id * real(b[0]);
    let mut r = pade_solve(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn pade_solve(u: &OperatorMatrix, v: &OperatorMatrix) -> OperatorMatrix {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is singular; input norm out of range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_expm(a: &OperatorMatrix) -> OperatorMatrix {
        // Reference: scale down, long Taylor series, square back up.
        let s = 12;
        let scaled = a * real(0.5f64.powi(s));
        let n = a.nrows();
        let mut term = identity(n);
        let mut sum = identity(n);
        for k in 1..40 {
            term = &term * &scaled * real(1.0 / k as f64);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = zeros(4);
        assert!(max_abs_diff(&expm(&z), &identity(4)) < 1e-15);
    }

    #[test]
    fn expm_matches_reference_across_norm_regimes() {
        for (scale, seed) in [(1e-3, 1u64), (0.1, 2), (0.8, 3), (2.0, 4), (4.0, 5), (40.0, 6)] {
            let mut state = seed;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            };
            let a = OperatorMatrix::from_fn(5, 5, |_, _| c(next(), next()) * scale);
            let diff = max_abs_diff(&expm(&a), &taylor_expm(&a));
            let size = norm1(&taylor_expm(&a)).max(1.0);
            assert!(diff / size < 1e-11, "scale {scale}: {diff}");
        }
    }

    #[test]
    fn diagonal_exponential() {
        let a = OperatorMatrix::from_diagonal(&CVector::from_vec(vec![c(0.0, -3.0), c(0.0, 5.0)]));
        let e = expm(&a);
        assert!((e[(0, 0)] - c(0.0, -3.0).exp()).norm() < 1e-14);
        assert!((e[(1, 1)] - c(0.0, 5.0).exp()).norm() < 1e-14);
        assert!(e[(0, 1)].norm() < 1e-15);
    }
}
