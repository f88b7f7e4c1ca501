//! Clebsch–Gordan coefficients from the Racah closed form, evaluated with
//! exact rational arithmetic up to the final square root.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::half::Half;

fn factorial(n: i32) -> BigInt {
    debug_assert!(n >= 0);
    (2..=n as u32).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// `true` when `|j - m|` is integral and `|m| <= j`.
fn valid_projection(j: Half, m: Half) -> bool {
    j.twice() >= 0 && m.abs() <= j && (j - m).is_integer()
}

fn triangle(a: Half, b: Half, c: Half) -> bool {
    (a + b + c).is_integer() && c <= a + b && c >= (a - b).abs()
}

/// Standard-order coefficient `⟨ja ma; jb mb | J M⟩` (Condon–Shortley).
pub(crate) fn cg_standard(ja: Half, ma: Half, jb: Half, mb: Half, j: Half, m: Half) -> f64 {
    if ma + mb != m
        || !valid_projection(ja, ma)
        || !valid_projection(jb, mb)
        || !valid_projection(j, m)
        || !triangle(ja, jb, j)
    {
        return 0.0;
    }
    // All combinations below are integers once the selection rules hold.
    let int = |h: Half| -> i32 { h.twice() / 2 };
    let (a_plus_b_minus_j, j_plus_a_minus_b, j_minus_a_plus_b) =
        (int(ja + jb - j), int(j + ja - jb), int(j - ja + jb));
    let total = int(ja + jb + j) + 1;

    let mut prefactor = BigRational::new(
        BigInt::from(j.twice() + 1)
            * factorial(j_plus_a_minus_b)
            * factorial(j_minus_a_plus_b)
            * factorial(a_plus_b_minus_j),
        factorial(total),
    );
    prefactor *= BigRational::from_integer(
        factorial(int(j + m))
            * factorial(int(j - m))
            * factorial(int(ja - ma))
            * factorial(int(ja + ma))
            * factorial(int(jb - mb))
            * factorial(int(jb + mb)),
    );

    let k_min = 0.max(int(jb - j - ma)).max(int(ja + mb - j));
    let k_max = a_plus_b_minus_j.min(int(ja - ma)).min(int(jb + mb));
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(a_plus_b_minus_j - k)
            * factorial(int(ja - ma) - k)
            * factorial(int(jb + mb) - k)
            * factorial(int(j - jb + ma) + k)
            * factorial(int(j - ja - mb) + k);
        let term = BigRational::new(BigInt::one(), denom);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return 0.0;
    }
    let squared = prefactor * &sum * &sum;
    let value = ratio_to_f64(&squared).sqrt();
    if sum.is_negative() {
        -value
    } else {
        value
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    // Shift both parts into f64 range before dividing to keep full precision.
    let numer = r.numer();
    let denom = r.denom();
    let shift = numer.bits().max(denom.bits()).saturating_sub(1000) as usize;
    let n = (numer >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (denom >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Returns `⟨J, M | j2, m2; j1, m1⟩`: the pair `(j2, m2)` is coupled first,
/// so `clebsch_gordan(j, m, k, q, j, m + q)` is the tensor-operator
/// coefficient `⟨j, m+q | k, q; j, m⟩`. Couplings that violate a selection
/// rule or a range return 0.
pub fn clebsch_gordan(j1: Half, m1: Half, j2: Half, m2: Half, j: Half, m: Half) -> f64 {
    cg_standard(j2, m2, j1, m1, j, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(twice: i32) -> Half {
        Half::from_twice(twice)
    }

    #[test]
    fn singlet_triplet() {
        let s = 1.0 / 2f64.sqrt();
        assert!((clebsch_gordan(h(1), h(1), h(1), h(-1), h(2), h(0)) - s).abs() < 1e-15);
        // ⟨1/2 -1/2; 1/2 1/2 | 0 0⟩ = -1/√2 in standard order.
        assert!((cg_standard(h(1), h(-1), h(1), h(1), h(0), h(0)) + s).abs() < 1e-15);
        assert!((cg_standard(h(1), h(1), h(1), h(-1), h(0), h(0)) - s).abs() < 1e-15);
    }

    #[test]
    fn selection_rules_give_zero() {
        assert_eq!(clebsch_gordan(h(2), h(2), h(2), h(0), h(4), h(0)), 0.0);
        assert_eq!(clebsch_gordan(h(1), h(1), h(1), h(1), h(6), h(2)), 0.0);
        assert_eq!(clebsch_gordan(h(1), h(3), h(1), h(-1), h(2), h(2)), 0.0);
    }

    #[test]
    fn rank_zero_coupling_is_unity() {
        for jt in 0..10 {
            let j = h(jt);
            for m in j.projections() {
                let v = clebsch_gordan(j, m, Half::ZERO, Half::ZERO, j, m);
                assert!((v - 1.0).abs() < 1e-15, "j={j} m={m}: {v}");
            }
        }
    }

    #[test]
    fn known_table_values() {
        // ⟨1 1; 1 -1 | 2 0⟩ = 1/√6, ⟨1 0; 1 0 | 2 0⟩ = √(2/3), ⟨1 0; 1 0 | 1 0⟩ = 0.
        assert!((cg_standard(h(2), h(2), h(2), h(-2), h(4), h(0)) - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);
        assert!((cg_standard(h(2), h(0), h(2), h(0), h(4), h(0)) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(cg_standard(h(2), h(0), h(2), h(0), h(2), h(0)), 0.0);
        // Values frozen from an independent symbolic evaluation.
        let frozen = [
            ((3, 1, 2, -2, 1, -1), (1.0f64 / 6.0).sqrt()),
            ((1, 1, 2, 0, 1, 1), (1.0f64 / 3.0).sqrt()),
            ((7, 3, 8, -4, 9, -1), 0.028853090519055883),
            ((8, 8, 6, -6, 14, 2), 0.018248296715045298),
            ((9, 1, 9, -1, 10, 0), 0.21483446221182986),
            ((6, 2, 4, 0, 6, 2), -0.38729833462074169),
            ((8, -4, 4, 4, 8, 0), 0.59215652546379209),
        ];
        for ((a, ma, b, mb, j, m), expected) in frozen {
            let v = cg_standard(h(a), h(ma), h(b), h(mb), h(j), h(m));
            assert!((v - expected).abs() < 1e-15, "{a} {ma} {b} {mb} {j} {m}: {v}");
        }
    }

    #[test]
    fn completeness_over_total_spin() {
        // Σ_{J,M} ⟨j1 m1 j2 m2|J M⟩² = 1 for every (m1, m2) at large spins.
        let (j1, j2) = (h(9), h(8));
        for m1 in j1.projections() {
            for m2 in j2.projections() {
                let mut total = 0.0;
                let mut jt = (j1.twice() - j2.twice()).abs();
                while jt <= j1.twice() + j2.twice() {
                    let v = cg_standard(j1, m1, j2, m2, h(jt), m1 + m2);
                    total += v * v;
                    jt += 2;
                }
                assert!((total - 1.0).abs() < 1e-13);
            }
        }
    }
}
