//! Exact rational evaluation for kernels with dyadic entries.
//!
//! Every entry is written as `N / 2^e` with a shared exponent `e`, so the
//! sums below are plain big-integer arithmetic; a single rational is formed
//! at the end.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::DiscreteKernel;

/// Largest denominator exponent accepted on the exact path.
pub const MAX_DYADIC_BITS: u32 = 40;
/// Largest tensor accepted on the exact path.
pub const MAX_EXACT_CELLS: usize = 4096;

/// Mean and corner functional as exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactValues {
    pub expectation: BigRational,
    pub t_value: BigRational,
}

/// Smallest `e ≤ MAX_DYADIC_BITS` with `x · 2^e` an integer.
fn dyadic_exponent(x: f64) -> Option<u32> {
    if !x.is_finite() {
        return None;
    }
    (0..=MAX_DYADIC_BITS).find(|&e| {
        let scaled = x * (1u64 << e) as f64;
        scaled.fract() == 0.0
    })
}

fn scaled_int(x: f64, e: u32) -> BigInt {
    let scaled = x * (1u64 << e) as f64;
    BigInt::from(scaled as i64)
}

/// Whether the kernel qualifies for exact evaluation: at most
/// [`MAX_EXACT_CELLS`] cells, every entry dyadic with denominator at most
/// `2^MAX_DYADIC_BITS`, and every marginal summing to exactly one.
pub fn exact_eligible(k: &DiscreteKernel) -> bool {
    common_exponent(k).is_some()
}

fn common_exponent(k: &DiscreteKernel) -> Option<u32> {
    if k.cell_count() > MAX_EXACT_CELLS {
        return None;
    }
    let mut e = 0;
    for &x in k.p.iter().chain(&k.q).chain(&k.r).chain(&k.values) {
        e = e.max(dyadic_exponent(x)?);
    }
    let one = BigInt::one() << e;
    for m in [&k.p, &k.q, &k.r] {
        let s: BigInt = m.iter().map(|&x| scaled_int(x, e)).sum();
        if s != one {
            return None;
        }
    }
    Some(e)
}

/// Exact mean and `T`, or `None` if the kernel is not eligible.
pub fn exact_evaluate(k: &DiscreteKernel) -> Option<ExactValues> {
    let e = common_exponent(k)?;
    let [mx, my, mz] = k.shape();
    let p: Vec<BigInt> = k.p.iter().map(|&x| scaled_int(x, e)).collect();
    let q: Vec<BigInt> = k.q.iter().map(|&x| scaled_int(x, e)).collect();
    let r: Vec<BigInt> = k.r.iter().map(|&x| scaled_int(x, e)).collect();
    let v: Vec<BigInt> = k.values.iter().map(|&x| scaled_int(x, e)).collect();
    let at = |i: usize, j: usize, c: usize| &v[(i * my + j) * mz + c];

    // Conditionals scaled by 2^(2e).
    let mut f_xy = vec![BigInt::zero(); mx * my];
    let mut f_xz = vec![BigInt::zero(); mx * mz];
    let mut f_yz = vec![BigInt::zero(); my * mz];
    let mut mean = BigInt::zero();
    for i in 0..mx {
        for j in 0..my {
            for c in 0..mz {
                let val = at(i, j, c);
                if val.is_zero() {
                    continue;
                }
                f_xy[i * my + j] += &r[c] * val;
                f_xz[i * mz + c] += &q[j] * val;
                f_yz[j * mz + c] += &p[i] * val;
                mean += &p[i] * &q[j] * &r[c] * val;
            }
        }
    }
    let mut t = BigInt::zero();
    for i in 0..mx {
        for j in 0..my {
            let a = &f_xy[i * my + j];
            if a.is_zero() {
                continue;
            }
            let mut inner = BigInt::zero();
            for c in 0..mz {
                inner += &r[c] * &f_xz[i * mz + c] * &f_yz[j * mz + c];
            }
            t += &p[i] * &q[j] * a * inner;
        }
    }
    let denom = |power: u32| BigInt::one() << (e * power);
    Some(ExactValues {
        expectation: BigRational::new(mean, denom(4)),
        t_value: BigRational::new(t, denom(9)),
    })
}
