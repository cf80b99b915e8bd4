use serde::{Deserialize, Serialize};

use super::subspace::Subspace;
use crate::error::{Error, Result};

/// In-place unnormalised Walsh–Hadamard transform. The length must be a
/// power of two; applying it twice multiplies by the length.
pub fn fwht(a: &mut [i64]) {
    let n = a.len();
    debug_assert!(n.is_power_of_two() || n == 0);
    let mut h = 1;
    while h < n {
        for block in a.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

/// Inverse of [`fwht`]: exact whenever the input is a transform of an
/// integer vector.
pub fn inverse_fwht(a: &mut [i64]) {
    fwht(a);
    let n = a.len() as i64;
    for v in a.iter_mut() {
        debug_assert_eq!(*v % n, 0);
        *v /= n;
    }
}

/// Walsh spectrum of an indicator on `W`, indexed by character in local
/// coordinates: `coefficient(ξ) = E_{w∈W} 1_S(w) (-1)^{ξ·w}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalshSpectrum {
    /// `|W| · coefficient`, exact.
    pub raw: Vec<i64>,
}

impl WalshSpectrum {
    /// Spectrum of a 0/1 vector indexed by local coordinate.
    pub fn of_indicator(indicator: &[bool]) -> Self {
        let mut raw: Vec<i64> = indicator.iter().map(|&b| b as i64).collect();
        fwht(&mut raw);
        WalshSpectrum { raw }
    }

    pub fn size(&self) -> usize {
        self.raw.len()
    }

    pub fn coefficient(&self, xi: usize) -> f64 {
        self.raw[xi] as f64 / self.size() as f64
    }

    pub fn coefficients(&self) -> Vec<f64> {
        (0..self.size()).map(|xi| self.coefficient(xi)).collect()
    }

    /// `|S| / |W|`.
    pub fn density(&self) -> f64 {
        self.coefficient(0)
    }

    /// Nontrivial character of largest magnitude, smallest index on ties.
    pub fn max_nontrivial(&self) -> Option<(usize, i64)> {
        let mut best: Option<(usize, i64)> = None;
        for (xi, &v) in self.raw.iter().enumerate().skip(1) {
            if best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                best = Some((xi, v));
            }
        }
        best
    }

    /// Recovers the indicator.
    pub fn inverse(&self) -> Vec<i64> {
        let mut a = self.raw.clone();
        inverse_fwht(&mut a);
        a
    }
}

/// Walsh spectrum of `S - basepoint` for `S ⊆ W + basepoint`.
pub fn walsh(set: &[u32], w: &Subspace, basepoint: u32) -> Result<WalshSpectrum> {
    let mut ind = vec![false; w.size()];
    for &s in set {
        let d = s ^ basepoint;
        if s as u64 >= 1u64 << w.ambient_dim() || !w.contains(d) {
            return Err(Error::Domain(format!("element {s:#x} is not in the coset W + {basepoint:#x}")));
        }
        ind[w.local(d)] = true;
    }
    Ok(WalshSpectrum::of_indicator(&ind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_coset_and_singleton() {
        let w = Subspace::spanned_by(5, &[0b00011, 0b01100, 0b10000]).unwrap();
        let base = 0b00100 ^ 0b00001;
        let all: Vec<u32> = (0..w.size()).map(|c| w.element(c) ^ base).collect();
        let s = walsh(&all, &w, base).unwrap();
        assert_eq!(s.coefficient(0), 1.0);
        assert!(s.raw[1..].iter().all(|&v| v == 0));
        let one = walsh(&[base ^ w.element(3)], &w, base).unwrap();
        assert!(one.raw.iter().all(|&v| v.abs() == 1));
        assert!(walsh(&[0b00001], &w, 0).is_err());
    }

    #[test]
    fn half_space_has_coefficient_one_half() {
        let w = Subspace::full(4).unwrap();
        let half: Vec<u32> = (0..16u32).filter(|v| v & 0b0100 == 0).collect();
        let s = walsh(&half, &w, 0).unwrap();
        assert_eq!(s.max_nontrivial(), Some((0b0100, 8)));
        assert_eq!(s.coefficient(0b0100), 0.5);
    }

    #[test]
    fn round_trip_and_parseval() {
        let ind: Vec<bool> = (0..64).map(|i| (i * 37 + 11) % 5 < 2).collect();
        let s = WalshSpectrum::of_indicator(&ind);
        let back: Vec<bool> = s.inverse().iter().map(|&v| v == 1).collect();
        assert_eq!(back, ind);
        let energy: f64 = s.coefficients().iter().map(|c| c * c).sum();
        assert!((energy - s.density()).abs() < 1e-15);
    }
}
