use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A subgroup `W ≤ F_2^n`, elements written as bit masks.
///
/// The basis is kept in reduced echelon form: basis vector `i` has its
/// highest set bit at `pivots[i]`, no other basis vector has that bit, and
/// pivots increase with `i`. Consequences used throughout:
///
/// * `reduce(v)` clears every pivot bit of `v` and returns the numerically
///   smallest element of `v + W`, the canonical coset representative;
/// * the local coordinate of `w ∈ W` is the bit string of its pivot bits,
///   bit `i` taken from `pivots[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SubspaceFile", into = "SubspaceFile")]
pub struct Subspace {
    n: u32,
    basis: Vec<u32>,
    pivots: Vec<u32>,
    /// Non-pivot bit positions, ascending.
    free: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct SubspaceFile {
    n: u32,
    basis: Vec<u32>,
}

impl TryFrom<SubspaceFile> for Subspace {
    type Error = Error;

    fn try_from(f: SubspaceFile) -> Result<Self> {
        Subspace::spanned_by(f.n, &f.basis)
    }
}

impl From<Subspace> for SubspaceFile {
    fn from(s: Subspace) -> Self {
        SubspaceFile { n: s.n, basis: s.basis }
    }
}

/// Largest ambient dimension the bit-mask representation supports.
pub const MAX_AMBIENT_DIM: u32 = 24;

impl Subspace {
    /// All of `F_2^n`.
    pub fn full(n: u32) -> Result<Self> {
        let gens: Vec<u32> = (0..n).map(|i| 1 << i).collect();
        Self::spanned_by(n, &gens)
    }

    /// `{0}` in `F_2^n`.
    pub fn zero(n: u32) -> Result<Self> {
        Self::spanned_by(n, &[])
    }

    /// Span of arbitrary generators; dependent or zero generators are fine.
    pub fn spanned_by(n: u32, generators: &[u32]) -> Result<Self> {
        if n > MAX_AMBIENT_DIM {
            return Err(Error::Resource(format!("ambient dimension {n} exceeds {MAX_AMBIENT_DIM}")));
        }
        let limit = 1u64 << n;
        if let Some(g) = generators.iter().find(|&&g| g as u64 >= limit) {
            return Err(Error::Domain(format!("generator {g:#x} is not in F_2^{n}")));
        }
        // Echelon basis keyed by highest bit.
        let mut by_pivot: Vec<Option<u32>> = vec![None; n as usize];
        for &g in generators {
            let mut v = g;
            while v != 0 {
                let top = 31 - v.leading_zeros();
                match by_pivot[top as usize] {
                    Some(b) => v ^= b,
                    None => {
                        by_pivot[top as usize] = Some(v);
                        break;
                    }
                }
            }
        }
        // Back-substitute so each pivot bit appears in exactly one vector.
        let pivots: Vec<u32> = (0..n).filter(|&p| by_pivot[p as usize].is_some()).collect();
        let mut basis: Vec<u32> = pivots.iter().map(|&p| by_pivot[p as usize].unwrap()).collect();
        for i in (0..basis.len()).rev() {
            for j in i + 1..basis.len() {
                if basis[j] >> pivots[i] & 1 == 1 {
                    basis[j] ^= basis[i];
                }
            }
        }
        let free = (0..n).filter(|p| !pivots.contains(p)).collect();
        Ok(Subspace { n, basis, pivots, free })
    }

    pub fn ambient_dim(&self) -> u32 {
        self.n
    }

    pub fn dim(&self) -> u32 {
        self.basis.len() as u32
    }

    pub fn codim(&self) -> u32 {
        self.n - self.dim()
    }

    /// `|W|`.
    pub fn size(&self) -> usize {
        1 << self.dim()
    }

    pub fn basis(&self) -> &[u32] {
        &self.basis
    }

    /// Canonical (smallest) representative of `v + W`.
    #[inline]
    pub fn reduce(&self, mut v: u32) -> u32 {
        for (&b, &p) in self.basis.iter().zip(&self.pivots) {
            if v >> p & 1 == 1 {
                v ^= b;
            }
        }
        v
    }

    pub fn contains(&self, v: u32) -> bool {
        self.reduce(v) == 0
    }

    /// Local coordinate of `w ∈ W`. Garbage for `w ∉ W`.
    #[inline]
    pub fn local(&self, w: u32) -> usize {
        self.pivots.iter().enumerate().fold(0, |acc, (i, &p)| acc | ((w as usize >> p & 1) << i))
    }

    /// The element of `W` with local coordinate `c`.
    #[inline]
    pub fn element(&self, c: usize) -> u32 {
        self.basis
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| if c >> i & 1 == 1 { acc ^ b } else { acc })
    }

    /// Number of cosets, `2^codim`.
    pub fn coset_count(&self) -> usize {
        1 << self.codim()
    }

    /// The `i`-th canonical coset representative in increasing order:
    /// the bits of `i` placed at the non-pivot positions.
    #[inline]
    pub fn coset_rep(&self, i: usize) -> u32 {
        self.free
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &p)| acc | ((i as u32 >> k & 1) << p))
    }

    /// Inverse of [`Subspace::coset_rep`] applied to the coset of `v`.
    #[inline]
    pub fn coset_index(&self, v: u32) -> usize {
        let r = self.reduce(v);
        self.free.iter().enumerate().fold(0, |acc, (k, &p)| acc | ((r as usize >> p & 1) << k))
    }

    /// Kernel of the character with local index `xi`:
    /// `{w ∈ W : popcount(xi & local(w)) even}`.
    pub fn character_kernel(&self, xi: usize) -> Result<Self> {
        self.kernel_of_all(&[xi])
    }

    /// Common kernel of several characters.
    pub fn kernel_of_all(&self, characters: &[usize]) -> Result<Self> {
        if let Some(&c) = characters.iter().find(|&&c| c >= self.size()) {
            return Err(Error::Domain(format!("character {c} out of range for a subspace of size {}", self.size())));
        }
        // Solve in local coordinates: the kernel is spanned by the null space
        // of the matrix whose rows are the characters.
        let dim = self.dim() as usize;
        let mut rows: Vec<usize> = Vec::new();
        let mut lead: Vec<usize> = Vec::new();
        for &c in characters {
            let mut v = c;
            for (r, &l) in rows.iter().zip(&lead) {
                if v >> l & 1 == 1 {
                    v ^= r;
                }
            }
            if v != 0 {
                let l = v.trailing_zeros() as usize;
                for r in rows.iter_mut() {
                    if *r >> l & 1 == 1 {
                        *r ^= v;
                    }
                }
                rows.push(v);
                lead.push(l);
            }
        }
        // Null space: one generator per free column.
        let gens: Vec<u32> = (0..dim)
            .filter(|k| !lead.contains(k))
            .map(|k| {
                let mut local = 1usize << k;
                for (r, &l) in rows.iter().zip(&lead) {
                    if r >> k & 1 == 1 {
                        local |= 1 << l;
                    }
                }
                self.element(local)
            })
            .collect();
        Subspace::spanned_by(self.n, &gens)
    }

    pub fn is_subspace_of(&self, other: &Subspace) -> bool {
        self.n == other.n && self.basis.iter().all(|&b| other.contains(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_gives_smallest_representative() {
        let w = Subspace::spanned_by(6, &[0b101100, 0b011010, 0b110110, 0b000011]).unwrap();
        for v in 0..64u32 {
            let min = (0..w.size()).map(|c| v ^ w.element(c)).min().unwrap();
            assert_eq!(w.reduce(v), min);
        }
        assert_eq!(w.dim(), 3);
    }

    #[test]
    fn local_coordinates_round_trip() {
        let w = Subspace::spanned_by(7, &[0b1010101, 0b0110011, 0b0001111]).unwrap();
        for c in 0..w.size() {
            let e = w.element(c);
            assert!(w.contains(e));
            assert_eq!(w.local(e), c);
        }
        for i in 0..w.coset_count() {
            let r = w.coset_rep(i);
            assert_eq!(w.reduce(r), r);
            assert_eq!(w.coset_index(r ^ w.element(5)), i);
        }
    }

    #[test]
    fn character_kernels() {
        let w = Subspace::full(4).unwrap();
        let k = w.character_kernel(0b0110).unwrap();
        assert_eq!(k.dim(), 3);
        for c in 0..16usize {
            let e = w.element(c);
            assert_eq!(k.contains(e), (c & 0b0110).count_ones() % 2 == 0);
        }
        let both = w.kernel_of_all(&[0b0001, 0b0011, 0b0010]).unwrap();
        assert_eq!(both.dim(), 2);
        assert!(both.is_subspace_of(&w));
        assert_eq!(w.kernel_of_all(&[0]).unwrap(), w);
        assert!(w.character_kernel(16).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let w = Subspace::spanned_by(5, &[0b11000, 0b00110]).unwrap();
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(serde_json::from_str::<Subspace>(&json).unwrap(), w);
    }
}
