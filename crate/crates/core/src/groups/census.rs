use serde::{Deserialize, Serialize};

use super::group::{FiniteAbelianGroup, GroupDescriptor};
use super::plane::PlaneSet;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Largest group order accepted by [`census_oracle`].
pub const ORACLE_MAX_ORDER: usize = 64;

/// `|S_d|` for every `d ∈ G`, where
/// `S_d = {(x, y) : (x, y), (x + d, y), (x, y + d) ∈ A}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerCensus {
    pub group: GroupDescriptor,
    /// Indexed by the canonical index of `d`.
    pub counts: Vec<u64>,
    /// `|A|`, which is also `counts[0]`.
    pub set_size: u64,
    /// `|A| / N²`.
    pub alpha: f64,
}

impl CornerCensus {
    pub fn order(&self) -> usize {
        self.counts.len()
    }

    /// `counts[d] / N²`.
    pub fn density(&self, d: usize) -> f64 {
        let n = self.order() as f64;
        self.counts[d] as f64 / (n * n)
    }

    /// Number of corner triples `(x, y, d)` in `A`, degenerate ones included.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with header `d_index,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("d_index,count\n");
        for (d, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{d},{c}\n"));
        }
        s
    }
}

/// Rewrites row `x` translated by `d` in the second coordinate:
/// bit `y` of `out` is bit `y + d` of the row.
enum Translator {
    /// `Z/N`: each row is stored twice back to back so any rotation is a
    /// contiguous window.
    Rotate { doubled: Vec<u64>, stride: usize },
    /// `F_2^n`: XOR by `d` permutes whole words by the high bits of `d` and
    /// bits inside a word by the low six.
    Xor,
    /// Anything else: bit by bit through the group law.
    Generic,
}

const BUTTERFLY_MASKS: [u64; 6] = [
    0x5555_5555_5555_5555,
    0x3333_3333_3333_3333,
    0x0f0f_0f0f_0f0f_0f0f,
    0x00ff_00ff_00ff_00ff,
    0x0000_ffff_0000_ffff,
    0x0000_0000_ffff_ffff,
];

/// Permutes bit `i` of `w` to position `i ^ k` for `k < 64`.
#[inline]
fn xor_permute_word(mut w: u64, k: usize) -> u64 {
    for (b, &mask) in BUTTERFLY_MASKS.iter().enumerate() {
        if k >> b & 1 == 1 {
            let s = 1 << b;
            w = ((w & mask) << s) | ((w >> s) & mask);
        }
    }
    w
}

impl Translator {
    fn new(set: &PlaneSet) -> Self {
        let g = set.group();
        let n = set.order();
        if g.is_elementary_2() {
            Translator::Xor
        } else if g.is_single_cyclic() {
            let stride = (2 * n).div_ceil(64) + 1;
            let mut doubled = vec![0u64; n * stride];
            for x in 0..n {
                let row = &mut doubled[x * stride..(x + 1) * stride];
                for y in 0..n {
                    if set.contains(x, y) {
                        row[y / 64] |= 1 << (y % 64);
                        row[(y + n) / 64] |= 1 << ((y + n) % 64);
                    }
                }
            }
            Translator::Rotate { doubled, stride }
        } else {
            Translator::Generic
        }
    }

    fn translate_row(&self, set: &PlaneSet, x: usize, d: usize, out: &mut [u64]) {
        match self {
            Translator::Rotate { doubled, stride } => {
                let row = &doubled[x * stride..(x + 1) * stride];
                for (w, slot) in out.iter_mut().enumerate() {
                    let bit = d + 64 * w;
                    let (q, r) = (bit / 64, bit % 64);
                    *slot = if r == 0 { row[q] } else { (row[q] >> r) | (row[q + 1] << (64 - r)) };
                }
            }
            Translator::Xor => {
                let row = set.row(x);
                let (hi, lo) = (d >> 6, d & 63);
                for (w, slot) in out.iter_mut().enumerate() {
                    *slot = xor_permute_word(row[w ^ hi], lo);
                }
            }
            Translator::Generic => {
                let g = set.group();
                out.iter_mut().for_each(|w| *w = 0);
                for y in 0..set.order() {
                    if set.contains(x, g.add(y, d)) {
                        out[y / 64] |= 1 << (y % 64);
                    }
                }
            }
        }
    }
}

fn count_for_difference(set: &PlaneSet, tr: &Translator, d: usize, buf: &mut [u64]) -> u64 {
    let g = set.group();
    let mut total = 0u64;
    for x in 0..set.order() {
        let a = set.row(x);
        let b = set.row(g.add(x, d));
        tr.translate_row(set, x, d, buf);
        total += a
            .iter()
            .zip(b)
            .zip(buf.iter())
            .map(|((a, b), c)| (a & b & c).count_ones() as u64)
            .sum::<u64>();
    }
    total
}

/// `|S_d|` for the given differences only.
pub fn census_for(set: &PlaneSet, differences: &[usize], exec: Execution) -> Result<Vec<u64>> {
    for &d in differences {
        set.group().check(d)?;
    }
    let tr = Translator::new(set);
    let wpr = set.words_per_row();
    Ok(par::map_range(differences.len(), exec, |i| {
        let mut buf = vec![0u64; wpr];
        count_for_difference(set, &tr, differences[i], &mut buf)
    }))
}

/// Full census with the default execution mode.
pub fn census(set: &PlaneSet) -> CornerCensus {
    census_with(set, Execution::default())
}

/// Full census: for every `d`, AND three rows and popcount, one row per `x`.
pub fn census_with(set: &PlaneSet, exec: Execution) -> CornerCensus {
    let all: Vec<usize> = (0..set.order()).collect();
    let counts = census_for(set, &all, exec).expect("all differences are in range");
    finish(set, counts)
}

fn finish(set: &PlaneSet, counts: Vec<u64>) -> CornerCensus {
    CornerCensus {
        group: set.group().descriptor().clone(),
        counts,
        set_size: set.len(),
        alpha: set.density(),
    }
}

/// Reference census: the plain triple loop over `(d, x, y)` using only group
/// addition and single-bit membership.
pub fn census_oracle(set: &PlaneSet) -> Result<CornerCensus> {
    let g: &FiniteAbelianGroup = set.group();
    let n = g.order();
    if n > ORACLE_MAX_ORDER {
        return Err(Error::Resource(format!(
            "oracle census is limited to groups of order {ORACLE_MAX_ORDER}, got {n}"
        )));
    }
    let mut counts = vec![0u64; n];
    for (d, count) in counts.iter_mut().enumerate() {
        for x in 0..n {
            for y in 0..n {
                if set.contains(x, y) && set.contains(g.add(x, d), y) && set.contains(x, g.add(y, d)) {
                    *count += 1;
                }
            }
        }
    }
    Ok(finish(set, counts))
}

/// The nonzero difference with the most corners; ties go to the smallest index.
pub fn max_popular_difference(census: &CornerCensus) -> Result<(usize, u64)> {
    if census.order() < 2 {
        return Err(Error::Domain("popular differences need a group of order >= 2".into()));
    }
    let mut best = (1, census.counts[1]);
    for (d, &c) in census.counts.iter().enumerate().skip(2) {
        if c > best.1 {
            best = (d, c);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    #[test]
    fn xor_permute_matches_definition() {
        let w: u64 = 0x9e37_79b9_7f4a_7c15;
        for k in 0..64 {
            let p = xor_permute_word(w, k);
            for i in 0..64 {
                assert_eq!((p >> (i ^ k)) & 1, (w >> i) & 1);
            }
        }
    }

    #[test]
    fn full_plane_over_z3() {
        let set = PlaneSet::full(FiniteAbelianGroup::cyclic(3).unwrap()).unwrap();
        let c = census(&set);
        assert_eq!(c.counts, vec![9, 9, 9]);
        assert_eq!(max_popular_difference(&c).unwrap(), (1, 9));
    }

    #[test]
    fn vertical_line() {
        let set = PlaneSet::from_fn(FiniteAbelianGroup::cyclic(3).unwrap(), |x, _| x == 0).unwrap();
        assert_eq!(census(&set).counts, vec![3, 0, 0]);
    }

    #[test]
    fn tie_break_and_trivial_group() {
        let c = CornerCensus {
            group: GroupDescriptor::Cyclic(3),
            counts: vec![5, 3, 3],
            set_size: 5,
            alpha: 5.0 / 9.0,
        };
        assert_eq!(max_popular_difference(&c).unwrap(), (1, 3));
        let one = census(&PlaneSet::full(FiniteAbelianGroup::cyclic(1).unwrap()).unwrap());
        assert_eq!(one.counts, vec![1]);
        assert!(matches!(max_popular_difference(&one), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_set_and_oracle_cap() {
        let set = PlaneSet::empty(FiniteAbelianGroup::cyclic(6).unwrap()).unwrap();
        assert_eq!(census_oracle(&set).unwrap().counts, vec![0; 6]);
        let big = PlaneSet::empty(FiniteAbelianGroup::cyclic(65).unwrap()).unwrap();
        assert!(matches!(census_oracle(&big), Err(Error::Resource(_))));
    }

    #[test]
    fn fast_paths_agree_with_oracle() {
        let mut rng = substream(11, Purpose::TestData, 0);
        let groups = [
            "cyclic 4", "cyclic 37", "cyclic 63", "cyclic 64", "vector 2 2", "vector 2 6",
            "vector 3 2", "product [cyclic 4, cyclic 6]",
        ];
        for desc in groups {
            let g = FiniteAbelianGroup::new(desc.parse().unwrap()).unwrap();
            let set = PlaneSet::random(g, 0.6, &mut rng).unwrap();
            let fast = census_with(&set, Execution::Parallel);
            assert_eq!(fast, census_oracle(&set).unwrap(), "{desc}");
            assert_eq!(fast, census_with(&set, Execution::Sequential));
            assert_eq!(fast.counts[0], set.len());
        }
    }
}
