use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::boxing::{Boxing, Side, FAMILIES};
use super::walsh::WalshSpectrum;
use crate::error::{Error, Result};
use crate::groups::PlaneSet;
use crate::par::{self, Execution};
use crate::rng::{substream, Purpose};

/// A non-uniform cell: its largest nontrivial Walsh coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityWitness {
    pub outer_box: usize,
    pub side: Side,
    pub cell: usize,
    /// Character in local coordinates of `W`.
    pub character: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityAudit {
    /// `ε / m³`.
    pub threshold: f64,
    pub box_count: usize,
    /// One witness per failing outer box, in box order.
    pub witnesses: Vec<UniformityWitness>,
}

impl UniformityAudit {
    pub fn failing_fraction(&self) -> f64 {
        self.witnesses.len() as f64 / self.box_count as f64
    }

    /// At most an `ε` share of outer boxes has a non-uniform cell.
    pub fn holds(&self, eps: f64) -> bool {
        self.failing_fraction() <= eps
    }

    pub fn box_fails(&self, b: usize) -> bool {
        self.witnesses.binary_search_by_key(&b, |w| w.outer_box).is_ok()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("epsilon {eps} outside (0, 1]")))
    }
}

/// Largest nontrivial coefficient of one outer box, ties to the earliest
/// side (`B, C, D`), then cell, then character.
fn box_max_coefficient(boxing: &Boxing, b: usize) -> Option<(Side, usize, usize, i64)> {
    let ob = &boxing.boxes()[b];
    let mut best: Option<(Side, usize, usize, i64)> = None;
    for side in Side::ALL {
        let labels = ob.labels(side);
        for cell in 0..boxing.m() {
            let ind: Vec<bool> = labels.iter().map(|&c| c as usize == cell).collect();
            if !ind.contains(&true) {
                continue;
            }
            let spectrum = WalshSpectrum::of_indicator(&ind);
            if let Some((xi, v)) = spectrum.max_nontrivial() {
                if best.is_none_or(|(.., bv)| v.abs() > bv.abs()) {
                    best = Some((side, cell, xi, v));
                }
            }
        }
    }
    best
}

/// Flags every outer box with a cell whose largest nontrivial Walsh
/// coefficient has magnitude at least `ε / m³`.
pub fn uniformity_audit(boxing: &Boxing, eps: f64) -> Result<UniformityAudit> {
    uniformity_audit_with(boxing, eps, Execution::default())
}

pub fn uniformity_audit_with(boxing: &Boxing, eps: f64, exec: Execution) -> Result<UniformityAudit> {
    check_eps(eps)?;
    let threshold = eps / (boxing.m() as f64).powi(3);
    let size = boxing.subspace().size() as f64;
    let found = par::map_range(boxing.box_count(), exec, |b| {
        box_max_coefficient(boxing, b).and_then(|(side, cell, character, raw)| {
            let coefficient = raw as f64 / size;
            (coefficient.abs() >= threshold).then_some(UniformityWitness { outer_box: b, side, cell, character, coefficient })
        })
    });
    Ok(UniformityAudit { threshold, box_count: boxing.box_count(), witnesses: found.into_iter().flatten().collect() })
}

/// `A` on one inner box, read as a bipartite graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteBlock {
    left: Vec<u32>,
    right: Vec<u32>,
    /// Left-indexed rows of bits over the right side.
    rows: Vec<Vec<u64>>,
    /// Right-indexed rows of bits over the left side.
    cols: Vec<Vec<u64>>,
}

fn bitset(len: usize) -> Vec<u64> {
    vec![0; len.div_ceil(64)]
}

#[inline]
fn set_bit(v: &mut [u64], i: usize) {
    v[i / 64] |= 1 << (i % 64);
}

fn and_count(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as u64).sum()
}

impl BipartiteBlock {
    pub fn new(left: Vec<u32>, right: Vec<u32>, edge: impl Fn(u32, u32) -> bool) -> Self {
        let mut rows = vec![bitset(right.len()); left.len()];
        let mut cols = vec![bitset(left.len()); right.len()];
        for (i, &u) in left.iter().enumerate() {
            for (j, &v) in right.iter().enumerate() {
                if edge(u, v) {
                    set_bit(&mut rows[i], j);
                    set_bit(&mut cols[j], i);
                }
            }
        }
        BipartiteBlock { left, right, rows, cols }
    }

    /// The inner box of `family` with cells `(i, j)` in outer box `b`.
    /// Edges follow the plane: `(x, y)` for `B × C`, `(x, x ^ z)` for
    /// `B × D`, `(y ^ z, y)` for `C × D`.
    pub fn inner_box(boxing: &Boxing, a: &PlaneSet, b: usize, family: (Side, Side), i: usize, j: usize) -> Self {
        let left = boxing.cell_members(b, family.0, i);
        let right = boxing.cell_members(b, family.1, j);
        let has = |x: u32, y: u32| a.contains(x as usize, y as usize);
        match family {
            (Side::B, Side::C) => Self::new(left, right, has),
            (Side::B, Side::D) => Self::new(left, right, |x, z| has(x, x ^ z)),
            (Side::C, Side::D) => Self::new(left, right, |y, z| has(y ^ z, y)),
            _ => panic!("pair families are (B, C), (B, D) and (C, D)"),
        }
    }

    pub fn left(&self) -> &[u32] {
        &self.left
    }

    pub fn right(&self) -> &[u32] {
        &self.right
    }

    pub fn edge_count(&self) -> u64 {
        self.rows.iter().flatten().map(|w| w.count_ones() as u64).sum()
    }

    pub fn density(&self) -> f64 {
        self.edge_count() as f64 / (self.left.len() * self.right.len()) as f64
    }
}

/// How thoroughly a block was searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuasirandomMode {
    /// Every subset of the smaller side (at most 12 vertices), paired with the
    /// optimal subset of each admissible size on the other side. A pass is
    /// a certificate.
    Exhaustive,
    /// Degree-ordered and neighbourhood seeds refined by alternating best
    /// responses. A pass means no witness was found.
    Structured,
    /// The structured search plus random subset pairs at the threshold sizes.
    Sampled,
}

/// `B′ × C′` whose density deviates from the block density by at least `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetWitness {
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub density: f64,
    pub base_density: f64,
}

impl SubsetWitness {
    pub fn deviation(&self) -> f64 {
        (self.density - self.base_density).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasirandomResult {
    pub mode: QuasirandomMode,
    pub witness: Option<SubsetWitness>,
}

/// Largest sizes below which the smaller side is searched exhaustively, and
/// below which sampling is skipped.
const EXHAUSTIVE_MAX_SIDE: usize = 12;
const STRUCTURED_MAX_SIDE: usize = 20;
const STRUCTURED_MAX_CELLS: usize = 1 << 20;
/// Random subset pairs drawn in sampled mode.
pub const SAMPLED_PAIRS: usize = 10_000;
const ALTERNATION_ROUNDS: usize = 4;
const NEIGHBOURHOOD_SEEDS: usize = 256;

/// Smallest admissible subset size: `min { k ≥ 1 : k ≥ ε·n }`.
fn min_size(eps: f64, n: usize) -> usize {
    (1..=n).find(|&k| k as f64 >= eps * n as f64).unwrap_or(n)
}

/// Best subset found so far, by absolute deviation; the first found wins ties.
#[derive(Clone)]
struct Best {
    deviation: f64,
    /// `true` when `pick` indexes the left side.
    pick_left: bool,
    pick: Vec<usize>,
    other: Vec<u64>,
    density: f64,
}

struct Search<'a> {
    block: &'a BipartiteBlock,
    base: f64,
    k_left: usize,
    k_right: usize,
    best: Option<Best>,
}

impl<'a> Search<'a> {
    fn offer(&mut self, deviation: f64, pick_left: bool, pick: Vec<usize>, other: &[u64], density: f64) {
        if self.best.as_ref().is_none_or(|b| deviation > b.deviation) {
            self.best = Some(Best { deviation, pick_left, pick, other: other.to_vec(), density });
        }
    }

    /// Given a fixed subset `other` of one side, the optimal subset of each
    /// admissible size on the choosing side is the top or bottom part of its
    /// degree order into `other`. Returns the winning choice as a bit mask.
    fn best_response(&mut self, choose_left: bool, other: &[u64]) -> Option<Vec<u64>> {
        let other_size: u64 = other.iter().map(|w| w.count_ones() as u64).sum();
        if other_size == 0 {
            return None;
        }
        let (rows, k_min) = if choose_left {
            (&self.block.rows, self.k_left)
        } else {
            (&self.block.cols, self.k_right)
        };
        let mut deg: Vec<(u64, usize)> = rows.iter().enumerate().map(|(i, r)| (and_count(r, other), i)).collect();
        deg.sort_unstable();
        let n = deg.len();
        let mut prefix = vec![0u64; n + 1];
        for (i, &(d, _)) in deg.iter().enumerate() {
            prefix[i + 1] = prefix[i] + d;
        }
        let mut local: Option<(f64, bool, usize, f64)> = None;
        for k in k_min..=n {
            let denom = (k as u64 * other_size) as f64;
            let low = prefix[k] as f64 / denom;
            let high = (prefix[n] - prefix[n - k]) as f64 / denom;
            for (dens, top) in [(high, true), (low, false)] {
                let dev = (dens - self.base).abs();
                if local.is_none_or(|(d, ..)| dev > d) {
                    local = Some((dev, top, k, dens));
                }
            }
        }
        let (dev, top, k, dens) = local?;
        let pick: Vec<usize> = if top { deg[n - k..].iter().map(|&(_, i)| i).collect() } else { deg[..k].iter().map(|&(_, i)| i).collect() };
        let mut mask = bitset(n);
        for &i in &pick {
            set_bit(&mut mask, i);
        }
        self.offer(dev, choose_left, pick, other, dens);
        Some(mask)
    }

    fn alternate(&mut self, mut choose_left: bool, mut mask: Vec<u64>) {
        for _ in 0..ALTERNATION_ROUNDS {
            match self.best_response(choose_left, &mask) {
                Some(next) => mask = next,
                None => return,
            }
            choose_left = !choose_left;
        }
    }

    fn exhaustive(&mut self) {
        let (s, t) = (self.block.left.len(), self.block.right.len());
        // Enumerate the smaller side; the other side responds optimally.
        let enumerate_left = s <= t;
        let (n, k_min) = if enumerate_left { (s, self.k_left) } else { (t, self.k_right) };
        for subset in 1u64..(1 << n) {
            if (subset.count_ones() as usize) < k_min {
                continue;
            }
            let mask = vec![subset];
            self.best_response(!enumerate_left, &mask);
        }
    }

    fn structured(&mut self) {
        for choose_left in [true, false] {
            let (rows, k) = if choose_left {
                (&self.block.rows, self.k_left)
            } else {
                (&self.block.cols, self.k_right)
            };
            let n = rows.len();
            let mut deg: Vec<(u64, usize)> = rows.iter().enumerate().map(|(i, r)| (r.iter().map(|w| w.count_ones() as u64).sum(), i)).collect();
            deg.sort_unstable();
            for part in [&deg[n - k..], &deg[..k]] {
                let mut mask = bitset(n);
                for &(_, i) in part {
                    set_bit(&mut mask, i);
                }
                self.alternate(!choose_left, mask);
            }
        }
        for from_left in [true, false] {
            let (rows, other_n, k_other) = if from_left {
                (&self.block.rows, self.block.right.len(), self.k_right)
            } else {
                (&self.block.cols, self.block.left.len(), self.k_left)
            };
            for row in rows.iter().take(NEIGHBOURHOOD_SEEDS) {
                let ones: usize = row.iter().map(|w| w.count_ones() as usize).sum();
                if ones >= k_other {
                    self.alternate(from_left, row.clone());
                }
                if other_n - ones >= k_other {
                    let mut comp: Vec<u64> = row.iter().map(|w| !w).collect();
                    for i in other_n..comp.len() * 64 {
                        comp[i / 64] &= !(1 << (i % 64));
                    }
                    self.alternate(from_left, comp);
                }
            }
        }
    }

    fn sampled<R: Rng>(&mut self, rng: &mut R, pairs: usize) {
        let (s, t) = (self.block.left.len(), self.block.right.len());
        for _ in 0..pairs {
            let pick: Vec<usize> = sample(rng, s, self.k_left).into_vec();
            let mut other = bitset(t);
            for j in sample(rng, t, self.k_right) {
                set_bit(&mut other, j);
            }
            let edges: u64 = pick.iter().map(|&i| and_count(&self.block.rows[i], &other)).sum();
            let dens = edges as f64 / (self.k_left * self.k_right) as f64;
            self.offer((dens - self.base).abs(), true, pick, &other, dens);
        }
    }

    fn into_witness(self, eps: f64) -> Option<SubsetWitness> {
        let best = self.best?;
        if best.deviation < eps {
            return None;
        }
        let (pick_side, other_side) = if best.pick_left {
            (&self.block.left, &self.block.right)
        } else {
            (&self.block.right, &self.block.left)
        };
        let mut picked: Vec<u32> = best.pick.iter().map(|&i| pick_side[i]).collect();
        picked.sort_unstable();
        let others: Vec<u32> = (0..other_side.len()).filter(|&i| best.other[i / 64] >> (i % 64) & 1 == 1).map(|i| other_side[i]).collect();
        let (left, right) = if best.pick_left { (picked, others) } else { (others, picked) };
        Some(SubsetWitness { left, right, density: best.density, base_density: self.base })
    }
}

/// Searches one inner box for `B′ ⊆ B`, `C′ ⊆ C` with `|B′| ≥ ε|B|`,
/// `|C′| ≥ ε|C|` and `|d(B′, C′) − d(B, C)| ≥ ε`.
///
/// Mode: exhaustive when the smaller side has at most 12 vertices;
/// structured when `|B||C| ≤ 2²⁰` and the smaller side has at most 20;
/// sampled otherwise, with random pairs from `rng`.
pub fn quasirandom_audit<R: Rng>(block: &BipartiteBlock, eps: f64, rng: &mut R) -> Result<QuasirandomResult> {
    quasirandom_audit_pairs(block, eps, rng, SAMPLED_PAIRS)
}

pub fn quasirandom_audit_pairs<R: Rng>(block: &BipartiteBlock, eps: f64, rng: &mut R, pairs: usize) -> Result<QuasirandomResult> {
    check_eps(eps)?;
    let (s, t) = (block.left.len(), block.right.len());
    if s == 0 || t == 0 {
        return Err(Error::Domain("inner box has an empty side".into()));
    }
    let mut search = Search { block, base: block.density(), k_left: min_size(eps, s), k_right: min_size(eps, t), best: None };
    let small = s.min(t);
    let mode = if small <= EXHAUSTIVE_MAX_SIDE {
        search.exhaustive();
        QuasirandomMode::Exhaustive
    } else if small <= STRUCTURED_MAX_SIDE && s * t <= STRUCTURED_MAX_CELLS {
        search.structured();
        QuasirandomMode::Structured
    } else {
        search.structured();
        search.sampled(rng, pairs);
        QuasirandomMode::Sampled
    };
    Ok(QuasirandomResult { mode, witness: search.into_witness(eps) })
}

/// A non-quasirandom inner box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerBoxWitness {
    pub outer_box: usize,
    pub family: (Side, Side),
    pub cells: (usize, usize),
    /// `|S_i||T_j| / |W|²`.
    pub weight: f64,
    pub witness: SubsetWitness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxQuasirandom {
    /// Share of `V ∩ P` covered by non-quasirandom inner boxes, per family.
    pub failing_weight: [f64; 3],
    pub fails: bool,
    pub witnesses: Vec<InnerBoxWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasirandomAudit {
    pub boxes: Vec<BoxQuasirandom>,
    pub exhaustive_blocks: usize,
    pub structured_blocks: usize,
    pub sampled_blocks: usize,
}

impl QuasirandomAudit {
    pub fn failing_fraction(&self) -> f64 {
        self.boxes.iter().filter(|b| b.fails).count() as f64 / self.boxes.len() as f64
    }

    /// At most an `ε` share of outer boxes fails.
    pub fn holds(&self, eps: f64) -> bool {
        self.failing_fraction() <= eps
    }

    /// A pass is a certificate only when every block was searched exhaustively.
    pub fn certified(&self) -> bool {
        self.structured_blocks == 0 && self.sampled_blocks == 0
    }

    pub fn witness_count(&self) -> usize {
        self.boxes.iter().map(|b| b.witnesses.len()).sum()
    }
}

/// Audits every inner box of every outer box. An outer box fails when, in
/// some family, non-quasirandom inner boxes cover more than an `ε` share of
/// `V ∩ P`. Random pairs for inner box `(b, family, i, j)` come from
/// substream `(WitnessSearch, ((3b + family)·m + i)·m + j)`.
pub fn quasirandom_box_audit(boxing: &Boxing, a: &PlaneSet, eps: f64, seed: u64) -> Result<QuasirandomAudit> {
    quasirandom_box_audit_with(boxing, a, eps, seed, Execution::default())
}

pub fn quasirandom_box_audit_with(boxing: &Boxing, a: &PlaneSet, eps: f64, seed: u64, exec: Execution) -> Result<QuasirandomAudit> {
    check_eps(eps)?;
    boxing.check_set(a)?;
    let m = boxing.m();
    let w2 = (boxing.subspace().size() as f64).powi(2);
    let per_box = par::map_range(boxing.box_count(), exec, |b| -> Result<(BoxQuasirandom, [usize; 3])> {
        let ob = &boxing.boxes()[b];
        let mut sizes = [vec![0usize; m], vec![0usize; m], vec![0usize; m]];
        for side in Side::ALL {
            for &c in ob.labels(side) {
                sizes[side.index()][c as usize] += 1;
            }
        }
        let mut failing_weight = [0.0; 3];
        let mut witnesses = Vec::new();
        let mut modes = [0usize; 3];
        for (f, &family) in FAMILIES.iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    let (si, tj) = (sizes[family.0.index()][i], sizes[family.1.index()][j]);
                    if si == 0 || tj == 0 {
                        continue;
                    }
                    let block = BipartiteBlock::inner_box(boxing, a, b, family, i, j);
                    let stream = (((3 * b + f) * m + i) * m + j) as u64;
                    let mut rng = substream(seed, Purpose::WitnessSearch, stream);
                    let res = quasirandom_audit(&block, eps, &mut rng)?;
                    modes[res.mode as usize] += 1;
                    if let Some(witness) = res.witness {
                        let weight = (si * tj) as f64 / w2;
                        failing_weight[f] += weight;
                        witnesses.push(InnerBoxWitness { outer_box: b, family, cells: (i, j), weight, witness });
                    }
                }
            }
        }
        let fails = failing_weight.iter().any(|&w| w > eps);
        Ok((BoxQuasirandom { failing_weight, fails, witnesses }, modes))
    });
    let mut boxes = Vec::with_capacity(per_box.len());
    let mut totals = [0usize; 3];
    for r in per_box {
        let (bq, modes) = r?;
        for (t, m) in totals.iter_mut().zip(modes) {
            *t += m;
        }
        boxes.push(bq);
    }
    Ok(QuasirandomAudit { boxes, exhaustive_blocks: totals[0], structured_blocks: totals[1], sampled_blocks: totals[2] })
}
