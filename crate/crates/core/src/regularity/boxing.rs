use serde::{Deserialize, Serialize};

use super::subspace::Subspace;
use crate::error::{Error, Result};
use crate::groups::PlaneSet;
use crate::kernel::DiscreteKernel;
use crate::par::{self, Execution};

pub const BOXING_SCHEMA_VERSION: u32 = 1;

/// Which of the three coordinates a partition lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Cells `B_i` of `W + x`.
    B,
    /// Cells `C_j` of `W + y`.
    C,
    /// Cells `D_k` of `W + z`.
    D,
}

impl Side {
    pub const ALL: [Side; 3] = [Side::B, Side::C, Side::D];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One outer box `V = W³ + (x, y, z)` with `x + y + z = 0`, and its three
/// partitions. Partitions are stored as cell labels indexed by the local
/// coordinate of `element - rep` in `W`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OuterBox {
    pub x_rep: u32,
    pub y_rep: u32,
    pub z_rep: u32,
    pub labels: [Vec<u16>; 3],
}

impl OuterBox {
    pub fn rep(&self, side: Side) -> u32 {
        [self.x_rep, self.y_rep, self.z_rep][side.index()]
    }

    pub fn labels(&self, side: Side) -> &[u16] {
        &self.labels[side.index()]
    }
}

/// A subgroup `W ≤ F_2^n`, a cell count `m`, and for each of the
/// `4^codim(W)` outer boxes three partitions into `m` (possibly empty) cells.
///
/// Box `xi · 2^codim + yi` has `x_rep = coset_rep(xi)`, `y_rep = coset_rep(yi)`
/// and `z_rep = reduce(x_rep ^ y_rep)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Boxing {
    subspace: Subspace,
    m: usize,
    boxes: Vec<OuterBox>,
}

impl Boxing {
    /// `W = F_2^n`, `m = 1`: one outer box whose cells are whole cosets.
    pub fn trivial(n: u32) -> Result<Self> {
        Self::from_fn(Subspace::full(n)?, 1, |_, _, _| 0)
    }

    /// Builds a boxing whose label for `(box, side, local)` is
    /// `label(box, side, local)`.
    pub fn from_fn(subspace: Subspace, m: usize, mut label: impl FnMut(usize, Side, usize) -> usize) -> Result<Self> {
        if m == 0 || m > u16::MAX as usize {
            return Err(Error::Domain(format!("cell count {m} out of range")));
        }
        let cosets = subspace.coset_count();
        let size = subspace.size();
        let mut boxes = Vec::with_capacity(cosets * cosets);
        for xi in 0..cosets {
            for yi in 0..cosets {
                let b = boxes.len();
                let x_rep = subspace.coset_rep(xi);
                let y_rep = subspace.coset_rep(yi);
                let mut labels: [Vec<u16>; 3] = Default::default();
                for side in Side::ALL {
                    labels[side.index()] = (0..size)
                        .map(|l| {
                            let c = label(b, side, l);
                            if c >= m {
                                Err(Error::Domain(format!("label {c} >= m = {m}")))
                            } else {
                                Ok(c as u16)
                            }
                        })
                        .collect::<Result<_>>()?;
                }
                boxes.push(OuterBox { x_rep, y_rep, z_rep: subspace.reduce(x_rep ^ y_rep), labels });
            }
        }
        Ok(Boxing { subspace, m, boxes })
    }

    pub(crate) fn from_parts(subspace: Subspace, m: usize, boxes: Vec<OuterBox>) -> Self {
        Boxing { subspace, m, boxes }
    }

    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn codim(&self) -> u32 {
        self.subspace.codim()
    }

    pub fn boxes(&self) -> &[OuterBox] {
        &self.boxes
    }

    pub fn box_count(&self) -> usize {
        self.boxes.len()
    }

    /// Index of the outer box containing the plane point `(x, y, x ^ y)`.
    pub fn box_of(&self, x: u32, y: u32) -> usize {
        self.subspace.coset_index(x) * self.subspace.coset_count() + self.subspace.coset_index(y)
    }

    /// Group elements of one cell.
    pub fn cell_members(&self, b: usize, side: Side, cell: usize) -> Vec<u32> {
        let ob = &self.boxes[b];
        let rep = ob.rep(side);
        ob.labels(side)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c as usize == cell)
            .map(|(l, _)| rep ^ self.subspace.element(l))
            .collect()
    }

    /// Checks that `a` lives on the same `F_2^n`.
    pub(crate) fn check_set(&self, a: &PlaneSet) -> Result<()> {
        match a.group().elementary_2_rank() {
            Some(n) if n == self.subspace.ambient_dim() => Ok(()),
            _ => Err(Error::Domain(format!(
                "set over {} does not match a boxing of F_2^{}",
                a.group().descriptor(),
                self.subspace.ambient_dim()
            ))),
        }
    }

    /// Structural invariants: box count, canonical representatives, label range.
    pub fn validate(&self) -> Result<()> {
        let w = &self.subspace;
        let cosets = w.coset_count();
        if self.boxes.len() != cosets * cosets {
            return Err(Error::Validation(format!("{} outer boxes, expected {}", self.boxes.len(), cosets * cosets)));
        }
        for (b, ob) in self.boxes.iter().enumerate() {
            let (xi, yi) = (b / cosets, b % cosets);
            if ob.x_rep != w.coset_rep(xi) || ob.y_rep != w.coset_rep(yi) || ob.z_rep != w.reduce(ob.x_rep ^ ob.y_rep) {
                return Err(Error::Validation(format!("outer box {b} has non-canonical representatives")));
            }
            for side in Side::ALL {
                let labels = ob.labels(side);
                if labels.len() != w.size() {
                    return Err(Error::Validation(format!("outer box {b} partition {side:?} has wrong length")));
                }
                if labels.iter().any(|&c| c as usize >= self.m) {
                    return Err(Error::Validation(format!("outer box {b} partition {side:?} has a label >= m")));
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> BoxingFile {
        let boxes = (0..self.boxes.len())
            .map(|b| {
                let ob = &self.boxes[b];
                let cells = |side| (0..self.m).map(|c| self.cell_members(b, side, c)).collect();
                OuterBoxFile {
                    x_rep: ob.x_rep,
                    y_rep: ob.y_rep,
                    z_rep: ob.z_rep,
                    b: cells(Side::B),
                    c: cells(Side::C),
                    d: cells(Side::D),
                }
            })
            .collect();
        BoxingFile {
            schema_version: BOXING_SCHEMA_VERSION,
            n: self.subspace.ambient_dim(),
            basis: self.subspace.basis().to_vec(),
            m: self.m,
            boxes,
        }
    }

    pub fn from_file(file: &BoxingFile) -> Result<Self> {
        if file.schema_version != BOXING_SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported boxing schema_version {}", file.schema_version)));
        }
        let w = Subspace::spanned_by(file.n, &file.basis)?;
        if w.dim() as usize != file.basis.len() {
            return Err(Error::Validation("boxing basis is linearly dependent".into()));
        }
        let cosets = w.coset_count();
        if file.boxes.len() != cosets * cosets {
            return Err(Error::Validation(format!("{} outer boxes, expected {}", file.boxes.len(), cosets * cosets)));
        }
        let mut boxes = Vec::with_capacity(file.boxes.len());
        for (b, ob) in file.boxes.iter().enumerate() {
            let mut labels: [Vec<u16>; 3] = Default::default();
            for (side, cells) in Side::ALL.into_iter().zip([&ob.b, &ob.c, &ob.d]) {
                let rep = [ob.x_rep, ob.y_rep, ob.z_rep][side.index()];
                if cells.len() != file.m {
                    return Err(Error::Validation(format!("outer box {b} partition {side:?} has {} cells, expected m = {}", cells.len(), file.m)));
                }
                let mut lab = vec![u16::MAX; w.size()];
                for (c, cell) in cells.iter().enumerate() {
                    for &e in cell {
                        let d = e ^ rep;
                        if e as u64 >= 1u64 << file.n || !w.contains(d) {
                            return Err(Error::Validation(format!("outer box {b}: element {e} is outside its coset")));
                        }
                        let slot = &mut lab[w.local(d)];
                        if *slot != u16::MAX {
                            return Err(Error::Validation(format!("outer box {b}: element {e} lies in two cells")));
                        }
                        *slot = c as u16;
                    }
                }
                if lab.contains(&u16::MAX) {
                    return Err(Error::Validation(format!("outer box {b}: partition {side:?} does not cover its coset")));
                }
                labels[side.index()] = lab;
            }
            boxes.push(OuterBox { x_rep: ob.x_rep, y_rep: ob.y_rep, z_rep: ob.z_rep, labels });
        }
        let boxing = Boxing { subspace: w, m: file.m, boxes };
        boxing.validate()?;
        Ok(boxing)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("boxing serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxingFile {
    pub schema_version: u32,
    pub n: u32,
    pub basis: Vec<u32>,
    pub m: usize,
    pub boxes: Vec<OuterBoxFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterBoxFile {
    pub x_rep: u32,
    pub y_rep: u32,
    pub z_rep: u32,
    pub b: Vec<Vec<u32>>,
    pub c: Vec<Vec<u32>>,
    pub d: Vec<Vec<u32>>,
}

/// Cell sizes and `A`-counts of one outer box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCounts {
    pub m: usize,
    /// `|B_i|`, `|C_j|`, `|D_k|`.
    pub sizes: [Vec<u64>; 3],
    /// `|A ∩ (B_i × C_j)_P|`, row-major `m × m`.
    pub bc: Vec<u64>,
    /// `|A ∩ (B_i × D_k)_P|`.
    pub bd: Vec<u64>,
    /// `|A ∩ (C_j × D_k)_P|`.
    pub cd: Vec<u64>,
    /// `|A ∩ (B_i × C_j × D_k)|`, row-major `m × m × m`, when requested.
    pub bcd: Option<Vec<u64>>,
    /// `|A ∩ V|`.
    pub total: u64,
}

impl BoxCounts {
    /// Counts for the pair family `(s, t)` with `s` before `t` in `B, C, D`.
    pub fn pair(&self, s: Side, t: Side) -> &[u64] {
        match (s, t) {
            (Side::B, Side::C) => &self.bc,
            (Side::B, Side::D) => &self.bd,
            (Side::C, Side::D) => &self.cd,
            _ => panic!("pair families are (B, C), (B, D) and (C, D)"),
        }
    }
}

/// The three inner-box families, in the order used everywhere.
pub const FAMILIES: [(Side, Side); 3] = [(Side::B, Side::C), (Side::B, Side::D), (Side::C, Side::D)];

/// One pass over `V ∩ P`.
pub fn box_counts(boxing: &Boxing, a: &PlaneSet, b: usize, with_triples: bool) -> BoxCounts {
    let w = boxing.subspace();
    let m = boxing.m();
    let ob = &boxing.boxes()[b];
    let size = w.size();
    let elems: Vec<u32> = (0..size).map(|l| w.element(l)).collect();
    let shift = w.local(ob.x_rep ^ ob.y_rep ^ ob.z_rep);
    let [lb, lc, ld] = &ob.labels;
    let mut sizes: [Vec<u64>; 3] = [vec![0; m], vec![0; m], vec![0; m]];
    for (s, labels) in ob.labels.iter().enumerate() {
        for &c in labels {
            sizes[s][c as usize] += 1;
        }
    }
    let (mut bc, mut bd, mut cd) = (vec![0u64; m * m], vec![0u64; m * m], vec![0u64; m * m]);
    let mut bcd = with_triples.then(|| vec![0u64; m * m * m]);
    let mut total = 0;
    for (lx, &ex) in elems.iter().enumerate() {
        let x = (ob.x_rep ^ ex) as usize;
        let i = lb[lx] as usize;
        for (ly, &ey) in elems.iter().enumerate() {
            let y = (ob.y_rep ^ ey) as usize;
            if !a.contains(x, y) {
                continue;
            }
            let lz = lx ^ ly ^ shift;
            let (j, k) = (lc[ly] as usize, ld[lz] as usize);
            total += 1;
            bc[i * m + j] += 1;
            bd[i * m + k] += 1;
            cd[j * m + k] += 1;
            if let Some(t) = bcd.as_mut() {
                t[(i * m + j) * m + k] += 1;
            }
        }
    }
    BoxCounts { m, sizes, bc, bd, cd, bcd, total }
}

/// Mean-square cell density `E₁` and mean-square inner-box density `E₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPair {
    pub e1: f64,
    pub e2: f64,
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in terms {
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    sum + comp
}

/// Per-box contributions: `Σ_side Σ_i |cell|²` and
/// `Σ_families Σ_{ij} N_ij² / (|S_i||T_j|)`.
fn box_energy_terms(c: &BoxCounts) -> (u128, f64) {
    let e1: u128 = c.sizes.iter().flatten().map(|&s| (s as u128) * (s as u128)).sum();
    let m = c.m;
    let e2 = compensated_sum(FAMILIES.iter().flat_map(|&(s, t)| {
        let counts = c.pair(s, t);
        let (ss, ts) = (&c.sizes[s.index()], &c.sizes[t.index()]);
        (0..m * m).filter_map(move |ij| {
            let n = counts[ij];
            (n > 0).then(|| (n as f64) * (n as f64) / ((ss[ij / m] * ts[ij % m]) as f64))
        })
    }));
    (e1, e2)
}

pub fn energies(boxing: &Boxing, a: &PlaneSet) -> Result<EnergyPair> {
    energies_with(boxing, a, Execution::default())
}

pub fn energies_with(boxing: &Boxing, a: &PlaneSet, exec: Execution) -> Result<EnergyPair> {
    boxing.check_set(a)?;
    let terms = par::map_range(boxing.box_count(), exec, |b| box_energy_terms(&box_counts(boxing, a, b, false)));
    Ok(energy_from_terms(boxing, &terms))
}

fn energy_from_terms(boxing: &Boxing, terms: &[(u128, f64)]) -> EnergyPair {
    let w2 = (boxing.subspace().size() as f64).powi(2);
    let denom = 3.0 * boxing.box_count() as f64 * w2;
    let e1_num: u128 = terms.iter().map(|t| t.0).sum();
    let e2_num = compensated_sum(terms.iter().map(|t| t.1));
    EnergyPair { e1: e1_num as f64 / denom, e2: e2_num / denom }
}

/// The finite kernel of one outer box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxKernel {
    /// Marginals `δ(B_i)`, `δ(C_j)`, `δ(D_k)`; values `min(1, f′)`.
    pub kernel: DiscreteKernel,
    /// `f′[i,j,k] = |A ∩ B_i×C_j×D_k| |W| / (|B_i||C_j||D_k|)`, 0 on empty cells.
    pub unclipped: Vec<f64>,
    /// `|A ∩ V| / |V ∩ P|`.
    pub alpha: f64,
    /// `E(f′)`.
    pub unclipped_expectation: f64,
    /// `E(f′ − f)`.
    pub clipping_loss: f64,
    /// `T(f′)`: the corner count of `V` predicted from cell densities, over `|W|³`.
    pub unclipped_t: f64,
}

pub fn box_kernel(boxing: &Boxing, a: &PlaneSet, b: usize) -> Result<BoxKernel> {
    boxing.check_set(a)?;
    if b >= boxing.box_count() {
        return Err(Error::Domain(format!("outer box {b} does not exist ({} boxes)", boxing.box_count())));
    }
    let c = box_counts(boxing, a, b, true);
    let m = c.m;
    let size = boxing.subspace().size() as f64;
    let marg = |s: usize| -> Vec<f64> { c.sizes[s].iter().map(|&v| v as f64 / size).collect() };
    let (p, q, r) = (marg(0), marg(1), marg(2));
    let triples = c.bcd.as_ref().expect("requested");
    let mut unclipped = vec![0.0; m * m * m];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let vol = c.sizes[0][i] * c.sizes[1][j] * c.sizes[2][k];
                if vol > 0 {
                    unclipped[(i * m + j) * m + k] = triples[(i * m + j) * m + k] as f64 * size / vol as f64;
                }
            }
        }
    }
    let clipped: Vec<f64> = unclipped.iter().map(|&v| v.min(1.0)).collect();
    let kernel = DiscreteKernel::new(p.clone(), q.clone(), r.clone(), clipped)?;
    let raw = DiscreteKernel::from_parts(p, q, r, unclipped.clone());
    let unclipped_expectation = raw.expectation();
    let clipping_loss = unclipped_expectation - kernel.expectation();
    Ok(BoxKernel {
        alpha: c.total as f64 / (size * size),
        unclipped_t: raw.t_value(),
        kernel,
        unclipped,
        unclipped_expectation,
        clipping_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::FiniteAbelianGroup;

    fn f2(n: u32) -> FiniteAbelianGroup {
        FiniteAbelianGroup::vector(2, n).unwrap()
    }

    #[test]
    fn trivial_boxing_energies() {
        let full = PlaneSet::full(f2(4)).unwrap();
        let b = Boxing::trivial(4).unwrap();
        assert_eq!(b.box_count(), 1);
        assert_eq!(energies(&b, &full).unwrap(), EnergyPair { e1: 1.0, e2: 1.0 });
        let half = PlaneSet::from_fn(f2(4), |x, _| x & 1 == 0).unwrap();
        let e = energies(&b, &half).unwrap();
        assert_eq!(e.e1, 1.0);
        assert!((e.e2 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn box_count_is_four_to_the_codim() {
        let w = Subspace::spanned_by(5, &[0b00001, 0b00110, 0b11000]).unwrap();
        let b = Boxing::from_fn(w, 2, |_, _, l| l & 1).unwrap();
        assert_eq!(b.box_count(), 16);
        b.validate().unwrap();
        let x = 0b10100;
        let y = 0b01011;
        let ob = &b.boxes()[b.box_of(x, y)];
        assert!(b.subspace().contains(x ^ ob.x_rep));
        assert!(b.subspace().contains(y ^ ob.y_rep));
        assert!(b.subspace().contains(x ^ y ^ ob.z_rep));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let w = Subspace::spanned_by(4, &[0b0011, 0b0100]).unwrap();
        let b = Boxing::from_fn(w, 3, |bx, s, l| (bx + s.index() + l) % 3).unwrap();
        let back = Boxing::from_json_str(&b.to_json_string()).unwrap();
        assert_eq!(back, b);
        let mut file = b.to_file();
        let moved = file.boxes[0].b[0].pop().unwrap();
        file.boxes[0].b[1].push(moved);
        file.boxes[0].b[1].push(moved);
        assert!(matches!(Boxing::from_file(&file), Err(Error::Validation(_))));
    }

    #[test]
    fn box_kernel_of_full_set_is_one() {
        let full = PlaneSet::full(f2(3)).unwrap();
        let k = box_kernel(&Boxing::trivial(3).unwrap(), &full, 0).unwrap();
        assert_eq!(k.kernel.values(), &[1.0]);
        assert_eq!(k.alpha, 1.0);
        assert_eq!(k.clipping_loss, 0.0);
    }
}
