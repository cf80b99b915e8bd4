use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::audit::{quasirandom_box_audit_with, uniformity_audit_with, InnerBoxWitness, QuasirandomAudit, UniformityAudit};
use super::boxing::{energies_with, Boxing, EnergyPair, OuterBox, Side};
use super::subspace::Subspace;
use crate::error::{Error, Result};
use crate::groups::PlaneSet;
use crate::par::Execution;

/// Slack for comparing floating energies that are equal in exact arithmetic.
pub const ENERGY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_n: u32,
    pub max_codim: u32,
    pub max_m: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_n: 12, max_codim: 8, max_m: 64 }
    }
}

/// Failure of a refinement. A codimension overflow keeps the boxing refined
/// by as many witness characters as fit under the cap.
#[derive(Debug, thiserror::Error)]
pub enum RefineError {
    #[error(transparent)]
    Failed(#[from] Error),
    #[error("{message}")]
    CapExceeded { message: String, partial: Option<Box<Boxing>> },
}

impl From<RefineError> for Error {
    fn from(e: RefineError) -> Self {
        match e {
            RefineError::Failed(e) => e,
            RefineError::CapExceeded { message, .. } => Error::Resource(message),
        }
    }
}

/// Restricts every partition of `boxing` to the cosets of `t ≤ W`.
pub fn restrict(boxing: &Boxing, t: &Subspace) -> Result<Boxing> {
    let w = boxing.subspace();
    if !t.is_subspace_of(w) {
        return Err(Error::Domain("restriction target is not a subspace of W".into()));
    }
    let cosets = t.coset_count();
    let elems: Vec<u32> = (0..t.size()).map(|l| t.element(l)).collect();
    let mut boxes = Vec::with_capacity(cosets * cosets);
    for xi in 0..cosets {
        for yi in 0..cosets {
            let x_rep = t.coset_rep(xi);
            let y_rep = t.coset_rep(yi);
            let z_rep = t.reduce(x_rep ^ y_rep);
            let old = &boxing.boxes()[boxing.box_of(x_rep, y_rep)];
            let mut labels: [Vec<u16>; 3] = Default::default();
            for (side, rep) in Side::ALL.into_iter().zip([x_rep, y_rep, z_rep]) {
                let base = rep ^ old.rep(side);
                labels[side.index()] = elems.iter().map(|&e| old.labels(side)[w.local(base ^ e)]).collect();
            }
            boxes.push(OuterBox { x_rep, y_rep, z_rep, labels });
        }
    }
    Ok(Boxing::from_parts(t.clone(), boxing.m(), boxes))
}

#[derive(Debug, Clone)]
pub struct RefineAStep {
    pub boxing: Boxing,
    pub before: EnergyPair,
    pub after: EnergyPair,
    /// Share of outer boxes with a non-uniform cell before refining.
    pub failing_fraction: f64,
    /// `Σ coefficient² / (3·4^codim)` over the witnesses: a lower bound on
    /// the increase of `E₁`.
    pub guaranteed_increment: f64,
    /// `ε³ / (12 m⁶)`, implied by `guaranteed_increment` when at least an
    /// `ε` share of outer boxes fails.
    pub epsilon_bound: f64,
}

/// Replaces `W` by the common kernel of one witness character per
/// non-uniform outer box, keeping `m`.
pub fn refine_a(boxing: &Boxing, a: &PlaneSet, eps: f64, caps: &Caps) -> std::result::Result<RefineAStep, RefineError> {
    refine_a_with(boxing, a, eps, caps, Execution::default())
}

pub fn refine_a_with(boxing: &Boxing, a: &PlaneSet, eps: f64, caps: &Caps, exec: Execution) -> std::result::Result<RefineAStep, RefineError> {
    let audit = uniformity_audit_with(boxing, eps, exec)?;
    refine_a_from_audit(boxing, a, eps, caps, &audit, exec)
}

pub(crate) fn refine_a_from_audit(
    boxing: &Boxing,
    a: &PlaneSet,
    eps: f64,
    caps: &Caps,
    audit: &UniformityAudit,
    exec: Execution,
) -> std::result::Result<RefineAStep, RefineError> {
    if audit.witnesses.is_empty() {
        return Err(Error::Domain("every outer box is uniform; nothing to refine".into()).into());
    }
    let w = boxing.subspace();
    let chars: Vec<usize> = audit.witnesses.iter().map(|wt| wt.character).collect();
    let t = w.kernel_of_all(&chars)?;
    if t.codim() > caps.max_codim {
        // Keep as many characters, in box order, as the cap allows.
        let mut kept = Vec::new();
        for &c in &chars {
            kept.push(c);
            if w.kernel_of_all(&kept)?.codim() > caps.max_codim {
                kept.pop();
            }
        }
        let partial = if kept.is_empty() { boxing.clone() } else { restrict(boxing, &w.kernel_of_all(&kept)?)? };
        return Err(RefineError::CapExceeded {
            message: format!("refinement (A) needs codimension {} > cap {}", t.codim(), caps.max_codim),
            partial: Some(Box::new(partial)),
        });
    }
    let before = energies_with(boxing, a, exec)?;
    let refined = restrict(boxing, &t)?;
    let after = energies_with(&refined, a, exec)?;
    let scale = 3.0 * boxing.box_count() as f64;
    let guaranteed_increment = audit.witnesses.iter().map(|wt| wt.coefficient * wt.coefficient).sum::<f64>() / scale;
    let m = boxing.m() as f64;
    Ok(RefineAStep {
        boxing: refined,
        before,
        after,
        failing_fraction: audit.failing_fraction(),
        guaranteed_increment,
        epsilon_bound: eps.powi(3) / (12.0 * m.powi(6)),
    })
}

#[derive(Debug, Clone)]
pub struct RefineBStep {
    pub boxing: Boxing,
    pub before: EnergyPair,
    pub after: EnergyPair,
    /// Share of outer boxes failing quasirandomness before refining.
    pub failing_fraction: f64,
    pub witnesses_used: usize,
    /// `Σ 4^{-codim} δ(S)δ(T) c₁ c₂² / 3` with `c₁ = |S′||T′|/(|S||T|)` and
    /// `c₂` the witnessed deviation: a lower bound on the increase of `E₂`.
    pub guaranteed_increment: f64,
    /// `Σ 4^{-codim} δ(S)δ(T) ε⁴ / 3`, at most `guaranteed_increment`.
    pub epsilon_bound: f64,
}

/// Splits the cells of every failing outer box by the witness subsets of its
/// non-quasirandom inner boxes, then pads all partitions to a common `m`.
pub fn refine_b(boxing: &Boxing, a: &PlaneSet, eps: f64, seed: u64, caps: &Caps) -> std::result::Result<RefineBStep, RefineError> {
    refine_b_with(boxing, a, eps, seed, caps, Execution::default())
}

pub fn refine_b_with(
    boxing: &Boxing,
    a: &PlaneSet,
    eps: f64,
    seed: u64,
    caps: &Caps,
    exec: Execution,
) -> std::result::Result<RefineBStep, RefineError> {
    let audit = quasirandom_box_audit_with(boxing, a, eps, seed, exec)?;
    refine_b_from_audit(boxing, a, eps, caps, &audit, exec)
}

pub(crate) fn refine_b_from_audit(
    boxing: &Boxing,
    a: &PlaneSet,
    eps: f64,
    caps: &Caps,
    audit: &QuasirandomAudit,
    exec: Execution,
) -> std::result::Result<RefineBStep, RefineError> {
    let used: Vec<&InnerBoxWitness> = audit.boxes.iter().filter(|b| b.fails).flat_map(|b| b.witnesses.iter()).collect();
    if used.is_empty() {
        return Err(Error::Domain("no outer box fails quasirandomness; nothing to refine".into()).into());
    }
    let w = boxing.subspace();
    let size = w.size();
    // Witness subsets per (box, side, cell), as local-coordinate masks.
    let mut splits: HashMap<(usize, Side, usize), Vec<Vec<bool>>> = HashMap::new();
    for wt in &used {
        let ob = &boxing.boxes()[wt.outer_box];
        for (side, cell, members) in [(wt.family.0, wt.cells.0, &wt.witness.left), (wt.family.1, wt.cells.1, &wt.witness.right)] {
            let mut mask = vec![false; size];
            for &e in members {
                mask[w.local(e ^ ob.rep(side))] = true;
            }
            splits.entry((wt.outer_box, side, cell)).or_default().push(mask);
        }
    }
    let mut boxes = boxing.boxes().to_vec();
    let mut new_m = boxing.m();
    for (b, ob) in boxes.iter_mut().enumerate() {
        for side in Side::ALL {
            let labels = &mut ob.labels[side.index()];
            let mut next = boxing.m();
            for cell in 0..boxing.m() {
                let Some(masks) = splits.get(&(b, side, cell)) else { continue };
                // Atoms: elements of the cell with the same membership
                // pattern. The first atom keeps the old label.
                let mut atom_label: HashMap<Vec<bool>, u16> = HashMap::new();
                for l in 0..size {
                    if labels[l] as usize != cell {
                        continue;
                    }
                    let sig: Vec<bool> = masks.iter().map(|mk| mk[l]).collect();
                    let fresh = atom_label.len();
                    let label = *atom_label.entry(sig).or_insert_with(|| {
                        if fresh == 0 {
                            cell as u16
                        } else {
                            next += 1;
                            (next - 1) as u16
                        }
                    });
                    labels[l] = label;
                }
            }
            new_m = new_m.max(next);
        }
    }
    if new_m > caps.max_m {
        return Err(RefineError::CapExceeded {
            message: format!("refinement (B) needs m = {new_m} > cap {}", caps.max_m),
            partial: None,
        });
    }
    if new_m > u16::MAX as usize {
        return Err(Error::Resource(format!("m = {new_m} does not fit the label type")).into());
    }
    let refined = Boxing::from_parts(w.clone(), new_m, boxes);
    let before = energies_with(boxing, a, exec)?;
    let after = energies_with(&refined, a, exec)?;
    let norm = 3.0 * boxing.box_count() as f64;
    let mut guaranteed = 0.0;
    let mut eps_bound = 0.0;
    for wt in &used {
        let (s_size, t_size) = (boxing.cell_members(wt.outer_box, wt.family.0, wt.cells.0).len(), boxing.cell_members(wt.outer_box, wt.family.1, wt.cells.1).len());
        let c1 = (wt.witness.left.len() * wt.witness.right.len()) as f64 / (s_size * t_size) as f64;
        let c2 = wt.witness.deviation();
        guaranteed += wt.weight * c1 * c2 * c2 / norm;
        eps_bound += wt.weight * eps.powi(4) / norm;
    }
    Ok(RefineBStep {
        boxing: refined,
        before,
        after,
        failing_fraction: audit.failing_fraction(),
        witnesses_used: used.len(),
        guaranteed_increment: guaranteed,
        epsilon_bound: eps_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Initial,
    RefineA,
    RefineB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub kind: StepKind,
    pub codim: u32,
    pub m: usize,
    pub e1: f64,
    pub e2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    /// Both regularity conditions hold.
    Regular,
    /// A cap stopped the loop; the boxing is the last one reached.
    CapsExhausted { reason: String },
}

#[derive(Debug, Clone)]
pub struct RegularityRun {
    pub status: RunStatus,
    pub boxing: Boxing,
    pub trajectory: Vec<TrajectoryStep>,
    pub uniformity: UniformityAudit,
    pub quasirandom: QuasirandomAudit,
    pub refine_a_calls: usize,
    pub refine_b_calls: usize,
    /// Energy monotonicity or call-count bounds that failed; empty on a
    /// healthy run.
    pub violations: Vec<String>,
}

impl RegularityRun {
    /// CSV with header `step,kind,codim,m,e1,e2`.
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("step,kind,codim,m,e1,e2\n");
        for t in &self.trajectory {
            let kind = match t.kind {
                StepKind::Initial => "initial",
                StepKind::RefineA => "refine_a",
                StepKind::RefineB => "refine_b",
            };
            s.push_str(&format!("{},{kind},{},{},{},{}\n", t.step, t.codim, t.m, t.e1, t.e2));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityConfig {
    pub eps: f64,
    pub seed: u64,
    pub caps: Caps,
}

impl RegularityConfig {
    pub fn new(eps: f64) -> Self {
        RegularityConfig { eps, seed: 0, caps: Caps::default() }
    }
}

/// Refines the trivial boxing until both conditions hold.
///
/// Phase i applies (B) while quasirandomness fails; phase ii applies (A)
/// while uniformity fails, then control returns to phase i. Both
/// conditions holding at the start of phase i after (B) ends the run.
pub fn find_regular_boxing(a: &PlaneSet, cfg: &RegularityConfig) -> Result<RegularityRun> {
    find_regular_boxing_with(a, cfg, Execution::default())
}

pub fn find_regular_boxing_with(a: &PlaneSet, cfg: &RegularityConfig, exec: Execution) -> Result<RegularityRun> {
    let eps = cfg.eps;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("epsilon {eps} outside (0, 1)")));
    }
    let n = a.group().elementary_2_rank().ok_or_else(|| Error::Domain(format!("regularity needs a group F_2^n, got {}", a.group().descriptor())))?;
    if n > cfg.caps.max_n {
        return Err(Error::Resource(format!("n = {n} exceeds the cap {}", cfg.caps.max_n)));
    }
    let mut boxing = Boxing::trivial(n)?;
    let e = energies_with(&boxing, a, exec)?;
    let mut trajectory = vec![TrajectoryStep { step: 0, kind: StepKind::Initial, codim: 0, m: 1, e1: e.e1, e2: e.e2 }];
    let mut violations = Vec::new();
    let (mut a_calls, mut b_calls, mut a_since_b) = (0usize, 0usize, 0usize);
    let max_b_calls = (3.0 / eps.powi(6)).ceil() as usize;
    let record = |kind: StepKind, boxing: &Boxing, before: EnergyPair, after: EnergyPair, trajectory: &mut Vec<TrajectoryStep>, violations: &mut Vec<String>| {
        let step = trajectory.len();
        if after.e2 < before.e2 - ENERGY_TOLERANCE {
            violations.push(format!("step {step}: E2 decreased {} -> {}", before.e2, after.e2));
        }
        if kind == StepKind::RefineA && after.e1 < before.e1 - ENERGY_TOLERANCE {
            violations.push(format!("step {step}: E1 decreased {} -> {}", before.e1, after.e1));
        }
        trajectory.push(TrajectoryStep { step, kind, codim: boxing.codim(), m: boxing.m(), e1: after.e1, e2: after.e2 });
    };

    let finish = |status, boxing: Boxing, trajectory, uniformity, quasirandom, a_calls, b_calls, violations| RegularityRun {
        status,
        boxing,
        trajectory,
        uniformity,
        quasirandom,
        refine_a_calls: a_calls,
        refine_b_calls: b_calls,
        violations,
    };

    loop {
        // Phase i.
        let mut qa = quasirandom_box_audit_with(&boxing, a, eps, cfg.seed, exec)?;
        while !qa.holds(eps) {
            match refine_b_from_audit(&boxing, a, eps, &cfg.caps, &qa, exec) {
                Ok(step) => {
                    b_calls += 1;
                    a_since_b = 0;
                    record(StepKind::RefineB, &step.boxing, step.before, step.after, &mut trajectory, &mut violations);
                    boxing = step.boxing;
                }
                Err(RefineError::CapExceeded { message, .. }) => {
                    let ua = uniformity_audit_with(&boxing, eps, exec)?;
                    return Ok(finish(RunStatus::CapsExhausted { reason: message }, boxing, trajectory, ua, qa, a_calls, b_calls, violations));
                }
                Err(RefineError::Failed(e)) => return Err(e),
            }
            if b_calls > max_b_calls {
                violations.push(format!("{b_calls} refinements (B) exceed the bound {max_b_calls}"));
            }
            qa = quasirandom_box_audit_with(&boxing, a, eps, cfg.seed, exec)?;
        }
        let mut ua = uniformity_audit_with(&boxing, eps, exec)?;
        if ua.holds(eps) {
            return Ok(finish(RunStatus::Regular, boxing, trajectory, ua, qa, a_calls, b_calls, violations));
        }
        // Phase ii.
        let max_a_calls = (12.0 * (boxing.m() as f64).powi(6) / eps.powi(3)).ceil() as usize;
        while !ua.holds(eps) {
            match refine_a_from_audit(&boxing, a, eps, &cfg.caps, &ua, exec) {
                Ok(step) => {
                    a_calls += 1;
                    a_since_b += 1;
                    record(StepKind::RefineA, &step.boxing, step.before, step.after, &mut trajectory, &mut violations);
                    boxing = step.boxing;
                }
                Err(RefineError::CapExceeded { message, partial }) => {
                    if let Some(p) = partial {
                        boxing = *p;
                    }
                    let ua = uniformity_audit_with(&boxing, eps, exec)?;
                    let qa = quasirandom_box_audit_with(&boxing, a, eps, cfg.seed, exec)?;
                    return Ok(finish(RunStatus::CapsExhausted { reason: message }, boxing, trajectory, ua, qa, a_calls, b_calls, violations));
                }
                Err(RefineError::Failed(e)) => return Err(e),
            }
            if a_since_b > max_a_calls {
                violations.push(format!("{a_since_b} consecutive refinements (A) exceed the bound {max_a_calls}"));
            }
            ua = uniformity_audit_with(&boxing, eps, exec)?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::FiniteAbelianGroup;
    use crate::regularity::audit::uniformity_audit;
    use crate::regularity::boxing::energies;

    fn f2(n: u32) -> FiniteAbelianGroup {
        FiniteAbelianGroup::vector(2, n).unwrap()
    }

    #[test]
    fn full_set_is_regular_at_once() {
        let a = PlaneSet::full(f2(5)).unwrap();
        let run = find_regular_boxing(&a, &RegularityConfig::new(0.2)).unwrap();
        assert_eq!(run.status, RunStatus::Regular);
        assert_eq!(run.trajectory.len(), 1);
        assert_eq!(run.boxing, Boxing::trivial(5).unwrap());
    }

    #[test]
    fn single_witness_adds_one_codimension() {
        let w = Subspace::full(4).unwrap();
        let boxing = Boxing::from_fn(w, 2, |_, side, l| if side == Side::B { l & 1 } else { 0 }).unwrap();
        let a = PlaneSet::from_fn(f2(4), |x, y| (x ^ y) % 3 == 0).unwrap();
        let step = refine_a(&boxing, &a, 0.3, &Caps::default()).unwrap();
        assert_eq!(step.boxing.codim(), 1);
        assert_eq!(step.boxing.m(), 2);
        assert!(step.after.e1 >= step.before.e1 + step.guaranteed_increment - ENERGY_TOLERANCE);
        assert!(step.after.e2 >= step.before.e2 - ENERGY_TOLERANCE);
        assert!(uniformity_audit(&step.boxing, 0.3).unwrap().witnesses.is_empty());
    }

    #[test]
    fn refine_a_rejects_uniform_boxings_and_respects_caps() {
        let a = PlaneSet::full(f2(3)).unwrap();
        assert!(matches!(refine_a(&Boxing::trivial(3).unwrap(), &a, 0.3, &Caps::default()), Err(RefineError::Failed(Error::Domain(_)))));
        let w = Subspace::full(4).unwrap();
        let boxing = Boxing::from_fn(w, 2, |_, side, l| if side == Side::B { l & 1 } else { 0 }).unwrap();
        let caps = Caps { max_codim: 0, ..Caps::default() };
        match refine_a(&boxing, &a_for(4), 0.3, &caps) {
            Err(RefineError::CapExceeded { partial: Some(p), .. }) => assert_eq!(*p, boxing),
            other => panic!("{other:?}"),
        }
    }

    fn a_for(n: u32) -> PlaneSet {
        PlaneSet::from_fn(f2(n), |x, y| (x * 7 + y) % 5 < 2).unwrap()
    }

    #[test]
    fn refine_b_splits_a_block_structure() {
        // A = S × T on the first half of each side.
        let a = PlaneSet::from_fn(f2(4), |x, y| x < 8 && y < 8).unwrap();
        let boxing = Boxing::trivial(4).unwrap();
        let step = refine_b(&boxing, &a, 0.25, 0, &Caps::default()).unwrap();
        assert!(step.after.e2 > step.before.e2);
        assert!(step.after.e2 - step.before.e2 >= step.guaranteed_increment - ENERGY_TOLERANCE);
        assert!(step.guaranteed_increment >= step.epsilon_bound);
        assert!(step.boxing.m() > 1);
        assert_eq!(step.boxing.codim(), 0);
        let again = energies(&step.boxing, &a).unwrap();
        assert_eq!(again, step.after);
        let full = PlaneSet::full(f2(4)).unwrap();
        assert!(matches!(refine_b(&boxing, &full, 0.25, 0, &Caps::default()), Err(RefineError::Failed(Error::Domain(_)))));
    }

    #[test]
    fn restrict_preserves_cells() {
        let w = Subspace::full(5).unwrap();
        let boxing = Boxing::from_fn(w.clone(), 3, |_, s, l| (l * (s.index() + 1)) % 3).unwrap();
        let t = w.kernel_of_all(&[0b10110, 0b00011]).unwrap();
        let r = restrict(&boxing, &t).unwrap();
        assert_eq!(r.box_count(), 16);
        r.validate().unwrap();
        for b in 0..r.box_count() {
            for side in Side::ALL {
                for c in 0..3 {
                    for e in r.cell_members(b, side, c) {
                        let ob = &boxing.boxes()[0];
                        assert_eq!(ob.labels(side)[w.local(e ^ ob.rep(side))] as usize, c);
                    }
                }
            }
        }
    }
}
