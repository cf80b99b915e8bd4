//! Regularity machinery over `F_2^n`: Walsh analysis of cells, boxings and
//! their two energies, the refinements that raise them, and the per-box
//! kernels that connect a regular boxing back to `T(f)`.

mod audit;
mod boxing;
mod refine;
mod subspace;
mod walsh;

pub use audit::{
    quasirandom_audit, quasirandom_audit_pairs, quasirandom_box_audit, quasirandom_box_audit_with, uniformity_audit,
    uniformity_audit_with, BipartiteBlock, BoxQuasirandom, InnerBoxWitness, QuasirandomAudit, QuasirandomMode,
    QuasirandomResult, SubsetWitness, UniformityAudit, UniformityWitness, SAMPLED_PAIRS,
};
pub use boxing::{
    box_counts, box_kernel, energies, energies_with, BoxCounts, BoxKernel, Boxing, BoxingFile, EnergyPair, OuterBox,
    OuterBoxFile, Side, BOXING_SCHEMA_VERSION, FAMILIES,
};
pub use refine::{
    find_regular_boxing, find_regular_boxing_with, refine_a, refine_a_with, refine_b, refine_b_with, restrict, Caps,
    RefineAStep, RefineBStep, RefineError, RegularityConfig, RegularityRun, RunStatus, StepKind, TrajectoryStep,
    ENERGY_TOLERANCE,
};
pub use subspace::Subspace;
pub use walsh::{fwht, inverse_fwht, walsh, WalshSpectrum};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{census_for, PlaneSet};
use crate::par::Execution;

/// Corners `(x, y, d)` of `A` with `d ∈ W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CornersWithinW {
    /// `d = 0`: equals `|A|`.
    pub degenerate: u64,
    /// `d ∈ W \ {0}`.
    pub nondegenerate: u64,
}

impl CornersWithinW {
    pub fn total(&self) -> u64 {
        self.degenerate + self.nondegenerate
    }
}

/// Sums the census over `d ∈ W`.
pub fn corners_within_w(a: &PlaneSet, w: &Subspace) -> Result<CornersWithinW> {
    if a.group().elementary_2_rank() != Some(w.ambient_dim()) {
        return Err(Error::Domain(format!("set over {} does not match F_2^{}", a.group().descriptor(), w.ambient_dim())));
    }
    let ds: Vec<usize> = (0..w.size()).map(|l| w.element(l) as usize).collect();
    let counts = census_for(a, &ds, Execution::default())?;
    Ok(CornersWithinW { degenerate: counts[0], nondegenerate: counts[1..].iter().sum() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{census, FiniteAbelianGroup};

    #[test]
    fn corners_within_extreme_subspaces() {
        let g = FiniteAbelianGroup::vector(2, 5).unwrap();
        let a = PlaneSet::from_fn(g, |x, y| (x * 3 + y * 5) % 7 < 4).unwrap();
        let zero = corners_within_w(&a, &Subspace::zero(5).unwrap()).unwrap();
        assert_eq!(zero, CornersWithinW { degenerate: a.len(), nondegenerate: 0 });
        let all = corners_within_w(&a, &Subspace::full(5).unwrap()).unwrap();
        assert_eq!(all.total(), census(&a).total());
    }
}
