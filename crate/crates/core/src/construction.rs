//! Random sets on the plane drawn from a kernel, and their corner counts.
//!
//! Every group element receives three independent labels `X_g ~ p`,
//! `Y_g ~ q`, `Z_g ~ r`; the pair `(x, y)` then joins `A` with probability
//! `f(X_x, Y_y, Z_{-x-y})`. For a fixed `d ≠ 0` the expected corner
//! density is `T(f)`, so a kernel with `T(f) < E(f)³` yields sets whose
//! every nonzero difference is less popular than in a random set of the
//! same density.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{census_with, max_popular_difference, CornerCensus, FiniteAbelianGroup, GroupDescriptor, PlaneSet};
use crate::kernel::DiscreteKernel;
use crate::par::{self, Execution};
use crate::rng::{substream, Purpose, GENERATOR};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Bins in [`ConstructionReport::histogram`], covering `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 20;

/// Trials per substream in [`corner_probability_check`].
const TRIALS_PER_CHUNK: u64 = 1 << 16;

/// Smallest group order accepted by [`run_experiment`].
pub const MIN_EXPERIMENT_ORDER: usize = 16;

/// Allowed excess of a corner density over `T(f)` at group order `n`:
/// `5·√(ln n / n)`.
pub fn slack(n: usize) -> f64 {
    let n = n as f64;
    5.0 * (n.ln() / n).sqrt()
}

/// Inverse-CDF sampler for one marginal.
struct LabelSampler {
    cumulative: Vec<f64>,
}

impl LabelSampler {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        LabelSampler { cumulative }
    }

    /// Smallest `i` with `u < cumulative[i]`; the last label absorbs rounding.
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let last = self.cumulative.len() - 1;
        self.cumulative[..last].partition_point(|&c| c <= u)
    }
}

fn draw_labels(sampler: &LabelSampler, n: usize, seed: u64, purpose: Purpose) -> Vec<usize> {
    let mut rng = substream(seed, purpose, 0);
    (0..n).map(|_| sampler.sample(&mut rng)).collect()
}

/// Draws `A` with the default execution mode.
pub fn sample_set(k: &DiscreteKernel, group: &FiniteAbelianGroup, seed: u64) -> Result<PlaneSet> {
    sample_set_with(k, group, seed, Execution::default())
}

/// Labels for `X`, `Y`, `Z` come from substreams `(LabelsX|LabelsY|LabelsZ, 0)`
/// in element order; the coins of row `x` come from `(Membership, x)` in
/// column order. The result does not depend on `exec`.
pub fn sample_set_with(k: &DiscreteKernel, group: &FiniteAbelianGroup, seed: u64, exec: Execution) -> Result<PlaneSet> {
    let mut set = PlaneSet::empty(group.clone())?;
    let n = group.order();
    let lx = draw_labels(&LabelSampler::new(k.p()), n, seed, Purpose::LabelsX);
    let ly = draw_labels(&LabelSampler::new(k.q()), n, seed, Purpose::LabelsY);
    let lz = draw_labels(&LabelSampler::new(k.r()), n, seed, Purpose::LabelsZ);
    let wpr = set.words_per_row();
    let rows = par::map_range(n, exec, |x| {
        let mut rng = substream(seed, Purpose::Membership, x as u64);
        let mut row = vec![0u64; wpr];
        for (y, &label_y) in ly.iter().enumerate() {
            let z = group.neg(group.add(x, y));
            let f = k.value(lx[x], label_y, lz[z]);
            if rng.gen::<f64>() < f {
                row[y / 64] |= 1 << (y % 64);
            }
        }
        row
    });
    for (x, row) in rows.into_iter().enumerate() {
        set.row_mut(x).copy_from_slice(&row);
    }
    Ok(set)
}

/// Rejection-samples `(x, y, d)` with `x, x+d, y, y+d, z, z+d` pairwise
/// distinct, where `z = -x-y-d`.
fn distinct_corner<R: Rng>(g: &FiniteAbelianGroup, rng: &mut R) -> Result<(usize, usize, usize)> {
    let n = g.order();
    for _ in 0..100_000 {
        let (x, y, d) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(1..n));
        let z = g.neg(g.add(g.add(x, y), d));
        let pts = [x, g.add(x, d), y, g.add(y, d), z, g.add(z, d)];
        let distinct = (0..6).all(|i| (i + 1..6).all(|j| pts[i] != pts[j]));
        if distinct {
            return Ok((x, y, d));
        }
    }
    Err(Error::Domain(format!(
        "group {} has no corner with six distinct coordinates",
        g.descriptor()
    )))
}

fn run_trials(k: &DiscreteKernel, g: &FiniteAbelianGroup, samplers: &[LabelSampler; 3], rng: &mut ChaCha8Rng, trials: u64) -> Result<u64> {
    let [sx, sy, sz] = samplers;
    let mut hits = 0;
    for _ in 0..trials {
        distinct_corner(g, rng)?;
        // Fresh labels for x, x+d, y, y+d, -x-y and -x-y-d.
        let (x0, x1) = (sx.sample(rng), sx.sample(rng));
        let (y0, y1) = (sy.sample(rng), sy.sample(rng));
        let (z0, z1) = (sz.sample(rng), sz.sample(rng));
        let base = rng.gen::<f64>() < k.value(x0, y0, z0);
        let right = rng.gen::<f64>() < k.value(x1, y0, z1);
        let up = rng.gen::<f64>() < k.value(x0, y1, z1);
        if base && right && up {
            hits += 1;
        }
    }
    Ok(hits)
}

/// Monte-Carlo estimate of the probability that a random corner with
/// distinct coordinates lies in a freshly sampled `A`. Its expectation is
/// `t_value(k)`.
///
/// Trials run in chunks of 65536; chunk `i` uses substream `(CornerTrials, i)`.
pub fn corner_probability_check(k: &DiscreteKernel, group: &FiniteAbelianGroup, seed: u64, trials: u64) -> Result<f64> {
    corner_probability_check_with(k, group, seed, trials, Execution::default())
}

pub fn corner_probability_check_with(
    k: &DiscreteKernel,
    group: &FiniteAbelianGroup,
    seed: u64,
    trials: u64,
    exec: Execution,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    if group.order() < 7 {
        return Err(Error::Domain(format!(
            "group of order {} is too small for corners with distinct coordinates",
            group.order()
        )));
    }
    let samplers = [LabelSampler::new(k.p()), LabelSampler::new(k.q()), LabelSampler::new(k.r())];
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let results = par::map_range(chunks as usize, exec, |i| {
        let i = i as u64;
        let mut rng = substream(seed, Purpose::CornerTrials, i);
        let count = TRIALS_PER_CHUNK.min(trials - i * TRIALS_PER_CHUNK);
        run_trials(k, group, &samplers, &mut rng, count)
    });
    let hits = results.into_iter().sum::<Result<u64>>()?;
    Ok(hits as f64 / trials as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub schema_version: u32,
    pub group: GroupDescriptor,
    pub order: usize,
    pub seed: u64,
    /// SHA-256 of the kernel's canonical JSON.
    pub kernel_hash: String,
    pub generator: String,
    pub set_size: u64,
    /// `|A| / N²`.
    pub realized_alpha: f64,
    /// `t_value` of the kernel.
    pub t_target: f64,
    /// `max_{d≠0} |S_d| / N²`.
    pub max_nonzero_census_density: f64,
    pub popular_difference: usize,
    pub slack: f64,
    /// `max_nonzero_census_density ≤ t_target + slack`.
    pub success: bool,
    /// Share of `d ≠ 0` with `|S_d| / N²` within `t_target ± slack`.
    pub within_slack_fraction: f64,
    /// Counts of `|S_d| / N²` over `d ≠ 0` in equal bins on `[0, 1]`.
    pub histogram: Vec<u64>,
}

/// Full output of one experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: ConstructionReport,
    pub set: PlaneSet,
    pub census: CornerCensus,
}

pub fn run_experiment(k: &DiscreteKernel, group: &FiniteAbelianGroup, seed: u64) -> Result<ConstructionReport> {
    Ok(run_experiment_with(k, group, seed, Execution::default())?.report)
}

pub fn run_experiment_with(k: &DiscreteKernel, group: &FiniteAbelianGroup, seed: u64, exec: Execution) -> Result<Experiment> {
    let n = group.order();
    if n < MIN_EXPERIMENT_ORDER {
        return Err(Error::Domain(format!("experiments need a group of order >= {MIN_EXPERIMENT_ORDER}, got {n}")));
    }
    let set = sample_set_with(k, group, seed, exec)?;
    let census = census_with(&set, exec);
    let t_target = k.t_value();
    let slack = slack(n);
    let (popular_difference, _) = max_popular_difference(&census)?;
    let max_density = census.density(popular_difference);
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    let mut within = 0usize;
    for d in 1..n {
        let rho = census.density(d);
        histogram[((rho * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        if (rho - t_target).abs() <= slack {
            within += 1;
        }
    }
    let report = ConstructionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        group: group.descriptor().clone(),
        order: n,
        seed,
        kernel_hash: k.content_hash(),
        generator: GENERATOR.to_string(),
        set_size: set.len(),
        realized_alpha: set.density(),
        t_target,
        max_nonzero_census_density: max_density,
        popular_difference,
        slack,
        success: max_density <= t_target + slack,
        within_slack_fraction: within as f64 / (n - 1) as f64,
        histogram,
    };
    Ok(Experiment { report, set, census })
}

/// CSV with header `d_index,density`, one row per `d`.
pub fn density_csv(census: &CornerCensus) -> String {
    let mut s = String::from("d_index,density\n");
    for d in 0..census.order() {
        s.push_str(&format!("{d},{}\n", census.density(d)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cyclic(n: u64) -> FiniteAbelianGroup {
        FiniteAbelianGroup::cyclic(n).unwrap()
    }

    #[test]
    fn label_sampler_skips_empty_bins() {
        let s = LabelSampler::new(&[0.0, 0.5, 0.0, 0.5, 0.0]);
        let mut rng = substream(1, Purpose::TestData, 0);
        for _ in 0..1000 {
            let i = s.sample(&mut rng);
            assert!(i == 1 || i == 3);
        }
        assert_eq!(LabelSampler::new(&[1.0]).sample(&mut rng), 0);
    }

    #[test]
    fn constant_kernels_give_trivial_sets() {
        let g = cyclic(20);
        let one = DiscreteKernel::constant([2, 3, 1], 1.0).unwrap();
        assert_eq!(sample_set(&one, &g, 3).unwrap().len(), 400);
        let zero = DiscreteKernel::constant([2, 2, 2], 0.0).unwrap();
        assert!(sample_set(&zero, &g, 3).unwrap().is_empty());
        let rep = run_experiment(&one, &g, 0).unwrap();
        assert_eq!(rep.realized_alpha, 1.0);
        assert_eq!(rep.max_nonzero_census_density, 1.0);
        assert!((rep.t_target - 1.0).abs() < 1e-12);
        assert!(rep.success);
    }

    #[test]
    fn sampling_is_deterministic_across_modes() {
        let g = cyclic(100);
        let k = DiscreteKernel::diagonal_gap();
        let a = sample_set_with(&k, &g, 9, Execution::Parallel).unwrap();
        assert_eq!(a, sample_set_with(&k, &g, 9, Execution::Sequential).unwrap());
        assert_ne!(a, sample_set(&k, &g, 10).unwrap());
        let p = corner_probability_check_with(&k, &g, 2, 200_000, Execution::Parallel).unwrap();
        assert_eq!(p, corner_probability_check_with(&k, &g, 2, 200_000, Execution::Sequential).unwrap());
    }

    #[test]
    fn corner_check_edge_cases() {
        let k = DiscreteKernel::constant([1, 1, 1], 1.0).unwrap();
        assert_eq!(corner_probability_check(&k, &cyclic(7), 0, 1000).unwrap(), 1.0);
        assert!(matches!(corner_probability_check(&k, &cyclic(6), 0, 10), Err(Error::Domain(_))));
        assert!(matches!(corner_probability_check(&k, &cyclic(9), 0, 0), Err(Error::Domain(_))));
        let v = FiniteAbelianGroup::vector(2, 3).unwrap();
        assert_eq!(corner_probability_check(&k, &v, 0, 100).unwrap(), 1.0);
    }

    #[test]
    fn experiment_needs_order_16() {
        let k = DiscreteKernel::diagonal_gap();
        assert!(matches!(run_experiment(&k, &cyclic(15), 0), Err(Error::Domain(_))));
    }

    #[test]
    fn slack_at_512() {
        assert!((slack(512) - 0.5515).abs() < 1e-3);
    }
}
