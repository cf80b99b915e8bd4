//! Multi-start projected gradient search for kernels with small `T(f)` at a
//! prescribed mean.
//!
//! The feasible set for a fixed marginal grid is the box `[0, 1]^cells`
//! intersected with the hyperplane `Σ w f = α` where `w = p ⊗ q ⊗ r`. The
//! search works in the `w`-weighted inner product, in which the gradient of
//! `T` at cell `(a, b, c)` is `G_xy[a,b] + G_xz[a,c] + G_yz[b,c]` and the
//! projection is a clip of a uniform shift, found by bisection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{product_weights, DiscreteKernel, KernelFile, DEFAULT_CELL_BUDGET};
use crate::par::{self, Execution};
use crate::rng::{substream, Purpose};

/// `log(26/27) / log(3/4)`: the exponent gap of the upper envelope.
pub fn exponent_gap() -> f64 {
    (26.0f64 / 27.0).ln() / 0.75f64.ln()
}

/// Feasibility tolerance on the mean constraint.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// Proven window for the infimum of `T` at mean `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// `α⁴`.
    pub lower: f64,
    /// `(27/26) α^{3+c}`; exceeds 1 near `α = 1`.
    pub upper: f64,
}

impl Envelope {
    /// Upper bound clamped to 1, since `T ≤ 1` always.
    pub fn upper_display(&self) -> f64 {
        self.upper.min(1.0)
    }
}

/// `(α⁴, (27/26) α^{3+c})` for `α ∈ [0, 1]`.
pub fn envelope(alpha: f64) -> Result<Envelope> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(Envelope {
        lower: alpha.powi(4),
        upper: 27.0 / 26.0 * alpha.powf(3.0 + exponent_gap()),
    })
}

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step; a step that fails to decrease `T` ends the restart.
    Fixed { step: f64 },
    /// Armijo backtracking along the projection arc.
    Backtracking { initial_step: f64, shrink: f64, armijo: f64, min_step: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking { initial_step: 4.0, shrink: 0.5, armijo: 1e-4, min_step: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub alpha: f64,
    pub shape: [usize; 3],
    pub restarts: usize,
    pub max_iters: usize,
    #[serde(default)]
    pub step_rule: StepRule,
    pub seed: u64,
    /// A restart stops once an accepted step decreases `T` by less than this.
    pub tolerance: f64,
}

impl OptimizeConfig {
    pub fn new(alpha: f64, shape: [usize; 3]) -> Self {
        OptimizeConfig {
            alpha,
            shape,
            restarts: 20,
            max_iters: 5000,
            step_rule: StepRule::default(),
            seed: 0,
            tolerance: 1e-14,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.shape.contains(&0) {
            return Err(Error::Domain("shape dimensions must be >= 1".into()));
        }
        let cells = self.shape.iter().try_fold(1usize, |acc, &m| acc.checked_mul(m));
        if !matches!(cells, Some(c) if c <= DEFAULT_CELL_BUDGET) {
            return Err(Error::Resource(format!("shape {:?} exceeds the cell budget", self.shape)));
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::Domain("restarts and max_iters must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Domain("tolerance must be >= 0".into()));
        }
        match self.step_rule {
            StepRule::Fixed { step } if !(step > 0.0) => Err(Error::Domain("fixed step must be > 0".into())),
            StepRule::Backtracking { initial_step, shrink, armijo, min_step }
                if !(initial_step > 0.0
                    && shrink > 0.0
                    && shrink < 1.0
                    && armijo > 0.0
                    && armijo < 1.0
                    && min_step > 0.0) =>
            {
                Err(Error::Domain("backtracking parameters out of range".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub initial_t: f64,
    pub final_t: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub schema_version: u32,
    pub alpha: f64,
    pub best_kernel: KernelFile,
    pub best_t: f64,
    pub best_restart: usize,
    pub trajectory: Vec<RestartTrace>,
    pub envelope: Envelope,
    /// Broken invariants; empty on a healthy run.
    pub violations: Vec<String>,
    /// Soft findings, e.g. the best value lies above the upper envelope.
    pub warnings: Vec<String>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

struct Conditionals {
    xy: Vec<f64>,
    xz: Vec<f64>,
    yz: Vec<f64>,
}

fn conditionals(k: &DiscreteKernel) -> Conditionals {
    Conditionals {
        xy: k.conditional_xy().as_slice().to_vec(),
        xz: k.conditional_xz().as_slice().to_vec(),
        yz: k.conditional_yz().as_slice().to_vec(),
    }
}

/// `T` and the gradient in the weighted inner product:
/// entry `(a,b,c)` is `G_xy[a,b] + G_xz[a,c] + G_yz[b,c]`.
fn value_and_metric_gradient(k: &DiscreteKernel) -> (f64, Vec<f64>) {
    let [mx, my, mz] = k.shape();
    let (p, q, r) = (k.p(), k.q(), k.r());
    let c = conditionals(k);
    let mut g_xy = vec![0.0; mx * my];
    for a in 0..mx {
        for b in 0..my {
            g_xy[a * my + b] = (0..mz).map(|z| r[z] * c.xz[a * mz + z] * c.yz[b * mz + z]).sum();
        }
    }
    let mut g_xz = vec![0.0; mx * mz];
    for a in 0..mx {
        for z in 0..mz {
            g_xz[a * mz + z] = (0..my).map(|j| q[j] * c.xy[a * my + j] * c.yz[j * mz + z]).sum();
        }
    }
    let mut g_yz = vec![0.0; my * mz];
    for b in 0..my {
        for z in 0..mz {
            g_yz[b * mz + z] = (0..mx).map(|i| p[i] * c.xy[i * my + b] * c.xz[i * mz + z]).sum();
        }
    }
    let mut t = 0.0;
    for a in 0..mx {
        for b in 0..my {
            t += p[a] * q[b] * c.xy[a * my + b] * g_xy[a * my + b];
        }
    }
    let mut grad = Vec::with_capacity(mx * my * mz);
    for a in 0..mx {
        for b in 0..my {
            for z in 0..mz {
                grad.push(g_xy[a * my + b] + g_xz[a * mz + z] + g_yz[b * mz + z]);
            }
        }
    }
    (t, grad)
}

/// Euclidean gradient `∂T / ∂f[a][b][c]`, laid out like the values.
///
/// A value enters exactly one entry of each pairwise conditional, so the
/// derivative is `p_a q_b r_c (G_xy[a,b] + G_xz[a,c] + G_yz[b,c])` with
/// `G_xy[a,b] = Σ_c' r_c' E(f|X,Z)[a,c'] E(f|Y,Z)[b,c']` and cyclically.
pub fn t_gradient(k: &DiscreteKernel) -> Vec<f64> {
    let (_, g) = value_and_metric_gradient(k);
    g.iter().zip(k.weights()).map(|(g, w)| g * w).collect()
}

/// Weighted Euclidean projection of `raw` onto
/// `{ f ∈ [0,1]^cells : Σ p_i q_j r_k f = alpha }`.
///
/// The minimiser is `clip(raw + λ, 0, 1)` for the unique shift `λ` meeting
/// the mean constraint; `λ` is found by bisection.
pub fn project_feasible(raw: &[f64], p: &[f64], q: &[f64], r: &[f64], alpha: f64) -> Result<DiscreteKernel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha {alpha} is not attainable in the box [0, 1]")));
    }
    // Validates the marginals.
    let template = DiscreteKernel::new(p.to_vec(), q.to_vec(), r.to_vec(), vec![0.0; p.len() * q.len() * r.len()])?;
    if raw.len() != template.cell_count() {
        return Err(Error::Validation(format!(
            "raw tensor has {} entries, marginals need {}",
            raw.len(),
            template.cell_count()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("raw tensor has non-finite entries".into()));
    }
    let w = product_weights(p, q, r);
    let values = project_with_weights(raw, &w, alpha);
    let mean: f64 = values.iter().zip(&w).map(|(v, w)| v * w).sum();
    if (mean - alpha).abs() > MEAN_TOLERANCE {
        return Err(Error::Invariant(format!("projection missed the mean: {mean} vs {alpha}")));
    }
    Ok(DiscreteKernel::from_parts(p.to_vec(), q.to_vec(), r.to_vec(), values))
}

fn project_with_weights(raw: &[f64], w: &[f64], alpha: f64) -> Vec<f64> {
    // The feasible set is a single point at either end.
    if alpha >= 1.0 || alpha <= 0.0 {
        return vec![alpha.clamp(0.0, 1.0); raw.len()];
    }
    let mean_of = |lam: f64| -> f64 { raw.iter().zip(w).map(|(t, w)| w * (t + lam).clamp(0.0, 1.0)).sum() };
    let in_box = raw.iter().all(|v| (0.0..=1.0).contains(v));
    if in_box && (mean_of(0.0) - alpha).abs() <= 1e-13 {
        return raw.to_vec();
    }
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (-max, 1.0 - min);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mean_of(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = if (mean_of(lo) - alpha).abs() < (mean_of(hi) - alpha).abs() { lo } else { hi };
    raw.iter().map(|t| (t + lam).clamp(0.0, 1.0)).collect()
}

struct RestartResult {
    trace: RestartTrace,
    kernel: DiscreteKernel,
    violations: Vec<String>,
}

fn run_restart(cfg: &OptimizeConfig, restart: usize) -> RestartResult {
    let [mx, my, mz] = cfg.shape;
    let uniform = |m: usize| vec![1.0 / m as f64; m];
    let (p, q, r) = (uniform(mx), uniform(my), uniform(mz));
    let w = product_weights(&p, &q, &r);
    let cells = w.len();
    let start = if restart == 0 {
        vec![cfg.alpha; cells]
    } else {
        let mut rng = substream(cfg.seed, Purpose::OptimizerRestart, restart as u64);
        let raw: Vec<f64> = (0..cells).map(|_| rng.gen::<f64>()).collect();
        project_with_weights(&raw, &w, cfg.alpha)
    };
    let mut kernel = DiscreteKernel::from_parts(p.clone(), q.clone(), r.clone(), start);
    let mut violations = Vec::new();
    let check = |k: &DiscreteKernel, iter: usize, violations: &mut Vec<String>| {
        let mean = k.expectation();
        if (mean - cfg.alpha).abs() > MEAN_TOLERANCE {
            violations.push(format!("restart {restart} iterate {iter}: mean {mean} != alpha {}", cfg.alpha));
        }
        if k.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            violations.push(format!("restart {restart} iterate {iter}: value outside [0, 1]"));
        }
    };
    check(&kernel, 0, &mut violations);

    let (mut t, mut grad) = value_and_metric_gradient(&kernel);
    let initial_t = t;
    let mut iterations = 0;
    let mut converged = false;
    let mut step = match cfg.step_rule {
        StepRule::Fixed { step } => step,
        StepRule::Backtracking { initial_step, .. } => initial_step,
    };
    while iterations < cfg.max_iters {
        let trial = |s: f64| -> DiscreteKernel {
            let raw: Vec<f64> = kernel.values().iter().zip(&grad).map(|(v, g)| v - s * g).collect();
            DiscreteKernel::from_parts(p.clone(), q.clone(), r.clone(), project_with_weights(&raw, &w, cfg.alpha))
        };
        let accepted = match cfg.step_rule {
            StepRule::Fixed { step } => {
                let cand = trial(step);
                let ct = cand.t_value();
                (ct < t).then_some((cand, ct))
            }
            StepRule::Backtracking { initial_step, shrink, armijo, min_step } => {
                let mut s = (2.0 * step).min(initial_step);
                let mut found = None;
                while s >= min_step {
                    let cand = trial(s);
                    let ct = cand.t_value();
                    // Directional term Σ w g (cand - v) ≤ 0 for a projected step.
                    let slope: f64 = cand
                        .values()
                        .iter()
                        .zip(kernel.values())
                        .zip(&grad)
                        .zip(&w)
                        .map(|(((c, v), g), w)| w * g * (c - v))
                        .sum();
                    if ct <= t + armijo * slope && ct <= t {
                        found = Some((cand, ct));
                        break;
                    }
                    s *= shrink;
                }
                step = s;
                found
            }
        };
        let Some((cand, ct)) = accepted else {
            converged = true;
            break;
        };
        iterations += 1;
        if ct > t {
            violations.push(format!("restart {restart} iterate {iterations}: T increased {t} -> {ct}"));
        }
        check(&cand, iterations, &mut violations);
        let decrease = t - ct;
        kernel = cand;
        (t, grad) = value_and_metric_gradient(&kernel);
        if decrease < cfg.tolerance {
            converged = true;
            break;
        }
    }
    RestartResult {
        trace: RestartTrace { restart, initial_t, final_t: t, iterations, converged },
        kernel,
        violations,
    }
}

/// Runs every restart and keeps the lowest `T` (ties to the lower restart).
pub fn minimize_t(cfg: &OptimizeConfig) -> Result<OptimizeReport> {
    minimize_t_with(cfg, Execution::default())
}

pub fn minimize_t_with(cfg: &OptimizeConfig, exec: Execution) -> Result<OptimizeReport> {
    cfg.validate()?;
    let results = par::map_range(cfg.restarts, exec, |i| run_restart(cfg, i));
    let mut best = 0;
    for (i, res) in results.iter().enumerate() {
        if res.trace.final_t < results[best].trace.final_t {
            best = i;
        }
    }
    let env = envelope(cfg.alpha)?;
    let best_kernel = results[best].kernel.clone();
    let best_t = best_kernel.t_value();
    let mut violations: Vec<String> = results.iter().flat_map(|r| r.violations.iter().cloned()).collect();
    let lower = env.lower.max(3.0 * cfg.alpha - 2.0);
    if best_t < lower * (1.0 - 1e-12) {
        violations.push(format!("best T {best_t} is below the lower bound {lower}"));
    }
    let mut warnings = Vec::new();
    if best_t > env.upper {
        warnings.push(format!(
            "best T {best_t} exceeds the upper envelope {}; the search may have missed better kernels on this grid",
            env.upper
        ));
    }
    Ok(OptimizeReport {
        schema_version: REPORT_SCHEMA_VERSION,
        alpha: cfg.alpha,
        best_kernel: best_kernel.to_file(),
        best_t,
        best_restart: best,
        trajectory: results.into_iter().map(|r| r.trace).collect(),
        envelope: env,
        violations,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub best_t: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Runs [`minimize_t`] at each `alpha`, other settings taken from `base`.
pub fn sweep(base: &OptimizeConfig, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let cfg = OptimizeConfig { alpha, ..base.clone() };
            let rep = minimize_t(&cfg)?;
            Ok(SweepRow { alpha, best_t: rep.best_t, lower: rep.envelope.lower, upper: rep.envelope.upper })
        })
        .collect()
}

/// CSV with header `alpha,best_t,lower,upper`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("alpha,best_t,lower,upper\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.alpha, r.best_t, r.lower, r.upper));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gradient_of_constant_kernel() {
        let k = DiscreteKernel::new(vec![0.25, 0.75], vec![1.0], vec![0.5, 0.5], vec![0.4; 4]).unwrap();
        for (g, w) in t_gradient(&k).iter().zip(k.weights()) {
            assert_abs_diff_eq!(*g, w * 3.0 * 0.16, epsilon = 1e-15);
        }
        let zero = DiscreteKernel::constant([2, 3, 2], 0.0).unwrap();
        assert!(t_gradient(&zero).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn projection_cases() {
        let u = vec![0.5, 0.5];
        let k = project_feasible(&[0.0; 8], &u, &u, &u, 0.5).unwrap();
        assert!(k.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let feasible = DiscreteKernel::diagonal_gap();
        let same = project_feasible(feasible.values(), &u, &u, &u, 0.75).unwrap();
        assert_eq!(same, feasible);
        assert!(matches!(project_feasible(&[0.0; 8], &u, &u, &u, 1.5), Err(Error::Domain(_))));
        assert!(matches!(project_feasible(&[0.0; 7], &u, &u, &u, 0.5), Err(Error::Validation(_))));
    }

    #[test]
    fn envelope_values() {
        let e = envelope(0.75).unwrap();
        assert!(e.upper >= 13.0 / 32.0);
        assert_abs_diff_eq!(e.upper, 27.0 / 26.0 * 13.0 / 32.0, epsilon = 1e-12);
        assert_eq!(envelope(0.0).unwrap(), Envelope { lower: 0.0, upper: 0.0 });
        let one = envelope(1.0).unwrap();
        assert_eq!(one.lower, 1.0);
        assert_abs_diff_eq!(one.upper, 27.0 / 26.0, epsilon = 1e-15);
        assert_eq!(one.upper_display(), 1.0);
        assert!(envelope(1.1).is_err());
        assert_abs_diff_eq!(exponent_gap(), 0.131, epsilon = 1e-3);
    }

    #[test]
    fn alpha_one_forces_the_unit_kernel() {
        let mut cfg = OptimizeConfig::new(1.0, [2, 2, 2]);
        cfg.restarts = 3;
        let rep = minimize_t(&cfg).unwrap();
        assert_eq!(rep.best_t, 1.0);
        assert!(rep.violations.is_empty());
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizeConfig::new(0.0, [2, 2, 2]);
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.5;
        cfg.shape = [0, 1, 1];
        assert!(cfg.validate().is_err());
        cfg.shape = [1, 1, 1];
        cfg.restarts = 0;
        assert!(cfg.validate().is_err());
        cfg.restarts = 1;
        cfg.step_rule = StepRule::Fixed { step: -1.0 };
        assert!(cfg.validate().is_err());
    }
}
