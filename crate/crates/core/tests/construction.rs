mod common;

use corners_core::construction::{
    corner_probability_check, corner_probability_check_with, density_csv, run_experiment, run_experiment_with, sample_set,
    sample_set_with, slack,
};
use corners_core::groups::{census, FiniteAbelianGroup};
use corners_core::rng::{substream, Purpose};
use corners_core::{DiscreteKernel, Execution};

#[test]
fn sampling_is_deterministic_across_execution_modes() {
    let g = FiniteAbelianGroup::cyclic(96).unwrap();
    let k = DiscreteKernel::diagonal_gap();
    let seq = sample_set_with(&k, &g, 42, Execution::Sequential).unwrap();
    let par = sample_set_with(&k, &g, 42, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq, sample_set(&k, &g, 42).unwrap());
    assert_ne!(seq, sample_set(&k, &g, 43).unwrap());
    let a = corner_probability_check_with(&k, &g, 5, 70_000, Execution::Sequential).unwrap();
    let b = corner_probability_check_with(&k, &g, 5, 70_000, Execution::Parallel).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn set_density_is_unbiased() {
    let mut rng = substream(9, Purpose::TestData, 7);
    let k = common::random_kernel(&mut rng, 3);
    let g = FiniteAbelianGroup::vector(2, 6).unwrap();
    let samples: Vec<f64> = (0..60).map(|seed| sample_set(&k, &g, seed).unwrap().density()).collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - k.expectation()).abs() <= 5.0 * se.max(1e-4), "mean {mean}, E {}, se {se}", k.expectation());
}

#[test]
fn corner_probability_estimates_t() {
    let mut rng = substream(10, Purpose::TestData, 8);
    let k = common::random_kernel(&mut rng, 3);
    let g = FiniteAbelianGroup::cyclic(1000).unwrap();
    let trials = 200_000;
    let p = corner_probability_check(&k, &g, 1, trials).unwrap();
    let t = k.t_value();
    let sigma = (t * (1.0 - t) / trials as f64).sqrt();
    assert!((p - t).abs() <= 5.0 * sigma.max(1e-6), "estimate {p}, T {t}");
}

#[test]
fn experiment_report_matches_census() {
    let g = FiniteAbelianGroup::cyclic(64).unwrap();
    let k = DiscreteKernel::diagonal_gap();
    let exp = run_experiment_with(&k, &g, 3, Execution::default()).unwrap();
    assert_eq!(exp.census, census(&exp.set));
    let r = &exp.report;
    assert_eq!(r.set_size, exp.set.len());
    assert_eq!(r.kernel_hash, k.content_hash());
    let max = (1..64).map(|d| exp.census.density(d)).fold(0.0, f64::max);
    assert_eq!(r.max_nonzero_census_density, max);
    assert_eq!(r.slack, slack(64));
    assert_eq!(r.histogram.iter().sum::<u64>(), 63);
    assert_eq!(density_csv(&exp.census).lines().count(), 65);
    let again = run_experiment(&k, &g, 3).unwrap();
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(r).unwrap());
}
