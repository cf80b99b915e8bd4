#![allow(dead_code)]

use corners_core::groups::{FiniteAbelianGroup, PlaneSet};
use corners_core::DiscreteKernel;
use rand::Rng;

/// A kernel with every dimension in `1..=max_side`, marginals bounded away
/// from zero and values uniform in `[lo, hi]`.
pub fn random_kernel_in<R: Rng>(rng: &mut R, max_side: usize, lo: f64, hi: f64) -> DiscreteKernel {
    let shape: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=max_side)).collect();
    random_kernel_shaped(rng, [shape[0], shape[1], shape[2]], lo, hi)
}

pub fn random_kernel<R: Rng>(rng: &mut R, max_side: usize) -> DiscreteKernel {
    random_kernel_in(rng, max_side, 0.0, 1.0)
}

pub fn random_kernel_shaped<R: Rng>(rng: &mut R, shape: [usize; 3], lo: f64, hi: f64) -> DiscreteKernel {
    let mut marginal = |m: usize| (0..m).map(|_| rng.gen_range(0.05..1.0)).collect::<Vec<f64>>();
    let (p, q, r) = (marginal(shape[0]), marginal(shape[1]), marginal(shape[2]));
    let values = (0..shape.iter().product::<usize>()).map(|_| rng.gen_range(lo..=hi)).collect();
    DiscreteKernel::new_renormalized(p, q, r, values).unwrap()
}

pub fn random_set<R: Rng>(rng: &mut R, group: FiniteAbelianGroup, density: f64) -> PlaneSet {
    PlaneSet::random(group, density, rng).unwrap()
}

/// `A` dense on `S × T` and sparse elsewhere, for random `S, T ⊆ G`.
pub fn product_plus_noise<R: Rng>(rng: &mut R, group: FiniteAbelianGroup, inside: f64, outside: f64) -> PlaneSet {
    let n = group.order();
    let s: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let t: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    PlaneSet::from_fn(group, |x, y| rng.gen_bool(if s[x] && t[y] { inside } else { outside })).unwrap()
}
