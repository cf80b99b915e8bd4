mod common;

use corners_core::rng::{substream, Purpose};
use corners_core::DiscreteKernel;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;

/// `Σ p_x q_y r_z f_xy f_xz f_yz` with every conditional expectation
/// recomputed inside the triple loop.
fn t_oracle(k: &DiscreteKernel) -> f64 {
    let [nx, ny, nz] = k.shape();
    let (p, q, r) = (k.p(), k.q(), k.r());
    let mut t = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let fxy: f64 = (0..nz).map(|c| r[c] * k.value(x, y, c)).sum();
                let fxz: f64 = (0..ny).map(|b| q[b] * k.value(x, b, z)).sum();
                let fyz: f64 = (0..nx).map(|a| p[a] * k.value(a, y, z)).sum();
                t += p[x] * q[y] * r[z] * fxy * fxz * fyz;
            }
        }
    }
    t
}

fn e_oracle(k: &DiscreteKernel) -> f64 {
    let [nx, ny, nz] = k.shape();
    let mut e = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                e += k.p()[x] * k.q()[y] * k.r()[z] * k.value(x, y, z);
            }
        }
    }
    e
}

fn kernel_strategy(max_side: usize) -> impl Strategy<Value = DiscreteKernel> {
    any::<u64>().prop_map(move |seed| common::random_kernel(&mut substream(seed, Purpose::TestData, 1), max_side))
}

/// Dyadic kernels: marginal entries and values are multiples of `1/8`.
fn dyadic_strategy() -> impl Strategy<Value = DiscreteKernel> {
    let marginal = (1usize..=3).prop_flat_map(|m| {
        proptest::collection::vec(1u32..=4, m).prop_map(|w| {
            let total: u32 = w.iter().sum();
            let mut pow = 1;
            while pow < total {
                pow *= 2;
            }
            let mut w = w;
            w[0] += pow - total;
            w.iter().map(|&v| v as f64 / pow as f64).collect::<Vec<f64>>()
        })
    });
    (marginal.clone(), marginal.clone(), marginal).prop_flat_map(|(p, q, r)| {
        let cells = p.len() * q.len() * r.len();
        proptest::collection::vec(0u32..=8, cells).prop_map(move |v| {
            DiscreteKernel::new(p.clone(), q.clone(), r.clone(), v.iter().map(|&x| x as f64 / 8.0).collect()).unwrap()
        })
    })
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

proptest! {
    #[test]
    fn t_matches_triple_loop(k in kernel_strategy(4)) {
        let (fast, slow) = (k.t_value(), t_oracle(&k));
        prop_assert!((fast - slow).abs() <= 1e-13 * slow.max(1e-300) + 1e-15);
        prop_assert!((k.expectation() - e_oracle(&k)).abs() <= 1e-14);
    }

    #[test]
    fn t_stays_in_window(k in kernel_strategy(4)) {
        let (t, e) = (k.t_value(), k.expectation());
        prop_assert!(t <= 1.0 + 1e-12);
        prop_assert!(t >= e.powi(4) - 1e-12);
        prop_assert!(t >= 3.0 * e - 2.0 - 1e-12);
    }

    #[test]
    fn tensor_square_multiplies(k in kernel_strategy(3)) {
        let sq = k.tensor_product(&k);
        let t = k.t_value();
        prop_assert!((sq.t_value() - t * t).abs() <= 1e-12 * (t * t).max(1e-300) + 1e-15);
        prop_assert!((sq.expectation() - k.expectation().powi(2)).abs() <= 1e-14);
    }

    #[test]
    fn scaling_is_cubic(k in kernel_strategy(3), beta in 0.0f64..=1.0) {
        let s = k.scale(beta).unwrap();
        prop_assert!((s.t_value() - beta.powi(3) * k.t_value()).abs() <= 1e-14);
        prop_assert!((s.expectation() - beta * k.expectation()).abs() <= 1e-14);
    }

    #[test]
    fn exact_path_agrees_with_floats(k in dyadic_strategy()) {
        let exact = k.exact().expect("dyadic kernels are exact-eligible");
        prop_assert!((to_f64(&exact.t_value) - t_oracle(&k)).abs() <= 1e-14);
        prop_assert!((to_f64(&exact.expectation) - e_oracle(&k)).abs() <= 1e-15);
    }

    #[test]
    fn json_round_trip(k in kernel_strategy(3)) {
        let back = DiscreteKernel::from_json_str(&k.to_json_string()).unwrap();
        prop_assert_eq!(back.content_hash(), k.content_hash());
        prop_assert_eq!(back, k);
    }
}

#[test]
fn piecewise_round_trip_keeps_functional() {
    let k = DiscreteKernel::diagonal_gap();
    let back = DiscreteKernel::from_piecewise(&k.to_piecewise()).unwrap();
    assert_eq!(back.t_value(), k.t_value());
}

#[test]
fn tensor_square_of_gap_kernel_is_exact() {
    let sq = DiscreteKernel::diagonal_gap().tensor_power(2).unwrap();
    let exact = sq.exact().unwrap();
    assert_eq!(exact.t_value, BigRational::new(169.into(), 1024.into()));
    assert_eq!(exact.expectation, BigRational::new(9.into(), 16.into()));
}
