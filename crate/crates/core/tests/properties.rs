//! Randomized property tests for structural invariants.

use nalgebra::DMatrix;
use oed_core::linalg;
use oed_core::*;
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn seeded_pool(seed: u64, m: usize, d: usize) -> PoolMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PoolMatrix::new(DMatrix::from_fn(m, d, |_, _| rng.sample(StandardNormal))).unwrap()
}

fn max_min_dist_sq(pool: &PoolMatrix, s: &[usize]) -> f64 {
    let v = pool.matrix();
    (0..pool.num_points())
        .map(|i| {
            s.iter()
                .map(|&j| (v.row(i) - v.row(j)).norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rbf_entries_in_unit_interval(seed in 0u64..1 << 48, gamma in 0.01f64..5.0) {
        let pool = seeded_pool(seed, 12, 4);
        let gram = make_gram(&pool, &KernelSpec::Rbf { gamma }).unwrap();
        for i in 0..gram.size() {
            for j in 0..gram.size() {
                let v = gram.matrix()[(i, j)];
                prop_assert!(v > 0.0 && v <= 1.0 + 1e-15, "K[{i},{j}] = {v}");
            }
            prop_assert!((gram.matrix()[(i, i)] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn grams_are_psd(seed in 0u64..1 << 48, kernel_pick in 0usize..4) {
        let pool = seeded_pool(seed, 10, 5);
        let spec = match kernel_pick {
            0 => KernelSpec::Linear,
            1 => KernelSpec::Rbf { gamma: 0.5 },
            2 => KernelSpec::Polynomial { degree: 3, coef0: 1.0 },
            _ => KernelSpec::NtkFc { depth: 2 },
        };
        let gram = make_gram(&pool, &spec).unwrap();
        prop_assert!(gram.check_psd().is_ok(), "{spec:?} produced a non-PSD Gram");
    }

    // the per-pool-point averaged coreset bound holds unconditionally:
    // ψ̄_{0,0}(S)/m ≤ max_i min_{j∈S} ‖x_i − x_j‖²
    #[test]
    fn averaged_bias_bounded_by_covering_radius(
        seed in 0u64..1 << 48,
        m in 6usize..20,
        d in 2usize..6,
        n in 1usize..5,
    ) {
        let n = n.min(m);
        let pool = seeded_pool(seed, m, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
        let s = rand::seq::index::sample(&mut rng, m, n).into_vec();
        let (bias, _) = psi_bar_parts(&pool, &s, 0.0).unwrap();
        let bound = max_min_dist_sq(&pool, &s);
        prop_assert!(
            bias / m as f64 <= bound + 1e-12 * bound.max(1.0),
            "ψ̄/m = {} > {bound}",
            bias / m as f64
        );
    }

    // growing a design never increases the bias factor
    #[test]
    fn bias_is_monotone_in_the_design(seed in 0u64..1 << 48, m in 5usize..14, d in 2usize..8) {
        let pool = seeded_pool(seed, m, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdeadbeef);
        let order = rand::seq::index::sample(&mut rng, m, m.min(6)).into_vec();
        let mut prev = f64::INFINITY;
        for len in 1..=order.len() {
            let (bias, _) = psi_bar_parts(&pool, &order[..len], 0.0).unwrap();
            prop_assert!(bias <= prev + 1e-9 * prev.max(1.0), "bias rose: {prev} -> {bias}");
            prev = bias;
        }
    }

    // the checksum is sensitive to every entry and stable under cloning
    #[test]
    fn gram_checksum_detects_perturbations(seed in 0u64..1 << 48) {
        let pool = seeded_pool(seed, 6, 3);
        let gram = make_gram(&pool, &KernelSpec::Linear).unwrap();
        let base = gram.checksum();
        prop_assert_eq!(
            &base,
            &make_gram(&pool, &KernelSpec::Linear).unwrap().checksum()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let i = rng.random_range(0..6);
        let j = rng.random_range(0..6);
        let mut bumped = gram.matrix().clone();
        bumped[(i, j)] += 1e-9;
        bumped[(j, i)] = bumped[(i, j)];
        let other = GramMatrix::new(bumped).unwrap();
        prop_assert_ne!(base, other.checksum());
    }

    // pseudoinverse consistency: M M⁺ M = M on random Gram-like matrices
    #[test]
    fn sym_pinv_satisfies_penrose(seed in 0u64..1 << 48, m in 2usize..8, d in 1usize..6) {
        let pool = seeded_pool(seed, m, d);
        let g = pool.matrix() * pool.matrix().transpose();
        let (pinv, rank) = linalg::sym_pinv(&g);
        prop_assert!(rank <= d.min(m));
        let resid = &g * &pinv * &g - &g;
        let scale = g.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
        prop_assert!(resid.iter().all(|v| v.abs() <= 1e-9 * scale));
    }
}
