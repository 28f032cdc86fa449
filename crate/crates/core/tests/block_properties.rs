use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlkit::kfactory::{
    assemble_k, block_report, eigen_pair, gauge_transform, moduli_dim, sample_block, verify_k, BlockKind, BlockSpec,
    DClass, KBlockPlan, SamplingMode,
};
use tlkit::model::{build_tl_data, ModelSpec};
use tlkit::numerics::{CMatrix, Tolerance, C64};

fn tol() -> Tolerance {
    Tolerance::default()
}

fn block_kind() -> impl Strategy<Value = BlockKind> {
    prop_oneof![
        (1usize..4).prop_flat_map(|m| (2 * m..2 * m + 3).prop_map(move |t| BlockKind::Nilpotent { t, m })),
        (1usize..4, -2.0f64..2.0, 0.3f64..3.0).prop_map(|(h, phase, mag)| BlockKind::Involution {
            s: 2 * h,
            delta_prime: C64::from_polar(mag, phase),
        }),
        (3usize..8)
            .prop_flat_map(|s| (Just(s), 1..s))
            .prop_filter("split must not be even", |(s, m)| *s != 2 * *m)
            .prop_map(|(s, m_prime)| BlockKind::TwoEigen { s, m_prime }),
    ]
}

fn mode() -> impl Strategy<Value = SamplingMode> {
    prop_oneof![Just(SamplingMode::Canonical), Just(SamplingMode::Generic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_blocks_satisfy_their_quadratic(kind in block_kind(), mode in mode(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = sample_block(&BlockSpec { kind, mode }, &mut rng, &tol()).unwrap();
        let rep = block_report(&sub, &tol()).unwrap();
        prop_assert!(rep.quadratic <= 1e-10, "{rep:?}");
        prop_assert!(rep.max_diagonal <= 1e-10, "{rep:?}");
        prop_assert!(rep.trace <= 1e-10, "{rep:?}");
        if let BlockKind::TwoEigen { m_prime, .. } = kind {
            prop_assert!(rep.minimal_polynomial.unwrap() <= 1e-10);
            prop_assert_eq!(rep.eigen_rank, Some(m_prime));
        }
        if let BlockKind::Nilpotent { m, .. } = kind {
            prop_assert_eq!(rep.rank, m);
        }
    }

    #[test]
    fn gauge_moves_factors_not_blocks(kind in block_kind(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = sample_block(&BlockSpec::generic(kind), &mut rng, &tol()).unwrap();
        let r = sub.a.as_ref().unwrap().cols();
        let u = CMatrix::random_gaussian(r, r, &mut rng);
        let v = CMatrix::random_gaussian(r, r, &mut rng);
        let moved = gauge_transform(&sub, &u, Some(&v), &tol()).unwrap();
        let drift = (&moved.block - &sub.block).max_abs() / (1.0 + sub.block.max_abs());
        prop_assert!(drift <= 1e-12, "drift {drift:e}");
    }

    #[test]
    fn two_eigen_moduli_symmetric(s in 2usize..12, m in 1usize..12) {
        prop_assume!(m < s && 2 * m != s);
        let a = moduli_dim(&BlockKind::TwoEigen { s, m_prime: m }).unwrap();
        let b = moduli_dim(&BlockKind::TwoEigen { s, m_prime: s - m }).unwrap();
        prop_assert_eq!(a, b);
        let (z1, z2) = eigen_pair(s, m).unwrap();
        prop_assert!((z1 + z2 + 1.0).abs() <= 1e-14);
        prop_assert!(z1 != z2);
    }

    #[test]
    fn layout_shuffle_keeps_solutions(n in prop_oneof![Just(3usize), Just(5), Just(6)], seed in any::<u64>(), d in (-2.0f64..2.0, 0.2f64..2.0)) {
        let data = build_tl_data(&ModelSpec::fourier(n), &tol()).unwrap();
        let d = C64::from_polar(d.1, d.0);
        let mut classes = vec![DClass::new(d, vec![BlockSpec::canonical(BlockKind::TwoEigen { s: 3, m_prime: 1 })])];
        if n > 3 {
            classes.push(DClass::new(C64::new(0.0, 0.0), vec![BlockSpec::canonical(BlockKind::Zero { size: n - 3 })]));
        }
        let plan = KBlockPlan { classes, shuffle_layout: true };
        let k = assemble_k(&plan, &data, seed, &tol()).unwrap();
        let v = verify_k(&data, &k).unwrap();
        prop_assert!(v.reflection <= 1e-8 && v.algebraic <= 1e-8 && v.components <= 1e-9, "{v:?}");
    }
}
