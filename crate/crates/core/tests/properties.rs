//! Property-based invariants over randomized inputs.

use std::sync::Arc;

use proptest::prelude::*;

use czkit_core::accretive::{build_system, dual_norm_random_search, dual_norm_ratio, Side, SystemConfig};
use czkit_core::dyadic::{build_tree, check_tree_invariants};
use czkit_core::haar;
use czkit_core::operator::{assemble, KernelSpec};
use czkit_core::space;
use czkit_core::stopping::{run_stopping, StoppingConfig};
use czkit_core::C64;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_spaces_satisfy_metric_axioms(n in 2usize..40, h in 0.01f64..10.0) {
        let s = space::uniform_line(n, h).unwrap();
        prop_assert!(s.check_metric_axioms().is_ok());
        let g = space::uniform_grid_2d(1 + n % 7, 1 + n % 5, h).unwrap();
        prop_assert!(g.check_metric_axioms().is_ok());
    }

    #[test]
    fn tree_invariants_hold_on_random_clouds(seed in 0u64..5000, n in 2usize..48) {
        use rand::Rng;
        let mut rng = czkit_core::deterministic_rng(seed);
        let coords: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let weights: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
        let s = match space::PointSpace::from_points(coords, weights) {
            Ok(s) => s,
            Err(_) => return Ok(()), // duplicate points: skip
        };
        if s.realized_distances().is_empty() {
            return Ok(());
        }
        let tree = build_tree(Arc::new(s), 0.5, 24).unwrap();
        prop_assert!(check_tree_invariants(&tree).is_ok());
        prop_assert!(tree.fully_resolved());
    }

    #[test]
    fn classical_parseval_holds(seed in 0u64..5000) {
        use rand::Rng;
        let mut rng = czkit_core::deterministic_rng(seed);
        let s = Arc::new(space::uniform_line(32, 1.0).unwrap());
        let tree = build_tree(s, 0.5, 32).unwrap();
        let f: Vec<C64> = (0..32)
            .map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let (recon, parseval) = haar::classical_decomposition_residuals(&tree, &f);
        prop_assert!(recon < 1e-11);
        prop_assert!(parseval < 1e-10);
    }

    #[test]
    fn projection_idempotent_for_random_functions(seed in 0u64..5000, amplitude in 0.3f64..1.4) {
        use rand::Rng;
        let s = Arc::new(space::uniform_line(32, 1.0).unwrap());
        let tree = build_tree(Arc::clone(&s), 0.5, 32).unwrap();
        let op = assemble(Arc::clone(&s), &KernelSpec::HardySize).unwrap();
        let sys = build_system(&tree, &SystemConfig::oscillatory(amplitude, 2.0, 2.0, seed)).unwrap();
        let b = sys.full(&tree, Side::One, 0);
        let tb = op.apply(&b);
        let decomp = run_stopping(&tree, 0, Side::One, &b, &tb, &sys, &StoppingConfig::new(0.6, 1e6)).unwrap();
        let mut rng = czkit_core::deterministic_rng(seed ^ 0xabcd);
        let f: Vec<C64> = (0..32).map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0)).collect();
        let pf = decomp.project(&tree, &f);
        let ppf = decomp.project(&tree, &pf);
        for i in 0..32 {
            prop_assert!((ppf[i] - pf[i]).norm() < 1e-12);
        }
        // decomposition identity for the same f
        let report = czkit_core::stopping::check_decomposition(&decomp, &tree, &f);
        prop_assert!(report.reconstruction_residual < 1e-10);
    }

    #[test]
    fn dual_norm_dominates_every_random_sample(
        seed in 0u64..5000,
        k in 1usize..6,
        nu in 1.2f64..4.0,
    ) {
        use rand::Rng;
        let mut rng = czkit_core::deterministic_rng(seed);
        let v: Vec<C64> = (0..k)
            .map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let masses: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>() * 3.0).collect();
        let exact = dual_norm_ratio(&v, &masses, 2.0, nu);
        let search = dual_norm_random_search(&v, &masses, 2.0, nu, 2000, seed ^ 0x5555);
        prop_assert!(search <= exact * (1.0 + 1e-10));
    }

    #[test]
    fn compression_error_monotone(seed in 0u64..1000) {
        use rand::Rng;
        let s = Arc::new(space::uniform_line(32, 1.0).unwrap());
        let tree = build_tree(Arc::clone(&s), 0.5, 32).unwrap();
        let op = assemble(Arc::clone(&s), &KernelSpec::Cauchy1d).unwrap();
        let sys = build_system(&tree, &SystemConfig::constant_one(2.0, 2.0)).unwrap();
        let b1 = sys.full(&tree, Side::One, 0);
        let b2 = sys.full(&tree, Side::Two, 0);
        let tb1 = op.apply(&b1);
        let tsb2 = op.apply_adjoint(&b2);
        let cfg = StoppingConfig::new(0.125, 1e9);
        let d1 = run_stopping(&tree, 0, Side::One, &b1, &tb1, &sys, &cfg).unwrap();
        let d2 = run_stopping(&tree, 0, Side::Two, &b2, &tsb2, &sys, &cfg).unwrap();
        let run = czkit_core::bcr::BcrRun::new(&tree, &op, &d1, &d2).unwrap();
        let mut rng = czkit_core::deterministic_rng(seed);
        let f: Vec<C64> = (0..32).map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0)).collect();
        let g: Vec<C64> = (0..32).map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0)).collect();
        let dec = run.terms(&f, &g);
        let taus: Vec<f64> = (0..8).map(|i| 1e-5 * 10f64.powi(i)).collect();
        let sweep = dec.compression_sweep(&taus);
        for w in sweep.windows(2) {
            // larger tau keeps fewer pairs: the certified bound can only
            // grow (the achieved error can dip when dropped terms cancel)
            prop_assert!(w[1].relative_error_bound >= w[0].relative_error_bound - 1e-13);
            prop_assert!(w[1].kept_fraction <= w[0].kept_fraction + 1e-15);
            prop_assert!(w[1].relative_error <= w[1].relative_error_bound + 1e-12);
        }
    }
}
