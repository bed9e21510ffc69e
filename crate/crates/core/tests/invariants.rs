use proptest::prelude::*;

use mpo_tomography::basis::{pack, unpack};
use mpo_tomography::io::{mpo_to_json, state_from_json};
use mpo_tomography::measurement::{add_gaussian_noise, all_settings, exact_block_data, setting_probabilities};
use mpo_tomography::metrics::{hs_distance_dense, hs_distance_mpo};
use mpo_tomography::reconstruction::{
    filter_factors, reconstruct_mpo, ReconstructionConfig, RegularizerSpec, SolverMode,
};
use mpo_tomography::states::{random_mpo_via_ancilla, AnyState, DEFAULT_COUPLING};
use mpo_tomography::sweep::{run_sweep, StateFamily, SweepConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pack_unpack_round_trip(m in 1usize..8, d in 2usize..4, seed in any::<u64>()) {
        let index = (seed as usize) % (d * d).pow(m as u32);
        let alphas = unpack(index, m, d);
        prop_assert_eq!(alphas.len(), m);
        prop_assert!(alphas.iter().all(|&a| a < d * d));
        prop_assert_eq!(pack(&alphas, d), index);
    }

    #[test]
    fn filter_factors_lie_in_unit_interval(
        s in proptest::collection::vec(0.0f64..10.0, 1..20),
        sigma2 in 0.0f64..5.0,
        tau in 0.0f64..0.99,
    ) {
        for reg in [RegularizerSpec::Tikhonov { sigma2 }, RegularizerSpec::TruncatedPinv { tau }] {
            let f = filter_factors(&s, &reg).unwrap();
            prop_assert_eq!(f.len(), s.len());
            prop_assert!(f.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn tikhonov_filter_decreases_with_sigma(s in 0.01f64..10.0, a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let f_lo = filter_factors(&[s], &RegularizerSpec::Tikhonov { sigma2: lo }).unwrap()[0];
        let f_hi = filter_factors(&[s], &RegularizerSpec::Tikhonov { sigma2: hi }).unwrap()[0];
        prop_assert!(f_hi <= f_lo);
    }

    #[test]
    fn exact_data_is_a_fixed_point(seed in 0u64..1000, n in 5usize..8, window in 3usize..6) {
        prop_assume!(window <= n);
        let mpo = random_mpo_via_ancilla(n, DEFAULT_COUPLING, seed).unwrap();
        let data = exact_block_data(&mpo, window).unwrap();
        let est = reconstruct_mpo(&data, &ReconstructionConfig::for_window(window).unwrap()).unwrap();
        prop_assert!(hs_distance_mpo(&mpo, &est).unwrap() <= 1e-8);
    }

    #[test]
    fn mpo_and_dense_block_data_agree(seed in 0u64..1000, n in 3usize..7, window in 1usize..5) {
        prop_assume!(window <= n);
        let mpo = random_mpo_via_ancilla(n, DEFAULT_COUPLING, seed).unwrap();
        let a = exact_block_data(&mpo, window).unwrap();
        let b = exact_block_data(&mpo.to_dense().unwrap(), window).unwrap();
        for (x, y) in a.blocks().iter().zip(b.blocks()) {
            for (u, v) in x.iter().zip(y) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_is_nonnegative_and_consistent(s1 in 0u64..1000, s2 in 0u64..1000, n in 2usize..6) {
        let a = random_mpo_via_ancilla(n, DEFAULT_COUPLING, s1).unwrap();
        let b = random_mpo_via_ancilla(n, DEFAULT_COUPLING, s2).unwrap();
        let ab = hs_distance_mpo(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        let ba = hs_distance_mpo(&b, &a).unwrap();
        let (na, nb) = (a.inner(&a).unwrap(), b.inner(&b).unwrap());
        prop_assert!((ab * na - ba * nb).abs() <= 1e-10 * (ab * na).max(1e-300).max(1e-12));
        prop_assert!(hs_distance_mpo(&a, &a).unwrap() <= 1e-12);
        let dense = hs_distance_dense(&a.to_dense().unwrap(), &b.to_dense().unwrap()).unwrap();
        prop_assert!((ab - dense).abs() <= 1e-10 * (1.0 + dense));
    }

    #[test]
    fn setting_probabilities_are_distributions(seed in 0u64..1000, window in 1usize..4) {
        let mpo = random_mpo_via_ancilla(window + 2, DEFAULT_COUPLING, seed).unwrap();
        let data = exact_block_data(&mpo, window).unwrap();
        for axes in all_settings(window) {
            let p = setting_probabilities(data.block(1), &axes);
            prop_assert_eq!(p.len(), 1 << window);
            prop_assert!(p.iter().all(|&x| x >= -1e-12));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mpo_json_round_trips(seed in 0u64..1000, n in 1usize..6) {
        let mpo = random_mpo_via_ancilla(n, DEFAULT_COUPLING, seed).unwrap();
        let back = state_from_json(&mpo_to_json(&mpo).unwrap()).unwrap();
        prop_assert_eq!(back, AnyState::Mpo(mpo));
    }

    #[test]
    fn noise_is_reproducible(seed in any::<u64>(), sigma in 0.0f64..0.1) {
        let mpo = random_mpo_via_ancilla(5, DEFAULT_COUPLING, 1).unwrap();
        let data = exact_block_data(&mpo, 3).unwrap();
        let a = add_gaussian_noise(&data, sigma, seed).unwrap();
        let b = add_gaussian_noise(&data, sigma, seed).unwrap();
        prop_assert_eq!(a.blocks(), b.blocks());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn sweep_rows_do_not_depend_on_threads(master_seed in any::<u64>()) {
        let cfg = |threads| SweepConfig {
            state: StateFamily::Ancilla { coupling: DEFAULT_COUPLING },
            n_sites: vec![5, 6],
            sigmas: vec![0.0, 1e-2],
            windows: vec![3],
            trials: 2,
            solver: SolverMode::default(),
            master_seed,
            threads: Some(threads),
            record_timing: false,
            histogram_bins: 4,
            output: None,
        };
        let a = run_sweep(&cfg(1)).unwrap();
        let b = run_sweep(&cfg(3)).unwrap();
        prop_assert_eq!(a.rows.len(), 8);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert_eq!(x.seed, y.seed);
            prop_assert_eq!(x.d.map(f64::to_bits), y.d.map(f64::to_bits));
            prop_assert!(x.d.unwrap() >= 0.0);
        }
    }
}
