use cellfree::campaign::{run_drop, CampaignSpec};
use cellfree::channel::{estimate_quality, LargeScaleMatrix};
use cellfree::num::Matrix;
use cellfree::pilots::PilotAssignment;
use cellfree::power::{dl_sinr, maxmin, select_cqb, MaxMinOptions, Policy};
use cellfree::scenario::{FrameConfig, ScenarioConfig};
use proptest::prelude::*;

fn beta_strategy(l: usize, k: usize) -> impl Strategy<Value = LargeScaleMatrix<f64>> {
    prop::collection::vec(-3.0..0.0f64, l * k)
        .prop_map(move |e| LargeScaleMatrix::new(Matrix::from_vec(l, k, e.into_iter().map(|x| 10f64.powf(x)).collect()).unwrap()).unwrap())
}

fn small_drop_config(k: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("indoor").unwrap();
    cfg.num_aps = 36;
    cfg.num_ues = k;
    cfg.area_width_m = 60.0;
    cfg.area_height_m = 60.0;
    cfg.frame = FrameConfig::dl_only(200, k as u32);
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn maxmin_respects_per_ap_budget(beta in beta_strategy(4, 3), rho_d in 1.0..1e3f64) {
        let pilots = PilotAssignment::orthogonal(3, 3).unwrap();
        let gamma = estimate_quality(&beta, &pilots, &FrameConfig::dl_only(50, 3), 10.0);
        let alloc = maxmin(&gamma, &beta, &pilots, rho_d, &MaxMinOptions::default()).unwrap();
        prop_assert!(alloc.check(&gamma, 1e-9).is_ok());
        let floor = dl_sinr(&alloc.rho, &gamma, &beta, &pilots, rho_d).into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!((floor - alloc.sinr_target.unwrap()).abs() <= 1e-9 * floor);
    }
}

proptest! {
    #[test]
    fn sinr_is_permutation_equivariant(
        beta in beta_strategy(5, 4),
        rho in prop::collection::vec(0.0..2.0f64, 20),
        perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
        ap_perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let pilots = PilotAssignment::new(vec![0, 1, 0, 2], 3).unwrap();
        let frame = FrameConfig::dl_only(50, 3);
        let gamma = estimate_quality(&beta, &pilots, &frame, 5.0);
        let rho = Matrix::from_vec(5, 4, rho).unwrap();
        let base = dl_sinr(&rho, &gamma, &beta, &pilots, 50.0);

        // UE k' = perm[k] in the permuted system
        let pb = LargeScaleMatrix::new(Matrix::from_fn(5, 4, |l, k| beta.get(ap_perm[l], perm[k]))).unwrap();
        let pp = PilotAssignment::new(perm.iter().map(|&k| pilots.pilot_of[k]).collect(), 3).unwrap();
        let pg = estimate_quality(&pb, &pp, &frame, 5.0);
        let pr = Matrix::from_fn(5, 4, |l, k| rho[(ap_perm[l], perm[k])]);
        let permuted = dl_sinr(&pr, &pg, &pb, &pp, 50.0);
        for k in 0..4 {
            prop_assert!((permuted[k] - base[perm[k]]).abs() <= 1e-12 * base[perm[k]].max(1e-300));
        }
    }

    #[test]
    fn cqb_subsets_grow_with_alpha(beta in beta_strategy(9, 3), a in 1.0..100.0f64, b in 1.0..100.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = select_cqb(&beta, lo);
        let large = select_cqb(&beta, hi);
        for (s, t) in small.iter().zip(&large) {
            prop_assert!(!s.is_empty());
            prop_assert!(s.len() <= t.len());
            prop_assert!(s.iter().all(|l| t.contains(l)));
        }
        prop_assert!(select_cqb(&beta, 100.0).iter().all(|s| s.len() == 9));
    }
}

#[test]
fn full_alpha_selection_recovers_unrestricted_maxmin() {
    let mut spec = CampaignSpec::new("small", small_drop_config(4), vec![Policy::Mmf, Policy::MmfCqb, Policy::MmfRpb]);
    spec.alpha_pct = 100.0;
    for seed in [3, 4] {
        let out = run_drop(&spec, 0, seed).unwrap();
        let mmf = &out.outcomes[0].se.per_user_se;
        let mmf_min = mmf.iter().copied().fold(f64::INFINITY, f64::min);
        for o in &out.outcomes[1..] {
            if o.policy == Policy::MmfCqb {
                assert!((o.selection.as_ref().unwrap().avg_subset_fraction - 1.0).abs() < 1e-12);
            }
            let min = o.se.per_user_se.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((min - mmf_min).abs() <= 2e-3 * mmf_min, "{:?}: {min} vs {mmf_min}", o.policy);
        }
    }
}

#[test]
fn selection_never_beats_unrestricted_maxmin() {
    let spec = CampaignSpec::new("small", small_drop_config(6), vec![Policy::Mmf, Policy::MmfCqb, Policy::MmfRpb]);
    let out = run_drop(&spec, 0, 11).unwrap();
    let floor = |i: usize| out.outcomes[i].se.per_user_se.iter().copied().fold(f64::INFINITY, f64::min);
    for i in 1..3 {
        assert!(floor(i) <= floor(0) * (1.0 + 2e-3));
        assert!(out.outcomes[i].selection.as_ref().unwrap().avg_subset_fraction < 1.0);
    }
}
