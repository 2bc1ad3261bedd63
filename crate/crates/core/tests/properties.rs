use proptest::prelude::*;
use triadcal_core::analysis::{decompose_sds, group_compare, pearson, GroupTest, ScoreSeries};
use triadcal_core::assembly::{parse_plan, sample_subsets, ItemBank};
use triadcal_core::simulation::{simulate_responses, SimulationConfig};
use triadcal_core::{estimate_ability, irf, AbilityMethod, FittedModel, ItemParameters, ModelFamily, QuadratureSpec};

fn series(label: &str, values: &[f64]) -> ScoreSeries {
    let ids = (0..values.len()).map(|k| format!("s{k:03}")).collect();
    ScoreSeries::new(label, ids, values.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn irf_increases_with_ability(a in 0.2f64..4.0, b in -4.0f64..4.0, c in 0.0f64..0.4, t in -5.0f64..5.0, dt in 0.01f64..2.0) {
        let item = ItemParameters::new("x", a, b, c);
        let lo = irf(t, &item);
        let hi = irf(t + dt, &item);
        prop_assert!(hi > lo);
        prop_assert!((c..=1.0).contains(&lo));
    }

    #[test]
    fn irf_depends_only_on_distance(b in -4.0f64..4.0, t in -4.0f64..4.0, shift in -2.0f64..2.0) {
        let p = irf(t, &ItemParameters::rasch("x", b));
        let q = irf(t + shift, &ItemParameters::rasch("x", b + shift));
        prop_assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn eap_rises_with_each_extra_correct(betas in prop::collection::vec(-3.0f64..3.0, 3..12), flip in any::<prop::sample::Index>()) {
        let items: Vec<_> = betas.iter().enumerate().map(|(k, b)| ItemParameters::rasch(format!("i{k}"), *b)).collect();
        let model = FittedModel::from_items(ModelFamily::Rasch1pl, items, QuadratureSpec::default()).unwrap();
        let mut pattern: Vec<(String, bool)> = (0..betas.len()).map(|k| (format!("i{k}"), k % 2 == 0)).collect();
        let wrong: Vec<usize> = (0..pattern.len()).filter(|k| !pattern[*k].1).collect();
        prop_assume!(!wrong.is_empty());
        let before = estimate_ability("s", &pattern, &model, AbilityMethod::Eap).unwrap();
        pattern[wrong[flip.index(wrong.len())]].1 = true;
        let after = estimate_ability("s", &pattern, &model, AbilityMethod::Eap).unwrap();
        prop_assert!(after.theta > before.theta);
    }

    #[test]
    fn pearson_is_symmetric_and_affine_invariant(
        x in prop::collection::vec(-10.0f64..10.0, 4..40),
        noise in prop::collection::vec(-3.0f64..3.0, 40),
        scale in 0.1f64..10.0,
        offset in -5.0f64..5.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, n)| 0.5 * a + n).collect();
        let Ok(r) = pearson(&x, &y) else { return Ok(()) };
        prop_assert!((r - pearson(&y, &x).unwrap()).abs() < 1e-12);
        let moved: Vec<f64> = x.iter().map(|v| scale * v + offset).collect();
        prop_assert!((r - pearson(&moved, &y).unwrap()).abs() < 1e-9);
        prop_assert!(r.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn rank_sum_ignores_monotone_transforms(a in prop::collection::vec(-5.0f64..5.0, 3..15), b in prop::collection::vec(-5.0f64..5.0, 3..15)) {
        let Ok(plain) = group_compare(&series("a", &a), &series("b", &b), GroupTest::WilcoxonRankSum) else { return Ok(()) };
        let map = |v: &[f64]| v.iter().map(|x| x.exp() + 3.0 * x).collect::<Vec<_>>();
        let moved = group_compare(&series("a", &map(&a)), &series("b", &map(&b)), GroupTest::WilcoxonRankSum).unwrap();
        prop_assert_eq!(plain.statistic, moved.statistic);
        prop_assert!((plain.p - moved.p).abs() < 1e-12);
    }

    #[test]
    fn variance_components_add_in_quadrature(t in 0.0f64..2.0, extra in 0.0f64..2.0) {
        let c = t + extra;
        let d = decompose_sds(c, t).unwrap();
        prop_assert!((d.sd_session.powi(2) + t * t - c * c).abs() < 1e-9);
    }

    #[test]
    fn seeded_runs_repeat(seed in any::<u64>()) {
        let config = SimulationConfig::rasch(20, 12, seed);
        prop_assert_eq!(simulate_responses(&config).unwrap().data, simulate_responses(&config).unwrap().data);
        let betas: Vec<f64> = (0..40).map(|k| k as f64 / 10.0 - 2.0).collect();
        let bank = ItemBank::from_betas("p", &betas).unwrap();
        let specs = parse_plan("2xEASY:5,1xDIFFICULT:8", seed).unwrap();
        prop_assert_eq!(sample_subsets(&bank, &specs).unwrap(), sample_subsets(&bank, &specs).unwrap());
    }
}
