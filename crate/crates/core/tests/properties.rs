mod common;

use proptest::prelude::*;
use stereogap::critical_points::{hausdorff, linear_closed_forms, linear_gap_bound, normal_equation_residual};
use stereogap::flow::{classify_zone, LinearFlow, Zone};
use stereogap::harness::{median_overcost, minority_size, Overcost};
use stereogap::linalg::{distance, max_abs_diff, norm};
use stereogap::loss_models::{eval_split, make_toy, GroupedDataset, Part, SplitLoss};
use stereogap::spectral::{matrix_exp_scaled, rho_max, rho_min};
use stereogap::timing::{toy_catchup_extra_time, toy_stereotype_time, toy_tables};

use common::generic_quadratic;

fn points(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_loss_adds_up(seed in 0u64..10_000, t in prop::collection::vec(-3.0..3.0f64, 6)) {
        let q = generic_quadratic(seed, 0, 6, 0.05);
        let theta = &t[..q.dim()];
        let s = eval_split(&q, theta).unwrap();
        prop_assert!((s.total - s.majority - s.minority).abs() <= 1e-12 * (1.0 + s.total.abs()));
        prop_assert!((q.total_by_definition(theta) - s.total).abs() <= 1e-10 * (1.0 + s.total.abs()));
        let g = q.gradient(Part::Total, theta);
        let g1 = q.gradient(Part::Majority, theta);
        let g0 = q.gradient(Part::Minority, theta);
        for i in 0..g.len() {
            prop_assert!((g[i] - g1[i] - g0[i]).abs() <= 1e-10 * (1.0 + g[i].abs()));
        }
    }

    #[test]
    fn minimizers_solve_normal_equations(seed in 0u64..10_000) {
        let q = generic_quadratic(seed, 1, 5, 0.02);
        let f = linear_closed_forms(&q).unwrap();
        for (part, theta) in [(Part::Total, &f.theta_hat), (Part::Majority, &f.theta_hat1), (Part::Minority, &f.theta_hat0)] {
            prop_assert!(normal_equation_residual(&q, part, theta) <= 1e-8);
        }
    }

    #[test]
    fn gap_bound_never_violated(seed in 0u64..100_000, gamma in 0.0..0.2f64) {
        let q = generic_quadratic(seed, 2, 6, gamma);
        prop_assert!(linear_gap_bound(&q).unwrap().holds);
    }

    #[test]
    fn linear_flow_is_a_semigroup(seed in 0u64..10_000, s in 0.0..3.0f64, t in 0.0..3.0f64) {
        let q = generic_quadratic(seed, 3, 4, 0.01);
        let init = vec![1.5; q.dim()];
        let f = LinearFlow::new(&q, Part::Total, &init).unwrap();
        let mid = f.at(s);
        let g = LinearFlow::new(&q, Part::Total, &mid).unwrap();
        let a = f.at(s + t);
        let b = g.at(t);
        prop_assert!(distance(&a, &b) <= 1e-9 * (1.0 + norm(&a)));
        let d0 = distance(&init, &f.target);
        prop_assert!(distance(&a, &f.target) <= d0 * (1.0 + 1e-12));
    }

    #[test]
    fn matrix_exponential_multiplies(seed in 0u64..10_000, s in 0.0..2.0f64, t in 0.0..2.0f64) {
        let q = generic_quadratic(seed, 4, 4, 0.0);
        let h = q.hessian_matrix(Part::Total);
        let es = matrix_exp_scaled(&h, -s).unwrap().into_matrix();
        let et = matrix_exp_scaled(&h, -t).unwrap().into_matrix();
        let est = matrix_exp_scaled(&h, -(s + t)).unwrap().into_matrix();
        let prod = es.matmul(&et);
        prop_assert!(max_abs_diff(prod.as_slice(), est.as_slice()) <= 1e-10);
        let lo = rho_min(&h).unwrap();
        let hi = rho_max(&h).unwrap();
        prop_assert!(lo > 0.0 && lo <= hi);
    }

    #[test]
    fn hausdorff_is_a_metric_on_sets(a in points(2), b in points(2), c in points(2)) {
        let ab = hausdorff(&a, &b).unwrap();
        prop_assert_eq!(hausdorff(&a, &a), Some(0.0));
        prop_assert!((ab - hausdorff(&b, &a).unwrap()).abs() <= 1e-12);
        let ac = hausdorff(&a, &c).unwrap();
        let cb = hausdorff(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-9);
    }

    #[test]
    fn toy_stereotype_time_decreases_toward_the_stereotype(delta in 1e-4..0.5f64, m in 1.1..20.0f64) {
        let near = toy_stereotype_time(delta, 1.0, -m);
        let far = toy_stereotype_time(delta, 1.0, -2.0 * m);
        prop_assert!(near > 0.0 && far > near);
        let e1 = toy_catchup_extra_time(delta, 0.1);
        let e2 = toy_catchup_extra_time(delta, 0.01);
        prop_assert!((e2 - 2.0 * e1).abs() <= 1e-12 * e2);
    }

    #[test]
    fn simulated_gd_never_beats_the_bound(eta in 1e-3..0.5f64, delta in 1e-4..0.3f64) {
        let t = toy_tables(eta, -2.0, &[delta], &[0.1, 0.01]).unwrap();
        for row in &t.catchup {
            prop_assert!(row.k_simulated >= row.k_bound);
        }
        prop_assert!(t.catchup[0].k_simulated <= t.catchup[1].k_simulated);
    }

    #[test]
    fn toy_adverse_zone_is_between_minimizers(delta in 1e-3..0.5f64, c in 0.05..2.0f64, x in -3.0..3.0f64) {
        let toy = make_toy(delta, c).unwrap();
        let zone = classify_zone(&toy, &[x]).majority;
        let (lo, hi) = (toy.stereotype().min(toy.representative()), toy.stereotype().max(toy.representative()));
        let inside = x >= lo && x <= hi;
        prop_assert_eq!(zone == Zone::Adverse, inside);
    }

    #[test]
    fn minority_size_is_monotone(r in 1usize..500, a in 0.001..1.0f64, b in 0.001..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(minority_size(lo, r).unwrap_or(0) <= minority_size(hi, r).unwrap());
    }

    #[test]
    fn median_treats_missing_as_infinite(vals in prop::collection::vec(0.0..100.0f64, 1..9), missing in 0usize..9) {
        let mut all: Vec<Overcost> = vals.iter().map(|&v| Overcost::Value { value: v }).collect();
        all.extend(std::iter::repeat_n(Overcost::NotReached, missing));
        let m = median_overcost(&all);
        let n = all.len();
        let reached = vals.len();
        if 2 * reached > n + 1 || (n % 2 == 1 && 2 * reached > n) {
            let is_value = matches!(m, Overcost::Value { .. });
            prop_assert!(is_value);
        }
        if 2 * reached < n {
            prop_assert_eq!(m, Overcost::NotReached);
        }
    }

    #[test]
    fn dataset_csv_round_trips(seed in 0u64..10_000) {
        let q = generic_quadratic(seed, 5, 4, 0.0);
        let text = q.dataset().to_csv_string().unwrap();
        let back = GroupedDataset::from_csv_reader(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, q.dataset());
    }
}
