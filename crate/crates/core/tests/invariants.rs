mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swapcal::harness::io::{read_rows, write_rows, TranscriptRow};
use swapcal::metrics::{aggregate, mcal, smcal};
use swapcal::{
    solve_distribution, AgnosticLearner, Context, ExpertState, GridConfig, HypothesisClass,
    LabelLaw, PhiProfile, Property,
};

fn law() -> impl Strategy<Value = LabelLaw> {
    prop_oneof![
        (0.0..=1.0f64).prop_map(|mu| LabelLaw::Bernoulli { mu }),
        (1.0..6.0f64, 1.0..6.0f64).prop_map(|(a, b)| LabelLaw::Beta { a, b }),
        (0.0..=1.0f64).prop_map(|y| LabelLaw::PointMass { y }),
    ]
}

fn property() -> impl Strategy<Value = Property> {
    prop_oneof![
        Just(Property::mean()),
        (0.0..=1.0f64).prop_map(|q| Property::quantile(q, 1.0).unwrap()),
        (0.01..0.99f64).prop_map(|t| Property::expectile(t).unwrap()),
        (1u32..5).prop_map(|k| Property::raw_moment(k).unwrap()),
    ]
}

fn profile(max_bins: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -1.0..=1.0f64], 1..=max_bins)
}

proptest! {
    #[test]
    fn identification_is_bounded_and_signed(p in property(), law in law(), x in 0.0..=1.0f64, y in 0.0..=1.0f64) {
        let v = p.eval_identification(x, y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        // Quantiles are only identified under laws without atoms.
        let atomic = !matches!(law, LabelLaw::Beta { .. });
        prop_assume!(!(atomic && matches!(p.kind, swapcal::PropertyKind::Quantile { .. })));
        prop_assert!(p.marginal_identification(0.0, &law).unwrap() <= 1e-12);
        prop_assert!(p.marginal_identification(1.0, &law).unwrap() >= -1e-12);
    }

    #[test]
    fn expert_weights_stay_a_distribution(
        k in 1usize..12,
        horizon in 1u64..5000,
        gains in prop::collection::vec(prop::collection::vec(-1.0..=1.0f64, 12), 1..40),
    ) {
        let mut s = ExpertState::new(k, horizon).unwrap();
        for g in &gains {
            s.update(&g[..k]).unwrap();
            let w = s.weights();
            prop_assert!(w.iter().all(|v| *v >= 0.0 && v.is_finite()));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ogd_iterate_stays_in_ball(
        steps in prop::collection::vec((prop::collection::vec(-1.0..=1.0f64, 3), -1.0..=1.0f64), 1..60),
    ) {
        let mut l = AgnosticLearner::new(Arc::new(HypothesisClass::linear(3).unwrap()));
        for (x, kappa) in steps {
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            let x = Context::new(x.iter().map(|v| v / n).collect()).unwrap();
            let q = l.predict(&x).unwrap();
            prop_assert!((-1.0..=1.0).contains(&q));
            l.observe(&x, kappa).unwrap();
            let theta = l.theta().unwrap();
            prop_assert!(theta.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn hedging_holds_for_any_profile(
        values in profile(40),
        extra in 0u64..500,
        p in property(),
        law in (1.0..6.0f64, 1.0..6.0f64).prop_map(|(a, b)| LabelLaw::Beta { a, b }),
    ) {
        let bins = values.len();
        let grid = GridConfig::new(bins, bins as u64 + extra).unwrap();
        let phi = PhiProfile::new(values).unwrap();
        let d = solve_distribution(&phi, &grid).unwrap();
        let rho = match p.kind {
            swapcal::PropertyKind::Quantile { .. } => law.density_bound().unwrap(),
            _ => p.lipschitz_rho,
        };
        let h = d.expect(|x| phi.at(x, &grid) * p.marginal_identification(x, &law).unwrap());
        prop_assert!(h <= rho / grid.horizon() as f64 + 1e-9, "h = {h}");
    }

    #[test]
    fn swap_dominates_plain(seed in 0u64..10_000, rounds in 1usize..120, bins in 1usize..8, r in 1.0..4.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = common::random_transcript(&mut rng, rounds, bins, 3);
        for class in [HypothesisClass::group_indicators(4, 3, seed).unwrap(), HypothesisClass::linear(3).unwrap()] {
            let agg = aggregate(&t, &Property::mean(), &class).unwrap();
            let s = smcal(&agg, r).unwrap();
            let m = mcal(&agg, r).unwrap().value;
            prop_assert!(m >= 0.0 && s + 1e-9 * s.max(1.0) >= m, "smcal {s} < mcal {m}");
        }
    }

    #[test]
    fn transcript_rows_round_trip(
        rows in prop::collection::vec(
            (any::<u64>(), any::<f64>(), 1usize..100, any::<f64>(), any::<f64>(), any::<u64>(), any::<u64>(), any::<f64>()),
            0..30,
        ),
    ) {
        let rows: Vec<TranscriptRow> = rows
            .into_iter()
            .map(|(t, p_tilde, bin, p, y, support_lo, support_hi, prob_lo)| TranscriptRow {
                t, p_tilde, bin, p, y, support_lo, support_hi, prob_lo,
            })
            .filter(|r| [r.p_tilde, r.p, r.y, r.prob_lo].iter().all(|v| v.is_finite()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_rows(&path, &rows).unwrap();
        let back: Vec<TranscriptRow> = read_rows(&path).unwrap();
        prop_assert_eq!(back, rows);
    }
}
