use proptest::prelude::*;

use bsl_core::bayes::grid_update;
use bsl_core::bounds::{BoundLedger, LedgerVariant};
use bsl_core::harness::FuzzTrial;
use bsl_core::metrics::{self, scaled_hellinger, scaled_tv, MetricKind};
use bsl_core::models::ProblemKind;
use bsl_core::reduction::ReductionTheorem;
use bsl_core::{discretize, DomainSpec, Distribution, Gaussian1D, LikelihoodModel, SystemSpec, TransitionModel};

fn domain() -> DomainSpec {
    DomainSpec::new(-16.0, 16.0, 321).unwrap()
}

fn grid(m: f64, v: f64) -> Distribution {
    discretize(&Gaussian1D::new(m, v).unwrap(), &domain()).unwrap().into()
}

fn metric() -> impl Strategy<Value = MetricKind> {
    prop_oneof![Just(MetricKind::Tv), Just(MetricKind::Hellinger), Just(MetricKind::W1)]
}

fn ledger_inputs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| (prop::collection::vec(0.0..5.0f64, n), prop::collection::vec(0.0..1.0f64, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ledger_follows_its_recursion((ks, eps) in ledger_inputs(), start in 1usize..4) {
        let l = BoundLedger::from_constants(MetricKind::Tv, LedgerVariant::Set1, &ks, &eps, start, 0.0).unwrap();
        prop_assert!(l.replay());
        let mut prev = 0.0;
        for r in &l.records {
            if r.k < start {
                prop_assert_eq!(r.cum_bound, 0.0);
            } else {
                prop_assert!(r.cum_bound >= r.eps);
                prop_assert!((r.cum_bound - (r.step_constant * prev + r.eps)).abs() <= 1e-12 * r.cum_bound.max(1.0));
            }
            prev = r.cum_bound;
        }
    }

    #[test]
    fn ledger_is_monotone_in_the_errors((ks, eps) in ledger_inputs(), bump in 0.0..1.0f64) {
        let a = BoundLedger::from_constants(MetricKind::Hellinger, LedgerVariant::Set2, &ks, &eps, 1, 0.0).unwrap();
        let more: Vec<f64> = eps.iter().map(|e| e + bump).collect();
        let b = BoundLedger::from_constants(MetricKind::Hellinger, LedgerVariant::Set2, &ks, &more, 1, 0.0).unwrap();
        for (x, y) in a.bounds().iter().zip(b.bounds()) {
            prop_assert!(*x <= y);
        }
    }

    #[test]
    fn distances_are_bounded_and_symmetric(m in metric(), a in -4.0..4.0f64, b in -4.0..4.0f64, va in 0.2..3.0f64, vb in 0.2..3.0f64) {
        let d = domain();
        let (p, q) = (grid(a, va), grid(b, vb));
        let x = metrics::distance(m, &p, &q, &d).unwrap().value;
        let y = metrics::distance(m, &q, &p, &d).unwrap().value;
        prop_assert!(x >= 0.0 && (x - y).abs() <= 1e-12);
        if m != MetricKind::W1 {
            prop_assert!(x <= 1.0 + 1e-12);
        } else {
            prop_assert!(x <= d.diameter());
        }
        prop_assert!(metrics::distance(m, &p, &p, &d).unwrap().value <= 1e-12);
    }

    #[test]
    fn scaled_distances_reduce_to_plain_ones_at_unit_mass(a in -4.0..4.0f64, b in -4.0..4.0f64, v in 0.2..3.0f64) {
        let d = domain();
        let (p, q) = (discretize(&Gaussian1D::new(a, v).unwrap(), &d).unwrap(), discretize(&Gaussian1D::new(b, v).unwrap(), &d).unwrap());
        let tv = metrics::distance(MetricKind::Tv, &p.clone().into(), &q.clone().into(), &d).unwrap().value;
        let h = metrics::distance(MetricKind::Hellinger, &p.clone().into(), &q.clone().into(), &d).unwrap().value;
        prop_assert!((scaled_tv(&p, &q).unwrap() - tv).abs() <= 1e-12);
        prop_assert!((scaled_hellinger(&p, &q).unwrap() - h).abs() <= 1e-12);
    }

    #[test]
    fn grid_posteriors_are_normalized(m in -3.0..3.0f64, v in 0.3..2.0f64, y in -3.0..3.0f64, se in any::<bool>()) {
        let h = LikelihoodModel::linear_gaussian(1.0, 0.5).unwrap();
        let s = if se {
            SystemSpec::state_estimation(TransitionModel::linear_gaussian(0.8, 0.3).unwrap(), h, domain(), vec![y]).unwrap()
        } else {
            SystemSpec::inverse(h, domain(), vec![y]).unwrap()
        };
        let up = grid_update(&s, 1, &grid(m, v)).unwrap();
        let Distribution::Grid(g) = up.posterior else { panic!("grid posterior expected") };
        prop_assert!((g.mass() - 1.0).abs() <= 1e-8);
        prop_assert!(up.evidence > 0.0);
    }

    #[test]
    fn reduction_verdict_ignores_prior_order(seed in any::<u64>(), t in prop_oneof![
        Just(ReductionTheorem::Tv), Just(ReductionTheorem::Hellinger), Just(ReductionTheorem::W1Ip), Just(ReductionTheorem::W1Dyn)
    ]) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let trial = FuzzTrial::draw(t, &mut rng);
        let swapped = FuzzTrial { p: trial.q, q: trial.p, ..trial };
        if let (Ok(a), Ok(b)) = (trial.check(t), swapped.check(t)) {
            prop_assert_eq!(a.guaranteed, b.guaranteed);
            prop_assert!((a.measured_prior_dist - b.measured_prior_dist).abs() <= 1e-12);
            prop_assert!((a.measured_post_dist - b.measured_post_dist).abs() <= 1e-12);
            if a.guaranteed {
                prop_assert!(a.measured_post_dist <= a.measured_prior_dist + 1e-8);
            }
        }
        prop_assert!(t != ReductionTheorem::W1Dyn || trial.kind == ProblemKind::Se);
    }
}
