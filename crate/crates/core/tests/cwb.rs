use cwbsim::agents::UserState;
use cwbsim::config::preset_cwbrs_vs_chrono;
use cwbsim::content::{Aspect, ContentItem, DetectorParams, DetectorRates, Polarity, Source};
use cwbsim::cwb::{
    aggregate_time, aggregate_users, cwb_total, feed_diversity_entropy, AspectWeight, CwbConfig, CwbInput, Event,
    TimeAggregation, DEFAULT_Q_INF,
};
use cwbsim::rng::stream;
use cwbsim::{run, Metric};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

proptest! {
    #[test]
    fn entropy_bounded_and_order_free(mut feed in proptest::collection::vec(-1.0f64..=1.0, 1..40), bins in 2usize..20, seed in any::<u64>()) {
        let h = feed_diversity_entropy(feed.iter().copied(), bins).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        feed.shuffle(&mut stream(seed, &[]));
        prop_assert_eq!(h, feed_diversity_entropy(feed.iter().copied(), bins).unwrap());
    }

    #[test]
    fn power_mean_bounded_and_monotone(
        vals in proptest::collection::vec(0.0f64..=1.0, 1..20),
        q1 in -20.0f64..20.0,
        q2 in -20.0f64..20.0,
    ) {
        let values: Vec<Option<f64>> = vals.iter().copied().map(Some).collect();
        let weights = vec![1.0; vals.len()];
        let (lo, hi) = (q1.min(q2), q1.max(q2));
        let a = aggregate_users(&values, &weights, lo, DEFAULT_Q_INF).unwrap();
        let b = aggregate_users(&values, &weights, hi, DEFAULT_Q_INF).unwrap();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= a && a <= max && min <= b && b <= max);
        prop_assert!(a <= b + 1e-12);
    }

    #[test]
    fn missing_values_are_skipped(vals in proptest::collection::vec(proptest::option::of(0.01f64..=1.0), 1..20), q in -5.0f64..5.0) {
        let present: Vec<Option<f64>> = vals.iter().copied().filter(Option::is_some).collect();
        let a = aggregate_users(&vals, &vec![1.0; vals.len()], q, DEFAULT_Q_INF);
        if present.is_empty() {
            prop_assert!(a.is_err());
        } else {
            let b = aggregate_users(&present, &vec![1.0; present.len()], q, DEFAULT_Q_INF).unwrap();
            prop_assert_eq!(a.unwrap(), b);
        }
    }

    #[test]
    fn time_aggregation_of_constant(c in 0.0f64..=1.0, len in 1usize..30, w in 1usize..40, alpha in 0.01f64..=1.0) {
        let series = vec![c; len];
        prop_assert_eq!(aggregate_time(&series, TimeAggregation::WindowedMean(w)).unwrap(), c);
        prop_assert!((aggregate_time(&series, TimeAggregation::Ema(alpha)).unwrap() - c).abs() < 1e-15);
    }
}

#[test]
fn noiseless_detection_matches_ground_truth() {
    let mut cfg = preset_cwbrs_vs_chrono();
    cfg.graph.n = 40;
    cfg.run.steps = 40;
    cfg.detectors = DetectorParams::noiseless();
    for arm in cfg.arms() {
        let detected = run(&cfg, &arm, 5).unwrap();
        let mut truth_cfg = cfg.clone();
        truth_cfg.cwb.use_detected = false;
        let truth = run(&truth_cfg, &arm, 5).unwrap();
        assert!(detected.bit_eq(&truth), "arm {}", arm.label);
        assert!(detected.records.iter().all(|r| r.get(Metric::CwbTotal).is_finite()));
    }
}

#[test]
fn debiasing_recovers_true_exposure() {
    let rates = DetectorRates::new(0.9, 0.1, 0.5).unwrap();
    let detectors = DetectorParams { toxicity: rates, ..DetectorParams::noiseless() };
    let aspect = Aspect::toxicity();
    let mut rng = stream(31, &[]);
    let prevalence = 0.3;
    let mut users = Vec::new();
    let mut id = 0u64;
    for u in 0..60 {
        let mut user = UserState::new(u, 0.0, 0.5, 10);
        let events = (0..300)
            .map(|_| {
                let tox = if rng.random::<f64>() < prevalence { 1.0 } else { 0.0 };
                let mut item = ContentItem::new(id, None, 0, 0.0, tox, Source::External);
                id += 1;
                item.run_detectors(&detectors, &mut rng);
                Event { scores: vec![item.perceived_score(&aspect, &detectors).unwrap()], weight: 1.0, opinion: 0.0 }
            })
            .collect();
        user.ce_window.push_step(0, events);
        users.push(user);
    }
    let base = CwbConfig {
        aspects: vec![AspectWeight { name: "toxicity".into(), polarity: Polarity::Harmful, weight: 1.0 }],
        diversity_weight: 0.0,
        connection_weight: 0.0,
        ..CwbConfig::default()
    };
    let input = CwbInput { step: 0, users: &users, contacts: &[], feeds: None, detectors: &detectors };
    let raw = cwb_total(&input, &base).unwrap().cwb_total;
    let debiased = cwb_total(&input, &CwbConfig { debias: vec!["toxicity".into()], ..base }).unwrap().cwb_total;
    let truth = 1.0 - prevalence;
    assert!((debiased - truth).abs() < 0.02, "debiased {debiased}");
    assert!((raw - truth).abs() > (debiased - truth).abs(), "raw {raw} debiased {debiased}");
}
